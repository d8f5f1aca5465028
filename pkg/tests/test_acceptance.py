"""End-to-end acceptance checks, one test per criterion.

Each test records a single ``PASS``/``FAIL`` line with the measured numbers;
the lines are printed together in the "acceptance criteria" section of the
terminal summary.  Run alone with::

    python3 -m pytest tests/test_acceptance.py -v -s
"""

import functools
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from conftest import ACCEPTANCE_LINES
from neoheb import device as dv
from neoheb import eprop as ep
from neoheb import fdm
from neoheb import thermal as th
from neoheb.tasks import maze as mz
from neoheb.tasks import sequence as sq

pytestmark = pytest.mark.acceptance


def report(num, name, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed < limit
    line = f"{'PASS' if ok else 'FAIL'} [{num:2d}] {name}: {detail} ({elapsed:.1f}s / {limit:.0f}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# -- 1 ------------------------------------------------------------------------------

def test_01_eprop_matches_unrolled_gradient():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    worst = 0.0
    p = ep.LifParams()
    for _ in range(100):
        n_in, H, K = (int(v) for v in rng.integers(1, 6, 3))
        U = int(rng.integers(5, 51))
        w_i = rng.normal(0, 0.8, (n_in, H))
        w_o = rng.normal(0, 1.0, (H, K))
        X = (rng.random((U, n_in)) < 0.5).astype(float)
        Y = np.eye(K)[rng.integers(0, K, U)]
        net = ep.EpropNet(w_i.copy(), np.zeros((H, H)), w_o.copy(), params=p)
        e_in, _ = ep.run_frame(net, X, Y).eligibility()
        oracle = ep.oracle_gradient(w_i, w_o, X, Y, p, error_mode=net.error_mode)
        scale = max(np.max(np.abs(oracle)), 1e-300)
        worst = max(worst, np.max(np.abs(e_in - oracle)) / scale)
    report(1, "e-prop vs unrolled gradient", worst <= 1e-6,
           f"max rel dev {worst:.2e} over 100 instances", time.perf_counter() - t0, 10)


# -- 2 ------------------------------------------------------------------------------

def test_02_ideal_limit_crossbar():
    t0 = time.perf_counter()
    cfg = sq.SeqTaskConfig(samples_per_class=2)
    ds = sq.generate_sequence_dataset(cfg)
    dev = dv.DeviceParams(bits=None, alpha=0.0, D_v=0.0, C_v=0.0)
    hw = sq.HardwareConfig(device=dev, gamma=1.0, write_mode="linear", psi_margin=10.0)
    ideal = sq.SeqTrainer(cfg, "ideal", seed=1)
    hard = sq.SeqTrainer(cfg, "hardware", hw, seed=1)
    start = [w.copy() for w in ideal.weights()]
    eye = np.eye(ds.n_classes)
    worst = 0.0
    for s in range(10):
        X, Y = ds.spikes[s].astype(float), eye[ds.labels[s]]
        ideal.train_sample(X, Y)
        hard.train_sample(X, Y)
        pairs = list(zip(ideal.weights(), hard.weights())) + [(ideal.net.w_o, hard.net.w_o)]
        for wa, wb in pairs:
            worst = max(worst, np.max(np.abs(wa - wb)) / np.max(np.abs(wa)))
    moved = max(np.max(np.abs(w - w0)) for w, w0 in zip(ideal.weights(), start))
    report(2, "ideal-limit crossbar", worst <= 1e-6 and moved > 0,
           f"max rel dev {worst:.2e} over 10 frames (weights moved {moved:.2e})",
           time.perf_counter() - t0, 30)


# -- 3, 4 ---------------------------------------------------------------------------

def maze_episodes(n, gamma, variability=None, seeds=20):
    cfg = mz.MazeConfig(n=n, gamma=gamma)
    hw = mz.HardwareMaze(variability=variability)
    return np.array([mz.run_training(cfg, "hardware", seed=s, hw=hw, layout_seed=s).episodes_to_benchmark
                     for s in range(seeds)])


def test_03_maze_gamma_trend():
    t0 = time.perf_counter()
    ok = True
    parts = []
    for n in (5, 7):
        eps = {g: maze_episodes(n, g) for g in (0.0, 0.25, 0.5, 0.75, 1.0)}
        best = min((0.25, 0.5, 0.75), key=lambda g: eps[g].mean())
        p0 = mannwhitneyu(eps[best], eps[0.0], alternative="less").pvalue
        p1 = mannwhitneyu(eps[best], eps[1.0], alternative="less").pvalue
        m = {g: eps[g].mean() for g in eps}
        ok &= m[best] < m[0.0] and m[best] < m[1.0] and p0 < 0.05 and p1 < 0.05
        means = "/".join(f"{m[g]:.1f}" for g in sorted(m))
        parts.append(f"{n}x{n} means {means} best={best} p0={p0:.3f} p1={p1:.3f}")
    report(3, "maze retention trend", ok, "; ".join(parts), time.perf_counter() - t0, 300)


def test_04_maze_variability_trend():
    t0 = time.perf_counter()
    eps = {v: maze_episodes(5, 0.75, variability=v) for v in (0.0, 0.5, 1.0)}
    m = [eps[v].mean() for v in (0.0, 0.5, 1.0)]
    p = mannwhitneyu(eps[0.0], eps[1.0], alternative="less").pvalue
    ok = m[0] <= m[1] <= m[2] and p < 0.05
    report(4, "maze variability trend", ok,
           f"means {m[0]:.1f}/{m[1]:.1f}/{m[2]:.1f} p={p:.3f}", time.perf_counter() - t0, 300)


# -- 5, 6, 7 ------------------------------------------------------------------------

SEQ = sq.SeqTaskConfig()


@functools.lru_cache(maxsize=None)
def _dataset():
    return sq.generate_sequence_dataset(SEQ)


@functools.lru_cache(maxsize=None)
def seq_accuracy(bits=8, gamma=1.0, crosstalk=0.0):
    """Mean final test accuracy (points) over 20 seeds; cached across criteria."""
    hw = sq.HardwareConfig(device=dv.DeviceParams(bits=bits), gamma=gamma, crosstalk=crosstalk)
    acc = [sq.run_sequence(SEQ, "hardware", hw, seed=s, dataset=_dataset()).final_test
           for s in range(20)]
    return 100.0 * float(np.mean(acc))


def test_05_quantization():
    t0 = time.perf_counter()
    acc = {b: seq_accuracy(bits=b) for b in (None, 8, 6, 4)}
    ok = acc[None] - acc[8] <= 3.0 and acc[8] >= acc[6] >= acc[4]
    report(5, "quantization", ok,
           "float/8/6/4 bits " + "/".join(f"{acc[b]:.2f}" for b in (None, 8, 6, 4)),
           time.perf_counter() - t0, 600)


def test_06_decay_saturation():
    t0 = time.perf_counter()
    lams = (0.5, 0.9, 0.99, 0.999, 1.0)
    acc = [seq_accuracy(gamma=g) for g in lams]
    # non-decreasing up to the plateau: every step either rises or sits
    # within the plateau band of the final value
    ok = all(b >= a or abs(b - acc[-1]) <= 1.0 for a, b in zip(acc, acc[1:]))
    ok &= abs(acc[3] - acc[4]) <= 1.0
    report(6, "decay saturation", ok, "lambda sweep " + "/".join(f"{a:.2f}" for a in acc),
           time.perf_counter() - t0, 600)


def test_07_crosstalk():
    t0 = time.perf_counter()
    clean, leaky = seq_accuracy(crosstalk=0.0), seq_accuracy(crosstalk=0.1)
    report(7, "crosstalk robustness", clean - leaky <= 5.0,
           f"0.0 -> {clean:.2f}, 0.1 -> {leaky:.2f}", time.perf_counter() - t0, 600)


# -- 8, 9 ---------------------------------------------------------------------------

def test_08_device_law():
    t0 = time.perf_counter()
    p = dv.DeviceParams()
    g = np.linspace(p.g_min + 0.5, p.g_max - 0.5, 50)[:, None]
    T = np.linspace(p.t_amb + 1.0, p.t_amb + 200.0, 50)[None, :]
    s = np.abs(dv.delta_g_phenomenological(g, T, dv.SET, p.nominal(dv.SET), p))
    r = np.abs(dv.delta_g_phenomenological(g, T, dv.RESET, p.nominal(dv.RESET), p))
    trends = (np.all(np.diff(s, axis=0) < 0) and np.all(np.diff(r, axis=0) > 0)
              and np.all(np.diff(s, axis=1) > 0) and np.all(np.diff(r, axis=1) > 0))
    pts = [
        (float(dv.fitted_ratio(0.0, 1.0, p.nominal(dv.SET))), 0.143),
        (float(dv.fitted_ratio(0.5, 1.2, p.nominal(dv.SET))),
         0.143 * np.exp(2.216 * 0.5) * 1.2 ** (0.8232 * np.exp(0.4043 * 0.5))),
        (-float(dv.fitted_ratio(0.0, 1.0, p.nominal(dv.RESET))), -0.3124),
    ]
    dev = max(abs(a - b) for a, b in pts)
    report(8, "device law", trends and dev <= 1e-10,
           f"50x50 trends {'hold' if trends else 'broken'}, fitted point dev {dev:.1e}",
           time.perf_counter() - t0, 1)


def test_09_thermal_node():
    t0 = time.perf_counter()
    P = th.ThermalParams()
    P_H = 2e-5
    s = th.ThermalState()
    for _ in range(int(round(10 * P.tau_TH / P.t_PW))):
        s = th.step_temperature(s, P_H, P)
    fp = abs(s.T0 / (P_H * P.R_TH) - 1)
    f = np.linspace(0, 1 - 1e-6, 100)[:, None]
    psi = np.linspace(0, 1, 100)[None, :]
    full = th.heater_power(f, psi, P)
    closed = P.v_scale ** 2 / P.R * f * psi
    chain = np.max(np.abs(full - closed)) / np.max(closed)
    report(9, "thermal node", fp <= 1e-3 and chain <= 1e-12,
           f"fixed point dev {fp:.1e}, chain dev {chain:.1e}", time.perf_counter() - t0, 1)


# -- 10 -----------------------------------------------------------------------------

def test_10_fdm_suite():
    t0 = time.perf_counter()
    checks = {}
    # analytic slab between two plates
    oxide = fdm.DEFAULT_MATERIALS[fdm.SWITCHING_OXIDE]
    slab = fdm.uniform_grid((32, 4, 4), 10.0, oxide)
    yx = np.indices((4, 4)).reshape(2, -1)
    top = np.ravel_multi_index((np.full(16, 31), *yx), slab.dims)
    bot = np.ravel_multi_index((np.zeros(16, int), *yx), slab.dims)
    prof = fdm.solve_potential(slab, [(top, 1.0), (bot, 0.0)]).V[:, 0, 0]
    checks["slab"] = np.max(np.abs(prof - np.arange(32) / 31))

    base = fdm.build_geometry(fdm.GeometrySpec(K=120))
    assert min(base.dims) >= 32
    site = (1, 1)
    sol = fdm.solve_potential(base, fdm.site_drive(base, site, 0.5),
                              sigma=fdm.selected_sigma(base, site))
    u = fdm.steady_state(base, sol.joule).ravel()
    checks["power"] = abs(fdm.sink_conductance(base) @ u / sol.power - 1)

    st = fdm.HeatStepper(base, 2e-9, sink=False)
    u = np.random.default_rng(0).random(base.n) * 50
    e0 = st.energy(u)
    for _ in range(1000):
        u = st.step(u)
    checks["energy"] = abs(st.energy(u) - e0) / e0

    def split(res):
        c = res.coefficients
        return c[site], max(v for k, v in c.items() if k != site)

    s120, x120 = split(fdm.coupling_coefficients(base))
    s180, x180 = split(fdm.coupling_coefficients(fdm.build_geometry(fdm.GeometrySpec(K=180))))
    sm, xm = split(fdm.coupling_coefficients(fdm.build_geometry(fdm.GeometrySpec(K=120, variant="modified"))))
    ok = (checks["slab"] <= 0.01 and checks["power"] <= 0.01 and checks["energy"] <= 1e-4
          and s120 > x120 and s180 > x180 and sm > xm and x180 <= x120 and sm > s120 and xm < x120)
    detail = (f"slab {checks['slab']:.1e}, power {checks['power']:.1e}, drift {checks['energy']:.1e}; "
              f"self/cross K120 {s120:.3f}/{x120:.3f}, K180 {s180:.3f}/{x180:.3f}, "
              f"modified K120 {sm:.3f}/{xm:.3f}")
    report(10, "FDM suite", ok, detail, time.perf_counter() - t0, 300)


# -- 11 -----------------------------------------------------------------------------

CLI_RUNS = [
    ["train-maze", "--set", "experiment.runs_per_cell=3", "--set", "maze.n=4"],
    ["train-seq", "--set", "experiment.runs_per_cell=1", "--set", "seq.n_hidden=30",
     "--set", "seq.samples_per_class=4", "--set", "seq.frames=40", "--set", "seq.epochs=1"],
    ["sweep", "--set", "experiment.runs_per_cell=2", "--set", "maze.n=3",
     "--set", "sweep.gamma=0,0.5,1"],
    ["cellsim", "--set", "cellsim.F=40", "--set", "cellsim.K=80", "--set", "cellsim.voxel=10",
     "--set", "cellsim.width=2e-8", "--set", "cellsim.relax=2e-8"],
    ["print-defaults"],
]


def test_11_cli_determinism(tmp_path):
    t0 = time.perf_counter()
    same = []
    for i, argv in enumerate(CLI_RUNS):
        outs = []
        for k in range(2):
            out = tmp_path / f"{i}_{k}.csv"
            cmd = [sys.executable, "-m", "neoheb.cli", *argv, "--out", str(out)]
            if argv[0] != "print-defaults":
                cmd += ["--seed", "7", "--format", "csv"]
            subprocess.run(cmd, check=True, capture_output=True)
            outs.append(out.read_bytes())
        same.append(outs[0] == outs[1] and len(outs[0]) > 0)
    report(11, "CLI determinism", all(same),
           ", ".join(f"{a[0]} {'same' if s else 'DIFFERENT'}" for a, s in zip(CLI_RUNS, same)),
           time.perf_counter() - t0, 60)
