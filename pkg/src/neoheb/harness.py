"""Experiment configuration, seeded sweeps and report writing.

Config files are INI (``configparser``) with these sections::

    [experiment]  task = maze|seq, synapse_mode = ideal|hardware,
                  runs_per_cell, seed, paired_seeds, layout = per_run|fixed
    [maze]        MazeConfig fields
    [seq]         SeqTaskConfig fields
    [device]      DeviceParams fields
    [hardware]    HardwareMaze (maze) or HardwareConfig (seq) scalar fields,
                  plus t_step (s) used by the tau_TH axis
    [sweep]       axis = v1, v2, ...   (one line per axis; grid = product)
    [cellsim]     coupling-coefficient run of the voxel model

Sweep axes are either ``section.key`` or one of the aliases in ``AXES``.
Values are parsed as int, float, bool (true/false) or ``none``.
"""

from __future__ import annotations

import configparser
import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import device as dv
from .rng import derive_seed
from .tasks import maze as mz
from .tasks import sequence as sq
from .thermal import decay_factor


class ConfigError(ValueError):
    pass


TASKS = ("maze", "seq")
MODES = ("ideal", "hardware")

# alias -> {task: (section, key)}
AXES = {
    "gamma": {"maze": ("maze", "gamma"), "seq": ("hardware", "gamma")},
    "lambda": {"maze": ("maze", "gamma"), "seq": ("hardware", "gamma")},
    "bits": {"maze": ("device", "bits"), "seq": ("device", "bits")},
    "alpha": {"maze": ("device", "alpha"), "seq": ("device", "alpha")},
    "D_v": {"maze": ("device", "D_v"), "seq": ("device", "D_v")},
    "C_v": {"maze": ("device", "C_v"), "seq": ("device", "C_v")},
    "variability": {"maze": ("hardware", "variability"), "seq": ("hardware", "variability")},
    "crosstalk": {"seq": ("hardware", "crosstalk")},
    "crosstalk_diag": {"seq": ("hardware", "crosstalk_diag")},
    "coupling_csv": {"seq": ("hardware", "coupling_csv")},
    "tau_TH": {"maze": ("hardware", "tau_TH"), "seq": ("hardware", "tau_TH")},
}

SECTIONS = ("experiment", "maze", "seq", "device", "hardware", "sweep", "cellsim")


def parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("none", "null", ""):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return json.dumps(v)
    return str(v)


def fmt6(x) -> str:
    """Fixed 6-significant-digit rendering used in every CSV."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)


@dataclass
class ExperimentConfig:
    task: str = "maze"
    synapse_mode: str = "ideal"
    runs_per_cell: int = 20
    seed: int = 0
    paired_seeds: bool = False
    layout: str = "per_run"
    maze: dict = field(default_factory=dict)
    seq: dict = field(default_factory=dict)
    device: dict = field(default_factory=dict)
    hardware: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)   # [(axis, [values])]
    cellsim: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.synapse_mode not in MODES:
            raise ConfigError(f"synapse_mode must be one of {MODES}")
        if int(self.runs_per_cell) < 1:
            raise ConfigError("runs_per_cell must be >= 1")
        if self.layout not in ("per_run", "fixed"):
            raise ConfigError("layout must be 'per_run' or 'fixed'")

    # -- cells --------------------------------------------------------------------

    def axis_target(self, axis):
        if "." in axis:
            sec, key = axis.split(".", 1)
            if sec not in ("maze", "seq", "device", "hardware"):
                raise ConfigError(f"unknown sweep section in {axis!r}")
            return sec, key
        if axis not in AXES or self.task not in AXES[axis]:
            raise ConfigError(f"sweep axis {axis!r} is not defined for task {self.task!r}")
        return AXES[axis][self.task]

    def cells(self):
        """Sweep grid in deterministic order: list of ``((axis, value), ...)``."""
        if not self.sweep:
            return [()]
        names = [a for a, _ in self.sweep]
        return [tuple(zip(names, combo)) for combo in itertools.product(*[v for _, v in self.sweep])]

    def cell_blocks(self, cell):
        blocks = {s: dict(getattr(self, s)) for s in ("maze", "seq", "device", "hardware")}
        for axis, value in cell:
            sec, key = self.axis_target(axis)
            blocks[sec][key] = value
        return blocks

    # -- serialization --------------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {k: format_value(getattr(self, k)) for k in
                            ("task", "synapse_mode", "runs_per_cell", "seed", "paired_seeds", "layout")}
        for sec in ("maze", "seq", "device", "hardware", "cellsim"):
            cp[sec] = {k: format_value(v) for k, v in getattr(self, sec).items()}
        cp["sweep"] = {a: ", ".join(format_value(v) for v in vals) for a, vals in self.sweep}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def to_dict(self):
        d = asdict(self)
        d["sweep"] = [[a, list(v)] for a, v in self.sweep]
        return d


def _coerce_seed(v):
    try:
        seed = int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an unsigned integer, got {v!r}") from None
    if seed < 0 or seed >= 2 ** 64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    return seed


def parse_config(text: str, overrides=(), check=True) -> ExperimentConfig:
    """Parse INI text; ``overrides`` are ``section.key=value`` strings.

    ``check=False`` skips building the task objects (used by ``cellsim``,
    whose sweep axes are geometry keys)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override {ov!r} must look like section.key=value")
        lhs, val = ov.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp[sec][key] = val
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}")
    exp = {k: parse_value(v) for k, v in cp["experiment"].items()} if cp.has_section("experiment") else {}
    allowed = {"task", "synapse_mode", "runs_per_cell", "seed", "paired_seeds", "layout"}
    bad = set(exp) - allowed
    if bad:
        raise ConfigError(f"unknown [experiment] keys: {sorted(bad)}")
    if "seed" in exp:
        exp["seed"] = _coerce_seed(exp["seed"])
    blocks = {}
    for sec in ("maze", "seq", "device", "hardware", "cellsim"):
        blocks[sec] = {k: parse_value(v) for k, v in cp[sec].items()} if cp.has_section(sec) else {}
    sweep = []
    if cp.has_section("sweep"):
        for axis, raw in cp["sweep"].items():
            vals = [parse_value(v) for v in raw.split(",") if v.strip()]
            if not vals:
                raise ConfigError(f"sweep axis {axis!r} has no values")
            sweep.append((axis, vals))
    try:
        cfg = ExperimentConfig(**exp, **blocks, sweep=sweep)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if check:
        validate(cfg)
    return cfg


def load_config(path, overrides=(), check=True) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides, check)


# -- building task objects ------------------------------------------------------------

def _build(cls, values: dict, what):
    names = {f.name for f in fields(cls)}
    bad = set(values) - names
    if bad:
        raise ConfigError(f"unknown {what} keys: {sorted(bad)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from None


def _hardware_values(blocks):
    hw = dict(blocks["hardware"])
    t_step = hw.pop("t_step", 1e-8)
    tau = hw.pop("tau_TH", None)
    if tau is not None:
        if tau <= 0:
            raise ConfigError("tau_TH must be positive")
        hw["gamma"] = decay_factor(t_step, tau)
    return hw


def build_cell(cfg: ExperimentConfig, cell):
    """Task objects for one sweep cell; raises ConfigError on bad values."""
    blocks = cfg.cell_blocks(cell)
    base = asdict(mz.HardwareMaze().device) if cfg.task == "maze" else {}
    device = _build(dv.DeviceParams, {**base, **blocks["device"]}, "[device]")
    hw = _hardware_values(blocks)
    if cfg.task == "maze":
        m = blocks["maze"]
        if "gamma" in hw:
            m = {**m, "gamma": hw.pop("gamma")}
        task = _build(mz.MazeConfig, m, "[maze]")
        hwo = _build(mz.HardwareMaze, {**hw, "device": device}, "[hardware]")
        return task, hwo
    seq = _build(sq.SeqTaskConfig, blocks["seq"], "[seq]")
    path = hw.pop("coupling_csv", None)
    if path:
        from .xbar import load_coupling_csv
        try:
            hw["coupling"] = load_coupling_csv(path)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"coupling_csv {path!r}: {exc}") from None
    variability = hw.pop("variability", None)
    if variability is not None:
        device = replace(device, D_v=variability, C_v=variability)
    if not 0.0 <= hw.get("gamma", 1.0) <= 1.0:
        raise ConfigError("hardware.gamma must lie in [0, 1]")
    hwo = _build(sq.HardwareConfig, {**hw, "device": device}, "[hardware]")
    return seq, hwo


def validate(cfg: ExperimentConfig):
    """Build every cell once so that bad combinations fail before any run."""
    for axis, _ in cfg.sweep:
        cfg.axis_target(axis)
    for cell in cfg.cells():
        build_cell(cfg, cell)


# -- running ------------------------------------------------------------------------------

@dataclass
class RunRecord:
    cell: list            # [[axis, value], ...]
    cell_index: int
    run_index: int
    seed: int
    metrics: dict
    wall_time: float = 0.0
    error: str | None = None


def run_seed(cfg: ExperimentConfig, cell_index, run_index) -> int:
    if cfg.paired_seeds:
        return derive_seed(cfg.seed, "run", run_index)
    return derive_seed(cfg.seed, "run", cell_index, run_index)


def _execute(args):
    cfg, ci, cell, ri = args
    seed = run_seed(cfg, ci, ri)
    t0 = time.perf_counter()
    try:
        task, hw = build_cell(cfg, cell)
        if cfg.task == "maze":
            lay = derive_seed(cfg.seed, "layout") if cfg.layout == "fixed" else derive_seed(cfg.seed, "layout", ri)
            rec = mz.run_training(task, cfg.synapse_mode, seed=seed, hw=hw, layout_seed=lay)
            metrics = {"episodes_to_benchmark": rec.episodes_to_benchmark, "success": rec.success}
        else:
            res = sq.run_sequence(task, cfg.synapse_mode, hw, seed=seed)
            metrics = {"train_acc": list(res.train_acc), "test_acc": list(res.test_acc)}
        err = None
    except Exception as exc:  # one failed run must not abort the sweep
        metrics, err = {}, f"{type(exc).__name__}: {exc}"
    return RunRecord(cell=[list(c) for c in cell], cell_index=ci, run_index=ri, seed=seed,
                     metrics=metrics, wall_time=time.perf_counter() - t0, error=err)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, progress=None) -> list:
    """All sweep cells x runs, returned in (cell, run) order."""
    validate(cfg)
    jobs = [(cfg, ci, cell, ri) for ci, cell in enumerate(cfg.cells())
            for ri in range(cfg.runs_per_cell)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_execute, jobs))
    else:
        records = []
        for job in jobs:
            records.append(_execute(job))
            if progress:
                progress(records[-1])
    records.sort(key=lambda r: (r.cell_index, r.run_index))
    return records


def _scalar_metrics(rec: RunRecord):
    out = {}
    for k, v in rec.metrics.items():
        if isinstance(v, list):
            out[k] = float(v[-1]) if v else float("nan")
        else:
            out[k] = float(v)
    return out


def aggregate(records):
    """One row per cell: coordinates, n, n_failed and mean/std of every metric."""
    by_cell = {}
    for r in records:
        by_cell.setdefault(r.cell_index, []).append(r)
    rows = []
    for ci in sorted(by_cell):
        recs = by_cell[ci]
        ok = [r for r in recs if r.error is None]
        row = {"cell_index": ci, "cell": recs[0].cell, "n": len(ok), "n_failed": len(recs) - len(ok)}
        names = sorted({k for r in ok for k in r.metrics})
        for name in names:
            vals = np.array([_scalar_metrics(r)[name] for r in ok])
            row[f"{name}_mean"] = float(vals.mean())
            row[f"{name}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows


def emit_report(records, fmt: str, path, cfg: ExperimentConfig | None = None):
    """Aggregate CSV (6 significant digits) or JSON with records and config."""
    if not records:
        raise ValueError("no records to report")
    rows = aggregate(records)
    if fmt == "csv":
        text = report_csv(rows)
    elif fmt == "json":
        text = json.dumps({"config": cfg.to_dict() if cfg else None,
                           "records": [asdict(r) for r in records],
                           "aggregates": rows}, indent=2, sort_keys=True) + "\n"
    else:
        raise ValueError("format must be 'csv' or 'json'")
    if path in (None, "-"):
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def report_csv(rows) -> str:
    axes = [a for a, _ in rows[0]["cell"]] if rows else []
    metric_cols = sorted({k for r in rows for k in r if k.endswith(("_mean", "_std"))})
    header = ["cell_index"] + axes + ["n", "n_failed"] + metric_cols
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        coords = [fmt6(v) for _, v in r["cell"]]
        w.writerow([r["cell_index"]] + coords + [r["n"], r["n_failed"]]
                   + [fmt6(r.get(c, float("nan"))) for c in metric_cols])
    return buf.getvalue()


def load_report_json(path):
    with open(path) as fh:
        data = json.load(fh)
    return [RunRecord(**r) for r in data["records"]]


def default_config(task="maze") -> ExperimentConfig:
    """Every tunable with its default value."""
    # n-dependent maze defaults stay "none" so that changing n rescales them
    maze = {f.name: f.default for f in fields(mz.MazeConfig)
            if f.name not in ("cheese_pos", "trap_positions")}
    seq = asdict(sq.SeqTaskConfig())
    device = asdict(mz.HardwareMaze().device if task == "maze" else dv.DeviceParams())
    hw_seq = {k: v for k, v in asdict(sq.HardwareConfig()).items() if k not in ("device", "coupling")}
    hw_maze = {k: v for k, v in asdict(mz.HardwareMaze()).items() if k != "device"}
    hw = hw_maze if task == "maze" else hw_seq
    hw["t_step"] = 1e-8
    return ExperimentConfig(task=task, maze=maze, seq=seq, device=device, hardware=hw,
                            cellsim=dict(DEFAULT_CELLSIM))


DEFAULT_CELLSIM = {"variant": "baseline", "F": 60.0, "K": 120.0, "voxel": None, "rows": 3,
                   "cols": 3, "volts": 0.5, "width": 60e-9, "relax": 60e-9, "dt": 2e-9,
                   "heated_row": None, "heated_col": None}


CELLSIM_AXES = ("F", "K", "variant", "voxel", "volts", "width")


def cellsim_cells(cfg: ExperimentConfig):
    """Geometry cells for ``cellsim``; only geometry and pulse keys may be swept."""
    for axis, _ in cfg.sweep:
        key = axis.split(".", 1)[1] if axis.startswith("cellsim.") else axis
        if key not in CELLSIM_AXES:
            raise ConfigError(f"cellsim cannot sweep {axis!r}; allowed: {CELLSIM_AXES}")
    out = []
    for cell in cfg.cells():
        vals = dict(cfg.cellsim)
        for axis, v in cell:
            vals[axis.split(".", 1)[-1]] = v
        out.append((cell, vals))
    return out


def cellsim_csv(results) -> str:
    """Rows ``[(cell, CouplingResult, spec)]`` -> coupling CSV text."""
    axes = [a for a, _ in results[0][0]] if results else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(axes + ["site", "drow", "dcol", "distance_nm", "coefficient"])
    for cell, res, spec in results:
        coords = [fmt6(v) for _, v in cell]
        for site, dr, dc, dist, c in res.rows(spec.K):
            w.writerow(coords + [site, dr, dc, fmt6(dist), fmt6(c)])
    return buf.getvalue()


def run_cellsim(values: dict, dump=None):
    """Coupling coefficients for the ``[cellsim]`` block; returns (result, spec)."""
    from . import fdm
    v = {**DEFAULT_CELLSIM, **values}
    bad = set(v) - set(DEFAULT_CELLSIM)
    if bad:
        raise ConfigError(f"unknown [cellsim] keys: {sorted(bad)}")
    try:
        spec = fdm.GeometrySpec(F=v["F"], K=v["K"], variant=v["variant"], voxel=v["voxel"],
                                rows=v["rows"], cols=v["cols"])
        grid = fdm.build_geometry(spec)
    except ValueError as exc:
        raise ConfigError(f"invalid [cellsim]: {exc}") from None
    heated = None
    if v["heated_row"] is not None:
        heated = (int(v["heated_row"]), int(v["heated_col"]))
    pulse = fdm.Pulse(volts=v["volts"], width=v["width"], relax=v["relax"], dt=v["dt"])
    res = fdm.coupling_coefficients(grid, heated, pulse=pulse)
    if dump:
        fdm.dump_fields(grid, dump)
    return res, spec
