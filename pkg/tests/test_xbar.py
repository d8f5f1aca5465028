import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neoheb import device as dv
from neoheb import xbar as xb
from neoheb.eprop import ProtocolError
from neoheb.thermal import ThermalParams


def params(**kw):
    base = dict(bits=None, eps=0.0)
    base.update(kw)
    return dv.DeviceParams(**base)


def array(W, p=None, w_max=1.0, **kw):
    return xb.new_crossbar(np.asarray(W, float), p or params(), w_max, seed=0, **kw)


def heat_step(arr, f, s):
    xb.spike_integration(arr, np.zeros(arr.shape[0]))
    xb.e_update_phase(arr, f, s)


# -- mapping -------------------------------------------------------------------

def test_map_zero_and_full_scale():
    p = params()
    gp, gn = xb.map_weight(0.0, p, 90.0)
    assert gp == gn == p.g_min
    gp, gn = xb.map_weight(1.0, p, 90.0)
    assert gp == p.g_max and gn == p.g_min


def test_map_overflow():
    with pytest.raises(dv.DeviceRangeError):
        xb.map_weight(1.5, params(), 90.0)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.integers(2, 10))
def test_round_trip_within_half_level(ws, bits):
    p = dv.DeviceParams(bits=bits)
    arr = xb.new_crossbar(np.array(ws)[None, :], p, 1.0, seed=0)
    bound = (p.g_max - p.g_min) / (2 ** bits - 1) / arr.w_to_g
    assert np.max(np.abs(xb.effective_weights(arr) - ws)) <= bound + 1e-12


# -- spike integration --------------------------------------------------------------

def test_zero_spikes_zero_current():
    arr = array(np.full((3, 2), 0.5))
    assert not xb.spike_integration(arr, np.zeros(3)).any()


def test_one_spike_reads_a_row():
    W = np.array([[0.1, -0.2], [0.3, 0.4]])
    arr = array(W)
    assert np.allclose(xb.spike_integration(arr, [0, 1]), W[1])


def test_read_uses_local_temperature():
    W = np.array([[0.5, -0.25]])
    arr = array(W, params(alpha=1e-3))
    arr.th_pos[:] = [20.0, 0.0]
    arr.th_neg[:] = [0.0, 40.0]
    out = xb.spike_integration(arr, [1.0])
    p = arr.params
    gp, gn = arr.dev_pos.g[0], arr.dev_neg.g[0]
    expect = (gp * (1 + 1e-3 * np.array([20.0, 0.0])) - gn * (1 + 1e-3 * np.array([0.0, 40.0]))) / arr.w_to_g
    assert np.allclose(out, expect, rtol=1e-14)
    assert not np.allclose(out, W)
    assert p.alpha == 1e-3


# -- e-update ---------------------------------------------------------------------------

def test_no_signal_means_pure_decay():
    arr = array(np.zeros((2, 2)), gamma=0.8)
    arr.th_pos[:] = 5.0
    arr.th_neg[:] = 2.0
    heat_step(arr, np.ones(2), np.zeros(2))
    assert np.allclose(arr.th_pos, 4.0) and np.allclose(arr.th_neg, 1.6)


def test_constant_drive_accumulates_linearly():
    th = ThermalParams(f_max=2.0, psi_max=4.0)
    arr = array(np.zeros((1, 1)), gamma=1.0, cal=1.5, thermal=th)
    U = 37
    for _ in range(U):
        heat_step(arr, [1.0], [2.0])
    assert arr.th_pos[0, 0] == pytest.approx(U * 1.5 * 0.5 * 0.5, rel=1e-13)
    assert arr.th_neg[0, 0] == 0.0


def test_negative_signal_routes_to_minus_plane():
    arr = array(np.zeros((1, 2)), gamma=0.5)
    arr.th_pos[:] = 4.0
    heat_step(arr, [1.0], [-0.5, 0.0])
    assert arr.th_pos[0, 0] == 2.0
    assert arr.th_neg[0, 0] > 0


def test_crosstalk_leaks_to_neighbours():
    arr = array(np.zeros((3, 3)), coupling=xb.nearest_neighbour_coupling(0.1, 0.05))
    xb.spike_integration(arr, np.zeros(3))
    inc = np.zeros((3, 3))
    inc[1, 1] = 10.0
    xb.e_update_increment(arr, inc, np.zeros((3, 3)))
    assert arr.th_pos[1, 1] == 10.0
    assert arr.th_pos[0, 1] == pytest.approx(1.0) and arr.th_pos[1, 2] == pytest.approx(1.0)
    assert arr.th_pos[0, 0] == pytest.approx(0.5)


def test_crosstalk_uses_pre_phase_rises():
    inc = np.arange(9.0).reshape(3, 3)
    table = xb.nearest_neighbour_coupling(0.2, 0.1)
    out = xb.crosstalk(inc, table)
    ref = np.zeros((3, 3))
    for (dr, dc), c in table.items():
        for i in range(3):
            for j in range(3):
                if 0 <= i + dr < 3 and 0 <= j + dc < 3:
                    ref[i + dr, j + dc] += c * inc[i, j]
    assert np.allclose(out, ref)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_fused_frame_equals_step_sequence(seed):
    rng = np.random.default_rng(seed)
    U, R, C = 12, 4, 3
    F = rng.random((U, R)) * 50
    S = rng.normal(0, 0.5, (U, C))
    kw = dict(gamma=0.9, coupling=xb.nearest_neighbour_coupling(0.1, 0.02))
    a = array(np.zeros((R, C)), **kw)
    b = array(np.zeros((R, C)), **kw)
    for t in range(U):
        heat_step(a, F[t], S[t])
    xb.accumulate_frame(b, F, S)
    assert np.allclose(a.th_pos, b.th_pos, rtol=1e-12, atol=1e-14)
    assert np.allclose(a.th_neg, b.th_neg, rtol=1e-12, atol=1e-14)


def test_cell_order_independent_without_crosstalk():
    rng = np.random.default_rng(1)
    F = rng.random((8, 5))
    S = rng.normal(size=(8, 4))
    perm_r, perm_c = rng.permutation(5), rng.permutation(4)
    a = array(np.zeros((5, 4)), gamma=0.7)
    b = array(np.zeros((5, 4)), gamma=0.7)
    xb.accumulate_frame(a, F, S)
    xb.accumulate_frame(b, F[:, perm_r], S[:, perm_c])
    assert np.array_equal(a.th_pos[np.ix_(perm_r, perm_c)], b.th_pos)


# -- weight update ------------------------------------------------------------------------

def test_no_heat_no_change():
    arr = array(np.full((2, 2), 0.3))
    heat_step(arr, np.zeros(2), np.zeros(2))
    assert not xb.weight_update_phase(arr).any()


def test_single_hot_cell_moves_alone():
    arr = array(np.zeros((2, 2)))
    xb.spike_integration(arr, np.zeros(2))
    inc = np.zeros((2, 2))
    inc[0, 1] = 20.0
    xb.e_update_increment(arr, inc, np.zeros((2, 2)))
    dw = xb.weight_update_phase(arr)
    assert dw[0, 1] > 0
    assert np.count_nonzero(dw) == 1
    assert not arr.th_pos.any() and not arr.th_neg.any()


def test_hotter_means_bigger_step():
    steps = []
    for rise in (5.0, 10.0, 40.0):
        arr = array(np.zeros((1, 1)))
        xb.spike_integration(arr, np.zeros(1))
        xb.e_update_increment(arr, np.full((1, 1), rise), np.zeros((1, 1)))
        steps.append(abs(xb.weight_update_phase(arr)[0, 0]))
    assert steps[0] < steps[1] < steps[2]


def test_reset_saturation_clears_weights():
    p = dv.DeviceParams(bits=6, kappa_reset=1.0)
    arr = xb.new_crossbar(np.full((2, 2), 0.7), p, 1.0, seed=0)
    for _ in range(50):
        arr.dev_pos = dv.apply_write(arr.dev_pos, dv.RESET, 500.0)
    bound = (p.g_max - p.g_min) / 63 / arr.w_to_g
    assert np.all(xb.effective_weights(arr) <= bound)


def test_rises_non_negative_and_reset():
    rng = np.random.default_rng(3)
    arr = array(np.zeros((3, 3)), gamma=0.95)
    for _ in range(20):
        heat_step(arr, rng.random(3), rng.normal(size=3))
        assert (arr.th_pos >= 0).all() and (arr.th_neg >= 0).all()
    xb.weight_update_phase(arr)
    assert not arr.th_pos.any() and not arr.th_neg.any()


def test_recentering_preserves_weights():
    arr = array(np.zeros((1, 2)), recenter_every=1)
    arr.dev_pos = dv.replace(arr.dev_pos, g=np.array([[40.0, 30.0]]))
    arr.dev_neg = dv.replace(arr.dev_neg, g=np.array([[25.0, 50.0]]))
    w = xb.stored_weights(arr)
    xb.recenter(arr)
    assert np.allclose(xb.stored_weights(arr), w)
    assert np.allclose(np.minimum(arr.dev_pos.g, arr.dev_neg.g), arr.params.g_min)


def test_weights_constant_across_phases():
    W = np.array([[0.2, -0.4]])
    arr = array(W)
    before = xb.effective_weights(arr)
    xb.spike_integration(arr, [1.0])
    assert np.array_equal(xb.effective_weights(arr), before)
    xb.e_update_phase(arr, [1.0], [0.3, -0.3])
    assert np.array_equal(xb.effective_weights(arr), before)


# -- protocol ---------------------------------------------------------------------------------

def test_phase_order_enforced():
    arr = array(np.zeros((1, 1)))
    with pytest.raises(ProtocolError):
        xb.e_update_phase(arr, [0.0], [0.0])
    with pytest.raises(ProtocolError):
        xb.weight_update_phase(arr)
    xb.spike_integration(arr, [0.0])
    with pytest.raises(ProtocolError):
        xb.spike_integration(arr, [0.0])
    with pytest.raises(ProtocolError):
        xb.weight_update_phase(arr)
    xb.e_update_phase(arr, [0.0], [0.0])
    xb.spike_integration(arr, [0.0])
    xb.e_update_phase(arr, [0.0], [0.0])
    xb.weight_update_phase(arr)
    with pytest.raises(ProtocolError):
        xb.weight_update_phase(arr)


# -- gain matching and files ------------------------------------------------------------------

def test_matched_linear_gain_reproduces_rate():
    eta, w_max, cal = 0.01, 0.5, 2.0
    p = params()
    k = xb.matched_write_gain(eta, p, w_max, cal, mode="linear")
    arr = array(np.zeros((1, 1)), dv.replace(p, kappa_lin=k), w_max=w_max, cal=cal,
                write_mode="linear", thermal=ThermalParams(f_max=1.0, psi_max=1.0))
    xb.spike_integration(arr, [0.0])
    xb.e_update_phase(arr, [0.4], [0.5])
    assert xb.weight_update_phase(arr)[0, 0] == pytest.approx(eta * 0.4 * 0.5, rel=1e-12)


def test_coupling_csv_keeps_measured_offsets(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("site,drow,dcol,distance_nm,coefficient\n"
                    "\"1,1\",0,0,0,0.45\n\"0,1\",-1,0,120,0.25\n\"1,2\",0,1,120,0.24\n"
                    "\"0,0\",-1,-1,170,0.2\n")
    table = xb.load_coupling_csv(path)
    assert (0, 0) not in table
    assert table[(-1, 0)] == 0.25 and table[(1, 0)] == 0.25
    assert table[(0, 1)] == 0.24 and table[(0, -1)] == 0.24
    assert table[(1, 1)] == 0.2 and len(table) == 8


def test_snapshot_export(tmp_path):
    arr = array(np.array([[0.1, -0.1]]))
    xb.export_snapshot(arr, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "row,col,g_pos,g_neg,rise_pos,rise_neg" and len(lines) == 3
