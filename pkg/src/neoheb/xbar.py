"""Differential 1T-1H-1M crossbar: G+/G- device planes, one thermal node per
device, and the spike-integration / e-update / weight-update protocol.

Rows are pre-synaptic neurons, columns post-synaptic neurons.  The signal
handed to :func:`e_update_phase` is the desired *update direction*: positive
entries heat the G+ plane, negative entries the G- plane.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import device as dv
from .eprop import ProtocolError
from .thermal import ThermalParams, normalize_signals

SPIKE_INTEGRATION = "spike_integration"
E_UPDATE = "e_update"
WEIGHT_UPDATE = "weight_update"


@dataclass
class CrossbarArray:
    dev_pos: dv.DeviceState
    dev_neg: dv.DeviceState
    th_pos: np.ndarray
    th_neg: np.ndarray
    w_to_g: float
    gamma: float = 1.0
    cal: float = 1.0
    coupling: dict = field(default_factory=dict)
    write_mode: str = "phenomenological"
    thermal: ThermalParams = field(default_factory=ThermalParams)
    recenter_every: int = 0
    frames: int = 0
    last_phase: str | None = None

    @property
    def shape(self):
        return self.dev_pos.g.shape

    @property
    def params(self) -> dv.DeviceParams:
        return self.dev_pos.params

    @property
    def phase(self):
        """Phase that may run next."""
        if self.last_phase == SPIKE_INTEGRATION:
            return E_UPDATE
        if self.last_phase == E_UPDATE:
            return f"{SPIKE_INTEGRATION}|{WEIGHT_UPDATE}"
        return SPIKE_INTEGRATION


def map_weight(w, params: dv.DeviceParams, w_to_g: float):
    """Signed weight to a (G+, G-) pair with the idle device at g_min."""
    w = np.asarray(w, dtype=float)
    span = params.g_max - params.g_min
    if np.any(np.abs(w) * w_to_g > span * (1 + 1e-12)):
        raise dv.DeviceRangeError("weight magnitude exceeds the conductance range")
    g_pos = np.minimum(params.g_min + np.maximum(w, 0.0) * w_to_g, params.g_max)
    g_neg = np.minimum(params.g_min + np.maximum(-w, 0.0) * w_to_g, params.g_max)
    return g_pos, g_neg


def new_crossbar(W, params: dv.DeviceParams, w_max: float, rng=None, seed=None,
                 clip=False, **kwargs) -> CrossbarArray:
    """Program ``W`` into a fresh array; ``w_max`` maps onto the full range."""
    W = np.asarray(W, dtype=float)
    w_to_g = (params.g_max - params.g_min) / w_max
    if clip:
        W = np.clip(W, -w_max, w_max)
    g_pos, g_neg = map_weight(W, params, w_to_g)
    if rng is None:
        rng = np.random.Generator(np.random.Philox(seed))
    dev_pos = dv.new_device(params, g_pos, rng=rng)
    dev_neg = dv.new_device(params, g_neg, rng=rng)
    return CrossbarArray(dev_pos=dev_pos, dev_neg=dev_neg,
                         th_pos=np.zeros(W.shape), th_neg=np.zeros(W.shape),
                         w_to_g=w_to_g, **kwargs)


def matched_write_gain(eta, arr_or_params, w_max, cal, f_max=1.0, psi_max=1.0, mode="phenomenological"):
    """Write-law gain making a fresh device's dw equal ``eta * f * |psi|``.

    Returns ``kappa_set`` (phenomenological, at g0 = g_min) or ``kappa_lin``
    (linear law).
    """
    p = arr_or_params.params if isinstance(arr_or_params, CrossbarArray) else arr_or_params
    w_to_g = (p.g_max - p.g_min) / w_max
    if mode == "linear":
        return eta * f_max * psi_max * w_to_g / cal
    return eta * p.t_heat * f_max * psi_max * w_to_g / (cal * (p.g_max - p.g_min))


def _temps(arr):
    t_amb = arr.params.t_amb
    return t_amb + arr.th_pos, t_amb + arr.th_neg


def effective_weights(arr: CrossbarArray) -> np.ndarray:
    """Signed weights as read at the current local temperatures."""
    t_pos, t_neg = _temps(arr)
    g_pos = dv.read_conductance(arr.dev_pos, t_pos)
    g_neg = dv.read_conductance(arr.dev_neg, t_neg)
    return (g_pos - g_neg) / arr.w_to_g


def stored_weights(arr: CrossbarArray) -> np.ndarray:
    return (arr.dev_pos.g - arr.dev_neg.g) / arr.w_to_g


def spike_integration(arr: CrossbarArray, spikes) -> np.ndarray:
    """Weighted current per column for a binary row spike vector."""
    if arr.last_phase == SPIKE_INTEGRATION:
        raise ProtocolError("spike integration must be followed by an e-update")
    arr.last_phase = SPIKE_INTEGRATION
    return np.asarray(spikes, dtype=float) @ effective_weights(arr)


def crosstalk(inc, coupling):
    """Heat leaked to neighbours: cell (i+dr, j+dc) gains c * inc[i, j]."""
    out = np.zeros_like(inc)
    R, C = inc.shape
    for (dr, dc), c in coupling.items():
        if c == 0 or abs(dr) >= R or abs(dc) >= C:
            continue
        dst_r = slice(max(dr, 0), R + min(dr, 0))
        src_r = slice(max(-dr, 0), R + min(-dr, 0))
        dst_c = slice(max(dc, 0), C + min(dc, 0))
        src_c = slice(max(-dc, 0), C + min(-dc, 0))
        out[dst_r, dst_c] += c * inc[src_r, src_c]
    return out


def _split_increment(arr, f_vec, sig_vec):
    f_norm, s_norm, sign = normalize_signals(f_vec, sig_vec, arr.thermal)
    inc = arr.cal * f_norm[..., :, None] * s_norm[..., None, :]
    pos = sign > 0
    return inc * pos[..., None, :], inc * (~pos)[..., None, :]


def heat(arr: CrossbarArray, inc_pos, inc_neg):
    """Decay both planes by gamma, then add increments plus crosstalk."""
    g = arr.gamma
    if arr.coupling:
        inc_pos = inc_pos + crosstalk(inc_pos, arr.coupling)
        inc_neg = inc_neg + crosstalk(inc_neg, arr.coupling)
    arr.th_pos = g * arr.th_pos + inc_pos
    arr.th_neg = g * arr.th_neg + inc_neg


def e_update_phase(arr: CrossbarArray, f_vec_pre, sig_vec_post) -> CrossbarArray:
    """Route ``cal * f_norm_i * |sig_j|`` to the heater selected by sign(sig_j)."""
    if arr.last_phase != SPIKE_INTEGRATION:
        raise ProtocolError("e-update must follow spike integration")
    inc_pos, inc_neg = _split_increment(arr, f_vec_pre, sig_vec_post)
    heat(arr, inc_pos, inc_neg)
    arr.last_phase = E_UPDATE
    return arr


def e_update_increment(arr: CrossbarArray, inc_pos, inc_neg) -> CrossbarArray:
    """E-update with explicit per-device rises (K) for the two planes."""
    if arr.last_phase != SPIKE_INTEGRATION:
        raise ProtocolError("e-update must follow spike integration")
    heat(arr, np.asarray(inc_pos, dtype=float), np.asarray(inc_neg, dtype=float))
    arr.last_phase = E_UPDATE
    return arr


def accumulate_frame(arr: CrossbarArray, F, S) -> CrossbarArray:
    """Fused form of ``U`` alternating spike-integration/e-update steps.

    ``F`` (U, rows) and ``S`` (U, cols) are the per-step pre and post signals.
    Decay and crosstalk are linear, so the result equals the step-by-step
    sequence.  Only valid when read weights are constant over the frame.
    """
    if arr.last_phase == SPIKE_INTEGRATION:
        raise ProtocolError("pending spike integration without e-update")
    F = np.asarray(F, dtype=float)
    S = np.asarray(S, dtype=float)
    U = F.shape[0]
    f_norm, s_norm, sign = normalize_signals(F, S, arr.thermal)
    w = arr.gamma ** np.arange(U - 1, -1, -1, dtype=float)
    Fw = f_norm * w[:, None]
    pos = (sign > 0).astype(float)
    inc_pos = arr.cal * (Fw.T @ (s_norm * pos))
    inc_neg = arr.cal * (Fw.T @ (s_norm * (1.0 - pos)))
    if arr.coupling:
        inc_pos = inc_pos + crosstalk(inc_pos, arr.coupling)
        inc_neg = inc_neg + crosstalk(inc_neg, arr.coupling)
    keep = arr.gamma ** U
    arr.th_pos = keep * arr.th_pos + inc_pos
    arr.th_neg = keep * arr.th_neg + inc_neg
    arr.last_phase = E_UPDATE
    return arr


def weight_update_phase(arr: CrossbarArray, planes=("pos", "neg"), gain=1.0) -> np.ndarray:
    """One SET pulse to every device of ``planes`` at its local temperature.

    Thermal nodes are reset afterwards.  Returns the net weight change.
    """
    if arr.last_phase != E_UPDATE:
        raise ProtocolError("weight update only after the e-update of a frame")
    before = stored_weights(arr)
    t_pos, t_neg = _temps(arr)
    if "pos" in planes:
        arr.dev_pos = dv.apply_write(arr.dev_pos, dv.SET, t_pos, arr.write_mode, gain)
    if "neg" in planes:
        arr.dev_neg = dv.apply_write(arr.dev_neg, dv.SET, t_neg, arr.write_mode, gain)
    arr.th_pos = np.zeros(arr.shape)
    arr.th_neg = np.zeros(arr.shape)
    arr.frames += 1
    if arr.recenter_every and arr.frames % arr.recenter_every == 0:
        recenter(arr)
    arr.last_phase = None
    return stored_weights(arr) - before


def recenter(arr: CrossbarArray):
    """Remove the common-mode conductance of each pair (weight preserved)."""
    p = arr.params
    common = np.minimum(arr.dev_pos.g, arr.dev_neg.g) - p.g_min
    arr.dev_pos = replace(arr.dev_pos, g=dv.quantize(arr.dev_pos.g - common, p.bits, p.g_min, p.g_max))
    arr.dev_neg = replace(arr.dev_neg, g=dv.quantize(arr.dev_neg.g - common, p.bits, p.g_min, p.g_max))
    return arr


# -- files -----------------------------------------------------------------

def load_coupling_csv(path, nearest_only=True, symmetric=True) -> dict:
    """Read ``drow,dcol,coefficient`` rows (as written by the cell simulator).

    The self entry (0, 0) is skipped.  With ``symmetric`` every offset missing
    from the file is filled from its sign mirror, then from its transpose;
    measured offsets are never overwritten.
    """
    table = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            dr, dc = int(row["drow"]), int(row["dcol"])
            if (dr, dc) == (0, 0):
                continue
            if nearest_only and (abs(dr) > 1 or abs(dc) > 1):
                continue
            table[(dr, dc)] = float(row["coefficient"])
    if symmetric:
        for (dr, dc), c in list(table.items()):
            for off in {(sr * dr, sc * dc) for sr in (1, -1) for sc in (1, -1)}:
                table.setdefault(off, c)
        for (dr, dc), c in list(table.items()):
            table.setdefault((dc, dr), c)
    return table


def nearest_neighbour_coupling(edge: float, diagonal: float = 0.0) -> dict:
    table = {off: edge for off in ((1, 0), (-1, 0), (0, 1), (0, -1))}
    if diagonal:
        table.update({off: diagonal for off in ((1, 1), (1, -1), (-1, 1), (-1, -1))})
    return table


def export_snapshot(arr: CrossbarArray, path):
    """CSV dump of ``row,col,g_pos,g_neg,rise_pos,rise_neg``."""
    R, C = arr.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "g_pos", "g_neg", "rise_pos", "rise_neg"])
        for i in range(R):
            for j in range(C):
                w.writerow([i, j, f"{arr.dev_pos.g[i, j]:.6g}", f"{arr.dev_neg.g[i, j]:.6g}",
                            f"{arr.th_pos[i, j]:.6g}", f"{arr.th_neg[i, j]:.6g}"])
