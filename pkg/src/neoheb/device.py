"""Single ReRAM cell model: temperature-dependent conductance update,
variability, quantization and temperature-dependent readout.

All operations are vectorized: a ``DeviceState`` may hold one device
(scalar-shaped arrays) or a whole plane of devices.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SET = "set"
RESET = "reset"
POLARITIES = (SET, RESET)
WRITE_MODES = ("fitted", "phenomenological", "linear")

# index order of the fit coefficients inside sampled parameter arrays
COEFFS = ("a", "b", "c", "d")


class DeviceRangeError(ValueError):
    pass


class DeviceDomainError(ValueError):
    pass


@dataclass
class DeviceParams:
    """Fitted update-law coefficients and device-level constants.

    Conductances are in µS, temperatures in K.  ``bits=None`` disables
    quantization (continuous conductance).
    """

    a_set: float = 0.143
    b_set: float = 2.216
    c_set: float = 0.8232
    d_set: float = 0.4043
    a_reset: float = 0.3124
    b_reset: float = 0.8064
    c_reset: float = 1.138
    d_reset: float = -0.8806
    g_min: float = 10.0
    g_max: float = 100.0
    bits: int | None = 8
    D_v: float = 0.0
    C_v: float = 0.0
    alpha: float = 0.0
    g_scale: float | None = None  # defaults to g_max
    t_scale: float = 300.0
    t_offset: float = 0.0
    t_amb: float = 300.0
    # phenomenological law: dG = kappa * headroom * h(T), h = eps + (T - T_amb)/t_heat
    kappa_set: float = 0.05
    kappa_reset: float = 0.05
    t_heat: float = 100.0
    eps: float = 1e-4
    # linear law: dG = kappa_lin * (T - T_amb)   [µS/K]
    kappa_lin: float = 0.1

    def __post_init__(self):
        if not self.g_min < self.g_max:
            raise ValueError("g_min must be < g_max")
        if self.bits is not None and self.bits < 1:
            raise ValueError("bits must be >= 1")
        if self.D_v < 0 or self.C_v < 0 or self.alpha < 0:
            raise ValueError("D_v, C_v and alpha must be non-negative")
        if self.g_scale is not None and self.g_scale <= 0:
            raise ValueError("g_scale must be positive")
        if self.t_scale <= 0 or self.t_heat <= 0:
            raise ValueError("t_scale and t_heat must be positive")

    @property
    def gscale(self) -> float:
        return self.g_max if self.g_scale is None else self.g_scale

    def nominal(self, polarity: str) -> np.ndarray:
        _check_polarity(polarity)
        return np.array([getattr(self, f"{c}_{polarity}") for c in COEFFS])


@dataclass
class DeviceState:
    """Conductance plus the per-device realization of the fit coefficients.

    ``sampled[polarity]`` has shape ``(4,) + g.shape`` and is drawn once at
    construction.  ``rng`` is the device's cycle-to-cycle noise stream.
    """

    params: DeviceParams
    g: np.ndarray
    sampled: dict = field(default_factory=dict)
    rng: np.random.Generator | None = None

    @property
    def shape(self):
        return self.g.shape


def _check_polarity(polarity):
    if polarity not in POLARITIES:
        raise ValueError(f"unknown polarity {polarity!r}")


def new_device(params: DeviceParams, g_init, seed=None, rng=None) -> DeviceState:
    """Create one device (scalar ``g_init``) or a plane of devices (array).

    Device-to-device noise: every coefficient is drawn from
    N(nominal, D_v * |nominal|), once.
    """
    g = np.array(g_init, dtype=float)
    if np.any(g < params.g_min) or np.any(g > params.g_max):
        raise DeviceRangeError(
            f"g_init outside [{params.g_min}, {params.g_max}] µS")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(seed))
    sampled = {}
    for pol in POLARITIES:
        nom = params.nominal(pol).reshape((4,) + (1,) * g.ndim)
        nom = np.broadcast_to(nom, (4,) + g.shape)
        if params.D_v > 0:
            noise = rng.standard_normal((4,) + g.shape)
            sampled[pol] = nom + params.D_v * np.abs(nom) * noise
        else:
            sampled[pol] = nom.copy()
    g = quantize(g, params.bits, params.g_min, params.g_max)
    return DeviceState(params=params, g=g, sampled=sampled, rng=rng)


def fitted_ratio(g0_norm, t_norm, coeffs) -> np.ndarray:
    """Relative change ``dG/G0`` of the fit at normalized conductance and temperature."""
    a, b, c, d = coeffs
    t_norm = np.asarray(t_norm, dtype=float)
    if np.any(t_norm <= 0):
        raise DeviceDomainError("normalized temperature must be positive")
    return a * np.exp(b * g0_norm) * t_norm ** (c * np.exp(d * g0_norm))


def delta_g_fitted(g0, T_local, polarity, coeffs, params: DeviceParams):
    """Conductance change (µS) of one fixed programming pulse, fitted law.

    Positive for SET, negative for RESET.  Raises ``DeviceDomainError``
    when the normalized temperature ``(T - t_offset) / t_scale`` is <= 0.
    """
    _check_polarity(polarity)
    g0 = np.asarray(g0, dtype=float)
    t_norm = (np.asarray(T_local, dtype=float) - params.t_offset) / params.t_scale
    ratio = fitted_ratio(g0 / params.gscale, t_norm, coeffs)
    sign = 1.0 if polarity == SET else -1.0
    return sign * g0 * ratio


def _heat_response(T_local, params):
    rise = np.maximum(np.asarray(T_local, dtype=float) - params.t_amb, 0.0)
    return params.eps + rise / params.t_heat


def _gain(coeffs, polarity, params):
    # device-to-device spread of the phenomenological/linear laws rides on
    # the sampled amplitude coefficient; non-responsive devices clamp at 0
    nominal = getattr(params, f"a_{polarity}")
    return np.maximum(coeffs[0] / nominal, 0.0)


def delta_g_phenomenological(g0, T_local, polarity, coeffs, params: DeviceParams):
    """Trend-preserving update law.

    SET:   dG =  kappa * (g_max - g0) * h(T)
    RESET: dG = -kappa * (g0 - g_min) * h(T)
    with h(T) = eps + max(T - T_amb, 0) / t_heat.
    """
    _check_polarity(polarity)
    g0 = np.asarray(g0, dtype=float)
    h = _heat_response(T_local, params)
    gain = _gain(coeffs, polarity, params)
    if polarity == SET:
        return params.kappa_set * gain * (params.g_max - g0) * h
    return -params.kappa_reset * gain * (g0 - params.g_min) * h


def delta_g_linear(g0, T_local, polarity, coeffs, params: DeviceParams):
    """dG = ±kappa_lin * (T - T_amb); no state dependence."""
    _check_polarity(polarity)
    rise = np.asarray(T_local, dtype=float) - params.t_amb
    gain = _gain(coeffs, polarity, params)
    out = params.kappa_lin * gain * rise * np.ones_like(np.asarray(g0, dtype=float))
    return out if polarity == SET else -out


_LAWS = {
    "fitted": delta_g_fitted,
    "phenomenological": delta_g_phenomenological,
    "linear": delta_g_linear,
}


def delta_g(dev: DeviceState, polarity, T_local, mode="phenomenological"):
    """Noise-free conductance change of every device in ``dev``."""
    if mode not in _LAWS:
        raise ValueError(f"unknown write mode {mode!r}")
    return _LAWS[mode](dev.g, T_local, polarity, dev.sampled[polarity], dev.params)


def apply_write(dev: DeviceState, polarity, T_local, mode="phenomenological",
                gain=1.0, mask=None) -> DeviceState:
    """One programming pulse at local temperature ``T_local``.

    The law's dG is scaled by ``gain`` (pulse-width proxy), perturbed by
    N(0, C_v |dG|), added, clamped to [g_min, g_max] and quantized.
    Devices where ``mask`` is False are left untouched.
    """
    p = dev.params
    dg = delta_g(dev, polarity, T_local, mode) * gain
    if p.C_v > 0:
        dg = dg + p.C_v * np.abs(dg) * dev.rng.standard_normal(dg.shape)
    g = np.clip(dev.g + dg, p.g_min, p.g_max)
    g = quantize(g, p.bits, p.g_min, p.g_max)
    if mask is not None:
        g = np.where(mask, g, dev.g)
    return replace(dev, g=g)


def read_conductance(dev: DeviceState, T_local) -> np.ndarray:
    """Effective read conductance ``g * (1 + alpha * (T - T_amb))``."""
    p = dev.params
    if p.alpha == 0:
        return dev.g
    return dev.g * (1.0 + p.alpha * (np.asarray(T_local) - p.t_amb))


def quantize(g, bits, g_min, g_max):
    """Snap to the nearest of ``2**bits`` uniform levels on [g_min, g_max].

    Exact midpoints round toward g_min.  ``bits=None`` returns ``g`` as-is.
    """
    g = np.asarray(g, dtype=float)
    if bits is None:
        return g
    step = (g_max - g_min) / (2 ** bits - 1)
    idx = np.ceil((g - g_min) / step - 0.5)
    return np.clip(g_min + idx * step, g_min, g_max)


def level_step(params: DeviceParams) -> float:
    """Spacing between adjacent conductance levels (0 when continuous)."""
    if params.bits is None:
        return 0.0
    return (params.g_max - params.g_min) / (2 ** params.bits - 1)
