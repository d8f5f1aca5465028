"""Lumped electrothermal node of a heater/ReRAM pair."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NORM_EPS = 1e-6


@dataclass
class ThermalParams:
    """Heater, transistor and thermal-node constants (SI units)."""

    R: float = 5.0e3            # heater resistance, ohm
    k: float = 1.0e-4           # mu_eff * C_eff * W / L, A/V^2
    R_TH: float = 1.0e6         # thermal resistance, K/W
    tau_TH: float = 1.0e-6      # thermal time constant, s
    t_PW: float = 1.0e-8        # heating pulse width, s
    T_amb: float = 300.0        # K
    v_scale: float = 1.0        # V_H1 at psi_norm = 1
    f_max: float | None = None  # defaults to the every-step-spiking bound
    psi_max: float = 1.0
    tau_m: float = 200.0        # membrane constant used for the f_max default

    def __post_init__(self):
        for name in ("R", "k", "R_TH", "tau_TH", "t_PW", "T_amb", "v_scale", "psi_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.t_PW > self.tau_TH:
            raise ValueError("t_PW must not exceed tau_TH")
        if self.f_max is None:
            self.f_max = f_bound(self.tau_m)

    @property
    def step_fraction(self) -> float:
        return self.t_PW / self.tau_TH

    def rise_per_unit(self) -> float:
        """Temperature increment (K) of one pulse at f_norm = psi_norm = 1, from rest."""
        return self.step_fraction * self.R_TH * self.v_scale ** 2 / self.R


@dataclass
class ThermalState:
    T0: float = 0.0  # rise above ambient, K


def f_bound(tau_m: float) -> float:
    """Supremum of the low-pass eligibility state under every-step spiking."""
    return 1.0 / (1.0 - math.exp(-1.0 / tau_m))


class ThermalDomainError(ValueError):
    pass


def gate_drive(f_norm, p: ThermalParams):
    """Heater voltage and transistor overdrive for given normalized signals.

    Returns ``(R*k*V_OV, V_OV)``; the scaling diverges at ``f_norm = 1``.
    """
    f_norm = np.asarray(f_norm, dtype=float)
    if np.any(f_norm >= 1) or np.any(f_norm < 0):
        raise ThermalDomainError("f_norm must lie in [0, 1)")
    sf = np.sqrt(f_norm)
    rkv = sf / (1.0 - sf)
    return rkv, rkv / (p.R * p.k)


def heater_power(f_norm, psi_norm, p: ThermalParams):
    """Power dissipated in the heater (W), evaluated through the full
    triode-transistor/heater divider with the neuron-side voltage scaling."""
    rkv, _ = gate_drive(f_norm, p)
    v_h1 = p.v_scale * np.sqrt(np.asarray(psi_norm, dtype=float))
    return v_h1 ** 2 / p.R * rkv ** 2 / (1.0 + rkv) ** 2


def heater_power_closed(f_norm, psi_norm, p: ThermalParams):
    """Closed form of :func:`heater_power`: ``v_scale**2 / R * f * psi``."""
    return p.v_scale ** 2 / p.R * np.asarray(f_norm) * np.asarray(psi_norm)


def step_temperature(s: ThermalState, P_H, p: ThermalParams) -> ThermalState:
    """One pulse of first-order relaxation toward ``P_H * R_TH``."""
    T0 = s.T0 + p.step_fraction * (P_H * p.R_TH - s.T0)
    return ThermalState(T0=T0)


def decay_factor(t_step: float, tau_TH: float) -> float:
    """Per-step retention of accumulated rise, clamped to [0, 1]."""
    if t_step < 0:
        raise ValueError("t_step must be non-negative")
    return max(0.0, 1.0 - t_step / tau_TH)


def normalize_signals(f, psi, p: ThermalParams):
    """Map raw eligibility state and pseudo-gradient onto heater drive range.

    Returns ``(f_norm, psi_norm, sign)``; ``f_norm`` stays strictly below 1.
    """
    f = np.asarray(f, dtype=float)
    psi = np.asarray(psi, dtype=float)
    f_norm = np.minimum(f / p.f_max, 1.0 - NORM_EPS)
    psi_norm = np.minimum(np.abs(psi) / p.psi_max, 1.0)
    sign = np.where(psi < 0, -1.0, 1.0)
    return f_norm, psi_norm, sign
