"""Eligibility-propagation learning for a recurrent LIF network with a
leaky non-spiking readout.

Time-step convention: at step ``t`` the hidden layer integrates the input
spikes ``x(t)`` and the hidden spikes emitted at ``t-1``; spikes emitted at
``t`` drive the readout at ``t`` and the recurrent input at ``t+1``.  The
pseudo-derivative is evaluated at the stored membrane ``V(t-1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ProtocolError(RuntimeError):
    """Raised when an update is requested outside its allowed phase."""


@dataclass
class LifParams:
    v_th: float = 0.615
    tau_m: float = 200.0  # in time steps
    beta: float = 0.3
    eta: float = 0.5
    dt: float = 1e-3

    def __post_init__(self):
        if self.v_th <= 0 or self.tau_m <= 0 or self.beta <= 0 or self.eta < 0:
            raise ValueError("invalid LIF parameters")

    @property
    def decay(self) -> float:
        return math.exp(-1.0 / self.tau_m)


@dataclass
class EpropNet:
    """Weights plus the per-frame state of the network.

    Shapes: ``w_i`` (n_in, H), ``w_h`` (H, H), ``w_o`` (H, K).
    """

    w_i: np.ndarray
    w_h: np.ndarray
    w_o: np.ndarray
    params: LifParams = field(default_factory=LifParams)
    error_mode: str = "softmax"
    # per-frame state
    V: np.ndarray = None
    z: np.ndarray = None
    f_in: np.ndarray = None
    f_rec: np.ndarray = None
    psi: np.ndarray = None
    L: np.ndarray = None
    y: np.ndarray = None
    e_sum_in: np.ndarray = None
    e_sum_rec: np.ndarray = None
    grad_o: np.ndarray = None
    t: int = 0
    U: int = 0

    def __post_init__(self):
        if self.error_mode not in ("softmax", "linear"):
            raise ValueError("error_mode must be 'softmax' or 'linear'")
        self.reset(0)

    @property
    def sizes(self):
        return self.w_i.shape[0], self.w_i.shape[1], self.w_o.shape[1]

    def reset(self, U: int):
        """Zero all frame state ahead of a ``U``-step dataframe."""
        n_in, H, K = self.sizes
        self.V = np.zeros(H)
        self.z = np.zeros(H)
        self.f_in = np.zeros(n_in)
        self.f_rec = np.zeros(H)
        self.psi = np.zeros(H)
        self.L = np.zeros(H)
        self.y = np.zeros(K)
        self.e_sum_in = np.zeros((n_in, H))
        self.e_sum_rec = np.zeros((H, H))
        self.grad_o = np.zeros((H, K))
        self.t = 0
        self.U = U


def new_network(n_in, n_hidden, n_out, params=None, rng=None, recurrent=True,
                error_mode="softmax", input_gain=1.0, rec_gain=1.0, out_gain=1.0) -> EpropNet:
    """Zero-mean Gaussian weights with std ``gain/sqrt(fan_in)``."""
    params = params or LifParams()
    rng = rng if rng is not None else np.random.default_rng(0)
    w_i = input_gain * rng.standard_normal((n_in, n_hidden)) / math.sqrt(n_in)
    if recurrent:
        w_h = rec_gain * rng.standard_normal((n_hidden, n_hidden)) / math.sqrt(n_hidden)
    else:
        w_h = np.zeros((n_hidden, n_hidden))
    w_o = out_gain * rng.standard_normal((n_hidden, n_out)) / math.sqrt(n_hidden)
    return EpropNet(w_i, w_h, w_o, params=params, error_mode=error_mode)


def recurrent_drive_matrix(w_h):
    """Recurrent matrix with the self-connection entering with a minus sign."""
    return w_h - 2.0 * np.diag(np.diag(w_h))


# -- single-step operations ------------------------------------------------

def lif_step(net: EpropNet, x, w_i=None, w_h=None):
    """Integrate one step; returns the emitted hidden spikes.

    ``w_i``/``w_h`` override the stored weights (hardware-read weights).
    """
    w_i = net.w_i if w_i is None else w_i
    w_h = net.w_h if w_h is None else w_h
    p = net.params
    drive = x @ w_i + net.z @ w_h - 2.0 * np.diag(w_h) * net.z
    v_new = p.decay * net.V + drive
    z = (v_new >= p.v_th).astype(float)
    net.V = v_new - p.v_th * z
    net.z = z
    return z


def readout_step(net: EpropNet, z):
    net.y = net.params.decay * net.y + z @ net.w_o
    return net.y


def output_error(y, y_target, mode="softmax"):
    if mode == "linear":
        return y - y_target
    e = np.exp(y - np.max(y, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True) - y_target


def learning_signal(w_o, err):
    """Per-hidden-neuron projection of the readout error."""
    return w_o @ err


def eligibility_state_step(f, spike, decay):
    return decay * f + spike


def pseudo_gradient(V_prev, L, p: LifParams):
    window = np.maximum(0.0, 1.0 - np.abs(V_prev / p.v_th - 1.0))
    return p.beta / p.v_th * window * L


def accumulate_eligibility(e_sum, f_pre, psi_post):
    return e_sum + np.outer(f_pre, psi_post)


def step(net: EpropNet, x, y_target):
    """One full time step of the reference (non-batched) learning path."""
    if net.t >= net.U:
        raise ProtocolError("frame already complete; call reset() first")
    p = net.params
    v_prev = net.V
    z_prev = net.z
    z = lif_step(net, x)
    y = readout_step(net, z)
    err = output_error(y, y_target, net.error_mode)
    net.L = learning_signal(net.w_o, err)
    net.psi = pseudo_gradient(v_prev, net.L, p)
    net.f_in = eligibility_state_step(net.f_in, x, p.decay)
    net.f_rec = eligibility_state_step(net.f_rec, z_prev, p.decay)
    net.e_sum_in = accumulate_eligibility(net.e_sum_in, net.f_in, net.psi)
    net.e_sum_rec = accumulate_eligibility(net.e_sum_rec, net.f_rec, net.psi)
    net.grad_o += np.outer(z, err)
    net.t += 1
    return z, y


def update_output_weights(net: EpropNet, spikes_history=None, errors_history=None):
    """Readout descent step at the end of a frame; clears the history."""
    _require_frame_end(net)
    if spikes_history is not None:
        grad = np.asarray(spikes_history).T @ np.asarray(errors_history)
    else:
        grad = net.grad_o
    net.w_o = net.w_o - net.params.eta * grad
    net.grad_o = np.zeros_like(net.w_o)
    return net.w_o


def update_hidden_weights(net: EpropNet):
    """``w <- w - eta * e_sum`` for input and recurrent weights; clears e_sum."""
    _require_frame_end(net)
    eta = net.params.eta
    net.w_i = net.w_i - eta * net.e_sum_in
    net.w_h = net.w_h - eta * net.e_sum_rec
    net.e_sum_in = np.zeros_like(net.e_sum_in)
    net.e_sum_rec = np.zeros_like(net.e_sum_rec)
    return net.w_i, net.w_h


def _require_frame_end(net):
    if net.U == 0 or net.t != net.U:
        raise ProtocolError(
            f"weight updates only at the end of a dataframe (t={net.t}, U={net.U})")


# -- batched frame ---------------------------------------------------------

@dataclass
class FrameTrace:
    """Per-step records of one frame, stacked along axis 0."""

    F_in: np.ndarray
    F_rec: np.ndarray
    Psi: np.ndarray
    Z: np.ndarray
    Err: np.ndarray
    Y: np.ndarray

    def eligibility(self):
        """Accumulated eligibility ``sum_t f(t) psi(t)^T`` for both weight sets."""
        return self.F_in.T @ self.Psi, self.F_rec.T @ self.Psi

    def output_grad(self):
        return self.Z.T @ self.Err


def _filter(S, decay):
    out = np.empty_like(S)
    acc = np.zeros(S.shape[1])
    for t in range(S.shape[0]):
        acc = decay * acc + S[t]
        out[t] = acc
    return out


def run_frame(net: EpropNet, X, Y_target, w_i=None, w_h=None, learn=True) -> FrameTrace:
    """Present one ``U``-step frame, recording what the updates need.

    Equivalent to ``reset(U)`` followed by ``U`` calls of :func:`step`, with
    eligibility sums left to the caller (see :meth:`FrameTrace.eligibility`).
    """
    X = np.asarray(X, dtype=float)
    U = X.shape[0]
    net.reset(U)
    p = net.params
    d, vth = p.decay, p.v_th
    w_i = net.w_i if w_i is None else w_i
    w_h = net.w_h if w_h is None else w_h
    w_rec = recurrent_drive_matrix(w_h)
    w_o = net.w_o
    drive_in = X @ w_i
    H = w_i.shape[1]
    K = w_o.shape[1]
    Z = np.zeros((U, H))
    Vprev = np.zeros((U, H))
    Yrec = np.zeros((U, K))
    V = np.zeros(H)
    z = np.zeros(H)
    y = np.zeros(K)
    has_rec = np.any(w_rec)
    for t in range(U):
        Vprev[t] = V
        v_new = d * V + drive_in[t]
        if has_rec:
            v_new += z @ w_rec
        z = (v_new >= vth).astype(float)
        V = v_new - vth * z
        Z[t] = z
        y = d * y + z @ w_o
        Yrec[t] = y
    Err = output_error(Yrec, Y_target, net.error_mode)
    if learn:
        L = Err @ w_o.T
        Psi = pseudo_gradient(Vprev, L, p)
        F_in = _filter(X, d)
        Z_prev = np.vstack([np.zeros((1, H)), Z[:-1]])
        F_rec = _filter(Z_prev, d)
    else:
        Psi = F_in = F_rec = None
    net.V, net.z, net.y, net.t = V, z, y, U
    return FrameTrace(F_in=F_in, F_rec=F_rec, Psi=Psi, Z=Z, Err=Err, Y=Yrec)


def apply_trace(net: EpropNet, trace: FrameTrace, hidden=True):
    """Ideal-synapse end-of-frame updates from a recorded frame."""
    net.e_sum_in, net.e_sum_rec = trace.eligibility()
    net.grad_o = trace.output_grad()
    update_output_weights(net)
    if hidden:
        update_hidden_weights(net)


# -- test oracle -----------------------------------------------------------

def oracle_gradient(w_i, w_o, X, Y_target, params: LifParams, error_mode="linear", w_h=None):
    """Input-weight gradient by reverse accumulation through the unrolled
    membrane recursion (feedforward networks only).

    Surrogate conventions: the reset path and the readout's leaky carry are
    not differentiated, and the spike emitted at step ``t`` has derivative
    ``beta/v_th * max(0, 1 - |V(t-1)/v_th - 1|)`` with respect to the
    membrane drive of that step.
    """
    if w_h is not None and np.any(w_h):
        raise NotImplementedError("oracle supports feedforward networks only")
    X = np.asarray(X, dtype=float)
    Y_target = np.asarray(Y_target, dtype=float)
    U, n_in = X.shape
    H = w_i.shape[1]
    K = w_o.shape[1]
    d = math.exp(-1.0 / params.tau_m)
    vth = params.v_th

    V = [0.0] * H
    y = [0.0] * K
    surrogate = np.zeros((U, H))
    dE_dz = np.zeros((U, H))
    for t in range(U):
        for j in range(H):
            surrogate[t, j] = params.beta / vth * max(0.0, 1.0 - abs(V[j] / vth - 1.0))
        z = [0.0] * H
        for j in range(H):
            v = d * V[j]
            for i in range(n_in):
                v += w_i[i, j] * X[t, i]
            if v >= vth:
                z[j] = 1.0
                v -= vth
            V[j] = v
        for k in range(K):
            acc = d * y[k]
            for j in range(H):
                acc += w_o[j, k] * z[j]
            y[k] = acc
        if error_mode == "linear":
            dE_dy = [y[k] - Y_target[t, k] for k in range(K)]
        else:
            m = max(y)
            ex = [math.exp(v - m) for v in y]
            s = sum(ex)
            dE_dy = [ex[k] / s - Y_target[t, k] for k in range(K)]
        for j in range(H):
            dE_dz[t, j] = sum(w_o[j, k] * dE_dy[k] for k in range(K))

    # adjoint of the membrane drive, swept backwards in time
    grad = np.zeros((n_in, H))
    adj = np.zeros(H)
    for t in range(U - 1, -1, -1):
        adj = surrogate[t] * dE_dz[t] + d * adj
        for i in range(n_in):
            if X[t, i] != 0.0:
                grad[i] += X[t, i] * adj
    return grad
