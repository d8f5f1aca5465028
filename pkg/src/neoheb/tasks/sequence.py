"""Synthetic framewise temporal-classification task, feature-file I/O and an
e-prop trainer for ideal or crossbar synapses."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import device as dv
from .. import eprop
from .. import xbar
from ..rng import stream
from ..thermal import ThermalParams, f_bound


class FeatureFileError(ValueError):
    """Malformed feature file; message carries the line number."""


class SchemaError(ValueError):
    pass


@dataclass
class SeqTaskConfig:
    n_in: int = 39
    n_hidden: int = 200
    n_out: int = 8
    frames: int = 100
    samples_per_class: int = 25
    n_segments: int = 4
    active_frac: float = 0.3
    noise: float = 0.25
    rate_low: float = 0.02
    rate_high: float = 0.3
    train_frac: float = 0.8
    epochs: int = 2
    eta: float = 1e-3
    eta_out: float | None = 1e-3
    input_gain: float = 0.2
    rec_gain: float = 0.3
    out_gain: float = 0.3
    recurrent: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("n_in", "n_hidden", "n_out", "frames", "samples_per_class", "n_segments"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SequenceDataset:
    """Rate features (N, U, n_in) in [0, 1], their spike encoding and
    per-frame labels (N, U)."""

    features: np.ndarray
    spikes: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_in(self):
        return self.features.shape[2]

    def subset(self, idx):
        return SequenceDataset(self.features[idx], self.spikes[idx], self.labels[idx], self.n_classes)

    def split(self, train_frac=0.8):
        """Per-class split into disjoint train/test subsets."""
        first = self.labels[:, 0]
        train, test = [], []
        for c in range(self.n_classes):
            idx = np.flatnonzero(first == c)
            k = int(round(train_frac * len(idx)))
            train.extend(idx[:k])
            test.extend(idx[k:])
        return self.subset(np.sort(train)), self.subset(np.sort(test))


def encode_spikes(features, cfg: SeqTaskConfig, rng):
    rates = cfg.rate_low + (cfg.rate_high - cfg.rate_low) * features
    return (rng.random(features.shape) < rates).astype(np.uint8)


def generate_sequence_dataset(cfg: SeqTaskConfig) -> SequenceDataset:
    """Per class a segment-wise channel pattern; samples add Gaussian
    jitter to the pattern and are Bernoulli rate-encoded."""
    rng = stream(cfg.seed, "seq-features")
    seg_len = math.ceil(cfg.frames / cfg.n_segments)
    protos = (rng.random((cfg.n_out, cfg.n_segments, cfg.n_in)) < cfg.active_frac).astype(float)
    n = cfg.n_out * cfg.samples_per_class
    labels = np.repeat(np.arange(cfg.n_out), cfg.samples_per_class)
    order = rng.permutation(n)
    labels = labels[order]
    jitter = rng.standard_normal((n, cfg.n_segments, cfg.n_in))
    prof = np.clip(protos[labels] + cfg.noise * jitter, 0.0, 1.0)
    feats = np.repeat(prof, seg_len, axis=1)[:, :cfg.frames, :]
    spikes = encode_spikes(feats, cfg, stream(cfg.seed, "seq-encode"))
    frame_labels = np.repeat(labels[:, None], cfg.frames, axis=1)
    return SequenceDataset(feats, spikes, frame_labels, cfg.n_out)


# -- feature files -----------------------------------------------------------

def write_feature_file(ds: SequenceDataset, path):
    """CSV: header ``frame,label,f0..f{n-1}``; samples separated by a blank line."""
    n_in = ds.n_in
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "label"] + [f"f{i}" for i in range(n_in)])
        for s in range(len(ds)):
            if s:
                fh.write("\n")
            for t in range(ds.features.shape[1]):
                w.writerow([t, int(ds.labels[s, t])] + [repr(float(v)) for v in ds.features[s, t]])


def load_feature_file(path, cfg: SeqTaskConfig | None = None, n_classes=None) -> SequenceDataset:
    """Parse a feature file and rate-encode it with the task encoder.

    All samples must have equal length.  ``n_classes`` (if given) bounds the
    labels; otherwise it is inferred as ``max(label) + 1``.
    """
    samples, labels = [], []
    cur_f, cur_l = [], []
    width = None
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise FeatureFileError("line 1: empty file or missing header")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["frame", "label"] or len(header) < 3:
        raise FeatureFileError("line 1: header must be frame,label,f0..f{n-1}")
    feat_cols = header[2:]
    if feat_cols != [f"f{i}" for i in range(len(feat_cols))]:
        raise FeatureFileError("line 1: feature columns must be f0..f{n-1}")
    width = len(header)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            if cur_f:
                samples.append(cur_f)
                labels.append(cur_l)
                cur_f, cur_l = [], []
            continue
        parts = line.split(",")
        if len(parts) != width:
            raise FeatureFileError(f"line {lineno}: expected {width} fields, got {len(parts)}")
        try:
            vals = [float(v) for v in parts[2:]]
            int(parts[0])
        except ValueError as exc:
            raise FeatureFileError(f"line {lineno}: {exc}") from None
        try:
            lab = int(parts[1])
        except ValueError:
            raise SchemaError(f"line {lineno}: label {parts[1]!r} is not a class index") from None
        if lab < 0 or (n_classes is not None and lab >= n_classes):
            raise SchemaError(f"line {lineno}: unknown label {lab}")
        cur_f.append(vals)
        cur_l.append(lab)
    if cur_f:
        samples.append(cur_f)
        labels.append(cur_l)
    if not samples:
        raise FeatureFileError(f"line {len(lines)}: no data rows")
    lengths = {len(s) for s in samples}
    if len(lengths) != 1:
        raise FeatureFileError("samples must all have the same number of frames")
    feats = np.array(samples, dtype=float)
    labs = np.array(labels, dtype=int)
    k = n_classes if n_classes is not None else int(labs.max()) + 1
    cfg = cfg or SeqTaskConfig(n_in=feats.shape[2], n_out=k, frames=feats.shape[1])
    spikes = encode_spikes(feats, cfg, stream(cfg.seed, "seq-encode"))
    return SequenceDataset(feats, spikes, labs, k)


# -- training -----------------------------------------------------------------

@dataclass
class HardwareConfig:
    """Crossbar realization of the input and recurrent weights."""

    device: dv.DeviceParams = field(default_factory=dv.DeviceParams)
    gamma: float = 1.0          # per-step thermal retention
    cal: float = 1.0            # K per unit f_norm * psi_norm
    crosstalk: float = 0.0      # nearest-neighbour coupling coefficient
    crosstalk_diag: float = 0.0
    coupling: dict | None = None
    w_max_in: float = 0.4
    w_max_rec: float = 0.2
    write_mode: str = "phenomenological"
    recenter_every: int = 10
    psi_margin: float = 1.0
    psi_max: float | None = None
    per_step: bool | None = None  # default: per-step loop only when alpha > 0

    def coupling_table(self):
        if self.coupling is not None:
            return dict(self.coupling)
        if self.crosstalk or self.crosstalk_diag:
            return xbar.nearest_neighbour_coupling(self.crosstalk, self.crosstalk_diag)
        return {}


@dataclass
class SeqResult:
    train_acc: list
    test_acc: list

    @property
    def final_test(self):
        return self.test_acc[-1]


def framewise_accuracy(net, ds: SequenceDataset, weights=None) -> float:
    w_i, w_h = weights if weights is not None else (None, None)
    hits = 0
    total = 0
    for s in range(len(ds)):
        Y = np.eye(ds.n_classes)[ds.labels[s]]
        trace = eprop.run_frame(net, ds.spikes[s], Y, w_i=w_i, w_h=w_h, learn=False)
        hits += int(np.sum(np.argmax(trace.Y, axis=1) == ds.labels[s]))
        total += ds.labels.shape[1]
    return hits / total


class SeqTrainer:
    """Online e-prop training, one weight update per sample (dataframe)."""

    def __init__(self, cfg: SeqTaskConfig, mode="ideal", hw: HardwareConfig | None = None,
                 seed=None, lif: eprop.LifParams | None = None):
        self.cfg = cfg
        self.mode = mode
        self.hw = hw or HardwareConfig()
        seed = cfg.seed if seed is None else seed
        self.seed = seed
        lif = lif or eprop.LifParams(eta=cfg.eta)
        self.net = eprop.new_network(cfg.n_in, cfg.n_hidden, cfg.n_out, params=lif,
                                     rng=stream(seed, "seq-weights"), recurrent=cfg.recurrent,
                                     input_gain=cfg.input_gain, rec_gain=cfg.rec_gain,
                                     out_gain=cfg.out_gain)
        self.eta_out = cfg.eta if cfg.eta_out is None else cfg.eta_out
        self.xb_in = self.xb_rec = None
        if mode == "hardware":
            self._build_crossbars()
        elif mode != "ideal":
            raise ValueError("mode must be 'ideal' or 'hardware'")

    def _build_crossbars(self):
        hw, net = self.hw, self.net
        rng = stream(self.seed, "seq-devices")
        thermal = ThermalParams(tau_m=net.params.tau_m, psi_max=hw.psi_max or 1.0)
        common = dict(gamma=hw.gamma, cal=hw.cal, coupling=hw.coupling_table(),
                      write_mode=hw.write_mode, thermal=thermal,
                      recenter_every=hw.recenter_every)
        self.xb_in = xbar.new_crossbar(net.w_i, hw.device, hw.w_max_in, rng=rng, clip=True, **common)
        self.xb_rec = xbar.new_crossbar(net.w_h, hw.device, hw.w_max_rec, rng=rng, clip=True,
                                        **{**common, "thermal": replace(thermal)})
        self._calibrated = hw.psi_max is not None
        if self._calibrated:
            self._set_gains()

    def _set_gains(self):
        # per-array write gain so a fresh device realizes dw = eta * f * |psi|
        for arr, w_max in ((self.xb_in, self.hw.w_max_in), (self.xb_rec, self.hw.w_max_rec)):
            th = arr.thermal
            k = xbar.matched_write_gain(self.net.params.eta, arr.params, w_max, arr.cal,
                                        th.f_max, th.psi_max, mode=arr.write_mode)
            p = arr.params
            p = replace(p, kappa_lin=k) if arr.write_mode == "linear" else replace(p, kappa_set=k)
            arr.dev_pos = replace(arr.dev_pos, params=p)
            arr.dev_neg = replace(arr.dev_neg, params=p)

    def _calibrate(self, X, Y):
        # psi_max = margin * beta/v_th * max|L| over a calibration frame
        p = self.net.params
        trace = eprop.run_frame(self.net, X, Y, *self.weights(), learn=False)
        L = trace.Err @ self.net.w_o.T
        psi_max = self.hw.psi_margin * p.beta / p.v_th * float(np.max(np.abs(L))) or 1.0
        for arr in (self.xb_in, self.xb_rec):
            arr.thermal = replace(arr.thermal, psi_max=psi_max)
        self._set_gains()
        self._calibrated = True

    def weights(self):
        if self.mode == "ideal":
            return self.net.w_i, self.net.w_h
        return xbar.effective_weights(self.xb_in), xbar.effective_weights(self.xb_rec)

    def train_sample(self, X, Y):
        net = self.net
        if self.mode == "ideal":
            trace = eprop.run_frame(net, X, Y)
            net.e_sum_in, net.e_sum_rec = trace.eligibility()
            net.grad_o = trace.output_grad()
            self._update_readout()
            eprop.update_hidden_weights(net)
            return
        if not self._calibrated:
            self._calibrate(X, Y)
        per_step = self.hw.per_step
        if per_step is None:
            per_step = self.hw.device.alpha > 0
        if per_step:
            self._train_sample_per_step(X, Y)
            return
        w_i, w_h = self.weights()
        trace = eprop.run_frame(net, X, Y, w_i=w_i, w_h=w_h)
        net.grad_o = trace.output_grad()
        self._update_readout()
        # descent direction: heat G+ where -psi > 0
        xbar.accumulate_frame(self.xb_in, trace.F_in, -trace.Psi)
        xbar.accumulate_frame(self.xb_rec, trace.F_rec, -trace.Psi)
        xbar.weight_update_phase(self.xb_in)
        xbar.weight_update_phase(self.xb_rec)

    def _train_sample_per_step(self, X, Y):
        net = self.net
        p = net.params
        net.reset(X.shape[0])
        for t in range(X.shape[0]):
            v_prev, z_prev = net.V, net.z
            xbar.spike_integration(self.xb_in, X[t])
            xbar.spike_integration(self.xb_rec, z_prev)
            w_i, w_h = self.weights()
            z = eprop.lif_step(net, X[t], w_i=w_i, w_h=w_h)
            y = eprop.readout_step(net, z)
            err = eprop.output_error(y, Y[t], net.error_mode)
            net.psi = eprop.pseudo_gradient(v_prev, eprop.learning_signal(net.w_o, err), p)
            net.f_in = eprop.eligibility_state_step(net.f_in, X[t], p.decay)
            net.f_rec = eprop.eligibility_state_step(net.f_rec, z_prev, p.decay)
            net.grad_o += np.outer(z, err)
            xbar.e_update_phase(self.xb_in, net.f_in, -net.psi)
            xbar.e_update_phase(self.xb_rec, net.f_rec, -net.psi)
            net.t += 1
        self._update_readout()
        xbar.weight_update_phase(self.xb_in)
        xbar.weight_update_phase(self.xb_rec)

    def _update_readout(self):
        net = self.net
        net.w_o = net.w_o - self.eta_out * net.grad_o
        net.grad_o = np.zeros_like(net.w_o)

    def evaluate(self, ds: SequenceDataset) -> float:
        return framewise_accuracy(self.net, ds, self.weights())

    def fit(self, train: SequenceDataset, test: SequenceDataset, epochs=None) -> SeqResult:
        epochs = self.cfg.epochs if epochs is None else epochs
        eye = np.eye(train.n_classes)
        order_rng = stream(self.seed, "seq-order")
        res = SeqResult([], [])
        for _ in range(epochs):
            for s in order_rng.permutation(len(train)):
                self.train_sample(train.spikes[s].astype(float), eye[train.labels[s]])
            res.train_acc.append(self.evaluate(train))
            res.test_acc.append(self.evaluate(test))
        return res


def run_sequence(cfg: SeqTaskConfig, mode="ideal", hw=None, seed=0, dataset=None) -> SeqResult:
    """Train one network on the (shared) synthetic dataset with run seed ``seed``."""
    ds = dataset if dataset is not None else generate_sequence_dataset(cfg)
    train, test = ds.split(cfg.train_frac)
    trainer = SeqTrainer(cfg, mode=mode, hw=hw, seed=seed)
    return trainer.fit(train, test)
