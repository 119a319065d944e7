"""LSTM adversary prediction from the helper node's channel history.

Fred sits near the eavesdropper, so his post-beamforming scalars carry
information about her links. A window of L slots of (h_af~, h_bf~) feeds a
single LSTM cell; a dense head emits the predicted eavesdropping equivalent
channel (re, im) and a logit for the attacker mode. The predictor is
pretrained offline on random-beam rollouts and then frozen while the policy
trains, which keeps the policy's observation process stationary.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .baselines import random_action
from .channel import ChannelParams, EveMode, equivalent_channels, evolve_ar1, init_channels
from .numerics import RngStream
from .nncore import Adam, Dense, LSTMCell, load_checkpoint, save_checkpoint


class PredictorDivergedError(RuntimeError):
    pass


@dataclass
class PredictorConfig:
    L: int = 8
    hidden: int = 64
    lr: float = 1e-3
    w_mse: float = 1.0
    w_bce: float = 1.0
    pretrain_steps: int = 50_000
    batch_size: int = 64
    rollout_slots: int = 20_000
    rollout_reset_every: int | None = None  # fresh channels every k slots
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"sequence length must be >= 1, got {self.L}")
        if self.hidden < 1 or self.batch_size < 1:
            raise ValueError("hidden and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.rollout_reset_every is not None and self.rollout_reset_every < self.L:
            raise ValueError("rollout_reset_every must be >= the window length")


@dataclass
class Rollout:
    """Per-slot Fred measurements plus ground-truth targets."""

    fred: np.ndarray  # (T, 4): re/im h_af~, re/im h_bf~
    hae: np.ndarray   # (T, 2): re/im of the true h_ae~
    xi: np.ndarray    # (T,): attacker flag 0/1


@dataclass
class PredictorDataset:
    inputs: np.ndarray   # (M, L, 4)
    targets: np.ndarray  # (M, 2)
    xi: np.ndarray       # (M,)

    def __len__(self):
        return self.inputs.shape[0]


def generate_rollout(params: ChannelParams, Pa: float, slots: int,
                     channel_rng: RngStream, beam_rng: RngStream,
                     reset_every: int | None = None) -> Rollout:
    """Random-beam rollout with logged ground truth for dataset building.

    reset_every draws fresh channels every k slots, matching episodic
    deployments; without it one slowly-mixing trajectory may cover only a
    handful of distinct channel states.
    """
    state = init_channels(params, channel_rng)
    fred = np.empty((slots, 4))
    hae = np.empty((slots, 2))
    xi = np.empty(slots)
    for t in range(slots):
        if reset_every is not None and t > 0 and t % reset_every == 0:
            state = init_channels(params, channel_rng)
        beams = random_action(params.n, beam_rng)
        h_ab, h_ae, h_af, h_bf = equivalent_channels(state, beams, Pa)
        fred[t] = (h_af.real, h_af.imag, h_bf.real, h_bf.imag)
        hae[t] = (h_ae.real, h_ae.imag)
        xi[t] = 1.0 if state.xi is EveMode.EAVESDROPPING else 0.0
        state = evolve_ar1(state, params, channel_rng)
    return Rollout(fred, hae, xi)


def build_dataset(rollout: Rollout, config: PredictorConfig,
                  rng: RngStream, segment_len: int | None = None):
    """Sliding windows over the rollout, split train/validation by seed.

    The targets are the ground truth at the final slot of each window; a
    rollout of T slots yields T - L + 1 windows. segment_len (matching the
    rollout's reset_every) drops windows that straddle a channel reset.
    """
    T = rollout.fred.shape[0]
    L = config.L
    if T < L:
        raise ValueError(f"rollout of {T} slots is shorter than window {L}")
    m = T - L + 1
    inputs = np.empty((m, L, 4))
    for k in range(L):
        inputs[:, k, :] = rollout.fred[k:k + m]
    targets = rollout.hae[L - 1:]
    xi = rollout.xi[L - 1:]
    if segment_len is not None:
        starts = np.arange(m)
        keep = (starts // segment_len) == ((starts + L - 1) // segment_len)
        inputs, targets, xi = inputs[keep], targets[keep], xi[keep]
        m = inputs.shape[0]
    order = rng.permutation(m)
    n_val = max(1, int(round(m * config.val_fraction)))
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    train = PredictorDataset(inputs[train_idx], targets[train_idx], xi[train_idx])
    val = PredictorDataset(inputs[val_idx], targets[val_idx], xi[val_idx])
    return train, val


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


class AdversaryPredictor:
    """Single LSTM layer over the Fred window plus a dense joint head.

    input_scale is a fixed feature normalization (typically 1/std of the
    training inputs) applied before the cell; it travels with the
    checkpoint so inference matches training.
    """

    def __init__(self, config: PredictorConfig, rng: RngStream,
                 input_scale: float = 1.0):
        self.config = config
        self.window_len = config.L
        self.input_scale = float(input_scale)
        self.cell = LSTMCell(4, config.hidden, rng)
        self.head = Dense(config.hidden, 3, rng)

    def forward(self, windows: np.ndarray):
        """(B, L, 4) -> (B, 3) raw outputs plus per-step caches."""
        b = windows.shape[0]
        h = np.zeros((b, self.config.hidden))
        c = np.zeros((b, self.config.hidden))
        caches = []
        scaled = self.input_scale * windows
        for t in range(self.window_len):
            h, c, cache = self.cell.forward_step(scaled[:, t, :], h, c)
            caches.append(cache)
        return self.head.forward(h), caches

    def predict(self, window: np.ndarray) -> tuple[complex, float]:
        """Single-window inference: (predicted h_ae~, attacker probability)."""
        window = np.asarray(window, dtype=float)
        if window.shape != (self.window_len, 4):
            raise ValueError(
                f"expected window of shape ({self.window_len}, 4), got {window.shape}"
            )
        out, _ = self.forward(window[None])
        xi_hat = float(_sigmoid(out[0, 2:3])[0])
        return complex(out[0, 0], out[0, 1]), xi_hat

    def zero_grad(self):
        self.cell.zero_grad()
        self.head.zero_grad()

    def param_list(self):
        return self.cell.param_list() + self.head.param_list()

    def grad_list(self):
        return self.cell.grad_list() + self.head.grad_list()

    def named_params(self):
        out = {"input_scale": np.array(self.input_scale)}
        for k in sorted(self.cell.params):
            out[f"cell.{k}"] = self.cell.params[k]
        for k in sorted(self.head.params):
            out[f"head.{k}"] = self.head.params[k]
        return out

    def load_named_params(self, named: dict[str, np.ndarray]):
        self.input_scale = float(named["input_scale"])
        for k in sorted(self.cell.params):
            self.cell.params[k][...] = named[f"cell.{k}"]
        for k in sorted(self.head.params):
            self.head.params[k][...] = named[f"head.{k}"]

    def loss_and_grads(self, windows, targets, xi):
        """Joint loss w_mse * MSE + w_bce * BCE and full BPTT gradients.

        MSE is the mean squared complex error; BCE is in nats. Gradients are
        left accumulated on the cell and head. Returns (loss, mse, bce).
        """
        cfg = self.config
        b = windows.shape[0]
        out, caches = self.forward(windows)
        diff = out[:, :2] - targets
        mse = float(np.mean((diff * diff).sum(axis=1)))
        logit = out[:, 2]
        p = _sigmoid(logit)
        bce = float(np.mean(_softplus(logit) - logit * xi))
        loss = cfg.w_mse * mse + cfg.w_bce * bce
        d_out = np.empty_like(out)
        d_out[:, :2] = cfg.w_mse * 2.0 * diff / b
        d_out[:, 2] = cfg.w_bce * (p - xi) / b
        self.zero_grad()
        gh = self.head.backward(d_out)
        gc = np.zeros_like(gh)
        for cache in reversed(caches):
            _, gh, gc = self.cell.backward_step(cache, gh, gc)
        return loss, mse, bce


@dataclass
class PredictorMetrics:
    val_mse: float
    val_bce: float
    mode_accuracy: float
    channel_r2: float
    base_rate: float


def evaluate_predictor(predictor: AdversaryPredictor,
                       data: PredictorDataset) -> PredictorMetrics:
    out, _ = predictor.forward(data.inputs)
    diff = out[:, :2] - data.targets
    mse = float(np.mean((diff * diff).sum(axis=1)))
    logit = out[:, 2]
    p = _sigmoid(logit)
    bce = float(np.mean(_softplus(logit) - logit * data.xi))
    acc = float(np.mean((p >= 0.5) == (data.xi >= 0.5)))
    centered = data.targets - data.targets.mean(axis=0)
    ss_tot = float((centered * centered).sum())
    ss_err = float((diff * diff).sum())
    r2 = 1.0 - ss_err / ss_tot if ss_tot > 0 else 0.0
    base = max(float(np.mean(data.xi)), 1.0 - float(np.mean(data.xi)))
    return PredictorMetrics(mse, bce, acc, r2, base)


def train_predictor(train: PredictorDataset, val: PredictorDataset,
                    config: PredictorConfig, rng: RngStream,
                    predictor: AdversaryPredictor | None = None):
    """Minibatch Adam on the joint loss; returns (predictor, metrics)."""
    if len(train) == 0:
        raise ValueError("empty training set")
    if predictor is None:
        scale = 1.0 / max(float(train.inputs.std()), 1e-12)
        predictor = AdversaryPredictor(config, rng.child(0x1), input_scale=scale)
    opt = Adam(predictor.param_list(), config.lr)
    sample_rng = rng.child(0x2)
    for step in range(config.pretrain_steps):
        idx = sample_rng.integers(0, len(train), size=config.batch_size)
        loss, _, _ = predictor.loss_and_grads(
            train.inputs[idx], train.targets[idx], train.xi[idx]
        )
        if not math.isfinite(loss):
            raise PredictorDivergedError(f"non-finite loss at step {step}")
        opt.step(predictor.grad_list())
    metrics = evaluate_predictor(predictor, val)
    return predictor, metrics


def save_predictor(path, predictor: AdversaryPredictor):
    save_checkpoint(path, predictor.named_params())


def load_predictor(path, config: PredictorConfig) -> AdversaryPredictor:
    predictor = AdversaryPredictor(config, RngStream(0))
    predictor.load_named_params(load_checkpoint(path))
    return predictor


def save_dataset_csv(path, rollout: Rollout):
    """Cache a rollout as CSV rows (slot, 4 inputs, 2 targets, xi)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "re_haf", "im_haf", "re_hbf", "im_hbf",
                         "re_hae", "im_hae", "xi"])
        for t in range(rollout.fred.shape[0]):
            writer.writerow(
                [t]
                + [repr(float(v)) for v in rollout.fred[t]]
                + [repr(float(v)) for v in rollout.hae[t]]
                + [int(rollout.xi[t])]
            )


def load_dataset_csv(path) -> Rollout:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != 8:
            raise ValueError(f"unexpected dataset header: {header}")
        rows = [row for row in reader]
    fred = np.array([[float(v) for v in row[1:5]] for row in rows])
    hae = np.array([[float(v) for v in row[5:7]] for row in rows])
    xi = np.array([float(row[7]) for row in rows])
    return Rollout(fred, hae, xi)
