"""Clip-based mini-batch training of the LSTM decoder.

Training subjects are cropped into fixed-length overlapping clips.  Each step
draws a batch of clips uniformly with replacement, averages the cross-entropy
gradient over the batch and applies one ADAM update under a step-decay
learning rate.  Every ``eval_every`` steps the current parameters are scored
on the full-length validation sequences; the best-scoring parameters are kept
and training stops after ``patience`` evaluations without improvement.
"""

from dataclasses import dataclass, fields
from decimal import Decimal
import logging
from typing import NamedTuple

import numpy as np

from . import lstm
from .errors import ConfigError, NumericError, ShapeError
from .features import check_labels

__all__ = [
    "TrainConfig",
    "Clip",
    "AdamMoments",
    "LogEntry",
    "make_clips",
    "lr_at",
    "adam_step",
    "sequence_accuracy",
    "train",
]

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    clip_len: int = 40
    overlap: int = 20
    base_lr: float = 0.001
    lr_decay: float = 0.1
    decay_every: int = 50_000
    max_steps: int = 200_000
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 1_000
    patience: int = 20
    seed: int = 0
    hidden_size: int = lstm.DEFAULT_HIDDEN
    # global-norm gradient cap; 0 disables it
    clip_norm: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.overlap < self.clip_len:
            raise ConfigError(f"need 0 < overlap < clip_len, got overlap={self.overlap}, "
                              f"clip_len={self.clip_len}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.decay_every < 1 or self.eval_every < 1:
            raise ConfigError("decay_every and eval_every must be >= 1")
        if self.max_steps < 0 or self.patience < 0 or self.seed < 0:
            raise ConfigError("max_steps, patience and seed must be nonnegative")
        if self.base_lr <= 0 or self.adam_eps <= 0 or self.clip_norm < 0:
            raise ConfigError("base_lr and adam_eps must be positive, clip_norm nonnegative")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("ADAM betas must lie in [0, 1)")
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be >= 1")


@dataclass
class Clip:
    features: np.ndarray
    labels: np.ndarray
    subject_id: object
    start: int


@dataclass
class AdamMoments:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(a) for a in params.arrays()],
                   [np.zeros_like(a) for a in params.arrays()], 0)


class LogEntry(NamedTuple):
    step: int
    lr: float
    train_loss: float
    val_metric: float


def clip_starts(n, clip_len, overlap):
    """Start offsets of the clips covering ``[0, n)``."""
    if n < clip_len:
        raise ShapeError(f"sequence length {n} is shorter than the clip length {clip_len}")
    stride = clip_len - overlap
    starts = list(range(0, n - clip_len + 1, stride))
    if starts[-1] + clip_len < n:
        starts.append(n - clip_len)
    return starts


def make_clips(f, labels, clip_len=40, overlap=20, subject_id=None):
    """Crop a feature sequence and its labels into overlapping clips.

    Clips start every ``clip_len - overlap`` points; when the last of these
    stops short of the end, one more clip anchored at ``T - clip_len`` is
    added so every time point is covered.
    """
    f = np.asarray(f, dtype=np.float64)
    labels = check_labels(labels)
    if f.ndim != 2 or labels.shape[0] != f.shape[0]:
        raise ShapeError(f"features {f.shape} and labels {labels.shape} disagree in length")
    if not 0 < overlap < clip_len:
        raise ConfigError(f"need 0 < overlap < clip_len, got {overlap}, {clip_len}")
    return [Clip(f[s:s + clip_len], labels[s:s + clip_len], subject_id, s)
            for s in clip_starts(f.shape[0], clip_len, overlap)]


def lr_at(step, cfg):
    """Step-decay schedule: ``base_lr * lr_decay ** (step // decay_every)``.

    The product is formed in decimal from the shortest repr of each setting and
    rounded once, so 0.001 decayed by 0.1 gives exactly 1e-05 rather than
    1.0000000000000003e-05.
    """
    k = int(step) // cfg.decay_every
    return float(Decimal(repr(float(cfg.base_lr))) * Decimal(repr(float(cfg.lr_decay))) ** k)


def adam_step(params, grads, moments, cfg):
    """One bias-corrected ADAM update.

    The step counter is incremented first; the update uses the learning rate
    of step ``t - 1`` so the very first update runs at ``base_lr``.
    Returns new ``(params, moments)``; the inputs are not modified.
    """
    g_arrays = grads.arrays()
    for name, g in zip(lstm.TENSOR_ORDER, g_arrays):
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    t = moments.t + 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    lr = lr_at(t - 1, cfg)
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), g_arrays, moments.m, moments.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps))
        new_m.append(m)
        new_v.append(v)
    for name, p in zip(lstm.TENSOR_ORDER, new_p):
        if not np.all(np.isfinite(p)):
            raise NumericError(f"parameter {name} became non-finite")
    return lstm.DecoderParams.from_arrays(new_p), AdamMoments(new_m, new_v, t)


def sequence_accuracy(params, subjects):
    """Per-timepoint accuracy pooled over full-length sequences."""
    correct = total = 0
    for f, y in subjects:
        pred = lstm.predict(f, params)
        correct += int(np.sum(pred == np.asarray(y)))
        total += len(y)
    return correct / total


def _clip_grads(grads, max_norm):
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return lstm.DecoderParams.from_arrays([g * scale for g in grads.arrays()])


def train(train_subjects, val_subjects, cfg=None, n_states=None, params=None):
    """Fit a decoder with early stopping.

    Parameters
    ----------
    train_subjects, val_subjects : sequence of (features, labels)
        Full-length ``(T, K)`` feature sequences with their state tracks.
    cfg : TrainConfig, optional
    n_states : int, optional
        Number of brain states; inferred from the labels when omitted.
    params : DecoderParams, optional
        Starting point; freshly initialized from ``cfg.seed`` otherwise.

    Returns
    -------
    best : DecoderParams
        Parameters with the highest validation accuracy seen.
    history : list of LogEntry
        One entry per evaluation.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    if not val_subjects:
        raise ShapeError("validation set is empty")
    clips = []
    for sid, (f, y) in enumerate(train_subjects):
        clips.extend(make_clips(f, y, cfg.clip_len, cfg.overlap, subject_id=sid))
    if not clips:
        raise ShapeError("no training clips")
    X = np.stack([c.features for c in clips])
    Y = np.stack([c.labels for c in clips])
    if n_states is None:
        n_states = int(max(Y.max(), max(np.max(y) for _, y in val_subjects))) + 1
    check_labels(Y.ravel(), n_states)

    init_seq, sample_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    if params is None:
        params = lstm.init_params(X.shape[2], n_states, cfg.hidden_size,
                                  rng=np.random.default_rng(init_seq))
    sampler = np.random.default_rng(sample_seq)
    moments = AdamMoments.zeros_like(params)

    best, best_metric = params.copy(), -np.inf
    history = []
    since_best = 0
    running, n_running = 0.0, 0
    for step in range(cfg.max_steps):
        idx = sampler.integers(0, len(clips), size=cfg.batch_size)
        loss, grads = lstm.loss_and_grad(X[idx], Y[idx], params)
        if cfg.clip_norm > 0:
            grads = _clip_grads(grads, cfg.clip_norm)
        lr = lr_at(step, cfg)
        params, moments = adam_step(params, grads, moments, cfg)
        running += loss
        n_running += 1
        done = step + 1
        if done % cfg.eval_every and done != cfg.max_steps:
            continue
        metric = sequence_accuracy(params, val_subjects)
        history.append(LogEntry(done, lr, running / n_running, metric))
        log.info("step %d lr %.3g loss %.5f val %.4f", done, lr, running / n_running, metric)
        running, n_running = 0.0, 0
        if metric > best_metric:
            best, best_metric, since_best = params.copy(), metric, 0
        else:
            since_best += 1
        if since_best >= cfg.patience:
            break
    return best, history


def config_fields(cls):
    """``{name: type}`` for a config dataclass, used by the file and CLI parsers."""
    return {f.name: f.type for f in fields(cls)}
