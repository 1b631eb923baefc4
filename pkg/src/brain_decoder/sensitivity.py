"""Ablation sensitivity of a trained decoder and PCA of the accuracy changes."""

from dataclasses import dataclass

import numpy as np

from . import lstm
from .errors import ShapeError

__all__ = ["ablate_fn", "change_matrix", "PcaResult", "pca", "top_fns"]


def ablate_fn(f, k):
    """Copy of ``f`` with network column ``k`` set to zero."""
    f = np.array(f, dtype=np.float64)
    if f.ndim != 2:
        raise ShapeError(f"feature sequence must be 2-D, got {f.shape}")
    if not 0 <= k < f.shape[1]:
        raise ShapeError(f"network index {k} outside [0, {f.shape[1]})")
    f[:, k] = 0.0
    return f


def _accuracy(pred, y):
    return float(np.mean(np.asarray(pred) == np.asarray(y)))


def change_matrix(model, subjects, predict=None):
    """Accuracy lost per (network, subject) when that network is zeroed.

    Entry ``(k, i)`` is the accuracy on subject ``i`` with all features minus
    the accuracy with network ``k`` ablated, so positive values mark networks
    the decoder relies on.  ``predict(features, model)`` defaults to the LSTM
    decoder's :func:`~brain_decoder.lstm.predict`.
    """
    predict = predict or lstm.predict
    subjects = list(subjects)
    if not subjects:
        raise ShapeError("need at least one subject")
    K = np.asarray(subjects[0][0]).shape[1]
    out = np.empty((K, len(subjects)))
    for i, (f, y) in enumerate(subjects):
        f = np.asarray(f, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != K:
            raise ShapeError(f"subject {i} has feature shape {f.shape}, expected (T, {K})")
        if len(y) != f.shape[0]:
            raise ShapeError(f"subject {i}: {f.shape[0]} time points but {len(y)} labels")
        base = _accuracy(predict(f, model), y)
        for k in range(K):
            out[k, i] = base - _accuracy(predict(ablate_fn(f, k), model), y)
    return out


@dataclass
class PcaResult:
    components: np.ndarray  # (K, K), column j is the j-th principal direction
    variances: np.ndarray   # (K,), nonincreasing


def pca(m):
    """PCA with subjects as observations and networks as variables.

    Rows are centered across subjects and the centered ``(K, N)`` matrix is
    decomposed by SVD.  Each component is signed so its largest-magnitude
    loading is positive.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"change matrix must be 2-D, got {m.shape}")
    K, N = m.shape
    if N < 2:
        raise ShapeError(f"need at least two subjects for PCA, got {N}")
    centered = m - m.mean(axis=1, keepdims=True)
    u, s, _ = np.linalg.svd(centered, full_matrices=True)
    variances = np.zeros(K)
    variances[:s.size] = s ** 2 / (N - 1)
    lead = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[lead, np.arange(K)] < 0, -1.0, 1.0)
    return PcaResult(u * signs, variances)


def top_fns(p, n=5):
    """Indices of the ``n`` largest-magnitude loadings of the first component."""
    first = np.abs(p.components[:, 0])
    if not 0 <= n <= first.size:
        raise ShapeError(f"n={n} outside [0, {first.size}]")
    return [int(i) for i in np.argsort(-first, kind="stable")[:n]]
