"""Functional-network signatures and BOLD-delay label alignment.

A set of K functional networks is stored as a ``(K, n_voxels)`` array of
nonnegative loadings.  Projecting a ``(T, n_voxels)`` scan onto the
row-normalized networks gives a ``(T, K)`` feature sequence in which every
entry is the loading-weighted mean BOLD signal inside one network.
"""

import numpy as np

from .errors import NumericError, ShapeError

__all__ = ["row_normalize", "extract_features", "shift_labels", "check_labels"]

DEFAULT_SHIFT = 8


def row_normalize(v):
    """Scale every row of a nonnegative network matrix to sum to one.

    Parameters
    ----------
    v : array_like, shape (K, n_voxels)
        Nonnegative network loadings.

    Returns
    -------
    ndarray, shape (K, n_voxels)
        ``v`` divided row-wise by its row sums.

    Raises
    ------
    NumericError
        If a row holds a non-finite or negative entry, or sums to zero.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2:
        raise ShapeError(f"network matrix must be 2-D, got shape {v.shape}")
    for k, row in enumerate(v):
        if not np.all(np.isfinite(row)):
            raise NumericError(f"network row {k} has a non-finite entry")
        if np.any(row < 0):
            raise NumericError(f"network row {k} has a negative entry")
    sums = v.sum(axis=1)
    bad = np.flatnonzero(sums <= 0)
    if bad.size:
        raise NumericError(f"network row {bad[0]} has sum {sums[bad[0]]!r}; cannot normalize")
    return v / sums[:, None]


def extract_features(d, v_n):
    """Project a voxel scan onto row-normalized networks: ``d @ v_n.T``."""
    d = np.asarray(d, dtype=np.float64)
    v_n = np.asarray(v_n, dtype=np.float64)
    if d.ndim != 2 or v_n.ndim != 2 or d.shape[1] != v_n.shape[1]:
        raise ShapeError(
            f"scan shape {d.shape} does not match network shape {v_n.shape} "
            "(voxel counts must agree)"
        )
    if not np.all(np.isfinite(d)):
        raise NumericError("scan contains non-finite values")
    return d @ v_n.T


def check_labels(labels, n_states=None):
    """Return ``labels`` as an int64 vector, validating the range if ``n_states`` is given."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ShapeError(f"label track must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ShapeError("label track has non-integer entries")
    arr = arr.astype(np.int64)
    if arr.size and arr.min() < 0:
        raise ShapeError(f"label {arr.min()} is negative")
    if n_states is not None and arr.size and arr.max() >= n_states:
        raise ShapeError(f"label {arr.max()} outside [0, {n_states})")
    return arr


def shift_labels(paradigm, shift=DEFAULT_SHIFT):
    """Delay a task paradigm by ``shift`` time points.

    ``out[t] = paradigm[t - shift]`` for ``t >= shift``; the first ``shift``
    entries repeat ``paradigm[0]``.  The length is unchanged.
    """
    paradigm = check_labels(paradigm)
    n = paradigm.size
    shift = int(shift)
    if shift < 0:
        raise ShapeError(f"shift must be nonnegative, got {shift}")
    if shift >= n:
        raise ShapeError(f"shift {shift} must be smaller than the track length {n}")
    if shift == 0:
        return paradigm.copy()
    out = np.empty_like(paradigm)
    out[:shift] = paradigm[0]
    out[shift:] = paradigm[:n - shift]
    return out
