"""Random forest of Gini CART trees over per-timepoint feature vectors.

Trees are grown on bootstrap samples with ``ceil(sqrt(K))`` candidate
features per node and thresholds at midpoints between consecutive distinct
values.  A node becomes a leaf when it is pure, holds fewer than
``2 * min_leaf`` samples, or none of its candidate splits lowers the
weighted Gini impurity while leaving ``min_leaf`` samples on both sides.
"""

from dataclasses import dataclass, field
import io
import itertools
import logging
import math
import struct

import numpy as np

from .errors import CheckpointError, ConfigError, ShapeError
from .features import check_labels

__all__ = [
    "RfConfig",
    "DecisionTree",
    "Forest",
    "fit_tree",
    "fit_forest",
    "predict_forest",
    "forest_accuracy",
    "grid_search",
    "DEFAULT_TREES",
    "DEFAULT_MIN_LEAF",
    "dumps_forest",
    "loads_forest",
    "save_forest",
    "load_forest",
]

log = logging.getLogger(__name__)

DEFAULT_TREES = (100, 200, 500, 1000)
DEFAULT_MIN_LEAF = (3, 5, 10)

FOREST_MAGIC = b"RFRST1"
FOREST_VERSION = 1

LEAF = -1


@dataclass
class RfConfig:
    n_trees: int = 100
    min_leaf: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ConfigError(f"need n_trees >= 1 and min_leaf >= 1, got {self}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature[n] == -1`` marks a leaf."""

    feature: np.ndarray    # (n_nodes,) int64
    threshold: np.ndarray  # (n_nodes,) float64
    left: np.ndarray       # (n_nodes,) int64
    right: np.ndarray      # (n_nodes,) int64
    counts: np.ndarray     # (n_nodes, n_classes) int64, training histogram per node

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def is_leaf(self):
        return self.feature == LEAF

    def apply(self, X):
        """Index of the leaf reached by every row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = ~self.is_leaf[node]
        rows = np.arange(len(X))
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active[r] = ~self.is_leaf[node[r]]
        return node

    def predict(self, X):
        # argmax breaks ties toward the lowest class
        return np.argmax(self.counts[self.apply(X)], axis=1)


@dataclass
class Forest:
    trees: list
    n_classes: int
    n_features: int
    feature_subsample: int
    config: RfConfig = field(default_factory=RfConfig)

    def votes(self, X):
        X = _as_rows(X, self.n_features)
        votes = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict(X)), 1)
        return votes

    def predict(self, X):
        return np.argmax(self.votes(X), axis=1)


def _as_rows(X, n_features):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ShapeError(f"expected rows with {n_features} features, got shape {X.shape}")
    return X


def _gini_from_counts(counts, n):
    return 1.0 - np.sum((counts / n) ** 2, axis=-1)


def _best_split(X, y_onehot, idx, features, min_leaf, parent_gini):
    """Best (feature, threshold, gain) among ``features`` or ``None``."""
    n = len(idx)
    best = None
    best_score = parent_gini
    sizes_left = np.arange(1, n)
    ok_size = (sizes_left >= min_leaf) & (n - sizes_left >= min_leaf)
    if not ok_size.any():
        return None
    for f in features:
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        left = np.cumsum(y_onehot[idx[order]], axis=0)[:-1]
        total = left[-1] + y_onehot[idx[order[-1]]]
        right = total - left
        valid = ok_size & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        nl = sizes_left[valid].astype(np.float64)
        nr = n - nl
        g = (nl * _gini_from_counts(left[valid], nl[:, None])
             + nr * _gini_from_counts(right[valid], nr[:, None])) / n
        j = int(np.argmin(g))
        if g[j] < best_score - 1e-12:
            pos = np.flatnonzero(valid)[j]
            best_score = g[j]
            best = (int(f), 0.5 * (xs[pos] + xs[pos + 1]), parent_gini - g[j])
    return best


def fit_tree(X, y, n_classes, min_leaf, n_candidates, rng, sample=None):
    """Grow one CART tree on the rows ``sample`` (all rows when omitted)."""
    K = X.shape[1]
    onehot = np.eye(n_classes, dtype=np.int64)[y]
    if sample is None:
        sample = np.arange(len(X))
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    stack = [(new_node(sample), sample)]
    while stack:
        node, idx = stack.pop()
        c = counts[node]
        n = len(idx)
        if n < 2 * min_leaf or np.count_nonzero(c) <= 1:
            continue
        parent = float(_gini_from_counts(c, n))
        cand = rng.choice(K, size=min(n_candidates, K), replace=False)
        split = _best_split(X, onehot, idx, cand, min_leaf, parent)
        if split is None:
            continue
        f, thr, _ = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.array(counts, dtype=np.int64))


def fit_forest(rows, labels, cfg, n_classes=None):
    """Fit ``cfg.n_trees`` bootstrap trees with per-tree seeded generators."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ShapeError(f"need a nonempty 2-D feature matrix, got shape {X.shape}")
    y = check_labels(labels, n_classes)
    if y.shape[0] != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if X.shape[0] < cfg.min_leaf:
        raise ShapeError(f"{X.shape[0]} rows is fewer than min_leaf={cfg.min_leaf}")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    K = X.shape[1]
    m = math.ceil(math.sqrt(K))
    trees = []
    for seq in np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees):
        rng = np.random.default_rng(seq)
        sample = rng.integers(0, len(X), size=len(X))
        trees.append(fit_tree(X, y, n_classes, cfg.min_leaf, m, rng, sample))
    return Forest(trees, n_classes, K, m, cfg)


def predict_forest(forest, rows):
    """Plurality vote over trees; a single row gives a scalar state."""
    rows = np.asarray(rows, dtype=np.float64)
    pred = forest.predict(rows)
    return int(pred[0]) if rows.ndim == 1 else pred


def forest_accuracy(forest, subjects):
    """Per-timepoint accuracy pooled over ``(features, labels)`` sequences."""
    correct = total = 0
    for f, y in subjects:
        correct += int(np.sum(forest.predict(f) == np.asarray(y)))
        total += len(y)
    return correct / total


def _stack(subjects):
    X = np.concatenate([np.asarray(f, dtype=np.float64) for f, _ in subjects])
    y = np.concatenate([np.asarray(l) for _, l in subjects])
    return X, y


def grid_search(train, val, trees=DEFAULT_TREES, min_leaf=DEFAULT_MIN_LEAF, seed=0,
                n_classes=None):
    """Select ``(n_trees, min_leaf)`` by validation accuracy.

    ``train`` and ``val`` are sequences of ``(features, labels)`` pairs.
    Ties prefer fewer trees, then the larger minimum leaf size.

    Returns
    -------
    best_cfg : RfConfig
    forest : Forest
    scores : list of (RfConfig, float)
        Validation accuracy of every grid point, in fit order.
    """
    if not val:
        raise ShapeError("validation set is empty")
    if not trees or not min_leaf:
        raise ConfigError("empty hyperparameter grid")
    X, y = _stack(train)
    if n_classes is None:
        n_classes = int(max(y.max(), max(np.max(l) for _, l in val))) + 1
    scores = []
    best = None
    for n_trees, leaf in itertools.product(sorted(trees), sorted(min_leaf, reverse=True)):
        cfg = RfConfig(n_trees, leaf, seed)
        forest = fit_forest(X, y, cfg, n_classes)
        acc = forest_accuracy(forest, val)
        log.info("forest n_trees=%d min_leaf=%d val=%.4f", n_trees, leaf, acc)
        scores.append((cfg, acc))
        if best is None or acc > best[1]:
            best = (cfg, acc, forest)
    return best[0], best[2], scores


def dumps_forest(forest):
    """Serialize to the ``RFRST1`` layout.

    Header: magic, version byte, then u32 n_classes, n_features,
    feature_subsample, n_trees.  Each tree: u32 node count, then per node a
    kind byte (0 leaf, 1 split), u32 feature, f64 threshold, u32 left,
    u32 right and ``n_classes`` u32 histogram counts.  Leaves store zeros
    for feature and children.
    """
    buf = io.BytesIO()
    buf.write(FOREST_MAGIC)
    buf.write(struct.pack("<B", FOREST_VERSION))
    buf.write(struct.pack("<4I", forest.n_classes, forest.n_features,
                          forest.feature_subsample, len(forest.trees)))
    rec = struct.Struct(f"<BIdII{forest.n_classes}I")
    for tree in forest.trees:
        buf.write(struct.pack("<I", tree.n_nodes))
        for n in range(tree.n_nodes):
            leaf = tree.feature[n] == LEAF
            buf.write(rec.pack(0 if leaf else 1,
                               0 if leaf else int(tree.feature[n]),
                               float(tree.threshold[n]),
                               0 if leaf else int(tree.left[n]),
                               0 if leaf else int(tree.right[n]),
                               *(int(c) for c in tree.counts[n])))
    return buf.getvalue()


def loads_forest(data):
    if data[:len(FOREST_MAGIC)] != FOREST_MAGIC:
        raise CheckpointError("bad forest checkpoint magic")
    pos = len(FOREST_MAGIC)
    if len(data) <= pos or data[pos] != FOREST_VERSION:
        raise CheckpointError("unsupported forest checkpoint version")
    pos += 1
    try:
        n_classes, n_features, m, n_trees = struct.unpack_from("<4I", data, pos)
        pos += 16
        rec = struct.Struct(f"<BIdII{n_classes}I")
        trees = []
        for _ in range(n_trees):
            (n_nodes,) = struct.unpack_from("<I", data, pos)
            pos += 4
            feature = np.full(n_nodes, LEAF, dtype=np.int64)
            threshold = np.zeros(n_nodes)
            left = np.full(n_nodes, LEAF, dtype=np.int64)
            right = np.full(n_nodes, LEAF, dtype=np.int64)
            counts = np.zeros((n_nodes, n_classes), dtype=np.int64)
            for n in range(n_nodes):
                kind, f, thr, l, r, *hist = rec.unpack_from(data, pos)
                pos += rec.size
                if kind == 1:
                    if f >= n_features or l >= n_nodes or r >= n_nodes:
                        raise CheckpointError(f"node {n} references out-of-range data")
                    feature[n], left[n], right[n] = f, l, r
                elif kind != 0:
                    raise CheckpointError(f"unknown node kind {kind}")
                threshold[n] = thr
                counts[n] = hist
            trees.append(DecisionTree(feature, threshold, left, right, counts))
    except struct.error as exc:
        raise CheckpointError(f"truncated forest checkpoint: {exc}") from None
    if pos != len(data):
        raise CheckpointError("trailing bytes after forest checkpoint")
    return Forest(trees, n_classes, n_features, m, RfConfig(max(n_trees, 1), 1, 0))


def save_forest(path, forest):
    with open(path, "wb") as fh:
        fh.write(dumps_forest(forest))


def load_forest(path):
    with open(path, "rb") as fh:
        return loads_forest(fh.read())
