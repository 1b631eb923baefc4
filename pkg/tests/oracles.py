"""Independent reference computations used by the test-suite.

Nothing here calls into the vectorized code paths it checks.
"""

import itertools
import math

import numpy as np


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_lstm_probs(features, params):
    """Two-layer LSTM plus softmax, one scalar at a time in plain Python."""

    def layer(xs, lp):
        H = lp.w_f.shape[0]
        h = [0.0] * H
        c = [0.0] * H
        out = []
        for x in xs:
            z = list(h) + list(x)
            pre = {}
            for gate in "fico":
                w = getattr(lp, f"w_{gate}")
                b = getattr(lp, f"b_{gate}")
                pre[gate] = [sum(w[r][j] * z[j] for j in range(len(z))) + b[r] for r in range(H)]
            new_c, new_h = [], []
            for r in range(H):
                f = _sig(pre["f"][r])
                i = _sig(pre["i"][r])
                g = math.tanh(pre["c"][r])
                o = _sig(pre["o"][r])
                cr = f * c[r] + i * g
                new_c.append(cr)
                new_h.append(o * math.tanh(cr))
            h, c = new_h, new_c
            out.append(h)
        return out

    feats = [list(map(float, row)) for row in np.asarray(features)]
    h2 = layer(layer(feats, params.layer1), params.layer2)
    probs = []
    for h in h2:
        logits = [sum(params.w_s[s][j] * h[j] for j in range(len(h))) + params.b_s[s]
                  for s in range(len(params.b_s))]
        m = max(logits)
        e = [math.exp(v - m) for v in logits]
        tot = sum(e)
        probs.append([v / tot for v in e])
    return np.array(probs)


def central_difference(fun, arrays, step=1e-5):
    """Central-difference gradient of ``fun()`` w.r.t. every entry of ``arrays`` (in place)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            up = fun()
            arr[idx] = orig - step
            down = fun()
            arr[idx] = orig
            g[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def relative_error(analytic, numeric, floor=1e-5):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def brute_force_wilcoxon(a, b):
    """Two-sided signed-rank p value by listing all 2**m sign patterns."""
    d = [x - y for x, y in zip(a, b) if x != y]
    m = len(d)
    if m == 0:
        return 0.0, 1.0
    absd = [abs(x) for x in d]
    ranks = []
    for v in absd:
        less = sum(1 for u in absd if u < v)
        equal = sum(1 for u in absd if u == v)
        ranks.append(less + (equal + 1) / 2.0)
    w = sum(r for r, x in zip(ranks, d) if x > 0)
    le = ge = 0
    for signs in itertools.product((0, 1), repeat=m):
        s = sum(r for r, sg in zip(ranks, signs) if sg)
        le += s <= w
        ge += s >= w
    return w, min(1.0, 2 * min(le, ge) / 2.0 ** m)


def clip_start_enumeration(n, clip_len, overlap):
    """Starts chosen by scanning every offset and keeping stride multiples plus a tail anchor."""
    stride = clip_len - overlap
    starts = [s for s in range(n) if s % stride == 0 and s + clip_len <= n]
    covered = set()
    for s in starts:
        covered.update(range(s, s + clip_len))
    if len(covered) < n:
        starts.append(n - clip_len)
    return starts


def per_state_recalls(pred, truth, n_states):
    """Recall of every state present in ``truth``, by direct counting."""
    out = []
    for s in range(n_states):
        hits = [p == s for p, t in zip(pred, truth) if t == s]
        if hits:
            out.append(sum(hits) / len(hits))
    return out


def random_params(rng, n_features, hidden, n_states, scale=0.5):
    from brain_decoder.lstm import DecoderParams

    p = DecoderParams.zeros(n_features, hidden, n_states)
    return DecoderParams.from_arrays([rng.normal(0.0, scale, a.shape) for a in p.arrays()])


def exhaustive_tree_predict(X, y, min_leaf, n_classes):
    """Gini CART over every feature and every midpoint, grown from scratch.

    Returns a function mapping one row to a class.  Deliberately slow and
    loop-based; thresholds and tie handling follow the documented rules.
    """
    X = [list(map(float, r)) for r in X]
    y = [int(v) for v in y]

    def gini(labels):
        n = len(labels)
        return 1.0 - sum((labels.count(c) / n) ** 2 for c in range(n_classes))

    def grow(idx):
        labels = [y[i] for i in idx]
        hist = [labels.count(c) for c in range(n_classes)]
        majority = hist.index(max(hist))
        if len(idx) < 2 * min_leaf or max(hist) == len(idx):
            return ("leaf", majority)
        parent = gini(labels)
        best = None
        for f in range(len(X[0])):
            values = sorted(set(X[i][f] for i in idx))
            for lo, hi in zip(values, values[1:]):
                thr = 0.5 * (lo + hi)
                left = [i for i in idx if X[i][f] <= thr]
                right = [i for i in idx if X[i][f] > thr]
                if len(left) < min_leaf or len(right) < min_leaf:
                    continue
                score = (len(left) * gini([y[i] for i in left])
                         + len(right) * gini([y[i] for i in right])) / len(idx)
                if score < parent - 1e-12 and (best is None or score < best[0]):
                    best = (score, f, thr, left, right)
        if best is None:
            return ("leaf", majority)
        _, f, thr, left, right = best
        return ("split", f, thr, grow(left), grow(right))

    root = grow(list(range(len(X))))

    def predict(row):
        node = root
        while node[0] == "split":
            node = node[3] if row[node[1]] <= node[2] else node[4]
        return node[1]

    return predict
