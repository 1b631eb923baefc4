"""Deterministic synthetic block-design task scans with known networks.

Each subject gets K nonnegative bump-shaped networks on disjoint segments of a
1-D voxel axis, a block-design paradigm and a voxel scan

    scan[t] = loadings[paradigm[t - shift]] @ networks + noise

where rows of ``loadings`` give the network activation level of each state
and time points before the paradigm starts are held at state 0 (fixation).
The hemodynamic response is modeled as the pure delay ``shift``.

With ``temporal_ambiguity`` the last two states share one loading row.  The
first always follows state 0 and the second always follows state 1, so they
can only be told apart from the preceding block.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ConfigError
from .features import extract_features, row_normalize, shift_labels

__all__ = [
    "SynthConfig",
    "SynthSubject",
    "generate",
    "generate_paradigm",
    "state_loadings",
    "ambiguity_bayes_bound",
    "bayes_bound",
    "featurize",
    "ambiguous_states",
]


@dataclass
class SynthConfig:
    n_subjects: int = 35
    t: int = 200
    k: int = 8
    s_vox: int = 160
    n_states: int = 4
    block_len_range: Tuple[int, int] = (10, 20)
    noise_sigma: float = 0.1
    hemodynamic_shift: int = 8
    temporal_ambiguity: bool = True
    seed: int = 0
    # networks whose loadings vary with the state; 0 means all of them
    informative_fns: int = 0

    def __post_init__(self):
        self.block_len_range = tuple(int(b) for b in self.block_len_range)
        self.validate()

    def validate(self):
        lo, hi = self.block_len_range
        if self.n_states < 2:
            raise ConfigError(f"n_states must be >= 2, got {self.n_states}")
        if self.temporal_ambiguity and self.n_states < 4:
            raise ConfigError("temporal_ambiguity needs n_states >= 4 "
                              "(two anchor states plus two ambiguous states)")
        if lo < 1 or hi < lo:
            raise ConfigError(f"invalid block_len_range {self.block_len_range}")
        if not 1 <= self.k <= self.s_vox:
            raise ConfigError(f"need 1 <= k <= s_vox, got k={self.k}, s_vox={self.s_vox}")
        if self.t < 1 or self.n_subjects < 0:
            raise ConfigError("t must be positive and n_subjects nonnegative")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if not 0 <= self.hemodynamic_shift < self.t:
            raise ConfigError(f"hemodynamic_shift must lie in [0, t), got {self.hemodynamic_shift}")
        if not 0 <= self.informative_fns <= self.k:
            raise ConfigError(f"informative_fns must lie in [0, k], got {self.informative_fns}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")


@dataclass
class SynthSubject:
    networks: np.ndarray   # (k, s_vox)
    scan: np.ndarray       # (t, s_vox)
    paradigm: np.ndarray   # (t,) stimulus schedule before the BOLD delay
    loadings: np.ndarray   # (n_states, k)


def ambiguous_states(cfg):
    """The two states sharing a loading row, or ``()`` when ambiguity is off."""
    if not cfg.temporal_ambiguity:
        return ()
    return (cfg.n_states - 2, cfg.n_states - 1)


def _streams(cfg):
    root = np.random.SeedSequence(cfg.seed)
    return root.spawn(cfg.n_subjects + 1)


def state_loadings(cfg, seed_seq=None):
    if seed_seq is None:
        seed_seq = _streams(cfg)[0]
    rng = np.random.default_rng(seed_seq)
    load = rng.uniform(0.0, 1.0, size=(cfg.n_states, cfg.k))
    if cfg.informative_fns:
        load[:, cfg.informative_fns:] = load[0, cfg.informative_fns:]
    if cfg.temporal_ambiguity:
        a, b = ambiguous_states(cfg)
        load[b] = load[a]
    return load


def _networks(cfg, rng):
    edges = np.floor(np.arange(cfg.k + 1) * cfg.s_vox / cfg.k).astype(int)
    v = np.zeros((cfg.k, cfg.s_vox))
    for k in range(cfg.k):
        a, b = edges[k], edges[k + 1]
        n = b - a
        center = a + n * (0.5 + rng.uniform(-0.25, 0.25))
        half_width = n * (0.6 + 0.3 * rng.uniform())
        amp = rng.uniform(0.5, 1.5)
        pos = np.arange(a, b) + 0.5
        d = np.abs(pos - center) / half_width
        v[k, a:b] = amp * np.where(d < 1, 0.5 * (1 + np.cos(np.pi * d)), 0.0)
    return v


def _units(cfg):
    if cfg.temporal_ambiguity:
        a, b = ambiguous_states(cfg)
        return [(0, a), (1, b)] + [(s,) for s in range(2, cfg.n_states - 2)]
    return [(s,) for s in range(cfg.n_states)]


def generate_paradigm(cfg, rng):
    """Block-design schedule of length ``cfg.t`` starting with a state-0 block.

    Blocks cycle through the states; each cycle visits every state once in a
    random order (ambiguous states stay glued to their anchor state) and no
    two consecutive blocks share a state.
    """
    units = _units(cfg)
    lo, hi = cfg.block_len_range
    order = []
    out = np.empty(cfg.t, dtype=np.int64)
    pos = 0
    first = True
    while pos < cfg.t:
        perm = [units[i] for i in rng.permutation(len(units))]
        if first:
            j = next(i for i, u in enumerate(perm) if u[0] == 0)
            perm.insert(0, perm.pop(j))
            first = False
        elif len(perm) > 1 and perm[0][0] == order[-1]:
            perm.append(perm.pop(0))
        for unit in perm:
            for state in unit:
                order.append(state)
                n = int(rng.integers(lo, hi + 1))
                out[pos:pos + n] = state
                pos += n
                if pos >= cfg.t:
                    return out
    return out


def _subject(cfg, loadings, seq):
    fn_seq, par_seq, noise_seq = seq.spawn(3)
    networks = _networks(cfg, np.random.default_rng(fn_seq))
    paradigm = generate_paradigm(cfg, np.random.default_rng(par_seq))
    driving = np.zeros(cfg.t, dtype=np.int64)
    s = cfg.hemodynamic_shift
    driving[s:] = paradigm[:cfg.t - s]
    scan = loadings[driving] @ networks
    if cfg.noise_sigma > 0:
        scan = scan + cfg.noise_sigma * np.random.default_rng(noise_seq).standard_normal(scan.shape)
    return SynthSubject(networks, scan, paradigm, loadings.copy())


def generate(cfg):
    """Generate ``cfg.n_subjects`` subjects, bit-reproducibly from ``cfg.seed``."""
    cfg.validate()
    streams = _streams(cfg)
    loadings = state_loadings(cfg, streams[0])
    return [_subject(cfg, loadings, seq) for seq in streams[1:]]


def featurize(subject, shift):
    """Network signatures of a subject's scan plus its delay-corrected labels."""
    f = extract_features(subject.scan, row_normalize(subject.networks))
    return f, shift_labels(subject.paradigm, shift)


def bayes_bound(label_tracks, loadings):
    """Best accuracy of any memoryless classifier at zero noise.

    Time points whose states share a loading row look identical to a
    pointwise decoder, so the best it can do within each such group is to
    answer the group's most frequent state.
    """
    loadings = np.asarray(loadings)
    counts = np.zeros(loadings.shape[0], dtype=np.int64)
    for track in label_tracks:
        counts += np.bincount(np.asarray(track), minlength=loadings.shape[0])
    total = counts.sum()
    if total == 0:
        return 1.0
    _, group = np.unique(loadings, axis=0, return_inverse=True)
    group = np.asarray(group).ravel()
    best = sum(counts[group == gid].max() for gid in np.unique(group))
    return float(best) / float(total)


def ambiguity_bayes_bound(cfg, subjects=None):
    """Pointwise accuracy ceiling on the delay-corrected labels of a generated set.

    Paradigms are regenerated from ``cfg`` unless ``subjects`` is given.
    """
    if not cfg.temporal_ambiguity:
        raise ConfigError("ambiguity_bayes_bound requires temporal_ambiguity")
    streams = _streams(cfg)
    loadings = state_loadings(cfg, streams[0])
    if subjects is None:
        paradigms = [generate_paradigm(cfg, np.random.default_rng(seq.spawn(3)[1]))
                     for seq in streams[1:]]
    else:
        paradigms = [s.paradigm for s in subjects]
    tracks = [shift_labels(p, cfg.hemodynamic_shift) for p in paradigms]
    return bayes_bound(tracks, loadings)
