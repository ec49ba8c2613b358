"""Evaluation protocol pieces: frame expansion, rebalancing, folds, Wilcoxon test."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .activity import ActivityLabel, Bout
from .errors import CoverageError, EvaluationError, OversamplingError, UndefinedTestError


@dataclass
class FrameSeries:
    labels: np.ndarray  # one ActivityLabel code per 1-s frame
    source: str = "truth"  # or "prediction"

    def __len__(self) -> int:
        return len(self.labels)


def expand_frames(bouts: list[Bout], duration_s: float, source: str = "truth") -> FrameSeries:
    """Label each 1-s frame by the bout containing its midpoint (frames = floor(duration))."""
    n = int(math.floor(duration_s + 1e-9))
    labels = np.full(n, -1, dtype=np.int64)
    mids = np.arange(n) + 0.5
    for b in bouts:
        i0 = int(np.searchsorted(mids, b.start_s, side="left"))
        i1 = int(np.searchsorted(mids, b.end_s, side="left"))
        labels[i0:i1] = int(b.label)
    gaps = np.flatnonzero(labels < 0)
    if gaps.size:
        raise CoverageError(f"{gaps.size} frames not covered by any bout (first at {gaps[0]} s)")
    return FrameSeries(labels, source)


# -- class rebalancing -----------------------------------------------------------

def adasyn(x: np.ndarray, y: np.ndarray, minority: int, n_new: int, k: int = 5,
           rng: np.random.Generator | None = None) -> np.ndarray:
    """Adaptive synthetic samples for class ``minority``.

    Each minority sample's share of the new samples is proportional to the
    fraction of other-class points among its k nearest neighbours; new points
    interpolate towards a random one of its k nearest minority neighbours.
    """
    rng = rng or np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    xm = x[y == minority]
    m = len(xm)
    if m < k + 1:
        raise OversamplingError(f"minority class has {m} samples, need at least k+1 = {k + 1}")
    if n_new <= 0:
        return np.zeros((0, x.shape[1]))
    # k neighbours in the full set, excluding the point itself
    _, nn_all = cKDTree(x).query(xm, k=k + 1)
    minority_idx = np.flatnonzero(y == minority)
    ratio = np.empty(m)
    for i in range(m):
        neigh = [j for j in nn_all[i] if j != minority_idx[i]][:k]
        ratio[i] = np.count_nonzero(y[neigh] != minority) / k
    weights = ratio / ratio.sum() if ratio.sum() > 0 else np.full(m, 1.0 / m)
    # largest-remainder rounding so exactly n_new samples are produced
    raw = weights * n_new
    g = np.floor(raw).astype(int)
    short = n_new - g.sum()
    if short:
        order = np.lexsort((np.arange(m), -(raw - g)))
        g[order[:short]] += 1
    _, nn_min = cKDTree(xm).query(xm, k=k + 1)
    out = np.empty((n_new, x.shape[1]))
    pos = 0
    for i in range(m):
        if g[i] == 0:
            continue
        neigh = [j for j in nn_min[i] if j != i][:k]
        picks = rng.choice(neigh, size=g[i])
        lam = rng.uniform(0.0, 1.0, size=(g[i], 1))
        out[pos:pos + g[i]] = xm[i] + lam * (xm[picks] - xm[i])
        pos += g[i]
    return out


@dataclass(frozen=True)
class BalancePlan:
    undersample_frac: float = 0.30  # share of the majority class removed
    oversample_frac: float = 1.00  # synthetic minority samples, relative to its count
    k: int = 5
    seed: int = 0


def rebalance(x, y, plan: BalancePlan | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Undersample the largest class, then grow the smallest with ADASYN; others untouched."""
    plan = plan or BalancePlan()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise OversamplingError("rebalancing needs at least two classes")
    rng = np.random.default_rng(plan.seed)
    majority = int(classes[np.argmax(counts)])
    minority = int(classes[np.argmin(counts)])
    maj_idx = np.flatnonzero(y == majority)
    n_drop = int(round(plan.undersample_frac * len(maj_idx)))
    drop = rng.choice(maj_idx, size=n_drop, replace=False)
    keep = np.ones(len(y), dtype=bool)
    keep[drop] = False
    x, y = x[keep], y[keep]
    n_new = int(round(plan.oversample_frac * np.count_nonzero(y == minority)))
    synth = adasyn(x, y, minority, n_new, plan.k, rng)
    return np.vstack([x, synth]), np.concatenate([y, np.full(len(synth), minority, dtype=np.int64)])


def content_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


# -- folds -------------------------------------------------------------------------

def make_folds(compositions: np.ndarray, n_folds: int = 5, seed: int = 0) -> list[list[int]]:
    """Recording-level stratified folds.

    ``compositions`` holds each recording's time share per activity. Recordings
    are grouped by their dominant activity and dealt round-robin, in order of
    decreasing dominance, so every fold gets a similar activity mix.
    """
    comp = np.asarray(compositions, dtype=np.float64)
    n = len(comp)
    if n < n_folds:
        raise EvaluationError(f"{n} recordings cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    dominant = comp.argmax(axis=1)
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    slot = 0
    for cls in range(comp.shape[1]):
        members = np.flatnonzero(dominant == cls)
        members = members[rng.permutation(len(members))]
        members = members[np.argsort(-comp[members, cls], kind="stable")]
        for r in members:
            folds[slot % n_folds].append(int(r))
            slot += 1
    return [sorted(f) for f in folds]


def composition(bouts: list[Bout], n_classes: int = len(ActivityLabel)) -> np.ndarray:
    total = np.zeros(n_classes)
    for b in bouts:
        total[int(b.label)] += b.end_s - b.start_s
    s = total.sum()
    return total / s if s > 0 else total


# -- Wilcoxon signed-rank ------------------------------------------------------------

EXACT_MAX_N = 25


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of positive differences
    p_value: float
    n: int  # nonzero differences
    method: str


def _ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_distribution(doubled_ranks: np.ndarray) -> np.ndarray:
    """Counts of each doubled W+ value over all 2**n sign patterns."""
    total = int(doubled_ranks.sum())
    dist = np.zeros(total + 1, dtype=object)
    dist[0] = 1
    for r in doubled_ranks.astype(int):
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[:len(dist) - r]
        dist = dist + shifted
    return dist


def wilcoxon_signed_rank(a, b=None, method: str = "auto") -> WilcoxonResult:
    """Two-sided paired Wilcoxon signed-rank test.

    Zero differences are dropped and tied magnitudes share average ranks. The
    exact null distribution is used up to 25 pairs, a continuity-corrected
    normal approximation (tie-corrected variance) beyond.
    """
    a = np.asarray(a, dtype=np.float64)
    d = a if b is None else a - np.asarray(b, dtype=np.float64)
    if b is not None and np.shape(a) != np.shape(b):
        raise EvaluationError("paired samples must have equal length")
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise UndefinedTestError("all paired differences are zero")
    ranks = _ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "normal"
    if method == "exact":
        doubled = np.round(2 * ranks).astype(int)
        dist = _exact_distribution(doubled)
        t = int(round(2 * w_plus))
        total = 2 ** n
        lower = sum(dist[:t + 1])
        upper = sum(dist[t:])
        p = min(1.0, 2.0 * min(lower, upper) / total)
    elif method == "normal":
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
        if var <= 0:
            raise UndefinedTestError("zero variance under the null")
        z = max(0.0, abs(w_plus - mean) - 0.5) / math.sqrt(var)
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    else:
        raise EvaluationError(f"unknown method {method!r}")
    return WilcoxonResult(w_plus, float(p), n, method)
