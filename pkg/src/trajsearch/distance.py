"""Pairwise trajectory distances and the normalized distance matrix.

Two curve metrics are provided, discrete Fréchet and Hausdorff, both under
the Euclidean ground metric in the meters frame. All comparisons inside the
kernels run on squared distances (max/min are monotone in the square), with
a single square root at the end; this keeps results bit-identical to naive
oracles that do the same.

The normalized matrix applies a row-wise softmax of exp(-dist): entry (i, j)
is 1 minus the share of exp(-dist(i, j)) in row i's total, self term
included. Raw meter distances are divided by the dataset median pairwise
distance first so the exponentials neither underflow nor saturate; the
divisor is stored alongside the matrix.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InputError, NumericError

log = logging.getLogger(__name__)

KINDS = ("frechet", "hausdorff")
KIND_TAGS = {"frechet": 0, "hausdorff": 1}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}


@dataclass(frozen=True)
class RawDistanceMatrix:
    """Dense symmetric n x n matrix of trajectory distances in meters."""

    values: np.ndarray
    kind: str

    @property
    def n(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class DistanceMatrix:
    """Row-softmax-normalized distances, entries in [0, 1).

    Rows of (1 - values) sum to 1. Not symmetric in general; consumers that
    need symmetry average with the transpose (see symmetrized()).
    """

    values: np.ndarray
    kind: str
    scale_divisor: float

    @property
    def n(self):
        return self.values.shape[0]


@njit(cache=True, nogil=True)
def _sq_frechet(a, b):
    la, lb = a.shape[0], b.shape[0]
    prev = np.empty(lb)
    cur = np.empty(lb)
    dx = a[0, 0] - b[0, 0]
    dy = a[0, 1] - b[0, 1]
    prev[0] = dx * dx + dy * dy
    for j in range(1, lb):
        dx = a[0, 0] - b[j, 0]
        dy = a[0, 1] - b[j, 1]
        d = dx * dx + dy * dy
        prev[j] = max(prev[j - 1], d)
    for i in range(1, la):
        dx = a[i, 0] - b[0, 0]
        dy = a[i, 1] - b[0, 1]
        d = dx * dx + dy * dy
        cur[0] = max(prev[0], d)
        for j in range(1, lb):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            d = dx * dx + dy * dy
            m = min(cur[j - 1], min(prev[j - 1], prev[j]))
            cur[j] = max(m, d)
        prev, cur = cur, prev
    return prev[lb - 1]


@njit(cache=True, nogil=True)
def _sq_hausdorff(a, b):
    best = 0.0
    for i in range(a.shape[0]):
        m = np.inf
        for j in range(b.shape[0]):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            d = dx * dx + dy * dy
            if d < m:
                m = d
        if m > best:
            best = m
    for j in range(b.shape[0]):
        m = np.inf
        for i in range(a.shape[0]):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            d = dx * dx + dy * dy
            if d < m:
                m = d
        if m > best:
            best = m
    return best


@njit(cache=True, nogil=True)
def _pair_block(flat, offsets, src, dst, kind_tag, out):
    for p in range(src.shape[0]):
        i = src[p]
        j = dst[p]
        a = flat[offsets[i]:offsets[i + 1]]
        b = flat[offsets[j]:offsets[j + 1]]
        if kind_tag == 0:
            out[p] = _sq_frechet(a, b)
        else:
            out[p] = _sq_hausdorff(a, b)


def _as_points(seq, name):
    pts = np.ascontiguousarray(seq, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise InputError(f"{name}: expected a non-empty (l, 2) point sequence")
    return pts


def discrete_frechet(a, b):
    """Discrete Fréchet distance: the cheapest monotone coupling's worst
    coupled pair, computed by the standard O(|a|*|b|) dynamic program."""
    a = _as_points(a, "a")
    b = _as_points(b, "b")
    return math.sqrt(_sq_frechet(a, b))


def hausdorff(a, b):
    """Hausdorff distance: max over both directed sup-inf point-set distances."""
    a = _as_points(a, "a")
    b = _as_points(b, "b")
    return math.sqrt(_sq_hausdorff(a, b))


def raw_distance_matrix(trajs, kind, workers=1):
    """All-pairs distance matrix for a list of point sequences.

    Each (i, j) pair is computed once and mirrored, so the result is exactly
    symmetric with a zero diagonal and bit-identical for any worker count.
    """
    if kind not in KINDS:
        raise InputError(f"unknown distance kind {kind!r}, expected one of {KINDS}")
    n = len(trajs)
    if n < 2:
        raise InputError("raw_distance_matrix: need at least 2 trajectories")
    pts = [_as_points(t, f"trajectory {i}") for i, t in enumerate(trajs)]
    offsets = np.zeros(n + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([p.shape[0] for p in pts])
    flat = np.concatenate(pts, axis=0)

    iu, ju = np.triu_indices(n, k=1)
    iu = iu.astype(np.int64)
    ju = ju.astype(np.int64)
    sq = np.empty(iu.shape[0], dtype=np.float64)
    tag = KIND_TAGS[kind]

    if workers <= 1 or iu.shape[0] < 2 * workers:
        _pair_block(flat, offsets, iu, ju, tag, sq)
    else:
        bounds = np.linspace(0, iu.shape[0], workers + 1, dtype=np.int64)
        def run(k):
            lo, hi = bounds[k], bounds[k + 1]
            _pair_block(flat, offsets, iu[lo:hi], ju[lo:hi], tag, sq[lo:hi])
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(workers)))

    values = np.zeros((n, n), dtype=np.float64)
    values[iu, ju] = np.sqrt(sq)
    values[ju, iu] = values[iu, ju]
    return RawDistanceMatrix(values=values, kind=kind)


def normalize_distances(raw):
    """Row-softmax normalization of a raw distance matrix.

    The divisor is the median off-diagonal distance (falling back to the mean,
    then 1.0, when degenerate), so the median raw distance maps to 1.0 before
    exponentiation.
    """
    v = raw.values
    if not np.all(np.isfinite(v)):
        raise NumericError("raw distance matrix contains non-finite entries")
    n = v.shape[0]
    off = v[~np.eye(n, dtype=bool)]
    divisor = float(np.median(off))
    if divisor <= 0.0:
        divisor = float(np.mean(off))
    if divisor <= 0.0:
        divisor = 1.0
    expd = np.exp(-v / divisor)
    denom = expd.sum(axis=1)
    d = 1.0 - expd / denom[:, None]
    return DistanceMatrix(values=d, kind=raw.kind, scale_divisor=divisor)


def symmetrized(d):
    """Arithmetic-mean symmetrization of a normalized matrix's values."""
    v = d.values if isinstance(d, DistanceMatrix) else np.asarray(d)
    return 0.5 * (v + v.T)
