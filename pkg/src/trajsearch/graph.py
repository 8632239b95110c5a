"""Multi-scale similarity graph construction.

The normalized distance matrix is symmetrized, then every node pair whose
distance falls in the band [c_{k-1}, c_k) becomes an edge of layer k with
weight 1 - distance. Thresholds double: c_k = 2 * c_{k-1}, with c_0 picked
as a low percentile of the empirical distance distribution. Bands are
half-open so the layers partition the covered range; pairs below c_0 or at
or above c_m get no edge anywhere.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .distance import symmetrized
from .errors import InputError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Thresholds:
    """Band boundaries c_0 < c_1 < ... < c_m with exact doubling."""

    c: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if c.ndim != 1 or c.shape[0] < 2:
            raise InputError("thresholds need at least c_0 and c_1")
        if not c[0] > 0:
            raise InputError("c_0 must be positive")
        if np.any(np.diff(c) <= 0):
            raise InputError("thresholds must be strictly increasing")
        if np.any(c[1:] != 2.0 * c[:-1]):
            raise InputError("thresholds must double exactly: c_k = 2*c_{k-1}")
        object.__setattr__(self, "c", c)

    @property
    def m(self):
        return self.c.shape[0] - 1


@dataclass(frozen=True)
class GraphLayer:
    """Undirected weighted edges of one band; src < dst, weights in (0, 1]."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray

    @property
    def n_edges(self):
        return self.src.shape[0]


@dataclass(frozen=True)
class MultiScaleGraph:
    layers: list
    thresholds: Thresholds
    node_ids: list = field(repr=False)

    @property
    def n(self):
        return self.layers[0].n

    @property
    def m(self):
        return len(self.layers)


def _offdiag(values):
    n = values.shape[0]
    return values[~np.eye(n, dtype=bool)]


def choose_thresholds(d, m, q=10.0):
    """Pick c_0 as the q-th percentile order statistic of the off-diagonal
    symmetrized distances and double from there.

    Pairs beyond c_m end up with no edge in any layer; when that happens the
    uncovered fraction is logged.
    """
    if m < 1:
        raise InputError("need at least one layer")
    off = _offdiag(symmetrized(d))
    c0 = float(np.percentile(off, q, method="lower"))
    if not c0 > 0:
        raise InputError(f"percentile {q} of distances is {c0}, cannot anchor thresholds")
    degenerate = float(off.max() - off.min()) < 1e-15
    if degenerate:
        log.warning("choose_thresholds: distance distribution is degenerate (all values identical)")
    c = c0 * np.power(2.0, np.arange(m + 1))
    uncovered = float(np.mean(off >= c[-1]))
    if uncovered > 0:
        log.warning(
            "choose_thresholds: c_m=%.6g is below the max distance %.6g; "
            "fraction of pairs above c_m: %.4f", c[-1], float(off.max()), uncovered,
        )
    return Thresholds(c=c, degenerate=degenerate)


def build_graph(d, thresholds, node_ids=None):
    """Assign every unordered pair to the band containing its symmetrized
    distance. Deterministic: pairs are scanned in row-major upper-triangular
    order, so identical inputs serialize byte-identically."""
    dt = symmetrized(d)
    n = dt.shape[0]
    if node_ids is None:
        node_ids = [str(i) for i in range(n)]
    if len(node_ids) != n:
        raise InputError("node_ids length does not match matrix size")
    c = thresholds.c
    iu, ju = np.triu_indices(n, k=1)
    vals = dt[iu, ju]
    band = np.searchsorted(c, vals, side="right")  # 0: below c_0; m+1: >= c_m
    layers = []
    for k in range(1, thresholds.m + 1):
        sel = band == k
        layers.append(GraphLayer(
            n=n,
            src=iu[sel].astype(np.uint32),
            dst=ju[sel].astype(np.uint32),
            weights=1.0 - vals[sel],
        ))
    return MultiScaleGraph(layers=layers, thresholds=thresholds, node_ids=list(node_ids))


@dataclass(frozen=True)
class CoverageReport:
    triples_checked: int
    violations: int
    per_layer: list

    @property
    def ok(self):
        return self.violations == 0


def coverage_check(g, d):
    """Verify the doubling guarantee on the built graph.

    For every triple (p, q, r) where (p, r) and (q, r) are edges of layer k,
    the pair (p, q) must either sit below c_0 or be an edge of some layer
    <= k+1. Counts triples and violations per layer.
    """
    dt = symmetrized(d)
    n = dt.shape[0]
    c0 = g.thresholds.c[0]
    assignment = np.zeros((n, n), dtype=np.int32)
    for k, layer in enumerate(g.layers, start=1):
        assignment[layer.src, layer.dst] = k
        assignment[layer.dst, layer.src] = k

    total = 0
    bad = 0
    per_layer = []
    iu, ju = np.triu_indices(n, k=1)
    for k, layer in enumerate(g.layers, start=1):
        adj = np.zeros((n, n), dtype=np.int64)
        adj[layer.src, layer.dst] = 1
        adj[layer.dst, layer.src] = 1
        common = adj @ adj  # common[p, q] = number of shared layer-k neighbors r
        pair_ok = ((assignment >= 1) & (assignment <= k + 1)) | (dt < c0)
        counts = common[iu, ju]
        layer_total = int(counts.sum())
        layer_bad = int(counts[~pair_ok[iu, ju]].sum())
        per_layer.append((layer_total, layer_bad))
        total += layer_total
        bad += layer_bad
    if bad:
        log.warning("coverage_check: %d of %d triples violate the doubling guarantee", bad, total)
    return CoverageReport(triples_checked=total, violations=bad, per_layer=per_layer)
