"""Exact top-K retrieval over embeddings and the retrieval quality metrics.

Ground truth comes from the raw (meter-scale) distance matrix; predictions
from Euclidean distance between embedding vectors. Rankings are ascending by
distance with ties broken by ID (ascending), everywhere, so results are
deterministic. kNN is exact brute force.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class EmbeddingSet:
    """n embedding vectors with their trajectory IDs (unique, row-aligned)."""

    ids: list
    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != len(self.ids):
            raise InputError("vectors must be (n, D) with one row per id")
        if len(set(self.ids)) != len(self.ids):
            raise InputError("embedding IDs must be unique")
        if not np.all(np.isfinite(v)):
            raise InputError("embedding vectors must be finite")
        object.__setattr__(self, "vectors", v)

    @property
    def n(self):
        return self.vectors.shape[0]


def _id_ranks(ids):
    order = np.argsort(np.asarray(ids, dtype=object), kind="stable")
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[order] = np.arange(len(ids))
    return ranks


def _top_from_row(dist_row, ranks, ids, query_index, count):
    order = np.lexsort((ranks, dist_row))
    out = []
    for j in order:
        if j == query_index:
            continue
        out.append(ids[j])
        if len(out) == count:
            break
    return out


def ground_truth_topn(raw, ids, N):
    """Per-trajectory top-N most-similar lists under the raw distances."""
    n = raw.values.shape[0]
    if len(ids) != n:
        raise InputError("ids length does not match matrix size")
    if not 1 <= N < n:
        raise InputError(f"N must be in [1, n); got N={N}, n={n}")
    ranks = _id_ranks(ids)
    return {ids[i]: _top_from_row(raw.values[i], ranks, ids, i, N) for i in range(n)}


def knn_search(emb, query_id, K):
    """Exact K nearest neighbors of query_id by Euclidean embedding distance."""
    if query_id not in emb.ids:
        raise InputError(f"unknown trajectory id {query_id!r}")
    if not 1 <= K < emb.n:
        raise InputError(f"K must be in [1, n); got K={K}, n={emb.n}")
    i = emb.ids.index(query_id)
    diff = emb.vectors - emb.vectors[i]
    sq = np.einsum("nd,nd->n", diff, diff)  # ranking by squared distance is equivalent
    ranks = _id_ranks(emb.ids)
    return _top_from_row(sq, ranks, emb.ids, i, K)


def retrieval_topk(emb, K):
    """Leave-one-out top-K lists for every trajectory in the set."""
    if not 1 <= K < emb.n:
        raise InputError(f"K must be in [1, n); got K={K}, n={emb.n}")
    ranks = _id_ranks(emb.ids)
    out = {}
    for i in range(emb.n):
        diff = emb.vectors - emb.vectors[i]
        sq = np.einsum("nd,nd->n", diff, diff)
        out[emb.ids[i]] = _top_from_row(sq, ranks, emb.ids, i, K)
    return out


def _check_query_sets(X, Y):
    if set(X) != set(Y):
        raise InputError("prediction and ground-truth query sets differ")


def hit_ratio(X, Y, K):
    """Mean over queries of |top-K predictions intersect top-K truth| / K."""
    _check_query_sets(X, Y)
    for q in X:
        if len(X[q]) != K or len(Y[q]) != K:
            raise InputError(f"hit_ratio requires K = N = {K}; query {q!r} has "
                             f"{len(X[q])} predictions and {len(Y[q])} truths")
    return float(np.mean([len(set(X[q]) & set(Y[q])) / K for q in X]))


def recall_n_at_k(X, Y, N, K):
    """Mean over queries of |top-K predictions intersect top-N truth| / N, K >= N."""
    if K < N:
        raise InputError(f"recall requires K >= N; got K={K}, N={N}")
    _check_query_sets(X, Y)
    for q in X:
        if len(X[q]) != K or len(Y[q]) != N:
            raise InputError(f"recall expects {K} predictions and {N} truths; "
                             f"query {q!r} has {len(X[q])} and {len(Y[q])}")
    return float(np.mean([len(set(X[q]) & set(Y[q])) / N for q in X]))
