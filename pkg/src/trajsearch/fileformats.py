"""Binary on-disk formats for pipeline artifacts, all little-endian.

TSM1  distance matrix   magic "TSMATRX1", u32 n, u8 kind tag, u8 normalized
                        flag, f64 scale divisor, n*n f64 row-major
TSG1  multi-scale graph magic "TSGRAPH1", u32 n, u32 m, (m+1) f64 thresholds,
                        per layer: u64 edge count then (u32 i, u32 j, f64 w)
TSN1  model checkpoint  magic "TSNNMDL1", config block, shape-prefixed f64
                        parameter tensors
TSE1  embeddings        magic "TSEMBED1", u32 n, u32 D, n length-prefixed
                        UTF-8 ids, n*D f64 row-major

Every writer can drop a deterministic JSON sidecar (<path>.meta.json) with
the producing configuration, so artifacts are replayable and hashable.
"""

import json
import struct

import numpy as np

from .distance import DistanceMatrix, RawDistanceMatrix, KIND_TAGS, TAG_KINDS
from .errors import InputError
from .graph import GraphLayer, MultiScaleGraph, Thresholds
from .search_eval import EmbeddingSet

MAGIC_TSM1 = b"TSMATRX1"
MAGIC_TSG1 = b"TSGRAPH1"
MAGIC_TSN1 = b"TSNNMDL1"
MAGIC_TSE1 = b"TSEMBED1"

_EDGE_DTYPE = np.dtype([("i", "<u4"), ("j", "<u4"), ("w", "<f8")])


def _read_exact(fh, count, what):
    data = fh.read(count)
    if len(data) != count:
        raise InputError(f"truncated file while reading {what}")
    return data


def _expect_magic(fh, magic, path):
    got = fh.read(len(magic))
    if got != magic:
        raise InputError(f"{path}: bad magic {got!r}, expected {magic!r}")


def write_sidecar(path, meta):
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_tsm1(path, matrix, meta=None):
    normalized = isinstance(matrix, DistanceMatrix)
    scale = matrix.scale_divisor if normalized else 0.0
    v = np.ascontiguousarray(matrix.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC_TSM1)
        fh.write(struct.pack("<IBBd", matrix.n, KIND_TAGS[matrix.kind], int(normalized), scale))
        fh.write(v.tobytes())
    if meta is not None:
        write_sidecar(path, meta)


def read_tsm1(path):
    with open(path, "rb") as fh:
        _expect_magic(fh, MAGIC_TSM1, path)
        n, tag, normalized, scale = struct.unpack("<IBBd", _read_exact(fh, 14, "TSM1 header"))
        if tag not in TAG_KINDS:
            raise InputError(f"{path}: unknown distance kind tag {tag}")
        data = _read_exact(fh, n * n * 8, "TSM1 matrix body")
    values = np.frombuffer(data, dtype="<f8").reshape(n, n).astype(np.float64)
    if normalized:
        return DistanceMatrix(values=values, kind=TAG_KINDS[tag], scale_divisor=scale)
    return RawDistanceMatrix(values=values, kind=TAG_KINDS[tag])


def write_tsg1(path, graph, meta=None):
    with open(path, "wb") as fh:
        fh.write(MAGIC_TSG1)
        fh.write(struct.pack("<II", graph.n, graph.m))
        fh.write(np.ascontiguousarray(graph.thresholds.c, dtype="<f8").tobytes())
        for layer in graph.layers:
            fh.write(struct.pack("<Q", layer.n_edges))
            rec = np.empty(layer.n_edges, dtype=_EDGE_DTYPE)
            rec["i"] = layer.src
            rec["j"] = layer.dst
            rec["w"] = layer.weights
            fh.write(rec.tobytes())
    if meta is not None:
        write_sidecar(path, meta)


def read_tsg1(path, node_ids=None):
    with open(path, "rb") as fh:
        _expect_magic(fh, MAGIC_TSG1, path)
        n, m = struct.unpack("<II", _read_exact(fh, 8, "TSG1 header"))
        c = np.frombuffer(_read_exact(fh, (m + 1) * 8, "TSG1 thresholds"), dtype="<f8").astype(np.float64)
        layers = []
        for _ in range(m):
            (count,) = struct.unpack("<Q", _read_exact(fh, 8, "TSG1 edge count"))
            rec = np.frombuffer(_read_exact(fh, count * _EDGE_DTYPE.itemsize, "TSG1 edges"),
                                dtype=_EDGE_DTYPE)
            layers.append(GraphLayer(n=n, src=rec["i"].astype(np.uint32),
                                     dst=rec["j"].astype(np.uint32),
                                     weights=rec["w"].astype(np.float64)))
    if node_ids is None:
        node_ids = [str(i) for i in range(n)]
    if len(node_ids) != n:
        raise InputError(f"{path}: expected {n} node ids, got {len(node_ids)}")
    return MultiScaleGraph(layers=layers, thresholds=Thresholds(c=c), node_ids=list(node_ids))


def _write_tensor(fh, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def _read_tensor(fh):
    (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "tensor rank"))
    shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "tensor shape"))
    count = int(np.prod(shape)) if ndim else 1
    data = _read_exact(fh, count * 8, "tensor body")
    return np.frombuffer(data, dtype="<f8").reshape(shape).astype(np.float64)


def write_tsn1(path, model, meta=None):
    with open(path, "wb") as fh:
        fh.write(MAGIC_TSN1)
        fh.write(struct.pack("<I", model.m))
        fh.write(struct.pack(f"<{model.m + 1}I", *model.dims))
        fh.write(struct.pack("<IIQBBB", model.mlp_hidden, model.out_dim, model.seed,
                             0 if model.activation == "relu" else 255,
                             int(model.edge_bias), int(model.sequential)))
        for lp in model.layers:
            _write_tensor(fh, lp.W)
            _write_tensor(fh, lp.a)
        for arr in (model.mlp.W1, model.mlp.b1, model.mlp.W2, model.mlp.b2):
            _write_tensor(fh, arr)
    if meta is not None:
        write_sidecar(path, meta)


def read_tsn1(path):
    from .gnn import GnnModel, LayerParams, MlpParams

    with open(path, "rb") as fh:
        _expect_magic(fh, MAGIC_TSN1, path)
        (m,) = struct.unpack("<I", _read_exact(fh, 4, "TSN1 layer count"))
        dims = list(struct.unpack(f"<{m + 1}I", _read_exact(fh, 4 * (m + 1), "TSN1 dims")))
        hidden, out_dim, seed, act, edge_bias, sequential = struct.unpack(
            "<IIQBBB", _read_exact(fh, 19, "TSN1 config"))
        if act != 0:
            raise InputError(f"{path}: unknown activation tag {act}")
        layers = [LayerParams(W=_read_tensor(fh), a=_read_tensor(fh)) for _ in range(m)]
        mlp = MlpParams(W1=_read_tensor(fh), b1=_read_tensor(fh),
                        W2=_read_tensor(fh), b2=_read_tensor(fh))
    return GnnModel(dims=dims, mlp_hidden=hidden, out_dim=out_dim, layers=layers,
                    mlp=mlp, seed=seed, activation="relu",
                    edge_bias=bool(edge_bias), sequential=bool(sequential))


def write_tse1(path, emb, meta=None):
    with open(path, "wb") as fh:
        fh.write(MAGIC_TSE1)
        fh.write(struct.pack("<II", emb.n, emb.vectors.shape[1]))
        for tid in emb.ids:
            raw = tid.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(emb.vectors, dtype="<f8").tobytes())
    if meta is not None:
        write_sidecar(path, meta)


def read_tse1(path):
    with open(path, "rb") as fh:
        _expect_magic(fh, MAGIC_TSE1, path)
        n, dim = struct.unpack("<II", _read_exact(fh, 8, "TSE1 header"))
        ids = []
        for _ in range(n):
            (ln,) = struct.unpack("<I", _read_exact(fh, 4, "TSE1 id length"))
            ids.append(_read_exact(fh, ln, "TSE1 id").decode("utf-8"))
        data = _read_exact(fh, n * dim * 8, "TSE1 vectors")
    vectors = np.frombuffer(data, dtype="<f8").reshape(n, dim).astype(np.float64)
    return EmbeddingSet(ids=ids, vectors=vectors)
