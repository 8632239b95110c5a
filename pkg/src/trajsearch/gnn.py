"""Multi-layer attention GNN over the multi-scale graph, trained from scratch.

Layer k linearly transforms the incoming embeddings, scores each edge of
graph layer k with a single shared attention vector over the concatenated
transformed endpoint pair (LeakyReLU slope 0.2), adds log(edge weight) as a
score bias, softmax-normalizes per neighborhood (self-loop always included)
and aggregates with ReLU. Layers are sequentially connected: layer k consumes
layer k-1's output. The final embedding is an MLP (one ReLU hidden layer)
over the concatenation of all layer outputs.

Gradients are computed analytically by reverse traversal: MLP, concat split,
then per layer ReLU mask -> alpha-weighted aggregation -> softmax Jacobian ->
LeakyReLU mask -> weight products. All edge reductions use fixed-order
segment sums, so results are bit-stable.

The training loss is the cosine distance between the off-diagonal entries of
the embedding Gram matrix and of the similarity target (1 - symmetrized
normalized distance), both treated as flattened vectors.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .distance import symmetrized
from .errors import InputError, NumericError
from .search_eval import EmbeddingSet

log = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2
OPTIMIZERS = ("sgd", "adam")


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 0.01
    optimizer: str = "adam"
    scheduler_step: int = 5
    scheduler_factor: float = 0.1
    seed: int = 0
    mid_dim: int = 256
    out_dim: int = 128
    edge_bias: bool = True
    sequential: bool = True

    def __post_init__(self):
        if self.lr < 0:
            raise InputError("lr must be non-negative")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.mid_dim < 1 or self.out_dim < 1:
            raise InputError("dims must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if self.scheduler_step < 1:
            raise InputError("scheduler_step must be >= 1")


@dataclass
class LayerParams:
    """One attention layer: W transforms D_prev -> D, a scores pairs (2D,)."""

    W: np.ndarray
    a: np.ndarray


@dataclass
class MlpParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


@dataclass
class GnnModel:
    dims: list            # [D_0, ..., D_m]
    mlp_hidden: int
    out_dim: int
    layers: list          # m LayerParams
    mlp: MlpParams
    seed: int
    activation: str = "relu"
    edge_bias: bool = True
    sequential: bool = True

    @property
    def m(self):
        return len(self.layers)


@dataclass
class EmbeddingState:
    """H_0 plus, after a forward pass, per-layer outputs and intermediates."""

    H: list                      # [H_0, H_1, ..., H_m]
    H_final: np.ndarray = None
    Z: list = field(default_factory=list, repr=False)
    u: list = field(default_factory=list, repr=False)
    alpha: list = field(default_factory=list, repr=False)
    agg: list = field(default_factory=list, repr=False)
    H_cat: np.ndarray = field(default=None, repr=False)
    U_pre: np.ndarray = field(default=None, repr=False)
    U: np.ndarray = field(default=None, repr=False)
    prep: list = field(default=None, repr=False)


@dataclass(frozen=True)
class PreparedLayer:
    """Directed edge view of one graph layer, self-loops included.

    Edges are sorted by (row, nbr); seg_row[i] is the first edge of row i.
    perm_by_nbr re-sorts edges by (nbr, row) with seg_nbr the matching
    segment starts, for reductions over the neighbor side.
    """

    n: int
    row: np.ndarray
    nbr: np.ndarray
    bias: np.ndarray
    seg_row: np.ndarray
    perm_by_nbr: np.ndarray
    seg_nbr: np.ndarray


def prepare_layer(layer, edge_bias=True):
    n = layer.n
    src = layer.src.astype(np.int64)
    dst = layer.dst.astype(np.int64)
    loops = np.arange(n, dtype=np.int64)
    row = np.concatenate([src, dst, loops])
    nbr = np.concatenate([dst, src, loops])
    if edge_bias:
        lw = np.log(layer.weights)
        bias = np.concatenate([lw, lw, np.zeros(n)])
    else:
        bias = np.zeros(row.shape[0])
    order = np.lexsort((nbr, row))
    row, nbr, bias = row[order], nbr[order], bias[order]
    seg_row = np.searchsorted(row, np.arange(n), side="left")
    perm_by_nbr = np.lexsort((row, nbr))
    seg_nbr = np.searchsorted(nbr[perm_by_nbr], np.arange(n), side="left")
    return PreparedLayer(n=n, row=row, nbr=nbr, bias=bias, seg_row=seg_row,
                         perm_by_nbr=perm_by_nbr, seg_nbr=seg_nbr)


def prepare_graph(graph, edge_bias=True):
    return [prepare_layer(layer, edge_bias) for layer in graph.layers]


def init_model(graph, config):
    """Seeded initialization: Gaussian input embeddings with std 1/sqrt(D_0),
    Xavier-uniform weights. The same seed reproduces every bit."""
    rng = np.random.default_rng(config.seed)
    n = graph.n
    m = graph.m
    D = config.mid_dim
    dims = [D] * (m + 1)
    H0 = rng.normal(0.0, 1.0 / math.sqrt(D), size=(n, D))

    def xavier(shape, fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    layers = []
    for k in range(1, m + 1):
        W = xavier((dims[k - 1], dims[k]), dims[k - 1], dims[k])
        a = xavier((2 * dims[k],), 2 * dims[k], 1)
        layers.append(LayerParams(W=W, a=a))
    cat_dim = sum(dims[1:])
    mlp = MlpParams(
        W1=xavier((cat_dim, config.mid_dim), cat_dim, config.mid_dim),
        b1=np.zeros(config.mid_dim),
        W2=xavier((config.mid_dim, config.out_dim), config.mid_dim, config.out_dim),
        b2=np.zeros(config.out_dim),
    )
    model = GnnModel(dims=dims, mlp_hidden=config.mid_dim, out_dim=config.out_dim,
                     layers=layers, mlp=mlp, seed=config.seed,
                     edge_bias=config.edge_bias, sequential=config.sequential)
    return model, EmbeddingState(H=[H0])


@dataclass(frozen=True)
class SparseScores:
    """Per-edge values (scores or normalized alphas) over row neighborhoods."""

    n: int
    row: np.ndarray
    nbr: np.ndarray
    values: np.ndarray
    seg_row: np.ndarray


def _leaky(u):
    return np.where(u >= 0.0, u, LEAKY_SLOPE * u)


def _layer_scores(prep, params, H_prev, layer_index=None):
    D = params.W.shape[1]
    Z = H_prev @ params.W
    sl = Z @ params.a[:D]
    sr = Z @ params.a[D:]
    u = sl[prep.row] + sr[prep.nbr]
    s = _leaky(u) + prep.bias
    if not np.all(np.isfinite(s)):
        e = int(np.flatnonzero(~np.isfinite(s))[0])
        where = f"layer {layer_index}" if layer_index is not None else "layer"
        raise NumericError(
            f"non-finite attention score at {where}, edge ({int(prep.row[e])}, {int(prep.nbr[e])})")
    return Z, u, s


def _segment_softmax(s, prep):
    mx = np.maximum.reduceat(s, prep.seg_row)
    ex = np.exp(s - mx[prep.row])
    denom = np.add.reduceat(ex, prep.seg_row)
    return ex / denom[prep.row]


def attention_scores(layer, params, H_prev, edge_bias=True, layer_index=None):
    """Raw attention scores for every edge of the layer plus each node's
    self-loop: LeakyReLU(a . [W h_i || W h_j]) + log(edge weight)."""
    prep = prepare_layer(layer, edge_bias)
    _, _, s = _layer_scores(prep, params, H_prev, layer_index)
    return SparseScores(n=prep.n, row=prep.row, nbr=prep.nbr, values=s, seg_row=prep.seg_row)


def attention_normalize(scores):
    """Softmax over each row's neighborhood (max-subtracted for stability)."""
    prep = PreparedLayer(n=scores.n, row=scores.row, nbr=scores.nbr, bias=None,
                         seg_row=scores.seg_row, perm_by_nbr=None, seg_nbr=None)
    alpha = _segment_softmax(scores.values, prep)
    return SparseScores(n=scores.n, row=scores.row, nbr=scores.nbr,
                        values=alpha, seg_row=scores.seg_row)


def forward(model, graph, H0, prep=None):
    """Run all layers plus the MLP head, retaining intermediates for backward."""
    if prep is None:
        prep = prepare_graph(graph, model.edge_bias)
    if len(prep) != model.m:
        raise InputError(f"model has {model.m} layers but graph has {len(prep)}")
    if H0.shape[1] != model.dims[0]:
        raise InputError(f"H_0 dim {H0.shape[1]} != model input dim {model.dims[0]}")
    state = EmbeddingState(H=[H0], prep=prep)
    for k in range(model.m):
        H_in = state.H[k] if model.sequential else H0
        Z, u, s = _layer_scores(prep[k], model.layers[k], H_in, layer_index=k + 1)
        alpha = _segment_softmax(s, prep[k])
        msg = alpha[:, None] * Z[prep[k].nbr]
        agg = np.add.reduceat(msg, prep[k].seg_row, axis=0)
        state.Z.append(Z)
        state.u.append(u)
        state.alpha.append(alpha)
        state.agg.append(agg)
        state.H.append(np.maximum(agg, 0.0))
    state.H_cat = np.concatenate(state.H[1:], axis=1)
    state.U_pre = state.H_cat @ model.mlp.W1 + model.mlp.b1
    state.U = np.maximum(state.U_pre, 0.0)
    state.H_final = state.U @ model.mlp.W2 + model.mlp.b2
    return state


def cosine_loss(H_final, d):
    """Cosine distance between the off-diagonal Gram matrix of the embeddings
    and the off-diagonal similarity target, with the analytic gradient.

    Returns (loss, dL/dH_final). Degenerate all-zero embeddings give loss 1
    with a zero gradient.
    """
    n = d.values.shape[0]
    if H_final.shape[0] != n:
        raise InputError("embedding row count does not match distance matrix")
    off = ~np.eye(n, dtype=bool)
    T = 1.0 - symmetrized(d)
    S = H_final @ H_final.T
    s = S[off]
    t = T[off]
    ns = float(np.linalg.norm(s))
    nt = float(np.linalg.norm(t))
    if ns == 0.0 or nt == 0.0:
        log.warning("cosine_loss: zero-norm Gram matrix, loss pinned to 1 with zero gradient")
        return 1.0, np.zeros_like(H_final)
    dot = float(s @ t)
    loss = 1.0 - dot / (ns * nt)
    ds = -(t / (ns * nt) - dot * s / (ns ** 3 * nt))
    G = np.zeros((n, n))
    G[off] = ds
    grad = (G + G.T) @ H_final
    return loss, grad


@dataclass
class Gradients:
    layers: list   # list of (dW, da)
    mlp: MlpParams


def backward(model, state, dH_final):
    """Exact reverse-mode gradients for every parameter.

    state must come from forward() on this model; shapes are checked to catch
    stale pairings.
    """
    if state.H_final is None or state.prep is None or len(state.Z) != model.m:
        raise InputError("backward needs the state produced by forward()")
    if dH_final.shape != state.H_final.shape:
        raise InputError("upstream gradient shape mismatch")

    mlp = model.mlp
    dU = dH_final @ mlp.W2.T
    dW2 = state.U.T @ dH_final
    db2 = dH_final.sum(axis=0)
    dU_pre = dU * (state.U_pre > 0.0)
    dW1 = state.H_cat.T @ dU_pre
    db1 = dU_pre.sum(axis=0)
    dH_cat = dU_pre @ mlp.W1.T

    splits = np.cumsum(model.dims[1:])[:-1]
    dH_layers = np.split(dH_cat, splits, axis=1)

    layer_grads = [None] * model.m
    carry = None  # gradient flowing into H^k from layer k+1 (sequential mode)
    for k in range(model.m - 1, -1, -1):
        prep = state.prep[k]
        params = model.layers[k]
        D = params.W.shape[1]
        aL, aR = params.a[:D], params.a[D:]
        Z, u, alpha, agg = state.Z[k], state.u[k], state.alpha[k], state.agg[k]
        H_in = state.H[k] if model.sequential else state.H[0]

        dHk = dH_layers[k].copy()
        if carry is not None:
            dHk += carry
        dAgg = dHk * (agg > 0.0)

        dalpha = np.einsum("ed,ed->e", dAgg[prep.row], Z[prep.nbr])
        seg_dot = np.add.reduceat(alpha * dalpha, prep.seg_row)
        ds = alpha * (dalpha - seg_dot[prep.row])
        du = ds * np.where(u >= 0.0, 1.0, LEAKY_SLOPE)

        g_row = np.add.reduceat(du, prep.seg_row)
        du_by_nbr = du[prep.perm_by_nbr]
        g_nbr = np.add.reduceat(du_by_nbr, prep.seg_nbr)

        msg_grad = alpha[:, None] * dAgg[prep.row]
        dZ = np.add.reduceat(msg_grad[prep.perm_by_nbr], prep.seg_nbr, axis=0)
        dZ += np.outer(g_row, aL) + np.outer(g_nbr, aR)

        da = np.concatenate([Z.T @ g_row, Z.T @ g_nbr])
        dW = H_in.T @ dZ
        dH_in = dZ @ params.W.T
        layer_grads[k] = (dW, da)
        if model.sequential:
            carry = dH_in if k > 0 else None

    return Gradients(layers=layer_grads, mlp=MlpParams(W1=dW1, b1=db1, W2=dW2, b2=db2))


def model_param_arrays(model):
    arrays = []
    for lp in model.layers:
        arrays.extend([lp.W, lp.a])
    arrays.extend([model.mlp.W1, model.mlp.b1, model.mlp.W2, model.mlp.b2])
    return arrays


def grad_arrays(grads):
    arrays = []
    for dW, da in grads.layers:
        arrays.extend([dW, da])
    arrays.extend([grads.mlp.W1, grads.mlp.b1, grads.mlp.W2, grads.mlp.b2])
    return arrays


class _Sgd:
    def __init__(self, params):
        pass

    def step(self, params, grads, lr):
        for p, g in zip(params, grads):
            p -= lr * g


class _Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def lr_at_epoch(config, epoch):
    """Step decay: multiply by scheduler_factor every scheduler_step epochs."""
    return config.lr * config.scheduler_factor ** (epoch // config.scheduler_step)


def train(model, h0, graph, d, config):
    """Full-batch training loop.

    Records the loss at the top of every epoch (so lr=0 gives a constant
    history), updates parameters in place, and returns the model, the final
    embeddings keyed by the graph's node ids, and the loss history.
    """
    prep = prepare_graph(graph, model.edge_bias)
    params = model_param_arrays(model)
    opt = _Adam(params) if config.optimizer == "adam" else _Sgd(params)
    history = []
    for epoch in range(config.epochs):
        state = forward(model, graph, h0, prep=prep)
        loss, dHf = cosine_loss(state.H_final, d)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        history.append(loss)
        grads = backward(model, state, dHf)
        opt.step(params, grad_arrays(grads), lr_at_epoch(config, epoch))
    final = forward(model, graph, h0, prep=prep)
    emb = EmbeddingSet(ids=list(graph.node_ids), vectors=final.H_final)
    return model, emb, history
