"""Two-layer heterogeneous encoder with GraphSAGE-style aggregation, trained
by discriminating real node embeddings from feature-shuffled ones.

Per layer, hashtags and URLs first aggregate from their tweets (no self
term), then each tweet averages three relation-specific aggregates (hashtag,
URL, and tweet neighborhoods; the tweet relation carries the self term).
A PReLU with one trainable slope per layer follows every aggregate.

All gradients are computed analytically; `loss_and_grads` is checked against
central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import DataError, NumericError
from ..hetgraph import HeteroGraph, SampledSubgraph

EPS = 1e-7

# Relations within a layer; only tweet<-tweet carries a self weight.
_RELATIONS = ("ht", "ut", "th", "tu", "tt")


@dataclass
class GraphView:
    """Mean-aggregation operators for one forward pass.

    M_xy maps source-type rows to target-type rows with 1/deg weights; rows
    with no neighbors are zero (the aggregate degenerates to self term + bias).
    seeds are the tweet rows that enter the readout and the discriminator.
    """
    n_t: int
    n_h: int
    n_u: int
    M_ht: sp.csr_matrix
    M_ut: sp.csr_matrix
    M_th: sp.csr_matrix
    M_tu: sp.csr_matrix
    M_tt: sp.csr_matrix
    seeds: np.ndarray
    tweet_rows: np.ndarray  # global tweet index per local row


def _mean_matrix(neigh: list[list[int]], n_cols: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i, lst in enumerate(neigh):
        if not lst:
            continue
        w = 1.0 / len(lst)
        for j in lst:
            rows.append(i)
            cols.append(j)
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(neigh), n_cols))


def view_from_graph(g: HeteroGraph, seeds=None, directed: bool | None = None) -> GraphView:
    tt = g.tt_out if (directed if directed is not None else g.directed_tt) else g.tt
    if seeds is None:
        seeds = np.arange(g.n_tweets)
    return GraphView(
        n_t=g.n_tweets, n_h=g.n_hashtags, n_u=g.n_urls,
        M_ht=_mean_matrix(g.ht, g.n_tweets),
        M_ut=_mean_matrix(g.ut, g.n_tweets),
        M_th=_mean_matrix(g.th, g.n_hashtags),
        M_tu=_mean_matrix(g.tu, g.n_urls),
        M_tt=_mean_matrix(tt, g.n_tweets),
        seeds=np.asarray(seeds, dtype=np.int64),
        tweet_rows=np.arange(g.n_tweets, dtype=np.int64),
    )


def view_from_subgraph(sub: SampledSubgraph) -> GraphView:
    return GraphView(
        n_t=sub.n_tweets, n_h=len(sub.hashtags), n_u=len(sub.urls),
        M_ht=_mean_matrix(sub.ht, sub.n_tweets),
        M_ut=_mean_matrix(sub.ut, sub.n_tweets),
        M_th=_mean_matrix(sub.th, len(sub.hashtags)),
        M_tu=_mean_matrix(sub.tu, len(sub.urls)),
        M_tt=_mean_matrix(sub.tt, sub.n_tweets),
        seeds=np.asarray(sub.seed_local, dtype=np.int64),
        tweet_rows=np.asarray(sub.tweets, dtype=np.int64),
    )


class ModelParams:
    """All trainable tensors, keyed by name, with a flat-vector view.

    Keys: l{1,2}.{ht,ut,th,tu,tt}.{W1,W2,b} (W1 on tt only), l{1,2}.a,
    disc.W. Layer 1 consumes feature_dim tweet inputs; everything downstream
    is hidden_dim wide.
    """

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = arrays
        self._keys = sorted(arrays)

    @classmethod
    def init(cls, feature_dim: int, hidden_dim: int = 128, rng=None,
             dtype=np.float32) -> "ModelParams":
        rng = rng if rng is not None else np.random.default_rng(0)

        def glorot(out_d, in_d):
            bound = np.sqrt(6.0 / (out_d + in_d))
            return rng.uniform(-bound, bound, size=(out_d, in_d)).astype(dtype)

        arrays: dict[str, np.ndarray] = {}
        for layer, d_in in (("l1", feature_dim), ("l2", hidden_dim)):
            # ht/ut/tt consume previous-layer tweet vectors (d_in);
            # th/tu consume same-layer hashtag/URL vectors (hidden_dim).
            for rel in ("ht", "ut", "tt"):
                arrays[f"{layer}.{rel}.W2"] = glorot(hidden_dim, d_in)
                arrays[f"{layer}.{rel}.b"] = np.zeros(hidden_dim, dtype=dtype)
            arrays[f"{layer}.tt.W1"] = glorot(hidden_dim, d_in)
            for rel in ("th", "tu"):
                arrays[f"{layer}.{rel}.W2"] = glorot(hidden_dim, hidden_dim)
                arrays[f"{layer}.{rel}.b"] = np.zeros(hidden_dim, dtype=dtype)
            arrays[f"{layer}.a"] = np.asarray([0.25], dtype=dtype)
        arrays["disc.W"] = glorot(hidden_dim, hidden_dim)
        return cls(arrays)

    @property
    def hidden_dim(self) -> int:
        return self.arrays["disc.W"].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.arrays["l1.tt.W2"].shape[1]

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: v.astype(dtype) for k, v in self.arrays.items()})

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()})

    def pack(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in self._keys])

    def unpack(self, flat: np.ndarray) -> None:
        total = sum(a.size for a in self.arrays.values())
        if flat.size != total:
            raise DataError("flat parameter vector has wrong length")
        off = 0
        for k in self._keys:
            a = self.arrays[k]
            a[...] = flat[off:off + a.size].reshape(a.shape)
            off += a.size

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def save(self, path) -> None:
        # Deterministic byte layout (np.savez embeds timestamps).
        import struct
        with open(path, "wb") as f:
            f.write(b"CVPR")
            f.write(struct.pack("<II", 1, len(self._keys)))
            for k in self._keys:
                a = np.ascontiguousarray(self.arrays[k])
                name = k.encode("utf-8")
                code = {"float32": 0, "float64": 1}[a.dtype.name]
                f.write(struct.pack("<H", len(name)))
                f.write(name)
                f.write(struct.pack("<BB", code, a.ndim))
                f.write(struct.pack(f"<{a.ndim}I", *a.shape))
                f.write(a.tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "ModelParams":
        import struct
        arrays = {}
        with open(path, "rb") as f:
            if f.read(4) != b"CVPR":
                raise DataError(f"{path}: not a params file")
            version, count = struct.unpack("<II", f.read(8))
            if version != 1:
                raise DataError(f"{path}: unsupported params version {version}")
            for _ in range(count):
                (name_len,) = struct.unpack("<H", f.read(2))
                name = f.read(name_len).decode("utf-8")
                code, ndim = struct.unpack("<BB", f.read(2))
                shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
                dtype = {0: np.float32, 1: np.float64}[code]
                n_bytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
                arrays[name] = np.frombuffer(f.read(n_bytes), dtype=dtype
                                             ).reshape(shape).copy()
        return cls(arrays)


def prelu(x: np.ndarray, a: float) -> np.ndarray:
    return np.where(x >= 0, x, a * x)


def sage_aggregate(x_self, neighbor_vecs, W1, W2, b) -> np.ndarray:
    """out = W1 x_self (when present) + mean_j W2 x_j + b.

    Empty neighbor lists contribute nothing (no division by zero).
    """
    out = np.array(b, dtype=np.float64, copy=True)
    if x_self is not None:
        if W1 is None:
            raise DataError("self vector given without a self weight")
        out += W1 @ np.asarray(x_self, dtype=np.float64)
    if len(neighbor_vecs):
        acc = np.zeros_like(out)
        for v in neighbor_vecs:
            acc += W2 @ np.asarray(v, dtype=np.float64)
        out += acc / len(neighbor_vecs)
    return out


def readout(tweet_embeddings: np.ndarray) -> np.ndarray:
    """Mean of rows passed through a sigmoid. Permutation invariant."""
    E = np.asarray(tweet_embeddings)
    if E.ndim != 2 or E.shape[0] == 0:
        raise DataError("readout requires at least one embedding row")
    return _sigmoid(E.mean(axis=0))


def discriminate(x: np.ndarray, s: np.ndarray, W_D: np.ndarray) -> float:
    return float(_sigmoid(np.asarray(x) @ (W_D @ np.asarray(s))))


def dgi_loss(pos_scores, neg_scores) -> float:
    """Mean binary cross-entropy: real rows are positives, corrupted rows
    negatives. Scores clamped to [EPS, 1-EPS]."""
    pos = np.clip(np.asarray(pos_scores, dtype=np.float64), EPS, 1 - EPS)
    neg = np.clip(np.asarray(neg_scores, dtype=np.float64), EPS, 1 - EPS)
    if pos.size == 0 or neg.size == 0:
        raise DataError("dgi_loss requires nonempty score lists")
    return float((-np.log(pos).sum() - np.log(1 - neg).sum()) / (pos.size + neg.size))


def corrupt(X: np.ndarray, rng) -> np.ndarray:
    """Shuffle tweet feature rows with a uniform random permutation."""
    perm = rng.permutation(X.shape[0])
    return X[perm]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60, 60)))


class _LayerCache:
    __slots__ = ("T_prev", "Zh", "Zu", "H", "U", "Zt",
                 "Mht_T", "Mut_T", "Mth_H", "Mtu_U", "Mtt_T")


def _layer_forward(view: GraphView, T_prev: np.ndarray, params: ModelParams,
                   layer: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, _LayerCache]:
    A = params.arrays
    a = float(A[f"{layer}.a"][0])
    c = _LayerCache()
    c.T_prev = T_prev
    c.Mht_T = view.M_ht @ T_prev
    c.Mut_T = view.M_ut @ T_prev
    c.Zh = c.Mht_T @ A[f"{layer}.ht.W2"].T + A[f"{layer}.ht.b"]
    c.Zu = c.Mut_T @ A[f"{layer}.ut.W2"].T + A[f"{layer}.ut.b"]
    c.H = prelu(c.Zh, a)
    c.U = prelu(c.Zu, a)
    c.Mth_H = view.M_th @ c.H
    c.Mtu_U = view.M_tu @ c.U
    c.Mtt_T = view.M_tt @ T_prev
    agg_h = c.Mth_H @ A[f"{layer}.th.W2"].T + A[f"{layer}.th.b"]
    agg_u = c.Mtu_U @ A[f"{layer}.tu.W2"].T + A[f"{layer}.tu.b"]
    agg_t = (T_prev @ A[f"{layer}.tt.W1"].T
             + c.Mtt_T @ A[f"{layer}.tt.W2"].T + A[f"{layer}.tt.b"])
    c.Zt = (agg_h + agg_u + agg_t) / 3.0
    T = prelu(c.Zt, a)
    return T, c.H, c.U, c


def _prelu_back(dY, Z, a):
    dZ = dY * np.where(Z >= 0, 1.0, a)
    da = float((dY * np.where(Z < 0, Z, 0.0)).sum())
    return dZ, da


def _layer_backward(view: GraphView, dT: np.ndarray, c: _LayerCache,
                    params: ModelParams, layer: str, grads: dict) -> np.ndarray:
    A = params.arrays
    a = float(A[f"{layer}.a"][0])
    dZt, da = _prelu_back(dT, c.Zt, a)
    dAgg = dZt / 3.0

    grads[f"{layer}.th.W2"] += dAgg.T @ c.Mth_H
    grads[f"{layer}.th.b"] += dAgg.sum(axis=0)
    dH = view.M_th.T @ (dAgg @ A[f"{layer}.th.W2"])

    grads[f"{layer}.tu.W2"] += dAgg.T @ c.Mtu_U
    grads[f"{layer}.tu.b"] += dAgg.sum(axis=0)
    dU = view.M_tu.T @ (dAgg @ A[f"{layer}.tu.W2"])

    grads[f"{layer}.tt.W1"] += dAgg.T @ c.T_prev
    grads[f"{layer}.tt.W2"] += dAgg.T @ c.Mtt_T
    grads[f"{layer}.tt.b"] += dAgg.sum(axis=0)
    dT_prev = dAgg @ A[f"{layer}.tt.W1"] + view.M_tt.T @ (dAgg @ A[f"{layer}.tt.W2"])

    dZh, da_h = _prelu_back(dH, c.Zh, a)
    da += da_h
    grads[f"{layer}.ht.W2"] += dZh.T @ c.Mht_T
    grads[f"{layer}.ht.b"] += dZh.sum(axis=0)
    dT_prev += view.M_ht.T @ (dZh @ A[f"{layer}.ht.W2"])

    dZu, da_u = _prelu_back(dU, c.Zu, a)
    da += da_u
    grads[f"{layer}.ut.W2"] += dZu.T @ c.Mut_T
    grads[f"{layer}.ut.b"] += dZu.sum(axis=0)
    dT_prev += view.M_ut.T @ (dZu @ A[f"{layer}.ut.W2"])

    grads[f"{layer}.a"] += da
    return dT_prev


def forward(view: GraphView, X: np.ndarray, params: ModelParams,
            return_cache: bool = False):
    """Full two-layer pass. Returns tweet, hashtag, and URL embeddings
    (hashtag/URL rows are the layer-2 Eq.-style aggregates)."""
    if X.shape[0] != view.n_t:
        raise DataError(
            f"feature rows ({X.shape[0]}) must match view tweet count ({view.n_t})")
    T1, _, _, c1 = _layer_forward(view, X, params, "l1")
    T2, H2, U2, c2 = _layer_forward(view, T1, params, "l2")
    if return_cache:
        return T2, H2, U2, (c1, c2)
    return T2, H2, U2


def _encode_backward(view: GraphView, dT2: np.ndarray, caches, params: ModelParams,
                     grads: dict) -> None:
    c1, c2 = caches
    dT1 = _layer_backward(view, dT2, c2, params, "l2", grads)
    _layer_backward(view, dT1, c1, params, "l1", grads)


def loss_and_grads(view: GraphView, X_pos: np.ndarray, X_neg: np.ndarray,
                   params: ModelParams):
    """DGI objective over the view's seed tweets: positive pass on X_pos,
    negative pass on X_neg (same structure), summary from the positive pass.

    Returns (loss, grads keyed like params.arrays, aux dict with scores).
    """
    A = params.arrays
    W_D = A["disc.W"]
    seeds = view.seeds
    B = seeds.size
    if B == 0:
        raise DataError("view has no seed tweets")

    T2p, _, _, cache_p = forward(view, X_pos, params, return_cache=True)
    T2n, _, _, cache_n = forward(view, X_neg, params, return_cache=True)
    Xp = T2p[seeds]
    Xn = T2n[seeds]

    m = Xp.mean(axis=0)
    s = _sigmoid(m)
    Ws = W_D @ s
    logit_p = Xp @ Ws
    logit_n = Xn @ Ws
    dp = _sigmoid(logit_p)
    dn = _sigmoid(logit_n)
    loss = dgi_loss(dp, dn)
    if not np.isfinite(loss):
        raise NumericError("non-finite DGI loss")

    # d loss / d logit; clamped scores never saturate to exactly 0/1 here.
    n_total = 2 * B
    g_p = -(1.0 - dp) / n_total
    g_n = dn / n_total

    grads = params.zeros_like()
    # logit_i = x_i^T W_D s, so dW_D = (sum_i g_i x_i) s^T and ds = W_D^T sum_i g_i x_i.
    v = (g_p[:, None] * Xp).sum(axis=0) + (g_n[:, None] * Xn).sum(axis=0)
    grads["disc.W"] += np.outer(v, s)
    ds = W_D.T @ v
    dXp_disc = g_p[:, None] * Ws[None, :]
    dXn_disc = g_n[:, None] * Ws[None, :]

    dm = ds * s * (1.0 - s)
    dXp = dXp_disc + dm[None, :] / B

    dT2p = np.zeros_like(T2p)
    np.add.at(dT2p, seeds, dXp)
    dT2n = np.zeros_like(T2n)
    np.add.at(dT2n, seeds, dXn_disc)

    _encode_backward(view, dT2p, cache_p, params, grads)
    _encode_backward(view, dT2n, cache_n, params, grads)

    for k, v in grads.items():
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite gradient in parameter block {k}")
    aux = {"pos_scores": dp, "neg_scores": dn, "summary": s}
    return loss, grads, aux
