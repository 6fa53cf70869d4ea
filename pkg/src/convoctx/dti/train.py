"""Minibatch training loop: neighbor-sampled batches, feature shuffling for
negatives, Adam updates, early stopping on epoch-mean loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, NumericError
from ..hetgraph import HeteroGraph, sample_subgraph
from .model import ModelParams, corrupt, loss_and_grads, forward, view_from_graph, view_from_subgraph


@dataclass
class TrainConfig:
    batch_size: int = 24000
    fanout: int = 20
    sample_depth: int = 3
    lr: float = 0.001
    epochs: int = 25
    patience: int = 3
    hidden_dim: int = 128
    seed: int = 0

    def validate(self) -> None:
        for name in ("batch_size", "fanout", "sample_depth", "epochs",
                     "patience", "hidden_dim"):
            if getattr(self, name) < 1:
                raise DataError(f"TrainConfig.{name} must be positive")
        if self.lr < 0:
            raise DataError("TrainConfig.lr must be nonnegative")


@dataclass
class TrainHistory:
    epoch_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = float("inf")
    stopped_early: bool = False


class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, flat_params: np.ndarray, flat_grads: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * flat_grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * flat_grads ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return flat_params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(g: HeteroGraph, X: np.ndarray,
          config: TrainConfig | None = None) -> tuple[ModelParams, TrainHistory]:
    """Returns the parameters of the best epoch (by epoch-mean loss) and the
    per-epoch loss history. Deterministic given config.seed."""
    config = config or TrainConfig()
    config.validate()
    rng = np.random.default_rng(config.seed)
    X32 = np.ascontiguousarray(X, dtype=np.float32)
    params = ModelParams.init(X.shape[1], config.hidden_dim, rng, dtype=np.float32)
    flat = params.pack().astype(np.float64)
    adam = Adam(flat.size, config.lr)
    history = TrainHistory()
    best_params = params.copy()
    n = g.n_tweets
    if n == 0:
        raise DataError("cannot train on an empty graph")

    since_best = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            seeds = order[start:start + config.batch_size].tolist()
            sub = sample_subgraph(g, seeds, config.fanout, config.sample_depth, rng)
            view = view_from_subgraph(sub)
            Xb = X32[view.tweet_rows]
            Xneg = corrupt(Xb, rng)
            loss, grads, _ = loss_and_grads(view, Xb, Xneg, params)
            if not np.isfinite(loss):
                raise NumericError(f"NaN loss in epoch {epoch}")
            losses.append(loss)
            if config.lr > 0:
                gflat = ModelParams(grads).pack().astype(np.float64)
                flat = adam.step(flat, gflat)
                params.unpack(flat.astype(np.float32))
                flat = params.pack().astype(np.float64)
        mean_loss = float(np.mean(losses))
        history.epoch_loss.append(mean_loss)
        if mean_loss < history.best_loss:
            history.best_loss = mean_loss
            history.best_epoch = epoch
            best_params = params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                history.stopped_early = True
                break
    return best_params, history


def embed_all(g: HeteroGraph, X: np.ndarray, params: ModelParams
              ) -> tuple[np.ndarray, dict[str, int], np.ndarray, np.ndarray]:
    """Full-graph embeddings. The id->row map covers every tweet plus every
    collapsed retweet (pointing at its original's row)."""
    view = view_from_graph(g)
    T2, H2, U2 = forward(view, np.ascontiguousarray(X, dtype=params.arrays["disc.W"].dtype),
                         params)
    id_rows = {tid: i for i, tid in enumerate(g.tweet_ids)}
    for rid, idx in g.retweet_map.items():
        id_rows[rid] = idx
    return T2, id_rows, H2, U2
