"""Downstream analytics over clustered contexts: membership and overlap,
per-context user networks, weighted PageRank, percentile ranks, rank
correlation, Markov transition dynamics, and the label-propagation
validation harness."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from .clustering import NOISE
from .errors import DataError, NumericError
from .hetgraph import HeteroGraph
from .records import KIND_RETWEET, MessageRecord


@dataclass
class Context:
    day: str
    cluster_id: int
    tweets: set[str] = field(default_factory=set)
    members: set[str] = field(default_factory=set)

    @property
    def key(self) -> tuple[str, int]:
        return (self.day, self.cluster_id)


def assign_contexts(labels: list[tuple[str, str, int]],
                    records: list[MessageRecord]) -> list[Context]:
    """labels: (tweet_id, day, cluster_id) rows; noise rows are skipped.
    Retweets inherit the original's context; a user is a member when they
    authored an in-context tweet or retweeted one."""
    by_key: dict[tuple[str, int], Context] = {}
    tweet_ctx: dict[str, Context] = {}
    for tid, day, cid in labels:
        if cid == NOISE:
            continue
        ctx = by_key.setdefault((day, cid), Context(day=day, cluster_id=cid))
        ctx.tweets.add(tid)
        tweet_ctx[tid] = ctx
    for r in records:
        if r.kind == KIND_RETWEET:
            ctx = tweet_ctx.get(r.retweet_of or "")
            if ctx is not None:
                ctx.members.add(r.author_id)
        else:
            ctx = tweet_ctx.get(r.id)
            if ctx is not None:
                ctx.members.add(r.author_id)
    return sorted(by_key.values(), key=lambda c: c.key)


def overlap_matrix(contexts: list[Context], top_k: int = 15,
                   directional: bool = False) -> tuple[np.ndarray, list[Context]]:
    """Pairwise membership overlap (percent) among the top_k contexts by
    member count. Jaccard by default; `directional` gives |A∩B|/|A|. The
    diagonal is forced to 0 for display."""
    chosen = sorted(contexts, key=lambda c: (-len(c.members), c.key))[:top_k]
    k = len(chosen)
    M = np.zeros((k, k))
    for i, a in enumerate(chosen):
        for j, b in enumerate(chosen):
            if i == j:
                continue
            inter = len(a.members & b.members)
            denom = len(a.members) if directional else len(a.members | b.members)
            M[i, j] = 100.0 * inter / denom if denom else 0.0
    return M, chosen


@dataclass
class UserNetwork:
    users: list[str] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)
    edges: dict[tuple[int, int], float] = field(default_factory=dict)

    def intern(self, user: str) -> int:
        if user not in self.index:
            self.index[user] = len(self.users)
            self.users.append(user)
        return self.index[user]

    def add_edge(self, src: str, dst: str, weight: float = 1.0) -> None:
        if src == dst:
            return
        i, j = self.intern(src), self.intern(dst)
        self.edges[(i, j)] = self.edges.get((i, j), 0.0) + weight

    @property
    def n_users(self) -> int:
        return len(self.users)


def build_user_network(context: Context, records: list[MessageRecord]) -> UserNetwork:
    """Directed interaction edges author -> target for every mention, retweet,
    reply, and quote emitted from inside the context."""
    net = UserNetwork()
    author_of = {r.id: r.author_id for r in records}
    in_ctx = context.tweets

    def target_author(tid):
        return author_of.get(tid)

    for r in records:
        if r.kind == KIND_RETWEET:
            if r.retweet_of in in_ctx:
                ta = target_author(r.retweet_of)
                if ta:
                    net.add_edge(r.author_id, ta)
                for m in r.mentions:
                    net.add_edge(r.author_id, m)
            continue
        if r.id not in in_ctx:
            continue
        for tid in (r.reply_to, r.quote_of):
            if tid:
                ta = target_author(tid)
                if ta:
                    net.add_edge(r.author_id, ta)
        for m in r.mentions:
            net.add_edge(r.author_id, m)
    return net


def combine_networks(nets: list[UserNetwork]) -> UserNetwork:
    out = UserNetwork()
    for net in nets:
        for (i, j), w in sorted(net.edges.items()):
            out.add_edge(net.users[i], net.users[j], w)
        for u in net.users:
            out.intern(u)
    return out


def pagerank(net: UserNetwork, damping: float = 0.85, tol: float = 1e-10,
             max_iters: int = 200) -> dict[str, float]:
    """Weighted PageRank by power iteration: rows normalized by out-weight,
    dangling mass spread uniformly, uniform teleport. Converges when the L1
    change drops below tol."""
    n = net.n_users
    if n == 0:
        raise DataError("pagerank requires at least one user")
    out_weight = np.zeros(n)
    for (i, _), w in net.edges.items():
        out_weight[i] += w
    srcs = np.array([i for (i, _) in net.edges], dtype=np.int64)
    dsts = np.array([j for (_, j) in net.edges], dtype=np.int64)
    ws = np.array([w for w in net.edges.values()], dtype=np.float64)
    norm_w = ws / out_weight[srcs] if len(ws) else ws
    dangling = out_weight == 0

    r = np.full(n, 1.0 / n)
    for _ in range(max_iters):
        flow = np.zeros(n)
        if len(ws):
            np.add.at(flow, dsts, r[srcs] * norm_w)
        flow += r[dangling].sum() / n
        r_new = (1.0 - damping) / n + damping * flow
        delta = float(np.abs(r_new - r).sum())
        r = r_new
        if delta < tol:
            return {u: float(r[i]) for i, u in enumerate(net.users)}
    raise NumericError(f"pagerank did not converge; residual {delta:.3e}")


def percentile_rank(scores: dict[str, float], user: str) -> float:
    """100 * fraction of *other* users with a strictly lower score."""
    if user not in scores:
        raise DataError(f"unknown user {user!r}")
    n = len(scores)
    if n == 1:
        return 100.0
    mine = scores[user]
    below = sum(1 for u, v in scores.items() if u != user and v < mine)
    return 100.0 * below / (n - 1)


def kendall_tau(rank_a: dict[str, float], rank_b: dict[str, float]) -> float:
    """Tie-corrected (tau-b) rank correlation over a shared key set."""
    if set(rank_a) != set(rank_b):
        raise DataError("kendall_tau requires identical key sets")
    keys = sorted(rank_a)
    n = len(keys)
    if n < 2:
        raise DataError("kendall_tau requires n >= 2")
    a = np.array([rank_a[k] for k in keys])
    b = np.array([rank_b[k] for k in keys])
    sa = np.sign(a[:, None] - a[None, :])
    sb = np.sign(b[:, None] - b[None, :])
    iu = np.triu_indices(n, k=1)
    prod = sa[iu] * sb[iu]
    concordant_minus_discordant = int(prod.sum())
    ties_a = int((sa[iu] == 0).sum())
    ties_b = int((sb[iu] == 0).sum())
    n0 = n * (n - 1) // 2
    denom = math.sqrt((n0 - ties_a) * (n0 - ties_b))
    if denom == 0:
        raise DataError("kendall_tau undefined: a ranking is constant")
    return concordant_minus_discordant / denom


@dataclass
class TransitionResult:
    contexts: list[tuple[str, int]]
    counts: np.ndarray
    probabilities: np.ndarray
    kept_edges: list[tuple[int, int, float]]
    trimmed_only_edge_rows: list[int]
    self_loop_counts: np.ndarray


def transition_matrix(contexts: list[Context], records: list[MessageRecord],
                      trim: float = 0.05) -> TransitionResult:
    """Markov transitions: per user, order context engagements by timestamp,
    collapse consecutive repeats, count consecutive pairs, row-normalize.
    Edges at or above `trim` survive into the display list."""
    keys = [c.key for c in contexts]
    key_idx = {k: i for i, k in enumerate(keys)}
    tweet_ctx: dict[str, int] = {}
    for c in contexts:
        for tid in c.tweets:
            tweet_ctx[tid] = key_idx[c.key]

    engagements: dict[str, list[tuple]] = defaultdict(list)
    for order, r in enumerate(records):
        tid = r.retweet_of if r.kind == KIND_RETWEET else r.id
        ctx = tweet_ctx.get(tid or "")
        if ctx is None:
            continue
        engagements[r.author_id].append((r.created_at, order, ctx))

    k = len(keys)
    counts = np.zeros((k, k), dtype=np.float64)
    self_loops = np.zeros(k, dtype=np.float64)
    for user in sorted(engagements):
        seq = [c for _, _, c in sorted(engagements[user])]
        collapsed = []
        for c in seq:
            if collapsed and collapsed[-1] == c:
                self_loops[c] += 1
                continue
            collapsed.append(c)
        for a, b in zip(collapsed, collapsed[1:]):
            counts[a, b] += 1

    probs = np.zeros_like(counts)
    row_sums = counts.sum(axis=1)
    nonzero = row_sums > 0
    probs[nonzero] = counts[nonzero] / row_sums[nonzero, None]

    kept = []
    trimmed_only = []
    for i in range(k):
        row = [(i, j, float(probs[i, j])) for j in range(k) if probs[i, j] > 0]
        survivors = [e for e in row if e[2] >= trim]
        kept.extend(survivors)
        if row and not survivors:
            trimmed_only.append(i)
    return TransitionResult(keys, counts, probs, kept, trimmed_only, self_loops)


def propagate_labels(url_labels: dict[str, str], g: HeteroGraph,
                     steps: int = 2) -> tuple[dict[str, str], int]:
    """Two-step propagation: tweets using a labeled URL take its label, then
    tweets adjacent (tweet-tweet) to those take the same label. Tweets seeing
    >= 2 distinct labels are dropped and counted."""
    if steps != 2:
        raise DataError("only the 2-step scheme is supported")
    step1: dict[int, set[str]] = defaultdict(set)
    for url, label in url_labels.items():
        ui = g.url_index.get(url)
        if ui is None:
            continue
        for t in g.ut[ui]:
            step1[t].add(label)
    conflicts = 0
    clean1: dict[int, str] = {}
    for t, lbls in step1.items():
        if len(lbls) > 1:
            conflicts += 1
        else:
            clean1[t] = next(iter(lbls))
    # Conflicted step-1 tweets stay dropped: they neither keep nor pass labels.
    step2: dict[int, set[str]] = defaultdict(set)
    for t, label in clean1.items():
        for nb in g.tt[t]:
            if nb not in step1:
                step2[nb].add(label)
    out = {g.tweet_ids[t]: label for t, label in clean1.items()}
    for t, lbls in step2.items():
        if len(lbls) > 1:
            conflicts += 1
        else:
            out[g.tweet_ids[t]] = next(iter(lbls))
    return out, conflicts


def nearest_pairs(embeddings: np.ndarray, ids: list[str],
                  retweet_counts: dict[str, int], top_n_nodes: int = 500,
                  top_k_pairs: int = 5) -> list[tuple[str, str, float]]:
    """All-pairs Euclidean scan among the top_n_nodes ids by cumulative
    retweet count; returns the top_k_pairs closest, ties broken by id."""
    ranked = sorted(ids, key=lambda i: (-retweet_counts.get(i, 0), i))[:top_n_nodes]
    pos = {ident: k for k, ident in enumerate(ids)}
    pairs = []
    for i in range(len(ranked)):
        for j in range(i + 1, len(ranked)):
            a, b = sorted((ranked[i], ranked[j]))
            d = float(np.linalg.norm(embeddings[pos[a]] - embeddings[pos[b]]))
            pairs.append((a, b, d))
    pairs.sort(key=lambda p: (p[2], p[0], p[1]))
    return pairs[:top_k_pairs]


def partition_quality(labels: dict[str, int], ground_truth: dict[str, int]
                      ) -> dict[str, float]:
    """ARI, NMI, and majority purity over non-noise items; the noise fraction
    is reported alongside."""
    if set(labels) != set(ground_truth):
        raise DataError("partition_quality requires identical item sets")
    items = sorted(labels)
    pred = np.array([labels[i] for i in items])
    true = np.array([ground_truth[i] for i in items])
    keep = pred != NOISE
    noise_fraction = float((~keep).mean()) if len(items) else 0.0
    if keep.sum() == 0:
        return {"ari": 0.0, "nmi": 0.0, "purity": 0.0, "noise_fraction": noise_fraction}
    pred, true = pred[keep], true[keep]
    contingency: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for p, t in zip(pred, true):
        contingency[p][t] += 1
    purity = sum(max(row.values()) for row in contingency.values()) / len(pred)
    return {
        "ari": float(adjusted_rand_score(true, pred)),
        "nmi": float(normalized_mutual_info_score(true, pred)),
        "purity": float(purity),
        "noise_fraction": noise_fraction,
    }
