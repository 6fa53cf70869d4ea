"""Immutable typed-node graph over messages, hashtags, and URLs.

Node types: tweet, hashtag, URL. Edge types: tweet-tweet (replies/quotes),
tweet-hashtag, tweet-URL. Retweets are collapsed onto their original message
and never appear as nodes; a retweet_map records the redirection.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import DataError
from .records import KIND_RETWEET, MessageRecord

_PLATFORM_DOMAINS = ("twitter.com", "x.com")
_STATUS_RE = re.compile(r"(?:twitter\.com|x\.com)/[^/]+/status(?:es)?/(\d+)")


@dataclass
class BuildReport:
    n_tweets: int = 0
    n_hashtags: int = 0
    n_urls: int = 0
    n_tt_edges: int = 0
    n_th_edges: int = 0
    n_tu_edges: int = 0
    n_retweets: int = 0
    n_dangling_refs: int = 0
    n_dropped_retweets: int = 0
    warnings: list[str] = field(default_factory=list)

    def add_warning(self, msg: str, cap: int = 200) -> None:
        if len(self.warnings) < cap:
            self.warnings.append(msg)


class HeteroGraph:
    """Built once, then read-only. Neighbor lists are sorted ascending."""

    def __init__(self, tweet_ids, hashtag_ids, url_ids, directed_tt=False):
        self.tweet_ids: list[str] = list(tweet_ids)
        self.hashtag_ids: list[str] = list(hashtag_ids)
        self.url_ids: list[str] = list(url_ids)
        self.tweet_index = {t: i for i, t in enumerate(self.tweet_ids)}
        self.hashtag_index = {h: i for i, h in enumerate(self.hashtag_ids)}
        self.url_index = {u: i for i, u in enumerate(self.url_ids)}
        self.directed_tt = directed_tt
        n_t, n_h, n_u = len(tweet_ids), len(hashtag_ids), len(url_ids)
        self.tt: list[list[int]] = [[] for _ in range(n_t)]
        self.tt_out: list[list[int]] = [[] for _ in range(n_t)]
        self.tt_in: list[list[int]] = [[] for _ in range(n_t)]
        self.th: list[list[int]] = [[] for _ in range(n_t)]
        self.tu: list[list[int]] = [[] for _ in range(n_t)]
        self.ht: list[list[int]] = [[] for _ in range(n_h)]
        self.ut: list[list[int]] = [[] for _ in range(n_u)]
        self.retweet_map: dict[str, int] = {}

    @property
    def n_tweets(self) -> int:
        return len(self.tweet_ids)

    @property
    def n_hashtags(self) -> int:
        return len(self.hashtag_ids)

    @property
    def n_urls(self) -> int:
        return len(self.url_ids)

    def neighbors(self, node: int, edge_type: str) -> list[int]:
        """Sorted neighbor indices. edge_type one of tt, tt_out, tt_in, th,
        tu, ht, ut (first letter names the endpoint type of `node`)."""
        tables = {
            "tt": self.tt, "tt_out": self.tt_out, "tt_in": self.tt_in,
            "th": self.th, "tu": self.tu, "ht": self.ht, "ut": self.ut,
        }
        if edge_type not in tables:
            raise DataError(f"unknown edge type {edge_type!r}")
        table = tables[edge_type]
        if not 0 <= node < len(table):
            raise DataError(f"node index {node} out of range for edge type {edge_type}")
        return table[node]

    def _finalize(self):
        for table in (self.tt, self.tt_out, self.tt_in, self.th, self.tu, self.ht, self.ut):
            for i, lst in enumerate(table):
                table[i] = sorted(set(lst))


def quote_target_from_url(canonical_url: str) -> str | None:
    """Extract the quoted message id from a platform status URL, if any."""
    m = _STATUS_RE.search(canonical_url)
    return m.group(1) if m else None


def is_platform_url(canonical_url: str) -> bool:
    domain = canonical_url.split("/", 1)[0]
    return any(domain == d or domain.endswith("." + d) for d in _PLATFORM_DOMAINS)


def build_graph(records: list[MessageRecord], directed_tt: bool = False
                ) -> tuple[HeteroGraph, BuildReport]:
    report = BuildReport()
    by_id = {r.id: r for r in records}
    tweets = [r for r in records if r.kind != KIND_RETWEET]
    retweets = [r for r in records if r.kind == KIND_RETWEET]

    hashtag_ids: list[str] = []
    hseen: set[str] = set()
    url_ids: list[str] = []
    useen: set[str] = set()
    for r in tweets:
        for h in r.canonical_hashtags:
            if h not in hseen:
                hseen.add(h)
                hashtag_ids.append(h)
        for u in r.canonical_urls:
            if not is_platform_url(u) and u not in useen:
                useen.add(u)
                url_ids.append(u)

    g = HeteroGraph([r.id for r in tweets], hashtag_ids, url_ids, directed_tt)

    # Resolve retweet chains to their root original.
    for r in retweets:
        target, hops = r.retweet_of, 0
        while target is not None and hops < len(records) + 1:
            if target in g.tweet_index:
                g.retweet_map[r.id] = g.tweet_index[target]
                break
            t_rec = by_id.get(target)
            if t_rec is None or t_rec.kind != KIND_RETWEET:
                break
            target = t_rec.retweet_of
            hops += 1
        if r.id not in g.retweet_map:
            report.n_dropped_retweets += 1
            report.add_warning(f"retweet {r.id}: unresolvable original {r.retweet_of}")
    report.n_retweets = len(g.retweet_map)

    def resolve_tweet(target_id: str) -> int | None:
        if target_id in g.tweet_index:
            return g.tweet_index[target_id]
        if target_id in g.retweet_map:
            return g.retweet_map[target_id]
        return None

    def add_tt(src: int, dst: int) -> None:
        if src == dst:
            return
        g.tt[src].append(dst)
        g.tt[dst].append(src)
        g.tt_out[src].append(dst)
        g.tt_in[dst].append(src)
        report.n_tt_edges += 1

    for r in tweets:
        i = g.tweet_index[r.id]
        targets = []
        if r.reply_to:
            targets.append(r.reply_to)
        if r.quote_of:
            targets.append(r.quote_of)
        for u in r.canonical_urls:
            qt = quote_target_from_url(u)
            if qt:
                targets.append(qt)
        for t_id in targets:
            j = resolve_tweet(t_id)
            if j is None:
                report.n_dangling_refs += 1
            else:
                add_tt(i, j)
        for h in r.canonical_hashtags:
            hj = g.hashtag_index[h]
            g.th[i].append(hj)
            g.ht[hj].append(i)
        for u in r.canonical_urls:
            if u in g.url_index:
                uj = g.url_index[u]
                g.tu[i].append(uj)
                g.ut[uj].append(i)

    g._finalize()
    report.n_tweets = g.n_tweets
    report.n_hashtags = g.n_hashtags
    report.n_urls = g.n_urls
    report.n_th_edges = sum(len(x) for x in g.th)
    report.n_tu_edges = sum(len(x) for x in g.tu)
    report.n_tt_edges = sum(len(x) for x in g.tt) // 2
    return g, report


@dataclass
class SampledSubgraph:
    """Layered neighbor sample rooted at seed tweets.

    Node lists hold global indices in discovery order; per-node sampled
    neighbor lists are in local indices. Nodes on the last frontier carry
    empty neighbor lists.
    """
    tweets: list[int]
    hashtags: list[int]
    urls: list[int]
    seed_local: list[int]
    tt: list[list[int]]
    th: list[list[int]]
    tu: list[list[int]]
    ht: list[list[int]]
    ut: list[list[int]]

    @property
    def n_tweets(self) -> int:
        return len(self.tweets)


def _sample(neigh: list[int], fanout: int, rng) -> list[int]:
    if len(neigh) <= fanout:
        return list(neigh)
    idx = rng.choice(len(neigh), size=fanout, replace=False)
    return [neigh[k] for k in sorted(idx)]


def sample_subgraph(g: HeteroGraph, seeds: list[int], fanout: int, depth: int,
                    rng) -> SampledSubgraph:
    """BFS sampling: at each of `depth` iterations, every frontier node
    samples at most `fanout` distinct neighbors per incident edge type,
    uniformly without replacement. Deterministic given the rng state."""
    if fanout < 1 or depth < 1:
        raise DataError("fanout and depth must be >= 1")
    t_local: dict[int, int] = {}
    h_local: dict[int, int] = {}
    u_local: dict[int, int] = {}
    tweets: list[int] = []
    hashtags: list[int] = []
    urls: list[int] = []

    def intern(kind: str, gidx: int) -> int:
        table, order = {
            "t": (t_local, tweets), "h": (h_local, hashtags), "u": (u_local, urls),
        }[kind]
        if gidx not in table:
            table[gidx] = len(order)
            order.append(gidx)
        return table[gidx]

    for s in seeds:
        if not 0 <= s < g.n_tweets:
            raise DataError(f"seed index {s} out of range")
        intern("t", s)
    seed_local = [t_local[s] for s in seeds]

    sampled_t: dict[int, dict[str, list[int]]] = {}
    sampled_h: dict[int, list[int]] = {}
    sampled_u: dict[int, list[int]] = {}
    frontier: list[tuple[str, int]] = [("t", s) for s in tweets]
    for _ in range(depth):
        nxt: list[tuple[str, int]] = []
        for kind, gidx in frontier:
            if kind == "t":
                if gidx in sampled_t:
                    continue
                per = {}
                for et, target_kind in (("tt", "t"), ("th", "h"), ("tu", "u")):
                    chosen = _sample(g.neighbors(gidx, et), fanout, rng)
                    per[et] = chosen
                    for n in chosen:
                        if (target_kind == "t" and n not in t_local) or \
                           (target_kind == "h" and n not in h_local) or \
                           (target_kind == "u" and n not in u_local):
                            intern(target_kind, n)
                            nxt.append((target_kind, n))
                sampled_t[gidx] = per
            elif kind == "h":
                if gidx in sampled_h:
                    continue
                chosen = _sample(g.neighbors(gidx, "ht"), fanout, rng)
                sampled_h[gidx] = chosen
                for n in chosen:
                    if n not in t_local:
                        intern("t", n)
                        nxt.append(("t", n))
            else:
                if gidx in sampled_u:
                    continue
                chosen = _sample(g.neighbors(gidx, "ut"), fanout, rng)
                sampled_u[gidx] = chosen
                for n in chosen:
                    if n not in t_local:
                        intern("t", n)
                        nxt.append(("t", n))
        frontier = nxt

    sub = SampledSubgraph(
        tweets=tweets, hashtags=hashtags, urls=urls, seed_local=seed_local,
        tt=[[] for _ in tweets], th=[[] for _ in tweets], tu=[[] for _ in tweets],
        ht=[[] for _ in hashtags], ut=[[] for _ in urls],
    )
    for gidx, per in sampled_t.items():
        li = t_local[gidx]
        sub.tt[li] = [t_local[n] for n in per["tt"]]
        sub.th[li] = [h_local[n] for n in per["th"]]
        sub.tu[li] = [u_local[n] for n in per["tu"]]
    for gidx, chosen in sampled_h.items():
        sub.ht[h_local[gidx]] = [t_local[n] for n in chosen]
    for gidx, chosen in sampled_u.items():
        sub.ut[u_local[gidx]] = [t_local[n] for n in chosen]
    return sub
