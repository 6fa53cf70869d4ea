"""Deterministic synthetic conversation datasets with planted contexts,
planted hub users, and planted transition dynamics. The ground truth doubles
as the oracle for the end-to-end tests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import DataError
from .features import WordVectorTable


@dataclass
class SynthConfig:
    n_contexts: int = 4
    tweets_per_context: int = 500
    users_per_context: int = 40
    cross_context_user_fraction: float = 0.0
    context_user_counts: list[int] | None = None  # overrides users_per_context
    context_tweet_counts: list[int] | None = None  # overrides tweets_per_context

    shared_vocab_size: int = 120
    context_vocab_size: int = 60
    shared_vocab_fraction: float = 0.5  # 1.0 = identical vocabularies everywhere
    context_token_bias: float = 0.0  # shared-pool draws prefer a per-context slice
    tokens_per_tweet: int = 12

    hashtags_per_context: int = 4
    shared_hashtags: int = 0
    hashtags_per_tweet: int = 2
    urls_per_context: int = 3
    url_prob: float = 0.5

    reply_prob: float = 0.6
    quote_prob: float = 0.1
    anchor_tweets: int = 10
    anchor_bias: float = 0.7

    hubs_per_context: int = 1
    base_retweet_rate: float = 0.2
    hub_retweet_rate: float = 3.0
    mention_prob: float = 0.3

    languages: list[str] = field(default_factory=lambda: ["en"])
    missing_lang_fraction: float = 0.1
    feature_dim: int = 300

    day: str = "2020-11-03"
    span_hours: int = 20

    planted_transitions: list[list[float]] | None = None
    transition_scale: int = 10

    seed: int = 0

    def users_in_context(self, c: int) -> int:
        if self.context_user_counts is not None:
            return self.context_user_counts[c]
        return self.users_per_context

    def tweets_in_context(self, c: int) -> int:
        if self.context_tweet_counts is not None:
            return self.context_tweet_counts[c]
        return self.tweets_per_context

    def validate(self) -> None:
        if self.n_contexts < 1 or self.tweets_per_context < 1:
            raise DataError("need at least one context and one tweet per context")
        if self.context_tweet_counts is not None:
            if len(self.context_tweet_counts) != self.n_contexts:
                raise DataError("context_tweet_counts must have one entry per context")
            if any(n < 1 for n in self.context_tweet_counts):
                raise DataError("need at least one tweet per context")
        for c in range(self.n_contexts):
            if self.hubs_per_context > self.users_in_context(c):
                raise DataError("more planted hubs than users in a context")
        for p in (self.cross_context_user_fraction, self.shared_vocab_fraction,
                  self.context_token_bias,
                  self.url_prob, self.reply_prob, self.quote_prob,
                  self.mention_prob, self.missing_lang_fraction):
            if not 0.0 <= p <= 1.0:
                raise DataError("probabilities must lie in [0, 1]")
        if self.planted_transitions is not None:
            T = self.planted_transitions
            if len(T) != self.n_contexts or any(len(row) != self.n_contexts for row in T):
                raise DataError("planted transition matrix must be n_contexts square")


@dataclass
class GroundTruth:
    context_of: dict[str, int]
    user_contexts: dict[str, list[int]]
    hubs: list[list[str]]
    context_sizes: list[int]
    planted_transitions: list[list[float]] | None
    transition_counts: list[list[int]] | None

    def to_json(self) -> dict:
        return {
            "context_of": self.context_of,
            "user_contexts": self.user_contexts,
            "hubs": self.hubs,
            "context_sizes": self.context_sizes,
            "planted_transitions": self.planted_transitions,
            "transition_counts": self.transition_counts,
        }


def _context_users(config: SynthConfig) -> tuple[list[list[str]], dict[str, list[int]]]:
    users_per_ctx: list[list[str]] = []
    membership: dict[str, list[int]] = {}
    for c in range(config.n_contexts):
        n = config.users_in_context(c)
        n_shared = int(round(config.cross_context_user_fraction * n))
        own = [f"u{c}_{i}" for i in range(n - n_shared)]
        users_per_ctx.append(own)
        for u in own:
            membership[u] = [c]
    # Shared users span consecutive context pairs.
    for c in range(config.n_contexts):
        n = config.users_in_context(c)
        n_shared = int(round(config.cross_context_user_fraction * n))
        if config.n_contexts < 2:
            break
        other = (c + 1) % config.n_contexts
        for i in range(n_shared):
            u = f"s{min(c, other)}_{max(c, other)}_{i}"
            for ctx in (c, other):
                if u not in membership:
                    membership[u] = []
                if ctx not in membership[u]:
                    membership[u].append(ctx)
                if u not in users_per_ctx[ctx]:
                    users_per_ctx[ctx].append(u)
    return users_per_ctx, membership


def generate(config: SynthConfig) -> tuple[list[dict], GroundTruth]:
    """Raw records (ingest-ready dicts, chronological) plus ground truth."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    day_start = datetime.fromisoformat(config.day).replace(tzinfo=timezone.utc)
    step = timedelta(seconds=max(1, config.span_hours * 3600
                                 // max(1, config.n_contexts * config.tweets_per_context * 4)))

    shared_vocab = [f"w{i}" for i in range(config.shared_vocab_size)]
    ctx_vocab = [[f"c{c}w{i}" for i in range(config.context_vocab_size)]
                 for c in range(config.n_contexts)]
    # Disjoint slices of the shared vocabulary; every word still reachable
    # from every context through the uniform component, so the vocabularies
    # stay identical while usage frequencies tilt per context.
    slice_size = max(1, config.shared_vocab_size // config.n_contexts)
    preferred = [shared_vocab[(c * slice_size) % config.shared_vocab_size:
                              (c * slice_size) % config.shared_vocab_size + slice_size]
                 for c in range(config.n_contexts)]
    shared_tags = [f"sharedtag{i}" for i in range(config.shared_hashtags)]
    ctx_tags = [[f"ctx{c}tag{i}" for i in range(config.hashtags_per_context)] + shared_tags
                for c in range(config.n_contexts)]
    ctx_urls = [[f"https://example{c}.org/story{i}" for i in range(config.urls_per_context)]
                for c in range(config.n_contexts)]

    users_per_ctx, membership = _context_users(config)
    hubs = [users_per_ctx[c][:config.hubs_per_context] for c in range(config.n_contexts)]

    records: list[dict] = []
    context_of: dict[str, int] = {}
    tick = 0

    def next_time() -> str:
        nonlocal tick
        t = day_start + tick * step
        tick += 1
        return t.isoformat()

    def pick(seq):
        return seq[int(rng.integers(len(seq)))]

    def make_tweet(tid: str, c: int, author: str, when: str) -> dict:
        ctx_tweets = [r for r in by_context[c]]
        tokens = []
        for _ in range(config.tokens_per_tweet):
            if rng.random() < config.shared_vocab_fraction:
                if config.context_token_bias > 0.0 and rng.random() < config.context_token_bias:
                    pool = preferred[c]
                else:
                    pool = shared_vocab
            else:
                pool = ctx_vocab[c]
            tokens.append(pick(pool))
        tags = [str(t) for t in rng.choice(ctx_tags[c],
                                           size=min(config.hashtags_per_tweet, len(ctx_tags[c])),
                                           replace=False)]
        urls = [pick(ctx_urls[c])] if ctx_urls[c] and rng.random() < config.url_prob else []
        mentions = []
        if hubs[c] and rng.random() < config.mention_prob:
            mentions.append(pick(hubs[c]))
        reply_to = quote_of = None
        if ctx_tweets and rng.random() < config.reply_prob:
            anchors = ctx_tweets[:config.anchor_tweets]
            target = pick(anchors) if rng.random() < config.anchor_bias else pick(ctx_tweets)
            reply_to = target
        elif ctx_tweets and rng.random() < config.quote_prob:
            quote_of = pick(ctx_tweets)
        lang = None if rng.random() < config.missing_lang_fraction else pick(config.languages)
        text = " ".join(tokens)
        if tags:
            text += " " + " ".join("#" + t for t in tags)
        if mentions:
            text += " " + " ".join("@" + m for m in mentions)
        if urls:
            text += " " + urls[0]
        return {
            "id": tid, "author_id": author, "text": text, "lang": lang,
            "created_at": when, "hashtags": ["#" + t for t in tags], "urls": urls,
            "mentions": mentions, "reply_to": reply_to, "quote_of": quote_of,
            "retweet_of": None,
        }

    by_context: list[list[str]] = [[] for _ in range(config.n_contexts)]
    n_retweets = 0

    # Interleave contexts so timestamps mix across contexts within the day.
    max_tweets = max(config.tweets_in_context(c) for c in range(config.n_contexts))
    for i in range(max_tweets):
        for c in range(config.n_contexts):
            if i >= config.tweets_in_context(c):
                continue
            candidates = users_per_ctx[c]
            if i < config.anchor_tweets and hubs[c]:
                author = hubs[c][i % len(hubs[c])]  # anchors belong to hubs
            elif i < config.anchor_tweets + len(candidates):
                # Every user authors at least one tweet (membership guarantee).
                author = candidates[(i - config.anchor_tweets) % len(candidates)]
            else:
                author = pick(candidates)
            tid = f"t{c}_{i}"
            rec = make_tweet(tid, c, author, next_time())
            records.append(rec)
            by_context[c].append(tid)
            context_of[tid] = c
            rate = config.hub_retweet_rate if author in hubs[c] else config.base_retweet_rate
            for _ in range(int(rng.poisson(rate))):
                rt_author = pick(candidates)
                records.append({
                    "id": f"r{n_retweets}", "author_id": rt_author, "text": "",
                    "lang": None, "created_at": next_time(), "hashtags": [],
                    "urls": [], "mentions": [], "reply_to": None,
                    "quote_of": None, "retweet_of": tid,
                })
                n_retweets += 1

    transition_counts = None
    if config.planted_transitions is not None:
        T = config.planted_transitions
        transition_counts = [
            [int(round(T[a][b] * config.transition_scale)) for b in range(config.n_contexts)]
            for a in range(config.n_contexts)]
        w = 0
        for a in range(config.n_contexts):
            for b in range(config.n_contexts):
                for _ in range(transition_counts[a][b]):
                    user = f"tw{w}"
                    membership[user] = sorted({a, b})
                    for leg, c in enumerate((a, b)):
                        tid = f"x{w}_{leg}"
                        rec = make_tweet(tid, c, user, next_time())
                        rec["reply_to"] = rec["quote_of"] = None
                        records.append(rec)
                        by_context[c].append(tid)
                        context_of[tid] = c
                    w += 1

    sizes = [len(by_context[c]) for c in range(config.n_contexts)]
    truth = GroundTruth(
        context_of=context_of,
        user_contexts={u: sorted(cs) for u, cs in membership.items()},
        hubs=hubs,
        context_sizes=sizes,
        planted_transitions=config.planted_transitions,
        transition_counts=transition_counts,
    )
    return records, truth


def make_word_vectors(config: SynthConfig) -> WordVectorTable:
    """Fixed random unit vectors per token per language, derived from the
    config seed so datasets and vector tables stay in sync."""
    rng = np.random.default_rng(config.seed + 1)
    vocab = [f"w{i}" for i in range(config.shared_vocab_size)]
    for c in range(config.n_contexts):
        vocab.extend(f"c{c}w{i}" for i in range(config.context_vocab_size))
    table = WordVectorTable(dim=config.feature_dim)
    for lang in config.languages:
        mat = rng.standard_normal((len(vocab), config.feature_dim))
        mat /= np.linalg.norm(mat, axis=1, keepdims=True)
        table.add_language(lang, list(vocab), mat)
    return table


def write_records(path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def write_truth(path, truth: GroundTruth) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(truth.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")


def load_truth(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as f:
        d = json.load(f)
    return GroundTruth(
        context_of={k: int(v) for k, v in d["context_of"].items()},
        user_contexts={k: list(map(int, v)) for k, v in d["user_contexts"].items()},
        hubs=d["hubs"],
        context_sizes=list(map(int, d["context_sizes"])),
        planted_transitions=d.get("planted_transitions"),
        transition_counts=d.get("transition_counts"),
    )
