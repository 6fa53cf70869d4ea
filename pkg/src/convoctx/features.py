"""Initial tweet features: within-language tf-idf weighted word-vector
averages, then neighbor-mean propagation for rows that could not be embedded.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .hetgraph import HeteroGraph
from .records import KIND_RETWEET, MessageRecord


class WordVectorTable:
    """Per-language word -> vector lookup. All languages share one dimension.

    File format (one file per language, named <lang>.vec):
    first line "count dim", then "word v1 ... vd" per line.
    """

    def __init__(self, dim: int = 300):
        self.dim = dim
        self._index: dict[str, dict[str, int]] = {}
        self._mats: dict[str, np.ndarray] = {}

    @property
    def languages(self) -> list[str]:
        return sorted(self._index)

    def add_language(self, lang: str, words: list[str], matrix: np.ndarray) -> None:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != self.dim:
            raise DataError(
                f"word vectors for {lang!r} have dim {matrix.shape}, expected {self.dim}")
        if len(words) != matrix.shape[0]:
            raise DataError(f"word count mismatch for {lang!r}")
        self._index[lang] = {w: i for i, w in enumerate(words)}
        self._mats[lang] = matrix

    def lookup(self, lang: str, word: str) -> np.ndarray | None:
        idx = self._index.get(lang)
        if idx is None:
            return None
        i = idx.get(word)
        if i is None:
            return None
        return self._mats[lang][i]

    def has_language(self, lang: str | None) -> bool:
        return lang is not None and lang in self._index

    def save_dir(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        for lang in self.languages:
            idx, mat = self._index[lang], self._mats[lang]
            words = sorted(idx, key=idx.get)
            with open(os.path.join(directory, f"{lang}.vec"), "w", encoding="utf-8") as f:
                f.write(f"{len(words)} {self.dim}\n")
                for w, row in zip(words, mat):
                    f.write(w + " " + " ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load_dir(cls, directory: str) -> "WordVectorTable":
        table: WordVectorTable | None = None
        names = sorted(n for n in os.listdir(directory) if n.endswith(".vec"))
        if not names:
            raise DataError(f"no .vec files in {directory}")
        for name in names:
            lang = name[:-4]
            with open(os.path.join(directory, name), "r", encoding="utf-8") as f:
                count, dim = map(int, f.readline().split())
                if table is None:
                    table = cls(dim=dim)
                elif dim != table.dim:
                    raise DataError(f"{name}: dim {dim} conflicts with {table.dim}")
                words, rows = [], np.empty((count, dim), dtype=np.float64)
                for i in range(count):
                    parts = f.readline().rstrip("\n").split(" ")
                    words.append(parts[0])
                    rows[i] = [float(v) for v in parts[1:]]
            table.add_language(lang, words, rows)
        return table


def fit_tfidf(records: list[MessageRecord]) -> dict[str, dict[str, float]]:
    """Per-language idf table: idf(w, lang) = ln(N_lang / df(w, lang))."""
    docs_per_lang: dict[str, int] = {}
    df: dict[str, dict[str, int]] = {}
    for r in records:
        if r.lang is None or not r.tokens:
            continue
        docs_per_lang[r.lang] = docs_per_lang.get(r.lang, 0) + 1
        lang_df = df.setdefault(r.lang, {})
        for w in set(r.tokens):
            lang_df[w] = lang_df.get(w, 0) + 1
    return {
        lang: {w: math.log(docs_per_lang[lang] / n) for w, n in lang_df.items()}
        for lang, lang_df in df.items()
    }


def embed_text(tokens: list[str], lang: str | None, vectors: WordVectorTable,
               idf: dict[str, dict[str, float]]) -> np.ndarray | None:
    """Weighted average of word vectors with tf * idf weights normalized to
    sum 1. Returns None when the language is unavailable or no token carries
    both a vector and positive weight."""
    if not vectors.has_language(lang):
        return None
    lang_idf = idf.get(lang, {})
    tf: dict[str, int] = {}
    for w in tokens:
        tf[w] = tf.get(w, 0) + 1
    acc = np.zeros(vectors.dim, dtype=np.float64)
    total = 0.0
    for w, count in tf.items():
        vec = vectors.lookup(lang, w)
        if vec is None:
            continue
        weight = count * lang_idf.get(w, 0.0)
        if weight <= 0.0:
            continue
        acc += weight * vec
        total += weight
    if total <= 0.0:
        return None
    return acc / total


@dataclass
class FeatureReport:
    n_known: int = 0
    n_unknown: int = 0
    iterations: int = 0
    converged: bool = False
    n_unreached: int = 0
    unreached_rows: list[int] = field(default_factory=list)


def build_features(records: list[MessageRecord], g: HeteroGraph,
                   vectors: WordVectorTable) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix aligned to the graph's tweet index, plus known mask."""
    by_id = {r.id: r for r in records if r.kind != KIND_RETWEET}
    idf = fit_tfidf([r for r in records if r.kind != KIND_RETWEET])
    X = np.zeros((g.n_tweets, vectors.dim), dtype=np.float64)
    known = np.zeros(g.n_tweets, dtype=bool)
    for i, tid in enumerate(g.tweet_ids):
        r = by_id.get(tid)
        if r is None:
            continue
        vec = embed_text(r.tokens, r.lang, vectors, idf)
        if vec is not None:
            X[i] = vec
            known[i] = True
    return X, known


def propagate_features(g: HeteroGraph, X: np.ndarray, known: np.ndarray,
                       max_iters: int = 40, tol: float = 1e-6
                       ) -> tuple[np.ndarray, FeatureReport]:
    """Fill unknown tweet rows by synchronous neighbor-mean iteration over the
    combined tweet/hashtag/URL graph. Known rows stay fixed; unknown nodes not
    yet reached by propagation are excluded from their neighbors' means.
    Hashtag and URL nodes participate as (initially unreached) relay rows.
    """
    n_t, n_h, n_u = g.n_tweets, g.n_hashtags, g.n_urls
    n = n_t + n_h + n_u
    dim = X.shape[1]
    h_off, u_off = n_t, n_t + n_h
    adj: list[list[int]] = [[] for _ in range(n)]
    for i in range(n_t):
        adj[i].extend(g.tt[i])
        adj[i].extend(h_off + j for j in g.th[i])
        adj[i].extend(u_off + j for j in g.tu[i])
    for j in range(n_h):
        adj[h_off + j].extend(g.ht[j])
    for j in range(n_u):
        adj[u_off + j].extend(g.ut[j])

    cur = np.zeros((n, dim), dtype=X.dtype)
    cur[:n_t][known] = X[known]
    reached = np.zeros(n, dtype=bool)
    reached[:n_t] = known
    fixed = np.zeros(n, dtype=bool)
    fixed[:n_t] = known

    report = FeatureReport(n_known=int(known.sum()), n_unknown=int(n - known.sum()))
    for it in range(1, max_iters + 1):
        nxt = cur.copy()
        new_reached = reached.copy()
        max_change = 0.0
        for i in range(n):
            if fixed[i]:
                continue
            nb = [j for j in adj[i] if reached[j]]
            if not nb:
                continue
            mean = cur[nb].mean(axis=0)
            change = float(np.max(np.abs(mean - cur[i]))) if reached[i] else float("inf")
            max_change = max(max_change, change if np.isfinite(change) else
                             float(np.max(np.abs(mean))) + tol + 1.0)
            nxt[i] = mean
            new_reached[i] = True
        cur, reached = nxt, new_reached
        report.iterations = it
        if max_change < tol:
            report.converged = True
            break

    out = X.copy()
    unreached_tweets = [i for i in range(n_t) if not reached[i]]
    out[~known] = cur[:n_t][~known]
    out[known] = X[known]
    report.n_unreached = len(unreached_tweets)
    report.unreached_rows = unreached_tweets[:200]
    return out, report
