"""On-disk formats for graphs, feature/embedding matrices, params, and labels.

Matrices are versioned binary: magic, version, rows, dim (little-endian
uint32), row-major float32 payload, then extras (known mask / id index).
The graph format is versioned text with one section per edge type.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError
from .hetgraph import HeteroGraph

_FEAT_MAGIC = b"CVFM"
_EMB_MAGIC = b"CVEM"
_VERSION = 1


def save_feature_matrix(path, X: np.ndarray, known_mask: np.ndarray) -> None:
    X = np.asarray(X, dtype=np.float32)
    mask = np.asarray(known_mask, dtype=np.uint8)
    if X.shape[0] != mask.shape[0]:
        raise DataError("feature matrix and known mask disagree on row count")
    with open(path, "wb") as f:
        f.write(_FEAT_MAGIC)
        f.write(struct.pack("<III", _VERSION, X.shape[0], X.shape[1]))
        f.write(X.tobytes(order="C"))
        f.write(mask.tobytes())


def load_feature_matrix(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _FEAT_MAGIC:
            raise DataError(f"{path}: not a feature matrix file")
        version, rows, dim = struct.unpack("<III", f.read(12))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        X = np.frombuffer(f.read(rows * dim * 4), dtype=np.float32).reshape(rows, dim).copy()
        mask = np.frombuffer(f.read(rows), dtype=np.uint8).astype(bool).copy()
    return X, mask


def save_embeddings(path, E: np.ndarray, id_rows: list[tuple[str, int]]) -> None:
    """id_rows may map several ids (e.g. retweets) onto one row."""
    E = np.asarray(E, dtype=np.float32)
    with open(path, "wb") as f:
        f.write(_EMB_MAGIC)
        f.write(struct.pack("<III", _VERSION, E.shape[0], E.shape[1]))
        f.write(E.tobytes(order="C"))
        f.write(struct.pack("<I", len(id_rows)))
        for ident, row in id_rows:
            raw = ident.encode("utf-8")
            f.write(struct.pack("<HI", len(raw), row))
            f.write(raw)


def load_embeddings(path) -> tuple[np.ndarray, dict[str, int]]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _EMB_MAGIC:
            raise DataError(f"{path}: not an embedding file")
        version, rows, dim = struct.unpack("<III", f.read(12))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        E = np.frombuffer(f.read(rows * dim * 4), dtype=np.float32).reshape(rows, dim).copy()
        (n_ids,) = struct.unpack("<I", f.read(4))
        id_rows: dict[str, int] = {}
        for _ in range(n_ids):
            ln, row = struct.unpack("<HI", f.read(6))
            id_rows[f.read(ln).decode("utf-8")] = row
    return E, id_rows


def save_graph(path, g: HeteroGraph) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"convoctx-graph {_VERSION}\n")
        f.write(f"directed_tt {int(g.directed_tt)}\n")
        f.write(f"counts {g.n_tweets} {g.n_hashtags} {g.n_urls}\n")
        f.write("[tweets]\n")
        for t in g.tweet_ids:
            f.write(t + "\n")
        f.write("[hashtags]\n")
        for h in g.hashtag_ids:
            f.write(h + "\n")
        f.write("[urls]\n")
        for u in g.url_ids:
            f.write(u + "\n")
        f.write("[tt]\n")
        for i in range(g.n_tweets):
            for j in g.tt_out[i] if g.directed_tt else g.tt[i]:
                if g.directed_tt or i < j:
                    f.write(f"{i} {j}\n")
        f.write("[th]\n")
        for i in range(g.n_tweets):
            for j in g.th[i]:
                f.write(f"{i} {j}\n")
        f.write("[tu]\n")
        for i in range(g.n_tweets):
            for j in g.tu[i]:
                f.write(f"{i} {j}\n")
        f.write("[retweets]\n")
        for rid in sorted(g.retweet_map):
            f.write(f"{rid} {g.retweet_map[rid]}\n")


def load_graph(path) -> HeteroGraph:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2 or header[0] != "convoctx-graph":
            raise DataError(f"{path}: not a graph file")
        if int(header[1]) != _VERSION:
            raise DataError(f"{path}: unsupported version {header[1]}")
        directed = bool(int(f.readline().split()[1]))
        _, n_t, n_h, n_u = f.readline().split()
        n_t, n_h, n_u = int(n_t), int(n_h), int(n_u)

        def expect(section):
            line = f.readline().strip()
            if line != section:
                raise DataError(f"{path}: expected section {section}, got {line!r}")

        expect("[tweets]")
        tweet_ids = [f.readline().rstrip("\n") for _ in range(n_t)]
        expect("[hashtags]")
        hashtag_ids = [f.readline().rstrip("\n") for _ in range(n_h)]
        expect("[urls]")
        url_ids = [f.readline().rstrip("\n") for _ in range(n_u)]
        g = HeteroGraph(tweet_ids, hashtag_ids, url_ids, directed)

        expect("[tt]")
        line = f.readline().strip()
        while line and not line.startswith("["):
            i, j = map(int, line.split())
            g.tt[i].append(j)
            g.tt[j].append(i)
            g.tt_out[i].append(j)
            g.tt_in[j].append(i)
            if not directed:
                g.tt_out[j].append(i)
                g.tt_in[i].append(j)
            line = f.readline().strip()
        if line != "[th]":
            raise DataError(f"{path}: expected section [th]")
        line = f.readline().strip()
        while line and not line.startswith("["):
            i, j = map(int, line.split())
            g.th[i].append(j)
            g.ht[j].append(i)
            line = f.readline().strip()
        if line != "[tu]":
            raise DataError(f"{path}: expected section [tu]")
        line = f.readline().strip()
        while line and not line.startswith("["):
            i, j = map(int, line.split())
            g.tu[i].append(j)
            g.ut[j].append(i)
            line = f.readline().strip()
        if line != "[retweets]":
            raise DataError(f"{path}: expected section [retweets]")
        for line in f:
            line = line.strip()
            if not line:
                continue
            rid, idx = line.rsplit(" ", 1)
            g.retweet_map[rid] = int(idx)
    g._finalize()
    return g


def save_labels_csv(path, rows: list[tuple[str, str, int]]) -> None:
    """rows: (tweet_id, day, cluster_id); cluster_id -1 means noise."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("tweet_id,day,cluster_id\n")
        for tid, day, cid in rows:
            f.write(f"{tid},{day},{cid}\n")


def load_labels_csv(path) -> list[tuple[str, str, int]]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
        if not header.startswith("tweet_id,"):
            raise DataError(f"{path}: not a labels file")
        for line in f:
            line = line.strip()
            if not line:
                continue
            tid, day, cid = line.rsplit(",", 2)
            out.append((tid, day, int(cid)))
    return out


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
