"""Command-line pipeline: one subcommand per stage plus an end-to-end
`pipeline` runner with digest-based stage caching.

Configuration is a plain INI file with one section per stage; command-line
flags override file values. Exit codes: 0 ok, 1 usage, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__, analysis, io_formats, synthgen
from .clustering import NOISE, cluster
from .dti import ModelParams, TrainConfig, embed_all, train
from .errors import DataError, NumericError, UsageError
from .features import WordVectorTable, build_features, propagate_features
from .hetgraph import build_graph
from .records import KIND_RETWEET, parse_records
from .synthgen import SynthConfig

DEFAULTS = {
    "batch": 24000, "fanout": 20, "depth": 3, "lr": 1e-3, "epochs": 25,
    "min_cluster_size": 100, "min_samples": 1, "trim": 0.05, "damping": 0.85,
    "top_k": 15, "max_iters": 40, "tol": 1e-6,
}


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("formatter_class", argparse.ArgumentDefaultsHelpFormatter)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(message)


def _threads_default() -> int:
    return int(os.environ.get("CONVOCTX_THREADS", "1"))


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_records(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_records(f)
    except OSError as exc:
        raise DataError(f"cannot read records from {path}: {exc}") from exc


# ---------------------------------------------------------------- stages

def run_ingest(in_path, out_path, report_path):
    records, report = _load_records(in_path)
    with open(out_path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(r.to_json() + "\n")
    io_formats.write_json(report_path, {
        "n_lines": report.n_lines, "n_records": report.n_records,
        "n_malformed": report.n_malformed, "n_duplicates": report.n_duplicates,
        "n_bad_urls": report.n_bad_urls, "warnings": report.warnings,
    })
    return report


def run_build_graph(records_path, out_path, directed_tt=False, report_path=None):
    records, _ = _load_records(records_path)
    g, report = build_graph(records, directed_tt=directed_tt)
    io_formats.save_graph(out_path, g)
    if report_path:
        io_formats.write_json(report_path, {
            "n_tweets": report.n_tweets, "n_hashtags": report.n_hashtags,
            "n_urls": report.n_urls, "n_tt_edges": report.n_tt_edges,
            "n_th_edges": report.n_th_edges, "n_tu_edges": report.n_tu_edges,
            "n_retweets": report.n_retweets,
            "n_dangling_refs": report.n_dangling_refs,
            "n_dropped_retweets": report.n_dropped_retweets,
            "warnings": report.warnings,
        })
    return g, report


def run_embed_features(graph_path, records_path, vectors_dir, out_path,
                       max_iters=40, tol=1e-6):
    g = io_formats.load_graph(graph_path)
    records, _ = _load_records(records_path)
    vectors = WordVectorTable.load_dir(vectors_dir)
    X, known = build_features(records, g, vectors)
    X, report = propagate_features(g, X, known, max_iters=max_iters, tol=tol)
    io_formats.save_feature_matrix(out_path, X, known)
    return report


def run_train(graph_path, features_path, out_path, **kw):
    g = io_formats.load_graph(graph_path)
    X, _ = io_formats.load_feature_matrix(features_path)
    config = TrainConfig(
        batch_size=kw.get("batch", 24000), fanout=kw.get("fanout", 20),
        sample_depth=kw.get("depth", 3), lr=kw.get("lr", 1e-3),
        epochs=kw.get("epochs", 25), seed=kw.get("seed", 0),
        hidden_dim=kw.get("hidden_dim", 128),
    )
    params, history = train(g, X, config)
    params.save(out_path)
    return history


def run_embed(graph_path, features_path, params_path, out_path):
    g = io_formats.load_graph(graph_path)
    X, _ = io_formats.load_feature_matrix(features_path)
    params = ModelParams.load(params_path)
    E, id_rows, _, _ = embed_all(g, X, params)
    io_formats.save_embeddings(out_path, E, sorted(id_rows.items()))
    return E.shape


def run_cluster(embeddings_path, records_path, out_path,
                min_cluster_size=100, min_samples=1):
    E, id_rows = io_formats.load_embeddings(embeddings_path)
    records, _ = _load_records(records_path)
    day_of = {}
    for r in records:
        if r.kind != KIND_RETWEET and r.created_at is not None:
            day_of[r.id] = r.created_at.date().isoformat()
    by_day: dict[str, list[str]] = {}
    for tid in sorted(day_of):
        if tid in id_rows:
            by_day.setdefault(day_of[tid], []).append(tid)
    rows = []
    for day in sorted(by_day):
        ids = by_day[day]
        pts = E[[id_rows[t] for t in ids]]
        result = cluster(pts, min_cluster_size=min_cluster_size,
                         min_samples=min_samples)
        for tid, label in zip(ids, result.labels):
            rows.append((tid, day, int(label)))
    io_formats.save_labels_csv(out_path, rows)
    return rows


def run_analyze(mode, labels_path, records_path, graph_path, out_path,
                top_k=15, trim=0.05, damping=0.85, url_labels_path=None):
    records, _ = _load_records(records_path)
    labels = io_formats.load_labels_csv(labels_path) if labels_path else []
    contexts = analysis.assign_contexts(labels, records)
    out: dict = {"mode": mode, "version": __version__}

    if mode == "overlap":
        M, chosen = analysis.overlap_matrix(contexts, top_k=top_k)
        D, _ = analysis.overlap_matrix(contexts, top_k=top_k, directional=True)
        out["contexts"] = [list(c.key) for c in chosen]
        out["jaccard_percent"] = M.tolist()
        out["directional_percent"] = D.tolist()
    elif mode == "centrality":
        ranked = sorted(contexts, key=lambda c: (-len(c.members), c.key))[:2]
        if len(ranked) < 2:
            raise DataError("centrality analysis needs at least two contexts")
        nets = [analysis.build_user_network(c, records) for c in ranked]
        combined = analysis.combine_networks(nets)
        combined_scores = analysis.pagerank(combined, damping=damping)
        report_rows = []
        ctx_scores = []
        for c, net in zip(ranked, nets):
            scores = analysis.pagerank(net, damping=damping)
            ctx_scores.append(scores)
            top5 = sorted(scores, key=lambda u: (-scores[u], u))[:5]
            for rank, u in enumerate(top5, start=1):
                report_rows.append({
                    "context": list(c.key), "rank": rank, "user": u,
                    "combined_percentile": analysis.percentile_rank(combined_scores, u),
                })
        inter = set(ctx_scores[0]) & set(ctx_scores[1])
        union = set(ctx_scores[0]) | set(ctx_scores[1])
        contextual_union = {
            u: max(ctx_scores[0].get(u, 0.0), ctx_scores[1].get(u, 0.0)) for u in union}
        out["overlap_percent"] = 100.0 * len(inter) / len(union) if union else 0.0
        out["top5"] = report_rows
        if len(inter) >= 2:
            contextual_inter = {u: contextual_union[u] for u in inter}
            out["kendall_tau_intersection"] = analysis.kendall_tau(
                contextual_inter, {u: combined_scores[u] for u in inter})
        out["kendall_tau_union"] = analysis.kendall_tau(
            contextual_union, {u: combined_scores.get(u, 0.0) for u in union})
    elif mode == "transitions":
        result = analysis.transition_matrix(contexts, records, trim=trim)
        out["contexts"] = [list(k) for k in result.contexts]
        out["counts"] = result.counts.tolist()
        out["probabilities"] = result.probabilities.tolist()
        out["kept_edges"] = [[i, j, p] for i, j, p in result.kept_edges]
        out["rows_with_all_edges_trimmed"] = result.trimmed_only_edge_rows
        out["self_loop_counts"] = result.self_loop_counts.tolist()
    elif mode == "labels":
        if not url_labels_path:
            raise UsageError("analyze labels requires --url-labels")
        g = io_formats.load_graph(graph_path)
        url_labels = io_formats.read_json(url_labels_path)
        label_map, conflicts = analysis.propagate_labels(url_labels, g)
        out["labels"] = label_map
        out["conflicts"] = conflicts
    else:
        raise UsageError(f"unknown analyze mode {mode!r}")
    io_formats.write_json(out_path, out)
    return out


def run_synth(config_path, out_records, out_truth, out_vectors):
    cfg = _read_synth_config(config_path)
    records, truth = synthgen.generate(cfg)
    synthgen.write_records(out_records, records)
    synthgen.write_truth(out_truth, truth)
    table = synthgen.make_word_vectors(cfg)
    table.save_dir(out_vectors)
    return truth


def run_report(in_path, out_path):
    data = io_formats.read_json(in_path)
    lines = [f"convoctx report (mode: {data.get('mode', '?')})", ""]
    if "jaccard_percent" in data:
        lines.append("context overlap (% Jaccard, diagonal 0):")
        for key, row in zip(data["contexts"], data["jaccard_percent"]):
            lines.append(f"  {key}: " + " ".join(f"{v:6.2f}" for v in row))
    if "top5" in data:
        lines.append("top-5 contextual users vs combined-network percentile:")
        for row in data["top5"]:
            lines.append(f"  ctx={row['context']} rank={row['rank']} "
                         f"user={row['user']} combined={row['combined_percentile']:.1f}%")
        for key in ("kendall_tau_intersection", "kendall_tau_union"):
            if key in data:
                lines.append(f"{key}: {data[key]:.4f}")
    if "probabilities" in data:
        lines.append("context transition probabilities:")
        for key, row in zip(data["contexts"], data["probabilities"]):
            lines.append(f"  {key}: " + " ".join(f"{v:5.3f}" for v in row))
    if "labels" in data and data["mode"] == "labels":
        lines.append(f"propagated labels: {len(data['labels'])}, "
                     f"conflicts dropped: {data['conflicts']}")
    text = "\n".join(lines) + "\n"
    with open(out_path, "w", encoding="utf-8") as f:
        f.write(text)
    return text


# ---------------------------------------------------------------- config

def _read_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise DataError(f"cannot read config file {path}")
    return cp


def _read_synth_config(path) -> SynthConfig:
    cp = _read_ini(path)
    cfg = SynthConfig()
    if cp.has_section("synth"):
        sec = cp["synth"]
        for field_name, value in sec.items():
            if not hasattr(cfg, field_name):
                raise DataError(f"unknown synth option {field_name!r}")
            current = getattr(cfg, field_name)
            if field_name == "planted_transitions":
                setattr(cfg, field_name, json.loads(value))
            elif field_name in ("languages", "context_user_counts"):
                setattr(cfg, field_name, json.loads(value))
            elif isinstance(current, bool):
                setattr(cfg, field_name, sec.getboolean(field_name))
            elif isinstance(current, int):
                setattr(cfg, field_name, sec.getint(field_name))
            elif isinstance(current, float):
                setattr(cfg, field_name, sec.getfloat(field_name))
            else:
                setattr(cfg, field_name, value)
    return cfg


def _cfg(cp, section, key, fallback, cast=str):
    if cp is not None and cp.has_option(section, key):
        raw = cp.get(section, key)
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return fallback


# ---------------------------------------------------------------- pipeline

_PIPELINE_STAGES = ("ingest", "build-graph", "embed-features", "train",
                    "embed", "cluster", "analyze")


def run_pipeline(config_path, out_dir, deterministic=False):
    cp = _read_ini(config_path)
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.json")
    previous = io_formats.read_json(manifest_path) if os.path.exists(manifest_path) else {}
    prev_stages = previous.get("stages", {})

    raw_in = _cfg(cp, "ingest", "in", None)
    if raw_in is None:
        raise DataError("config must set [ingest] in = <records.jsonl>")
    vectors_dir = _cfg(cp, "features", "vectors", None)
    if vectors_dir is None:
        raise DataError("config must set [features] vectors = <dir>")

    p = {name: os.path.join(out_dir, fname) for name, fname in (
        ("records", "records.jsonl"), ("ingest_report", "ingest_report.json"),
        ("graph", "graph.txt"), ("graph_report", "graph_report.json"),
        ("features", "features.bin"), ("params", "params.bin"),
        ("embeddings", "embeddings.bin"), ("labels", "labels.csv"),
        ("analysis", "analysis.json"))}

    config_digest = hashlib.sha256(open(config_path, "rb").read()).hexdigest()
    manifest = {
        "tool_version": __version__, "config_digest": config_digest,
        "deterministic": bool(deterministic), "stages": {},
        "seeds": {"train": _cfg(cp, "train", "seed", 0, int)},
    }

    def stage(name, inputs, outputs, fn):
        # Keys and digests use basenames so manifests compare across out dirs.
        in_digests = {os.path.basename(f): _sha256(f) for f in inputs}
        key = hashlib.sha256(json.dumps(
            {"inputs": in_digests, "config": config_digest, "stage": name},
            sort_keys=True).encode()).hexdigest()
        prev = prev_stages.get(name)
        if prev and prev.get("key") == key and all(
                os.path.exists(os.path.join(out_dir, base)) and
                _sha256(os.path.join(out_dir, base)) == d
                for base, d in prev.get("outputs", {}).items()):
            entry = dict(prev)
            entry["cached"] = True
            manifest["stages"][name] = entry
            return True
        t0 = time.monotonic()
        fn()
        entry = {
            "key": key, "inputs": in_digests,
            "outputs": {os.path.basename(f): _sha256(f) for f in outputs},
            "seconds": round(time.monotonic() - t0, 3), "cached": False,
        }
        manifest["stages"][name] = entry
        return False

    stage("ingest", [raw_in], [p["records"]],
          lambda: run_ingest(raw_in, p["records"], p["ingest_report"]))
    stage("build-graph", [p["records"]], [p["graph"]],
          lambda: run_build_graph(p["records"], p["graph"],
                                  directed_tt=_cfg(cp, "graph", "directed_tt", False, bool),
                                  report_path=p["graph_report"]))
    stage("embed-features", [p["graph"], p["records"]], [p["features"]],
          lambda: run_embed_features(
              p["graph"], p["records"], vectors_dir, p["features"],
              max_iters=_cfg(cp, "features", "max_iters", 40, int),
              tol=_cfg(cp, "features", "tol", 1e-6, float)))
    stage("train", [p["graph"], p["features"]], [p["params"]],
          lambda: run_train(
              p["graph"], p["features"], p["params"],
              batch=_cfg(cp, "train", "batch", 24000, int),
              fanout=_cfg(cp, "train", "fanout", 20, int),
              depth=_cfg(cp, "train", "depth", 3, int),
              lr=_cfg(cp, "train", "lr", 1e-3, float),
              epochs=_cfg(cp, "train", "epochs", 25, int),
              seed=_cfg(cp, "train", "seed", 0, int),
              hidden_dim=_cfg(cp, "train", "hidden_dim", 128, int)))
    stage("embed", [p["graph"], p["features"], p["params"]], [p["embeddings"]],
          lambda: run_embed(p["graph"], p["features"], p["params"], p["embeddings"]))
    stage("cluster", [p["embeddings"], p["records"]], [p["labels"]],
          lambda: run_cluster(
              p["embeddings"], p["records"], p["labels"],
              min_cluster_size=_cfg(cp, "cluster", "min_cluster_size", 100, int),
              min_samples=_cfg(cp, "cluster", "min_samples", 1, int)))
    stage("analyze", [p["labels"], p["records"]], [p["analysis"]],
          lambda: run_analyze(
              _cfg(cp, "analyze", "mode", "transitions"),
              p["labels"], p["records"], p["graph"], p["analysis"],
              top_k=_cfg(cp, "analyze", "top_k", 15, int),
              trim=_cfg(cp, "analyze", "trim", 0.05, float),
              damping=_cfg(cp, "analyze", "damping", 0.85, float)))

    io_formats.write_json(manifest_path, manifest)
    return manifest


# ---------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convoctx", description=__doc__)
    parser.add_argument("--threads", type=int, default=_threads_default(),
                        help="worker threads (default from CONVOCTX_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="clean raw records")
    sp.add_argument("--in", dest="in_path", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", required=True)

    sp = sub.add_parser("build-graph", help="build the typed message graph")
    sp.add_argument("--in", dest="in_path", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.add_argument("--directed-tt", action="store_true",
                    help="treat reply/quote edges as directed (default undirected)")

    sp = sub.add_parser("embed-features", help="tf-idf features + propagation")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--records", required=True)
    sp.add_argument("--vectors", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--max-iters", type=int, default=DEFAULTS["max_iters"],
                    help="propagation iteration cap")
    sp.add_argument("--tol", type=float, default=DEFAULTS["tol"],
                    help="propagation convergence tolerance")

    sp = sub.add_parser("train", help="train the infomax encoder")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--batch", type=int, default=DEFAULTS["batch"],
                    help="tweets per minibatch")
    sp.add_argument("--fanout", type=int, default=DEFAULTS["fanout"],
                    help="sampled neighbors per edge type")
    sp.add_argument("--depth", type=int, default=DEFAULTS["depth"],
                    help="neighbor sampling iterations")
    sp.add_argument("--lr", type=float, default=DEFAULTS["lr"],
                    help="initial learning rate")
    sp.add_argument("--epochs", type=int, default=DEFAULTS["epochs"],
                    help="maximum training epochs")
    sp.add_argument("--seed", type=int, default=0, help="training seed")
    sp.add_argument("--hidden-dim", type=int, default=128,
                    help="hidden and output layer width")
    sp.add_argument("--deterministic", action="store_true",
                    help="fixed reduction order (always on in this implementation)")

    sp = sub.add_parser("embed", help="embed every message with trained params")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--params", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("cluster", help="cluster embeddings per day")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--records", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--min-cluster-size", type=int,
                    default=DEFAULTS["min_cluster_size"],
                    help="smallest cluster kept")
    sp.add_argument("--min-samples", type=int, default=DEFAULTS["min_samples"],
                    help="core distance neighbor count")

    sp = sub.add_parser("analyze", help="context analytics")
    sp.add_argument("mode", choices=["overlap", "centrality", "transitions", "labels"])
    sp.add_argument("--labels")
    sp.add_argument("--records", required=True)
    sp.add_argument("--graph")
    sp.add_argument("--url-labels")
    sp.add_argument("--out", required=True)
    sp.add_argument("--top-k", type=int, default=DEFAULTS["top_k"],
                    help="contexts shown in the overlap matrix")
    sp.add_argument("--trim", type=float, default=DEFAULTS["trim"],
                    help="minimum transition probability displayed")
    sp.add_argument("--damping", type=float, default=DEFAULTS["damping"],
                    help="PageRank damping factor")

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-records", required=True)
    sp.add_argument("--out-truth", required=True)
    sp.add_argument("--out-vectors", required=True)

    sp = sub.add_parser("pipeline", help="run all stages with caching")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--deterministic", action="store_true")

    sp = sub.add_parser("report", help="render an analysis JSON as text")
    sp.add_argument("--in", dest="in_path", required=True)
    sp.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "ingest":
            run_ingest(args.in_path, args.out, args.report)
        elif args.command == "build-graph":
            run_build_graph(args.in_path, args.out, args.directed_tt, args.report)
        elif args.command == "embed-features":
            run_embed_features(args.graph, args.records, args.vectors, args.out,
                               args.max_iters, args.tol)
        elif args.command == "train":
            run_train(args.graph, args.features, args.out, batch=args.batch,
                      fanout=args.fanout, depth=args.depth, lr=args.lr,
                      epochs=args.epochs, seed=args.seed, hidden_dim=args.hidden_dim)
        elif args.command == "embed":
            run_embed(args.graph, args.features, args.params, args.out)
        elif args.command == "cluster":
            run_cluster(args.embeddings, args.records, args.out,
                        args.min_cluster_size, args.min_samples)
        elif args.command == "analyze":
            run_analyze(args.mode, args.labels, args.records, args.graph,
                        args.out, args.top_k, args.trim, args.damping,
                        args.url_labels)
        elif args.command == "synth":
            run_synth(args.config, args.out_records, args.out_truth, args.out_vectors)
        elif args.command == "pipeline":
            run_pipeline(args.config, args.out_dir, args.deterministic)
        elif args.command == "report":
            run_report(args.in_path, args.out)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
