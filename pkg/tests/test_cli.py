import json

import numpy as np
import pytest

from convoctx import io_formats
from convoctx.cli import main
from convoctx.hetgraph import build_graph
from .conftest import make_record

SYNTH_INI = """
[synth]
n_contexts = 2
tweets_per_context = 30
users_per_context = 6
anchor_tweets = 3
feature_dim = 16
seed = 9
"""

PIPELINE_INI = """
[ingest]
in = {records}

[features]
vectors = {vectors}

[train]
epochs = 2
lr = 0.001
hidden_dim = 8
seed = 0

[cluster]
min_cluster_size = 5

[analyze]
mode = transitions
"""


def test_feature_matrix_roundtrip(tmp_path, rng):
    X = rng.normal(size=(7, 3)).astype(np.float64)
    mask = rng.random(7) < 0.5
    path = str(tmp_path / "feat.bin")
    io_formats.save_feature_matrix(path, X, mask)
    X2, mask2 = io_formats.load_feature_matrix(path)
    assert np.allclose(X2, X.astype(np.float32))
    assert np.array_equal(mask2, mask)


def test_embeddings_roundtrip(tmp_path, rng):
    E = rng.normal(size=(4, 5))
    id_rows = [("a", 0), ("b", 1), ("rt_of_a", 0), ("c", 3)]
    path = str(tmp_path / "emb.bin")
    io_formats.save_embeddings(path, E, id_rows)
    E2, rows2 = io_formats.load_embeddings(path)
    assert E2.shape == (4, 5)
    assert rows2 == dict(id_rows)


def test_graph_roundtrip(tmp_path):
    records = [
        make_record("t1", hashtags=["#a"], urls=["https://example.com/x"]),
        make_record("t2", reply_to="t1"),
        make_record("r1", retweet_of="t1", text=""),
    ]
    g, _ = build_graph(records)
    path = str(tmp_path / "graph.txt")
    io_formats.save_graph(path, g)
    g2 = io_formats.load_graph(path)
    assert g2.tweet_ids == g.tweet_ids
    assert g2.hashtag_ids == g.hashtag_ids
    assert g2.url_ids == g.url_ids
    assert g2.tt == g.tt and g2.th == g.th and g2.tu == g.tu
    assert g2.ht == g.ht and g2.ut == g.ut
    assert g2.retweet_map == g.retweet_map


def test_labels_csv_roundtrip(tmp_path):
    rows = [("t1", "2020-11-03", 0), ("t2", "2020-11-03", -1)]
    path = str(tmp_path / "labels.csv")
    io_formats.save_labels_csv(path, rows)
    assert io_formats.load_labels_csv(path) == rows


def test_exit_codes(tmp_path):
    # Usage error: unknown subcommand.
    assert main(["frobnicate"]) == 1
    assert main(["ingest", "--in", "x"]) == 1  # missing required flags
    # Data error: input file does not exist.
    out = str(tmp_path / "o.jsonl")
    assert main(["ingest", "--in", str(tmp_path / "missing.jsonl"),
                 "--out", out, "--report", str(tmp_path / "r.json")]) == 2


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["train", "--help"])
    text = capsys.readouterr().out
    assert "24000" in text and "0.001" in text and "25" in text


def _write_synth_outputs(tmp_path):
    cfg = tmp_path / "synth.ini"
    cfg.write_text(SYNTH_INI)
    records = tmp_path / "raw.jsonl"
    truth = tmp_path / "truth.json"
    vectors = tmp_path / "vectors"
    assert main(["synth", "--config", str(cfg), "--out-records", str(records),
                 "--out-truth", str(truth), "--out-vectors", str(vectors)]) == 0
    return records, truth, vectors


def test_synth_and_pipeline_end_to_end(tmp_path):
    records, truth, vectors = _write_synth_outputs(tmp_path)
    cfg = tmp_path / "pipeline.ini"
    cfg.write_text(PIPELINE_INI.format(records=records, vectors=vectors))
    out_dir = tmp_path / "out"
    assert main(["pipeline", "--config", str(cfg), "--out-dir", str(out_dir)]) == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert set(manifest["stages"]) == {"ingest", "build-graph", "embed-features",
                                       "train", "embed", "cluster", "analyze"}
    assert all(not s["cached"] for s in manifest["stages"].values())
    for name in ("records.jsonl", "graph.txt", "features.bin", "params.bin",
                 "embeddings.bin", "labels.csv", "analysis.json"):
        assert (out_dir / name).exists()

    # Second run: every stage is a cache hit.
    assert main(["pipeline", "--config", str(cfg), "--out-dir", str(out_dir)]) == 0
    manifest2 = json.loads((out_dir / "manifest.json").read_text())
    assert all(s["cached"] for s in manifest2["stages"].values())
    for name, entry in manifest2["stages"].items():
        assert entry["outputs"] == manifest["stages"][name]["outputs"]

    # Touching the config invalidates downstream stages.
    cfg.write_text(PIPELINE_INI.format(records=records, vectors=vectors) + "\n# x\n")
    assert main(["pipeline", "--config", str(cfg), "--out-dir", str(out_dir)]) == 0
    manifest3 = json.loads((out_dir / "manifest.json").read_text())
    assert not manifest3["stages"]["train"]["cached"]

    # Report rendering over the analysis output.
    report_path = tmp_path / "report.txt"
    assert main(["report", "--in", str(out_dir / "analysis.json"),
                 "--out", str(report_path)]) == 0
    assert "transition" in report_path.read_text()


def test_analyze_labels_mode(tmp_path):
    records_path = tmp_path / "records.jsonl"
    recs = [
        make_record("t1", urls=["https://example.com/L"]),
        make_record("t2", reply_to="t1"),
    ]
    records_path.write_text("\n".join(r.to_json() for r in recs) + "\n")
    g, _ = build_graph(recs)
    graph_path = tmp_path / "graph.txt"
    io_formats.save_graph(str(graph_path), g)
    url_labels = tmp_path / "url_labels.json"
    url_labels.write_text(json.dumps({"example.com/L": "misinfo"}))
    out = tmp_path / "labels_out.json"
    assert main(["analyze", "labels", "--records", str(records_path),
                 "--graph", str(graph_path), "--url-labels", str(url_labels),
                 "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["labels"] == {"t1": "misinfo", "t2": "misinfo"}
    assert data["conflicts"] == 0
