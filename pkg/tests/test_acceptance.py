"""End-to-end behavioral checks run at realistic scales: gradient exactness,
training quality, context recovery, analytics directionality, and pipeline
determinism."""

import io
import json
import time

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from convoctx import analysis
from convoctx.cli import main
from convoctx.clustering import cluster
from convoctx.dti.model import (ModelParams, corrupt, dgi_loss, forward,
                                loss_and_grads, view_from_graph)
from convoctx.dti.train import TrainConfig, embed_all, train
from convoctx.features import build_features, propagate_features
from convoctx.hetgraph import build_graph
from convoctx.records import normalize_url, parse_records
from convoctx.synthgen import SynthConfig, generate, make_word_vectors

from .conftest import make_record, random_hetgraph
from .oracles import (
    dense_pagerank,
    finite_difference_grad,
    max_relative_error,
    pair_count_kendall,
    reference_cluster,
    same_partition,
)
from .test_ingest import URL_CASES


def _prepare(cfg):
    raw, truth = generate(cfg)
    records, _ = parse_records(io.StringIO("\n".join(json.dumps(r) for r in raw)))
    g, _ = build_graph(records)
    vectors = make_word_vectors(cfg)
    X, known = build_features(records, g, vectors)
    X, report = propagate_features(g, X, known)
    return records, truth, g, X, known, report


def _ari(g, truth, labels):
    pred = {t: int(labels[g.tweet_index[t]]) for t in g.tweet_ids}
    true = {t: truth.context_of[t] for t in g.tweet_ids}
    return analysis.partition_quality(pred, true)["ari"]


TRAIN_CONFIG = TrainConfig(epochs=10, seed=2, lr=0.005, hidden_dim=128, patience=15)


@pytest.fixture(scope="module")
def mixed_vocab_data():
    """Four contexts sharing half their vocabulary but with distinct
    hashtag/URL/reply structure."""
    cfg = SynthConfig(n_contexts=4, tweets_per_context=500, users_per_context=40,
                      shared_vocab_fraction=0.5, url_prob=1.0, seed=0)
    return _prepare(cfg)


@pytest.fixture(scope="module")
def mixed_vocab_trained(mixed_vocab_data):
    _, _, g, X, _, _ = mixed_vocab_data
    start = time.monotonic()
    params, history = train(g, X, TRAIN_CONFIG)
    return params, history, time.monotonic() - start


@pytest.fixture(scope="module")
def structure_only_data():
    """Identical vocabularies in every context; only usage frequencies and the
    reply/hashtag/URL structure differ."""
    cfg = SynthConfig(n_contexts=4, tweets_per_context=500, users_per_context=40,
                      shared_vocab_fraction=1.0, context_token_bias=0.5,
                      url_prob=1.0, seed=0)
    return _prepare(cfg)


@pytest.fixture(scope="module")
def structure_only_trained(structure_only_data):
    _, _, g, X, _, _ = structure_only_data
    params, history = train(g, X, TRAIN_CONFIG)
    return params, history


def test_analytic_gradients_match_finite_differences():
    start = time.monotonic()
    dim, hidden = 6, 5
    checked = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        g = random_hetgraph(rng, n_t=int(rng.integers(12, 25)),
                            n_h=int(rng.integers(2, 9)),
                            n_u=int(rng.integers(1, 5)))
        view = view_from_graph(g)
        X = rng.normal(size=(len(g.tweet_ids), dim))
        X_neg = corrupt(X, rng)
        params = ModelParams.init(dim, hidden, rng=rng).astype(np.float64)
        _, grads, _ = loss_and_grads(view, X, X_neg, params)
        analytic = np.concatenate([grads[k].ravel() for k in params._keys])

        def loss_fn(flat, _p=params, _v=view, _X=X, _Xn=X_neg):
            p = _p.copy()
            p.unpack(flat)
            seeds = _v.seeds
            T2p, _, _ = forward(_v, _X, p)
            T2n, _, _ = forward(_v, _Xn, p)
            summary = 1.0 / (1.0 + np.exp(-T2p[seeds].mean(axis=0)))
            scored = p.arrays["disc.W"] @ summary
            sig = lambda z: 1.0 / (1.0 + np.exp(-z))
            return dgi_loss(sig(T2p[seeds] @ scored), sig(T2n[seeds] @ scored))

        # h small enough that central differences do not straddle a PReLU kink
        numeric = finite_difference_grad(loss_fn, params.pack(), h=1e-5)
        off = 0
        for k in params._keys:
            size = params.arrays[k].size
            err = max_relative_error(analytic[off:off + size],
                                     numeric[off:off + size])
            assert err <= 1e-4, f"seed {seed} block {k}: rel err {err:.3e}"
            off += size
            checked += 1
    assert checked == 5 * len(params._keys)
    assert time.monotonic() - start < 30.0


def test_training_decreases_loss_and_separates_corrupted(mixed_vocab_data,
                                                         mixed_vocab_trained):
    _, _, g, X, _, _ = mixed_vocab_data
    params, history, elapsed = mixed_vocab_trained
    assert elapsed < 180.0
    first = history.epoch_loss[0]
    assert history.best_loss < first
    decrease = (first - history.best_loss) / first
    assert decrease >= 0.20

    view = view_from_graph(g)
    X_neg = corrupt(X, np.random.default_rng(99))
    _, _, aux = loss_and_grads(view, X, X_neg, params.astype(np.float64))
    scores = np.concatenate([aux["pos_scores"], aux["neg_scores"]])
    labels = np.concatenate([np.ones(len(aux["pos_scores"])),
                             np.zeros(len(aux["neg_scores"]))])
    assert roc_auc_score(labels, scores) >= 0.9


def test_clustering_recovers_planted_contexts(mixed_vocab_data, mixed_vocab_trained):
    _, truth, g, X, _, _ = mixed_vocab_data
    params, _, _ = mixed_vocab_trained
    embeddings, _, _, _ = embed_all(g, X, params)
    result = cluster(np.asarray(embeddings, np.float64),
                     min_cluster_size=150, min_samples=1)
    assert _ari(g, truth, result.labels) >= 0.8


def test_graph_embeddings_beat_text_on_structure_only_data(structure_only_data,
                                                           structure_only_trained):
    _, truth, g, X, _, _ = structure_only_data
    params, _ = structure_only_trained

    text_ari = max(
        _ari(g, truth, cluster(np.asarray(X, np.float64),
                               min_cluster_size=mcs, min_samples=ms).labels)
        for mcs in (100, 150) for ms in (1, 5))

    embeddings, _, _, _ = embed_all(g, X, params)
    graph_ari = _ari(g, truth, cluster(np.asarray(embeddings, np.float64),
                                       min_cluster_size=150, min_samples=1).labels)
    assert graph_ari - text_ari >= 0.3


def test_feature_propagation_converges_on_synthetic_graphs(mixed_vocab_data,
                                                           structure_only_data):
    for data in (mixed_vocab_data, structure_only_data):
        records, _, g, _, known, report = data
        assert report.converged
        assert report.iterations <= 40
        # Known rows must pass through propagation bitwise unchanged.
        vectors = make_word_vectors(SynthConfig(seed=0))
        X0, known0 = build_features(records, g, vectors)
        before = X0[known0].copy()
        out, _ = propagate_features(g, X0, known0)
        assert np.array_equal(out[known0], before)


def test_feature_propagation_exact_on_path_graph():
    records = [
        make_record("t0", text="left anchor"),
        make_record("t1", text="", reply_to="t0"),
        make_record("t2", text="right anchor", reply_to="t1"),
    ]
    g, _ = build_graph(records)
    X = np.zeros((3, 1))
    X[g.tweet_index["t0"], 0] = 1.0
    X[g.tweet_index["t2"], 0] = 3.0
    known = np.zeros(3, dtype=bool)
    known[g.tweet_index["t0"]] = known[g.tweet_index["t2"]] = True
    out, report = propagate_features(g, X, known)
    assert report.converged
    assert abs(out[g.tweet_index["t1"], 0] - 2.0) <= 1e-12


def test_cluster_matches_reference_on_random_point_sets():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(12, 51))
        centers = rng.normal(scale=8.0, size=(3, 2))
        points = np.vstack([rng.normal(loc=centers[i % 3], size=(1, 2))
                            for i in range(n)])
        mcs = int(rng.integers(3, 8))
        ms = int(rng.integers(1, 4))
        got = cluster(points, min_cluster_size=mcs, min_samples=ms).labels
        want = reference_cluster(points, mcs, min_samples=ms)
        assert same_partition(got, want), f"seed {seed} mcs {mcs} ms {ms}"


def test_cluster_one_dimensional_worked_example():
    points = np.array([[1.0], [2.0], [10.0], [11.0]])
    result = cluster(points, min_cluster_size=2, min_samples=1)
    assert result.n_clusters == 2
    groups = {}
    for value, label in zip(points[:, 0], result.labels):
        groups.setdefault(label, set()).add(value)
    assert set(map(frozenset, groups.values())) == {frozenset({1.0, 2.0}),
                                                    frozenset({10.0, 11.0})}


def test_pagerank_matches_dense_oracle_and_sums_to_one():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 101))
        net = analysis.UserNetwork()
        users = [f"u{i}" for i in range(n)]
        for u in users:
            net.intern(u)
        edges = []
        for _ in range(int(rng.integers(n, 4 * n))):
            i, j = rng.integers(n, size=2)
            if i == j:
                continue
            w = float(rng.uniform(0.5, 3.0))
            net.add_edge(users[i], users[j], w)
        for (i, j), w in net.edges.items():
            edges.append((i, j, w))
        scores = analysis.pagerank(net)
        assert abs(sum(scores.values()) - 1.0) <= 1e-9
        oracle = dense_pagerank(n, edges)
        got = np.array([scores[u] for u in users])
        assert np.max(np.abs(got - oracle)) <= 1e-8


def test_pagerank_two_node_symmetric_exact():
    net = analysis.UserNetwork()
    net.add_edge("a", "b")
    net.add_edge("b", "a")
    scores = analysis.pagerank(net)
    assert scores["a"] == 0.5 and scores["b"] == 0.5


def test_kendall_tau_endpoints_and_oracle():
    ident = {f"u{i}": float(i) for i in range(10)}
    rev = {f"u{i}": float(-i) for i in range(10)}
    assert analysis.kendall_tau(ident, ident) == 1.0
    assert analysis.kendall_tau(ident, rev) == -1.0
    cases = 0
    rng = np.random.default_rng(7)
    while cases < 100:
        n = int(rng.integers(3, 30))
        a = rng.integers(0, 8, size=n).astype(float)
        b = rng.integers(0, 8, size=n).astype(float)
        if len(set(a)) < 2 or len(set(b)) < 2:
            continue
        keys = [f"u{i}" for i in range(n)]
        got = analysis.kendall_tau(dict(zip(keys, a)), dict(zip(keys, b)))
        assert got == pair_count_kendall(a, b)
        cases += 1


def test_contextual_hubs_sink_in_combined_network():
    cfg = SynthConfig(n_contexts=2, cross_context_user_fraction=0.17,
                      context_user_counts=[30, 120], context_tweet_counts=[60, 2000],
                      hubs_per_context=2, hub_retweet_rate=2.0, base_retweet_rate=0.8,
                      mention_prob=0.4, reply_prob=0.9, anchor_bias=0.2,
                      anchor_tweets=6, seed=3)
    raw, truth = generate(cfg)
    records, _ = parse_records(io.StringIO("\n".join(json.dumps(r) for r in raw)))
    members_a = {u for u, cs in truth.user_contexts.items() if 0 in cs}
    members_b = {u for u, cs in truth.user_contexts.items() if 1 in cs}
    jaccard = len(members_a & members_b) / len(members_a | members_b)
    assert 0.12 <= jaccard <= 0.16

    rows = [(r.id, "2020-11-03", truth.context_of[r.id]) for r in records
            if r.id in truth.context_of]
    contexts = analysis.assign_contexts(rows, records)
    nets = [analysis.build_user_network(c, records) for c in contexts]
    combined_scores = analysis.pagerank(analysis.combine_networks(nets))

    buried = False
    low_tau = False
    for net in nets:
        scores = analysis.pagerank(net)
        top5 = sorted(scores, key=lambda u: (-scores[u], u))[:5]
        pcts = [analysis.percentile_rank(combined_scores, u)
                for u in top5 if u in combined_scores]
        if min(pcts) < 50.0:
            buried = True
            common = {u: scores[u] for u in scores if u in combined_scores}
            tau = analysis.kendall_tau(
                common, {u: combined_scores[u] for u in common})
            if tau < 0.5:
                low_tau = True
    assert buried
    assert low_tau


def test_transition_matrix_exact_recovery_and_trim():
    planted = [[0.0, 0.96, 0.04], [0.5, 0.0, 0.5], [0.1, 0.9, 0.0]]
    cfg = SynthConfig(n_contexts=3, tweets_per_context=60, users_per_context=10,
                      planted_transitions=planted, transition_scale=50, seed=7)
    raw, truth = generate(cfg)
    records, _ = parse_records(io.StringIO("\n".join(json.dumps(r) for r in raw)))
    rows = [(r.id, "2020-11-03", truth.context_of[r.id]) for r in records
            if r.id in truth.context_of]
    contexts = analysis.assign_contexts(rows, records)

    result = analysis.transition_matrix(contexts, records, trim=0.0)
    assert np.array_equal(result.probabilities, np.array(planted))
    row_sums = result.probabilities.sum(axis=1)
    assert np.all(np.abs(row_sums - 1.0) <= 1e-9)

    trimmed = analysis.transition_matrix(contexts, records, trim=0.05)
    kept = {(i, j) for i, j, _ in trimmed.kept_edges}
    expected = {(i, j) for i in range(3) for j in range(3)
                if planted[i][j] >= 0.05}
    assert kept == expected


def test_url_normalization_table_and_idempotence():
    for raw, expected in URL_CASES:
        got = normalize_url(raw)
        assert got == expected
        assert normalize_url(got) == got

    rng = np.random.default_rng(31)
    schemes = ["http://", "https://", ""]
    hosts = ["example.com", "www.example.com", "sub.news.org", "youtube.com",
             "m.facebook.com", "google.com", "t.co", "cdn.ampproject.org"]
    paths = ["", "/a", "/a/b", "/watch", "/amp/s/example.com/x", "/story.amp"]
    queries = ["", "?v=abc123", "?utm_source=x&id=9", "?q=1&v=zz"]
    fragments = ["", "#top"]
    for _ in range(1000):
        url = (schemes[rng.integers(len(schemes))] + hosts[rng.integers(len(hosts))]
               + paths[rng.integers(len(paths))] + queries[rng.integers(len(queries))]
               + fragments[rng.integers(len(fragments))])
        try:
            once = normalize_url(url)
        except Exception:
            continue
        assert normalize_url(once) == once


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


def test_deterministic_pipeline_runs_are_digest_identical(tmp_path):
    synth_cfg = tmp_path / "synth.ini"
    synth_cfg.write_text(SYNTH_INI)
    records = tmp_path / "raw.jsonl"
    truth = tmp_path / "truth.json"
    vectors = tmp_path / "vectors"
    assert main(["synth", "--config", str(synth_cfg), "--out-records", str(records),
                 "--out-truth", str(truth), "--out-vectors", str(vectors)]) == 0

    cfg = tmp_path / "pipeline.ini"
    cfg.write_text(PIPELINE_INI.format(records=records, vectors=vectors))
    manifests = []
    for run in ("one", "two"):
        out_dir = tmp_path / run
        assert main(["pipeline", "--config", str(cfg), "--out-dir", str(out_dir),
                     "--deterministic"]) == 0
        manifests.append(json.loads((out_dir / "manifest.json").read_text()))
    stages_a, stages_b = (m["stages"] for m in manifests)
    assert set(stages_a) == set(stages_b)
    for name in stages_a:
        assert stages_a[name]["outputs"] == stages_b[name]["outputs"]


def test_label_propagation_two_hop_bound_and_conflict_drop():
    records = [
        make_record("t1", urls=["https://example.com/L"]),
        make_record("t2", reply_to="t1"),
        make_record("t3", reply_to="t2"),
        make_record("t4", urls=["https://example.com/L", "https://example.com/R"]),
        make_record("t5", reply_to="t4"),
    ]
    g, _ = build_graph(records)
    labels, conflicts = analysis.propagate_labels(
        {"example.com/L": "flagged", "example.com/R": "benign"}, g)
    assert labels == {"t1": "flagged", "t2": "flagged"}
    assert conflicts == 1

    records2 = [
        make_record("t1", urls=["https://example.com/L"]),
        make_record("t2", urls=["https://example.com/R"]),
        make_record("t3", reply_to="t1", quote_of="t2"),
    ]
    g2, _ = build_graph(records2)
    labels2, conflicts2 = analysis.propagate_labels(
        {"example.com/L": "flagged", "example.com/R": "benign"}, g2)
    assert labels2 == {"t1": "flagged", "t2": "benign"}
    assert conflicts2 == 1
