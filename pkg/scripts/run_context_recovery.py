"""Synthetic context-recovery experiment.

Generates a multi-context corpus, trains the graph encoder, clusters the
resulting embeddings, and reports recovery quality against the planted
contexts, alongside a text-only clustering baseline.
"""

import argparse
import io
import json

import numpy as np

from convoctx import analysis
from convoctx.clustering import cluster
from convoctx.dti.train import TrainConfig, embed_all, train
from convoctx.features import build_features, propagate_features
from convoctx.hetgraph import build_graph
from convoctx.records import parse_records
from convoctx.synthgen import SynthConfig, generate, make_word_vectors


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--contexts", type=int, default=4)
    ap.add_argument("--tweets", type=int, default=500, help="tweets per context")
    ap.add_argument("--shared-vocab", type=float, default=0.5,
                    help="fraction of tokens drawn from the shared vocabulary")
    ap.add_argument("--token-bias", type=float, default=0.0,
                    help="per-context frequency tilt inside the shared vocabulary")
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--lr", type=float, default=0.005)
    ap.add_argument("--hidden-dim", type=int, default=128)
    ap.add_argument("--min-cluster-size", type=int, default=150)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-seed", type=int, default=2)
    args = ap.parse_args()

    cfg = SynthConfig(n_contexts=args.contexts, tweets_per_context=args.tweets,
                      users_per_context=40, shared_vocab_fraction=args.shared_vocab,
                      context_token_bias=args.token_bias, url_prob=1.0,
                      seed=args.seed)
    raw, truth = generate(cfg)
    records, report = parse_records(io.StringIO("\n".join(json.dumps(r) for r in raw)))
    print(f"generated {len(records)} records "
          f"({report.n_malformed} malformed, {report.n_duplicates} duplicates)")

    g, _ = build_graph(records)
    X, known = build_features(records, g, make_word_vectors(cfg))
    X, prop = propagate_features(g, X, known)
    print(f"graph: {len(g.tweet_ids)} tweets, {len(g.hashtag_ids)} hashtags, "
          f"{len(g.url_ids)} urls; propagation {prop.iterations} iterations")

    tc = TrainConfig(epochs=args.epochs, seed=args.train_seed, lr=args.lr,
                     hidden_dim=args.hidden_dim, patience=15)
    params, hist = train(g, X, tc)
    decrease = (hist.epoch_loss[0] - hist.best_loss) / hist.epoch_loss[0]
    print(f"trained {len(hist.epoch_loss)} epochs; "
          f"loss {hist.epoch_loss[0]:.4f} -> {hist.best_loss:.4f} "
          f"({100 * decrease:.1f}% decrease)")

    true = {t: truth.context_of[t] for t in g.tweet_ids}

    def quality(points, tag):
        res = cluster(np.asarray(points, np.float64),
                      min_cluster_size=args.min_cluster_size, min_samples=1)
        pred = {t: int(res.labels[g.tweet_index[t]]) for t in g.tweet_ids}
        q = analysis.partition_quality(pred, true)
        print(f"{tag}: {res.n_clusters} clusters, ARI {q['ari']:.3f}, "
              f"NMI {q['nmi']:.3f}, purity {q['purity']:.3f}, "
              f"noise {100 * q['noise_fraction']:.1f}%")

    quality(X, "text-only baseline")
    embeddings, _, _, _ = embed_all(g, X, params)
    quality(embeddings, "graph embeddings")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
