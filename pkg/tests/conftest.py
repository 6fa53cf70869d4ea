import datetime

import numpy as np
import pytest

from convoctx.hetgraph import HeteroGraph
from convoctx.records import record_from_dict


def make_raw(rec_id, author="u1", text="hello world", **kw):
    d = {
        "id": rec_id, "author_id": author, "text": text,
        "created_at": "2020-11-03T12:00:00+00:00", "lang": "en",
        "hashtags": [], "urls": [], "mentions": [],
        "reply_to": None, "quote_of": None, "retweet_of": None,
    }
    d.update(kw)
    return d


def make_record(rec_id, author="u1", text="hello world", **kw):
    return record_from_dict(make_raw(rec_id, author, text, **kw))


def random_hetgraph(rng, n_t, n_h, n_u, p_tt=0.15, p_th=0.3, p_tu=0.2):
    """Direct construction of a small typed graph with mirrored edge lists."""
    g = HeteroGraph([f"t{i}" for i in range(n_t)],
                    [f"h{i}" for i in range(n_h)],
                    [f"u{i}" for i in range(n_u)])
    for i in range(n_t):
        for j in range(i + 1, n_t):
            if rng.random() < p_tt:
                g.tt[i].append(j)
                g.tt[j].append(i)
                g.tt_out[i].append(j)
                g.tt_in[j].append(i)
        for h in range(n_h):
            if rng.random() < p_th:
                g.th[i].append(h)
                g.ht[h].append(i)
        for u in range(n_u):
            if rng.random() < p_tu:
                g.tu[i].append(u)
                g.ut[u].append(i)
    g._finalize()
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def ts(minute, day=3):
    return datetime.datetime(2020, 11, day, 12, minute, tzinfo=datetime.timezone.utc
                             ).isoformat()
