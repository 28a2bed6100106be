import pytest

from echoscope.ingest import (
    DatasetBundle,
    DomainScoreTable,
    EventLog,
    FollowEdgeList,
    KIND_ORIGINAL,
    KIND_RETWEET,
    TweetEvent,
)


def ev(tweet_id, author, ts, kind=KIND_ORIGINAL, orig=None, domains=()):
    return TweetEvent(tweet_id, author, ts, kind, orig, tuple(domains))


def rt(tweet_id, author, ts, orig, domains=()):
    return TweetEvent(tweet_id, author, ts, KIND_RETWEET, orig, tuple(domains))


def make_bundle(scores, edges, events, seeds=None):
    """Assemble an in-memory bundle from plain literals."""
    edge_list = FollowEdgeList.from_pairs(edges)
    log = EventLog.from_events(events)
    if seeds is None:
        seeds = edge_list.sources()
    return DatasetBundle(DomainScoreTable(dict(scores)), edge_list, log, frozenset(seeds))


@pytest.fixture
def tiny_bundle():
    """Two seeds, three friends, a handful of scored events."""
    scores = {"left.example": 0.0, "mid.example": 0.5, "right.example": 1.0}
    edges = [("s1", "f1"), ("s1", "f2"), ("s2", "f2"), ("s2", "f3")]
    events = [
        ev("t01", "s1", 10, domains=["left.example"]),
        ev("t02", "s2", 20, domains=["right.example"]),
        ev("t03", "f1", 30, domains=["left.example"]),
        ev("t04", "f2", 40, domains=["mid.example"]),
        ev("t05", "f3", 50, domains=["right.example"]),
        rt("t06", "s1", 60, "f1", domains=["left.example"]),
        rt("t07", "s2", 70, "f3", domains=["right.example"]),
    ]
    return make_bundle(scores, edges, events)
