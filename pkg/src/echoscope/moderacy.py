"""Moderacy scores: individual, exposure via either graph, and their bias.

Score pipeline for a user u:
  mu(u)      raw mean of domain scores over u's original tweets (multiset of
             URL occurrences by default; a set-of-domains reading is available
             via unique_domains)
  folded     mu if mu > 0.5 else 1 - mu, collapsing left/right extremity into
             a single intensity in [0.5, 1]
  m_s(u)     folded value min-max normalized over all scored users

Exposure pools every scored domain occurrence posted by u's friends under a
graph kind (originals and retweets both land in a timeline), so active
friends weigh more. The fold branch for exposures reuses u's OWN raw mu, and
the two exposure kinds are normalized jointly so their difference
(delta = m_e_f - m_e_r) is meaningful.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import EchoscopeError
from .graph import FollowerGraph, RetweetGraph, sample_random_friend_subset
from .ingest import DatasetBundle, DomainScoreTable, EventLog, KIND_ORIGINAL

log = logging.getLogger(__name__)

MODERATE = "Moderate"
HARDLINER = "Hardliner"

FOLLOWER = "follower"
RETWEET = "retweet"

Window = Optional[tuple[int, int]]  # inclusive [lo, hi] on timestamps


def fold(mu: float) -> float:
    """Reflect scores below the center: mu if mu > 0.5 else 1 - mu."""
    if not 0.0 <= mu <= 1.0:
        raise EchoscopeError(f"fold input out of [0,1]: {mu}")
    return mu if mu > 0.5 else 1.0 - mu


def classify(m_s: float) -> str:
    """Moderate iff m_s <= 0.5 (boundary inclusive)."""
    return MODERATE if m_s <= 0.5 else HARDLINER


def raw_mean_score(domains: Iterable[str], table: DomainScoreTable) -> Optional[float]:
    """Mean score over scored occurrences; None when nothing is scored."""
    scored = [table.scores[d] for d in domains if d in table.scores]
    if not scored:
        return None
    return math.fsum(scored) / len(scored)


def minmax_normalize(scores: dict[str, float]) -> dict[str, float]:
    """Rescale values to [0,1]; a constant population maps to 0.5."""
    if not scores:
        raise EchoscopeError("cannot normalize an empty score map")
    lo = min(scores.values())
    hi = max(scores.values())
    if hi == lo:
        log.warning("min-max range is degenerate (%g); mapping all to 0.5", lo)
        return {u: 0.5 for u in scores}
    span = hi - lo
    return {u: (v - lo) / span for u, v in scores.items()}


@dataclass(frozen=True)
class UserMetrics:
    user: str
    mu: Optional[float]
    m_s: Optional[float]
    m_e_f: Optional[float]
    m_e_r: Optional[float]
    delta: Optional[float]
    domain_count: int
    moderacy_class: Optional[str]


@dataclass(frozen=True)
class ExposureProfile:
    user: str
    kind: str
    frac_moderate: float
    frac_hardline: float
    n_domain_occurrences: int


@dataclass(frozen=True)
class CongruenceDiff:
    user: str
    moderacy_class: str
    frac_congruent_retweeted: float
    frac_congruent_not_retweeted: float
    diff: float


@dataclass(frozen=True)
class ActivityRow:
    friend: str
    activity: int
    retweeted: bool
    moderacy_class: Optional[str]


class ExposureIndex:
    """Per-author prefix sums over the time-ordered log.

    Supports O(log n) window queries for scored-occurrence sums and counts,
    originals-only sums (for mu), moderate-occurrence counts, and activity.
    """

    def __init__(self, log_data: EventLog, table: DomainScoreTable) -> None:
        per_author: dict[str, list[list]] = {}
        for ev in log_data.events:
            rec = per_author.get(ev.author)
            if rec is None:
                rec = [[], [], [], [], [], []]
                per_author[ev.author] = rec
            ts_l, sum_l, cnt_l, mod_l, osum_l, ocnt_l = rec
            s_sum = 0.0
            s_cnt = 0
            s_mod = 0
            for d in ev.domains:
                score = table.scores.get(d)
                if score is None:
                    continue
                s_sum += score
                s_cnt += 1
                if fold(score) <= 0.5:
                    s_mod += 1
            ts_l.append(ev.timestamp)
            sum_l.append(s_sum)
            cnt_l.append(s_cnt)
            mod_l.append(s_mod)
            is_orig = ev.kind == KIND_ORIGINAL
            osum_l.append(s_sum if is_orig else 0.0)
            ocnt_l.append(s_cnt if is_orig else 0)

        self._ts: dict[str, np.ndarray] = {}
        self._cum_sum: dict[str, np.ndarray] = {}
        self._cum_cnt: dict[str, np.ndarray] = {}
        self._cum_mod: dict[str, np.ndarray] = {}
        self._cum_osum: dict[str, np.ndarray] = {}
        self._cum_ocnt: dict[str, np.ndarray] = {}
        for author, (ts_l, sum_l, cnt_l, mod_l, osum_l, ocnt_l) in per_author.items():
            self._ts[author] = np.asarray(ts_l, dtype=np.int64)
            self._cum_sum[author] = np.cumsum(np.asarray(sum_l, dtype=np.float64))
            self._cum_cnt[author] = np.cumsum(np.asarray(cnt_l, dtype=np.int64))
            self._cum_mod[author] = np.cumsum(np.asarray(mod_l, dtype=np.int64))
            self._cum_osum[author] = np.cumsum(np.asarray(osum_l, dtype=np.float64))
            self._cum_ocnt[author] = np.cumsum(np.asarray(ocnt_l, dtype=np.int64))
        self.authors = sorted(per_author)

    def _span(self, author: str, window: Window) -> tuple[int, int]:
        ts = self._ts[author]
        if window is None:
            return 0, ts.size
        lo = int(np.searchsorted(ts, window[0], side="left"))
        hi = int(np.searchsorted(ts, window[1], side="right"))
        return lo, hi

    @staticmethod
    def _range(cum: np.ndarray, lo: int, hi: int):
        if hi <= lo:
            return cum.dtype.type(0)
        if lo == 0:
            return cum[hi - 1]
        return cum[hi - 1] - cum[lo - 1]

    def scored(self, author: str, window: Window = None) -> tuple[float, int]:
        if author not in self._ts:
            return 0.0, 0
        lo, hi = self._span(author, window)
        return (
            float(self._range(self._cum_sum[author], lo, hi)),
            int(self._range(self._cum_cnt[author], lo, hi)),
        )

    def moderate_count(self, author: str, window: Window = None) -> int:
        if author not in self._ts:
            return 0
        lo, hi = self._span(author, window)
        return int(self._range(self._cum_mod[author], lo, hi))

    def original_scored(self, author: str, window: Window = None) -> tuple[float, int]:
        if author not in self._ts:
            return 0.0, 0
        lo, hi = self._span(author, window)
        return (
            float(self._range(self._cum_osum[author], lo, hi)),
            int(self._range(self._cum_ocnt[author], lo, hi)),
        )

    def activity(self, author: str, window: Window = None) -> int:
        if author not in self._ts:
            return 0
        lo, hi = self._span(author, window)
        return hi - lo


def _in_window(ts: int, window: Window) -> bool:
    return window is None or (window[0] <= ts <= window[1])


def _unique_original_domains(
    user: str, log_data: EventLog, table: DomainScoreTable, window: Window
) -> set[str]:
    out: set[str] = set()
    for ev in log_data.events_by(user):
        if ev.kind == KIND_ORIGINAL and _in_window(ev.timestamp, window):
            out.update(d for d in ev.domains if d in table.scores)
    return out


def _unique_pool_domains(
    friends: Iterable[str], log_data: EventLog, table: DomainScoreTable, window: Window
) -> set[str]:
    out: set[str] = set()
    for friend in friends:
        for ev in log_data.events_by(friend):
            if _in_window(ev.timestamp, window):
                out.update(d for d in ev.domains if d in table.scores)
    return out


def individual_moderacy(
    user: str,
    log_data: EventLog,
    table: DomainScoreTable,
    window: Window = None,
    unique_domains: bool = False,
    index: Optional[ExposureIndex] = None,
) -> Optional[tuple[float, float]]:
    """(mu, folded) over the user's original tweets, or None if unscored."""
    if unique_domains:
        domains = _unique_original_domains(user, log_data, table, window)
        if not domains:
            return None
        mu = math.fsum(table.scores[d] for d in domains) / len(domains)
    else:
        if index is None:
            index = ExposureIndex(log_data, table)
        total, count = index.original_scored(user, window)
        if count == 0:
            return None
        mu = total / count
    return mu, fold(mu)


def _friend_set(
    user: str, kind: str, fg: FollowerGraph, rg: RetweetGraph, k: int
) -> frozenset[str]:
    if kind == FOLLOWER:
        return fg.friends(user)
    if kind == RETWEET:
        return rg.retweet_friends(user, k)
    raise EchoscopeError(f"unknown graph kind {kind!r}")


def exposure_moderacy(
    user: str,
    kind: str,
    fg: FollowerGraph,
    rg: RetweetGraph,
    log_data: EventLog,
    table: DomainScoreTable,
    k: int = 1,
    window: Window = None,
    unique_domains: bool = False,
    index: Optional[ExposureIndex] = None,
) -> Optional[tuple[float, float]]:
    """(raw pool mean, folded by the user's own mu branch), or None.

    None when the friend set is empty, the pool has no scored occurrence, or
    the user has no mu (the fold branch would be undefined).
    """
    friends = _friend_set(user, kind, fg, rg, k)
    if not friends:
        return None
    if index is None:
        index = ExposureIndex(log_data, table)
    own = individual_moderacy(user, log_data, table, window, unique_domains, index)
    if own is None:
        return None
    mu_user = own[0]
    if unique_domains:
        domains = _unique_pool_domains(friends, log_data, table, window)
        if not domains:
            return None
        raw = math.fsum(table.scores[d] for d in domains) / len(domains)
    else:
        total = 0.0
        count = 0
        for friend in sorted(friends):
            s, c = index.scored(friend, window)
            total += s
            count += c
        if count == 0:
            return None
        raw = total / count
    folded = raw if mu_user > 0.5 else 1.0 - raw
    return raw, folded


def exposure_delta(metrics: UserMetrics) -> Optional[float]:
    """m_e_f - m_e_r; absent when either exposure is absent."""
    if metrics.m_e_f is None or metrics.m_e_r is None:
        return None
    return metrics.m_e_f - metrics.m_e_r


def exposure_class_fractions(
    user: str,
    kind: str,
    fg: FollowerGraph,
    rg: RetweetGraph,
    log_data: EventLog,
    table: DomainScoreTable,
    k: int = 1,
    window: Window = None,
    index: Optional[ExposureIndex] = None,
) -> Optional[ExposureProfile]:
    """Share of moderate vs hardline occurrences in the exposure pool.

    Each occurrence is classified on its own: fold(score) then the standard
    class boundary, so only exactly-centrist domains count as moderate.
    """
    friends = _friend_set(user, kind, fg, rg, k)
    if not friends:
        return None
    if index is None:
        index = ExposureIndex(log_data, table)
    n_mod = 0
    n_total = 0
    for friend in sorted(friends):
        _, c = index.scored(friend, window)
        n_total += c
        n_mod += index.moderate_count(friend, window)
    if n_total == 0:
        return None
    return ExposureProfile(
        user, kind, n_mod / n_total, (n_total - n_mod) / n_total, n_total
    )


def random_baseline_fractions(
    user: str,
    fg: FollowerGraph,
    rg: RetweetGraph,
    log_data: EventLog,
    table: DomainScoreTable,
    k: int = 1,
    reps: int = 1000,
    rng: Optional[np.random.Generator] = None,
    window: Window = None,
    index: Optional[ExposureIndex] = None,
) -> Optional[ExposureProfile]:
    """Class fractions from random friend subsets matched in size.

    Each repetition draws a uniform subset of follower-graph friends the size
    of the user's retweet-friend set and pools their content; the returned
    fractions average the per-repetition fractions (repetitions with empty
    pools are skipped).
    """
    if rng is None:
        raise EchoscopeError("random_baseline_fractions needs an explicit rng")
    rt_friends = rg.retweet_friends(user, k)
    if not rt_friends:
        return None
    friends = fg.friends(user)
    if not friends:
        return None
    size = len(rt_friends)
    if index is None:
        index = ExposureIndex(log_data, table)
    frac_mod_sum = 0.0
    n_contributing = 0
    occurrences = 0
    for _ in range(reps):
        subset = sample_random_friend_subset(user, fg, size, rng)
        n_mod = 0
        n_total = 0
        for friend in sorted(subset):
            _, c = index.scored(friend, window)
            n_total += c
            n_mod += index.moderate_count(friend, window)
        if n_total == 0:
            continue
        frac_mod_sum += n_mod / n_total
        n_contributing += 1
        occurrences += n_total
    if n_contributing == 0:
        return None
    frac_mod = frac_mod_sum / n_contributing
    return ExposureProfile(user, "baseline", frac_mod, 1.0 - frac_mod, occurrences)


def friend_activity_comparison(
    fg: FollowerGraph,
    rg: RetweetGraph,
    log_data: EventLog,
    class_by_user: Optional[dict[str, str]] = None,
    k: int = 1,
    window: Window = None,
    index: Optional[ExposureIndex] = None,
    table: Optional[DomainScoreTable] = None,
) -> list[ActivityRow]:
    """Tweet counts of every follower-graph friend, split by retweeted-or-not.

    A friend counts as retweeted when any seed retweeted them at least k
    times. Each friend appears exactly once regardless of how many seeds
    follow them.
    """
    if index is None:
        if table is None:
            raise EchoscopeError("need an ExposureIndex or a score table")
        index = ExposureIndex(log_data, table)
    universe: set[str] = set()
    for friends in fg.adjacency.values():
        universe.update(friends)
    retweeted: set[str] = set()
    for weights in rg.weighted_adjacency.values():
        retweeted.update(v for v, w in weights.items() if w >= k)
    class_by_user = class_by_user or {}
    rows = []
    for friend in sorted(universe):
        rows.append(
            ActivityRow(
                friend,
                index.activity(friend, window),
                friend in retweeted,
                class_by_user.get(friend),
            )
        )
    return rows


def congruent_friend_fraction_diff(
    user: str,
    fg: FollowerGraph,
    rg: RetweetGraph,
    class_by_user: dict[str, str],
    k: int = 1,
) -> Optional[CongruenceDiff]:
    """Class-share gap between retweeted and not-retweeted friends.

    Fractions run over scored friends only; absent when the user is unscored
    or either partition has no scored friend.
    """
    own_class = class_by_user.get(user)
    if own_class is None:
        return None
    friends = fg.friends(user)
    rt_friends = rg.retweet_friends(user, k)
    retweeted = [f for f in friends & rt_friends if f in class_by_user]
    not_retweeted = [f for f in friends - rt_friends if f in class_by_user]
    if not retweeted or not not_retweeted:
        return None
    frac_r = sum(1 for f in retweeted if class_by_user[f] == own_class) / len(retweeted)
    frac_n = sum(1 for f in not_retweeted if class_by_user[f] == own_class) / len(
        not_retweeted
    )
    return CongruenceDiff(user, own_class, frac_r, frac_n, frac_r - frac_n)


@dataclass
class MetricsSet:
    """Per-user metrics at one retweet threshold plus shared score maps."""

    by_user: dict[str, UserMetrics]
    m_s_by_user: dict[str, float]
    class_by_user: dict[str, str]
    k: int
    warnings: tuple[str, ...] = ()


class MetricsEngine:
    """Computes individual scores once and exposures per threshold.

    Individual moderacy is normalized over every scored author in the log
    (seeds and friends alike) so friend classes are defined for the
    congruence and entropy analyses. Exposure values are normalized jointly
    across both graph kinds, per threshold.
    """

    def __init__(
        self,
        bundle: DatasetBundle,
        fg: FollowerGraph,
        rg: RetweetGraph,
        window: Window = None,
        unique_domains: bool = False,
    ) -> None:
        self.bundle = bundle
        self.fg = fg
        self.rg = rg
        self.window = window
        self.unique_domains = unique_domains
        self.index = ExposureIndex(bundle.log, bundle.scores)
        self.warnings: list[str] = []

        self.mu_by_user: dict[str, float] = {}
        self.domain_count: dict[str, int] = {}
        folded: dict[str, float] = {}
        for author in self.index.authors:
            result = individual_moderacy(
                author, bundle.log, bundle.scores, window, unique_domains, self.index
            )
            if result is None:
                continue
            mu, fold_val = result
            self.mu_by_user[author] = mu
            folded[author] = fold_val
            if unique_domains:
                self.domain_count[author] = len(
                    _unique_original_domains(author, bundle.log, bundle.scores, window)
                )
            else:
                self.domain_count[author] = self.index.original_scored(author, window)[1]
        if folded:
            values = set(folded.values())
            if len(values) == 1:
                self.warnings.append("individual moderacy range is degenerate")
            self.m_s_by_user = minmax_normalize(folded)
        else:
            self.m_s_by_user = {}
        self.class_by_user = {u: classify(v) for u, v in self.m_s_by_user.items()}
        self._raw_f: Optional[dict[str, float]] = None

    def _raw_exposures(self, kind: str, k: int) -> dict[str, float]:
        out: dict[str, float] = {}
        for user in sorted(self.bundle.seeds):
            result = exposure_moderacy(
                user,
                kind,
                self.fg,
                self.rg,
                self.bundle.log,
                self.bundle.scores,
                k,
                self.window,
                self.unique_domains,
                self.index,
            )
            if result is not None:
                out[user] = result[1]
        return out

    def exposures_at(self, k: int) -> tuple[dict[str, float], dict[str, float]]:
        """Jointly normalized (m_e_f, m_e_r) maps for seed users at threshold k."""
        if self._raw_f is None:
            # follower-side pools do not depend on the retweet threshold
            self._raw_f = self._raw_exposures(FOLLOWER, 1)
        raw_f = self._raw_f
        raw_r = self._raw_exposures(RETWEET, k)
        combined: dict[tuple[str, str], float] = {}
        for user, v in raw_f.items():
            combined[(FOLLOWER, user)] = v
        for user, v in raw_r.items():
            combined[(RETWEET, user)] = v
        if not combined:
            return {}, {}
        if len(set(combined.values())) == 1:
            self.warnings.append(f"exposure range at k={k} is degenerate")
        normalized = minmax_normalize(combined)
        m_e_f = {user: normalized[(FOLLOWER, user)] for user in raw_f}
        m_e_r = {user: normalized[(RETWEET, user)] for user in raw_r}
        return m_e_f, m_e_r

    def metrics_at(self, k: int) -> MetricsSet:
        m_e_f, m_e_r = self.exposures_at(k)
        by_user: dict[str, UserMetrics] = {}
        users = sorted(set(self.mu_by_user) | set(m_e_f) | set(m_e_r))
        for user in users:
            mef = m_e_f.get(user)
            mer = m_e_r.get(user)
            delta = mef - mer if mef is not None and mer is not None else None
            by_user[user] = UserMetrics(
                user=user,
                mu=self.mu_by_user.get(user),
                m_s=self.m_s_by_user.get(user),
                m_e_f=mef,
                m_e_r=mer,
                delta=delta,
                domain_count=self.domain_count.get(user, 0),
                moderacy_class=self.class_by_user.get(user),
            )
        return MetricsSet(
            by_user=by_user,
            m_s_by_user=dict(self.m_s_by_user),
            class_by_user=dict(self.class_by_user),
            k=k,
            warnings=tuple(self.warnings),
        )


def compute_user_metrics(
    bundle: DatasetBundle,
    fg: FollowerGraph,
    rg: RetweetGraph,
    k: int = 1,
    window: Window = None,
    unique_domains: bool = False,
) -> MetricsSet:
    """One-shot helper around MetricsEngine for a single threshold."""
    return MetricsEngine(bundle, fg, rg, window, unique_domains).metrics_at(k)
