"""
Identity authentication for DUALID.

Every legitimate node acts as a certifier: it compares the positions a
neighbor claims over the air with its own track of that neighbor, labels each
heard identity, and publishes a local view. Views are merged through
maximal-clique enumeration into a trusted core, and identities outside the
core are classified. A mobility-correlation detector that only uses claims is
provided as the comparison baseline.
"""

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations
from typing import (
    Deque,
    Dict,
    FrozenSet,
    Hashable,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import numpy as np
from scipy.stats import chi2

from dualid.core.channels import Did
from dualid.core.identity import Domain, Pid
from dualid.core.mapping import Matched, MatchOutcome, UnmatchedAd
from dualid.core.tracking import DEFAULT_Q, Track, estimate_at
from dualid.core.world import Vec3
from dualid.errors import AuthError

logger = logging.getLogger(__name__)

DEFAULT_TAU = float(chi2.ppf(0.999, 3))
DEFAULT_WINDOW = 5
DEFAULT_QUORUM = 2
SENSE_RANGE_MARGIN_M = 10.0
BODY_GATE_M = 25.0
BASELINE_RHO = 0.9
BASELINE_DISTANCE_VARIANCE_M2 = 4.0
BASELINE_WINDOW = 10
TIME_TOLERANCE_S = 1e-6


class Label(str, Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"
    UNKNOWN = "unknown"


class VerdictClass(str, Enum):
    TRUSTED = "trusted"
    SYBIL = "sybil"
    MALICIOUS = "malicious"
    UNKNOWN = "unknown"

    @property
    def is_positive(self) -> bool:
        return self in (VerdictClass.SYBIL, VerdictClass.MALICIOUS)


@dataclass(frozen=True)
class WitnessReport:
    """A witness's own VD measurement of a subject, carried in its next beacon."""

    witness_did: Did
    subject_did: Did
    measured_pid: Pid
    time_s: float

    def __post_init__(self):
        if self.measured_pid.domain != Domain.VD:
            raise AuthError("witness reports carry VD measurements only")


@dataclass(frozen=True)
class MmseResult:
    score: float
    passed: bool


@dataclass(frozen=True)
class Judgment:
    """
    A certifier's latest judgment of one heard identity.

    ``matched`` means a real track stands behind the identity: the mapping
    paired them, or the track was left unexplained and this identity's claim
    is the nearest to it.
    """

    did: Did
    label: Label
    time_s: float
    track_id: Optional[int] = None
    matched: bool = False
    score: Optional[float] = None


Edge = FrozenSet[Did]


@dataclass(frozen=True)
class LocalView:
    """
    One certifier's trust graph.

    An edge joins two identities the owner verified as distinct physical
    tracks at the same time.
    """

    owner: int
    labels: Mapping[Did, Label]
    edges: FrozenSet[Edge] = frozenset()
    matched: FrozenSet[Did] = frozenset()

    def __post_init__(self):
        for edge in self.edges:
            if len(edge) != 2:
                raise AuthError("local view edges join two distinct identities")
            if not all(did in self.labels for did in edge):
                raise AuthError("edge endpoint is not a vertex")

    def with_label(self, label: Label) -> Set[Did]:
        return {did for did, value in self.labels.items() if value == label}


@dataclass(frozen=True)
class GlobalView:
    trusted_core: FrozenSet[Did]
    suspects: FrozenSet[Did]
    n_views: int
    heard: FrozenSet[Did] = frozenset()

    def __post_init__(self):
        if self.trusted_core & self.suspects:
            raise AuthError("trusted core and suspects overlap")


@dataclass(frozen=True)
class Verdict:
    did: Did
    verdict: VerdictClass


def mmse_check(
    claimed: Sequence[Pid], estimated: Track, tau: float = DEFAULT_TAU, q: float = DEFAULT_Q
) -> MmseResult:
    """
    Compare claimed positions with a track's estimates at the claim times.

    The score is the mean squared Mahalanobis distance over the window,
    normalized by the claim uncertainty plus the track's position covariance.

    Args:
        claimed: AD PIDs of one identity
        estimated: Confirmed track the identity was mapped to
        tau: Pass threshold on the mean distance
        q: Process-noise density used to align the track to claim times

    Returns:
        Score and verdict
    """
    if not claimed:
        raise AuthError("empty window")
    if not estimated.is_confirmed:
        raise AuthError("unconfirmed track")
    distances = []
    for pid in claimed:
        state, covariance = estimate_at(estimated, pid.time_s, q)
        combined = pid.sigma_position**2 * np.eye(3) + covariance[:3, :3]
        delta = pid.position.as_array() - state[:3]
        distances.append(float(delta @ np.linalg.solve(combined, delta)))
    score = float(np.mean(distances))
    return MmseResult(score=score, passed=score <= tau)


def corroborates(report: WitnessReport, claim: Pid, tau: float = DEFAULT_TAU) -> bool:
    """Whether a witness measurement agrees with a claim taken at the same time."""
    if abs(report.time_s - claim.time_s) > TIME_TOLERANCE_S:
        return False
    variance = claim.sigma_position**2 + report.measured_pid.sigma_position**2
    gap = claim.position.distance_to(report.measured_pid.position)
    return gap * gap / variance <= tau


def build_local_view(owner: int, owner_did: Did, judgments: Iterable[Judgment]) -> LocalView:
    """
    Assemble a local view from a certifier's current judgments.

    The owner's own identity is consistent and linked to every consistent
    identity it tracks; consistent identities on distinct tracks are linked
    to each other.
    """
    labels: Dict[Did, Label] = {}
    tracked: Dict[Did, int] = {}
    matched: Set[Did] = set()
    for judgment in judgments:
        if judgment.did == owner_did:
            continue
        labels[judgment.did] = judgment.label
        if judgment.matched:
            matched.add(judgment.did)
        if judgment.label == Label.CONSISTENT and judgment.track_id is not None:
            tracked[judgment.did] = judgment.track_id
    labels[owner_did] = Label.CONSISTENT

    edges = {frozenset((owner_did, did)) for did in tracked}
    for (a, track_a), (b, track_b) in combinations(sorted(tracked.items()), 2):
        if track_a != track_b:
            edges.add(frozenset((a, b)))
    return LocalView(owner=owner, labels=labels, edges=frozenset(edges), matched=frozenset(matched))


def bron_kerbosch(
    vertices: Iterable[Hashable], edges: Iterable[Iterable[Hashable]]
) -> List[FrozenSet]:
    """
    Enumerate all maximal cliques of a simple undirected graph.

    Uses the pivoting variant: the pivot is the candidate with the most
    neighbors among the remaining candidates. Output is sorted by each
    clique's sorted member tuple.
    """
    adjacency: Dict[Hashable, Set[Hashable]] = {v: set() for v in vertices}
    for edge in edges:
        ends = tuple(edge)
        if len(ends) != 2 or ends[0] == ends[1]:
            raise AuthError("self-loops are not allowed")
        a, b = ends
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)

    cliques: List[FrozenSet] = []

    def expand(r: Set, p: Set, x: Set) -> None:
        if not p and not x:
            cliques.append(frozenset(r))
            return
        pivot = max(sorted(p | x), key=lambda u: len(p & adjacency[u]))
        for v in sorted(p - adjacency[pivot]):
            expand(r | {v}, p & adjacency[v], x & adjacency[v])
            p = p - {v}
            x = x | {v}

    if adjacency:
        expand(set(), set(adjacency), set())
    return sorted(cliques, key=lambda c: sorted(c))


def merge_views(views: Sequence[LocalView], quorum: int = DEFAULT_QUORUM) -> GlobalView:
    """
    Merge local views into a global view.

    Identities consistent in at least ``quorum`` views and inconsistent in
    none form the agreement graph; an edge survives if ``quorum`` views carry
    it. The largest maximal clique is the trusted core.

    Args:
        views: Local views of the certifiers
        quorum: Minimum number of agreeing views

    Returns:
        Trusted core and suspects
    """
    if not views:
        raise AuthError("no views to merge")
    if quorum < 1:
        raise AuthError("quorum must be at least 1")

    consistent: Dict[Did, int] = {}
    inconsistent: Dict[Did, int] = {}
    edge_votes: Dict[Edge, int] = {}
    heard: Set[Did] = set()
    for view in views:
        for did, label in view.labels.items():
            heard.add(did)
            if label == Label.CONSISTENT:
                consistent[did] = consistent.get(did, 0) + 1
            elif label == Label.INCONSISTENT:
                inconsistent[did] = inconsistent.get(did, 0) + 1
        for edge in view.edges:
            edge_votes[edge] = edge_votes.get(edge, 0) + 1

    agreed = {
        did for did, votes in consistent.items() if votes >= quorum and did not in inconsistent
    }
    agreed_edges = [
        edge for edge, votes in edge_votes.items() if votes >= quorum and edge <= agreed
    ]
    cliques = bron_kerbosch(agreed, agreed_edges)
    core: FrozenSet[Did] = frozenset()
    if cliques:
        largest = max(len(c) for c in cliques)
        core = min((c for c in cliques if len(c) == largest), key=lambda c: sorted(c))
    suspects = frozenset(did for did in heard if did not in core and did in inconsistent)
    return GlobalView(
        trusted_core=core, suspects=suspects, n_views=len(views), heard=frozenset(heard)
    )


def classify(global_view: GlobalView, matched_dids: Iterable[Did]) -> List[Verdict]:
    """
    Verdict per heard identity.

    A suspect some certifier matched to a real track has a body behind it and
    is malicious; a suspect never matched to any track is a Sybil phantom.
    """
    matched = set(matched_dids)
    verdicts = []
    for did in sorted(global_view.heard):
        if did in global_view.trusted_core:
            verdict = VerdictClass.TRUSTED
        elif did in global_view.suspects:
            verdict = VerdictClass.MALICIOUS if did in matched else VerdictClass.SYBIL
        else:
            verdict = VerdictClass.UNKNOWN
        verdicts.append(Verdict(did, verdict))
    return verdicts


@dataclass
class Certifier:
    """
    Authentication state kept by one legitimate node.

    Holds a sliding window of claims per heard identity, the latest judgment
    per identity, and witness reports received from neighbors.
    """

    node_id: int
    did: Did
    sense_range_m: float
    window: int = DEFAULT_WINDOW
    tau: float = DEFAULT_TAU
    q: float = DEFAULT_Q
    range_margin_m: float = SENSE_RANGE_MARGIN_M
    body_gate_m: float = BODY_GATE_M
    claims: Dict[Did, Deque[Pid]] = field(default_factory=dict)
    judgments: Dict[Did, Judgment] = field(default_factory=dict)
    reports: Dict[Did, List[WitnessReport]] = field(default_factory=dict)

    def observe_claims(self, ad_pids: Iterable[Pid]) -> None:
        for pid in ad_pids:
            if pid.did is None or pid.did == self.did:
                continue
            self.claims.setdefault(pid.did, deque(maxlen=self.window)).append(pid)

    def observe_reports(self, reports: Iterable[WitnessReport]) -> None:
        for report in reports:
            if report.witness_did == self.did:
                continue
            bucket = self.reports.setdefault(report.subject_did, [])
            bucket.append(report)
            del bucket[: -4 * self.window]

    def _corroborated(self, did: Did) -> bool:
        trusted_witnesses = {
            d for d, j in self.judgments.items() if j.label == Label.CONSISTENT and j.track_id is not None
        }
        for report in self.reports.get(did, ()):
            if report.witness_did not in trusted_witnesses:
                continue
            for claim in self.claims.get(did, ()):
                if corroborates(report, claim, self.tau):
                    return True
        return False

    def judge(
        self,
        ad_pids: Sequence[Pid],
        outcomes: Sequence[MatchOutcome],
        vd_track_ids: Sequence[int],
        tracks: Mapping[int, Track],
        owner_position: Vec3,
        time_s: float,
    ) -> List[Judgment]:
        """
        Label every identity heard in one AD round.

        Args:
            ad_pids: One AD PID per Did, indexed like the mapping's AD side
            outcomes: Mapping outcomes for this round
            vd_track_ids: Track id per VD index of the mapping
            tracks: Confirmed tracks by id
            owner_position: The certifier's own position
            time_s: Emission time of the round

        Returns:
            The judgments made this round
        """
        bound: Dict[int, Tuple[int, float]] = {}
        unmatched: Set[int] = set()
        for outcome in outcomes:
            if isinstance(outcome, Matched):
                bound[outcome.ad_index] = (vd_track_ids[outcome.vd_index], outcome.similarity)
            elif isinstance(outcome, UnmatchedAd):
                unmatched.add(outcome.ad_index)

        made = []
        for index, pid in enumerate(ad_pids):
            did = pid.did
            if did is None or did == self.did:
                continue
            window = list(self.claims.get(did, ()))
            judgment = Judgment(did=did, label=Label.UNKNOWN, time_s=time_s)
            claimed_range = pid.position.distance_to(owner_position)
            full = len(window) >= self.window
            if full and claimed_range > self.sense_range_m - self.range_margin_m:
                if self._corroborated(did):
                    judgment = Judgment(did=did, label=Label.CONSISTENT, time_s=time_s)
            elif full and index in bound:
                track_id, _ = bound[index]
                result = mmse_check(window, tracks[track_id], self.tau, self.q)
                judgment = Judgment(
                    did=did,
                    label=Label.CONSISTENT if result.passed else Label.INCONSISTENT,
                    time_s=time_s,
                    track_id=track_id,
                    matched=True,
                    score=result.score,
                )
            elif full and index in unmatched:
                judgment = Judgment(did=did, label=Label.INCONSISTENT, time_s=time_s)
            self.judgments[did] = judgment
            made.append(judgment)

        bound_tracks = {track_id for track_id, _ in bound.values()}
        bodies = self._attribute_bodies(made, ad_pids, tracks, bound_tracks, time_s)
        for k, judgment in enumerate(made):
            if judgment.did in bodies:
                made[k] = replace(judgment, matched=True, track_id=bodies[judgment.did])
                self.judgments[judgment.did] = made[k]
        return made

    def _attribute_bodies(
        self,
        made: Sequence[Judgment],
        ad_pids: Sequence[Pid],
        tracks: Mapping[int, Track],
        bound_tracks: Set[int],
        time_s: float,
    ) -> Dict[Did, int]:
        """
        Pair unexplained tracks with the inconsistent identity claimed nearest.

        A track is unexplained when the mapping left it unpaired this round
        and no identity this certifier holds consistent is bound to it. Each
        such track goes to the nearest unmatched inconsistent claim within
        ``body_gate_m``; phantoms have no track, so only a disguised body
        can pick one up.

        Returns:
            Track id per identity that picked one up
        """
        explained = {
            j.track_id
            for j in self.judgments.values()
            if j.track_id is not None and j.label != Label.INCONSISTENT
        }
        labels = {j.did: j for j in made}
        claims = [
            p
            for p in ad_pids
            if p.did in labels
            and labels[p.did].label == Label.INCONSISTENT
            and not labels[p.did].matched
        ]
        if not claims:
            return {}
        bodies: Dict[Did, Tuple[float, int]] = {}
        for track_id in sorted(tracks):
            if track_id in bound_tracks or track_id in explained:
                continue
            state, _ = estimate_at(tracks[track_id], time_s, self.q)
            position = Vec3.from_array(state[:3])
            gap, did = min((p.position.distance_to(position), p.did) for p in claims)
            if gap <= self.body_gate_m and (did not in bodies or gap < bodies[did][0]):
                bodies[did] = (gap, track_id)
        if bodies:
            logger.debug("node %d: unexplained tracks behind %s", self.node_id, sorted(bodies))
        return {did: track_id for did, (_, track_id) in bodies.items()}

    def local_view(self, time_s: float, max_age_s: float) -> LocalView:
        """Local view from judgments no older than ``max_age_s``."""
        fresh = [j for j in self.judgments.values() if time_s - j.time_s <= max_age_s]
        return build_local_view(self.node_id, self.did, fresh)


ClaimHistory = Sequence[Tuple[float, Vec3]]


def _aligned(a: ClaimHistory, b: ClaimHistory) -> Tuple[np.ndarray, np.ndarray]:
    times_b = {round(t / TIME_TOLERANCE_S): p for t, p in b}
    pa, pb = [], []
    for t, p in a:
        key = round(t / TIME_TOLERANCE_S)
        if key in times_b:
            pa.append(p.as_array())
            pb.append(times_b[key].as_array())
    return np.array(pa).reshape(-1, 3), np.array(pb).reshape(-1, 3)


def displacement_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """
    Pearson correlation of two per-step displacement series.

    Two motionless series correlate perfectly only if they are identical.
    """
    da, db = np.diff(a, axis=0).ravel(), np.diff(b, axis=0).ravel()
    flat_a, flat_b = np.allclose(da, da.mean()), np.allclose(db, db.mean())
    if flat_a and flat_b:
        return 1.0 if np.allclose(da, db) else 0.0
    if flat_a or flat_b:
        return 0.0
    return float(np.corrcoef(da, db)[0, 1])


def baseline_mobility_detect(
    histories: Mapping[Did, ClaimHistory],
    window: int = BASELINE_WINDOW,
    rho: float = BASELINE_RHO,
    distance_variance_bound: float = BASELINE_DISTANCE_VARIANCE_M2,
) -> List[Verdict]:
    """
    Flag identities whose claimed trajectories move in lockstep.

    Pairs with displacement correlation above ``rho`` and a near-constant
    separation are grouped; in each group of two or more, the member most
    correlated with the rest is called malicious and the others Sybil.

    Args:
        histories: Claimed (time, position) series per Did
        window: Number of most recent claims considered (at least 3)
        rho: Correlation threshold
        distance_variance_bound: Bound on the variance of pairwise separation

    Returns:
        One verdict per Did, sorted by Did
    """
    if window < 3:
        raise AuthError("insufficient history")
    recent = {did: list(h)[-window:] for did, h in histories.items()}
    usable = sorted(did for did, h in recent.items() if len(h) >= 3)
    if not usable:
        raise AuthError("insufficient history")

    parent = {did: did for did in usable}

    def find(did: Did) -> Did:
        while parent[did] != did:
            parent[did] = parent[parent[did]]
            did = parent[did]
        return did

    correlation: Dict[Tuple[Did, Did], float] = {}
    for a, b in combinations(usable, 2):
        pa, pb = _aligned(recent[a], recent[b])
        if len(pa) < 3:
            continue
        corr = displacement_correlation(pa, pb)
        separation = np.linalg.norm(pa - pb, axis=1)
        correlation[(a, b)] = corr
        if corr > rho and float(np.var(separation)) <= distance_variance_bound:
            parent[find(a)] = find(b)

    groups: Dict[Did, List[Did]] = {}
    for did in usable:
        groups.setdefault(find(did), []).append(did)

    verdicts: Dict[Did, VerdictClass] = {did: VerdictClass.UNKNOWN for did in histories}
    for members in groups.values():
        if len(members) == 1:
            verdicts[members[0]] = VerdictClass.TRUSTED
            continue

        def mean_correlation(did: Did) -> float:
            values = [
                correlation.get((min(did, o), max(did, o)), 0.0) for o in members if o != did
            ]
            return float(np.mean(values))

        leader = min(members, key=lambda d: (-mean_correlation(d), d))
        for did in members:
            verdicts[did] = VerdictClass.MALICIOUS if did == leader else VerdictClass.SYBIL
        logger.debug("mobility baseline grouped %d identities", len(members))
    return [Verdict(did, verdicts[did]) for did in sorted(verdicts)]


def verdict_map(verdicts: Iterable[Verdict]) -> Dict[Did, VerdictClass]:
    return {v.did: v.verdict for v in verdicts}


def positives(verdicts: Iterable[Verdict]) -> Set[Did]:
    return {v.did for v in verdicts if v.verdict.is_positive}


def flagged_fraction(verdicts: Iterable[Verdict], dids: Iterable[Did]) -> float:
    """Fraction of ``dids`` carrying a Sybil or malicious verdict."""
    pool = set(dids)
    if not pool:
        return 0.0
    return len(positives(verdicts) & pool) / len(pool)

