"""
Unit tests for identity authentication.
"""

import itertools

import numpy as np
import pytest

from dualid.core.auth import (
    DEFAULT_TAU,
    Certifier,
    GlobalView,
    Judgment,
    Label,
    LocalView,
    Verdict,
    VerdictClass,
    WitnessReport,
    baseline_mobility_detect,
    bron_kerbosch,
    build_local_view,
    classify,
    corroborates,
    displacement_correlation,
    flagged_fraction,
    merge_views,
    mmse_check,
    positives,
    verdict_map,
)
from dualid.core.channels import Did
from dualid.core.identity import Domain
from dualid.core.mapping import Matched, UnmatchedAd, UnmatchedVd
from dualid.core.tracking import Track, TrackStatus
from dualid.core.world import Vec3
from dualid.errors import AuthError

U = [Did.for_node(k) for k in range(1, 5)]
M = Did.for_node(5)
S = [Did.fabricated(5, k) for k in range(1, 4)]


def still_track(position, track_id=10, position_variance=0.25, time_s=0.2):
    covariance = np.eye(6)
    covariance[:3, :3] = position_variance * np.eye(3)
    return Track(
        track_id=track_id,
        state=np.concatenate([np.asarray(position, float), np.zeros(3)]),
        covariance=covariance,
        time_s=time_s,
        last_update_s=time_s,
        status=TrackStatus.CONFIRMED,
    )


def consistent(did, track_id):
    return Judgment(did=did, label=Label.CONSISTENT, time_s=0.0, track_id=track_id, matched=True)


def inconsistent(did, matched=False):
    return Judgment(did=did, label=Label.INCONSISTENT, time_s=0.0, matched=matched)


def cluster_views():
    """Each legitimate node tracks the other three and the attacker's body."""
    views = []
    for k, owner in enumerate(U):
        judgments = [consistent(other, 100 + j) for j, other in enumerate(U) if other != owner]
        judgments.append(inconsistent(M, matched=True))
        judgments.extend(inconsistent(s) for s in S)
        views.append(build_local_view(k + 1, owner, judgments))
    return views


class TestMmseCheck:
    """Test claim-versus-estimate scoring."""

    @pytest.mark.unit
    def test_exact_claim_passes(self, make_pid):
        claim = make_pid(position=(10.0, 0.0, 100.0), time_s=0.2)
        result = mmse_check([claim], still_track((10.0, 0.0, 100.0)))
        assert result.score == pytest.approx(0.0)
        assert result.passed

    @pytest.mark.unit
    def test_ten_meter_offset_fails(self, make_pid):
        claim = make_pid(position=(10.0, 0.0, 100.0), sigma_position=0.5, time_s=0.2)
        track = still_track((0.0, 0.0, 100.0), position_variance=0.24)
        result = mmse_check([claim], track)
        assert result.score == pytest.approx(100.0 / 0.49)
        assert not result.passed
        assert result.score > DEFAULT_TAU

    @pytest.mark.unit
    def test_window_is_averaged(self, make_pid):
        track = still_track((0.0, 0.0, 100.0), position_variance=0.0)
        claims = [
            make_pid(position=(0.0, 0.0, 100.0), sigma_position=1.0, time_s=0.0),
            make_pid(position=(2.0, 0.0, 100.0), sigma_position=1.0, time_s=0.2),
        ]
        assert mmse_check(claims, track, q=0.0).score == pytest.approx(2.0)

    @pytest.mark.slow
    def test_honest_pass_rate(self, make_pid):
        rng = np.random.default_rng(21)
        track = still_track((50.0, 50.0, 100.0), position_variance=0.25)
        passed = 0
        trials = 5000
        for _ in range(trials):
            noisy = np.array([50.0, 50.0, 100.0]) + rng.normal(0.0, 2.0, 3)
            claim = make_pid(position=tuple(noisy), sigma_position=2.0, time_s=0.2)
            passed += mmse_check([claim], track).passed
        assert passed / trials >= 0.99

    @pytest.mark.unit
    def test_rejects_empty_and_unconfirmed(self, make_pid):
        with pytest.raises(AuthError, match="empty window"):
            mmse_check([], still_track((0.0, 0.0, 0.0)))
        tentative = Track(
            track_id=1,
            state=np.zeros(6),
            covariance=np.eye(6),
            time_s=0.0,
            last_update_s=0.0,
        )
        with pytest.raises(AuthError, match="unconfirmed"):
            mmse_check([make_pid()], tentative)


class TestWitnessReports:
    """Test witness corroboration."""

    @pytest.mark.unit
    def test_vd_only(self, make_pid):
        with pytest.raises(AuthError):
            WitnessReport(U[0], U[1], make_pid(domain=Domain.AD), 0.0)

    @pytest.mark.unit
    def test_corroboration(self, make_pid):
        claim = make_pid(position=(400.0, 0.0, 100.0), time_s=0.4)
        near = WitnessReport(U[1], U[2], make_pid(domain=Domain.VD, position=(401.0, 0.0, 100.0), time_s=0.4), 0.4)
        far = WitnessReport(U[1], U[2], make_pid(domain=Domain.VD, position=(440.0, 0.0, 100.0), time_s=0.4), 0.4)
        late = WitnessReport(U[1], U[2], make_pid(domain=Domain.VD, position=(400.0, 0.0, 100.0), time_s=0.6), 0.6)
        assert corroborates(near, claim)
        assert not corroborates(far, claim)
        assert not corroborates(late, claim)


class TestLocalView:
    """Test local trust graphs."""

    @pytest.mark.unit
    def test_tracked_neighbors_are_linked(self):
        view = build_local_view(1, U[0], [consistent(U[1], 10), consistent(U[2], 11)])
        assert view.edges == {
            frozenset((U[0], U[1])),
            frozenset((U[0], U[2])),
            frozenset((U[1], U[2])),
        }
        assert view.labels[U[0]] == Label.CONSISTENT
        assert view.matched == {U[1], U[2]}

    @pytest.mark.unit
    def test_shared_track_not_linked(self):
        view = build_local_view(1, U[0], [consistent(U[1], 10), consistent(U[2], 10)])
        assert frozenset((U[1], U[2])) not in view.edges

    @pytest.mark.unit
    def test_unknown_and_inconsistent_have_no_edges(self):
        unknown = Judgment(did=U[3], label=Label.UNKNOWN, time_s=0.0)
        view = build_local_view(1, U[0], [unknown, inconsistent(M, matched=True)])
        assert view.edges == frozenset()
        assert view.with_label(Label.UNKNOWN) == {U[3]}
        assert view.with_label(Label.INCONSISTENT) == {M}

    @pytest.mark.unit
    def test_own_judgment_ignored(self):
        view = build_local_view(1, U[0], [inconsistent(U[0])])
        assert view.labels == {U[0]: Label.CONSISTENT}

    @pytest.mark.unit
    def test_edges_must_join_vertices(self):
        with pytest.raises(AuthError):
            LocalView(owner=1, labels={U[0]: Label.CONSISTENT}, edges=frozenset({frozenset((U[0], U[1]))}))
        with pytest.raises(AuthError):
            LocalView(owner=1, labels={U[0]: Label.CONSISTENT}, edges=frozenset({frozenset((U[0],))}))


def brute_force_cliques(vertices, edges):
    adjacency = {v: set() for v in vertices}
    for a, b in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    cliques = [
        frozenset(subset)
        for size in range(1, len(vertices) + 1)
        for subset in itertools.combinations(vertices, size)
        if all(b in adjacency[a] for a, b in itertools.combinations(subset, 2))
    ]
    return {c for c in cliques if not any(c < other for other in cliques)}


class TestBronKerbosch:
    """Test maximal-clique enumeration."""

    @pytest.mark.unit
    def test_triangle(self):
        assert bron_kerbosch("abc", [("a", "b"), ("b", "c"), ("a", "c")]) == [frozenset("abc")]

    @pytest.mark.unit
    def test_path(self):
        assert bron_kerbosch("abc", [("a", "b"), ("b", "c")]) == [frozenset("ab"), frozenset("bc")]

    @pytest.mark.unit
    def test_isolated_and_empty(self):
        assert bron_kerbosch("ab", []) == [frozenset("a"), frozenset("b")]
        assert bron_kerbosch([], []) == []

    @pytest.mark.unit
    def test_self_loop_rejected(self):
        with pytest.raises(AuthError, match="self-loops"):
            bron_kerbosch("a", [("a", "a")])

    @pytest.mark.unit
    def test_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            vertices = list(range(8))
            edges = [e for e in itertools.combinations(vertices, 2) if rng.random() < 0.5]
            assert set(bron_kerbosch(vertices, edges)) == brute_force_cliques(vertices, edges)

    @pytest.mark.slow
    def test_matches_networkx_on_larger_graphs(self):
        nx = pytest.importorskip("networkx")
        rng = np.random.default_rng(18)
        for _ in range(200):
            graph = nx.gnp_random_graph(12, float(rng.uniform(0.2, 0.8)), seed=int(rng.integers(1 << 30)))
            expected = {frozenset(c) for c in nx.find_cliques(graph)}
            assert set(bron_kerbosch(graph.nodes, graph.edges)) == expected


class TestMergeViews:
    """Test view merging."""

    @pytest.mark.unit
    def test_agreement_without_attacker(self):
        views = []
        for k, owner in enumerate(U):
            others = [consistent(o, 100 + j) for j, o in enumerate(U) if o != owner]
            views.append(build_local_view(k + 1, owner, others))
        merged = merge_views(views, quorum=2)
        assert merged.trusted_core == set(U)
        assert merged.suspects == frozenset()

    @pytest.mark.unit
    def test_four_certifiers_against_sybil_attack(self):
        merged = merge_views(cluster_views(), quorum=2)
        assert merged.trusted_core == set(U)
        assert merged.suspects == {M, *S}
        assert merged.n_views == 4

    @pytest.mark.unit
    def test_single_view(self):
        view = build_local_view(
            1, U[0], [consistent(U[1], 10), inconsistent(M, matched=True), inconsistent(S[0])]
        )
        merged = merge_views([view], quorum=1)
        assert merged.trusted_core == view.with_label(Label.CONSISTENT)
        assert merged.suspects == {M, S[0]}

    @pytest.mark.unit
    def test_any_inconsistent_vote_excludes(self):
        views = cluster_views()
        views.append(build_local_view(9, Did.for_node(9), [inconsistent(U[3])]))
        merged = merge_views(views, quorum=2)
        assert U[3] not in merged.trusted_core
        assert U[3] in merged.suspects

    @pytest.mark.unit
    def test_invalid_input(self):
        with pytest.raises(AuthError, match="no views"):
            merge_views([])
        with pytest.raises(AuthError, match="quorum"):
            merge_views(cluster_views(), quorum=0)

    @pytest.mark.unit
    def test_core_and_suspects_disjoint(self):
        with pytest.raises(AuthError):
            GlobalView(trusted_core=frozenset({M}), suspects=frozenset({M}), n_views=1)


class TestClassify:
    """Test verdicts."""

    @pytest.mark.unit
    def test_malicious_host_and_phantoms(self):
        merged = merge_views(cluster_views(), quorum=2)
        verdicts = verdict_map(classify(merged, {M, *U}))
        assert verdicts[M] == VerdictClass.MALICIOUS
        assert all(verdicts[s] == VerdictClass.SYBIL for s in S)
        assert all(verdicts[u] == VerdictClass.TRUSTED for u in U)

    @pytest.mark.unit
    def test_no_attacker(self):
        merged = GlobalView(trusted_core=frozenset(U), suspects=frozenset(), n_views=4, heard=frozenset(U))
        assert {v.verdict for v in classify(merged, U)} == {VerdictClass.TRUSTED}

    @pytest.mark.unit
    def test_unseen_identities_unknown(self):
        merged = GlobalView(
            trusted_core=frozenset(U[:2]), suspects=frozenset(), n_views=2, heard=frozenset([*U[:2], M])
        )
        assert verdict_map(classify(merged, []))[M] == VerdictClass.UNKNOWN

    @pytest.mark.unit
    def test_helpers(self):
        verdicts = [
            Verdict(M, VerdictClass.MALICIOUS),
            Verdict(S[0], VerdictClass.SYBIL),
            Verdict(U[0], VerdictClass.TRUSTED),
            Verdict(U[1], VerdictClass.UNKNOWN),
        ]
        assert positives(verdicts) == {M, S[0]}
        assert flagged_fraction(verdicts, [M, U[0]]) == 0.5
        assert flagged_fraction(verdicts, []) == 0.0
        assert VerdictClass.SYBIL.is_positive and not VerdictClass.UNKNOWN.is_positive


class TestCertifier:
    """Test a certifier's per-round judgments."""

    def _round(self, make_pid, time_s):
        return [
            make_pid(did=U[1], position=(50.0, 0.0, 0.0), time_s=time_s),
            make_pid(did=M, position=(0.0, 62.0, 0.0), time_s=time_s),
            make_pid(did=S[0], position=(30.0, 30.0, 0.0), time_s=time_s),
            make_pid(did=U[2], position=(400.0, 0.0, 0.0), time_s=time_s),
        ]

    def _judge(self, certifier, ad_pids, time_s=0.2):
        tracks = {
            10: still_track((50.0, 0.0, 0.0), 10),
            11: still_track((0.0, 50.0, 0.0), 11),
        }
        outcomes = [Matched(0, 0, 0.9), Matched(1, 1, 0.2), UnmatchedAd(2), UnmatchedAd(3)]
        return certifier.judge(ad_pids, outcomes, [10, 11], tracks, Vec3.zero(), time_s)

    @pytest.mark.unit
    def test_labels(self, make_pid):
        certifier = Certifier(node_id=1, did=U[0], sense_range_m=300.0, window=2)
        for t in (0.0, 0.2):
            certifier.observe_claims(self._round(make_pid, t))
        labels = {j.did: j.label for j in self._judge(certifier, self._round(make_pid, 0.2))}
        assert labels == {
            U[1]: Label.CONSISTENT,
            M: Label.INCONSISTENT,
            S[0]: Label.INCONSISTENT,
            U[2]: Label.UNKNOWN,
        }
        view = certifier.local_view(0.2, max_age_s=0.4)
        assert view.edges == {frozenset((U[0], U[1]))}
        assert view.matched == {U[1], M}

    def _judge_with_loose_track(self, certifier, ad_pids, time_s=0.2):
        tracks = {
            10: still_track((50.0, 0.0, 0.0), 10),
            11: still_track((0.0, 50.0, 0.0), 11),
        }
        outcomes = [Matched(0, 0, 0.9), UnmatchedVd(1), UnmatchedAd(1), UnmatchedAd(2), UnmatchedAd(3)]
        return certifier.judge(ad_pids, outcomes, [10, 11], tracks, Vec3.zero(), time_s)

    @pytest.mark.unit
    def test_unpaired_track_goes_to_nearest_inconsistent_claim(self, make_pid):
        certifier = Certifier(node_id=1, did=U[0], sense_range_m=300.0, window=2)
        for t in (0.0, 0.2):
            certifier.observe_claims(self._round(make_pid, t))
        judgments = {j.did: j for j in self._judge_with_loose_track(certifier, self._round(make_pid, 0.2))}
        assert judgments[M].label == Label.INCONSISTENT
        assert judgments[M].matched
        assert judgments[M].track_id == 11
        assert judgments[S[0]].label == Label.INCONSISTENT
        assert not judgments[S[0]].matched
        assert judgments[U[1]].track_id == 10
        view = certifier.local_view(0.2, max_age_s=0.4)
        assert view.matched == {U[1], M}

    @pytest.mark.unit
    def test_distant_claims_pick_up_no_track(self, make_pid):
        certifier = Certifier(node_id=1, did=U[0], sense_range_m=300.0, window=2, body_gate_m=10.0)
        for t in (0.0, 0.2):
            certifier.observe_claims(self._round(make_pid, t))
        judgments = self._judge_with_loose_track(certifier, self._round(make_pid, 0.2))
        assert [j.did for j in judgments if j.matched] == [U[1]]
        assert certifier.local_view(0.2, max_age_s=0.4).matched == {U[1]}

    @pytest.mark.unit
    def test_track_of_consistent_identity_stays_put(self, make_pid):
        certifier = Certifier(node_id=1, did=U[0], sense_range_m=300.0, window=2)
        for t in (0.0, 0.2):
            certifier.observe_claims(self._round(make_pid, t))
        self._judge(certifier, self._round(make_pid, 0.2))
        # U[1] is silent next round; its track stays explained by the standing judgment
        tracks = {10: still_track((50.0, 0.0, 0.0), 10)}
        outcomes = [UnmatchedVd(0), UnmatchedAd(0), UnmatchedAd(1), UnmatchedAd(2)]
        claims = [
            make_pid(did=M, position=(0.0, 62.0, 0.0), time_s=0.2),
            make_pid(did=S[0], position=(60.0, 0.0, 0.0), time_s=0.2),
            make_pid(did=U[2], position=(400.0, 0.0, 0.0), time_s=0.2),
        ]
        judgments = {j.did: j for j in certifier.judge(claims, outcomes, [10], tracks, Vec3.zero(), 0.2)}
        assert judgments[S[0]].label == Label.INCONSISTENT
        assert not judgments[S[0]].matched
        assert certifier.judgments[U[1]].track_id == 10

    @pytest.mark.unit
    def test_short_window_is_unknown(self, make_pid):
        certifier = Certifier(node_id=1, did=U[0], sense_range_m=300.0, window=2)
        certifier.observe_claims(self._round(make_pid, 0.2))
        judgments = self._judge(certifier, self._round(make_pid, 0.2))
        assert {j.label for j in judgments} == {Label.UNKNOWN}

    @pytest.mark.unit
    def test_out_of_range_claim_corroborated_by_witness(self, make_pid):
        certifier = Certifier(node_id=1, did=U[0], sense_range_m=300.0, window=2)
        for t in (0.0, 0.2):
            certifier.observe_claims(self._round(make_pid, t))
        self._judge(certifier, self._round(make_pid, 0.2))
        seen = make_pid(domain=Domain.VD, position=(400.5, 0.0, 0.0), sigma_position=0.5, time_s=0.2)
        certifier.observe_reports([WitnessReport(U[1], U[2], seen, 0.2)])
        labels = {j.did: j.label for j in self._judge(certifier, self._round(make_pid, 0.2))}
        assert labels[U[2]] == Label.CONSISTENT

    @pytest.mark.unit
    def test_untrusted_witness_ignored(self, make_pid):
        certifier = Certifier(node_id=1, did=U[0], sense_range_m=300.0, window=2)
        for t in (0.0, 0.2):
            certifier.observe_claims(self._round(make_pid, t))
        self._judge(certifier, self._round(make_pid, 0.2))
        seen = make_pid(domain=Domain.VD, position=(400.0, 0.0, 0.0), time_s=0.2)
        certifier.observe_reports([WitnessReport(M, U[2], seen, 0.2)])
        labels = {j.did: j.label for j in self._judge(certifier, self._round(make_pid, 0.2))}
        assert labels[U[2]] == Label.UNKNOWN

    @pytest.mark.unit
    def test_own_claims_and_reports_skipped(self, make_pid):
        certifier = Certifier(node_id=1, did=U[0], sense_range_m=300.0)
        certifier.observe_claims([make_pid(did=U[0])])
        certifier.observe_reports([WitnessReport(U[0], U[1], make_pid(domain=Domain.VD), 0.0)])
        assert certifier.claims == {}
        assert certifier.reports == {}

    @pytest.mark.unit
    def test_stale_judgments_leave_the_view(self, make_pid):
        certifier = Certifier(node_id=1, did=U[0], sense_range_m=300.0, window=2)
        for t in (0.0, 0.2):
            certifier.observe_claims(self._round(make_pid, t))
        self._judge(certifier, self._round(make_pid, 0.2))
        assert certifier.local_view(2.0, max_age_s=0.4).labels == {U[0]: Label.CONSISTENT}


def lockstep(offset, steps=10, velocity=(3.0, -2.0, 0.0)):
    return [
        (0.2 * k, Vec3(offset[0] + velocity[0] * 0.2 * k, offset[1] + velocity[1] * 0.2 * k, 100.0))
        for k in range(steps)
    ]


class TestMobilityBaseline:
    """Test the claims-only comparison detector."""

    @pytest.mark.unit
    def test_fixed_offset_phantoms_flagged(self):
        histories = {M: lockstep((60.0, 60.0))}
        histories.update({s: lockstep((60.0 + 30.0 * k, 60.0)) for k, s in enumerate(S, start=1)})
        verdicts = verdict_map(baseline_mobility_detect(histories))
        assert sum(v == VerdictClass.MALICIOUS for v in verdicts.values()) == 1
        assert sum(v == VerdictClass.SYBIL for v in verdicts.values()) == 3

    @pytest.mark.unit
    def test_crossing_legitimate_nodes_not_flagged(self):
        rng = np.random.default_rng(5)
        histories = {
            U[0]: [(0.2 * k, Vec3.from_array(np.array([0.0, 6.0 * 0.2 * k, 100.0]) + rng.normal(0, 2, 3))) for k in range(10)],
            U[1]: [(0.2 * k, Vec3.from_array(np.array([6.0 * 0.2 * k, 0.0, 100.0]) + rng.normal(0, 2, 3))) for k in range(10)],
        }
        verdicts = verdict_map(baseline_mobility_detect(histories, rho=0.99))
        assert set(verdicts.values()) == {VerdictClass.TRUSTED}

    @pytest.mark.unit
    def test_random_walk_phantoms_missed(self):
        rng = np.random.default_rng(6)
        histories = {M: lockstep((60.0, 60.0))}
        for k, s in enumerate(S):
            walk = np.cumsum(rng.normal(0.0, 1.0, (10, 3)), axis=0) + np.array([90.0 + 30 * k, 60.0, 100.0])
            histories[s] = [(0.2 * i, Vec3.from_array(walk[i])) for i in range(10)]
        verdicts = verdict_map(baseline_mobility_detect(histories))
        assert not any(v.is_positive for v in verdicts.values())

    @pytest.mark.unit
    def test_short_histories(self):
        with pytest.raises(AuthError, match="insufficient history"):
            baseline_mobility_detect({M: lockstep((0.0, 0.0), steps=2)})
        with pytest.raises(AuthError, match="insufficient history"):
            baseline_mobility_detect({M: lockstep((0.0, 0.0))}, window=2)

    @pytest.mark.unit
    def test_displacement_correlation(self):
        a = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [4.0, 1.0, 0.0]])
        assert displacement_correlation(a, a + 7.0) == pytest.approx(1.0)
        still = np.zeros((4, 3))
        assert displacement_correlation(still, still) == 1.0
        assert displacement_correlation(a, still) == 0.0
