import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idclean import EmbeddingMatrix, SampleRecord, build_manifest
from idclean.outliers import (
    DEFAULT_IDENTITY_FRACTION,
    OutlierError,
    REFERENCE_PAIR_THRESHOLD,
    attach_queues,
    build_report,
    build_review_queue,
    compute_pair_threshold,
    flag_pairs,
    load_report,
    threshold_identities,
    write_report,
)
from idclean.scoring import IdentityScore, PairScore, score_all

from conftest import random_manifest_rows


def make_scores(values):
    out = []
    for k, v in enumerate(values):
        ident = f"id{k:04d}"
        out.append(IdentityScore(ident, v, PairScore("a", "b", v), 3, 3))
    return out


class TestThresholdIdentities:
    def test_celeba_scale_count(self):
        scores = make_scores(np.linspace(0.1, 5.0, 10_177))
        flagged = threshold_identities(scores, 0.03)
        assert len(flagged) == 306  # ceil(0.03 * 10,177)

    def test_fraction_one_returns_all_scorable(self):
        scores = make_scores([1.0, 2.0, 3.0]) + [IdentityScore("solo", None, None, 1, 0)]
        assert len(threshold_identities(scores, 1.0)) == 3

    def test_direct_enumeration(self):
        scores = make_scores([5.0, 4.0, 3.0, 2.0, 1.0])
        assert threshold_identities(scores, 0.4) == ["id0000", "id0001"]

    def test_fraction_out_of_range(self):
        scores = make_scores([1.0])
        for bad in (0.0, -0.1, 1.1):
            with pytest.raises(OutlierError):
                threshold_identities(scores, bad)

    def test_tie_break_by_identity(self):
        scores = make_scores([2.0, 2.0, 2.0, 1.0])
        assert threshold_identities(scores, 0.5) == ["id0000", "id0001"]

    def test_decimal_intent_beats_float_noise(self):
        # 0.07 * 100 is 7.000000000000001 in binary; the count must stay 7
        scores = make_scores(np.arange(100, dtype=float) + 1)
        assert len(threshold_identities(scores, 0.07)) == 7

    def test_default_fraction_constant(self):
        assert DEFAULT_IDENTITY_FRACTION == 0.03


class TestPairThreshold:
    def test_all_equal(self):
        assert compute_pair_threshold(make_scores([0.75] * 9)) == 0.75

    def test_two_point_mean(self):
        assert compute_pair_threshold(make_scores([0.5, 1.5])) == 1.0

    def test_reference_constant(self):
        # the documented reference run lands the mean at 1
        assert REFERENCE_PAIR_THRESHOLD == 1.0

    def test_excludes_unscorable(self):
        scores = make_scores([2.0, 4.0]) + [IdentityScore("solo", None, None, 1, 0)]
        assert compute_pair_threshold(scores) == 3.0

    def test_no_scorable_raises(self):
        with pytest.raises(OutlierError):
            compute_pair_threshold([IdentityScore("solo", None, None, 1, 0)])

    def test_order_independent(self):
        values = list(np.random.default_rng(0).standard_normal(101) ** 2)
        a = compute_pair_threshold(make_scores(values))
        b = compute_pair_threshold(list(reversed(make_scores(values))))
        assert a == b

    def test_excluding_identities(self):
        scores = make_scores([2.0, 4.0, 90.0])
        assert compute_pair_threshold(scores, excluding=["id0002"]) == 3.0


def planted_identity():
    """4 samples placed so exactly the two pairs (x,y), (x,z) cross threshold 8."""
    records = [
        SampleRecord("x", "idA", "a/x.jpg", 0),
        SampleRecord("y", "idA", "a/y.jpg", 1),
        SampleRecord("z", "idA", "a/z.jpg", 2),
        SampleRecord("w", "idA", "a/w.jpg", 3),
    ]
    values = np.array(
        [[0.0, 0.0], [10.0, 0.0], [10.0, 1.0], [6.0, 0.0]], dtype=np.float32
    )
    return records, EmbeddingMatrix.from_array(values)


class TestFlagPairs:
    def test_nothing_over_threshold(self):
        records, emb = planted_identity()
        pairs, freq = flag_pairs(records, emb, 1e6)
        assert pairs == [] and freq == {}

    def test_shared_sample_frequencies(self):
        records, emb = planted_identity()
        pairs, freq = flag_pairs(records, emb, 8.0)
        assert {(p.a, p.b) for p in pairs} == {("x", "y"), ("x", "z")}
        assert freq == {"x": 2, "y": 1, "z": 1}

    def test_strictly_greater_than(self):
        records, emb = planted_identity()
        pairs, _ = flag_pairs(records, emb, 10.0)  # d(x,y) == 10 exactly: not flagged
        assert {(p.a, p.b) for p in pairs} == {("x", "z")}

    def test_pairs_sorted_by_distance_desc(self):
        records, emb = planted_identity()
        pairs, _ = flag_pairs(records, emb, 3.0)
        dists = [p.distance for p in pairs]
        assert dists == sorted(dists, reverse=True)

    def test_frequency_sum_is_twice_pair_count(self):
        rng = np.random.default_rng(1)
        m, e = random_manifest_rows(rng, 1, 10, 10, 8)
        samples = m.samples_of(next(m.identities()))
        pairs, freq = flag_pairs(samples, e, 2.0)
        assert sum(freq.values()) == 2 * len(pairs)


class TestReviewQueue:
    def test_single_pair_tie_breaks_by_id(self):
        pairs = [PairScore("x", "y", 3.0)]
        assert build_review_queue(pairs, {"x": 1, "y": 1}) == ["x"]

    def test_star_shape(self):
        pairs = [PairScore("x", "y1", 3.0), PairScore("x", "y2", 3.0), PairScore("x", "y3", 3.0)]
        freq = {"x": 3, "y1": 1, "y2": 1, "y3": 1}
        assert build_review_queue(pairs, freq) == ["x"]

    def test_two_disjoint_pairs(self):
        pairs = [PairScore("a", "b", 3.0), PairScore("c", "d", 3.0)]
        freq = {"a": 1, "b": 1, "c": 1, "d": 1}
        # c and d are never examined: the budget hits zero after a and b
        assert build_review_queue(pairs, freq) == ["a", "b"]

    def test_empty(self):
        assert build_review_queue([], {}) == []

    @given(
        st.lists(
            st.tuples(st.integers(0, 14), st.integers(0, 14)).filter(lambda t: t[0] != t[1]),
            min_size=0,
            max_size=40,
        )
    )
    @settings(max_examples=200, deadline=None)
    def test_minimal_prefix_property(self, raw_pairs):
        seen = set()
        pairs = []
        for u, v in raw_pairs:
            a, b = sorted((f"s{u:02d}", f"s{v:02d}"))
            if (a, b) not in seen:
                seen.add((a, b))
                pairs.append(PairScore(a, b, 1.0))
        freq = {}
        for p in pairs:
            freq[p.a] = freq.get(p.a, 0) + 1
            freq[p.b] = freq.get(p.b, 0) + 1
        queue = build_review_queue(pairs, freq)
        budget = len(pairs)
        covered = sum(freq[s] for s in queue)
        assert covered >= budget
        if queue:
            assert covered - freq[queue[-1]] < budget
        else:
            assert budget == 0
        assert set(queue) <= set(freq)


class TestBuildReport:
    def test_planted_fixture_flags_contaminated(self, planted):
        manifest, embeddings, truth = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, fraction=0.03)
        assert set(report.flagged_identities) == set(truth.contaminated)
        assert report.flag_count == 3
        assert report.scorable_count == 100

    def test_zero_flagged_pairs_means_empty_queues(self, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, fraction=0.03,
                              pair_threshold=1e9)
        assert all(e.review_queue == [] for e in report.entries)
        assert all(e.flagged_pairs == [] for e in report.entries)

    def test_flag_count_override(self, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, flag_count=7)
        assert report.flag_count == 7
        assert report.flag_count_source == "override"

    def test_threshold_excluding_flagged_is_lower(self, planted):
        # contaminated identities hold the largest id scores, so dropping
        # them from the mean must pull the threshold down
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        base = build_report(scores, manifest, embeddings, fraction=0.03)
        sensitivity = build_report(scores, manifest, embeddings, fraction=0.03,
                                   exclude_flagged_from_threshold=True)
        assert sensitivity.pair_threshold < base.pair_threshold
        assert sensitivity.threshold_source == "mean-excluding-flagged"
        assert sensitivity.flagged_identities == base.flagged_identities

    def test_worst_pair_flagged_when_over_threshold(self, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, fraction=0.03)
        by_id = {s.identity_id: s for s in scores}
        for e in report.entries:
            worst = by_id[e.identity_id].worst_pair
            if e.id_score > report.pair_threshold:
                assert (worst.a, worst.b) in {(p.a, p.b) for p in e.flagged_pairs}

    def test_monotone_in_pair_threshold(self, planted):
        # raising the threshold never grows the pair set or any frequency
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        low = build_report(scores, manifest, embeddings, fraction=0.03, pair_threshold=5.0)
        high = build_report(scores, manifest, embeddings, fraction=0.03, pair_threshold=9.0)
        for lo_e, hi_e in zip(low.entries, high.entries):
            assert len(hi_e.flagged_pairs) <= len(lo_e.flagged_pairs)
            for sample, f in hi_e.image_frequency.items():
                assert f <= lo_e.image_frequency.get(sample, 0)

    def test_scaling_embeddings_preserves_flagged_set(self, planted):
        manifest, embeddings, _ = planted
        for scale in (0.5, 2.0, 4.0):  # powers of two keep the scaling exact
            scaled = EmbeddingMatrix.from_array(embeddings.values * np.float32(scale))
            s1 = score_all(manifest, embeddings)
            s2 = score_all(manifest, scaled)
            r1 = build_report(s1, manifest, embeddings, fraction=0.03)
            r2 = build_report(s2, manifest, scaled, fraction=0.03)
            assert r1.flagged_identities == r2.flagged_identities

    def test_queue_subset_and_frequency_invariants(self, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, fraction=0.05)
        for e in report.entries:
            in_pairs = {p.a for p in e.flagged_pairs} | {p.b for p in e.flagged_pairs}
            assert set(e.review_queue) <= in_pairs
            assert sum(e.image_frequency.values()) == 2 * len(e.flagged_pairs)
            assert all(e.image_frequency[s] >= 1 for s in e.review_queue)
            assert all(p.distance > report.pair_threshold for p in e.flagged_pairs)


class TestReportSerialization:
    def test_round_trip(self, tmp_path, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, fraction=0.03,
                              provenance={"tool": "idclean test"})
        p = tmp_path / "report.jsonl"
        write_report(report, p)
        loaded = load_report(p)
        assert loaded.pair_threshold == report.pair_threshold
        assert loaded.flagged_identities == report.flagged_identities
        assert loaded.entries[0].flagged_pairs == report.entries[0].flagged_pairs
        assert loaded.entries[0].image_frequency == report.entries[0].image_frequency
        assert loaded.entries[0].review_queue == report.entries[0].review_queue

    def test_byte_determinism(self, tmp_path, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, fraction=0.03)
        p1, p2 = tmp_path / "r1.jsonl", tmp_path / "r2.jsonl"
        write_report(report, p1)
        write_report(
            build_report(scores, manifest, embeddings, fraction=0.03), p2
        )
        assert p1.read_bytes() == p2.read_bytes()

    def test_flags_then_queue_equals_direct(self, tmp_path, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        flags = build_report(scores, manifest, embeddings, fraction=0.03,
                             include_queues=False)
        p = tmp_path / "flags.jsonl"
        write_report(flags, p)
        queued = attach_queues(load_report(p))
        direct = build_report(scores, manifest, embeddings, fraction=0.03)
        assert [e.review_queue for e in queued.entries] == [
            e.review_queue for e in direct.entries
        ]
