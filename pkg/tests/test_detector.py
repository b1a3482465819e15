import numpy as np
import pytest

from cosinorcp.cosinor import NonIdentifiableError
from cosinorcp.detector import (
    SOT,
    WOT,
    ChangePointEvent,
    DetectionConfig,
    _refine_pass,
    ch_index,
    detect,
    flag_errors,
    states_from_events,
)
from cosinorcp.ingest import EpochSeries
from cosinorcp.synth import SynthSpec, generate


def nearest_truth(truth, index):
    return min(truth, key=lambda te: abs(te[0] - index))


class TestChIndex:
    def test_hand_value(self):
        assert ch_index([1, 3, 7, 9], [0, 0, 1, 1]) == pytest.approx(18.0, abs=1e-12)

    def test_no_between_variance_scores_zero(self):
        assert ch_index([5, 5, 5, 5], [0, 1, 0, 1]) == 0.0

    def test_perfect_separation_is_infinite(self):
        assert ch_index([0, 0, 10, 10], [0, 0, 1, 1]) == float("inf")

    def test_single_state_rejected(self):
        with pytest.raises(ValueError):
            ch_index([1, 2, 3], [1, 1, 1])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            ch_index([1, 2, 3], [0, 1])


class TestFlagErrors:
    def test_improvement_above_threshold_not_flagged(self):
        assert flag_errors(500.0, 350.0) is False

    def test_small_improvement_flagged(self):
        assert flag_errors(400.0, 350.0) is True

    def test_infinite_refined_never_flagged(self):
        assert flag_errors(float("inf"), 350.0) is False

    def test_custom_threshold(self):
        assert flag_errors(400.0, 350.0, threshold=40.0) is False


class TestStatesFromEvents:
    def test_reconstruction(self):
        events = (
            ChangePointEvent(3, None, SOT, "cp-pass1"),
            ChangePointEvent(7, None, WOT, "cp-pass1"),
        )
        np.testing.assert_array_equal(states_from_events(10, events), [1, 1, 1, 0, 0, 0, 0, 1, 1, 1])

    def test_leading_wot_starts_asleep(self):
        events = (ChangePointEvent(2, None, WOT, "cp-pass1"),)
        np.testing.assert_array_equal(states_from_events(4, events), [0, 0, 1, 1])


class TestRefinePass:
    def test_short_first_segment_keeps_rough_boundary(self):
        # prefix up to the second boundary has only 200 samples: no search
        rng = np.random.default_rng(0)
        y = rng.gamma(1.0, 5.0, 1000) + 0.1
        notes = []
        cps, prov, _curves = _refine_pass(
            y, [100, 200, 600], ["cosinor-boundary"] * 3, "cp-pass1", DetectionConfig(), notes
        )
        assert cps[0] == 100
        assert prov[0] == "cosinor-boundary"
        assert any("edge guard" in n for n in notes)
        assert prov[1] == prov[2] == "cp-pass1"
        assert cps[0] < cps[1] < cps[2]

    def test_short_interior_segment_keeps_rough_boundary(self):
        rng = np.random.default_rng(1)
        y = rng.gamma(1.0, 5.0, 2000) + 0.1
        notes = []
        # first boundary is kept (prefix guard), so the first interior segment
        # [230, 245) is too short for a Gamma fit and 235 is kept as-is
        cps, prov, _curves = _refine_pass(
            y, [230, 235, 245, 1500], ["cosinor-boundary"] * 4, "cp-pass1", DetectionConfig(), notes
        )
        assert cps[0] == 230 and cps[1] == 235
        assert prov[1] == "cosinor-boundary"
        assert any("too short" in n for n in notes)

    def test_all_change_points_strictly_inside_their_segments(self):
        rng = np.random.default_rng(2)
        y = np.concatenate(
            [rng.gamma(0.8, s, 400) for s in (200.0, 10.0, 200.0, 10.0, 200.0)]
        ) + 0.1
        seeds = [400, 800, 1200, 1600]
        cps, _prov, _curves = _refine_pass(
            y, seeds, ["cosinor-boundary"] * 4, "cp-pass1", DetectionConfig(), []
        )
        assert 0 < cps[0] < seeds[1]
        for i in range(1, 3):
            assert cps[i - 1] < cps[i] < seeds[i + 1]
        assert cps[2] < cps[3] < y.size


@pytest.fixture(scope="module")
def clean():
    series, truth = generate(SynthSpec(days=7, seed=5))
    return series, truth, detect(series)


class TestDetect:
    def test_seven_cycles_detected(self, clean):
        _series, truth, result = clean
        assert len(result.events) == 14
        assert sum(e.label == SOT for e in result.events) == 7
        assert sum(e.label == WOT for e in result.events) == 7
        errors = [abs(nearest_truth(truth.true_events, e.index)[0] - e.index) for e in result.events]
        assert float(np.median(errors)) <= 10.0

    def test_labels_alternate_and_indices_increase(self, clean):
        _series, _truth, result = clean
        labels = [e.label for e in result.events]
        assert all(a != b for a, b in zip(labels, labels[1:]))
        indices = [e.index for e in result.events]
        assert all(a < b for a, b in zip(indices, indices[1:]))

    def test_states_cover_whole_period(self, clean):
        series, _truth, result = clean
        states = states_from_events(len(series), result.events)
        assert states.size == len(series)
        assert set(np.unique(states)) == {0, 1}

    def test_refinement_improves_ch(self, clean):
        _series, _truth, result = clean
        assert result.ch_refined > result.ch_cosinor
        assert result.error_flag is False

    def test_wall_times_match_indices(self, clean):
        series, _truth, result = clean
        for e in result.events:
            assert e.wall_time == series.time_at(e.index)

    def test_deterministic(self, clean):
        series, _truth, result = clean
        again = detect(series)
        assert again.events == result.events
        assert again.ch_cosinor == result.ch_cosinor
        assert again.ch_refined == result.ch_refined
        assert again.notes == result.notes

    def test_config_echoed(self, clean):
        _series, _truth, result = clean
        assert result.config == DetectionConfig()

    def test_pass1_anchored_to_segments(self):
        series, _truth = generate(SynthSpec(days=7, seed=8))
        result = detect(series, DetectionConfig(refinement_passes=1))
        rough = result.cycles.boundaries.tolist()
        cps = [e.index for e in result.events]
        assert 0 < cps[0] < rough[1]
        for i in range(1, len(cps) - 1):
            assert cps[i - 1] < cps[i] < rough[i + 1]
        assert cps[-2] < cps[-1] < len(series)

    def test_pass2_bounded_by_pass1_segments(self):
        series, _truth = generate(SynthSpec(days=7, seed=9))
        one = detect(series, DetectionConfig(refinement_passes=1))
        two = detect(series, DetectionConfig(refinement_passes=2))
        cp1 = [e.index for e in one.events]
        rough = one.cycles.boundaries.tolist()
        for i, (a, b) in enumerate(zip(cp1, (e.index for e in two.events))):
            left = cp1[i - 1] if i > 0 else 0
            right = rough[i + 1] if i + 1 < len(rough) else len(series)
            assert abs(b - a) <= right - left

    def test_second_pass_does_not_worsen_median_error(self):
        deltas = []
        for seed in range(20):
            series, truth = generate(SynthSpec(days=7, seed=seed))
            e1 = detect(series, DetectionConfig(refinement_passes=1)).events
            e2 = detect(series, DetectionConfig(refinement_passes=2)).events
            med1 = np.median([abs(nearest_truth(truth.true_events, e.index)[0] - e.index) for e in e1])
            med2 = np.median([abs(nearest_truth(truth.true_events, e.index)[0] - e.index) for e in e2])
            deltas.append(med2 - med1)
        assert float(np.median(deltas)) <= 0.0

    def test_refined_ch_beats_cosinor_across_seeds(self):
        wins = 0
        for seed in range(10):
            series, _truth = generate(SynthSpec(days=7, seed=100 + seed))
            r = detect(series)
            wins += r.ch_refined >= r.ch_cosinor
        assert wins == 10

    def test_edge_guard_config_keeps_rough_edges(self):
        series, _truth = generate(SynthSpec(days=7, seed=5))
        result = detect(series, DetectionConfig(edge_guard_minutes=10**6))
        rough = result.cycles.boundaries
        assert result.events[0].index == rough[0]
        assert result.events[0].provenance == "cosinor-boundary"
        assert result.events[-1].index == rough[-1]
        assert result.events[-1].provenance == "cosinor-boundary"
        assert all(e.provenance == "cp-pass2" for e in result.events[1:-1])

    def test_corrupted_events_get_flagged(self):
        series, _truth = generate(SynthSpec(days=7, seed=5))
        result = detect(series)
        rng = np.random.default_rng(0)
        fake = np.sort(rng.choice(np.arange(1, len(series)), size=len(result.events), replace=False))
        shuffled = tuple(
            ChangePointEvent(int(i), series.time_at(int(i)), e.label, e.provenance)
            for i, e in zip(fake, result.events)
        )
        y = series.counts + result.config.positivity_offset
        ch_bad = ch_index(y, states_from_events(len(series), shuffled))
        assert flag_errors(ch_bad, result.ch_cosinor) is True

    def test_rejects_30s_series(self):
        series, _truth = generate(SynthSpec(days=4, seed=0))
        bad = EpochSeries(series.start_time, 30, series.counts, series.markers)
        with pytest.raises(ValueError):
            detect(bad)

    def test_flat_series_non_identifiable(self):
        flat = EpochSeries(SynthSpec().start_time, 60, np.full(5760, 4.0))
        with pytest.raises(NonIdentifiableError):
            detect(flat)
