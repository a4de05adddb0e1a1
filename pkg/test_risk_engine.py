"""
Tests for the per-event risk score and its aggregation over sources.
"""

import math
import unittest

from hypothesis import assume, given, settings, strategies as st
from pydantic import ValidationError

from exposure_risk.errors import DataError, ParameterError
from exposure_risk.risk.engine import (
    MINUTES_PER_DAY,
    ContactEvent,
    RecipientLedger,
    RiskParams,
    SourceReport,
    distance_factor,
    event_risk,
    in_window,
    infectiousness_factor,
    pair_risk,
    recipients_of,
    risk_surface,
    rssi_to_distance,
    total_risk,
)

ONSET = 18_000 * MINUTES_PER_DAY + 720
PARAMS = RiskParams()


def make_event(source="s1", recipient="r1", offset_days=0.0, duration=15.0, distance=2.0, **kwargs):
    return ContactEvent(
        source_id=source,
        recipient_id=recipient,
        start_time=ONSET + round(offset_days * MINUTES_PER_DAY),
        duration=duration,
        distance=distance,
        **kwargs,
    )


def make_report(events, source="s1", onset=ONSET, report_time=None, **kwargs):
    latest = max((e.start_time for e in events), default=onset)
    return SourceReport(
        source_id=source,
        symptom_onset_time=onset,
        report_time=report_time if report_time is not None else max(latest, onset) + 60,
        events=tuple(events),
        **kwargs,
    )


class TestFactors(unittest.TestCase):
    """Distance, RSSI and infectiousness factors."""

    def test_distance_factor(self):
        self.assertEqual(distance_factor(0.5, PARAMS), 1.0)
        self.assertEqual(distance_factor(1.0, PARAMS), 1.0)
        self.assertAlmostEqual(distance_factor(2.0, PARAMS), 0.25)
        self.assertAlmostEqual(distance_factor(4.0, PARAMS), 0.0625)

    def test_distance_factor_rejects_non_positive(self):
        with self.assertRaises(ParameterError):
            distance_factor(0.0, PARAMS)
        with self.assertRaises(ParameterError):
            distance_factor(-1.0, PARAMS)

    def test_rssi_at_reference_gives_reference_distance(self):
        self.assertAlmostEqual(rssi_to_distance(-60.0, PARAMS), 1.0)

    def test_rssi_twenty_db_weaker_is_ten_times_further(self):
        self.assertAlmostEqual(rssi_to_distance(-80.0, PARAMS), 10.0)

    def test_infectiousness_peak_and_one_sigma(self):
        peak = ONSET + round(PARAMS.mu0 * MINUTES_PER_DAY)
        self.assertAlmostEqual(infectiousness_factor(peak, ONSET, PARAMS), 1.0)
        one_sigma = (PARAMS.mu0 + PARAMS.sigma0) * MINUTES_PER_DAY
        self.assertAlmostEqual(infectiousness_factor(ONSET + one_sigma, ONSET, PARAMS), math.exp(-0.5))

    def test_infectiousness_three_days_after_onset(self):
        value = infectiousness_factor(ONSET + 3 * MINUTES_PER_DAY, ONSET, PARAMS)
        self.assertAlmostEqual(value, math.exp(-0.72), places=10)
        self.assertAlmostEqual(value, 0.48675, places=5)


class TestEventRisk(unittest.TestCase):
    """Risk of a single contact event."""

    def test_calibration_point_reproduces_r_min(self):
        event = make_event(offset_days=3.0, duration=15.0, distance=2.0)
        risk = event_risk(event, make_report([event]), PARAMS)
        self.assertAlmostEqual(risk, 1.8253, places=4)
        self.assertLessEqual(abs(risk - 1.83), 0.005)

    def test_all_factors_maximal(self):
        event = ContactEvent(source_id="s1", recipient_id="r1",
                             start_time=ONSET + round(PARAMS.mu0 * MINUTES_PER_DAY),
                             duration=1.0, distance=1.0)
        self.assertAlmostEqual(event_risk(event, make_report([event]), PARAMS), 1.0)

    def test_explicit_distance_wins_over_rssi(self):
        with_both = make_event(distance=2.0, rssi=-60.0)
        only_distance = make_event(distance=2.0)
        report = make_report([with_both])
        self.assertEqual(event_risk(with_both, report, PARAMS),
                         event_risk(only_distance, make_report([only_distance]), PARAMS))

    def test_rssi_only_event(self):
        event = ContactEvent(source_id="s1", recipient_id="r1", start_time=ONSET,
                             duration=10.0, rssi=-66.0206)
        # -66.02 dBm is ~2 m under the default path-loss model
        expected = 0.25 * infectiousness_factor(ONSET, ONSET, PARAMS) * 10.0
        self.assertAlmostEqual(event_risk(event, make_report([event]), PARAMS), expected, places=4)

    def test_context_factor_and_source_weight_scale_linearly(self):
        base = make_event()
        scaled = make_event(context_factor=0.5)
        base_risk = event_risk(base, make_report([base]), PARAMS)
        self.assertAlmostEqual(event_risk(scaled, make_report([scaled]), PARAMS), 0.5 * base_risk)
        self.assertAlmostEqual(event_risk(base, make_report([base], source_weight=2.0), PARAMS),
                               2.0 * base_risk)

    @settings(max_examples=1000, deadline=None)
    @given(
        d1=st.floats(min_value=0.05, max_value=50.0),
        d2=st.floats(min_value=0.05, max_value=50.0),
        duration=st.floats(min_value=0.1, max_value=600.0),
        offset=st.floats(min_value=-6.9, max_value=10.0),
    )
    def test_risk_non_increasing_in_distance(self, d1, d2, duration, offset):
        near, far = sorted((d1, d2))
        a = make_event(distance=near, duration=duration, offset_days=offset)
        b = make_event(distance=far, duration=duration, offset_days=offset)
        report = make_report([a])
        self.assertGreaterEqual(event_risk(a, report, PARAMS), event_risk(b, make_report([b]), PARAMS))

    @settings(max_examples=1000, deadline=None)
    @given(
        t1=st.floats(min_value=0.1, max_value=600.0),
        t2=st.floats(min_value=0.1, max_value=600.0),
        offset=st.floats(min_value=-6.9, max_value=10.0),
    )
    def test_risk_strictly_increasing_in_duration(self, t1, t2, offset):
        short, long = sorted((t1, t2))
        a = make_event(duration=short, offset_days=offset)
        b = make_event(duration=long, offset_days=offset)
        ra = event_risk(a, make_report([a]), PARAMS)
        rb = event_risk(b, make_report([b]), PARAMS)
        self.assertLessEqual(ra, rb)
        if long > short * (1 + 1e-9):
            self.assertLess(ra, rb)

    @settings(max_examples=1000, deadline=None)
    @given(offset_minutes=st.integers(min_value=-10_000, max_value=20_000))
    def test_infectiousness_maximised_at_mu0(self, offset_minutes):
        peak = infectiousness_factor(ONSET + PARAMS.mu0 * MINUTES_PER_DAY, ONSET, PARAMS)
        value = infectiousness_factor(ONSET + offset_minutes, ONSET, PARAMS)
        self.assertLessEqual(value, peak)
        self.assertGreater(value, 0.0)


class TestValidation(unittest.TestCase):
    """Model-level validation of events and reports."""

    def test_event_needs_distance_or_rssi(self):
        with self.assertRaises(ValidationError):
            ContactEvent(source_id="s1", recipient_id="r1", start_time=ONSET, duration=5.0)

    def test_event_rejects_non_positive_duration(self):
        with self.assertRaises(ValidationError):
            make_event(duration=0.0)

    def test_onset_must_be_marked_to_noon(self):
        with self.assertRaises(ValidationError):
            make_report([], onset=ONSET + 1)

    def test_event_after_report_time_rejected(self):
        event = make_event(offset_days=1.0)
        with self.assertRaises(ValidationError):
            make_report([event], report_time=ONSET)

    def test_event_source_must_match_report(self):
        event = make_event(source="other")
        with self.assertRaises(ValidationError):
            make_report([event], source="s1")

    def test_params_reject_non_positive_sigma(self):
        with self.assertRaises(ValidationError):
            RiskParams(sigma0=0.0)


class TestWindow(unittest.TestCase):
    """Storage window and post-onset filtering."""

    def test_event_at_window_boundary_is_excluded(self):
        boundary = ContactEvent(source_id="s1", recipient_id="r1",
                                start_time=ONSET - int(PARAMS.delta_t_max),
                                duration=15.0, distance=1.0)
        self.assertEqual(pair_risk(make_report([boundary]), "r1", PARAMS), 0.0)

    def test_event_one_minute_inside_window_counts(self):
        inside = ContactEvent(source_id="s1", recipient_id="r1",
                              start_time=ONSET - int(PARAMS.delta_t_max) + 1,
                              duration=15.0, distance=1.0)
        self.assertGreater(pair_risk(make_report([inside]), "r1", PARAMS), 0.0)

    def test_post_onset_events_can_be_excluded(self):
        after = make_event(offset_days=1.0)
        before = make_event(offset_days=-1.0)
        report = make_report([after, before])
        strict = RiskParams(include_post_onset_events=False)
        self.assertAlmostEqual(pair_risk(report, "r1", strict),
                               event_risk(before, report, strict))
        self.assertAlmostEqual(pair_risk(report, "r1", PARAMS),
                               event_risk(before, report, PARAMS) + event_risk(after, report, PARAMS))

    @settings(max_examples=1000, deadline=None)
    @given(
        start=st.one_of(
            st.integers(min_value=ONSET - int(PARAMS.delta_t_max) - 30,
                        max_value=ONSET - int(PARAMS.delta_t_max) + 30),
            st.integers(min_value=ONSET - int(PARAMS.delta_t_max) - 3 * MINUTES_PER_DAY,
                        max_value=ONSET + 3 * MINUTES_PER_DAY),
        ),
        include_post_onset=st.booleans(),
    )
    def test_event_counts_iff_strictly_inside_window(self, start, include_post_onset):
        params = RiskParams(include_post_onset_events=include_post_onset)
        event = ContactEvent(source_id="s1", recipient_id="r1", start_time=start,
                             duration=15.0, distance=1.0)
        expected = start > ONSET - params.delta_t_max and (include_post_onset or start <= ONSET)
        self.assertEqual(in_window(event, make_report([event]), params), expected)
        self.assertEqual(pair_risk(make_report([event]), "r1", params) > 0.0, expected)


class TestAggregation(unittest.TestCase):
    """Pair and total risk."""

    def test_pair_risk_only_counts_recipient_events(self):
        mine = make_event(recipient="r1")
        theirs = make_event(recipient="r2", distance=1.0)
        report = make_report([mine, theirs])
        self.assertAlmostEqual(pair_risk(report, "r1", PARAMS), event_risk(mine, report, PARAMS))
        self.assertEqual(recipients_of(report), ["r1", "r2"])

    def test_total_risk_sums_sources(self):
        a = make_report([make_event(source="a", distance=1.0)], source="a")
        b = make_report([make_event(source="b", distance=2.0)], source="b")
        ledger = total_risk([a, b], "r1", PARAMS)
        self.assertEqual(sorted(ledger.per_source), ["a", "b"])
        self.assertAlmostEqual(ledger.total, pair_risk(a, "r1", PARAMS) + pair_risk(b, "r1", PARAMS))

    def test_total_risk_for_unknown_recipient_is_zero(self):
        ledger = total_risk([make_report([make_event()])], "nobody", PARAMS)
        self.assertEqual(ledger.total, 0.0)
        self.assertEqual(ledger.per_source, {})

    def test_duplicate_source_rejected(self):
        report = make_report([make_event()])
        with self.assertRaises(DataError):
            total_risk([report, report], "r1", PARAMS)

    def test_ledger_round_trips_through_dict(self):
        reports = [make_report([make_event(source=s, offset_days=i)], source=s)
                   for i, s in enumerate(["a", "b", "c"])]
        ledger = total_risk(reports, "r1", PARAMS)
        self.assertEqual(RecipientLedger.from_dict(ledger.to_dict()), ledger)

    @settings(max_examples=200, deadline=None)
    @given(st.permutations(list(range(6))))
    def test_total_is_independent_of_report_order(self, order):
        reports = [
            make_report([make_event(source=f"s{i}", offset_days=i - 2.5, distance=0.5 + i,
                                    duration=3.0 + 7 * i)], source=f"s{i}")
            for i in range(6)
        ]
        baseline = total_risk(reports, "r1", PARAMS).total
        shuffled = total_risk([reports[i] for i in order], "r1", PARAMS).total
        self.assertEqual(baseline, shuffled)

    @settings(max_examples=1000, deadline=None)
    @given(
        durations=st.lists(st.floats(min_value=0.5, max_value=60.0), min_size=1, max_size=6),
        dropped=st.integers(min_value=0, max_value=5),
    )
    def test_removing_a_source_subtracts_its_entry(self, durations, dropped):
        reports = [
            make_report([make_event(source=f"s{i}", offset_days=i - 3, duration=d)], source=f"s{i}")
            for i, d in enumerate(durations)
        ]
        ledger = total_risk(reports, "r1", PARAMS)
        source_id = f"s{dropped % len(durations)}"
        remaining = ledger.without_source(source_id)
        self.assertNotIn(source_id, remaining.per_source)
        self.assertAlmostEqual(remaining.total, ledger.total - ledger.source_risk(source_id),
                               delta=1e-12 * max(1.0, ledger.total))
        self.assertEqual(remaining.total, total_risk(
            [r for r in reports if r.source_id != source_id], "r1", PARAMS).total)

    @settings(max_examples=1000, deadline=None)
    @given(
        distances=st.lists(st.floats(min_value=0.5, max_value=5.0), min_size=2, max_size=5),
        k=st.floats(min_value=0.1, max_value=10.0),
    )
    def test_scaling_context_factors_keeps_recipient_ordering(self, distances, k):
        def ledgers(factor):
            events = [make_event(recipient=f"r{i}", distance=d, context_factor=factor)
                      for i, d in enumerate(distances)]
            report = make_report(events)
            return [total_risk([report], f"r{i}", PARAMS).total for i in range(len(distances))]

        base = ledgers(1.0)
        scaled = ledgers(k)
        for b, s in zip(base, scaled):
            self.assertAlmostEqual(s, k * b, delta=1e-12 * max(1.0, k * b))
        top = sorted(base, reverse=True)
        assume(top[0] - top[1] > 1e-9 * top[0])
        self.assertEqual(max(range(len(base)), key=base.__getitem__),
                         max(range(len(scaled)), key=scaled.__getitem__))


class TestRiskSurface(unittest.TestCase):
    """Vectorised risk grids."""

    def test_calibration_point(self):
        frame = risk_surface([2.0], [3.0], [15.0], PARAMS)
        self.assertEqual(len(frame), 1)
        self.assertAlmostEqual(frame["risk_score"].iloc[0], 1.8253, places=4)

    def test_all_factors_maximal(self):
        frame = risk_surface([PARAMS.d_min], [PARAMS.mu0], [1.0], PARAMS)
        self.assertAlmostEqual(frame["risk_score"].iloc[0], 1.0)

    def test_cross_product_and_columns(self):
        frame = risk_surface([0.5, 1.0, 2.0], [-2.0, 0.0, 2.0, 4.0], [5.0, 15.0], PARAMS)
        self.assertEqual(list(frame.columns),
                         ["distance", "time_from_onset_days", "duration_min", "risk_score"])
        self.assertEqual(len(frame), 3 * 4 * 2)

    def test_unit_distance_factorises(self):
        frame = risk_surface([1.0], [-3.0, -0.3, 2.0], [1.0, 10.0], PARAMS)
        for row in frame.itertuples():
            expected = math.exp(-0.5 * ((row.time_from_onset_days - PARAMS.mu0) / PARAMS.sigma0) ** 2)
            self.assertAlmostEqual(row.risk_score, expected * row.duration_min)

    def test_matches_event_risk(self):
        frame = risk_surface([1.5], [1.0], [20.0], PARAMS)
        event = make_event(offset_days=1.0, duration=20.0, distance=1.5)
        self.assertAlmostEqual(frame["risk_score"].iloc[0], event_risk(event, make_report([event]), PARAMS))

    def test_invalid_grids(self):
        with self.assertRaises(ParameterError):
            risk_surface([], [0.0], [1.0], PARAMS)
        with self.assertRaises(ParameterError):
            risk_surface([0.0], [0.0], [1.0], PARAMS)
        with self.assertRaises(ParameterError):
            risk_surface([1.0], [0.0], [-1.0], PARAMS)


if __name__ == "__main__":
    unittest.main()
