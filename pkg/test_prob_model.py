"""
Tests for the probabilistic reading of the risk score, checked against
closed forms and a Monte Carlo simulation of infection and symptom onset.
"""

import math
import unittest
from functools import lru_cache

import numpy as np
from hypothesis import given, settings, strategies as st

from exposure_risk.alerts.notifier import should_notify
from exposure_risk.epi.distributions import EpiDistributions, build_sum_cdf, eval_cdf
from exposure_risk.errors import HorizonError, ModelValidityError, ParameterError
from exposure_risk.risk.engine import EventContribution, RecipientLedger, RiskParams, SourceContribution
from exposure_risk.risk.probability import (
    DecayModel,
    ExposureEvent,
    ProbParams,
    RecipientExposure,
    decay_curve,
    exposure_from_ledger,
    infection_probability,
    infection_probability_from_rho,
    monte_carlo_symptom_free_probability,
    prob_notify,
    release_time,
    survival,
    symptom_free_infection_probability,
)

DIST = EpiDistributions()
NU = 0.9
DAY = 1440
T0 = 26_000_000


@lru_cache(maxsize=None)
def oracle_cdf():
    return build_sum_cdf(DIST, 10_000_000, 0.05, 424242)


def params(decay_model=DecayModel.TRUNCATED, nu=NU):
    return ProbParams(nu=nu, p_min=0.175, sum_cdf=oracle_cdf(), decay_model=decay_model)


def rho_for(p, nu=NU):
    return math.log1p(-p) / math.log(nu)


def exposure(*events):
    return RecipientExposure("r1", tuple(ExposureEvent(float(t), rho) for t, rho in events))


class TestInfectionProbability(unittest.TestCase):
    """P(infected) from total exposure."""

    def test_zero_exposure(self):
        self.assertEqual(infection_probability(exposure(), params()), 0.0)
        self.assertEqual(infection_probability(exposure((T0, 0.0)), params()), 0.0)

    def test_closed_form(self):
        exp = exposure((T0, 1.0), (T0 + DAY, 2.5))
        self.assertAlmostEqual(infection_probability(exp, params()), 1 - NU ** 3.5)
        self.assertAlmostEqual(float(survival(3.5, NU)), NU ** 3.5)

    def test_from_rho_keeps_precision_for_tiny_exposure(self):
        self.assertAlmostEqual(float(infection_probability_from_rho(1e-12, NU)) / 1e-12, -math.log(NU), places=9)
        np.testing.assert_allclose(infection_probability_from_rho([0.0, 2.0], 0.5), [0.0, 0.75])

    def test_prob_notify_threshold(self):
        self.assertTrue(prob_notify(exposure((T0, 1.83)), params()))
        self.assertFalse(prob_notify(exposure((T0, 1.7)), params()))

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(min_value=0.0, max_value=20.0))
    def test_both_rules_agree_away_from_the_threshold(self, total):
        if 1.80 <= total <= 1.86:
            return
        led = RecipientLedger("r1").with_source(SourceContribution("s", (EventContribution(0, T0, total),)))
        self.assertEqual(prob_notify(exposure_from_ledger(led), params()), should_notify(led, RiskParams()))

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(min_value=0.0, max_value=50.0), st.floats(min_value=0.0, max_value=50.0))
    def test_monotone_in_exposure(self, a, b):
        low, high = sorted((a, b))
        self.assertLessEqual(infection_probability(exposure((T0, low)), params()),
                             infection_probability(exposure((T0, high)), params()))

    def test_params_validation(self):
        with self.assertRaises(ParameterError):
            ProbParams(nu=1.0, p_min=0.2, sum_cdf=oracle_cdf())
        with self.assertRaises(ParameterError):
            ProbParams(nu=0.9, p_min=0.0, sum_cdf=oracle_cdf())
        self.assertIs(ProbParams(nu=0.9, p_min=0.2, sum_cdf=oracle_cdf(),
                                 decay_model="independent").decay_model, DecayModel.INDEPENDENT)

    def test_exposure_from_ledger_uses_event_risks(self):
        led = RecipientLedger("r1")
        led = led.with_source(SourceContribution("b", (EventContribution(0, T0 + 60, 0.7),)))
        led = led.with_source(SourceContribution("a", (EventContribution(0, T0, 1.2),
                                                       EventContribution(1, T0 + 30, 0.1))))
        exp = exposure_from_ledger(led)
        self.assertEqual([e.rho for e in exp.events], [1.2, 0.1, 0.7])
        self.assertAlmostEqual(exp.rho_total, led.total)

    def test_negative_rho_rejected(self):
        with self.assertRaises(ParameterError):
            ExposureEvent(T0, -0.1)


class TestSymptomFreeProbability(unittest.TestCase):
    """Decay of the infection probability while no symptoms appear."""

    def test_no_events(self):
        self.assertEqual(symptom_free_infection_probability(exposure(), T0, params()), 0.0)

    def test_at_event_time_equals_infection_probability(self):
        for model in DecayModel:
            exp = exposure((T0, rho_for(0.4)))
            self.assertAlmostEqual(symptom_free_infection_probability(exp, T0, params(model)), 0.4)

    def test_single_event_closed_form(self):
        p = 0.3
        t = T0 + 9 * DAY
        g = eval_cdf(oracle_cdf(), 9.0)
        expected = (1 - g) * p / (1 - g * p)
        for model in DecayModel:
            self.assertAlmostEqual(
                symptom_free_infection_probability(exposure((T0, rho_for(p))), t, params(model)), expected)

    def test_tends_to_zero_at_horizon(self):
        horizon = T0 + oracle_cdf().horizon * DAY
        for p in (0.1, 0.5, 0.9):
            self.assertLess(symptom_free_infection_probability(exposure((T0, rho_for(p))), horizon, params()),
                            0.005)

    def test_truncated_denominator_breakdown(self):
        exp = exposure((T0, 50.0), (T0 + 60, 50.0), (T0 + 120, 50.0))
        with self.assertRaises(ModelValidityError):
            symptom_free_infection_probability(exp, T0 + 30 * DAY, params(DecayModel.TRUNCATED))
        value = symptom_free_infection_probability(exp, T0 + 30 * DAY, params(DecayModel.INDEPENDENT))
        self.assertTrue(0.0 <= value <= 1.0)

    @settings(max_examples=1000, deadline=None)
    @given(
        p=st.floats(min_value=0.001, max_value=0.99),
        d1=st.floats(min_value=0.0, max_value=40.0),
        d2=st.floats(min_value=0.0, max_value=40.0),
    )
    def test_single_event_is_non_increasing(self, p, d1, d2):
        early, late = sorted((d1, d2))
        exp = exposure((T0, rho_for(p)))
        pe = symptom_free_infection_probability(exp, T0 + early * DAY, params())
        pl = symptom_free_infection_probability(exp, T0 + late * DAY, params())
        self.assertLessEqual(pl, pe + 1e-12)
        self.assertTrue(0.0 <= pl <= p + 1e-12)


class TestMonteCarloOracle(unittest.TestCase):
    """Analytic decay against simulated infection and symptom onset."""

    N_TRIALS = 1_000_000
    OFFSETS = (2, 5, 8, 12, 16)

    @staticmethod
    def cdf_error(exp, t):
        """
        Standard error the Monte Carlo estimate of G carries into the exact
        (independent-events) probability.

        P = 1 - prod(1 - p_n) / prod(1 - G_n p_n), so
        |dP/dG_n| = (1 - P) p_n / (1 - G_n p_n). Each G_n is an empirical CDF
        value with standard error sqrt(G_n (1 - G_n) / N). All G_n come from
        the same samples, so the errors are summed, not added in quadrature.
        """
        cdf = oracle_cdf()
        times, rhos = exp.arrays()
        p = infection_probability_from_rho(rhos, NU)
        g = np.asarray(eval_cdf(cdf, (t - times) / DAY), dtype=float)
        survive = 1.0 - symptom_free_infection_probability(exp, t, params(DecayModel.INDEPENDENT))
        sensitivity = survive * p / (1.0 - g * p)
        return float(np.sum(sensitivity * np.sqrt(g * (1.0 - g) / cdf.sample_count)))

    def check(self, exp, model, seed, gap=None):
        last = max(e.event_time for e in exp.events)
        times = [last + d * DAY for d in self.OFFSETS]
        freq, se = monte_carlo_symptom_free_probability(exp, times, NU, DIST, self.N_TRIALS, seed)
        for t, f, s in zip(times, freq, se):
            analytic = symptom_free_infection_probability(exp, t, params(model))
            tolerance = 3 * math.hypot(s, self.cdf_error(exp, t))
            if gap is not None:
                tolerance += gap(t)
            self.assertLessEqual(abs(analytic - f), tolerance,
                                 f"t={(t - last) / DAY:.0f}d analytic={analytic:.5f} mc={f:.5f} se={s:.5f}")

    def test_single_event_both_models(self):
        exp = exposure((T0, rho_for(0.5)))
        self.check(exp, DecayModel.TRUNCATED, 1)
        self.check(exp, DecayModel.INDEPENDENT, 1)

    def test_independent_two_events(self):
        self.check(exposure((T0, rho_for(0.4)), (T0 + 2 * DAY, rho_for(0.3))), DecayModel.INDEPENDENT, 2)

    def test_independent_three_events(self):
        exp = exposure((T0, rho_for(0.5)), (T0 + DAY, rho_for(0.2)), (T0 + 3 * DAY, rho_for(0.6)))
        self.check(exp, DecayModel.INDEPENDENT, 3)

    def test_truncated_low_probability_events(self):
        # With several events the truncated form differs from the exact one;
        # only that known difference is added to the band.
        exp = exposure((T0, rho_for(0.03)), (T0 + DAY, rho_for(0.02)), (T0 + 2 * DAY, rho_for(0.04)))

        def gap(t):
            return abs(symptom_free_infection_probability(exp, t, params(DecayModel.TRUNCATED))
                       - symptom_free_infection_probability(exp, t, params(DecayModel.INDEPENDENT)))

        self.check(exp, DecayModel.TRUNCATED, 4, gap)

    def test_rejects_bad_trial_count(self):
        with self.assertRaises(ParameterError):
            monte_carlo_symptom_free_probability(exposure((T0, 1.0)), [T0], NU, DIST, 0, 1)


class TestReleaseTime(unittest.TestCase):
    """Earliest time the symptom-free probability falls below a threshold."""

    def test_release_after_half_of_symptom_times(self):
        exp = exposure((T0, rho_for(0.5)))
        t = release_time(exp, 1 / 3, params())
        self.assertGreater(t, T0)
        self.assertLess(symptom_free_infection_probability(exp, t, params()), 1 / 3)
        step = oracle_cdf().grid_step * DAY
        self.assertGreaterEqual(symptom_free_infection_probability(exp, t - step, params()), 1 / 3)
        # Single event: below 1/3 exactly when G passes one half
        self.assertGreater(eval_cdf(oracle_cdf(), (t - T0) / DAY), 0.5)

    def test_threshold_above_current_probability(self):
        exp = exposure((T0, rho_for(0.1)), (T0 + DAY, rho_for(0.1)))
        self.assertEqual(release_time(exp, 0.9, params()), T0 + DAY)

    def test_threshold_equal_to_initial_probability(self):
        half = params(nu=0.5)
        exp = exposure((T0, 1.0))
        initial = symptom_free_infection_probability(exp, T0, half)
        self.assertAlmostEqual(initial, 0.5, places=12)
        self.assertEqual(release_time(exp, initial, half), T0)

    def test_threshold_beyond_horizon(self):
        with self.assertRaises(HorizonError):
            release_time(exposure((T0, rho_for(0.5))), 1e-9, params())

    def test_invalid_arguments(self):
        with self.assertRaises(ParameterError):
            release_time(exposure((T0, 1.0)), 0.0, params())
        with self.assertRaises(ParameterError):
            release_time(exposure((T0, 1.0)), 1.0, params())
        with self.assertRaises(ParameterError):
            release_time(exposure(), 0.1, params())


class TestDecayCurve(unittest.TestCase):
    """Decay curves over G's grid."""

    @classmethod
    def setUpClass(cls):
        cls.frame = decay_curve([0.1, 0.5, 0.9], params())

    def test_columns_and_length(self):
        self.assertEqual(list(self.frame.columns),
                         ["time_from_event_days", "infection_prob_initial", "conditional_probability"])
        self.assertEqual(len(self.frame), 3 * len(oracle_cdf().grid_times))

    def test_each_curve_starts_at_its_initial_probability(self):
        starts = self.frame[self.frame["time_from_event_days"] == 0.0]
        np.testing.assert_allclose(starts["conditional_probability"], starts["infection_prob_initial"])

    def test_each_curve_is_non_increasing_and_ends_near_zero(self):
        for p, curve in self.frame.groupby("infection_prob_initial"):
            values = curve.sort_values("time_from_event_days")["conditional_probability"].to_numpy()
            self.assertTrue(np.all(np.diff(values) <= 1e-12), f"curve for p={p} increases")
            self.assertLess(values[-1], 0.005)

    def test_rejects_out_of_range_probability(self):
        for bad in (0.0, 1.0, -0.2, 1.5):
            with self.assertRaises(ParameterError):
                decay_curve([bad], params())


if __name__ == "__main__":
    unittest.main()
