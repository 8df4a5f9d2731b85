import math
import unittest

import numpy as np
import pytest

from distributions import FoldedMixture, Phi_bar_inv
from errors import DegenerateError, InvalidParamsError
from hc import (
    TRACE_COLUMNS,
    hc_ideal_objective,
    hc_objective,
    hct_empirical,
    hct_ideal,
    hct_ideal_search,
    p_values_from_z,
    scan_limit,
)


class TestHcObjective(unittest.TestCase):

    def test_zero_when_p_value_matches_rank(self):
        self.assertEqual(hc_objective(5, 50, 0.1), 0.0)

    def test_known_value(self):
        """sqrt(100) (0.01 - 0.001) / sqrt(0.01 * 0.99)"""
        self.assertAlmostEqual(hc_objective(1, 100, 0.001), 0.904534, places=6)

    def test_negative_when_p_value_too_large(self):
        self.assertLess(hc_objective(10, 100, 0.2), 0.0)

    def test_rejects_bad_input(self):
        with self.assertRaises(InvalidParamsError):
            hc_objective(100, 100, 0.5)
        with self.assertRaises(InvalidParamsError):
            hc_objective(0, 100, 0.5)
        with self.assertRaises(InvalidParamsError):
            hc_objective(1, 100, 0.0)
        with self.assertRaises(InvalidParamsError):
            hc_objective(1.5, 100, 0.5)


class TestEmpiricalHct(unittest.TestCase):

    def test_p_values_stay_positive_in_far_tail(self):
        p = p_values_from_z([40.0, -50.0, 1e3])
        self.assertTrue(np.all(p > 0.0))
        np.testing.assert_array_equal(p, np.finfo(float).tiny)
        self.assertGreater(p_values_from_z([30.0])[0], np.finfo(float).tiny)

    def test_p_values(self):
        p = p_values_from_z([0.0, 1.96, -1.96, 4.0])
        self.assertEqual(p[0], 1.0)
        self.assertAlmostEqual(p[1], 0.05, places=4)
        self.assertEqual(p[1], p[2])
        self.assertLess(p[3], p[1])
        with self.assertRaises(InvalidParamsError):
            p_values_from_z([1.0, np.inf])

    def test_scan_limit(self):
        self.assertEqual(scan_limit(1000, 0.1), 100)
        self.assertEqual(scan_limit(5, 0.1), 1)
        # never reaches N, where the objective is undefined
        self.assertEqual(scan_limit(10, 1.0), 9)

    def test_single_huge_coordinate(self):
        z = np.full(100, 0.1)
        z[37] = 10.0
        result = hct_empirical(z, alpha0=0.1)
        self.assertEqual(result.argmax_index, 1)
        self.assertEqual(result.threshold, 10.0)

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(7)
        z = rng.standard_normal(500)
        z[:10] += 4.0
        result = hct_empirical(z, alpha0=0.1)

        p_sorted = np.sort(p_values_from_z(z))
        values = [hc_objective(i, z.size, p_sorted[i - 1]) for i in range(1, 51)]
        best = int(np.argmax(values))
        self.assertEqual(result.argmax_index, best + 1)
        self.assertAlmostEqual(result.objective_max, values[best], places=10)
        self.assertEqual(result.threshold, np.sort(np.abs(z))[::-1][best])

    def test_uniform_p_values_peak_at_scan_limit(self):
        # pi_(i) = i / (N + 1) makes the objective increase with i
        N = 200
        z = np.array([Phi_bar_inv(i / (N + 1) / 2.0) for i in range(1, N + 1)])
        result = hct_empirical(z, alpha0=0.1)
        self.assertEqual(result.argmax_index, 20)
        self.assertAlmostEqual(result.threshold, z[19], places=12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(11)
        z = rng.standard_normal(2000)
        z[:40] += 3.0
        base = hct_empirical(z)
        shuffled = hct_empirical(rng.permutation(z))
        self.assertEqual(base.argmax_index, shuffled.argmax_index)
        self.assertEqual(base.threshold, shuffled.threshold)

    def test_trace(self):
        rng = np.random.default_rng(3)
        z = rng.standard_normal(300)
        result = hct_empirical(z, alpha0=0.25)
        trace = result.trace_frame()
        self.assertEqual(list(trace.columns), TRACE_COLUMNS)
        self.assertEqual(len(trace), 75)
        self.assertTrue(np.all(np.diff(trace["p_value"]) >= 0))
        self.assertEqual(trace["hc_value"].iloc[result.argmax_index - 1], result.objective_max)
        self.assertEqual(set(result.summary()), {"threshold", "argmax_index", "objective_max",
                                                 "n_features", "alpha0"})

    def test_rejects_bad_input(self):
        with self.assertRaises(InvalidParamsError):
            hct_empirical([1.0])
        with self.assertRaises(InvalidParamsError):
            hct_empirical([1.0, 2.0, 3.0], alpha0=0.0)
        with self.assertRaises(InvalidParamsError):
            hct_empirical([1.0, 2.0, 3.0], alpha0=1.5)
        with self.assertRaises(InvalidParamsError):
            hct_empirical([1.0, np.nan, 3.0])


class TestIdealHct(unittest.TestCase):

    def test_is_local_and_global_maximum(self):
        m = FoldedMixture(epsilon=0.01, tau=3.0)
        t_star = hct_ideal(m)
        at_star = float(hc_ideal_objective(m, t_star))
        for shift in (-0.01, 0.01):
            self.assertGreaterEqual(at_star, float(hc_ideal_objective(m, t_star + shift)))
        grid = np.linspace(0.5, 9.0, 100_001)[1:]
        self.assertGreaterEqual(at_star, float(np.nanmax(hc_ideal_objective(m, grid))) - 1e-10)

    def test_threshold_near_signal_strength(self):
        t_star = hct_ideal(FoldedMixture(epsilon=0.01, tau=3.0))
        self.assertGreater(t_star, 2.5)
        self.assertLess(t_star, 3.6)

    def test_value_grows_with_signal(self):
        values = [hct_ideal_search(FoldedMixture(epsilon=0.01, tau=tau)).value for tau in (2.0, 3.0, 4.0)]
        self.assertTrue(values[0] <= values[1] <= values[2])

    def test_respects_lower_end(self):
        result = hct_ideal_search(FoldedMixture(epsilon=0.3, tau=1.0), t0=0.5)
        self.assertGreater(result.argmax, 0.5)

    def test_pure_null_is_degenerate(self):
        with self.assertRaises(DegenerateError):
            hct_ideal(FoldedMixture(epsilon=0.0, tau=3.0))

    def test_rejects_negative_t0(self):
        with self.assertRaises(InvalidParamsError):
            hct_ideal(FoldedMixture(epsilon=0.01, tau=3.0), t0=-1.0)


def test_empirical_threshold_tracks_ideal():
    """Median relative gap between the empirical and the ideal threshold stays under 15%."""
    p, epsilon, tau = 10_000, 0.01, 3.0
    ideal = hct_ideal(FoldedMixture(epsilon=epsilon, tau=tau))
    rng = np.random.default_rng(2024)
    k = int(round(epsilon * p))
    gaps = []
    for _ in range(50):
        z = rng.standard_normal(p)
        z[:k] += tau
        gaps.append(abs(hct_empirical(z).threshold - ideal) / ideal)
    assert float(np.median(gaps)) <= 0.15


def test_ideal_objective_nan_where_spread_vanishes():
    m = FoldedMixture(epsilon=0.01, tau=3.0)
    assert math.isnan(float(hc_ideal_objective(m, 0.0)))


@pytest.mark.parametrize("tau", [2.0, 3.0, 4.0])
def test_ideal_search_reports_grid_and_refined(tau):
    result = hct_ideal_search(FoldedMixture(epsilon=0.01, tau=tau))
    assert result.value >= result.grid_value
    assert abs(result.argmax - result.grid_argmax) <= 2e-3


if __name__ == '__main__':
    unittest.main()
