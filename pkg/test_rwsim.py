import math
import unittest
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from config import Config
from distributions import ArwParams, RwParams, ThresholdKind, Phi
from errors import InvalidParamsError
from ideal import err_proxy, fdr_proxy, mdr_proxy, sep_proxy
from rwsim import (
    RECORD_COLUMNS,
    Selector,
    SelectorKind,
    SimConfig,
    ZScoreMode,
    aggregate,
    balanced_labels,
    build_classifier,
    draw_test_matrix,
    evaluate_test_error,
    generate,
    predict,
    realized_separation,
    replicate_rng,
    run,
)

PARAMS = RwParams(p=10_000, n=6, epsilon=0.01, tau=3.0)


def close_to_proxy(mean, se, expected):
    return abs(mean - expected) <= 3.0 * se + 1e-3


class TestSelector(unittest.TestCase):

    def test_parse(self):
        self.assertEqual(Selector.parse("fixed:2.5"), Selector(SelectorKind.FIXED, 2.5))
        self.assertEqual(Selector.parse("HCT"), Selector(SelectorKind.HCT, Config.ALPHA0))
        self.assertEqual(Selector.parse("hct:0.2").value, 0.2)
        self.assertEqual(Selector.parse("bonferroni"), Selector(SelectorKind.BONFERRONI, None))
        self.assertEqual(Selector.parse("fdrt:0.05").describe(), "fdrt:0.05")

    def test_parse_rejects(self):
        for text in ("bogus", "fixed", "fdrt", "fixed:abc"):
            with self.assertRaises(InvalidParamsError):
                Selector.parse(text)


class TestSimConfig(unittest.TestCase):

    def test_validation(self):
        with self.assertRaises(InvalidParamsError):
            SimConfig(params=PARAMS, replicates=0)
        with self.assertRaises(InvalidParamsError):
            SimConfig(params=PARAMS, selector=Selector(SelectorKind.FIXED, -1.0))
        with self.assertRaises(InvalidParamsError):
            SimConfig(params=PARAMS, selector=Selector(SelectorKind.HCT, 0.0))
        with self.assertRaises(InvalidParamsError):
            SimConfig(params=PARAMS, seed=-1)

    def test_default_selector_follows_configured_alpha0(self):
        self.assertEqual(SimConfig(params=PARAMS).selector, Selector(SelectorKind.HCT, Config.ALPHA0))
        with patch.object(Config, "ALPHA0", 0.25):
            self.assertEqual(SimConfig(params=PARAMS).selector.value, 0.25)
            self.assertEqual(SimConfig(params=PARAMS).selector, Selector.parse("hct"))

    def test_full_matrix_needs_even_n(self):
        odd = RwParams(p=100, n=5, epsilon=0.1, tau=2.0)
        with self.assertRaises(InvalidParamsError):
            SimConfig(params=odd, zscore_mode=ZScoreMode.FULL_MATRIX)

    def test_full_matrix_size_limit(self):
        with patch.object(Config, "FULL_MATRIX_LIMIT", 100):
            with self.assertRaises(InvalidParamsError):
                SimConfig(params=RwParams(p=100, n=4, epsilon=0.1, tau=2.0), zscore_mode=ZScoreMode.FULL_MATRIX)

    def test_to_dict(self):
        config = SimConfig(params=PARAMS, selector=Selector.parse("fixed:2.5"))
        row = config.to_dict()
        self.assertEqual(row["selector"], "fixed:2.5")
        self.assertEqual(row["kind"], "clip")
        self.assertEqual(row["p"], 10_000)


class TestGeneration(unittest.TestCase):

    def test_shapes_and_useful_count(self):
        data = generate(SimConfig(params=PARAMS, test_size=501), 0)
        self.assertEqual(data.z.shape, (10_000,))
        self.assertEqual(int(data.useful.sum()), PARAMS.k)
        np.testing.assert_allclose(data.mu[data.useful], PARAMS.mu0)
        self.assertTrue(np.all(data.mu[~data.useful] == 0.0))
        self.assertEqual(data.test_labels.sum(), 1.0)

    def test_replicates_are_reproducible(self):
        config = SimConfig(params=PARAMS, seed=5)
        first, again, other = generate(config, 3), generate(config, 3), generate(config, 4)
        np.testing.assert_array_equal(first.z, again.z)
        self.assertFalse(np.array_equal(first.z, other.z))

    def test_streams_are_independent_of_order(self):
        a = replicate_rng(9, 2).standard_normal(5)
        replicate_rng(9, 1).standard_normal(5)
        np.testing.assert_array_equal(a, replicate_rng(9, 2).standard_normal(5))

    def test_rejects_no_useful_features(self):
        config = SimConfig(params=RwParams(p=100, n=5, epsilon=0.0, tau=3.0))
        with self.assertRaises(InvalidParamsError):
            generate(config, 0)

    def test_full_matrix_matches_direct_in_law(self):
        params = RwParams(p=10, n=4, epsilon=0.3, tau=2.0)
        samples = {}
        for mode in ZScoreMode:
            config = SimConfig(params=params, zscore_mode=mode, seed=17)
            useful, null = [], []
            for i in range(10_000):
                data = generate(config, i)
                useful.append(data.z[data.useful])
                null.append(data.z[~data.useful])
            samples[mode] = (np.concatenate(useful), np.concatenate(null))

        direct, full = samples[ZScoreMode.DIRECT], samples[ZScoreMode.FULL_MATRIX]
        for a, b in zip(direct, full):
            mean_se = math.sqrt(a.var() / a.size + b.var() / b.size)
            var_se = math.sqrt(2 * a.var() ** 2 / a.size + 2 * b.var() ** 2 / b.size)
            self.assertLess(abs(a.mean() - b.mean()), 3 * mean_se)
            self.assertLess(abs(a.var() - b.var()), 3 * var_se)
        useful, null = full
        self.assertLess(abs(useful.mean() - 2.0), 3 * math.sqrt(1.0 / useful.size))
        self.assertLess(abs(null.var() - 1.0), 3 * math.sqrt(2.0 / null.size))


class TestClassifier(unittest.TestCase):

    def test_empty_classifier(self):
        w = build_classifier(np.array([0.5, -1.0, 1.5]), ThresholdKind.CLIP, 2.0)
        np.testing.assert_array_equal(w, 0.0)
        self.assertEqual(realized_separation(w, np.ones(3)), 0.0)
        np.testing.assert_array_equal(predict(w, np.ones((4, 3))), 1.0)
        data = generate(SimConfig(params=PARAMS, test_size=1000), 0)
        self.assertEqual(evaluate_test_error(np.zeros(PARAMS.p), data), 0.5)

    def test_projected_error_matches_explicit_test_vectors(self):
        rng = np.random.default_rng(4)
        mu = np.zeros(50)
        mu[:5] = 0.4
        w = np.sign(mu + 0.3 * rng.standard_normal(50))
        labels, x = draw_test_matrix(mu, 20_000, rng)
        explicit = float(np.mean(predict(w, x) != labels))
        self.assertLess(abs(explicit - float(Phi(-0.5 * realized_separation(w, mu)))), 0.015)

    def test_balanced_labels(self):
        np.testing.assert_array_equal(balanced_labels(4), [1.0, 1.0, -1.0, -1.0])
        self.assertEqual(balanced_labels(5).sum(), 1.0)


class TestRun(unittest.TestCase):

    def test_matches_proxies_at_fixed_thresholds(self):
        for t in (2.0, 2.5, 3.0):
            config = SimConfig(params=PARAMS, selector=Selector(SelectorKind.FIXED, t), replicates=100, seed=1)
            summary = run(config, threads=1).summary
            self.assertEqual(summary["flagged"], 0)
            self.assertTrue(close_to_proxy(summary["realized_fdr_mean"], summary["realized_fdr_se"],
                                           fdr_proxy(PARAMS, t)), msg=f"fdr at t={t}")
            self.assertTrue(close_to_proxy(summary["realized_mdr_mean"], summary["realized_mdr_se"],
                                           mdr_proxy(PARAMS, t)), msg=f"mdr at t={t}")
            self.assertTrue(close_to_proxy(summary["test_error_mean"], summary["test_error_se"],
                                           err_proxy(PARAMS, ThresholdKind.CLIP, t)), msg=f"error at t={t}")

    def test_realized_separation_tracks_proxy(self):
        config = SimConfig(params=PARAMS, selector=Selector(SelectorKind.FIXED, 2.5), replicates=50, seed=3)
        summary = run(config).summary
        expected = math.sqrt(PARAMS.p / PARAMS.n) * sep_proxy(PARAMS, ThresholdKind.CLIP, 2.5)
        self.assertLess(abs(summary["realized_sep_mean"] / expected - 1.0), 0.1)

    def test_no_signal_is_coin_flip(self):
        params = RwParams(p=10_000, n=6, epsilon=0.01, tau=0.0)
        config = SimConfig(params=params, selector=Selector(SelectorKind.FIXED, 2.0), replicates=100, seed=2)
        summary = run(config).summary
        self.assertTrue(close_to_proxy(summary["test_error_mean"], summary["test_error_se"], 0.5))

    def test_failure_region_errs_near_half(self):
        params = ArwParams(beta=0.8, r=0.1, p=10_000).to_rw()
        config = SimConfig(params=params, selector=Selector.parse("hct"), replicates=30, seed=8)
        self.assertGreaterEqual(run(config).summary["test_error_mean"], 0.4)

    def test_unattainable_selector_is_flagged(self):
        params = RwParams(p=10_000, n=6, epsilon=0.01, tau=0.0)
        outcome = run(SimConfig(params=params, selector=Selector.parse("fdrt:0.2"), replicates=5))
        self.assertEqual(outcome.summary["flagged"], 5)
        self.assertTrue((outcome.records["error"] == "UNATTAINABLE").all())
        self.assertTrue(math.isnan(outcome.summary["test_error_mean"]))

    def test_records(self):
        outcome = run(SimConfig(params=PARAMS, selector=Selector.parse("ideal"), replicates=4, seed=6))
        records = outcome.records
        self.assertEqual(list(records.columns), RECORD_COLUMNS)
        self.assertEqual(list(records["replicate"]), [0, 1, 2, 3])
        self.assertTrue((records["n_true_selected"] <= records["n_selected"]).all())
        self.assertEqual(records["threshold_used"].nunique(), 1)
        self.assertEqual(outcome.to_dict()["replicates"], 4)


def test_thread_count_does_not_change_records():
    config = SimConfig(params=PARAMS, selector=Selector.parse("hct"), replicates=12, seed=42)
    serial = run(config, threads=1).records
    parallel = run(config, threads=4).records
    pd.testing.assert_frame_equal(serial, parallel)


def test_aggregate_standard_error():
    records = pd.DataFrame({column: [1.0, 3.0] for column in RECORD_COLUMNS})
    records["error"] = [None, None]
    summary = aggregate(records)
    assert summary["test_error_mean"] == 2.0
    assert summary["test_error_se"] == pytest.approx(1.0)


@pytest.mark.parametrize("selector", ["bonferroni", "fdrt:0.1", "hct:0.05"])
def test_selectors_run(selector):
    outcome = run(SimConfig(params=PARAMS, selector=Selector.parse(selector), replicates=3, seed=11))
    assert outcome.summary["flagged"] == 0
    assert outcome.records["threshold_used"].notna().all()


if __name__ == '__main__':
    unittest.main()
