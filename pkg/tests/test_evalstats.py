"""DoA metric, McNemar, FDR-BH, sample accounting, and the probes."""

import math

import numpy as np
import pytest

from gram.evalstats import (
    DoaResult,
    PairedOutcomes,
    ProbeConfig,
    doa_error,
    fdr_bh,
    mcnemar,
    samples_seen,
    significance_marker,
    train_probe,
)


class TestDoaError:
    def test_identity(self):
        assert doa_error([1, 0, 0], [1, 0, 0]) == 0.0

    def test_orthogonal(self):
        assert doa_error([1, 0, 0], [0, 1, 0]) == pytest.approx(90.0)

    def test_antipodal(self):
        assert doa_error([0, 0, 1], [0, 0, -1]) == pytest.approx(180.0)

    def test_scale_invariant_in_prediction(self):
        v = np.array([0.6, 0.8, 0.0])
        vh = np.array([0.3, 0.1, 0.5])
        assert doa_error(v, vh) == pytest.approx(doa_error(v, 7.0 * vh), rel=1e-12)

    def test_symmetric_for_unit_vectors(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 0.6, 0.8])
        assert doa_error(a, b) == pytest.approx(doa_error(b, a), rel=1e-12)

    def test_zero_prediction(self):
        with pytest.raises(ValueError):
            doa_error([1, 0, 0], [0, 0, 0])

    def test_non_unit_reference(self):
        with pytest.raises(ValueError):
            doa_error([2, 0, 0], [1, 0, 0])

    def test_result_summary(self):
        r = DoaResult([0.0, 10.0, 20.0, 180.0])
        assert r.median_deg == 15.0
        with pytest.raises(ValueError):
            DoaResult([-1.0])


class TestMcnemar:
    def test_symmetric_discordance(self):
        assert mcnemar(PairedOutcomes(10, 7, 7, 5)) == 1.0

    def test_exact_small_sample(self):
        # binomial oracle: 2 * P(X <= 5 | n=20, p=0.5)
        want = 2 * sum(math.comb(20, k) for k in range(6)) / 2**20
        got = mcnemar(PairedOutcomes(0, 5, 15, 0))
        assert abs(got - want) < 1e-12
        assert got == pytest.approx(0.0414, abs=5e-5)

    def test_large_asymmetry_tiny_p(self):
        assert mcnemar(PairedOutcomes(0, 0, 30, 0)) < 1e-6

    def test_no_discordant_pairs(self):
        assert mcnemar(PairedOutcomes(50, 0, 0, 50)) == 1.0

    def test_invariance_to_concordant_swap(self):
        a = mcnemar(PairedOutcomes(40, 5, 12, 3))
        b = mcnemar(PairedOutcomes(3, 5, 12, 40))
        assert a == b

    def test_invariance_to_discordant_swap(self):
        a = mcnemar(PairedOutcomes(9, 5, 12, 3))
        b = mcnemar(PairedOutcomes(9, 12, 5, 3))
        assert a == b

    def test_chi2_branch_against_exact(self):
        # at n = 30 the continuity-corrected chi-squared should be close to
        # the exact binomial probability
        n10, n01 = 9, 21
        exact = 2 * sum(math.comb(30, k) for k in range(n10 + 1)) / 2**30
        assert mcnemar(PairedOutcomes(0, n10, n01, 0)) == pytest.approx(exact, rel=0.15)

    def test_from_correctness(self):
        a = [True, True, False, False, True]
        b = [True, False, True, False, False]
        out = PairedOutcomes.from_correctness(a, b)
        assert (out.n11, out.n10, out.n01, out.n00) == (1, 2, 1, 1)

    def test_negative_counts(self):
        with pytest.raises(ValueError):
            PairedOutcomes(-1, 0, 0, 0)


class TestFdrBh:
    def test_worked_example(self):
        adjusted, reject = fdr_bh([0.005, 0.01, 0.03, 0.04], q=0.05)
        np.testing.assert_allclose(adjusted, [0.02, 0.02, 0.04, 0.04], rtol=1e-12)
        assert reject.tolist() == [True, True, True, True]

    def test_all_equal(self):
        adjusted, _ = fdr_bh([0.2, 0.2, 0.2])
        np.testing.assert_allclose(adjusted, 0.2)

    def test_single_value(self):
        adjusted, _ = fdr_bh([0.42])
        assert adjusted[0] == pytest.approx(0.42)

    def test_monotone_and_dominates_raw(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(0, 1, 50)
        adjusted, _ = fdr_bh(p)
        assert np.all(adjusted >= p - 1e-15)
        order = np.argsort(p)
        assert np.all(np.diff(adjusted[order]) >= -1e-15)

    def test_preserves_input_order(self):
        p = [0.04, 0.005, 0.03, 0.01]
        adjusted, _ = fdr_bh(p)
        np.testing.assert_allclose(adjusted, [0.04, 0.02, 0.04, 0.02], rtol=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            fdr_bh([0.5, 1.5])

    def test_markers(self):
        assert significance_marker(0.0005) == "***"
        assert significance_marker(0.005) == "**"
        assert significance_marker(0.04) == "*"
        assert significance_marker(0.2) == ""


class TestSamplesSeen:
    def test_totals(self):
        assert samples_seen(32, total_steps=180000) == 5760000
        assert samples_seen(32, total_steps=100000) == 3200000
        assert samples_seen(1024, steps_per_epoch=1985, epochs=100) == 203264000

    def test_needs_enough_arguments(self):
        with pytest.raises(ValueError):
            samples_seen(32)


class TestProbes:
    def test_linearly_separable_classification(self):
        rng = np.random.default_rng(0)
        x = np.concatenate([rng.standard_normal((60, 8)) + 4,
                            rng.standard_normal((60, 8)) - 4])
        y = np.concatenate([np.zeros(60, int), np.ones(60, int)])
        stats = train_probe(x, y, ProbeConfig(hidden=0, epochs=150, seed=1))
        assert stats["train_accuracy"] == 1.0
        assert stats["val_accuracy"] == 1.0

    def test_shuffled_labels_near_chance(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((300, 10))
        y = rng.integers(0, 2, 300)
        stats = train_probe(x, y, ProbeConfig(hidden=0, epochs=60, seed=2))
        acc = stats["val_accuracy"]
        n_val = int(round(0.2 * 300))
        sigma = math.sqrt(0.25 / n_val)
        assert abs(acc - 0.5) < 3 * sigma + 1e-9

    def test_planted_direction_regression(self):
        rng = np.random.default_rng(2)
        vecs = rng.standard_normal((200, 3))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        x = np.concatenate([vecs, 0.01 * rng.standard_normal((200, 5))], axis=1)
        cfg = ProbeConfig(kind="regression_unit_sphere", hidden=0, epochs=400,
                          lr=0.05, seed=3)
        stats = train_probe(x, vecs, cfg)
        assert stats["val_median_doa_deg"] < 5.0

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((80, 6))
        y = rng.integers(0, 3, 80)
        cfg = ProbeConfig(hidden=16, epochs=30, seed=5)
        a = train_probe(x, y, cfg)
        b = train_probe(x, y, cfg)
        assert a["val_loss"] == b["val_loss"]
        for k in a["params"]:
            np.testing.assert_array_equal(a["params"][k].data, b["params"][k].data)

    def test_label_mismatch(self):
        with pytest.raises(ValueError):
            train_probe(np.zeros((10, 4)), np.zeros(9, int), ProbeConfig())
