"""AdamW semantics, LR schedule, gradient clipping, checkpoint format."""

import numpy as np
import pytest

from gram.nn import (
    OptimizerState,
    adamw_step,
    clip_global_norm,
    cosine_warmup_lr,
    load_arrays,
    save_arrays,
)


class TestAdamW:
    def test_zero_grad_no_decay_is_fixed_point(self):
        params = {"p": np.array([1.0, -2.0])}
        state = OptimizerState(weight_decay=0.0)
        adamw_step(params, {"p": np.zeros(2)}, state, lr=0.1)
        np.testing.assert_array_equal(params["p"], [1.0, -2.0])

    def test_first_step_bias_corrected(self):
        # m-hat = v-hat = 1 after one unit-gradient step, so p drops by ~lr
        params = {"p": np.array([1.0])}
        state = OptimizerState(weight_decay=0.0)
        adamw_step(params, {"p": np.array([1.0])}, state, lr=0.1, clip_norm=None)
        assert params["p"][0] == pytest.approx(0.9, abs=1e-8)

    def test_decay_only(self):
        params = {"p": np.array([2.0])}
        state = OptimizerState(weight_decay=0.01)
        adamw_step(params, {"p": np.zeros(1)}, state, lr=0.5)
        assert params["p"][0] == pytest.approx(2.0 * (1 - 0.5 * 0.01), rel=1e-12)

    def test_deterministic_bitwise(self):
        def run():
            rng = np.random.default_rng(0)
            params = {"a": rng.standard_normal(16), "b": rng.standard_normal((4, 4))}
            state = OptimizerState()
            for _ in range(25):
                grads = {k: rng.standard_normal(v.shape) for k, v in params.items()}
                adamw_step(params, grads, state, lr=1e-3)
            return params

        one, two = run(), run()
        for k in one:
            assert np.array_equal(one[k], two[k])

    def test_non_finite_rejected(self):
        params = {"p": np.array([1.0])}
        with pytest.raises(FloatingPointError):
            adamw_step(params, {"p": np.array([np.nan])}, OptimizerState(), lr=0.1)
        np.testing.assert_array_equal(params["p"], [1.0])

    def test_clipping_bounds_global_norm(self):
        rng = np.random.default_rng(1)
        grads = {"a": 10 * rng.standard_normal(32), "b": 10 * rng.standard_normal(8)}
        clip_global_norm(grads, 1.0)
        total = np.sqrt(sum(np.sum(g * g) for g in grads.values()))
        assert total <= 1.0 + 1e-9

    def test_clipping_keeps_small_gradients(self):
        grads = {"a": np.array([0.1, 0.2])}
        clip_global_norm(grads, 1.0)
        np.testing.assert_array_equal(grads["a"], [0.1, 0.2])


class TestSchedule:
    def test_anchor_points(self):
        assert cosine_warmup_lr(0, 100000) == 0.0
        assert cosine_warmup_lr(10000, 100000) == pytest.approx(2e-4, rel=1e-12)
        assert cosine_warmup_lr(100000, 100000) == 0.0

    def test_warmup_linear(self):
        assert cosine_warmup_lr(5000, 100000) == pytest.approx(1e-4, rel=1e-12)

    def test_cosine_midpoint(self):
        mid = (10000 + 100000) // 2
        assert cosine_warmup_lr(mid, 100000) == pytest.approx(1e-4, rel=1e-12)

    def test_monotone_decay_after_warmup(self):
        values = [cosine_warmup_lr(s, 20000, warmup=1000) for s in range(1000, 20001, 100)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_step_beyond_total(self):
        with pytest.raises(ValueError):
            cosine_warmup_lr(101, 100)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        arrays = {"w": rng.standard_normal((3, 4)), "b": rng.standard_normal(4),
                  "scalar": np.array(2.5)}
        p = tmp_path / "ck.bin"
        save_arrays(p, arrays)
        back = load_arrays(p)
        assert set(back) == set(arrays)
        for k in arrays:
            np.testing.assert_array_equal(back[k], arrays[k])

    def test_byte_deterministic(self, tmp_path):
        arrays = {"z": np.arange(6.0).reshape(2, 3), "a": np.ones(2)}
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_arrays(p1, arrays)
        save_arrays(p2, dict(reversed(list(arrays.items()))))
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_garbage(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"garbage!" * 4)
        with pytest.raises(ValueError):
            load_arrays(p)
