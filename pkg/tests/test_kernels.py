"""Compiled-vs-reference kernel agreement and backend selection."""

import numpy as np
import pytest

from gram import _kernels
from gram._kernels import reference

try:
    from gram._kernels import _cykernels
except ImportError:
    _cykernels = None

needs_ext = pytest.mark.skipif(_cykernels is None, reason="extension not built")


def _scan_inputs(seed=0, b=3, t=21, d=5, n=4):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((b, t, d)),
            rng.uniform(0.05, 1.2, (b, t, d)),
            -rng.uniform(0.1, 2.0, (d, n)),
            rng.standard_normal((b, t, n)),
            rng.standard_normal((b, t, n)))


class TestPlaceTaps:
    def test_reference_sums_duplicates(self):
        out = np.zeros(64)
        reference.place_taps(out, np.array([20.0, 20.0]), np.array([1.0, 2.0]))
        single = np.zeros(64)
        reference.place_taps(single, np.array([20.0]), np.array([3.0]))
        np.testing.assert_allclose(out, single, atol=1e-15)

    def test_out_of_range_taps_dropped(self):
        out = np.zeros(10)
        reference.place_taps(out, np.array([0.5, 9.2]), np.array([1.0, 1.0]))
        assert np.all(np.isfinite(out))

    @needs_ext
    def test_backends_agree(self):
        rng = np.random.default_rng(1)
        delays = rng.uniform(-5, 2000, 500)
        amps = rng.standard_normal(500)
        a = np.zeros(2100)
        b = np.zeros(2100)
        reference.place_taps(a, delays, amps)
        _cykernels.place_taps(b, delays, amps)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestSelectiveScan:
    @needs_ext
    @pytest.mark.parametrize("exact", [False, True])
    def test_forward_backends_agree(self, exact):
        args = _scan_inputs()
        y_ref, hs_ref = reference.selective_scan_fwd(*args, exact)
        y_cy, hs_cy = _cykernels.selective_scan_fwd(*args, exact)
        np.testing.assert_allclose(y_ref, y_cy, atol=1e-12)
        np.testing.assert_allclose(hs_ref, hs_cy, atol=1e-12)

    @needs_ext
    @pytest.mark.parametrize("exact", [False, True])
    def test_backward_backends_agree(self, exact):
        args = _scan_inputs(seed=2)
        y, hs = reference.selective_scan_fwd(*args, exact)
        dy = np.random.default_rng(3).standard_normal(y.shape)
        ref = reference.selective_scan_bwd(dy, *args, hs, exact)
        cy = _cykernels.selective_scan_bwd(dy, *args, hs, exact)
        for r, c in zip(ref, cy):
            np.testing.assert_allclose(r, c, atol=1e-12)

    def test_chunked_matches_sequential(self):
        args = _scan_inputs(seed=4, t=50)
        y, _ = reference.selective_scan_fwd(*args, False)
        for chunk in (1, 7, 16, 50, 128):
            y_chunk = reference.selective_scan_chunked(*args, chunk=chunk)
            assert np.max(np.abs(y - y_chunk)) < 1e-5

    def test_chunked_matches_sequential_exact_zoh(self):
        args = _scan_inputs(seed=5, t=33)
        y, _ = reference.selective_scan_fwd(*args, True)
        y_chunk = reference.selective_scan_chunked(*args, chunk=8,
                                                   exact_discretization=True)
        assert np.max(np.abs(y - y_chunk)) < 1e-5


class TestBackendSelection:
    def test_name_reported(self):
        assert _kernels.backend_name() in ("python", "cython")

    def test_env_var_forces_fallback(self):
        import subprocess
        import sys

        out = subprocess.run(
            [sys.executable, "-c",
             "import gram; print(gram.backend_name())"],
            capture_output=True, text=True,
            env={"GRAM_NO_EXT": "1", "PATH": "/usr/bin:/bin"})
        assert out.stdout.strip() == "python"
