import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weightbench.grid import GridFunction, GridSpec
from weightbench.maximal import (
    SmoothKernel,
    hl_maximal,
    hl_maximal_bruteforce,
    lpw_norm,
    sliding_max,
    smooth_maximal,
)
from weightbench.weights import constant_weight, power_weight


def indicator(spec, a, b):
    return GridFunction.from_callable(spec, lambda *x: np.all([(xi >= a) & (xi < b) for xi in x], axis=0) * 1.0)


def test_sliding_max_matches_naive():
    rng = np.random.default_rng(0)
    x = rng.normal(size=37)
    for m in (1, 2, 5, 37):
        naive = np.array([x[i:i + m].max() for i in range(len(x) - m + 1)])
        assert np.array_equal(sliding_max(x, m), naive)


@pytest.mark.parametrize("dim", [1, 2])
def test_constant(dim):
    spec = GridSpec(dim, 1.0, 16)
    Mf = hl_maximal(GridFunction.constant(spec, -2.5))
    assert np.allclose(Mf.samples, 2.5, rtol=1e-14)


def test_indicator_closed_form():
    spec = GridSpec(1, 4.0, 256)
    Mf = hl_maximal(indicator(spec, 0.0, 1.0))
    x = spec.midpoints()
    i2 = int(np.argmin(abs(x - 2.0)))
    # best window [0, right edge of the cell]
    assert Mf.samples[i2] == pytest.approx(1.0 / (x[i2] + spec.h / 2), rel=1e-12)
    assert Mf.samples[int(np.argmin(abs(x - 0.5)))] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([4, 8, 16, 32, 64]))
def test_bruteforce_bit_exact(seed, N):
    rng = np.random.default_rng(seed)
    f = GridFunction(GridSpec(1, 1.0, N), rng.normal(size=N))
    assert np.array_equal(hl_maximal(f).samples, hl_maximal_bruteforce(f).samples)


def test_integer_data_independent_oracle():
    # integer data: every window sum is exact, so compare against plain python sums
    rng = np.random.default_rng(5)
    N = 32
    a = rng.integers(-9, 10, size=N).astype(float)
    f = GridFunction(GridSpec(1, 1.0, N), a)
    b = np.abs(a)
    expect = [max(sum(b[lo:hi + 1]) / (hi - lo + 1) for lo in range(i + 1) for hi in range(i, N)) for i in range(N)]
    assert np.array_equal(hl_maximal(f).samples, np.array(expect))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_2d_dominates_and_sublinear(seed):
    rng = np.random.default_rng(seed)
    spec = GridSpec(2, 1.0, 16)
    f = GridFunction(spec, rng.normal(size=spec.shape))
    g = GridFunction(spec, rng.normal(size=spec.shape))
    Mf, Mg, Mfg = hl_maximal(f).samples, hl_maximal(g).samples, hl_maximal(f + g).samples
    assert np.all(Mf >= np.abs(f.samples))
    assert np.all(Mfg <= Mf + Mg + 1e-12)


def test_smooth_maximal():
    spec = GridSpec(1, 2.0, 128)
    assert np.allclose(smooth_maximal(GridFunction.constant(spec, 3.0)).samples[40:88], 3.0)
    k = SmoothKernel(1)
    r = np.linspace(0, 1, 2001)
    assert np.trapezoid(k.profile(r), r) * 2 == pytest.approx(1.0, rel=1e-6)
    k2 = SmoothKernel(2)
    assert np.trapezoid(k2.profile(r) * 2 * np.pi * r, r) == pytest.approx(1.0, rel=1e-6)


def test_smooth_dominated_by_hl():
    rng = np.random.default_rng(1)
    spec = GridSpec(1, 2.0, 128)
    f = GridFunction(spec, rng.normal(size=128))
    k = SmoothKernel(1)
    C = k.profile(0.0) * 2.0  # sup phi times the support length
    assert np.all(smooth_maximal(f, k).samples <= C * hl_maximal(f).samples * (1 + 1e-9) + 1e-12)


def test_smooth_spike():
    spec = GridSpec(1, 4.0, 512)
    f = GridFunction.zeros(spec)
    s = f.samples.copy()
    s[256] = 1.0 / spec.h
    f = GridFunction(spec, s)
    k = SmoothKernel(1, scales=(2.0,))
    out = smooth_maximal(f, k).samples
    x = spec.midpoints()
    d = x[300] - x[256]
    assert out[300] == pytest.approx(k.profile(d / 2.0) / 2.0, rel=1e-3)


def test_lpw_norm_examples():
    spec = GridSpec(1, 1.0, 64)
    assert lpw_norm(GridFunction.constant(spec, 1.0), 1.0, constant_weight(spec)) == pytest.approx(2.0)
    spec = GridSpec(1, 2.0, 256)
    val = lpw_norm(indicator(spec, 0.0, 1.0), 2.0, power_weight(1.0, spec))
    assert val == pytest.approx(math.sqrt(0.5), rel=1e-12)
    spec = GridSpec(1, 1.0, 64)
    x = GridFunction.from_callable(spec, lambda x: x)
    assert lpw_norm(x, math.inf) == pytest.approx(1 - spec.h / 2)
    with pytest.raises(ValueError):
        lpw_norm(x, 0.0)
