import math

import numpy as np
import pytest

from weightbench.blocks import make_block
from weightbench.grid import Cube, GridFunction, GridSpec
from weightbench.operators import (
    fourier_maximal,
    fourier_partial_sum,
    frequency_ladder,
    hilbert_ladder,
    hilbert_maximal,
    hilbert_truncated,
    local_ls_check,
    make_operator,
    size_condition_check,
    spectral_partial_sum,
)
from weightbench.weights import constant_weight, power_weight


def rel_l2(a, b, mask=None):
    mask = np.ones(a.shape, bool) if mask is None else mask
    return np.linalg.norm((a - b)[mask]) / np.linalg.norm(b[mask])


def direct_hilbert(f, m0):
    x = f.samples
    n = len(x)
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(n):
            if abs(i - j) >= m0:
                s += x[j] / (math.pi * (i - j))
        out[i] = s
    return out


def test_matches_direct_sum():
    rng = np.random.default_rng(0)
    f = GridFunction(GridSpec(1, 1.0, 64), rng.normal(size=64))
    assert np.allclose(hilbert_truncated(f).samples, direct_hilbert(f, 1), atol=1e-12)
    eps = 4 * f.spec.h
    assert np.allclose(hilbert_truncated(f, eps).samples, direct_hilbert(f, 4), atol=1e-12)
    with pytest.raises(ValueError):
        hilbert_truncated(f, f.spec.h / 2)


def test_odd_kernel_cancellation():
    spec = GridSpec(1, 2.0, 64)
    f = GridFunction(spec, np.where(np.abs(np.arange(64) - 31) <= 10, 1.0, 0.0))
    assert abs(hilbert_truncated(f).samples[31]) < 1e-14


def test_indicator_closed_form():
    spec = GridSpec(1, 4.0, 4096)
    x = spec.midpoints()
    f = GridFunction(spec, (np.abs(x) < 1).astype(float))
    Hf = hilbert_truncated(f).samples
    far = np.abs(x) > 1 + 2 * spec.h
    exact = np.log(np.abs((x + 1) / (x - 1))) / math.pi
    assert np.max(np.abs(Hf[far] - exact[far]) / np.abs(exact[far])) <= 0.02
    Tstar = hilbert_maximal(f).samples
    assert np.all(Tstar[far] >= np.abs(exact[far]) * (1 - 0.02))


def test_linearity():
    rng = np.random.default_rng(1)
    spec = GridSpec(1, 1.0, 128)
    f, g = (GridFunction(spec, rng.normal(size=128)) for _ in range(2))
    assert np.allclose(hilbert_truncated(f + g).samples,
                       hilbert_truncated(f).samples + hilbert_truncated(g).samples, atol=1e-13)


def test_maximal_dominates_ladder():
    rng = np.random.default_rng(2)
    spec = GridSpec(1, 1.0, 128)
    f = GridFunction(spec, rng.normal(size=128))
    T = hilbert_maximal(f).samples
    for eps in hilbert_ladder(spec):
        assert np.all(T >= np.abs(hilbert_truncated(f, eps).samples))
    assert not np.any(hilbert_maximal(GridFunction.zeros(spec)).samples)


def bandlimited(spec):
    return GridFunction.from_callable(spec, lambda x: np.exp(-2 * x ** 2) * np.cos(2 * np.pi * x))


def test_fourier_reproduces_bandlimited():
    spec = GridSpec(1, 4.0, 4096)
    f = bandlimited(spec)
    S = fourier_partial_sum(f, 4.0).samples
    oracle = spectral_partial_sum(f, 4.0).samples
    assert rel_l2(S, oracle) <= 0.02
    centre = np.abs(spec.midpoints()) < 2
    assert rel_l2(S, f.samples, centre) <= 0.02


def test_fourier_low_band_removes_oscillation():
    spec = GridSpec(1, 4.0, 2048)
    f = GridFunction.from_callable(spec, lambda x: np.exp(-x ** 2 / 4) * np.sin(6 * np.pi * x))
    S = fourier_partial_sum(f, 0.1).samples
    assert np.linalg.norm(S) <= 0.05 * np.linalg.norm(f.samples)
    assert np.linalg.norm(spectral_partial_sum(f, 0.1).samples) <= 0.05 * np.linalg.norm(f.samples)


def test_fourier_zero_and_range():
    spec = GridSpec(1, 2.0, 256)
    assert not np.any(fourier_partial_sum(GridFunction.zeros(spec), 2.0).samples)
    with pytest.raises(ValueError):
        fourier_partial_sum(GridFunction.zeros(spec), 1e6)


def test_fourier_maximal():
    # the discrete kernel damps |xi| < N by the factor 1 - 2 N h, so 2% needs a fine grid
    spec = GridSpec(1, 4.0, 4096)
    f = bandlimited(spec)
    Sstar = fourier_maximal(f).samples
    for N in frequency_ladder(spec):
        assert np.all(Sstar >= np.abs(fourier_partial_sum(f, N).samples))
    centre = np.abs(spec.midpoints()) < 1
    big = np.abs(f.samples) > 0.1
    assert np.all(Sstar[centre & big] >= np.abs(f.samples[centre & big]) * 0.98)
    assert not np.any(fourier_maximal(GridFunction.zeros(spec)).samples)


def test_make_operator():
    for name in ("identity", "hilbert_trunc", "hilbert_trunc:0.1", "hilbert_max", "hl_max",
                 "smooth_max", "fourier:2", "fourier_max"):
        T = make_operator(name)
        assert T.kind in ("linear", "maximal")
    with pytest.raises(ValueError):
        make_operator("nope")


def _blocks(spec, w, rng, n, signed):
    out = []
    for _ in range(n):
        lev = int(rng.integers(2, 7))
        Q = Cube.dyadic(spec, lev, (int(rng.integers(2 ** lev)),))
        g = np.zeros(spec.shape)
        vals = rng.uniform(0.5, 1.5, size=int(Q.size))
        g[Q.slices(spec)] = vals * (rng.choice([-1, 1], size=vals.size) if signed else 1)
        out.append(make_block(GridFunction(spec, g), Q, 2.0, 8.0, w)[1])
    return out


def test_size_condition_hilbert():
    spec = GridSpec(1, 2.0, 1024)
    w = power_weight(0.3, spec)
    rng = np.random.default_rng(3)
    T = make_operator("hilbert_trunc")
    # outside the dilate |x - y| >= |x - x0| / 2, so 2/pi bounds every block
    vals = [size_condition_check(T, b) for b in _blocks(spec, w, rng, 50, signed=False)]
    assert max(vals) <= 2 / math.pi
    # far from a one-signed block the constant approaches 1/pi
    Q = Cube((508,), 8)
    g = np.zeros(1024)
    g[Q.slices(spec)] = 1.0
    b = make_block(GridFunction(spec, g), Q, 2.0, 8.0, w)[1]
    x = spec.midpoints()
    Tb = hilbert_truncated(b.samples).samples
    far = np.abs(x - b.center()[0]) > 1.5
    c_far = np.max(np.abs(Tb[far]) * np.abs(x[far] - b.center()[0])) / np.sum(np.abs(b.samples.samples)) / spec.h
    assert c_far == pytest.approx(1 / math.pi, rel=0.01)


def test_size_condition_zero_and_hl():
    spec = GridSpec(1, 2.0, 512)
    w = constant_weight(spec)
    Q = Cube((0,), 8)
    zero = make_block(GridFunction.zeros(spec), Q, 2.0, 8.0, w)[1]
    assert size_condition_check(make_operator("hilbert_trunc"), zero) == 0.0
    rng = np.random.default_rng(4)
    vals = [size_condition_check(make_operator("hl_max"), b) for b in _blocks(spec, w, rng, 30, True)]
    assert max(vals) <= 1.0
    assert math.isnan(local_ls_check(make_operator("hilbert_trunc"), zero, 2.0))


def test_local_ls_uniform():
    spec = GridSpec(1, 2.0, 512)
    w = power_weight(0.3, spec)
    rng = np.random.default_rng(5)
    for name in ("hilbert_trunc", "hl_max"):
        vals = [local_ls_check(make_operator(name), b, 2.0) for b in _blocks(spec, w, rng, 30, True)]
        assert max(vals) < 10.0


def test_fourier_defect_law():
    # hilbert_truncated has symbol -i sign(xi) (1 - 2 |xi| h), so S_N damps its band by 1 - 2 N h
    spec = GridSpec(1, 4.0, 4096)
    f = GridFunction.from_callable(spec, lambda x: np.exp(-3 * x ** 2) * np.cos(4 * np.pi * x))
    for freq in (4.0, 8.0):
        err = rel_l2(fourier_partial_sum(f, freq).samples, spectral_partial_sum(f, freq).samples)
        assert err == pytest.approx(2 * freq * spec.h, rel=1e-3)


def test_hilbert_antisymmetry():
    spec = GridSpec(1, 2.0, 128)
    f = GridFunction.from_callable(spec, lambda x: np.exp(-x ** 2) + x ** 2)
    Hf = hilbert_truncated(f, 3 * spec.h).samples
    assert np.allclose(Hf, -Hf[::-1], atol=1e-13)


@pytest.mark.parametrize("name", ["identity", "hilbert_trunc", "hilbert_max", "hl_max", "smooth_max",
                                  "fourier:3", "fourier_max"])
def test_homogeneity_and_sublinearity(name):
    rng = np.random.default_rng(6)
    spec = GridSpec(1, 2.0, 256)
    w = power_weight(0.3, spec)
    T = make_operator(name)
    blocks = _blocks(spec, w, rng, 4, True)
    lams = rng.normal(size=4)
    f = sum((b.samples * l for b, l in zip(blocks[1:], lams[1:])), blocks[0].samples * lams[0])
    Tf = T(f).samples
    bound = sum(abs(l) * np.abs(T(b.samples).samples) for b, l in zip(blocks, lams))
    assert np.all(np.abs(Tf) <= bound + 1e-9 * (1 + bound))
    c = -2.5
    if T.kind == "linear":
        assert np.allclose(T(f * c).samples, c * Tf, atol=1e-12)
    else:
        assert np.allclose(T(f * c).samples, abs(c) * Tf, rtol=1e-12, atol=1e-12)
