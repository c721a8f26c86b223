import math

import numpy as np
import pytest

from weightbench.blocks import BlockDecomposition, make_block
from weightbench.grid import Cube, GridFunction, GridSpec
from weightbench.morrey import MorreyParams, conjugate, duality_pairing_check, morrey_norm
from weightbench.weights import constant_weight, power_weight


def test_conjugate():
    assert conjugate(1.0) == math.inf and conjugate(math.inf) == 1.0 and conjugate(4.0) == pytest.approx(4 / 3)
    assert MorreyParams(2.0, 8.0).sprime == pytest.approx(8 / 7)
    with pytest.raises(ValueError):
        MorreyParams(2.0, 0.5)


def test_morrey_constant():
    spec = GridSpec(1, 2.0, 64)
    w = constant_weight(spec)
    one = GridFunction.constant(spec, 1.0)
    assert morrey_norm(one, 2.0, 1.0, w) == pytest.approx(4.0 ** 0.5)
    res = morrey_norm(one, 2.0, 1.0, w, detail=True)
    assert res.witness == Cube((0,), 64)
    assert morrey_norm(GridFunction.zeros(spec), 2.0, 1.0, w) == 0.0


def test_morrey_homogeneous_and_inf():
    rng = np.random.default_rng(0)
    spec = GridSpec(1, 2.0, 64)
    w = power_weight(0.3, spec)
    g = GridFunction(spec, rng.normal(size=64))
    for sp in (8 / 7, 2.0, math.inf):
        assert morrey_norm(g * -2.5, 2.0, sp, w) == pytest.approx(2.5 * morrey_norm(g, 2.0, sp, w))


def test_skips_zero_mass():
    from weightbench.weights import indicator_weight

    spec = GridSpec(1, 2.0, 32)
    res = morrey_norm(GridFunction.constant(spec, 1.0), 2.0, 2.0, indicator_weight(spec, 0.0, 2.0), detail=True)
    assert res.skipped > 0 and math.isfinite(res.value)


def _block_decomp(spec, w, blocks, p=2.0, s=8.0):
    d = BlockDecomposition(p, s, w, spec)
    for lam, b in blocks:
        d.add(lam, b)
    return d


def test_flat_block_constant_g():
    spec = GridSpec(1, 2.0, 128)
    w = power_weight(0.3, spec)
    Q = Cube((32,), 16)
    _, b = make_block(GridFunction(spec, Q.mask(spec) * 1.0), Q, 2.0, 8.0, w)
    rep = duality_pairing_check(_block_decomp(spec, w, [(1.0, b)]), GridFunction.constant(spec, 3.0))
    assert rep.ratio <= 1.0 + 1e-12
    rep0 = duality_pairing_check(_block_decomp(spec, w, [(1.0, b)]), GridFunction.zeros(spec))
    assert rep0.ratio == 0.0


def test_single_block_ratio_at_most_one():
    rng = np.random.default_rng(7)
    spec = GridSpec(1, 2.0, 128)
    w = power_weight(0.3, spec)
    worst = 0.0
    for _ in range(100):
        lev = int(rng.integers(1, 6))
        Q = Cube.dyadic(spec, lev, (int(rng.integers(2 ** lev)),))
        g = np.zeros(128)
        g[Q.slices(spec)] = rng.normal(size=int(Q.size))
        _, b = make_block(GridFunction(spec, g), Q, 2.0, 8.0, w)
        test = GridFunction(spec, rng.normal(size=128))
        worst = max(worst, duality_pairing_check(_block_decomp(spec, w, [(1.0, b)]), test).ratio)
    assert worst <= 1.0 + 1e-9


def test_gate_and_informational():
    spec = GridSpec(1, 2.0, 32)
    w = constant_weight(spec)
    Q = Cube((0,), 8)
    _, b = make_block(GridFunction(spec, Q.mask(spec) * 1.0), Q, 0.5, 8.0, w)
    d = _block_decomp(spec, w, [(1.0, b)], p=0.5)
    assert duality_pairing_check(d, GridFunction.constant(spec, 1.0)).informational
    d2 = _block_decomp(spec, w, [(1.0, b)], p=2.0, s=2.0)
    with pytest.raises(ValueError):
        duality_pairing_check(d2, GridFunction.constant(spec, 1.0))
    with pytest.raises(ValueError):
        duality_pairing_check(d, GridFunction.constant(GridSpec(1, 2.0, 64), 1.0))
