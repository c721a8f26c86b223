import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weightbench.grid import Cube, CubeFamily, DomainError, GridFunction, GridSpec, translate_family
from weightbench.weights import (
    Weight,
    ap_constant,
    aplus_constant,
    aplus_ratio,
    class_p_check,
    constant_weight,
    critical_index,
    doubling_constant,
    indicator_weight,
    parse_weight,
    power_weight,
    reverse_holder_constant,
)


def test_weight_validation():
    spec = GridSpec(1, 1.0, 8)
    with pytest.raises(ValueError):
        Weight(GridFunction(spec, -np.ones(8)))
    with pytest.raises(ValueError):
        Weight(GridFunction.zeros(spec))


def test_aplus_exact_constant_weight():
    w = constant_weight(GridSpec(1, 1.0, 64))
    assert aplus_constant(w, 1.0).value() == 1.0
    fam = CubeFamily.of([Cube((0,), 16)])
    assert aplus_constant(w, 0.5, fam).value() == 4.0
    rep = aplus_constant(w, 2.0, fam)
    assert rep.value() == 1.0 and rep.witness()["k"] == 16


def _brute_aplus(vals, q):
    K = len(vals)
    tot = vals.sum()
    best = -math.inf
    for k in range(1, K + 1):
        for E in itertools.combinations(range(K), k):
            part = vals[list(E)].sum()
            best = max(best, math.inf if part == 0 else (k / K) ** q * tot / part)
    return best


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 1.5, 3.0]), st.sampled_from([4, 8]))
def test_greedy_equals_bruteforce(seed, q, K):
    rng = np.random.default_rng(seed)
    spec = GridSpec(1, 1.0, K)
    vals = rng.exponential(size=K)
    w = Weight(GridFunction(spec, vals))
    fam = CubeFamily.of([Cube((0,), K)])
    assert aplus_constant(w, q, fam).value() == pytest.approx(_brute_aplus(vals, q), rel=1e-12)


def test_aplus_ratio_matches_constant():
    spec = GridSpec(1, 1.0, 8)
    w = Weight(GridFunction(spec, np.arange(1.0, 9.0)))
    Q = Cube((0,), 8)
    rep = aplus_constant(w, 1.5, CubeFamily.of([Q]))
    assert aplus_ratio(w, Q, rep.witness()["k"], 1.5) == pytest.approx(rep.value())


def test_aplus_power_weight_finite_and_bounded():
    w = power_weight(0.3, GridSpec(1, 2.0, 256))
    v = aplus_constant(w, 1.5).value()
    assert 1.0 <= v < 10.0
    assert aplus_constant(w, 1.0).value() >= 1.0


def test_aplus_zero_weight_infinite():
    w = indicator_weight(GridSpec(1, 1.0, 16), -1.0, 0.0)
    rep = aplus_constant(w, 1.0)
    assert math.isinf(rep.value()) and rep.witness() is not None


def test_ap_constant_weight_and_power():
    assert ap_constant(constant_weight(GridSpec(1, 1.0, 64)), 2.0).value() == pytest.approx(1.0)
    spec = GridSpec(1, 1.0, 1024)
    w = power_weight(0.5, spec)
    assert math.isfinite(ap_constant(w, 2.0).value())
    # 0.5 > p - 1 = 0.2: the estimate diverges with resolution
    coarse = ap_constant(power_weight(0.5, GridSpec(1, 1.0, 128)), 1.2).value()
    fine = ap_constant(w, 1.2).value()
    assert fine > 1.2 * coarse


def test_ap_zero_region_infinite():
    w = indicator_weight(GridSpec(1, 1.0, 16), -1.0, 0.0)
    rep = ap_constant(w, 2.0)
    assert math.isinf(rep.value())
    Q = rep.witness()["cube"]
    assert Q.start[0] < 8 < Q.start[0] + Q.size


def test_doubling():
    w = constant_weight(GridSpec(1, 1.0, 64))
    assert doubling_constant(w, 1.0, (2.0, 4.0)).value() == pytest.approx(1.0)
    assert doubling_constant(w, 0.5).value() == pytest.approx(2 ** 0.5)
    spec = GridSpec(1, 1.0, 256)
    w = power_weight(0.5, spec)
    fam = CubeFamily.of([Cube((128 - m,), 2 * m) for m in (2, 4, 8, 16, 32)])
    rep = doubling_constant(w, 1.0, (2.0,), fam)
    # midpoint samples away from the origin cell: agreement to quadrature accuracy
    assert rep.value() == pytest.approx(2 ** 1.5 / 2, rel=1e-3)


def test_doubling_counts_skipped():
    w = constant_weight(GridSpec(1, 1.0, 16))
    rep = doubling_constant(w, 1.0)
    assert rep.skipped[("doubling", 1.0)] > 0


def test_reverse_holder():
    assert reverse_holder_constant(constant_weight(GridSpec(1, 1.0, 32)), 3.0).value() == pytest.approx(1.0)
    spec = GridSpec(1, 1.0, 4)
    w = Weight(GridFunction(spec, np.array([2.0, 0.0, 1.0, 1.0])))
    rep = reverse_holder_constant(w, 2.0, CubeFamily.of([Cube((0,), 2)]))
    assert rep.value() == pytest.approx(2 ** 0.5)


def test_reverse_holder_monotone_in_r():
    w = power_weight(-0.4, GridSpec(1, 1.0, 128))
    vals = [reverse_holder_constant(w, r).value() for r in (1.5, 2.0, 3.0, 4.0)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_critical_index():
    assert math.isinf(critical_index(constant_weight(GridSpec(1, 1.0, 256))))
    r = critical_index(power_weight(-0.5, GridSpec(1, 1.0, 1024)))
    assert 1.0 < r <= 2.0
    bounded = indicator_weight(GridSpec(1, 1.0, 256), -1.0, 0.0, inside=2.0, outside=1.0)
    assert math.isinf(critical_index(bounded))


def test_class_p():
    assert class_p_check(constant_weight(GridSpec(1, 1.0, 16)), 0.5)
    res = class_p_check(indicator_weight(GridSpec(1, 1.0, 16), -1.0, 0.0), 0.5)
    assert not res
    spec = GridSpec(1, 1.0, 16)
    assert Cube((12,), 4) in res.witnesses
    assert class_p_check(power_weight(-0.5, spec), 0.25)
    with pytest.raises(DomainError):
        class_p_check(constant_weight(spec), 0.3)


def test_power_weight_samples():
    spec = GridSpec(1, 2.0, 32)
    assert np.allclose(power_weight(0.0, spec).samples, 1.0)
    w = power_weight(1.0, spec)
    x = spec.midpoints()
    i = int(np.argmin(abs(x - (0.5 + spec.h / 2))))
    assert w.samples[i] == pytest.approx(0.5 + spec.h / 2)
    w = power_weight(-0.5, spec)
    i0 = spec.N // 2  # cell [0, h]
    assert w.samples[i0] == pytest.approx(2 * spec.h ** -0.5)


def test_power_weight_2d_origin_average():
    spec = GridSpec(2, 1.0, 16)
    w = power_weight(1.0, spec)
    # mean of |x| over [0,h]^2 is h (sqrt(2) + asinh(1)) / 3
    expect = spec.h * (math.sqrt(2) + math.asinh(1)) / 3
    assert w.samples[8, 8] == pytest.approx(expect, rel=1e-10)


def test_parse_weight(tmp_path):
    from weightbench.grid import save_function

    spec = GridSpec(1, 1.0, 16)
    assert np.allclose(parse_weight("builtin:const:2", spec).samples, 2.0)
    assert parse_weight("builtin:power:0.3", spec).samples.min() > 0
    path = tmp_path / "w.csv"
    save_function(GridFunction.constant(spec, 3.0), path)
    assert parse_weight(str(path), spec).samples[0] == 3.0
    with pytest.raises(ValueError):
        parse_weight("builtin:nope", spec)


def test_report_json():
    spec = GridSpec(1, 1.0, 16)
    rep = aplus_constant(indicator_weight(spec, -1.0, 0.0), 1.0)
    js = rep.to_json(spec)
    assert js["constants"]["aplus:1.0"] == "inf"
    assert "cube" in js["witnesses"]["aplus:1.0"]
