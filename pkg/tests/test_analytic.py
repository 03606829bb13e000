import math

import numpy as np
import pytest

from affine_perc.analytic import (
    analytic_report,
    crossing_upper_bound,
    dimensions,
    exact_level1_crossing,
    extinction_prob,
    full_row_prob,
    jfull_derivative,
    jfull_limit,
    jfull_map,
    jfull_sequence,
    level1_crossing_counts,
    tau_lower_bound,
)
from affine_perc.errors import DomainError, UnsupportedError
from oracles import brute_level1_counts


@pytest.mark.parametrize("p", [0.0, 0.05, 0.1, 1 / 6])
def test_subcritical_extinction_is_certain(p):
    t, s = extinction_prob(2, 3, p)
    assert abs(t - 1) < 1e-9 and s == pytest.approx(0.0, abs=1e-9)


def test_p_one_never_dies():
    assert extinction_prob(2, 3, 1.0) == (0.0, 1.0)


@pytest.mark.parametrize("n,m", [(2, 3), (3, 4), (2, 5)])
def test_extinction_fixed_point_and_minimality(n, m):
    prev = 1.0
    for p in np.linspace(0, 1, 41):
        t, s = extinction_prob(n, m, p)
        assert abs(t - (p * t + 1 - p) ** (n * m)) < 1e-10
        assert 0 <= t <= 1 and s == pytest.approx(1 - t)
        # no smaller root: the map g(x) - x is positive on [0, t)
        xs = np.linspace(0, t, 200, endpoint=False)
        assert np.all((p * xs + 1 - p) ** (n * m) - xs > -1e-12)
        assert t <= prev + 1e-12
        prev = t


def test_dimensions():
    assert dimensions(2, 3, 1.0) == (pytest.approx(2.0), 2.0)
    a = math.log(1 / 3 * 6) / math.log(2)
    b = math.log(1 / 3 * 9) / math.log(3)
    assert a == pytest.approx(1.0) and b == pytest.approx(1.0)
    assert dimensions(2, 3, 1 / 3)[0] == pytest.approx(1.0, abs=1e-12)
    d = dimensions(2, 3, 0.25)[0]
    assert d == pytest.approx(math.log(1.5) / math.log(2))
    assert math.log(0.25 * 9) / math.log(3) > d
    with pytest.raises(DomainError):
        dimensions(2, 3, 1 / 6)


def test_dimension_monotone():
    ps = np.linspace(1 / 12 + 1e-6, 1, 200)
    ds = [dimensions(3, 4, p)[0] for p in ps]
    assert np.all(np.diff(ds) >= -1e-12)
    assert all(0 <= d <= 2 for d in ds)


def test_jfull_map_values():
    assert jfull_map(3, 4, 0.7, 0.0) == 0.0
    assert jfull_map(3, 4, 1.0, 1.0) == pytest.approx(1.0)
    q = 0.9 * 0.8
    tail = sum(math.comb(12, k) * q ** k * (1 - q) ** (12 - k) for k in (11, 12))
    assert jfull_map(3, 4, 0.9, 0.8) == pytest.approx(tail, rel=1e-12)
    with pytest.raises(DomainError):
        jfull_map(3, 4, 0.9, 1.2)


def test_jfull_limit_trivial_and_subcritical():
    assert jfull_limit(3, 4, 1.0)[0] == pytest.approx(1.0)
    ts = np.linspace(1e-6, 1, 10_000)
    assert np.all(np.array([jfull_map(3, 4, 0.5, t) for t in ts]) < ts)
    assert jfull_limit(3, 4, 0.5)[0] == pytest.approx(0.0, abs=1e-12)


def test_jfull_sequence_monotone():
    for p in (0.9, 0.99, 0.997, 1.0):
        seq = [1.0] + jfull_sequence(3, 4, p, 200)
        assert np.all(np.diff(seq) <= 1e-15)
        assert all(0 <= x <= 1 for x in seq)


def test_jfull_refuses_n_two():
    with pytest.raises(UnsupportedError):
        jfull_limit(2, 3, 0.9)
    with pytest.raises(UnsupportedError):
        crossing_upper_bound(2, 5)


def test_threshold_and_stability():
    # tangency threshold located independently by bisection on max_t (f(t) - t)
    ts = np.linspace(0.5, 1, 20001)

    def touches(p):
        return np.max(np.array([jfull_map(3, 4, p, t) for t in ts]) - ts) >= 0

    lo, hi = 0.9, 1.0
    for _ in range(40):
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if touches(mid) else (mid, hi)
    p_star = hi
    pa = crossing_upper_bound(3, 4, 1e-9)
    assert abs(pa - p_star) < 1e-6
    lim, _ = jfull_limit(3, 4, pa + 1e-5)
    assert lim > 0
    assert jfull_derivative(3, 4, pa + 1e-5, lim) < 1


def test_crossing_upper_bound_contract():
    tol = 1e-7
    pa = crossing_upper_bound(3, 4, tol)
    assert pa < 1
    assert jfull_limit(3, 4, pa)[0] > 0
    assert jfull_limit(3, 4, pa - 2 * tol)[0] == pytest.approx(0.0, abs=1e-9)


def test_full_row_prob():
    assert full_row_prob(2, 3, 1.0, 4, 0) == 1.0
    assert full_row_prob(2, 3, 0.5, 1, 0) == 0.578125
    assert full_row_prob(2, 3, 0.5, 1, 0) == 1 - (1 - 0.5 ** 2) ** 3
    vals = [full_row_prob(2, 3, 0.5, q, 0) for q in range(1, 12)]
    assert np.all(np.diff(vals) < 0)
    assert 0 < full_row_prob(2, 3, 0.5, 9, 0) < 1e-100  # survives far below float underflow of naive forms
    assert full_row_prob(3, 4, 0.9, 3, 1) == pytest.approx(1 - (1 - 0.9 ** 9) ** 64)
    with pytest.raises(DomainError):
        full_row_prob(2, 3, 0.5, 1, 2)


@pytest.mark.parametrize("n,m,p", [(2, 3, 0.3), (2, 3, 0.9), (3, 4, 0.99), (2, 5, 0.7)])
def test_full_row_prob_eventually_decreases_to_zero(n, m, p):
    vals = np.array([full_row_prob(n, m, p, q, 0) for q in range(0, 16)])
    peak = len(vals) - 1 - int(np.argmax(vals[::-1]))  # last maximum; values may round to 1.0
    tail = vals[peak:]
    assert np.all(np.diff(tail[tail > 0]) < 0)
    assert vals[-1] < 1e-6


def test_tau_bounds():
    h, v = tau_lower_bound(2, 3)
    assert h == pytest.approx(1 / 144)
    assert v == pytest.approx(8 ** -1.5)
    for n in range(2, 6):
        prev = 1.0
        for m in range(n + 1, n + 8):
            h, v = tau_lower_bound(n, m)
            assert 0 < h < 1 and 0 < v < 1
            assert h < prev
            prev = h


def test_level1_counts_two_by_two_by_hand():
    # in a 2x2 grid every pair of cells touches, so H-crossing <=> both columns occupied
    assert level1_crossing_counts(2, 2, "H") == (0, 0, 4, 4, 1)
    p = 0.37
    assert exact_level1_crossing(2, 2, p, "H") == pytest.approx((1 - (1 - p) ** 2) ** 2)


@pytest.mark.parametrize("n,m", [(2, 3), (3, 3), (2, 4), (3, 4)])
@pytest.mark.parametrize("d", ["H", "V"])
@pytest.mark.parametrize("adj", ["corner", "edge"])
def test_level1_counts_match_brute_force(n, m, d, adj):
    assert list(level1_crossing_counts(n, m, d, adj)) == brute_level1_counts(n, m, d, adj == "corner")


def test_level1_endpoints():
    for d in "HV":
        assert exact_level1_crossing(3, 4, 1.0, d) == 1.0
        assert exact_level1_crossing(3, 4, 0.0, d) == 0.0
    with pytest.raises(DomainError):
        exact_level1_crossing(5, 6, 0.5)


def test_report_fields():
    r = analytic_report(3, 4, 0.9, tol=1e-6).to_dict()
    assert list(r) == ["n", "m", "p", "extinction_t", "survival", "dim_hb", "dim_assouad",
                       "jfull_limit", "p_A", "tau_h_bound", "tau_v_bound"]
    assert r["dim_assouad"] == 2.0 and 0 < r["p_A"] < 1
    r2 = analytic_report(2, 3, 0.1)
    assert r2.p_A is None and r2.dim_hb is None and r2.extinction_t == 1.0
