import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binsplit.depoisson import charlier_tau, depoissonize
from binsplit.errors import ParameterError, ToleranceError
from binsplit.exact import SplitParams, float_moments
from binsplit.poisson import PoissonizedFunction, poissonized_eval, poissonized_mean

HALF = SplitParams(Fraction(1, 2))
THIRD = SplitParams(Fraction(1, 3))


def half_f1(x):
    # p = 1/2: the Poisson transform of the mean is sum_{k>=1} (1 - e^{-x/2^k})
    return math.fsum(-math.expm1(-x / 2**k) for k in range(1, 90))


@pytest.mark.parametrize("x", [0.5, 3.0, 40.0, 250.0])
def test_mean_transform_closed_form(x):
    v = poissonized_eval("f1", HALF, x)
    assert abs(v.value - half_f1(x)) <= v.error_bound + 1e-13
    assert v.error_bound < 1e-10


def test_polynomial_sequences():
    # coefficients 1, n, n^2 transform to 1, z, z^2 + z
    n = np.arange(400, dtype=float)
    for coeffs, f in ((np.ones(400), lambda z: 1.0), (n, lambda z: z), (n * n, lambda z: z * z + z)):
        P = PoissonizedFunction(coeffs, (1.0, 1.0, 1.0))
        for z in (0.0, 1.0, 20.0, 150.0):
            v = P.evaluate(z, tol=1e-8)
            assert abs(v.value - f(z)) <= v.error_bound + 1e-12 * max(1, f(z))
        assert abs(P.evaluate(2 + 1j).value - f(2 + 1j)) < 1e-10


def test_table_too_short():
    P = PoissonizedFunction(np.ones(10))
    with pytest.raises(ToleranceError):
        P.evaluate(50.0)


def test_variance_transform_is_bounded():
    for x in (10.0, 100.0, 300.0):
        v = poissonized_eval("V", THIRD, x, tol=1e-8)
        assert 0 < v.value < 1


def test_pmf_transforms_sum_to_one():
    x = 30.0
    total = math.fsum(poissonized_eval("A", THIRD, x, k=k).value for k in range(40))
    assert abs(total - 1) < 1e-12
    assert abs(poissonized_eval("S_39", THIRD, x).value - 1) < 1e-12


def test_bad_kind():
    with pytest.raises(ParameterError):
        poissonized_eval("mean", THIRD, 1.0)


def charlier_oracle(j, n):
    # n! [z^n] (z - n)^j e^z with exact polynomial arithmetic
    poly = [Fraction(1)]
    for _ in range(j):
        new = [Fraction(0)] * (len(poly) + 1)
        for i, c in enumerate(poly):
            new[i + 1] += c
            new[i] -= n * c
        poly = new
    return math.factorial(n) * sum(c / math.factorial(n - i) for i, c in enumerate(poly) if i <= n)


def test_charlier_frozen():
    assert [charlier_tau(j, 10) for j in range(5)] == [1, 0, -10, 20, 240]


@settings(max_examples=40, deadline=None)
@given(j=st.integers(0, 8), n=st.integers(0, 15))
def test_charlier_against_oracle(j, n):
    assert charlier_tau(j, n) == charlier_oracle(j, n)


def test_depoissonization_improves_with_order():
    mu, _ = float_moments(HALF, 512)
    f = poissonized_mean(HALF, 600.0)
    errs = [abs(depoissonize(f, 512, order).value - mu[512]) for order in (1, 2, 3)]
    assert errs[0] < 0.01
    assert errs[1] < errs[0] and errs[2] < errs[1]


def test_depoissonize_exact_for_linear_sequences():
    # a_n = 3n + 2 has f(z) = 3z + 2, and order 1 is already exact
    coeffs = [3 * n + 2 for n in range(200)]
    assert abs(depoissonize(coeffs, 50, 1).value - 152) < 1e-9


def test_depoissonize_arguments():
    with pytest.raises(ParameterError):
        depoissonize([1.0] * 10, 5, order=0)
