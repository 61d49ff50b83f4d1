import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binsplit.errors import ParameterError, ResourceLimitError
from binsplit.exact import (
    ExactPmf,
    SplitParams,
    exact_pgf_Y,
    exact_pmf_W,
    exact_pmf_X,
    exact_pmf_Z,
    float_moments,
    float_pmf_table,
    float_split_weights,
    moment_table,
    parse_rational,
    split_pmf,
)


def brute_x_law(p: Fraction, n: int) -> dict:
    """Independent oracle: the splitting recurrence written out on Fractions."""
    q = 1 - p
    laws = [{0: Fraction(1)}]
    for size in range(1, n + 1):
        row = {}
        norm = 1 - q**size
        for k in range(size):
            w = math.comb(size, k) * (p**k * q ** (size - k) - p**k * (q - p) ** (size - k)) / norm
            for j, v in laws[k].items():
                row[j + 1] = row.get(j + 1, 0) + w * v
        laws.append({j: v for j, v in row.items() if v})
    return laws[n]


# frozen from brute_x_law
X_1_3_N5 = {
    1: Fraction(31, 211),
    2: Fraction(31914, 52117),
    3: Fraction(59466, 260585),
    4: Fraction(648, 52117),
    5: Fraction(24, 260585),
}


def test_parse_rational():
    assert parse_rational("1/3") == Fraction(1, 3)
    assert parse_rational(" 4/8 ") == Fraction(1, 2)
    for bad in ("0.25", "one third", "1/0", "1/2/3"):
        with pytest.raises(ParameterError):
            parse_rational(bad)


@pytest.mark.parametrize("p", ["0", "1", "3/5", "-1/2"])
def test_rejects_bad_p(p):
    with pytest.raises(ParameterError):
        SplitParams(parse_rational(p))


def test_params_fields():
    P = SplitParams(Fraction(2, 5))
    assert (P.a, P.b, P.q) == (2, 5, Fraction(3, 5))
    assert P.m is None and SplitParams(Fraction(1, 4)).m == 3
    assert math.isclose(P.log_inv_p, math.log(2.5))
    assert str(P) == "2/5"


def test_small_law_n2():
    law = exact_pmf_X(SplitParams(Fraction(1, 3)), 2)
    assert law.probs == {1: Fraction(3, 5), 2: Fraction(2, 5)}


def test_against_brute_force_oracle():
    P = SplitParams(Fraction(1, 3))
    law = exact_pmf_X(P, 5)
    assert {k: law[k] for k in range(1, 6)} == X_1_3_N5
    for p in (Fraction(1, 2), Fraction(2, 7)):
        for n in (1, 7, 12):
            assert exact_pmf_X(SplitParams(p), n).probs == brute_x_law(p, n)


def test_split_weights_sum_to_one():
    P = SplitParams(Fraction(1, 3))
    for n in range(1, 30):
        w = split_pmf(P, n)
        assert sum(w) == 1 and all(x >= 0 for x in w)
        assert np.allclose(float_split_weights(P, n), [float(x) for x in w], rtol=1e-13, atol=1e-300)


def test_half_mean_closed_form():
    # p = 1/2: E X_n = sum_{k>=1} (1 - (1 - 2^-k)^n)
    P = SplitParams(Fraction(1, 2))
    mu, _ = float_moments(P, 200)
    for n in (1, 2, 10, 200):
        ref = math.fsum(1 - (1 - 2.0**-k) ** n for k in range(1, 200))
        assert abs(mu[n] - ref) < 1e-12
    assert exact_pmf_X(P, 2).mean() == Fraction(5, 3)


def test_convolution_moments_by_hand():
    # mu_0 = 0, mu_1 = 1, so mu_2^[2] = C(2,1) mu_1^2 = 2 and mu_2^[11] = 2 p q
    for p in (Fraction(1, 2), Fraction(1, 3)):
        tab = moment_table(SplitParams(p), 4)
        assert tab.mu2conv[2] == 2
        assert tab.mu11conv[2] == 2 * p * (1 - p)
        n = 4
        assert tab.mu2conv[n] == sum(math.comb(n, k) * tab.mu[k] * tab.mu[n - k] for k in range(n + 1))


def test_float_path_matches_exact():
    P = SplitParams(Fraction(1, 3))
    T = float_pmf_table(P, 120, 40)
    mu, m2 = float_moments(P, 120)
    law = exact_pmf_X(P, 120)
    for k in range(40):
        assert abs(T[120, k] - float(law[k])) < 1e-14
    assert abs(mu[120] - float(law.mean())) < 1e-12
    assert abs(m2[120] - float(law.second_moment())) < 1e-11


def test_moment_table_exact_prefix():
    P = SplitParams(Fraction(1, 4))
    tab = moment_table(P, 60, exact_upto=20)
    assert tab.mu[20] == exact_pmf_X(P, 20).mean()
    assert abs(tab.mu_f[60] - float_moments(P, 60)[0][60]) < 1e-12


def test_exact_ceiling():
    with pytest.raises(ResourceLimitError):
        exact_pmf_X(SplitParams(Fraction(1, 3)), 300)


def test_model_equivalences_small():
    for m in (1, 2, 3):
        for n in range(12):
            assert exact_pgf_Y(m, n).probs == exact_pmf_X(SplitParams(Fraction(1, m + 1)), n).probs
    half = SplitParams(Fraction(1, 2))
    for n in range(12):
        assert exact_pmf_Z(half.with_model("Z"), n + 1).probs == exact_pmf_X(half, n).probs
        assert exact_pmf_W(half.with_model("W"), n).probs == exact_pmf_X(half, n).probs


def test_z_and_w_accept_large_p():
    P = SplitParams(Fraction(2, 3), "W")
    assert sum(exact_pmf_W(P, 8).probs.values()) == 1
    assert sum(exact_pmf_Z(P.with_model("Z"), 8).probs.values()) == 1


def test_json_roundtrip():
    law = exact_pmf_X(SplitParams(Fraction(1, 3)), 6)
    d = json.loads(law.to_json())
    assert ExactPmf.from_json_dict(d) == law


def test_pmf_validation():
    with pytest.raises(ValueError):
        ExactPmf(2, {1: Fraction(1, 2)})


@settings(max_examples=30, deadline=None)
@given(
    a=st.integers(1, 5),
    extra=st.integers(0, 6),
    n=st.integers(0, 14),
)
def test_law_properties(a, extra, n):
    p = Fraction(a, 2 * a + extra)
    law = exact_pmf_X(SplitParams(p), n)
    assert sum(law.probs.values()) == 1
    if n >= 1:
        assert min(law.support) >= 1 and max(law.support) <= n
        assert law.cdf(n) == 1
    assert law.variance() >= 0


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 40))
def test_mean_monotone_in_n(n):
    mu, _ = float_moments(SplitParams(Fraction(1, 3)), 41)
    assert mu[n + 1] >= mu[n] - 1e-14
