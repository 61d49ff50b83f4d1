"""Asymptotic probability and distribution functions of X_n.

``P(X_n = K + k)`` with ``K = floor(log_{1/p} n)`` is approximated by
``sum_{j>=0} R_j(p^{-eta+k-j})``, where ``eta`` is the fractional part of
``log_{1/p} n``, ``R_j(x) = Omega(x) e^{-px} A_j(qx)`` and ``A_j`` is the
Poisson transform of ``P(X_n = j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .errors import ParameterError, ToleranceError
from .exact import SplitParams, float_pmf_table
from .poisson import truncation_index

# R_j(x) <= e^{-px}; arguments with p x beyond this contribute < 1e-17
_PX_CUTOFF = 40.0
_DEFAULT_WIDTH = 64


def floor_log(n: int, params: SplitParams) -> int:
    """``floor(log_{1/p} n)`` by exact integer comparison ``b^K <= n a^K``."""
    if n < 1:
        raise ParameterError("n must be positive")
    a, b = params.a, params.b
    K = max(int(math.log(n) / params.log_inv_p) - 1, 0)
    while b ** (K + 1) <= n * a ** (K + 1):
        K += 1
    while K > 0 and b**K > n * a**K:
        K -= 1
    return K


def eta(n: int, params: SplitParams) -> float:
    """Fractional part of ``log_{1/p} n`` in ``[0, 1)``; exactly 0 at powers of ``1/p``."""
    K = floor_log(n, params)
    if params.b**K == n * params.a**K:
        return 0.0
    e = math.log(n) / params.log_inv_p - K
    return min(max(e, 0.0), math.nextafter(1.0, 0.0))


def log_omega(x: float, params: SplitParams) -> float:
    """``log Omega(x) = sum_j log(1 - e^{-p^{-j} x})``."""
    if x <= 0:
        raise ParameterError("Omega needs x > 0")
    total = []
    y = x
    r = 1.0 / params.float_p
    while True:
        e = math.exp(-y)
        total.append(math.log(-math.expm1(-y)) if y < 1 else math.log1p(-e))
        if e < 1e-300 or abs(total[-1]) < 1e-300:
            break
        y *= r
    return math.fsum(total)


def omega(x: float, params: SplitParams, reverse: bool = False) -> float:
    """``Omega(x) = prod_{j>=0} (1 - e^{-p^{-j} x})``.

    Factors are taken until ``e^{-p^{-j} x}`` drops below 1e-300; the
    neglected tail is then far below double resolution.  ``reverse``
    multiplies from the smallest factor index backwards (used as a
    reordering check).
    """
    if x <= 0:
        raise ParameterError("Omega needs x > 0")
    factors = []
    y = x
    r = 1.0 / params.float_p
    while True:
        e = math.exp(-y)
        factors.append(-math.expm1(-y))
        if e < 1e-300:
            break
        y *= r
    if reverse:
        factors.reverse()
    out = 1.0
    for f in factors:
        out *= f
    return out


class PoissonPmfTable:
    """Evaluates ``A_j(x)`` for all ``j < width`` at once from the PMF table of ``X_n``."""

    def __init__(self, params: SplitParams, x_max: float, width: int = _DEFAULT_WIDTH):
        self.params = params
        self.width = width
        self.x_max = x_max
        self.N = truncation_index(x_max) + 1
        self.table = float_pmf_table(params, self.N, width)
        self.cum = np.cumsum(self.table, axis=1)

    def weights(self, x: float) -> tuple[np.ndarray, float]:
        if x > self.x_max * (1 + 1e-12):
            raise ToleranceError(f"argument {x} beyond table range {self.x_max}")
        M = truncation_index(x)
        m = np.arange(M + 1)
        if x == 0:
            w = np.zeros(M + 1)
            w[0] = 1.0
            return w, 0.0
        w = np.exp(m * math.log(x) - x - special.gammaln(m + 1))
        return w, float(stats.poisson.sf(M, x))

    def A(self, x: float) -> tuple[np.ndarray, float]:
        """``(A_0(x), ..., A_{width-1}(x))`` and a bound on the truncation error."""
        w, tail = self.weights(x)
        return w @ self.table[: len(w)], tail + 1e-16

    def S(self, x: float) -> tuple[np.ndarray, float]:
        """Poisson transforms of the distribution functions ``P(X_n <= j)``."""
        w, tail = self.weights(x)
        return w @ self.cum[: len(w)], tail + 1e-16


@lru_cache(maxsize=16)
def _pmf_table(p, x_max: float, width: int) -> PoissonPmfTable:
    return PoissonPmfTable(SplitParams(p), x_max, width)


def _table_for(params: SplitParams, width: int) -> PoissonPmfTable:
    x_max = _PX_CUTOFF * params.float_q / params.float_p + 1.0
    return _pmf_table(params.p, x_max, max(width, _DEFAULT_WIDTH))


def hatR(j: int, x: float, params: SplitParams) -> float:
    """``R_j(x) = Omega(x) e^{-p x} A_j(q x)``."""
    if j < 0:
        raise ParameterError("j must be non-negative")
    if x <= 0:
        raise ParameterError("x must be positive")
    p, q = params.float_p, params.float_q
    if p * x > 745:
        return 0.0
    tab = _table_for(params, j + 2)
    if q * x > tab.x_max:
        tab = PoissonPmfTable(params, q * x, max(j + 2, _DEFAULT_WIDTH))
    A, _ = tab.A(q * x)
    return omega(x, params) * math.exp(-p * x) * float(A[j])


@dataclass(frozen=True)
class DensityApprox:
    """Approximate ``P(X_n = K + k)`` for offsets ``k`` (``K = floor(log_{1/p} n)``)."""

    n: int
    K: int
    eta: float
    terms: dict
    truncation_bound: float

    def total(self) -> float:
        return math.fsum(self.terms.values())

    def pmf(self) -> dict:
        """Keyed by the value ``K + k`` of ``X_n``."""
        return {self.K + k: v for k, v in self.terms.items()}


def _arguments(k: int, e: float, params: SplitParams):
    """``(j, p^{-eta+k-j})`` for ``j = 0, 1, ...`` while ``p x`` stays below the cutoff."""
    L = params.log_inv_p
    p = params.float_p
    j = 0
    while True:
        x = math.exp(L * (e - k + j))
        if p * x > _PX_CUTOFF:
            return
        yield j, x
        j += 1


def _offset_term(k: int, e: float, params: SplitParams, cumulative: bool) -> tuple[float, float]:
    p, q = params.float_p, params.float_q
    args = list(_arguments(k, e, params))
    if not args:
        return (0.0, math.exp(-p * math.exp(params.log_inv_p * (e - k))) * 2)
    tab = _table_for(params, args[-1][0] + 2)
    vals = []
    err = 0.0
    for j, x in args:
        A, t = tab.S(q * x) if cumulative else tab.A(q * x)
        f = omega(x, params) * math.exp(-p * x)
        vals.append(f * float(A[j]))
        err += f * t
    # terms past the cutoff: R_j(x) <= e^{-p x}, x growing by 1/p each step
    x_next = args[-1][1] / p
    err += 2 * math.exp(-p * x_next)
    return math.fsum(vals), err


def asympt_pmf(n: int, k: int, params: SplitParams) -> float:
    """``sum_j R_j(p^{-eta(n)+k-j})`` approximating ``P(X_n = floor(log_{1/p} n) + k)``."""
    if n < 2:
        raise ParameterError("the asymptotic density is used for n >= 2")
    return _offset_term(k, eta(n, params), params, False)[0]


def asympt_cdf(n: int, k: int, params: SplitParams) -> float:
    """``sum_j S_j(p^{-eta(n)+k-j})`` approximating ``P(X_n - floor(log_{1/p} n) <= k)``.

    ``S_j`` is the partial sum ``R_0 + ... + R_j``.
    """
    if n < 2:
        raise ParameterError("the asymptotic distribution is used for n >= 2")
    return _offset_term(k, eta(n, params), params, True)[0]


def offset_range(n: int, params: SplitParams, hi: int = 30) -> range:
    """Offsets ``k`` carrying non-negligible mass: from where ``p x`` first drops below the cutoff."""
    e = eta(n, params)
    lo = math.floor(e - math.log(_PX_CUTOFF / params.float_p) / params.log_inv_p)
    return range(lo, hi + 1)


def asympt_density(n: int, params: SplitParams, ks=None) -> DensityApprox:
    """The whole approximate distribution of ``X_n - floor(log_{1/p} n)``."""
    if n < 2:
        raise ParameterError("the asymptotic density is used for n >= 2")
    e = eta(n, params)
    ks = offset_range(n, params) if ks is None else ks
    terms = {}
    bound = 0.0
    for k in ks:
        v, err = _offset_term(k, e, params, False)
        terms[k] = v
        bound += err
    return DensityApprox(n, floor_log(n, params), e, terms, bound)


def id_density_sum(n: float, params: SplitParams, kmax: int | None = None) -> float:
    """``(1/Omega(n)) sum_{k>=0} sum_{0<=j<=k} R_j(p^{k-j} n)`` (identically 1)."""
    p = params.float_p
    if kmax is None:
        kmax = int(math.log(n / 1e-18) / params.log_inv_p) + 2
    total = []
    for k in range(kmax + 1):
        for j in range(k + 1):
            x = p ** (k - j) * n
            if p * x <= 745:
                total.append(hatR(j, x, params))
    return math.fsum(total) / omega(n, params)


def product_rep_pmf_half(params: SplitParams, x: float, factors: int | None = None) -> tuple[np.ndarray, float]:
    """Coefficients of ``prod_{j=1}^{J} (e^{-x/2^j} + u (1 - e^{-x/2^j}))``.

    Returns ``(coeffs, bound)``: ``coeffs[k]`` approximates ``A_k(x)`` at
    ``p = 1/2`` and ``bound`` covers the omitted factors ``j > J``
    (each coefficient moves by at most ``2 sum_{j>J} x/2^j``).
    """
    if not params.symmetric:
        raise ParameterError("the product representation holds for p = 1/2 only")
    if x < 0:
        raise ParameterError("x must be non-negative")
    if factors is None:
        factors = max(1, math.ceil(math.log2(max(x, 1.0) / 1e-18)))
    poly = np.zeros(factors + 1)
    poly[0] = 1.0
    for j in range(1, factors + 1):
        e = math.exp(-x / 2**j)
        new = poly * e
        new[1:] += poly[:-1] * (1 - e)
        poly = new
    return poly, 2 * x / 2**factors


def exp_Ak(k: int, z: float, params: SplitParams) -> float:
    """``A_k(z)`` from the explicit multiple sum over ``j_1..j_k >= 0``.

    Writing ``s_r = j_1 + ... + j_r`` the summand factorizes as
    ``e^{-z} prod_r h_r(s_r)`` with
    ``h_r(s) = e^{z p^{r-1} q^{s+1}} (1 - e^{-p^r q^s z})``, so the sum over
    non-decreasing ``s_1 <= ... <= s_k`` is a chain of prefix sums.  Independent
    of any PMF table; used as a cross-check oracle.
    """
    if k < 0:
        raise ParameterError("k must be non-negative")
    if z < 0 or z > 600:
        raise ParameterError("the multiple-sum oracle is evaluated for 0 <= z <= 600")
    if k == 0:
        return math.exp(-z)
    if z == 0:
        return 0.0
    p, q = params.float_p, params.float_q
    S = math.ceil(math.log(max(z, 1.0) * 1e18) / -math.log(q)) + 2
    s = np.arange(S + 1)
    qs = q**s
    G = np.exp(z * q * qs - z) * -np.expm1(-p * qs * z)
    for r in range(2, k + 1):
        h = np.exp(z * p ** (r - 1) * q * qs) * -np.expm1(-(p**r) * qs * z)
        G = h * np.cumsum(G)
    return float(np.sum(G))


__all__ = [
    "DensityApprox",
    "PoissonPmfTable",
    "asympt_cdf",
    "asympt_density",
    "asympt_pmf",
    "eta",
    "exp_Ak",
    "floor_log",
    "hatR",
    "id_density_sum",
    "log_omega",
    "offset_range",
    "omega",
    "product_rep_pmf_half",
]
