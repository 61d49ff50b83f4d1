"""Asymptotic mean and variance of X_n: Mellin-side constants and Fourier series.

The mean behaves like ``log_{1/p} n + C + Q(log_{1/p} n)`` and the variance
like ``Q_V(log_{1/p} n)``, with ``Q`` and ``Q_V`` one-periodic.  Their Fourier
coefficients come from ``phi*(chi_k)`` and ``phi_V*(chi_k)``, which are
evaluated by moment series and, independently, by Mellin quadrature of the
Poissonized integrands.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FormulaMismatchWarning, InsufficientMomentsError, ParameterError
from .exact import MomentTable, SplitParams, float_moments, moment_table
from .poisson import PoissonizedFunction, truncation_index
from .special import MellinIntegrand, QuadratureResult, cpow, gamma, mellin_quadrature

EULER_GAMMA = 0.57721566490153286061
DEFAULT_K = 10
DEFAULT_J_CAP = 400
SERIES_TOL = 1e-15


def chi(k: int, params: SplitParams) -> complex:
    """``2 k pi i / log(1/p)``."""
    return complex(0.0, 2 * k * math.pi / params.log_inv_p)


@dataclass(frozen=True)
class SeriesValue:
    """A series sum with a certified bound on the neglected tail."""

    value: complex
    tail_bound: float
    terms: int
    route: str = "series"

    def __complex__(self) -> complex:
        return complex(self.value)


def _gamma_over_factorial(s: complex, J: int) -> np.ndarray:
    """``r[j] = Gamma(s + j) / j!`` for ``j = 1..J`` (``r[0]`` unused)."""
    r = np.zeros(J + 1, dtype=complex)
    if J == 0:
        return r
    r[1] = gamma(s + 1)
    for j in range(1, J):
        r[j + 1] = r[j] * (j + s) / (j + 1)
    return r


def _sum_jx_tail(x: float, J: int, power: int = 1) -> float:
    """``sum_{j > J} j^power x^j`` for ``0 <= x < 1`` and ``power`` in {0, 1}."""
    if x <= 0:
        return 0.0
    if power == 0:
        return x ** (J + 1) / (1 - x)
    return x ** (J + 1) * ((J + 1) - J * x) / (1 - x) ** 2


def _phi_tail(params: SplitParams, J: int, sigma: float = 0.0) -> float:
    # |Gamma(s+j)|/j! <= Gamma(sigma+j)/j! and mu_j <= j
    q = params.float_q
    p = params.float_p
    if sigma == 0:
        return _sum_jx_tail(q, J, 0) + _sum_jx_tail(0.5, J, 0)
    total = 0.0
    for j in range(J + 1, J + 4001):
        g = math.exp(math.lgamma(sigma + j) - math.lgamma(j + 1)) * j
        term = g * (q**j * p**sigma + 2.0 ** (-j - sigma))
        total += term
        if term < 1e-30 * max(total, 1e-300):
            break
    return total


def _phiV_tail(params: SplitParams, J: int) -> float:
    # E X_j^2 <= j^2, mu^[2]_j <= 2^j j^2, mu_j <= j, mu^[11]_j <= j^2; |Gamma(j+chi)|/j! <= 1/j
    p, q = params.float_p, params.float_q
    t = _sum_jx_tail(q, J) + _sum_jx_tail(0.5, J)
    t += 2 * _sum_jx_tail(2 / 3, J) + _sum_jx_tail(0.5, J) + _sum_jx_tail(q, J)
    t += 2 * (_sum_jx_tail(0.5, J, 0) + _sum_jx_tail(1 / 3, J, 0) + 2 * _sum_jx_tail(q, J, 0))
    t += 2 * (_sum_jx_tail(1 / (1 + p), J) + _sum_jx_tail(1 / (1 + 2 * p), J))
    return t


def _choose_J(tail, J: int | None, cap: int, tol: float) -> int:
    if J is not None:
        return J
    for j in range(1, cap + 1):
        if tail(j) <= tol:
            return j
    raise InsufficientMomentsError(f"series tail stays above {tol:g} up to the cap J={cap}")


def _moments_for(params: SplitParams, moments: MomentTable | None, J: int) -> MomentTable:
    if moments is None:
        return moment_table(params, J)
    if moments.params.p != params.p:
        raise ParameterError("moment table was built for a different p")
    if moments.max_n < J or len(moments.mu2conv) <= J:
        raise InsufficientMomentsError(f"series needs moments up to j={J}, table has {moments.max_n}")
    return moments


def phi_star(
    k: int,
    params: SplitParams,
    moments: MomentTable | None = None,
    J: int | None = None,
    tol: float = SERIES_TOL,
    cap: int = DEFAULT_J_CAP,
) -> SeriesValue:
    """``phi*(chi_k) = sum_j mu_j/j! Gamma(j + chi_k) (q^j - 2^{-j-chi_k})``."""
    return phi_star_at(chi(k, params), params, moments, J, tol, cap)


def phi_star_at(
    s,
    params: SplitParams,
    moments: MomentTable | None = None,
    J: int | None = None,
    tol: float = SERIES_TOL,
    cap: int = DEFAULT_J_CAP,
) -> SeriesValue:
    """``phi*(s)`` for ``Re s > -1`` by its moment series.

    Away from the points ``chi_k`` the ``q^j`` part carries the factor
    ``p^s`` coming from the rescaled argument ``q t / p``.
    """
    s = complex(s)
    if s.real <= -1:
        raise ParameterError("phi* is defined for Re s > -1")
    sigma = s.real
    J = _choose_J(lambda j: _phi_tail(params, j, sigma), J, cap, tol)
    mt = _moments_for(params, moments, J)
    mu = mt.mu_f[: J + 1]
    r = _gamma_over_factorial(s, J)
    j = np.arange(J + 1)
    q = params.float_q
    ps = cpow(params.float_p, s)
    c2 = cpow(2.0, -s)
    terms = mu[1:] * r[1:] * (q ** j[1:] * ps - 0.5 ** j[1:] * c2)
    value = complex(math.fsum(terms.real), math.fsum(terms.imag))
    return SeriesValue(value, _phi_tail(params, J, sigma), J)


def phiV_star_series(
    k: int,
    params: SplitParams,
    moments: MomentTable | None = None,
    J: int | None = None,
    tol: float = SERIES_TOL,
    cap: int = DEFAULT_J_CAP,
) -> SeriesValue:
    """Four-sum moment series for ``phi_V*(chi_k)``.

    At ``k = 0`` the isolated term ``Gamma(s)(1 - 2^{-s})`` is replaced by its
    limit ``log 2``.
    """
    s = chi(k, params)
    J = _choose_J(lambda j: _phiV_tail(params, j), J, cap, tol)
    mt = _moments_for(params, moments, J)
    p, q = params.float_p, params.float_q
    r = _gamma_over_factorial(s, J)[1:]
    j = np.arange(1, J + 1, dtype=float)
    m2 = mt.m2_f[1 : J + 1]
    mu = mt.mu_f[1 : J + 1]
    mu2 = mt.mu2conv_f[1 : J + 1]
    mu11 = mt.mu11conv_f[1 : J + 1]

    def pw(base):
        # base^{-j - s}
        return base**-j * cpow(base, -s)

    qj = q**j
    a2, a3, a4 = pw(2.0), pw(3.0), pw(4.0)
    a1p, a12p = pw(1 + p), pw(1 + 2 * p)
    terms = m2 * r * (qj - a2)
    terms = np.concatenate([terms, mu2 * r * (2 * a3 - a4 - qj * a2)])
    terms = np.concatenate([terms, 2 * mu * r * (a2 - a3 - qj + qj * a1p)])
    terms = np.concatenate([terms, -2 * mu11 * r * (a1p - a12p)])
    iso = math.log(2.0) if k == 0 else gamma(s) * (1 - cpow(2.0, -s))
    value = complex(math.fsum(terms.real), math.fsum(terms.imag)) + iso
    return SeriesValue(value, _phiV_tail(params, J), J)


# ---------------------------------------------------------------------------
# quadrature side


def _poissonized_tables(params: SplitParams, x_max: float):
    N = truncation_index(x_max) + 1
    mu, m2 = float_moments(params, N)
    return PoissonizedFunction(mu, (0, 1, 0), "f1"), PoissonizedFunction(m2, (0, 0, 1), "f2")


def _quad_range(s: complex, params: SplitParams) -> float:
    T = max(50.0, abs(s) + 50.0)
    return 1.5 * T * max(1.0, params.float_q / params.float_p)


def phi_integrand(params: SplitParams, x_max: float) -> MellinIntegrand:
    """``t -> f1(q t / p) - f1(t)`` with its small-``t`` and growth constants."""
    f1, _ = _poissonized_tables(params, x_max)
    r = params.float_q / params.float_p

    def g(t):
        return f1(r * t) - f1(t)

    return MellinIntegrand(g, small_const=r, growth_const=2 + math.log(r) / params.log_inv_p)


def phiV_integrand(params: SplitParams, x_max: float) -> MellinIntegrand:
    """Integrand of ``phi_V*``: ``V(q t/p) - V(t) + (1 - e^{-t}) (1 + f1(t) - f1(q t/p))^2``."""
    f1, f2 = _poissonized_tables(params, x_max)
    r = params.float_q / params.float_p

    def V(t):
        a = f1(t)
        return f2(t) - a * a

    def g(t):
        d = 1 + f1(t) - f1(r * t)
        return V(r * t) - V(t) - math.expm1(-t) * d * d

    return MellinIntegrand(g, small_const=2 * r + 2, growth_const=10.0)


def phi_star_quadrature(k: int, params: SplitParams, tol: float = 1e-11) -> QuadratureResult:
    s = chi(k, params)
    return mellin_quadrature(phi_integrand(params, _quad_range(s, params)), s, tol)


def phiV_star_quadrature(k: int, params: SplitParams, tol: float = 1e-9) -> QuadratureResult:
    s = chi(k, params)
    return mellin_quadrature(phiV_integrand(params, _quad_range(s, params)), s, tol)


def phiV_star(
    k: int,
    params: SplitParams,
    moments: MomentTable | None = None,
    J: int | None = None,
    check: bool = False,
    check_tol: float = 1e-7,
) -> SeriesValue:
    """``phi_V*(chi_k)``; with ``check`` the series is adjudicated by quadrature.

    On disagreement beyond ``check_tol`` a :class:`FormulaMismatchWarning` is
    issued and the quadrature value is returned (``route == "quadrature"``).
    """
    ser = phiV_star_series(k, params, moments, J)
    if not check:
        return ser
    quad = phiV_star_quadrature(k, params)
    gap = abs(ser.value - quad.value)
    if gap > check_tol + ser.tail_bound + quad.error_estimate:
        warnings.warn(
            f"phi_V* series and quadrature disagree at p={params}, k={k}: |diff|={gap:.3g}",
            FormulaMismatchWarning,
            stacklevel=2,
        )
        return SeriesValue(quad.value, quad.error_estimate, quad.evaluations, "quadrature")
    return ser


# ---------------------------------------------------------------------------
# Fourier series


@dataclass(frozen=True)
class FourierSeries:
    """``sum_k c_k e^{-2 k pi i u}`` over the stored indices.

    ``truncation_bound`` estimates ``sum |c_k|`` over the omitted indices.
    """

    coefficients: dict
    kind: str = "Q"
    truncation_bound: float = 0.0

    def __post_init__(self):
        if self.kind not in ("Q", "Q_V"):
            raise ParameterError(f"unknown Fourier series kind {self.kind!r}")
        if self.kind == "Q" and 0 in self.coefficients:
            raise ParameterError("the Q series has no k = 0 term")

    @property
    def K(self) -> int:
        return max((abs(k) for k in self.coefficients), default=0)

    def conjugate_defect(self) -> float:
        """``max_k |c_{-k} - conj(c_k)|``; zero for a real-valued series."""
        return max(
            (abs(self.coefficients.get(-k, 0) - complex(c).conjugate()) for k, c in self.coefficients.items()),
            default=0.0,
        )

    def evaluate_complex(self, u):
        u = np.asarray(u, dtype=float)
        total = np.zeros(u.shape, dtype=complex)
        for k in sorted(self.coefficients):
            total = total + complex(self.coefficients[k]) * np.exp(-2j * math.pi * k * u)
        return total if total.ndim else complex(total)

    def evaluate(self, u):
        """Real part of the series at ``u`` (scalar or array)."""
        z = self.evaluate_complex(u)
        return np.real(z) if isinstance(z, np.ndarray) else z.real

    __call__ = evaluate

    def truncated(self, K: int) -> "FourierSeries":
        """Keep ``|k| <= K``; the dropped mass is added to the truncation bound."""
        kept = {k: c for k, c in self.coefficients.items() if abs(k) <= K}
        dropped = sum(abs(c) for k, c in self.coefficients.items() if abs(k) > K)
        return FourierSeries(kept, self.kind, self.truncation_bound + dropped)


def _tail_estimate(mags: Sequence[float]) -> float:
    """Geometric extrapolation of ``sum`` beyond a decaying magnitude list."""
    if not mags:
        return 0.0
    a, b = mags[-2] if len(mags) > 1 else mags[-1], mags[-1]
    ratio = min(b / a, 0.9) if a > 0 else 0.0
    return b * ratio / (1 - ratio)


@dataclass(frozen=True)
class MeanExpansion:
    """``E X_n ~ log_{1/p} n + C + Q(log_{1/p} n)``."""

    params: SplitParams
    C: float
    phi_star_0: float
    Q: FourierSeries
    J: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __call__(self, n):
        return asympt_mean(n, self)


def mean_constant(
    params: SplitParams,
    moments: MomentTable | None = None,
    K: int = DEFAULT_K,
    J: int | None = None,
) -> MeanExpansion:
    """``C = -1/2 + (gamma + phi*(0)) / log(1/p)`` and ``Q_k = -(Gamma(chi_k) - phi*(chi_k)) / log(1/p)``."""
    L = params.log_inv_p
    phi0 = phi_star(0, params, moments, J)
    coeffs = {}
    extra_mags = []
    for k in range(1, K + 6):
        s = chi(k, params)
        Qk = -(gamma(s) - phi_star(k, params, moments, phi0.terms if J is None else J).value) / L
        if k <= K:
            coeffs[k] = Qk
            coeffs[-k] = Qk.conjugate()
        else:
            extra_mags.append(abs(Qk))
    bound = 2 * (sum(extra_mags) + _tail_estimate(extra_mags))
    C = -0.5 + (EULER_GAMMA + phi0.value.real) / L
    return MeanExpansion(params, C, phi0.value.real, FourierSeries(coeffs, "Q", bound), phi0.terms)


def log_base(x, params: SplitParams):
    """``log_{1/p} x``."""
    return np.log(x) / params.log_inv_p


def asympt_mean(n, expansion: MeanExpansion):
    """``log_{1/p} n + C + Q(log_{1/p} n)`` (scalar or array ``n``)."""
    u = log_base(np.asarray(n, dtype=float), expansion.params)
    out = u + expansion.C + expansion.Q(u)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ExactFormulaValue:
    value: float
    remainder: float
    terms: int


def f1_exact_formula(
    x: float,
    expansion: MeanExpansion,
    f1: PoissonizedFunction | None = None,
    tol: float = 1e-15,
) -> ExactFormulaValue:
    """``log_{1/p} x + C + Q(log_{1/p} x) + sum_k e^{-p^{-k}x}(1 - f1(q p^{-k-1} x) + f1(p^{-k} x))``.

    The ``k`` sum stops once ``e^{-y}(2 + y / p)``, with ``y = p^{-k} x``,
    drops below ``tol``; ``f1`` grows at most linearly, so this bounds each
    neglected term.
    """
    params = expansion.params
    if x < 1:
        raise ParameterError("the exact formula is used for x >= 1")
    p, q = params.float_p, params.float_q
    ys = [x]
    while math.exp(-ys[-1]) * (2 + ys[-1] / p) > tol:
        ys.append(ys[-1] / p)
    if len(ys) > 1:
        ys.pop()
    if f1 is None:
        f1 = _poissonized_tables(params, max(ys) * max(1.0, q / p))[0]
    rem = [math.exp(-y) * (1 - f1(q * y / p) + f1(y)) for y in ys]
    k = len(ys)
    u = math.log(x) / params.log_inv_p
    R = math.fsum(rem)
    return ExactFormulaValue(u + expansion.C + expansion.Q(u) + R, R, k)


# ---------------------------------------------------------------------------
# variance


@dataclass(frozen=True)
class VarianceExpansion:
    params: SplitParams
    QV: FourierSeries
    routes: dict = field(default_factory=dict, compare=False)

    def __call__(self, n):
        return asympt_variance(n, self.params, self.QV)


def variance_fluctuation(
    params: SplitParams,
    moments: MomentTable | None = None,
    K: int = DEFAULT_K,
    check: bool = False,
    check_K: int = 3,
) -> VarianceExpansion:
    """``Q_V(u) = (1/log(1/p)) sum_k phi_V*(chi_k) e^{-2 k pi i u}``.

    With ``check`` the coefficients ``|k| <= check_K`` are adjudicated by
    quadrature; ``routes`` records which evaluation each coefficient used.
    """
    L = params.log_inv_p
    coeffs = {}
    routes = {}
    extra = []
    for k in range(0, K + 6):
        v = phiV_star(k, params, moments, check=check and k <= check_K)
        c = v.value / L
        if k <= K:
            coeffs[k] = c if k else complex(c.real, 0.0)
            if k:
                coeffs[-k] = c.conjugate()
            routes[k] = v.route
        else:
            extra.append(abs(c))
    bound = 2 * (sum(extra) + _tail_estimate(extra))
    return VarianceExpansion(params, FourierSeries(coeffs, "Q_V", bound), routes)


def asympt_variance(n, params: SplitParams, QV: FourierSeries | None = None):
    """Leading variance term: 1 when ``p = 1/2``, else ``Q_V(log_{1/p} n)``."""
    if params.symmetric:
        return np.ones_like(np.asarray(n, dtype=float)) if np.ndim(n) else 1.0
    if QV is None:
        QV = variance_fluctuation(params).QV
    u = log_base(np.asarray(n, dtype=float), params)
    out = QV(u)
    return float(out) if np.ndim(out) == 0 else out


def harmonic(n: int) -> float:
    return math.fsum(1.0 / i for i in range(1, n + 1))


def mean_fluctuation_curve(params: SplitParams, ns: Sequence[int], expansion: MeanExpansion) -> np.ndarray:
    """``mu_n - H_n / log(1/p) + 1/2 - phi*(0) / log(1/p)`` (an approximation of ``Q``)."""
    mu, _ = float_moments(params, max(ns))
    L = params.log_inv_p
    H = np.cumsum(np.concatenate([[0.0], 1.0 / np.arange(1, max(ns) + 1)]))
    idx = np.asarray(ns)
    return mu[idx] - H[idx] / L + 0.5 - expansion.phi_star_0 / L


def variance_fluctuation_curve(params: SplitParams, ns: Sequence[int]) -> np.ndarray:
    """``V(X_n) + c0/n - c0/(2 n^2)`` with ``c0 = 1 / log(1/p)^2``."""
    mu, m2 = float_moments(params, max(ns))
    idx = np.asarray(ns)
    n = idx.astype(float)
    c0 = 1.0 / params.log_inv_p**2
    return m2[idx] - mu[idx] ** 2 + c0 / n - c0 / (2 * n * n)


__all__ = [
    "EULER_GAMMA",
    "ExactFormulaValue",
    "FourierSeries",
    "MeanExpansion",
    "SeriesValue",
    "VarianceExpansion",
    "asympt_mean",
    "asympt_variance",
    "chi",
    "f1_exact_formula",
    "mean_fluctuation_curve",
    "variance_fluctuation_curve",
    "harmonic",
    "mean_constant",
    "phiV_star",
    "phiV_star_quadrature",
    "phiV_star_series",
    "phi_star",
    "phi_star_at",
    "phi_star_quadrature",
    "variance_fluctuation",
]
