"""Poisson transforms ``e^{-z} sum_n a_n z^n / n!`` of the tabulated sequences.

All evaluators truncate the series at ``M(x) = ceil(x + 12 sqrt(x) + 50)`` and
certify the truncation with a Poisson tail bound built from a polynomial
bound ``|a_n| <= c0 + c1 n + c2 n^2`` on the coefficients (``X_n <= n`` gives
``mu_n <= n`` and ``E X_n^2 <= n^2``; probabilities are at most 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special, stats

from .errors import ParameterError, ToleranceError
from .exact import MomentTable, SplitParams, float_moments, float_pmf_table

DEFAULT_TOL = 1e-12
_EPS = np.finfo(float).eps
KINDS = ("f1", "f2", "V", "A", "S")


def truncation_index(x: float) -> int:
    """Number of Taylor terms kept at argument ``x`` (``|x|`` for complex)."""
    r = abs(x)
    return math.ceil(r + 12.0 * math.sqrt(r) + 50.0)


@dataclass(frozen=True)
class PoissonValue:
    value: float | complex
    error_bound: float

    def __float__(self) -> float:
        return float(self.value)


def _poisson_tail_moment(order: int, M: int, r: float) -> float:
    """``E[N^order ; N > M]`` for ``N ~ Poisson(r)``, ``order <= 2``."""
    if r == 0:
        return 0.0
    t0 = stats.poisson.sf(M, r)
    if order == 0:
        return t0
    t1 = r * stats.poisson.sf(M - 1, r)
    if order == 1:
        return t1
    return r * r * stats.poisson.sf(M - 2, r) + t1


class PoissonizedFunction:
    """``z -> e^{-z} sum_{n <= M(z)} a_n z^n / n!`` over a finite coefficient table.

    ``bound = (c0, c1, c2)`` must dominate the coefficients of the whole
    (infinite) sequence: ``|a_n| <= c0 + c1 n + c2 n^2``.
    """

    def __init__(self, coeffs: Sequence[float], bound=(1.0, 0.0, 0.0), name: str = ""):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.bound = tuple(float(c) for c in bound)
        self.name = name

    def __repr__(self) -> str:
        return f"PoissonizedFunction({self.name or '?'}, {len(self.coeffs)} coefficients)"

    @property
    def size(self) -> int:
        return len(self.coeffs)

    def _check(self, M: int, z) -> None:
        if M >= self.size:
            raise ToleranceError(
                f"argument {z} needs {M + 1} coefficients of {self.name or 'the table'}, "
                f"only {self.size} available"
            )

    def _center(self, r: float) -> int:
        return min(int(r), self.size - 1)

    def evaluate(self, z, tol: float = DEFAULT_TOL) -> PoissonValue:
        """Value at ``z`` with a certified truncation-plus-rounding bound."""
        z = complex(z) if isinstance(z, complex) else float(z)
        r = abs(z)
        if isinstance(z, float) and z < 0:
            raise ParameterError("real arguments must be non-negative")
        if r == 0:
            return PoissonValue(self.coeffs[0], 0.0)
        M = truncation_index(r)
        self._check(M, z)
        m = np.arange(M + 1)
        a = self.coeffs[: M + 1]
        ac = a[self._center(r)]
        if isinstance(z, complex):
            w = np.exp(m * np.log(z) - z - special.gammaln(m + 1))
        else:
            w = np.exp(m * math.log(z) - z - special.gammaln(m + 1))
        terms = w * (a - ac)
        total = ac + (math.fsum(terms.real) + 1j * math.fsum(terms.imag) if isinstance(z, complex) else math.fsum(terms))
        c0, c1, c2 = self.bound
        damp = math.exp(r - z.real) if isinstance(z, complex) else 1.0
        trunc = damp * (
            (c0 + abs(ac)) * _poisson_tail_moment(0, M, r)
            + c1 * _poisson_tail_moment(1, M, r)
            + c2 * _poisson_tail_moment(2, M, r)
        )
        rounding = 4 * _EPS * ((M + 1) * float(np.sum(np.abs(terms))) + abs(ac))
        err = trunc + rounding
        if err > tol:
            raise ToleranceError(f"error bound {err:.3g} exceeds tolerance {tol:.3g} at z={z}")
        return PoissonValue(total, err)

    def __call__(self, x):
        """Vectorized evaluation on non-negative reals (no certificate)."""
        xs = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xs).ravel()
        if np.any(flat < 0):
            raise ParameterError("real arguments must be non-negative")
        out = np.empty_like(flat)
        M = truncation_index(float(flat.max())) if flat.size else 0
        self._check(M, float(flat.max()) if flat.size else 0)
        m = np.arange(M + 1)
        a = self.coeffs[: M + 1]
        lg = special.gammaln(m + 1)
        zero = flat == 0
        out[zero] = a[0]
        pos = flat[~zero]
        if pos.size:
            c = np.minimum(pos.astype(int), self.size - 1)
            ac = self.coeffs[c]
            w = np.exp(np.outer(np.log(pos), m) - pos[:, None] - lg[None, :])
            out[~zero] = ac + np.sum(w * (a[None, :] - ac[:, None]), axis=1)
        if xs.ndim == 0:
            return float(out[0])
        return out.reshape(xs.shape)

    def derivative(self, order: int = 1) -> "PoissonizedFunction":
        """The ``order``-th derivative, itself a Poisson transform.

        ``d/dz e^{-z} sum a_n z^n/n! = e^{-z} sum (a_{n+1} - a_n) z^n/n!``.
        """
        if order < 0:
            raise ParameterError("derivative order must be non-negative")
        a = self.coeffs
        for _ in range(order):
            a = np.diff(a)
        c0, c1, c2 = self.bound
        j = order
        scale = 2.0**j
        bound = (scale * (c0 + c1 * j + c2 * j * j), scale * (c1 + 2 * c2 * j), scale * c2)
        suffix = "'" * order if order <= 3 else f"^({order})"
        return PoissonizedFunction(a, bound, f"{self.name}{suffix}")


DERIVATIVE_HEADROOM = 8


def _table_size(x: float) -> int:
    # a few spare coefficients so that low-order derivatives stay evaluable at x
    return truncation_index(x) + 1 + DERIVATIVE_HEADROOM


def poissonized_mean(params: SplitParams, x_max: float, table: MomentTable | None = None) -> PoissonizedFunction:
    """Poisson transform of ``E X_n`` usable on ``[0, x_max]``."""
    N = _table_size(x_max)
    if table is None:
        mu, _ = float_moments(params, N)
    else:
        mu = table.mu_f
    return PoissonizedFunction(mu, (0.0, 1.0, 0.0), "f1")


def poissonized_second_moment(params: SplitParams, x_max: float, table: MomentTable | None = None) -> PoissonizedFunction:
    N = _table_size(x_max)
    if table is None:
        _, m2 = float_moments(params, N)
    else:
        m2 = table.m2_f
    return PoissonizedFunction(m2, (0.0, 0.0, 1.0), "f2")


def poissonized_pmf(params: SplitParams, k: int, x_max: float, cumulative: bool = False) -> PoissonizedFunction:
    """Poisson transform of ``P(X_n = k)`` (or ``P(X_n <= k)``)."""
    if k < 0:
        raise ParameterError("k must be non-negative")
    N = _table_size(x_max)
    width = max(64, k + 2)
    tab = float_pmf_table(params, N, width)
    if cumulative:
        col = np.cumsum(tab, axis=1)[:, k]
        name = f"S_{k}"
    else:
        col = tab[:, k]
        name = f"A_{k}"
    return PoissonizedFunction(col, (1.0, 0.0, 0.0), name)


def poissonized_eval(
    kind: str,
    params: SplitParams,
    x: float,
    k: int | None = None,
    tol: float = DEFAULT_TOL,
    table: MomentTable | None = None,
) -> PoissonValue:
    """Evaluate one of the Poisson transforms at ``x`` with an error bound.

    ``kind`` is ``"f1"`` (mean), ``"f2"`` (second moment), ``"V"``
    (``f2 - f1^2``), ``"A"`` (``P(X_n = k)``) or ``"S"`` (``P(X_n <= k)``);
    ``"A_3"`` style spellings are accepted too.  A supplied ``table`` that is
    too short raises :class:`ToleranceError` instead of being silently extended.
    """
    if "_" in kind:
        kind, _, idx = kind.partition("_")
        k = int(idx)
    if kind not in KINDS:
        raise ParameterError(f"unknown kind {kind!r}; expected one of {KINDS}")
    if table is not None and table.params.p != params.p:
        raise ParameterError("moment table was built for a different p")
    if kind in ("A", "S"):
        if k is None:
            raise ParameterError(f"kind {kind!r} needs k")
        return poissonized_pmf(params, k, abs(x), cumulative=kind == "S").evaluate(x, tol)
    f1 = poissonized_mean(params, abs(x), table)
    if kind == "f1":
        return f1.evaluate(x, tol)
    f2 = poissonized_second_moment(params, abs(x), table)
    if kind == "f2":
        return f2.evaluate(x, tol)
    v1 = f1.evaluate(x, tol)
    v2 = f2.evaluate(x, tol)
    err = v2.error_bound + 2 * abs(v1.value) * v1.error_bound + v1.error_bound**2
    err += 4 * _EPS * (abs(v2.value) + abs(v1.value) ** 2)
    if err > tol:
        raise ToleranceError(f"error bound {err:.3g} exceeds tolerance {tol:.3g}")
    return PoissonValue(v2.value - v1.value**2, err)
