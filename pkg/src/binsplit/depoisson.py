"""Poisson-Charlier de-Poissonization: recover ``a_n`` from ``e^{-z} sum a_m z^m / m!``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ParameterError
from .poisson import PoissonizedFunction


def charlier_tau(j: int, n: int) -> int:
    """``tau_j(n) = n! [z^n] (z - n)^j e^z = sum_l C(j,l) (-n)^{j-l} n!/(n-l)!``."""
    if j < 0 or n < 0:
        raise ParameterError("tau_j(n) needs j, n >= 0")
    total = 0
    falling = 1
    for l in range(j + 1):
        if l > n:
            break
        total += math.comb(j, l) * (-n) ** (j - l) * falling
        falling *= n - l
    return total


@dataclass(frozen=True)
class DepoissonizedValue:
    value: float
    terms: tuple


def depoissonize(
    coeffs: Sequence[float] | PoissonizedFunction,
    n: int,
    order: int = 1,
    tol: float = 1e-9,
) -> DepoissonizedValue:
    """``sum_{0 <= j < 2*order} f^{(j)}(n) tau_j(n) / j!``.

    Derivatives of the Poisson transform are themselves Poisson transforms of
    forward differences of the coefficients.  ``order = 1`` is just ``f(n)``
    (``tau_1 = 0``).
    """
    if order < 1:
        raise ParameterError("order must be at least 1")
    if n < 1:
        raise ParameterError("n must be positive")
    f = coeffs if isinstance(coeffs, PoissonizedFunction) else PoissonizedFunction(coeffs, (max(map(abs, coeffs)), 0, 0))
    terms = []
    for j in range(2 * order):
        tau = charlier_tau(j, n)
        if tau == 0:
            terms.append(0.0)
            continue
        d = f.derivative(j).evaluate(float(n), tol).value
        terms.append(d * tau / math.factorial(j))
    return DepoissonizedValue(math.fsum(terms), tuple(terms))


__all__ = ["DepoissonizedValue", "charlier_tau", "depoissonize"]
