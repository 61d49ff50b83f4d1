"""Exact laws and moments of the binomial splitting process.

The process is ``X_0 = 0`` and ``X_n = X_{I_n} + 1`` for ``n >= 1``, where

    P(I_n = k) = C(n, k) (p^k q^(n-k) - p^k (q-p)^(n-k)) / (1 - q^n),  0 <= k < n.

With ``p = a/b`` every probability of size ``n`` is an integer over
``d_n = b^n - (b-a)^n``, so the laws of ``X_0..X_n`` share the common
denominator ``D_n = d_1 d_2 ... d_n``.  The exact tables below keep integer
numerators over ``D_n`` and only reduce to :class:`~fractions.Fraction` on
output, which avoids a gcd per addition.

Companion models (same package, same conventions):

* ``Y`` -- corner-preference parking, split ``k`` w.p.
  ``C(n,k) (m^k - (m-1)^k) / ((m+1)^n - m^n)`` for ``1 <= k <= n``;
* ``Z`` -- depth of a random key in a PATRICIA trie;
* ``W`` -- left arm of a PATRICIA trie / number of distinct geometric values /
  number of occupied urns.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import comb
from typing import Callable, Iterable, Sequence

import numpy as np
from gmpy2 import mpq, mpz
from scipy import special, stats

from .errors import ParameterError, ResourceLimitError

EXACT_CEILING = 256
# float convolutions overflow past ~2^1020
CONV_LIMIT = 1000
MODELS = ("X", "Y", "Z", "W")


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return parse_rational(value)
    if isinstance(value, float):
        # floats are accepted but flagged by `SplitParams.exact`
        return Fraction(value)
    raise ParameterError(f"cannot interpret {value!r} as a probability")


def parse_rational(text: str) -> Fraction:
    """Parse ``"a/b"`` (or a bare integer) into a reduced fraction.

    Decimal notation is refused on purpose: ``"0.3"`` would silently stand
    for a binary float on the exact path.
    """
    text = text.strip()
    parts = text.split("/")
    if len(parts) > 2 or not all(part.strip().lstrip("+-").isdigit() for part in parts):
        raise ParameterError(f"expected a rational of the form 'a/b', got {text!r}")
    num = int(parts[0])
    den = int(parts[1]) if len(parts) == 2 else 1
    if den == 0:
        raise ParameterError("zero denominator")
    return Fraction(num, den)


@dataclass(frozen=True)
class SplitParams:
    """Splitting probability ``p`` as an exact rational.

    ``model`` selects the admissible range: the ``X`` process (and its
    parking twin ``Y``) needs ``0 < p <= 1/2``; the PATRICIA models ``Z`` and
    ``W`` accept any ``0 < p < 1``.
    """

    p: Fraction
    model: str = "X"
    exact: bool = field(default=True, compare=False)

    def __post_init__(self):
        raw = self.p
        p = _as_fraction(raw)
        object.__setattr__(self, "p", p)
        if isinstance(raw, float):
            object.__setattr__(self, "exact", False)
        if self.model not in MODELS:
            raise ParameterError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if not 0 < p < 1:
            raise ParameterError(f"p must lie in (0, 1), got {p}")
        if self.model in ("X", "Y") and p > Fraction(1, 2):
            raise ParameterError(f"p must satisfy p ≤ 1/2 for model {self.model} (got {p})")

    @classmethod
    def parse(cls, text: str, model: str = "X") -> "SplitParams":
        return cls(parse_rational(text), model)

    @property
    def q(self) -> Fraction:
        return 1 - self.p

    @property
    def float_p(self) -> float:
        return float(self.p)

    @property
    def float_q(self) -> float:
        return float(self.q)

    @property
    def a(self) -> int:
        return self.p.numerator

    @property
    def b(self) -> int:
        return self.p.denominator

    @property
    def m(self) -> int | None:
        """``m`` with ``p = 1/(m+1)`` when ``p`` is a unit fraction, else ``None``."""
        if self.p.numerator == 1:
            return self.p.denominator - 1
        return None

    @property
    def log_inv_p(self) -> float:
        return math.log(self.b) - math.log(self.a)

    @property
    def symmetric(self) -> bool:
        return self.p == Fraction(1, 2)

    def with_model(self, model: str) -> "SplitParams":
        return SplitParams(self.p, model, self.exact)

    def __str__(self) -> str:
        return f"{self.p.numerator}/{self.p.denominator}"


def _reduced(num, den) -> Fraction:
    """Fraction from big integers, reducing with GMP rather than math.gcd."""
    r = mpq(num, den)
    num, den = int(r.numerator), int(r.denominator)
    from_coprime = getattr(Fraction, "_from_coprime_ints", None)
    if from_coprime is not None:
        return from_coprime(num, den)
    try:
        return Fraction(num, den, _normalize=False)
    except TypeError:
        return Fraction(num, den)


def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class ExactPmf:
    """Exact law of one of the four models at size ``n``."""

    n: int
    probs: dict
    model: str = "X"

    def __post_init__(self):
        if any(v < 0 for v in self.probs.values()):
            raise ValueError("negative probability")
        if sum(self.probs.values()) != 1:
            raise ValueError("probabilities do not sum to one")
        if self.model in ("X", "Y", "W") and self.n >= 1 and any(
            not 1 <= k <= self.n for k, v in self.probs.items() if v
        ):
            raise ValueError("support outside {1, ..., n}")

    def __getitem__(self, k: int) -> Fraction:
        return self.probs.get(k, Fraction(0))

    @property
    def support(self) -> list[int]:
        return sorted(k for k, v in self.probs.items() if v)

    def mean(self) -> Fraction:
        return sum((k * v for k, v in self.probs.items()), Fraction(0))

    def second_moment(self) -> Fraction:
        return sum((k * k * v for k, v in self.probs.items()), Fraction(0))

    def variance(self) -> Fraction:
        return self.second_moment() - self.mean() ** 2

    def cdf(self, k: int) -> Fraction:
        return sum((v for j, v in self.probs.items() if j <= k), Fraction(0))

    def as_floats(self) -> dict[int, float]:
        return {k: float(v) for k, v in sorted(self.probs.items()) if v}

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "n": self.n,
            "probs": {str(k): _frac_str(v) for k, v in sorted(self.probs.items()) if v},
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ExactPmf":
        probs = {int(k): parse_rational(v) for k, v in data["probs"].items()}
        return cls(int(data["n"]), probs, data.get("model", "X"))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def _check_n(n: int, *, allow_zero: bool = True) -> None:
    if not isinstance(n, (int, np.integer)) or n < (0 if allow_zero else 1):
        raise ParameterError(f"n must be a {'non-negative' if allow_zero else 'positive'} integer, got {n!r}")


def _check_ceiling(n: int, ceiling: int) -> None:
    if n > ceiling:
        raise ResourceLimitError(
            f"exact arithmetic requested for n={n} above the ceiling {ceiling}; "
            "use the float tables instead"
        )


def _split_numerators(a: int, b: int, n: int) -> list[int]:
    """Integers ``N_k`` with ``P(I_n = k) = N_k / (b^n - (b-a)^n)``."""
    c, e = b - a, b - 2 * a
    # 0**0 == 1 makes the k = n numerator vanish at p = 1/2; that term is dropped anyway
    return [mpz(comb(n, k) * a**k * (c ** (n - k) - e ** (n - k))) for k in range(n)]


def split_pmf(params: SplitParams, n: int) -> list[Fraction]:
    """Law of the splitting variable ``I_n`` as exact fractions, ``k = 0..n-1``."""
    _check_n(n, allow_zero=False)
    if params.p > Fraction(1, 2):
        raise ParameterError(f"p must satisfy p <= 1/2 for model X, got {params.p}")
    a, b = params.a, params.b
    den = b**n - (b - a) ** n
    return [Fraction(num, den) for num in _split_numerators(a, b, n)]


class _XTables:
    """Growable integer tables for the X process at a fixed ``p``.

    ``mu_num[n] / D[n]`` is the mean, ``m2_num[n] / D[n]`` the second moment,
    ``law[n][j] / D[n]`` the probability ``P(X_n = j)``.
    """

    def __init__(self, a: int, b: int):
        self.a, self.b = a, b
        self.D = [mpz(1)]
        self.d = [mpz(1)]
        self.mu_num = [mpz(0)]
        self.m2_num = [mpz(0)]
        # scaled[k] = num[k] * D[n-1] / D[k] for the current top n-1
        self._mu_scaled: list[int] = []
        self._m2_scaled: list[int] = []
        self.law: list[list[int]] = [[mpz(1)]]
        self.lock = threading.Lock()

    def extend_moments(self, N: int) -> None:
        a, b = self.a, self.b
        with self.lock:
            for n in range(len(self.D), N + 1):
                d_n = mpz(b**n - (b - a) ** n)
                self._mu_scaled.append(self.mu_num[n - 1])
                self._m2_scaled.append(self.m2_num[n - 1])
                weights = _split_numerators(a, b, n)
                s1 = sum(w * t for w, t in zip(weights, self._mu_scaled))
                s2 = sum(w * t for w, t in zip(weights, self._m2_scaled))
                D_n = self.D[-1] * d_n
                # E X_n = 1 + E mu_I ;  E X_n^2 = 1 + E(2 mu_I + m2_I)
                self.mu_num.append(D_n + s1)
                self.m2_num.append(D_n + 2 * s1 + s2)
                self.D.append(D_n)
                self.d.append(d_n)
                self._mu_scaled = [t * d_n for t in self._mu_scaled]
                self._m2_scaled = [t * d_n for t in self._m2_scaled]

    def extend_law(self, N: int) -> None:
        self.extend_moments(N)
        a, b = self.a, self.b
        with self.lock:
            for n in range(len(self.law), N + 1):
                # E[k] = D[n-1] / D[k]
                E = [mpz(1)] * n
                for k in range(n - 2, -1, -1):
                    E[k] = E[k + 1] * self.d[k + 1]
                g = [w * e for w, e in zip(_split_numerators(a, b, n), E)]
                row = [mpz(0)] * (n + 1)
                for k in range(n):
                    gk = g[k]
                    if not gk:
                        continue
                    for j, r in enumerate(self.law[k]):
                        if r:
                            row[j + 1] += gk * r
                self.law.append(row)


_X_CACHE: dict[Fraction, _XTables] = {}
_X_CACHE_LOCK = threading.Lock()


def _x_tables(params: SplitParams) -> _XTables:
    with _X_CACHE_LOCK:
        tab = _X_CACHE.get(params.p)
        if tab is None:
            tab = _X_CACHE[params.p] = _XTables(params.a, params.b)
    return tab


def _require_x(params: SplitParams) -> None:
    if params.p > Fraction(1, 2):
        raise ParameterError(f"p must satisfy p <= 1/2 for model X, got {params.p}")


def exact_pmf_X(params: SplitParams, n: int, ceiling: int = EXACT_CEILING) -> ExactPmf:
    """Exact law of ``X_n`` via the splitting recurrence.

    >>> exact_pmf_X(SplitParams(Fraction(1, 3)), 2).probs
    {1: Fraction(3, 5), 2: Fraction(2, 5)}
    """
    _require_x(params)
    _check_n(n)
    _check_ceiling(n, ceiling)
    tab = _x_tables(params)
    tab.extend_law(n)
    D = tab.D[n]
    return ExactPmf(n, {j: _reduced(r, D) for j, r in enumerate(tab.law[n]) if r}, "X")


def _shifted_mixture_dp(
    n: int, weights: Callable[[int], Iterable[tuple[int, Fraction]]], base: dict[int, dict]
) -> dict[int, dict]:
    """Generic ``law_n = shift(sum_w w * law_size)`` recurrence on Fractions."""
    laws = {s: {j: mpq(v.numerator, v.denominator) for j, v in law.items()} for s, law in base.items()}
    for size in range(max(base) + 1, n + 1):
        row: dict = {}
        for sub, w in weights(size):
            if not w:
                continue
            w = mpq(w.numerator, w.denominator)
            for j, v in laws[sub].items():
                row[j + 1] = row.get(j + 1, 0) + w * v
        laws[size] = row
    return {s: {j: Fraction(int(v.numerator), int(v.denominator)) for j, v in law.items()} for s, law in laws.items() if s == n or s in base}


def exact_pgf_Y(m: int, n: int, ceiling: int = EXACT_CEILING) -> ExactPmf:
    """Law of ``Y_n``, the number of cars parked after the first one.

    Uses the parking split directly: the second car fixes ``n - k`` coordinates
    at ``m`` in ``C(n,k) (m^k - (m-1)^k)`` ways out of ``(m+1)^n - m^n``.
    """
    if not isinstance(m, int) or m < 1:
        raise ParameterError(f"m must be a positive integer, got {m!r}")
    _check_n(n)
    _check_ceiling(n, ceiling)

    def weights(size):
        den = (m + 1) ** size - m**size
        for k in range(1, size + 1):
            yield size - k, Fraction(comb(size, k) * (m**k - (m - 1) ** k), den)

    laws = _shifted_mixture_dp(n, weights, {0: {0: Fraction(1)}})
    return ExactPmf(n, dict(laws[n]), "Y")


def exact_pmf_Z(params: SplitParams, n: int, ceiling: int = EXACT_CEILING) -> ExactPmf:
    """Law of the depth ``Z_n`` of a uniformly chosen key in a PATRICIA trie."""
    _check_n(n)
    _check_ceiling(n, ceiling)
    p, q = params.p, params.q

    def weights(size):
        norm = 1 - p**size - q**size
        for k in range(1, size):
            w = comb(size, k) * p**k * q ** (size - k) / norm
            # the chosen key follows its side of the split
            yield k, w * Fraction(k, size)
            yield size - k, w * Fraction(size - k, size)

    laws = _shifted_mixture_dp(n, weights, {0: {0: Fraction(1)}, 1: {0: Fraction(1)}})
    return ExactPmf(n, dict(laws[n]), "Z")


def exact_pmf_W(params: SplitParams, n: int, ceiling: int = EXACT_CEILING) -> ExactPmf:
    """Law of the left arm ``W_n`` (equivalently distinct geometric values)."""
    _check_n(n)
    _check_ceiling(n, ceiling)
    p, q = params.p, params.q

    def weights(size):
        norm = 1 - q**size
        for k in range(1, size + 1):
            yield size - k, comb(size, k) * p**k * q ** (size - k) / norm

    laws = _shifted_mixture_dp(n, weights, {0: {0: Fraction(1)}})
    return ExactPmf(n, dict(laws[n]), "W")


# ---------------------------------------------------------------------------
# float path


def float_split_weights(params: SplitParams, n: int) -> np.ndarray:
    """``P(I_n = k)``, ``k = 0..n-1``, in double precision.

    Written as a difference of two binomial laws,
    ``[Bin(k; n, p) - q^n Bin(k; n, p/q)] / (1 - q^n)``.
    """
    p, q = params.float_p, params.float_q
    k = np.arange(n)
    w = stats.binom.pmf(k, n, p)
    if params.p != Fraction(1, 2):
        w = w - q**n * stats.binom.pmf(k, n, p / q)
    w = np.maximum(w, 0.0)
    return w / -math.expm1(n * math.log1p(-p))


def _xsum(terms: np.ndarray) -> float:
    """Pairwise sum in extended precision; the terms here are all non-negative."""
    return float(np.sum(terms, dtype=np.longdouble))


class _FloatTables:
    def __init__(self, params: SplitParams):
        self.params = params
        self.mu = [0.0]
        self.m2 = [0.0]
        self.law = np.zeros((1, 1))
        self.law[0, 0] = 1.0
        self.lock = threading.Lock()

    def extend_moments(self, N: int, seed_mu: Sequence[float] = (), seed_m2: Sequence[float] = ()) -> None:
        with self.lock:
            if len(self.mu) < len(seed_mu):
                self.mu = list(seed_mu)
                self.m2 = list(seed_m2)
            start = len(self.mu)
            if start > N:
                return
            mu = np.zeros(N + 1)
            m2 = np.zeros(N + 1)
            mu[:start] = self.mu
            m2[:start] = self.m2
            for n in range(start, N + 1):
                w = float_split_weights(self.params, n)
                s1 = _xsum(w * mu[:n])
                s2 = _xsum(w * m2[:n])
                mu[n] = 1.0 + s1
                m2[n] = 1.0 + 2.0 * s1 + s2
            self.mu = mu.tolist()
            self.m2 = m2.tolist()

    def extend_law(self, N: int, width: int) -> None:
        with self.lock:
            old_n, old_w = self.law.shape
            if old_n > N and old_w >= width:
                return
            if old_w < width:
                # a wider table needs a restart; columns past old_w were truncated
                old_n = 1
            table = np.zeros((max(N + 1, old_n), width))
            table[:old_n, : min(old_w, width)] = self.law[:old_n, :width]
            table[0, 0] = 1.0
            for n in range(old_n, N + 1):
                w = float_split_weights(self.params, n)
                row = w @ table[:n, : width - 1]
                table[n, 1:] = row
            self.law = table


_F_CACHE: dict[Fraction, _FloatTables] = {}


def _f_tables(params: SplitParams) -> _FloatTables:
    with _X_CACHE_LOCK:
        tab = _F_CACHE.get(params.p)
        if tab is None:
            tab = _F_CACHE[params.p] = _FloatTables(params)
    return tab


def float_pmf_table(params: SplitParams, N: int, width: int = 64) -> np.ndarray:
    """Array ``T[n, j] = P(X_n = j)`` for ``n <= N``, ``j < width`` (float DP).

    Mass beyond ``width - 1`` is dropped; for the sizes this package handles
    (``n`` up to a few thousand) it is below double precision.
    """
    _require_x(params)
    _check_n(N)
    tab = _f_tables(params)
    tab.extend_law(N, width)
    return tab.law[: N + 1, :width].copy()


def float_moments(params: SplitParams, N: int) -> tuple[np.ndarray, np.ndarray]:
    """``(E X_n, E X_n^2)`` for ``n <= N`` by the float recurrence with fsum."""
    _require_x(params)
    _check_n(N)
    tab = _f_tables(params)
    tab.extend_moments(N)
    return np.array(tab.mu[: N + 1]), np.array(tab.m2[: N + 1])


# ---------------------------------------------------------------------------
# moment tables


@dataclass(frozen=True)
class MomentTable:
    """Moment sequences of ``X_n`` for ``n = 0..max_n``.

    Entries up to ``exact_upto`` are :class:`Fraction`; later ones are floats.
    ``mu2conv[n] = sum_k C(n,k) mu_k mu_{n-k}`` and
    ``mu11conv[n] = sum_k C(n,k) p^k q^(n-k) mu_k mu_{n-k}`` are kept up to
    ``min(max_n, CONV_LIMIT)``.
    """

    params: SplitParams
    max_n: int
    exact_upto: int
    mu: tuple
    m2: tuple
    mu2conv: tuple
    mu11conv: tuple

    @cached_property
    def mu_f(self) -> np.ndarray:
        return np.array([float(x) for x in self.mu])

    @cached_property
    def m2_f(self) -> np.ndarray:
        return np.array([float(x) for x in self.m2])

    @cached_property
    def mu2conv_f(self) -> np.ndarray:
        return np.array([float(x) for x in self.mu2conv])

    @cached_property
    def mu11conv_f(self) -> np.ndarray:
        return np.array([float(x) for x in self.mu11conv])

    def variance(self, n: int):
        return self.m2[n] - self.mu[n] ** 2

    def to_json_dict(self) -> dict:
        def enc(x):
            return _frac_str(x) if isinstance(x, Fraction) else repr(float(x))

        return {
            "p": str(self.params),
            "max_n": self.max_n,
            "exact_upto": self.exact_upto,
            "mu": [enc(x) for x in self.mu],
            "m2": [enc(x) for x in self.m2],
            "mu2conv": [enc(x) for x in self.mu2conv],
            "mu11conv": [enc(x) for x in self.mu11conv],
        }


def _exact_convolutions(tab: _XTables, a: int, b: int, N: int) -> tuple[list[Fraction], list[Fraction]]:
    conv2, conv11 = [], []
    c = b - a
    A: list = []  # A[k] = mu_k * D_n
    for n in range(N + 1):
        A = [x * tab.d[n] for x in A] if n else []
        A.append(tab.mu_num[n])
        s2 = s11 = mpz(0)
        for k in range(n // 2 + 1):
            prod = comb(n, k) * A[k] * A[n - k]
            if 2 * k == n:
                s2 += prod
                s11 += a**k * c ** (n - k) * prod
            else:
                s2 += 2 * prod
                s11 += (a**k * c ** (n - k) + a ** (n - k) * c**k) * prod
        D2 = tab.D[n] ** 2
        conv2.append(_reduced(s2, D2))
        conv11.append(_reduced(s11, D2 * b**n))
    return conv2, conv11


_MT_CACHE: dict[tuple, MomentTable] = {}


def moment_table(params: SplitParams, N: int, exact_upto: int = EXACT_CEILING) -> MomentTable:
    """Moment table of ``X_n`` up to ``N``: exact below ``exact_upto``, floats above."""
    _require_x(params)
    _check_n(N)
    key = (params.p, N, exact_upto)
    cached = _MT_CACHE.get(key)
    if cached is not None:
        return cached
    n_exact = min(N, exact_upto)
    tab = _x_tables(params)
    tab.extend_moments(n_exact)
    mu: list = [_reduced(tab.mu_num[n], tab.D[n]) for n in range(n_exact + 1)]
    m2: list = [_reduced(tab.m2_num[n], tab.D[n]) for n in range(n_exact + 1)]
    conv2, conv11 = _exact_convolutions(tab, params.a, params.b, n_exact)
    if N > n_exact:
        ftab = _FloatTables(params)
        ftab.extend_moments(N, [float(x) for x in mu], [float(x) for x in m2])
        mu += ftab.mu[n_exact + 1 : N + 1]
        m2 += ftab.m2[n_exact + 1 : N + 1]
        muf = np.array([float(x) for x in mu])
        p = params.float_p
        for n in range(n_exact + 1, min(N, CONV_LIMIT) + 1):
            k = np.arange(n + 1)
            prod = muf[k] * muf[n - k]
            binom_c = np.exp(special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1))
            conv2.append(_xsum(binom_c * prod))
            conv11.append(_xsum(stats.binom.pmf(k, n, p) * prod))
    table = MomentTable(params, N, n_exact, tuple(mu), tuple(m2), tuple(conv2), tuple(conv11))
    _MT_CACHE[key] = table
    return table
