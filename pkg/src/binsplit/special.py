"""Complex Gamma function, complex powers of positive reals, Mellin quadrature.

``gamma`` uses the Lanczos approximation with ``g = 607/128`` and 15
coefficients.  Near ``|z| ~ 200`` the phase of ``Gamma(z)`` is of order 1000
radians, so a plain double evaluation of ``log Gamma`` already loses ~1e-13.
The dominant ``(z - 1/2) log t - t`` part is therefore accumulated exactly
(error-free products, ``math.fsum``) and carried as a double-double pair
until the final exponentiation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable

from scipy import integrate

from .errors import NonConvergenceError, ParameterError, PoleError

# hi/lo splittings of a few constants (hi + lo correct to ~1e-32)
_LN2 = (0.6931471805599453, 2.3190468138462996e-17)
_PI = (3.141592653589793, 1.2246467991473532e-16)
_HALF_PI = (1.5707963267948966, 6.123233995736766e-17)
_HALF_LOG_2PI = (0.9189385332046728, -3.8782941580672414e-17)
_TWO_PI = (2 * _PI[0], 2 * _PI[1])

_LANCZOS_G = 607 / 128
_LANCZOS = (
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
)
_SPLITTER = 134217729.0  # 2**27 + 1


def _split(a: float) -> tuple[float, float]:
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a: float, b: float) -> tuple[float, float]:
    """``a*b`` as an exact sum of two doubles (Dekker)."""
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dd(parts: list[float]) -> tuple[float, float]:
    hi = math.fsum(parts)
    return hi, math.fsum(parts + [-hi])


def _as_complex(z) -> complex:
    z = complex(z)
    if math.isnan(z.real) or math.isnan(z.imag):
        raise ParameterError("NaN argument")
    if math.isinf(z.real) or math.isinf(z.imag):
        raise ParameterError("infinite argument")
    return z


def _log_positive_dd(x: float) -> list[float]:
    """Pieces summing to ``log x`` with absolute error ~3e-17."""
    m, e = math.frexp(x)
    if m < 0.7071067811865476:
        m *= 2.0
        e -= 1
    h, l = _two_prod(float(e), _LN2[0])
    return [h, l, e * _LN2[1], math.log(m)]


def _lgamma_dd(z: complex) -> tuple[tuple[float, float], tuple[float, float]]:
    """``log Gamma(z)`` for ``Re z >= 1/2`` as ((re_hi, re_lo), (im_hi, im_lo)).

    The imaginary part is the continuous branch of the Lanczos form, not
    reduced modulo ``2 pi``.
    """
    zr, zi = z.real, z.imag
    tr = zr + (_LANCZOS_G - 0.5)
    tr_lo = math.fsum([zr, _LANCZOS_G - 0.5, -tr])
    ti = zi
    wr, wi = zr - 0.5, zi  # exact for 0.5 <= zr < 2**52

    # log t = log|t| + i arg t, each as a double-double
    a1, a2 = _two_prod(tr, tr)
    b1, b2 = _two_prod(ti, ti)
    s_hi, s_lo = _dd([a1, a2, b1, b2])
    mod2 = s_hi
    log_abs = [0.5 * v for v in _log_positive_dd(s_hi)] + [0.5 * s_lo / s_hi, tr * tr_lo / mod2]
    if abs(ti) <= tr:
        arg = [math.atan(ti / tr)]
    elif ti > 0:
        arg = [_HALF_PI[0], _HALF_PI[1], -math.atan(tr / ti)]
    else:
        arg = [-_HALF_PI[0], -_HALF_PI[1], -math.atan(tr / ti)]
    arg.append(-ti * tr_lo / mod2)
    lr_hi, lr_lo = _dd(log_abs)
    li_hi, li_lo = _dd(arg)

    x = _LANCZOS[0]
    zm1 = z - 1.0
    for k in range(1, len(_LANCZOS)):
        x += _LANCZOS[k] / (zm1 + k)
    lx = cmath.log(x)

    re_parts = [_HALF_LOG_2PI[0], _HALF_LOG_2PI[1], -tr, -tr_lo, lx.real]
    im_parts = [-ti, lx.imag]
    p, e = _two_prod(wr, lr_hi)
    re_parts += [p, e, wr * lr_lo]
    p, e = _two_prod(wi, li_hi)
    re_parts += [-p, -e, -wi * li_lo]
    p, e = _two_prod(wr, li_hi)
    im_parts += [p, e, wr * li_lo]
    p, e = _two_prod(wi, lr_hi)
    im_parts += [p, e, wi * lr_lo]
    return _dd(re_parts), _dd(im_parts)


def _exp_dd(re: tuple[float, float], im: tuple[float, float]) -> complex:
    mag = math.exp(re[0]) * (1.0 + re[1])
    c, s = math.cos(im[0]), math.sin(im[0])
    return complex(mag * (c - s * im[1]), mag * (s + c * im[1]))


def _sin_pi(z: complex) -> complex:
    """``sin(pi z)`` with the large ``pi * Im z`` product kept exact."""
    n = round(z.real)
    f = z.real - n
    X = math.pi * f
    yh, yl = _two_prod(_PI[0], z.imag)
    yl += _PI[1] * z.imag
    ch, sh = math.cosh(yh), math.sinh(yh)
    cosh_y, sinh_y = ch + sh * yl, sh + ch * yl
    val = complex(math.sin(X) * cosh_y, math.cos(X) * sinh_y)
    return -val if n % 2 else val


def gamma(z) -> complex:
    """Complex Gamma function.

    Relative error stays below 1e-13 for ``|Im z| <= 200`` and
    ``-5 <= Re z <= 171`` (beyond ``Re z ~ 171.6`` the value overflows a
    double and :class:`OverflowError` is raised).
    """
    z = _as_complex(z)
    if z.imag == 0 and z.real <= 0 and z.real == math.floor(z.real):
        raise PoleError(f"Gamma has a pole at {z.real:g}")
    if z.real < 0.5:
        re, im = _lgamma_dd(1.0 - z)
        return math.pi / (_sin_pi(z) * _exp_dd(re, im))
    re, im = _lgamma_dd(z)
    if re[0] > 709.78:
        raise OverflowError(f"Gamma({z}) exceeds the double range")
    return _exp_dd(re, im)


def loggamma(z) -> complex:
    """``log Gamma(z)`` for ``Re z >= 1/2`` (continuous branch, double precision)."""
    z = _as_complex(z)
    if z.real < 0.5:
        raise ParameterError("loggamma is provided for Re z >= 1/2 only")
    re, im = _lgamma_dd(z)
    return complex(re[0], im[0])


def cpow(base: float, exponent) -> complex:
    """``base ** exponent`` for real ``base > 0`` and complex ``exponent``.

    The phase ``Im(exponent) * log(base)`` is formed in double-double and
    reduced modulo ``2 pi`` before taking cosine and sine, so
    ``|cpow(b, i t)| == 1`` up to the rounding of cos/sin.
    """
    if not base > 0:
        raise ParameterError("cpow needs a positive real base")
    w = _as_complex(exponent)
    lb = _dd(_log_positive_dd(float(base)))
    mag = math.exp(w.real * lb[0]) * (1.0 + w.real * lb[1]) if w.real else 1.0
    if w.imag == 0:
        return complex(mag, 0.0)
    h, l = _two_prod(w.imag, lb[0])
    th, tl = _dd([h, l, w.imag * lb[1]])
    k = round(th / _TWO_PI[0])
    kh, kl = _two_prod(float(k), _TWO_PI[0])
    r = math.fsum([th, -kh, -kl, -k * _TWO_PI[1], tl])
    return complex(mag * math.cos(r), mag * math.sin(r))


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error_estimate: float
    evaluations: int


@dataclass(frozen=True)
class MellinIntegrand:
    """``g`` on ``(0, inf)`` with growth data for cutting the integral.

    ``|g(t)| <= small_const * t`` near 0 and
    ``|g(t)| <= growth_const * (1 + log(1 + t))`` for all ``t``.
    """

    g: Callable[[float], float | complex]
    small_const: float = 1.0
    growth_const: float = 1.0


def mellin_quadrature(
    integrand: MellinIntegrand | Callable[[float], float],
    s,
    tol: float = 1e-10,
    limit: int = 500,
) -> QuadratureResult:
    """``int_0^inf e^{-t} t^{s-1} g(t) dt`` for ``Re s > -1``.

    The range is cut to ``[t0, T]`` with ``T = max(50, |s| + 50)`` (enlarged
    until the ``e^{-t}`` tail is below ``tol/4``) and ``t0`` chosen from the
    linear bound on ``g`` near zero.  After substituting ``t = e^v`` the
    integrand is smooth and handed to QUADPACK, real and imaginary parts
    separately.
    """
    if not isinstance(integrand, MellinIntegrand):
        integrand = MellinIntegrand(integrand)
    s = _as_complex(s)
    sigma = s.real
    if sigma <= -1:
        raise ParameterError("mellin_quadrature needs Re s > -1")
    c = integrand.small_const
    t0 = (tol * (sigma + 1) / (4 * c)) ** (1.0 / (sigma + 1)) if c > 0 else 1e-300
    T = max(50.0, abs(s) + 50.0)

    def tail(T):
        # int_T^inf e^{-t} t^{sigma-1} A (1 + log(1+t)) dt, crude but safe for T >> |sigma|
        return 2 * integrand.growth_const * math.exp(-T) * T ** max(sigma - 1, 0) * (1 + math.log1p(T))

    while tail(T) > tol / 4:
        T *= 1.5
    g = integrand.g

    def f(v):
        t = math.exp(v)
        return cmath.exp(v * s - t) * g(t)

    results = []
    neval = 0
    budget = tol / 2
    for part in (lambda v: f(v).real, lambda v: f(v).imag):
        val, err, info, *rest = integrate.quad(
            part, math.log(t0), math.log(T), epsabs=budget / 4, epsrel=0.0, limit=limit, full_output=1
        )
        neval += info["neval"]
        if rest:
            raise NonConvergenceError(f"quadrature did not converge at s={s}: {rest[0]}")
        results.append((val, err))
    err = results[0][1] + results[1][1]
    if err > tol:
        raise NonConvergenceError(f"quadrature error estimate {err:.3g} exceeds {tol:.3g}")
    return QuadratureResult(complex(results[0][0], results[1][0]), err + tol / 2, neval)

