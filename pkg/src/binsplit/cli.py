"""Command-line front end.

Subcommands::

    exact     exact laws of X_n, Y_n, Z_n, W_n     columns: n,k,probability
    asympt    asymptotic mean/var/pmf/cdf          columns: n,k,asymptotic,exact,residual
    figure    data behind the fluctuation plots    columns: n,u,approximation,fourier
    simulate  Monte Carlo histogram + fit          columns: statistic,value,count,frequency,exact
    validate  cross-check suite                    columns: check,status,detail

Exit codes: 0 ok, 1 failed validation, 2 usage, 3 resource limit,
4 numerical failure, 5 simulation fit failure (with --assert-fit).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import __version__
from .errors import (
    BinsplitError,
    NonConvergenceError,
    ParameterError,
    ResourceLimitError,
    ToleranceError,
)
from .exact import (
    ExactPmf,
    SplitParams,
    exact_pgf_Y,
    exact_pmf_W,
    exact_pmf_X,
    exact_pmf_Z,
    float_moments,
    float_pmf_table,
    parse_rational,
)

SCHEMA = "binsplit/1"
SEED_ENV = "BINSPLIT_SEED"
ORACLE_LIMIT = 20000

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE, EXIT_NUMERIC, EXIT_FIT = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """17 significant digits, round-trip safe."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def parse_n_range(text: str) -> range:
    """``"N"`` or ``"A:B"`` (inclusive)."""
    try:
        if ":" in text:
            a, b = (int(t) for t in text.split(":", 1))
        else:
            a = b = int(text)
    except ValueError:
        raise UsageError(f"bad n or n-range {text!r}; use N or A:B") from None
    if a > b:
        raise UsageError(f"n-range bounds out of order: {text}")
    if a < 0:
        raise UsageError("n must be non-negative")
    return range(a, b + 1)


def parse_p(text: str, model: str = "X") -> SplitParams:
    try:
        return SplitParams(parse_rational(text), model)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None


@dataclass
class Output:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    json_rows: list[dict] | None = None

    def render(self, kind: str) -> str:
        if kind == "json":
            rows = self.json_rows if self.json_rows is not None else [dict(zip(self.columns, r)) for r in self.rows]
            doc = {"schema": SCHEMA, **self.meta, "columns": self.columns, "rows": rows}
            return json.dumps(doc, indent=2, ensure_ascii=False, default=_json_default) + "\n"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating, int, np.integer)) else v for v in r])
        return buf.getvalue()


def _json_default(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _jfloat(x: float):
    x = float(x)
    return x if math.isfinite(x) else str(x)


# ---------------------------------------------------------------------------
# exact


def _exact_law(model: str, params: SplitParams | None, m: int | None, n: int) -> ExactPmf:
    if model == "X":
        return exact_pmf_X(params, n)
    if model == "Y":
        return exact_pgf_Y(m, n)
    if model == "Z":
        return exact_pmf_Z(params, n)
    return exact_pmf_W(params, n)


def _model_params(args) -> tuple[SplitParams | None, int | None]:
    model = args.model
    if model == "Y":
        m = args.m
        if m is None:
            if args.p is None:
                raise UsageError("model Y needs --m or a unit-fraction --p")
            pp = parse_p(args.p, "Y")
            if pp.m is None:
                raise UsageError("model Y needs p = 1/(m+1)")
            m = pp.m
        elif args.p is not None and parse_rational(args.p) != Fraction(1, m + 1):
            raise UsageError(f"--p {args.p} is inconsistent with --m {m} (need p = 1/(m+1))")
        if m < 1:
            raise UsageError("m must be at least 1")
        return SplitParams(Fraction(1, m + 1), "Y"), m
    if args.p is None:
        raise UsageError(f"model {model} needs --p")
    return parse_p(args.p, model), None


def cmd_exact(args) -> Output:
    params, m = _model_params(args)
    out = Output(["n", "k", "probability"], meta={"command": "exact", "p": str(params), "model": args.model})
    if m is not None:
        out.meta["m"] = m
    json_rows = []
    for n in parse_n_range(args.n):
        law = _exact_law(args.model, params, m, n)
        for k in law.support:
            v = law[k]
            out.rows.append([n, k, float(v)])
            json_rows.append({"n": n, "k": k, "probability": f"{v.numerator}/{v.denominator}"})
    out.json_rows = json_rows
    return out


# ---------------------------------------------------------------------------
# asympt


def cmd_asympt(args) -> Output:
    from .asymptotics import asympt_mean, mean_constant, variance_fluctuation
    from .density import asympt_cdf, asympt_density

    params = parse_p(args.p)
    ns = parse_n_range(args.n)
    if ns.start < 2:
        raise UsageError("asymptotic formulas need n >= 2")
    q = args.quantity
    meta = {"command": "asympt", "p": str(params), "quantity": q, "K": args.K, "J": args.J}
    N = ns.stop - 1
    have_exact = N <= ORACLE_LIMIT
    if q in ("mean", "var"):
        cols = ["n", "k", "asymptotic", "exact", "residual"]
        if have_exact:
            mu, m2 = float_moments(params, N)
        if q == "mean":
            E = mean_constant(params, K=args.K, J=args.J)
            meta.update(C=E.C, phi_star_0=E.phi_star_0, fourier_truncation=E.Q.truncation_bound, J=E.J)
            f = lambda n: asympt_mean(n, E)  # noqa: E731
            ex = (lambda n: mu[n]) if have_exact else None  # noqa: E731
        else:
            if params.symmetric:
                f = lambda n: 1.0  # noqa: E731
            else:
                VE = variance_fluctuation(params, K=args.K)
                meta.update(fourier_truncation=VE.QV.truncation_bound, routes=VE.routes)
                f = VE
            ex = (lambda n: m2[n] - mu[n] ** 2) if have_exact else None  # noqa: E731
        out = Output(cols, meta=meta)
        for n in ns:
            a = float(f(n))
            e = float(ex(n)) if ex else math.nan
            out.rows.append([n, "", a, e, e - a])
        return out

    out = Output(["n", "k", "asymptotic", "exact", "residual"], meta=meta)
    for n in ns:
        D = asympt_density(n, params)
        table = float_pmf_table(params, n, D.K + max(D.terms) + 2)[n] if have_exact else None
        out.meta.setdefault("totals", {})[str(n)] = D.total()
        for k, v in sorted(D.terms.items()):
            value = D.K + k
            if q == "cdf":
                v = asympt_cdf(n, k, params)
                e = float(np.sum(table[: value + 1])) if table is not None and value >= 0 else (0.0 if table is not None else math.nan)
            else:
                e = float(table[value]) if table is not None and 0 <= value < len(table) else (0.0 if table is not None else math.nan)
            out.rows.append([n, value, v, e, e - v])
    return out


# ---------------------------------------------------------------------------
# figure


def figure_data(which: str, params: SplitParams, ns: range, K: int | None = None) -> Output:
    from .asymptotics import mean_fluctuation_curve, variance_fluctuation_curve, log_base, mean_constant, variance_fluctuation

    ns = list(ns)
    u = log_base(np.array(ns, dtype=float), params)
    if which == "fig3":
        K = 5 if K is None else K
        E = mean_constant(params)
        series = E.Q.truncated(K)
        approx = mean_fluctuation_curve(params, ns, E)
        meta = {"phi_star_0": E.phi_star_0, "C": E.C}
    else:
        K = 4 if K is None else K
        if params.symmetric:
            from .asymptotics import FourierSeries

            series = FourierSeries({0: 1.0}, "Q_V")
        else:
            series = variance_fluctuation(params, K=max(K, 10)).QV.truncated(K)
        approx = variance_fluctuation_curve(params, ns)
        meta = {"c0": 1.0 / params.log_inv_p**2}
    fourier = series(u)
    gap = np.abs(approx - fourier)
    out = Output(["n", "u", "approximation", "fourier"])
    out.meta = {
        "command": "figure",
        "figure": which,
        "p": str(params),
        "fourier_terms": K,
        "fourier_truncation_bound": series.truncation_bound,
        "max_gap": float(gap.max()),
        "argmax_gap_n": int(ns[int(gap.argmax())]),
        **meta,
    }
    for n, uu, a, f in zip(ns, u, approx, fourier):
        out.rows.append([n, float(uu), float(a), float(f)])
    return out


def cmd_figure(args) -> Output:
    params = parse_p(args.p)
    ns = parse_n_range(args.n) if args.n else range(round(params.b**4 / params.a**4), round(params.b**7 / params.a**7) + 1)
    if ns.start < 1:
        raise UsageError("figure n-range must start at 1 or later")
    return figure_data(args.which, params, ns, args.K)


# ---------------------------------------------------------------------------
# simulate


def _sim_exact_laws(model: str, n: int, p: Fraction | None, m: int | None) -> dict[str, ExactPmf]:
    if model in ("parking", "parking_split"):
        return {model: exact_pgf_Y(m, n)}
    if model == "patricia":
        return {
            "patricia_depth": exact_pmf_Z(SplitParams(p, "Z"), n),
            "patricia_left_arm": exact_pmf_W(SplitParams(p, "W"), n),
        }
    return {model: exact_pmf_W(SplitParams(p, "W"), n)}


def cmd_simulate(args) -> Output:
    from .simulators import goodness_of_fit, run_trials

    model = args.model
    if args.n is None or args.n < 1:
        raise UsageError("simulate needs --n >= 1")
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, "0"))
    p = m = None
    if model.startswith("parking"):
        if args.m is None:
            raise UsageError("parking needs --m")
        params = {"n": args.n, "m": args.m}
        m = args.m
    else:
        if args.p is None:
            raise UsageError(f"model {model} needs --p")
        p = parse_rational(args.p)
        if not 0 < p < 1:
            raise UsageError("p must lie in (0, 1)")
        params = {"n": args.n, "p": float(p)}
    hists = run_trials(model, params, args.trials, seed, args.workers)
    laws = _sim_exact_laws(model, args.n, p, m)
    out = Output(["statistic", "value", "count", "frequency", "exact"])
    fits = {}
    failed = False
    for name, h in hists.items():
        law = laws[name]
        rep = None
        if h.trials >= 2:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rep = goodness_of_fit(h, law)
            fits[name] = {
                "chi2": rep.statistic,
                "dof": rep.dof,
                "p_value": rep.p_value,
                "tv_distance": rep.tv_distance,
                "passes_0.01": rep.passes(0.01),
            }
            failed |= not rep.passes(0.01)
        probs = law.as_floats()
        for v in sorted(set(h.counts) | set(probs)):
            c = h.counts.get(v, 0)
            out.rows.append([name, v, c, c / h.trials, probs.get(v, 0.0)])
    out.meta = {
        "command": "simulate",
        "model": model,
        "n": args.n,
        "p": None if p is None else f"{p.numerator}/{p.denominator}",
        "m": m,
        "trials": args.trials,
        "seed": seed,
        "fit": fits,
    }
    out.meta["fit_failed"] = failed
    return out


# ---------------------------------------------------------------------------
# validate


@dataclass
class Check:
    name: str
    fn: Callable[[], tuple[bool, str]]


def validation_checks(p_list: list[SplitParams], n_cap: int, fault: str | None = None) -> list[Check]:
    """The cross-check suite, in execution order."""
    from .asymptotics import asympt_mean, mean_constant, phi_star, phi_star_quadrature, variance_fluctuation
    from .density import id_density_sum
    from .poisson import poissonized_eval
    from .simulators import run_trials
    from .special import cpow, gamma

    checks: list[Check] = []
    add = lambda name: lambda fn: checks.append(Check(name, fn)) or fn  # noqa: E731
    half = SplitParams(Fraction(1, 2))
    nc = min(n_cap, 30)

    @add("exact laws sum to one")
    def _():
        for P in p_list:
            laws = [exact_pmf_X(P, n) for n in range(0, n_cap + 1, max(1, n_cap // 8))]
            # the depth and left-arm recurrences fill every size up to n on the way
            laws += [exact_pmf_Z(P.with_model("Z"), nc), exact_pmf_W(P.with_model("W"), nc)]
            for law in laws:
                if sum(law.probs.values()) != 1:
                    return False, f"{law.model} at p={P}, n={law.n}"
        return True, f"X up to n={n_cap}, Z and W at n={nc}"

    @add("parking law equals X at p=1/(m+1)")
    def _():
        for m in (1, 2, 3):
            P = SplitParams(Fraction(1, m + 1))
            for n in range(nc + 1):
                if exact_pgf_Y(m, n).probs != exact_pmf_X(P, n).probs:
                    return False, f"m={m}, n={n}"
        return True, f"m in 1..3, n <= {nc}"

    @add("depth and left arm equal X at p=1/2")
    def _():
        for n in range(nc + 1):
            if exact_pmf_Z(half.with_model("Z"), n + 1).probs != exact_pmf_X(half, n).probs:
                return False, f"Z at n={n + 1}"
            if exact_pmf_W(half.with_model("W"), n).probs != exact_pmf_X(half, n).probs:
                return False, f"W at n={n}"
        return True, f"n <= {nc}"

    @add("mean monotone and variance non-negative")
    def _():
        for P in p_list:
            mu, m2 = float_moments(P, max(n_cap, 200))
            if np.any(np.diff(mu) < -1e-12):
                return False, f"mean decreases at p={P}"
            if np.any(m2 - mu**2 < -1e-9):
                return False, f"negative variance at p={P}"
        return True, ""

    @add("Poisson transform of the mean at p=1/2")
    def _():
        for x in (1.0, 10.0, 100.0):
            v = poissonized_eval("f1", half, x)
            ref = math.fsum(-math.expm1(-x / 2**k) for k in range(1, 80))
            if abs(v.value - ref) > v.error_bound + 1e-13:
                return False, f"x={x}: {v.value} vs {ref}"
        return True, ""

    @add("Gamma recurrence and symmetry")
    def _():
        for re in np.linspace(-4.7, 150.3, 12):
            for im in np.linspace(-180, 180, 9):
                z = complex(re, im)
                g = gamma(z)
                if abs(gamma(z + 1) - z * g) > 1e-12 * abs(z * g):
                    return False, f"recurrence at {z}"
                if abs(gamma(z.conjugate()) - g.conjugate()) > 1e-14 * abs(g):
                    return False, f"conjugate symmetry at {z}"
        return True, ""

    @add("p^chi_k = 1")
    def _():
        for P in p_list:
            for k in range(-10, 11):
                s = complex(0, 2 * k * math.pi / P.log_inv_p)
                if abs(cpow(P.float_p, s) - 1) > 1e-14:
                    return False, f"p={P}, k={k}"
        return True, ""

    expansions = {}

    def expansion(P):
        if P.p not in expansions:
            E = mean_constant(P)
            if fault == "q1-sign":
                E.Q.coefficients[1] = -E.Q.coefficients[1]
            expansions[P.p] = E
        return expansions[P.p]

    @add("Q real-valuedness")
    def _():
        us = np.linspace(0, 1, 17)[:-1]
        for P in p_list:
            z = expansion(P).Q.evaluate_complex(us)
            worst = float(np.max(np.abs(z.imag)))
            if worst > 1e-12:
                return False, f"p={P}: max |Im Q(u)| = {worst:.3g}"
        return True, ""

    @add("Q periodicity")
    def _():
        us = np.linspace(0, 1, 17)
        for P in p_list:
            Q = expansion(P).Q
            d = float(np.max(np.abs(Q(us + 1) - Q(us))))
            if d > 1e-12:
                return False, f"p={P}: {d:.3g}"
        return True, ""

    @add("Q_V real-valuedness")
    def _():
        us = np.linspace(0, 1, 17)[:-1]
        for P in p_list:
            if P.symmetric:
                continue
            z = variance_fluctuation(P).QV.evaluate_complex(us)
            if float(np.max(np.abs(z.imag))) > 1e-12:
                return False, f"p={P}"
        return True, ""

    @add("phi* series versus quadrature")
    def _():
        for P in p_list:
            for k in (0, 1):
                s = phi_star(k, P).value
                qv = phi_star_quadrature(k, P).value
                if abs(s - qv) > 1e-8:
                    return False, f"p={P}, k={k}: |diff| = {abs(s - qv):.3g}"
        return True, ""

    @add("mean residual decreases")
    def _():
        for P in p_list:
            base = P.b / P.a
            ns = [round(base**e) for e in range(4, 9) if round(base**e) <= max(n_cap, 4096)]
            if P.a != 1:
                continue
            mu, _ = float_moments(P, ns[-1])
            E = expansion(P)
            errs = [abs(mu[n] - asympt_mean(n, E)) for n in ns]
            if any(b >= a for a, b in zip(errs, errs[1:])):
                return False, f"p={P}: residuals {errs}"
        return True, ""

    @add("density identity")
    def _():
        for P in p_list:
            v = id_density_sum(100.0, P)
            if abs(v - 1) > 1e-8:
                return False, f"p={P}: {v}"
        return True, ""

    @add("simulation determinism")
    def _():
        a = run_trials("patricia", {"n": 8, "p": 0.5}, 200, 11)
        b = run_trials("patricia", {"n": 8, "p": 0.5}, 200, 11)
        same = all(a[k].counts == b[k].counts for k in a)
        return same, ""

    return checks


def cmd_validate(args) -> Output:
    p_list = [parse_p(t.strip()) for t in args.p.split(",") if t.strip()]
    if not p_list:
        raise UsageError("empty --p list")
    out = Output(["check", "status", "detail"])
    failed = None
    for chk in validation_checks(p_list, args.n_cap, args.inject_fault):
        try:
            ok, detail = chk.fn()
        except BinsplitError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.rows.append([chk.name, "PASS" if ok else "FAIL", detail])
        if not ok and failed is None:
            failed = chk.name
            if not args.keep_going:
                break
    out.meta = {
        "command": "validate",
        "p": [str(P) for P in p_list],
        "n_cap": args.n_cap,
        "first_failure": failed,
    }
    return out


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="binsplit",
        description=__doc__.split("\n\n")[0],
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--output", "-o", help="write to this file instead of stdout")

    sp = sub.add_parser("exact", help="exact laws; CSV columns n,k,probability")
    sp.add_argument("--p", help='splitting probability as "a/b"')
    sp.add_argument("--model", choices=("X", "Y", "Z", "W"), default="X")
    sp.add_argument("--m", type=int, help="parking parameter for model Y (p = 1/(m+1))")
    sp.add_argument("--n", required=True, help="N or A:B")
    common(sp)

    sp = sub.add_parser("asympt", help="asymptotic values next to exact ones; columns n,k,asymptotic,exact,residual")
    sp.add_argument("--p", required=True)
    sp.add_argument("--quantity", choices=("mean", "var", "pmf", "cdf"), default="mean")
    sp.add_argument("--n", required=True)
    sp.add_argument("--K", type=int, default=10, help="Fourier truncation")
    sp.add_argument("--J", type=int, default=None, help="series truncation (default: from the tail bound)")
    common(sp)

    sp = sub.add_parser("figure", help="fluctuation curves; columns n,u,approximation,fourier")
    sp.add_argument("which", choices=("fig3", "fig4"))
    sp.add_argument("--p", default="1/3")
    sp.add_argument("--n", help="n-range A:B (default (1/p)^4 : (1/p)^7)")
    sp.add_argument("--K", type=int, default=None, help="oscillating Fourier terms (default 5 for fig3, 4 for fig4)")
    common(sp)

    sp = sub.add_parser("simulate", help="Monte Carlo; columns statistic,value,count,frequency,exact")
    sp.add_argument("--model", choices=("parking", "parking_split", "patricia", "geometric", "urn"), required=True)
    sp.add_argument("--p")
    sp.add_argument("--n", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--trials", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--assert-fit", action="store_true", help="exit 5 if the chi-square test fails at 0.01")
    common(sp)

    sp = sub.add_parser("validate", help="run the cross-check suite; columns check,status,detail")
    sp.add_argument("--p", default="1/2,1/3,1/4", help="comma-separated list")
    sp.add_argument("--n-cap", type=int, default=64)
    sp.add_argument("--inject-fault", choices=("q1-sign",), default=None)
    sp.add_argument("--keep-going", action="store_true")
    common(sp)
    return ap


COMMANDS = {
    "exact": cmd_exact,
    "asympt": cmd_asympt,
    "figure": cmd_figure,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    try:
        out = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"binsplit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimitError as exc:
        print(f"binsplit: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (NonConvergenceError, ToleranceError) as exc:
        print(f"binsplit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ParameterError as exc:
        print(f"binsplit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = out.render(args.format)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            sys.stdout = None
    if args.command == "validate" and out.meta.get("first_failure"):
        print(f"binsplit: validation failed: {out.meta['first_failure']}", file=sys.stderr)
        return EXIT_FAIL
    if args.command == "simulate" and args.assert_fit and out.meta.get("fit_failed"):
        print("binsplit: simulated histogram does not fit the exact law at 0.01", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
