"""Command-line front end.

Every subcommand writes CSV (12 significant digits) to ``--out`` or stdout.
Exit codes: 0 success, 1 failed check, 2 unreadable input or bad usage,
3 input outside the domain of the computation.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from riskalloc import calibration, mortality as mp, oracle
from riskalloc.errors import ConvergenceError, DomainError, ParseError, ShapeError
from riskalloc.exp_pricing import RiskAversionSchedule
from riskalloc.market import RateCurve, _read_two_columns
from riskalloc.tables import bundled_table

EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_DOMAIN = 0, 1, 2, 3

DEFAULT_ALPHAS = ("1.0", "1.5", "2.0", "2.5", "3.0", "fit:a=0.6,b=0.36")
BOUND_SLACK = 1e-12


class UsageError(Exception):
    pass


class CheckFailure(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    v = float(x)
    return "0" if v == 0 else f"{v:.12g}"


@dataclass(frozen=True)
class AlphaSpec:
    """One way of choosing the risk aversions for a contract of a given term."""

    label: str
    constant: float | None = None
    family: calibration.AlphaFamily | None = None
    values: tuple | None = None

    def schedule(self, term: int) -> RiskAversionSchedule:
        if self.constant is not None:
            return RiskAversionSchedule.constant(self.constant, term)
        if self.family is not None:
            return self.family.schedule(term)
        if len(self.values) < term:
            raise DomainError(f"{len(self.values)} risk aversions given for a term of {term}")
        return RiskAversionSchedule(self.values[:term])


def _parse_family(text: str) -> calibration.AlphaFamily:
    body = text.split(":", 1)[1] if text.startswith("fit:") else text
    parts = [p.strip() for p in body.split(",")]
    if len(parts) != 2:
        raise UsageError(f"alpha family needs two parameters, got {text!r}")
    try:
        if all("=" in p for p in parts):
            kv = dict(p.split("=", 1) for p in parts)
            return calibration.AlphaFamily(float(kv["a"]), float(kv["b"]))
        return calibration.AlphaFamily(float(parts[0]), float(parts[1]))
    except (KeyError, ValueError):
        raise UsageError(f"cannot read alpha family {text!r}") from None


def _parse_alpha(text: str) -> AlphaSpec:
    if text.startswith("fit:"):
        fam = _parse_family(text)
        return AlphaSpec("IP_fit", family=fam)
    try:
        a = float(text)
    except ValueError:
        raise UsageError(f"cannot read alpha {text!r}") from None
    return AlphaSpec(f"IP_{a!r}", constant=a)


def _parse_alpha_list(text: str) -> AlphaSpec:
    path = Path(text)
    if path.is_file():
        values = []
        for line, t, value in _read_two_columns(path, ("t", "alpha")):
            if t != len(values) + 1:
                raise ParseError(f"expected t={len(values) + 1}, got {t}", path, line)
            values.append(value)
    else:
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--alpha-list is neither a file nor a comma list: {text!r}") from None
    return AlphaSpec("IP_list", values=tuple(values))


def alpha_specs(args) -> list[AlphaSpec]:
    specs = [_parse_alpha(a) for a in (args.alpha or [])]
    if args.alpha_family:
        specs.append(AlphaSpec("IP_fit", family=_parse_family(args.alpha_family)))
    if args.alpha_list:
        specs.append(_parse_alpha_list(args.alpha_list))
    labels = [s.label for s in specs]
    if labels.count("IP_fit") > 1:
        specs = [
            AlphaSpec(f"IP_fit_{s.family.a!r}_{s.family.b!r}", family=s.family) if s.family else s
            for s in specs
        ]
    return specs


def single_alpha(args) -> AlphaSpec:
    specs = alpha_specs(args)
    if len(specs) != 1:
        raise UsageError("give exactly one of --alpha, --alpha-family, --alpha-list")
    return specs[0]


def load_mortality(args) -> mp.MortalityCurve:
    return mp.MortalityCurve.from_csv(args.mortality) if args.mortality else bundled_table()


def load_rates(args, term: int) -> RateCurve:
    if args.rates:
        curve = RateCurve.from_csv(args.rates)
        if curve.term < term:
            raise DomainError(f"rate table has {curve.term} periods, {term} needed")
        return curve.truncated(term)
    return RateCurve.flat(args.rate, term)


def contract_term(args, table: mp.MortalityCurve) -> int:
    term = args.term if args.term is not None else table.term
    if term < 1:
        raise UsageError("--term must be at least 1")
    if term > table.term:
        raise DomainError(f"mortality table covers {table.term} periods, term {term} requested")
    return term


def _contract(args):
    table = load_mortality(args)
    T = contract_term(args, table)
    curve = load_rates(args, T)
    mort = table.truncated(T)
    claim = mp.term_claim(curve, args.benefit, args.survival)
    return T, mort, curve, claim


def _check_bounds(h, lower, upper, where):
    scale = max(1.0, abs(lower), abs(upper))
    if h < lower - BOUND_SLACK * scale or h > upper + BOUND_SLACK * scale:
        raise CheckFailure(f"{where}: premium {h!r} outside [{lower!r}, {upper!r}]")


def _write(out, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header is not None:
        writer.writerow(header)
    writer.writerows([[fmt(v) for v in row] for row in rows])
    out.write(buf.getvalue())


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_price(args, out):
    spec = single_alpha(args)
    T, mort, curve, claim = _contract(args)
    rep = mp.indifference_premium(spec.schedule(T), mort, claim)
    _check_bounds(rep.premium, *rep.bounds, f"T={T}")
    row = [
        T, rep.premium, rep.expected_claim, rep.max_claim,
        mp.tp1(curve, mort, args.benefit),
        mp.tp2(curve, mort, args.loading, args.benefit),
    ]
    _write(out, ["T", "H", "E_Z", "H_inf", "TP1", "TP2"], [row])


def sweep_columns(args) -> dict:
    table = load_mortality(args)
    max_term = args.max_term if args.max_term is not None else (args.term or table.term)
    if max_term < 1:
        raise UsageError("--max-term must be at least 1")
    if max_term > table.term:
        raise DomainError(f"mortality table covers {table.term} periods, {max_term} requested")
    specs = alpha_specs(args)
    if not specs:
        specs = [_parse_alpha(a) for a in DEFAULT_ALPHAS]
    rates = load_rates(args, max_term)
    columns = {"T": [], "TP1": [], "TP2": []}
    columns.update({s.label: [] for s in specs})
    for T in range(1, max_term + 1):
        mort, curve = table.truncated(T), rates.truncated(T)
        claim = mp.term_claim(curve, args.benefit, args.survival)
        columns["T"].append(T)
        columns["TP1"].append(mp.tp1(curve, mort, args.benefit))
        columns["TP2"].append(mp.tp2(curve, mort, args.loading, args.benefit))
        for s in specs:
            rep = mp.indifference_premium(s.schedule(T), mort, claim)
            _check_bounds(rep.premium, *rep.bounds, f"T={T} {s.label}")
            columns[s.label].append(rep.premium)
    return columns


def cmd_sweep(args, out):
    columns = sweep_columns(args)
    _write(out, list(columns), zip(*columns.values()))
    if args.plot:
        from riskalloc.plotting import plot_sweep

        plot_sweep(columns, args.plot)


def cmd_allocate(args, out):
    spec = single_alpha(args)
    T, mort, curve, claim = _contract(args)
    alloc = mp.premium_allocation(spec.schedule(T), mort, claim, curve, args.wealth)
    disc = alloc.discounted(curve)
    rows = []
    for t in range(1, T + 1):
        labels = [f"died_{s}" for s in range(1, t + 1)] + ["alive"]
        rows.extend([t, lab, x, xd] for lab, x, xd in zip(labels, alloc[t], disc[t]))
    _write(out, ["t", "atom", "X", "X_discounted"], rows)


def cmd_bounds(args, out):
    spec = single_alpha(args)
    T, mort, curve, claim = _contract(args)
    schedule = spec.schedule(T)
    rep = mp.indifference_premium(schedule, mort, claim)
    zero, inf = mp.limit_premiums(schedule, mort, claim)
    _check_bounds(rep.premium, *rep.bounds, f"T={T}")
    _write(
        out,
        ["T", "E_Z", "H", "H_inf", "zero_limit", "infinity_limit"],
        [[T, rep.expected_claim, rep.premium, rep.max_claim, zero, inf]],
    )


def cmd_scale(args, out):
    if args.pi is None:
        raise UsageError("scale needs --pi")
    spec = single_alpha(args)
    T, mort, curve, claim = _contract(args)
    schedule = spec.schedule(T)
    p = mp.solve_scale(schedule, mort, claim, args.pi)
    h = mp.indifference_premium(schedule.scaled(p), mort, claim).premium
    _write(out, ["T", "pi", "p", "H"], [[T, args.pi, p, h]])


def _read_target(path):
    values = []
    for line, T, value in _read_two_columns(path, ("T", "premium")):
        if T != len(values) + 1:
            raise ParseError(f"expected T={len(values) + 1}, got {T}", path, line)
        values.append(value)
    if not values:
        raise ParseError("no data rows", path)
    return np.array(values)


def cmd_calibrate(args, out):
    table = load_mortality(args)
    if args.target:
        target = _read_target(args.target)
    else:
        horizon = args.max_term or table.term
        rates = load_rates(args, horizon)
        target = np.array([
            mp.tp2(rates.truncated(T), table.truncated(T), args.loading)
            for T in range(1, horizon + 1)
        ])
    horizon = target.size
    if horizon > table.term:
        raise DomainError(f"mortality table covers {table.term} periods, target has {horizon}")
    rates = load_rates(args, horizon)
    mort = table.truncated(horizon)
    initial = _parse_family(args.initial)
    fit = calibration.fit_alpha(
        target, mort, rates, initial=(initial.a, initial.b), restarts=args.restarts, seed=args.seed
    )
    fitted = target + fit.residuals
    _write(out, ["a", "b", "rss", "iterations"], [[fit.a, fit.b, fit.rss, fit.iterations]])
    out.write("\n")
    terms = np.arange(1, horizon + 1)
    _write(
        out,
        ["T", "alpha", "target", "premium", "residual"],
        zip(terms, fit.family(terms), target, fitted, fit.residuals),
    )
    if args.plot:
        from riskalloc.plotting import plot_fit

        plot_fit(terms, target, fitted, args.plot, label=f"IP fit a={fit.a:.3g}, b={fit.b:.3g}")


def cmd_oracle_check(args, out):
    results = oracle.run_agreement_suite(
        seed=args.seed, n_fixtures=args.fixtures, max_depth=args.max_depth,
        inject_fault=args.inject_fault,
    )
    header = ["fixture", "kind", "T", "allocation_diff", "objective_diff",
              "fo_closed", "fo_oracle", "iterations", "passed"]
    _write(out, header, [
        [r.index, r.kind, r.depth, r.allocation_diff, r.objective_diff,
         r.fo_closed, r.fo_oracle, r.iterations, r.passed]
        for r in results
    ])
    worst = {
        name: max(getattr(r, name) for r in results)
        for name in ("allocation_diff", "objective_diff", "fo_closed", "fo_oracle")
    }
    failed = [r for r in results if not r.passed]
    summary = " ".join(f"{k}={v:.3e}" for k, v in worst.items())
    print(f"{'FAIL' if failed else 'PASS'} {len(results) - len(failed)}/{len(results)} {summary}",
          file=sys.stderr)
    if failed:
        for r in failed:
            print(f"# failing fixture {r.index} ({r.kind})", file=sys.stderr)
            print(oracle.write_fixture(r.fixture), file=sys.stderr)
        raise CheckFailure(f"{len(failed)} fixture(s) failed")


COMMANDS = {
    "price": (cmd_price, "indifference premium of one contract with TP1/TP2 alongside"),
    "sweep": (cmd_sweep, "premiums for every term 1..max-term"),
    "allocate": (cmd_allocate, "optimal allocation of w + H(Z) - Z on the death-time tree"),
    "bounds": (cmd_bounds, "premium bounds and risk-aversion limits"),
    "scale": (cmd_scale, "scale the risk aversions to hit a target premium"),
    "calibrate": (cmd_calibrate, "fit alpha(t) = a + b sqrt(t) to a target premium curve"),
    "oracle-check": (cmd_oracle_check, "closed forms versus brute-force optimisation"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mortality", help="CSV with header t,q (default: bundled synthetic table)")
    rate = common.add_mutually_exclusive_group()
    rate.add_argument("--rate", type=float, default=0.02, help="flat per-period rate (default 0.02)")
    rate.add_argument("--rates", help="CSV with header t,rate")
    common.add_argument("--alpha", action="append",
                        help="constant risk aversion, or fit:a=A,b=B; repeatable for sweep")
    common.add_argument("--alpha-family", help="a,b for alpha(t) = a + b sqrt(t)")
    common.add_argument("--alpha-list", help="per-period alphas: comma list or CSV t,alpha")
    common.add_argument("--term", type=int)
    common.add_argument("--max-term", type=int)
    common.add_argument("--benefit", type=float, default=1.0)
    common.add_argument("--survival", type=float, default=0.0, help="payout on survival past the term")
    common.add_argument("--wealth", type=float, default=0.0)
    common.add_argument("--loading", type=float, default=0.01, help="TP2 loading coefficient")
    common.add_argument("--target", help="CSV with header T,premium")
    common.add_argument("--initial", default="1.0,0.1", help="starting a,b for calibrate")
    common.add_argument("--restarts", type=int, default=0)
    common.add_argument("--pi", type=float, help="target premium for scale")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--fixtures", type=int, default=50)
    common.add_argument("--max-depth", type=int, default=4)
    common.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    common.add_argument("--plot", help="also render a PNG/PDF figure (sweep, calibrate)")
    common.add_argument("--out", help="output path (default stdout)")

    parser = argparse.ArgumentParser(
        prog="riskalloc", description="Exponential-utility indifference premiums for term insurance."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    buf = io.StringIO()
    try:
        func(args, buf)
    except (ParseError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DomainError, ShapeError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except CheckFailure as exc:
        _emit(args, buf)
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    _emit(args, buf)
    return EXIT_OK


def _emit(args, buf):
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


if __name__ == "__main__":
    sys.exit(main())
