"""Brute-force verification of optimal allocations on small trees.

The optimiser here knows nothing about the exponential closed forms: it maximises
``sum_t E[u_t(X_t / B_t)]`` directly over admissible allocations for arbitrary
concave utilities. The first-order and Pareto checks test the martingale
property of marginal utilities.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from riskalloc.errors import ConvergenceError, DomainError, ParseError, ShapeError
from riskalloc.exp_pricing import RiskAversionSchedule
from riskalloc.market import RateCurve
from riskalloc.tree import (
    AdaptedProcess,
    EventTree,
    conditional_expectation,
    expectation,
    terminal_values,
)

DEFAULT_MAX_DEPTH = 6


@dataclass(frozen=True)
class UtilitySpec:
    """Per-period utilities as paired evaluators ``value(t, x)`` and ``derivative(t, x)``.

    ``t`` runs over ``1..term``; ``x`` is a discounted amount (array).
    """

    value: Callable
    derivative: Callable
    term: int

    @classmethod
    def exponential(cls, schedule: RiskAversionSchedule) -> "UtilitySpec":
        alpha = schedule.alpha.copy()

        def value(t, x):
            return -np.expm1(-alpha[t - 1] * x) / alpha[t - 1]

        def derivative(t, x):
            return np.exp(-alpha[t - 1] * x)

        return cls(value, derivative, schedule.term)

    def scaled(self, weights) -> "UtilitySpec":
        """Utilities ``v_t = weights_t * u_t``."""
        c = np.asarray(weights, dtype=float).reshape(-1)
        if c.size != self.term or np.any(c <= 0):
            raise DomainError(f"need {self.term} positive weights")
        base_v, base_d = self.value, self.derivative
        return UtilitySpec(
            lambda t, x: c[t - 1] * base_v(t, x),
            lambda t, x: c[t - 1] * base_d(t, x),
            self.term,
        )

    def validate(self, probes=None) -> None:
        """Spot-check positive marginal utility and strict concavity on a probe grid."""
        grid = np.linspace(-5.0, 5.0, 41) if probes is None else np.asarray(probes, dtype=float)
        for t in range(1, self.term + 1):
            if np.any(self.derivative(t, grid) <= 0):
                raise DomainError(f"u_{t}' is not positive on the probe grid")
            slopes = np.diff(self.value(t, grid)) / np.diff(grid)
            if np.any(np.diff(slopes) >= 0):
                raise DomainError(f"u_{t} is not strictly concave on the probe grid")


@dataclass(frozen=True)
class OptimizationReport:
    allocation: AdaptedProcess
    objective: float
    gradient_norm: float
    iterations: int
    history: np.ndarray


class FirstOrderCheck(NamedTuple):
    passed: bool
    max_residual: float


class ParetoCertificate(NamedTuple):
    success: bool
    weights: np.ndarray
    max_residual: float


def _check_inputs(tree, curve, utilities):
    if utilities.term != tree.depth:
        raise ShapeError(f"{utilities.term} utilities for a tree of depth {tree.depth}")
    if curve.term < tree.depth:
        raise ShapeError(f"rate curve covers {curve.term} periods, tree has depth {tree.depth}")


def solve_problem_p(
    tree: EventTree,
    curve: RateCurve,
    utilities: UtilitySpec,
    w,
    tolerance: float = 1e-10,
    max_iterations: int = 100_000,
    initial=None,
    max_depth: int = DEFAULT_MAX_DEPTH,
    armijo: float = 1e-4,
) -> OptimizationReport:
    """Maximise ``sum_t E[u_t(X~_t)]`` over allocations with ``sum_t X~_t = W`` pathwise.

    The discounted values on levels ``1..T-1`` are free; the terminal level is
    ``W`` minus the path sum, so every iterate is admissible. Steps follow the
    gradient taken with respect to the ``L^2(P)`` inner product (the raw gradient
    divided by node probability), whose entries are
    ``u_t'(X~_t) - E[u_T'(X~_T) | node]``. The first trial step is 1, later ones
    are Barzilai-Borwein estimates; backtracking halves the step until the Armijo
    condition holds, so the objective never decreases beyond rounding. Stops when
    the sup-norm of that gradient is below ``tolerance``.

    ``initial``, if given, is a list of discounted arrays for levels ``1..T-1``.
    """
    _check_inputs(tree, curve, utilities)
    T = tree.depth
    if T > max_depth:
        raise DomainError(f"tree depth {T} exceeds the oracle cap {max_depth}")
    if tolerance <= 0:
        raise DomainError("tolerance must be positive")
    w = terminal_values(tree, w)
    pi = [tree.node_probabilities(t) for t in range(T + 1)]
    anc = [None] + [tree.ancestors(T, t) for t in range(1, T)]
    live = [None] + [pi[t] > 0 for t in range(1, T)]

    if initial is None:
        start = expectation(tree, w) / T
        xs = [np.full(tree.size(t), start) for t in range(1, T)]
    else:
        xs = [np.array(v, dtype=float).reshape(-1) for v in initial]
        if len(xs) != T - 1 or any(x.size != tree.size(t) for t, x in enumerate(xs, 1)):
            raise ShapeError("initial point must give values on levels 1..T-1")

    def terminal(xs):
        out = w.copy()
        for t in range(1, T):
            out -= xs[t - 1][anc[t]]
        return out

    def objective(xs):
        total = float(np.dot(pi[T], utilities.value(T, terminal(xs))))
        for t in range(1, T):
            total += float(np.dot(pi[t], utilities.value(t, xs[t - 1])))
        return total

    def direction(xs):
        m_T = pi[T] * utilities.derivative(T, terminal(xs))
        out = []
        for t in range(1, T):
            tail = np.bincount(anc[t], weights=m_T, minlength=tree.size(t))
            d = np.zeros(tree.size(t))
            ok = live[t]
            d[ok] = utilities.derivative(t, xs[t - 1][ok]) - tail[ok] / pi[t][ok]
            out.append(d)
        return out

    def weighted_sq(ds):
        return sum(float(np.dot(pi[t], d * d)) for t, d in enumerate(ds, 1))

    def report(xs, f, gnorm, it, history):
        disc = list(xs) + [terminal(xs)]
        alloc = AdaptedProcess(
            tree, tuple(curve.bond_prices[t] * disc[t - 1] for t in range(1, T + 1))
        )
        return OptimizationReport(alloc, f, gnorm, it, np.array(history))

    f = objective(xs)
    history = [f]
    d = direction(xs)
    gnorm = max((float(np.max(np.abs(v))) for v in d), default=0.0)
    it = 0
    initial_step = 1.0
    while gnorm >= tolerance:
        if it >= max_iterations:
            raise ConvergenceError(
                f"gradient norm {gnorm:.3e} after {it} iterations",
                report(xs, f, gnorm, it, history),
            )
        slope = weighted_sq(d)
        step = initial_step
        while True:
            trial = [x + step * v for x, v in zip(xs, d)]
            with np.errstate(over="ignore", invalid="ignore"):
                f_trial = objective(trial)
            if f_trial >= f + armijo * step * slope:
                break
            # Near the optimum the Armijo gain drops below rounding in the objective;
            # fall back to the slope test along the ray.
            if abs(f_trial - f) <= 1e-14 * (1.0 + abs(f)):
                d_trial = direction(trial)
                along = sum(float(np.dot(pi[t], a * b)) for t, (a, b) in enumerate(zip(d_trial, d), 1))
                if along >= -(1.0 - 2.0 * armijo) * slope:
                    break
            step *= 0.5
            if step < 1e-30:
                raise ConvergenceError(
                    "line search failed", report(xs, f, gnorm, it, history)
                )
        d_new = direction(trial)
        # Barzilai-Borwein trial step for the next search, in the same metric
        moved = [a - b for a, b in zip(trial, xs)]
        curv = -sum(
            float(np.dot(pi[t], s_ * (a - b))) for t, (s_, a, b) in enumerate(zip(moved, d_new, d), 1)
        )
        initial_step = min(max(weighted_sq(moved) / curv, 1e-10), 1e10) if curv > 0 else 1.0
        xs, f, d = trial, f_trial, d_new
        history.append(f)
        gnorm = max(float(np.max(np.abs(v))) for v in d)
        it += 1
    return report(xs, objective(xs), gnorm, it, history)


def _marginals(tree, curve, utilities, allocation):
    _check_inputs(tree, curve, utilities)
    if not allocation.tree.same_as(tree):
        raise ShapeError("allocation does not live on this tree")
    disc = allocation.discounted(curve)
    return [utilities.derivative(t, disc[t]) for t in range(1, tree.depth + 1)]


def _martingale_residual(tree, m):
    """Largest ``|E_{t-1}[m_t] - m_{t-1}| / m_{t-1}`` over all nodes with positive probability."""
    worst = 0.0
    for t in range(2, tree.depth + 1):
        cond = conditional_expectation(tree, m[t - 1], t, t - 1)
        ok = tree.node_probabilities(t - 1) > 0
        if np.any(ok):
            rel = np.abs(cond[ok] - m[t - 2][ok]) / np.abs(m[t - 2][ok])
            worst = max(worst, float(np.max(rel)))
    return worst


def check_first_order(
    tree: EventTree,
    curve: RateCurve,
    utilities: UtilitySpec,
    allocation: AdaptedProcess,
    tolerance: float = 1e-10,
) -> FirstOrderCheck:
    """Is ``u_t'(X~_t)`` a martingale? Residuals are relative to the previous marginal utility."""
    residual = _martingale_residual(tree, _marginals(tree, curve, utilities, allocation))
    return FirstOrderCheck(residual < tolerance, residual)


def recover_pareto_weights(
    tree: EventTree,
    curve: RateCurve,
    utilities: UtilitySpec,
    allocation: AdaptedProcess,
    tolerance: float = 1e-6,
) -> ParetoCertificate:
    """Find ``lambda`` (with ``lambda_1 = 1``) making ``lambda_t u_t'(X~_t)`` a martingale.

    A martingale has constant mean, so ``lambda_t = E[u_1'] / E[u_t']`` is the only
    candidate; it is accepted if the full conditional property holds.
    """
    m = _marginals(tree, curve, utilities, allocation)
    means = np.array([expectation(tree, m[t - 1], t) for t in range(1, tree.depth + 1)])
    weights = means[0] / means
    residual = _martingale_residual(tree, [weights[t] * m[t] for t in range(tree.depth)])
    return ParetoCertificate(residual < tolerance, weights, residual)


# ---------------------------------------------------------------------------
# Random fixtures and the agreement suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fixture:
    """A pricing problem: tree, rates, risk aversions and discounted terminal risk."""

    tree: EventTree
    curve: RateCurve
    schedule: RiskAversionSchedule
    w: np.ndarray
    kind: str = "general"


def random_tree(rng: np.random.Generator, depth: int, branching=(2, 3), min_prob=0.05) -> EventTree:
    levels = []
    n_prev = 1
    for _ in range(depth):
        level = []
        for parent in range(n_prev):
            k = int(rng.choice(branching))
            raw = rng.uniform(0.0, 1.0, size=k)
            probs = min_prob + (1.0 - k * min_prob) * raw / raw.sum()
            probs[-1] = 1.0 - probs[:-1].sum()
            level.extend((parent, float(p)) for p in probs)
        levels.append(level)
        n_prev = len(level)
    return EventTree.from_levels(levels)


def random_fixture(rng: np.random.Generator, max_depth: int = 4) -> Fixture:
    T = int(rng.integers(1, max_depth + 1))
    tree = random_tree(rng, T)
    curve = RateCurve(rng.uniform(0.0, 0.1, size=T))
    schedule = RiskAversionSchedule(rng.uniform(0.1, 5.0, size=T))
    w = rng.uniform(-2.0, 2.0, size=tree.n_leaves)
    return Fixture(tree, curve, schedule, w)


def write_fixture(fixture: Fixture) -> str:
    """Serialise a fixture: the tree text format followed by ``rates``, ``alpha`` and ``terminal`` sections."""
    buf = io.StringIO()
    buf.write("# tree\n")
    buf.write(fixture.tree.to_text())
    buf.write("# rates\nt,rate\n")
    for t, r in enumerate(fixture.curve.rates, 1):
        buf.write(f"{t},{float(r)!r}\n")
    buf.write("# alpha\nt,alpha\n")
    for t, a in enumerate(fixture.schedule.alpha, 1):
        buf.write(f"{t},{float(a)!r}\n")
    buf.write("# terminal\nleaf,value\n")
    for i, v in enumerate(fixture.w):
        buf.write(f"{i},{float(v)!r}\n")
    return buf.getvalue()


def read_fixture(text: str, source=None) -> Fixture:
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        if line.startswith("# "):
            current = line[2:].strip()
            sections[current] = []
        elif line.strip():
            if current is None:
                raise ParseError("data before the first section marker", source)
            sections[current].append(line)
    missing = {"tree", "rates", "alpha", "terminal"} - sections.keys()
    if missing:
        raise ParseError(f"missing sections: {sorted(missing)}", source)
    tree = EventTree.from_text("\n".join(sections["tree"]), source)

    def column(name):
        try:
            return [float(row.split(",")[1]) for row in sections[name][1:]]
        except (IndexError, ValueError):
            raise ParseError(f"malformed {name} section", source) from None

    return Fixture(
        tree,
        RateCurve(column("rates")),
        RiskAversionSchedule(column("alpha")),
        np.array(column("terminal")),
    )


@dataclass(frozen=True)
class AgreementResult:
    index: int
    kind: str
    depth: int
    allocation_diff: float
    objective_diff: float
    fo_closed: float
    fo_oracle: float
    iterations: int
    passed: bool
    fixture: Fixture


ALLOCATION_TOL = 1e-6
OBJECTIVE_TOL = 1e-9
FO_CLOSED_TOL = 1e-12
FO_ORACLE_TOL = 1e-6


def mortality_fixture(rng: np.random.Generator, max_depth: int = 4):
    """A death-time-tree fixture for the insurance closed forms.

    Returns the fixture for ``W = w + H(Z) - Z`` together with the closed-form allocation.
    """
    from riskalloc.mortality import ClaimProfile, MortalityCurve, indifference_premium, premium_allocation
    T = int(rng.integers(1, max_depth + 1))
    mortality = MortalityCurve(rng.uniform(0.05, 0.6, size=T))
    claim = ClaimProfile(rng.uniform(-1.0, 1.0, size=T + 1))
    schedule = RiskAversionSchedule(rng.uniform(0.1, 5.0, size=T))
    curve = RateCurve(rng.uniform(0.0, 0.1, size=T))
    wealth = float(rng.uniform(-1.0, 1.0))
    H = indifference_premium(schedule, mortality, claim).premium
    closed = premium_allocation(schedule, mortality, claim, curve, wealth)
    fixture = Fixture(closed.tree, curve, schedule, wealth + H - claim.z, kind="mortality")
    return fixture, closed


def run_agreement_suite(
    seed: int = 42,
    n_fixtures: int = 50,
    max_depth: int = 4,
    inject_fault: bool = False,
) -> list[AgreementResult]:
    """Compare closed-form allocations with :func:`solve_problem_p` on seeded random fixtures.

    Fixtures cycle through three closed forms: the general-tree optimal allocation,
    the selling-position formula (for ``x - Z`` with ``x = E[W]``) and the
    death-time-tree premium allocation. ``inject_fault`` shifts one closed-form
    value of the first fixture by ``0.1`` to exercise the failure path.
    """
    from riskalloc.exp_pricing import optimal_allocation, selling_position_allocation, utility_value

    rng = np.random.default_rng(seed)
    results = []
    for i in range(n_fixtures):
        kind = ("general", "selling", "mortality")[i % 3]
        if kind == "mortality":
            fixture, closed = mortality_fixture(rng, max_depth)
        else:
            fixture = random_fixture(rng, max_depth)
            if kind == "selling":
                x = expectation(fixture.tree, fixture.w)
                closed = selling_position_allocation(
                    fixture.tree, fixture.curve, fixture.schedule, x, x - fixture.w
                )
                fixture = Fixture(fixture.tree, fixture.curve, fixture.schedule, fixture.w, "selling")
            else:
                closed = optimal_allocation(fixture.tree, fixture.curve, fixture.schedule, fixture.w)
        if inject_fault and i == 0:
            vals = [v.copy() for v in closed.values]
            vals[0][0] += 0.1 * fixture.curve.bond_prices[1]
            closed = AdaptedProcess(fixture.tree, tuple(vals))
        utilities = UtilitySpec.exponential(fixture.schedule)
        rep = solve_problem_p(fixture.tree, fixture.curve, utilities, fixture.w)
        alloc_diff = closed.max_abs_diff(rep.allocation)
        u_closed = utility_value(fixture.tree, fixture.schedule, fixture.w)
        obj_diff = abs(rep.objective - u_closed)
        fo_closed = check_first_order(fixture.tree, fixture.curve, utilities, closed).max_residual
        fo_oracle = check_first_order(fixture.tree, fixture.curve, utilities, rep.allocation).max_residual
        passed = (
            alloc_diff < ALLOCATION_TOL
            and obj_diff < OBJECTIVE_TOL
            and fo_closed < FO_CLOSED_TOL
            and fo_oracle < FO_ORACLE_TOL
        )
        results.append(
            AgreementResult(
                i, fixture.kind, fixture.tree.depth, alloc_diff, obj_diff,
                fo_closed, fo_oracle, rep.iterations, passed, fixture,
            )
        )
    return results
