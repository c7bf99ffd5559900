"""Term life insurance on the death-time filtration.

The claim of a contract paying ``c_t`` at ``t`` when death falls in ``(t-1, t]``
is the discounted profile ``z_t = c_t / B_t`` (plus ``z_{T+1}`` on survival).
Its indifference premium collapses to the deterministic recursion

    h_T = exp(z_{T+1}),
    h_{t-1} = [q_{t-1} exp(beta_t z_t) + p_{t-1} h_t ** beta_t] ** (1 / beta_t),

and ``H(Z) = log h_0``. All ``h_t`` are kept as logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from riskalloc.errors import ConvergenceError, DomainError, ParseError, ShapeError
from riskalloc.exp_pricing import RiskAversionSchedule
from riskalloc.market import RateCurve, _read_two_columns
from riskalloc.tree import AdaptedProcess, death_time_tree


@dataclass(frozen=True, eq=False)
class MortalityCurve:
    """One-period conditional death probabilities ``q_0..q_{T-1}``."""

    q: np.ndarray
    p: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        if q.size == 0:
            raise ShapeError("mortality curve is empty")
        if not np.all(np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
            raise DomainError("death probabilities must lie in [0, 1]")
        p = 1.0 - q
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def term(self) -> int:
        return self.q.size

    def truncated(self, term: int) -> "MortalityCurve":
        if term > self.term:
            raise DomainError(f"mortality table has {self.term} periods, {term} requested")
        return MortalityCurve(self.q[:term])

    def death_probabilities(self) -> np.ndarray:
        """``P(t-1 < tau <= t)`` for ``t = 1..T``."""
        alive = np.concatenate(([1.0], np.cumprod(self.p)[:-1]))
        return alive * self.q

    def survival_probability(self) -> float:
        """``P(T < tau)``."""
        return float(np.prod(self.p))

    @property
    def strictly_interior(self) -> bool:
        return bool(np.all((self.q > 0) & (self.q < 1)))

    @classmethod
    def from_csv(cls, path) -> "MortalityCurve":
        """Read a ``t,q`` table; row ``t`` holds the death probability over ``(t-1, t]``."""
        q = []
        for line, t, value in _read_two_columns(path, ("t", "q")):
            if t != len(q) + 1:
                raise ParseError(f"expected t={len(q) + 1}, got {t}", path, line)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{path}:{line}: q={value} outside [0, 1]")
            q.append(value)
        if not q:
            raise ParseError("no data rows", path)
        return cls(np.array(q))

    def __repr__(self):
        return f"MortalityCurve(q={self.q.tolist()})"


@dataclass(frozen=True, eq=False)
class ClaimProfile:
    """Discounted payouts ``z_1..z_{T+1}``; ``z_{T+1}`` is paid on survival past ``T``."""

    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(-1)
        if z.size < 2:
            raise ShapeError("a claim profile needs at least z_1 and z_2")
        if not np.all(np.isfinite(z)):
            raise DomainError("claim payouts must be finite")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def term(self) -> int:
        return self.z.size - 1

    def terminal_risk(self) -> np.ndarray:
        """Leaf values on :func:`~riskalloc.tree.death_time_tree` (same ordering as ``z``)."""
        return self.z.copy()

    def __repr__(self):
        return f"ClaimProfile(z={self.z.tolist()})"


@dataclass(frozen=True)
class PremiumReport:
    premium: float
    log_h: np.ndarray
    expected_claim: float
    max_claim: float

    @property
    def bounds(self) -> tuple[float, float]:
        return self.expected_claim, self.max_claim


def term_claim(curve: RateCurve, benefit, survival_value: float = 0.0) -> ClaimProfile:
    """Discount a death-benefit schedule; a scalar benefit covers every period of ``curve``."""
    c = np.asarray(benefit, dtype=float)
    if c.ndim == 0:
        c = np.full(curve.term, float(c))
    c = c.reshape(-1)
    if c.size > curve.term:
        raise ShapeError(f"{c.size} benefits but the rate curve covers {curve.term} periods")
    z = c / curve.bond_prices[1 : c.size + 1]
    return ClaimProfile(np.append(z, float(survival_value)))


def _log_mix(a: float, b: float, q: float) -> float:
    """``log(q e^a + (1 - q) e^b)`` without overflow and accurate when ``a ~ b ~ 0``."""
    if q == 0.0:
        return b
    if q == 1.0:
        return a
    wa, wb = q, 1.0 - q
    if a < b:
        a, b, wa, wb = b, a, wb, wa
    # log(wa + wb e^{b - a}) with b <= a: log1p is exact near 0, plain log when the sum is small
    d = wb * math.expm1(b - a)
    if d > -0.5:
        return a + math.log1p(d)
    return a + math.log(wa + wb * math.exp(b - a))


def _check_lengths(schedule, mortality, claim):
    T = mortality.term
    if schedule.term != T or claim.term != T:
        raise ShapeError(
            f"term mismatch: schedule {schedule.term}, mortality {T}, claim {claim.term}"
        )


def h_recursion(
    schedule: RiskAversionSchedule, mortality: MortalityCurve, claim: ClaimProfile
) -> np.ndarray:
    """``[log h_0, ..., log h_T]``."""
    _check_lengths(schedule, mortality, claim)
    T = mortality.term
    beta, z, q = schedule.beta, claim.z, mortality.q
    log_h = np.empty(T + 1)
    log_h[T] = z[T]
    for t in range(T, 0, -1):
        b = beta[t - 1]
        log_h[t - 1] = _log_mix(b * z[t - 1], b * log_h[t], q[t - 1]) / b
    return log_h


def premium_bounds(mortality: MortalityCurve, claim: ClaimProfile) -> tuple[float, float]:
    """``(E[Z], max z)``: the expected claim and the worst-case payout."""
    if claim.term != mortality.term:
        raise ShapeError(f"claim term {claim.term} != mortality term {mortality.term}")
    weights = np.append(mortality.death_probabilities(), mortality.survival_probability())
    return float(np.dot(weights, claim.z)), float(np.max(claim.z))


def indifference_premium(
    schedule: RiskAversionSchedule, mortality: MortalityCurve, claim: ClaimProfile
) -> PremiumReport:
    log_h = h_recursion(schedule, mortality, claim)
    lower, upper = premium_bounds(mortality, claim)
    log_h.setflags(write=False)
    return PremiumReport(float(log_h[0]), log_h, lower, upper)


def premium_allocation(
    schedule: RiskAversionSchedule,
    mortality: MortalityCurve,
    claim: ClaimProfile,
    rate_curve: RateCurve,
    w: float = 0.0,
) -> AdaptedProcess:
    """Optimal allocation of ``w + H(Z) - Z`` on the death-time tree, in closed form.

    On level ``t`` the dead node for death period ``s`` gets
    ``beta_1 (w + H) - beta_s z_s + sum_{k<s} c_k log h_k`` and the alive node
    ``beta_1 (w + H) - beta_t log h_t + sum_{k<t} c_k log h_k``, with
    ``c_k = beta_{k+1} beta_k / alpha_k``; both are then scaled by ``B_t / alpha_t``.
    """
    log_h = h_recursion(schedule, mortality, claim)
    T = mortality.term
    if rate_curve.term < T:
        raise ShapeError(f"rate curve covers {rate_curve.term} periods, contract has {T}")
    tree = death_time_tree(mortality)
    alpha, beta, z = schedule.alpha, schedule.beta, claim.z
    base = beta[0] * (w + log_h[0])
    # carry[s] = sum_{k=1}^{s-1} c_k log h_k
    c = np.zeros(T + 1)
    for k in range(1, T):
        c[k] = beta[k] * beta[k - 1] / alpha[k - 1] * log_h[k]
    carry = np.concatenate(([0.0], np.cumsum(c[:T])))
    out = []
    for t in range(1, T + 1):
        s = np.arange(1, t + 1)
        dead = base - beta[s - 1] * z[s - 1] + carry[s]
        alive = base - beta[t - 1] * log_h[t] + carry[t]
        out.append(rate_curve.bond_prices[t] / alpha[t - 1] * np.append(dead, alive))
    return AdaptedProcess(tree, tuple(out))


def death_tree_log_l(
    schedule: RiskAversionSchedule, mortality: MortalityCurve, claim: ClaimProfile
) -> AdaptedProcess:
    """Closed-form ``log L_t(-Z)`` on the death-time tree.

    ``beta_t z_s`` on the node for death in period ``s <= t``; ``beta_t log h_t`` while alive.
    """
    log_h = h_recursion(schedule, mortality, claim)
    beta, z = schedule.beta, claim.z
    tree = death_time_tree(mortality)
    values = tuple(
        beta[t - 1] * np.append(z[:t], log_h[t]) for t in range(1, mortality.term + 1)
    )
    return AdaptedProcess(tree, values)


def _benefits(benefit, T):
    c = np.asarray(benefit, dtype=float)
    if c.ndim == 0:
        return np.full(T, float(c))
    c = c.reshape(-1)
    if c.size != T:
        raise ShapeError(f"expected {T} benefits, got {c.size}")
    return c


def tp1(rate_curve: RateCurve, mortality: MortalityCurve, benefit=1.0) -> float:
    """Expected discounted benefit (principle of equivalence, no loading)."""
    T = mortality.term
    if rate_curve.term < T:
        raise ShapeError(f"rate curve covers {rate_curve.term} periods, contract has {T}")
    c = _benefits(benefit, T)
    return float(np.sum(c * mortality.death_probabilities() / rate_curve.bond_prices[1 : T + 1]))


def tp2(
    rate_curve: RateCurve, mortality: MortalityCurve, loading: float = 0.01, benefit=1.0
) -> float:
    """Expected discounted benefit under the loaded probabilities ``Q + loading * sqrt(Q (1 - Q))``."""
    T = mortality.term
    if rate_curve.term < T:
        raise ShapeError(f"rate curve covers {rate_curve.term} periods, contract has {T}")
    c = _benefits(benefit, T)
    Q = mortality.death_probabilities()
    loaded = Q + loading * np.sqrt(np.clip(Q * (1.0 - Q), 0.0, None))
    return float(np.sum(c * loaded / rate_curve.bond_prices[1 : T + 1]))


def _require_interior(mortality):
    if not mortality.strictly_interior:
        raise DomainError("limits and scale search need 0 < q_t < 1 for every period")


def limit_premiums(
    schedule: RiskAversionSchedule, mortality: MortalityCurve, claim: ClaimProfile
) -> tuple[float, float]:
    """Premiums in the limits of vanishing and unbounded risk aversion.

    The small-aversion limit runs ``log h_{t-1} = q_{t-1} z_t + p_{t-1} log h_t``;
    the large-aversion limit is the largest payout. ``schedule`` only fixes the term.
    """
    _check_lengths(schedule, mortality, claim)
    _require_interior(mortality)
    T = mortality.term
    z, q, p = claim.z, mortality.q, mortality.p
    log_h = z[T]
    for t in range(T, 0, -1):
        log_h = q[t - 1] * z[t - 1] + p[t - 1] * log_h
    return float(log_h), float(np.max(z))


def solve_scale(
    schedule: RiskAversionSchedule,
    mortality: MortalityCurve,
    claim: ClaimProfile,
    target: float,
    tol: float = 1e-10,
    max_bisections: int = 400,
) -> float:
    """Find ``p > 0`` with ``H_{p alpha}(Z) = target`` for a target strictly inside the bounds.

    Brackets start at ``[1e-6, 1e6]`` and widen tenfold per side (up to ``1e-12``/``1e12``)
    until the premiums straddle the target; then geometric bisection. Only continuity
    of ``p -> H_{p alpha}`` is relied on.
    """
    _check_lengths(schedule, mortality, claim)
    _require_interior(mortality)
    lower, upper = premium_bounds(mortality, claim)
    if not lower < target < upper:
        raise DomainError(f"target {target} not inside ({lower}, {upper})")

    def gap(p):
        return indifference_premium(schedule.scaled(p), mortality, claim).premium - target

    if abs(gap(1.0)) < tol:
        return 1.0
    lo, hi = 1e-6, 1e6
    g_lo, g_hi = gap(lo), gap(hi)
    while np.sign(g_lo) == np.sign(g_hi):
        if lo <= 1e-12 and hi >= 1e12:
            raise ConvergenceError(f"no bracket for target {target} within scale [1e-12, 1e12]")
        lo, hi = max(lo / 10.0, 1e-12), min(hi * 10.0, 1e12)
        g_lo, g_hi = gap(lo), gap(hi)
    for _ in range(max_bisections):
        mid = math.sqrt(lo * hi)
        g_mid = gap(mid)
        if abs(g_mid) < tol:
            return mid
        if np.sign(g_mid) == np.sign(g_lo):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
        if hi <= lo * (1.0 + 4e-16):
            break
    raise ConvergenceError(f"bisection stalled at p={math.sqrt(lo * hi)}, residual {g_mid}")
