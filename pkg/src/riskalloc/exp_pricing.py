"""Exponential-utility allocation and indifference pricing on a general event tree.

With ``u_t(x) = (1 - exp(-alpha_t x)) / alpha_t`` the optimal allocation of a
discounted terminal risk ``W`` comes out of a single backward recursion

    L_T = exp(-alpha_T W),    L_{t-1} = E_{t-1}[L_t] ** (beta_{t-1} / beta_t),

with ``1 / beta_t = sum_{k >= t} 1 / alpha_k``. Everything here is carried as
``log L_t`` so that large risk aversions do not overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from riskalloc.errors import DomainError, ShapeError
from riskalloc.market import RateCurve
from riskalloc.tree import (
    AdaptedProcess,
    EventTree,
    expectation,
    log_conditional_expectation,
    terminal_values,
)


@dataclass(frozen=True, eq=False)
class RiskAversionSchedule:
    """Absolute risk aversions ``alpha_1..alpha_T`` and the aggregate ``beta_1..beta_T``."""

    alpha: np.ndarray
    beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        if alpha.size == 0:
            raise ShapeError("empty risk-aversion schedule")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise DomainError("risk aversions must be finite and positive")
        beta = 1.0 / np.cumsum((1.0 / alpha)[::-1])[::-1]
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def constant(cls, a: float, term: int) -> "RiskAversionSchedule":
        return cls(np.full(int(term), float(a)))

    @property
    def term(self) -> int:
        return self.alpha.size

    def scaled(self, p: float) -> "RiskAversionSchedule":
        return RiskAversionSchedule(self.alpha * p)

    def truncated(self, term: int) -> "RiskAversionSchedule":
        if term > self.term:
            raise DomainError(f"schedule has {self.term} periods, {term} requested")
        return RiskAversionSchedule(self.alpha[:term])

    def __repr__(self):
        return f"RiskAversionSchedule(alpha={self.alpha.tolist()})"


def utility_fn(schedule: RiskAversionSchedule, t: int, x):
    a = schedule.alpha[t - 1]
    return -np.expm1(-a * np.asarray(x, dtype=float)) / a


def marginal_utility(schedule: RiskAversionSchedule, t: int, x):
    return np.exp(-schedule.alpha[t - 1] * np.asarray(x, dtype=float))


def _check(tree: EventTree, schedule: RiskAversionSchedule, curve: RateCurve | None = None):
    if schedule.term != tree.depth:
        raise ShapeError(f"schedule has {schedule.term} periods, tree has depth {tree.depth}")
    if curve is not None and curve.term < tree.depth:
        raise ShapeError(f"rate curve covers {curve.term} periods, tree has depth {tree.depth}")


def log_l_recursion(tree: EventTree, schedule: RiskAversionSchedule, w) -> list[np.ndarray]:
    """``[log L_1, ..., log L_T]`` for the discounted terminal risk ``w``."""
    _check(tree, schedule)
    w = terminal_values(tree, w)
    alpha, beta = schedule.alpha, schedule.beta
    T = tree.depth
    logs = [None] * T
    logs[T - 1] = -alpha[T - 1] * w
    for t in range(T, 1, -1):
        logs[t - 2] = (beta[t - 2] / beta[t - 1]) * log_conditional_expectation(
            tree, logs[t - 1], t
        )
    return logs


def l_recursion(tree: EventTree, schedule: RiskAversionSchedule, w) -> AdaptedProcess:
    return AdaptedProcess(tree, tuple(np.exp(v) for v in log_l_recursion(tree, schedule, w)))


def _log_m_from_log_l(tree, schedule, log_l):
    alpha, beta = schedule.alpha, schedule.beta
    out = []
    for t in range(1, tree.depth + 1):
        acc = log_l[t - 1].copy()
        for k in range(1, t):
            acc -= (beta[k] / alpha[k - 1]) * log_l[k - 1][tree.ancestors(t, k)]
        out.append(acc)
    return out


def log_m_process(tree: EventTree, schedule: RiskAversionSchedule, w) -> list[np.ndarray]:
    """``[log M_1, ..., log M_T]``: the positive martingale with ``prod M_t**(1/alpha_t) = e^-W``."""
    return _log_m_from_log_l(tree, schedule, log_l_recursion(tree, schedule, w))


def m_process(tree: EventTree, schedule: RiskAversionSchedule, w) -> AdaptedProcess:
    return AdaptedProcess(tree, tuple(np.exp(v) for v in log_m_process(tree, schedule, w)))


def optimal_allocation(
    tree: EventTree, curve: RateCurve, schedule: RiskAversionSchedule, w
) -> AdaptedProcess:
    """Unique maximiser of ``sum_t E[u_t(X_t / B_t)]`` subject to ``sum_t X_t / B_t = W``.

    Returned undiscounted; ``X_t = -(B_t / alpha_t) log M_t``.
    """
    _check(tree, schedule, curve)
    log_m = log_m_process(tree, schedule, w)
    return AdaptedProcess(
        tree,
        tuple(
            -(curve.bond_prices[t] / schedule.alpha[t - 1]) * log_m[t - 1]
            for t in range(1, tree.depth + 1)
        ),
    )


def expected_utility(
    tree: EventTree, curve: RateCurve, schedule: RiskAversionSchedule, allocation: AdaptedProcess
) -> float:
    """Integrated expected utility ``sum_t E[u_t(X_t / B_t)]`` of an undiscounted allocation."""
    _check(tree, schedule, curve)
    disc = allocation.discounted(curve)
    return sum(
        expectation(tree, utility_fn(schedule, t, disc[t]), t) for t in range(1, tree.depth + 1)
    )


def _log_mean_l1(tree, schedule, w):
    log_l1 = log_l_recursion(tree, schedule, w)[0]
    return float(log_conditional_expectation(tree, log_l1, 1)[0])


def utility_value(tree: EventTree, schedule: RiskAversionSchedule, w) -> float:
    """Optimal utility ``U(W) = (1 - E[L_1(W)]) / beta_1``."""
    beta1 = schedule.beta[0]
    return float(-np.expm1(_log_mean_l1(tree, schedule, w)) / beta1)


def indifference_price_tree(tree: EventTree, schedule: RiskAversionSchedule, z) -> float:
    """Selling indifference price ``H(Z) = log E[L_1(-Z)] / beta_1``; does not depend on wealth."""
    z = terminal_values(tree, z)
    return _log_mean_l1(tree, schedule, -z) / schedule.beta[0]


def selling_position_allocation(
    tree: EventTree, curve: RateCurve, schedule: RiskAversionSchedule, x: float, z
) -> AdaptedProcess:
    """Optimal allocation of ``x - Z`` written through ``L_t(-Z)`` only.

    ``X_t = (B_t / alpha_t) [beta_1 x - log L_t(-Z) + sum_{k<t} (beta_{k+1} / alpha_k) log L_k(-Z)]``
    """
    _check(tree, schedule, curve)
    z = terminal_values(tree, z)
    alpha, beta = schedule.alpha, schedule.beta
    log_l = log_l_recursion(tree, schedule, -z)
    out = []
    for t in range(1, tree.depth + 1):
        bracket = beta[0] * x - log_l[t - 1]
        for k in range(1, t):
            bracket = bracket + (beta[k] / alpha[k - 1]) * log_l[k - 1][tree.ancestors(t, k)]
        out.append(curve.bond_prices[t] / alpha[t - 1] * bracket)
    return AdaptedProcess(tree, tuple(out))
