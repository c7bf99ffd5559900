"""Implied risk aversion: fit ``alpha(t) = a + b sqrt(t)`` to a target premium curve."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from riskalloc.errors import ConvergenceError, DomainError, ShapeError
from riskalloc.exp_pricing import RiskAversionSchedule
from riskalloc.market import RateCurve
from riskalloc.mortality import MortalityCurve, indifference_premium, term_claim

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlphaFamily:
    """Risk aversion ``a + b * sqrt(t)`` for period ``t``."""

    a: float
    b: float = 0.0

    def __call__(self, t):
        return self.a + self.b * np.sqrt(np.asarray(t, dtype=float))

    def is_feasible(self, horizon: int) -> bool:
        return bool(np.all(self(np.arange(1, horizon + 1)) > 0))

    def schedule(self, term: int) -> RiskAversionSchedule:
        alpha = self(np.arange(1, term + 1))
        if np.any(alpha <= 0):
            raise DomainError(f"alpha(t) = {self.a} + {self.b} sqrt(t) is not positive on 1..{term}")
        return RiskAversionSchedule(alpha)


def premium_curve(
    family: AlphaFamily,
    mortality: MortalityCurve,
    rate_curve: RateCurve,
    max_term: int,
    benefit: float = 1.0,
) -> np.ndarray:
    """Indifference premiums of the unit term contract for terms ``1..max_term``."""
    if mortality.term < max_term or rate_curve.term < max_term:
        raise ShapeError(f"tables are shorter than the horizon {max_term}")
    full = family.schedule(max_term)
    out = np.empty(max_term)
    for T in range(1, max_term + 1):
        claim = term_claim(rate_curve.truncated(T), benefit)
        out[T - 1] = indifference_premium(full.truncated(T), mortality.truncated(T), claim).premium
    return out


@dataclass(frozen=True)
class FitReport:
    a: float
    b: float
    rss: float
    residuals: np.ndarray
    iterations: int
    history: np.ndarray = field(repr=False)

    @property
    def family(self) -> AlphaFamily:
        return AlphaFamily(self.a, self.b)


def _rss(params, target, mortality, rate_curve, free_b):
    family = AlphaFamily(params[0], params[1] if free_b else 0.0)
    if not family.is_feasible(target.size):
        return np.inf
    resid = premium_curve(family, mortality, rate_curve, target.size) - target
    return float(np.dot(resid, resid))


def fit_alpha(
    target,
    mortality: MortalityCurve,
    rate_curve: RateCurve,
    initial=(1.0, 0.1),
    free_b: bool = True,
    restarts: int = 0,
    seed: int = 0,
    ftol: float = 1e-12,
    max_iterations: int = 10_000,
) -> FitReport:
    """Least-squares fit of the family to ``target[T-1]`` for ``T = 1..len(target)``.

    Nelder-Mead with the standard coefficients; stops once the simplex objective
    spread is below ``ftol``. With ``free_b=False`` only ``a`` is fitted
    (constant risk aversion). ``restarts`` adds jittered starting points and
    keeps the best fit.
    """
    target = np.asarray(target, dtype=float).reshape(-1)
    if target.size == 0:
        raise ShapeError("empty target curve")
    x0 = np.array(initial, dtype=float) if free_b else np.array([float(initial[0])])
    if _rss(np.append(x0, 0.0), target, mortality, rate_curve, free_b) == np.inf:
        raise DomainError(f"initial parameters {tuple(x0)} give non-positive alpha")

    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 * rng.uniform(0.5, 1.5, size=x0.size) for _ in range(restarts)]
    best = None
    for start in starts:
        report = _fit_once(start, target, mortality, rate_curve, free_b, ftol, max_iterations)
        if best is None or report.rss < best.rss:
            best = report
    return best


def _fit_once(x0, target, mortality, rate_curve, free_b, ftol, max_iterations):
    history = []

    def fun(x):
        return _rss(x, target, mortality, rate_curve, free_b)

    def track(intermediate_result):
        history.append(float(intermediate_result.fun))

    res = minimize(
        fun,
        x0,
        method="Nelder-Mead",
        callback=track,
        options={"fatol": ftol, "xatol": np.inf, "maxiter": max_iterations, "maxfev": 50 * max_iterations},
    )
    a = float(res.x[0])
    b = float(res.x[1]) if free_b else 0.0
    resid = premium_curve(AlphaFamily(a, b), mortality, rate_curve, target.size) - target
    report = FitReport(a, b, float(np.dot(resid, resid)), resid, int(res.nit), np.array(history))
    if not res.success:
        raise ConvergenceError(f"Nelder-Mead stopped: {res.message}", report)
    logger.debug("fit a=%g b=%g rss=%.3e in %d iterations", a, b, report.rss, report.iterations)
    return report
