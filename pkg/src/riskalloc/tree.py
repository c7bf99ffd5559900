"""Finite filtrations as rooted trees, adapted processes, and conditional expectation.

Level ``t`` of an :class:`EventTree` holds the atoms of ``F_t``. Each node stores
the index of its parent on the previous level and the transition probability
from that parent. Values of a process on level ``t`` are plain 1-d arrays
aligned with the node order of that level.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from riskalloc.errors import DomainError, ParseError, ShapeError
from riskalloc.market import RateCurve

_PROB_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class EventTree:
    """Rooted tree of depth ``T``; ``parents[t]`` and ``probs[t]`` describe level ``t``.

    Level 0 is the single root, so ``parents[0]`` and ``probs[0]`` are empty.
    """

    parents: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.parents) != len(self.probs) or len(self.parents) < 2:
            raise ShapeError("a tree needs matching parents/probs for levels 0..T with T >= 1")
        parents = [np.zeros(0, dtype=np.intp)]
        probs = [np.zeros(0)]
        for t in range(1, len(self.parents)):
            par = np.asarray(self.parents[t], dtype=np.intp).reshape(-1)
            pr = np.asarray(self.probs[t], dtype=float).reshape(-1)
            if par.shape != pr.shape or par.size == 0:
                raise ShapeError(f"level {t}: parents and probs must be non-empty and aligned")
            n_prev = 1 if t == 1 else parents[t - 1].size
            if par.min() < 0 or par.max() >= n_prev:
                raise ShapeError(f"level {t}: parent index out of range")
            if not np.all(np.isfinite(pr)) or np.any(pr < 0):
                raise DomainError(f"level {t}: probabilities must be finite and nonnegative")
            counts = np.bincount(par, minlength=n_prev)
            if np.any(counts == 0):
                raise ShapeError(f"level {t - 1}: every non-terminal node needs a child")
            sums = np.bincount(par, weights=pr, minlength=n_prev)
            if np.any(np.abs(sums - 1.0) > _PROB_ATOL):
                raise DomainError(f"level {t}: children probabilities must sum to 1")
            par.setflags(write=False)
            pr.setflags(write=False)
            parents.append(par)
            probs.append(pr)
        object.__setattr__(self, "parents", tuple(parents))
        object.__setattr__(self, "probs", tuple(probs))

    @classmethod
    def from_levels(cls, levels: Sequence[Sequence[tuple]]) -> "EventTree":
        """Build from ``levels[t-1] = [(parent_index, probability), ...]`` for t = 1..T."""
        parents = [()]
        probs = [()]
        for level in levels:
            parents.append([p for p, _ in level])
            probs.append([q for _, q in level])
        return cls(tuple(parents), tuple(probs))

    @property
    def depth(self) -> int:
        return len(self.parents) - 1

    def size(self, level: int) -> int:
        self._check_level(level)
        return 1 if level == 0 else self.parents[level].size

    @property
    def n_leaves(self) -> int:
        return self.size(self.depth)

    @cached_property
    def _node_probabilities(self):
        out = [np.ones(1)]
        for t in range(1, self.depth + 1):
            out.append(out[t - 1][self.parents[t]] * self.probs[t])
        for arr in out:
            arr.setflags(write=False)
        return tuple(out)

    def node_probabilities(self, level: int) -> np.ndarray:
        """Unconditional probability of every node on ``level``."""
        self._check_level(level)
        return self._node_probabilities[level]

    def ancestors(self, level: int, to_level: int) -> np.ndarray:
        """Index of the ``to_level`` ancestor of each node on ``level``."""
        self._check_level(level)
        self._check_level(to_level)
        if to_level > level:
            raise ShapeError(f"ancestor level {to_level} is below level {level}")
        idx = np.arange(self.size(level))
        for t in range(level, to_level, -1):
            idx = self.parents[t][idx]
        return idx

    @cached_property
    def paths(self) -> np.ndarray:
        """``(n_leaves, T + 1)`` matrix of node indices along every root-to-leaf path."""
        out = np.zeros((self.n_leaves, self.depth + 1), dtype=np.intp)
        for t in range(self.depth, 0, -1):
            out[:, t] = self.ancestors(self.depth, t)
        out.setflags(write=False)
        return out

    def children_sum(self, values, level: int) -> np.ndarray:
        """Sum ``values`` (given on ``level``) over the children of each ``level - 1`` node."""
        return np.bincount(self.parents[level], weights=values, minlength=self.size(level - 1))

    def same_as(self, other: "EventTree") -> bool:
        """Structural equality: same parents and transition probabilities on every level."""
        if other is self:
            return True
        return self.depth == other.depth and all(
            np.array_equal(a, b) and np.array_equal(c, d)
            for a, b, c, d in zip(self.parents, other.parents, self.probs, other.probs)
        )

    def _check_level(self, level):
        if not 0 <= level <= self.depth:
            raise ShapeError(f"level {level} outside 0..{self.depth}")

    def to_text(self) -> str:
        """Line-per-node ``level,parent_index,probability`` serialization."""
        lines = ["level,parent_index,probability", "0,-1,1"]
        for t in range(1, self.depth + 1):
            for par, pr in zip(self.parents[t], self.probs[t]):
                lines.append(f"{t},{int(par)},{float(pr)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source=None) -> "EventTree":
        rows = [ln for ln in enumerate(text.splitlines(), 1) if ln[1].strip()]
        if not rows or rows[0][1].strip() != "level,parent_index,probability":
            raise ParseError("expected header level,parent_index,probability", source, 1)
        levels: list[list[tuple]] = []
        for line, raw in rows[1:]:
            parts = raw.split(",")
            if len(parts) != 3:
                raise ParseError("expected 3 columns", source, line)
            try:
                level, parent, prob = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"malformed row {raw!r}", source, line) from None
            if level == 0:
                continue
            if level > len(levels) + 1 or level < len(levels):
                raise ParseError("rows must be grouped by ascending level", source, line)
            if level == len(levels) + 1:
                levels.append([])
            levels[level - 1].append((parent, prob))
        return cls.from_levels(levels)


@dataclass(frozen=True, eq=False)
class AdaptedProcess:
    """One real value per node on levels ``1..T``; ``process[t]`` is the level-``t`` array."""

    tree: EventTree
    values: tuple

    def __post_init__(self):
        if len(self.values) != self.tree.depth:
            raise ShapeError(f"expected {self.tree.depth} levels, got {len(self.values)}")
        vals = []
        for t, v in enumerate(self.values, 1):
            arr = np.array(v, dtype=float).reshape(-1)
            if arr.size != self.tree.size(t):
                raise ShapeError(f"level {t}: expected {self.tree.size(t)} values, got {arr.size}")
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"level {t}: values must be finite")
            arr.setflags(write=False)
            vals.append(arr)
        object.__setattr__(self, "values", tuple(vals))

    def __getitem__(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.tree.depth:
            raise IndexError(f"time {t} outside 1..{self.tree.depth}")
        return self.values[t - 1]

    def paths(self) -> np.ndarray:
        """``(n_leaves, T)`` matrix of the process along each root-to-leaf path."""
        p = self.tree.paths
        return np.column_stack([self.values[t - 1][p[:, t]] for t in range(1, self.tree.depth + 1)])

    def discounted(self, curve: RateCurve) -> "AdaptedProcess":
        _check_curve(self.tree, curve)
        return AdaptedProcess(
            self.tree, tuple(v / curve.bond_prices[t] for t, v in enumerate(self.values, 1))
        )

    def undiscounted(self, curve: RateCurve) -> "AdaptedProcess":
        _check_curve(self.tree, curve)
        return AdaptedProcess(
            self.tree, tuple(v * curve.bond_prices[t] for t, v in enumerate(self.values, 1))
        )

    def max_abs_diff(self, other: "AdaptedProcess") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.values, other.values))


def terminal_values(tree: EventTree, w) -> np.ndarray:
    """Validate an ``F_T``-measurable risk given as one value per leaf (scalars broadcast)."""
    arr = np.asarray(w, dtype=float)
    if arr.ndim == 0:
        arr = np.full(tree.n_leaves, float(arr))
    arr = arr.reshape(-1)
    if arr.size != tree.n_leaves:
        raise ShapeError(f"terminal risk needs {tree.n_leaves} leaf values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("terminal risk must be finite")
    return arr


def conditional_expectation(tree: EventTree, x, level: int, to_level: int) -> np.ndarray:
    """``E[x | F_s]`` for ``x`` on ``level`` (= t), returned on ``to_level`` (= s < t)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != tree.size(level):
        raise ShapeError(f"level {level} has {tree.size(level)} nodes, got {x.size} values")
    tree._check_level(to_level)
    if to_level >= level:
        raise ShapeError(f"cannot condition level {level} onto level {to_level}")
    for t in range(level, to_level, -1):
        x = tree.children_sum(x * tree.probs[t], t)
    return x


def expectation(tree: EventTree, x, level: int | None = None) -> float:
    """Unconditional mean of ``x`` given on ``level`` (default: the leaves)."""
    level = tree.depth if level is None else level
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != tree.size(level):
        raise ShapeError(f"level {level} has {tree.size(level)} nodes, got {x.size} values")
    return float(np.dot(tree.node_probabilities(level), x))


def log_conditional_expectation(tree: EventTree, log_x, level: int) -> np.ndarray:
    """``log E[exp(log_x) | F_{t-1}]`` for ``log_x`` on level ``t``, max-shifted per parent.

    Children reached with probability zero do not take part in the shift.
    """
    log_x = np.asarray(log_x, dtype=float)
    par = tree.parents[level]
    pr = tree.probs[level]
    live = pr > 0
    shift = np.full(tree.size(level - 1), -np.inf)
    np.maximum.at(shift, par[live], log_x[live])
    terms = np.where(live, pr * np.exp(np.where(live, log_x - shift[par], 0.0)), 0.0)
    return shift + np.log(tree.children_sum(terms, level))


def death_time_tree(mortality) -> EventTree:
    """Binary survival tree generated by ``D_t = 1{tau <= t}``.

    ``mortality`` is a :class:`~riskalloc.mortality.MortalityCurve` or a plain
    sequence ``q_0..q_{T-1}``. On every level the dead nodes come first, in order
    of death period, and the single alive node is last. Leaves are therefore
    ``{tau<=1}, {1<tau<=2}, ..., {T-1<tau<=T}, {T<tau}``.
    """
    q = np.asarray(getattr(mortality, "q", mortality), dtype=float).reshape(-1)
    if q.size == 0:
        raise ShapeError("mortality curve is empty")
    if not np.all(np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
        raise DomainError("death probabilities must lie in [0, 1]")
    parents = [()]
    probs = [()]
    for t in range(1, q.size + 1):
        # level t-1 has t-1 dead nodes followed by the alive node at index t-1
        dead = list(range(t - 1))
        parents.append(dead + [t - 1, t - 1])
        probs.append([1.0] * (t - 1) + [q[t - 1], 1.0 - q[t - 1]])
    return EventTree(tuple(parents), tuple(probs))


def reallocate_terminal(tree: EventTree, curve: RateCurve, y: AdaptedProcess) -> AdaptedProcess:
    """Shift each payment one period later, accruing interest, keeping the terminal payment.

    ``X_1 = 0``, ``X_t = (1 + r_t) Y_{t-1}`` for ``1 < t < T`` and
    ``X_T = Y_T + (1 + r_T) Y_{T-1}``. Discounted path sums are unchanged.
    For ``T = 1`` the allocation is returned as is.
    """
    if not y.tree.same_as(tree):
        raise ShapeError("process does not live on this tree")
    _check_curve(tree, curve)
    T = tree.depth
    if T == 1:
        return AdaptedProcess(tree, (y[1].copy(),))
    out = [np.zeros(tree.size(1))]
    for t in range(2, T + 1):
        carried = (1.0 + curve.rates[t - 1]) * y[t - 1][tree.parents[t]]
        out.append(carried + y[t] if t == T else carried)
    return AdaptedProcess(tree, tuple(out))


def _check_curve(tree: EventTree, curve: RateCurve):
    if curve.term < tree.depth:
        raise ShapeError(f"rate curve covers {curve.term} periods, tree has depth {tree.depth}")
