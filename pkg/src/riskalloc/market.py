"""Deterministic interest-rate curve used as the numeraire."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from riskalloc.errors import DomainError, ParseError


@dataclass(frozen=True)
class RateCurve:
    """Per-period spot rates ``r_1..r_T`` and the bond prices they imply.

    ``bond_prices[t]`` is ``B_t = prod_{k<=t} (1 + r_k)`` with ``B_0 = 1``.
    """

    rates: np.ndarray
    bond_prices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float).reshape(-1)
        if not np.all(np.isfinite(rates)):
            raise DomainError("rates must be finite")
        if np.any(rates < 0):
            raise DomainError("rates must be nonnegative")
        rates.setflags(write=False)
        bonds = np.concatenate(([1.0], np.cumprod(1.0 + rates)))
        bonds.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "bond_prices", bonds)

    @classmethod
    def flat(cls, rate: float, term: int) -> "RateCurve":
        return cls(np.full(int(term), float(rate)))

    @property
    def term(self) -> int:
        return len(self.rates)

    def truncated(self, term: int) -> "RateCurve":
        if term > self.term:
            raise DomainError(f"curve has {self.term} periods, {term} requested")
        return RateCurve(self.rates[:term])

    @classmethod
    def from_csv(cls, path) -> "RateCurve":
        """Read a ``t,rate`` table with 1-based ascending ``t``."""
        rates = []
        for line, t, value in _read_two_columns(path, ("t", "rate")):
            if int(t) != len(rates) + 1:
                raise ParseError(f"expected t={len(rates) + 1}, got {t}", path, line)
            rates.append(value)
        if not rates:
            raise ParseError("no data rows", path)
        return cls(np.array(rates))


def bond_price(curve: RateCurve, t: int) -> float:
    if not 0 <= t <= curve.term:
        raise IndexError(f"time index {t} outside 0..{curve.term}")
    return float(curve.bond_prices[t])


def discount(curve: RateCurve, amount, t: int):
    """Discounted value ``amount / B_t``; works elementwise on arrays."""
    b = bond_price(curve, t)
    if np.ndim(amount):
        return np.asarray(amount, dtype=float) / b
    return float(amount) / b


def _read_two_columns(path, header):
    """Yield ``(line_number, key, value)`` from a two-column CSV with a header."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError("empty file", path, 1) from None
        if [c.strip() for c in first] != list(header):
            raise ParseError(f"expected header {','.join(header)}", path, 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", path, line)
            try:
                key = float(row[0])
                value = float(row[1])
            except ValueError:
                raise ParseError(f"non-numeric value in {row!r}", path, line) from None
            if key != int(key):
                raise ParseError(f"index {row[0]!r} is not an integer", path, line)
            yield line, int(key), value
