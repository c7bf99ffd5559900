"""Synthetic mortality table bundled for demos and sweeps.

Commercial mortality tables are generally not redistributable,
so the default table is a Gompertz-Makeham law fitted by eye to adult male
mortality: force of mortality ``A + B c**x`` at age ``x``.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from riskalloc.mortality import MortalityCurve

MAKEHAM_A = 5e-4
GOMPERTZ_B = 3e-5
GOMPERTZ_C = 1.1

BUNDLED_TABLE = "synthetic_male30.csv"


def gompertz_makeham(age: int = 30, term: int = 30, a=MAKEHAM_A, b=GOMPERTZ_B, c=GOMPERTZ_C) -> MortalityCurve:
    """One-year death probabilities from age ``age`` for ``term`` years."""
    x = age + np.arange(term, dtype=float)
    integrated = a + b * c**x * (c - 1.0) / np.log(c)
    return MortalityCurve(-np.expm1(-integrated))


def bundled_table_path():
    return resources.files("riskalloc").joinpath("data", BUNDLED_TABLE)


def bundled_table() -> MortalityCurve:
    with resources.as_file(bundled_table_path()) as path:
        return MortalityCurve.from_csv(path)


def write_table(curve: MortalityCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,q\n")
        for t, q in enumerate(curve.q, 1):
            fh.write(f"{t},{q:.12g}\n")
