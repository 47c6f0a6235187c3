"""Geometry of the unit d-torus [0,1)^d.

Positions live in [0,1)^d; relative positions (minimal-image displacements)
live in [-1/2,1/2)^d. Everything here is plain numpy and works elementwise
on arrays whose last axis is the coordinate axis.
"""
from __future__ import annotations

import numpy as np

__all__ = ["wrap", "displacement", "DimensionMismatchError"]


class DimensionMismatchError(ValueError):
    pass


def wrap(raw):
    """Map coordinates to the canonical representative in [0,1).

    Congruent to the input mod 1. Raises on non-finite input.
    """
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ValueError("wrap: non-finite coordinate")
    out = np.mod(raw, 1.0)
    # mod can return 1.0 for tiny negative inputs (-1e-17 % 1.0 == 1.0)
    out = np.where(out >= 1.0, out - 1.0, out)
    return out


def displacement(x, y):
    """Minimal-image displacement x - y, components in [-1/2, 1/2).

    The tie at distance exactly 1/2 resolves to -1/2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1:] != y.shape[-1:]:
        raise DimensionMismatchError(
            f"displacement: dimension mismatch {x.shape[-1:]} vs {y.shape[-1:]}"
        )
    d = np.mod(x - y + 0.5, 1.0)
    d = np.where(d >= 1.0, d - 1.0, d)
    return d - 0.5
