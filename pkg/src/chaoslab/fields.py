"""Periodic grid fields on the unit torus.

A scalar field of kind 'density' or 'vorticity' holds values sampled at the
n^d points (i_1/n, ..., i_d/n); a 'vector' field holds d components with the
component axis first. Grids are power-of-two sized so spectral transforms
stay cheap and nested refinements align.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = ["GridField", "grid_points", "FieldInvariantError"]

_MAGIC = b"CLABFLD1"
_KIND_CODES = {"density": 1, "vorticity": 2, "vector": 3}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}

DENSITY_FLOOR = -1e-12
MASS_TOL = 1e-12


class FieldInvariantError(ValueError):
    pass


def grid_points(n, d):
    """Coordinate arrays of the n^d grid, shape (d,) + (n,)*d."""
    axes = [np.arange(n) / n for _ in range(d)]
    return np.stack(np.meshgrid(*axes, indexing="ij"))


@dataclass
class GridField:
    values: np.ndarray
    kind: str
    time: float = 0.0
    n: int = field(init=False)
    d: int = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown field kind {self.kind!r}")
        shape = self.values.shape
        if self.kind == "vector":
            if len(shape) < 2:
                raise ValueError("vector field needs a leading component axis")
            self.d = shape[0]
            grid_shape = shape[1:]
        else:
            self.d = len(shape)
            grid_shape = shape
        if len(grid_shape) != self.d or len(set(grid_shape)) != 1:
            raise ValueError(f"grid must be n^d, got shape {shape}")
        self.n = grid_shape[0]
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"grid size {self.n} is not a power of two")

    # -- constructors ----------------------------------------------------

    @classmethod
    def from_function(cls, fn, n, d, kind, time=0.0):
        x = grid_points(n, d)
        return cls(np.asarray(fn(*x), dtype=float), kind, time)

    @classmethod
    def uniform_density(cls, n, d):
        return cls(np.ones((n,) * d), "density")

    # -- invariants -------------------------------------------------------

    def cell_volume(self):
        return self.n ** (-self.d)

    def mass(self):
        return float(self.values.mean())

    def check_invariants(self):
        """Raise FieldInvariantError if the kind-specific invariants fail."""
        if self.kind == "density":
            if self.values.min() < DENSITY_FLOOR:
                raise FieldInvariantError(
                    f"density has negative values (min {self.values.min():.3e})"
                )
            if abs(self.mass() - 1.0) > MASS_TOL:
                raise FieldInvariantError(
                    f"density mass {self.mass()!r} not 1 within {MASS_TOL}"
                )
        elif self.kind == "vorticity":
            if abs(self.mass()) > MASS_TOL:
                raise FieldInvariantError(
                    f"vorticity mean {self.mass():.3e} not 0 within {MASS_TOL}"
                )
        return self

    # -- I/O ---------------------------------------------------------------

    def save(self, path):
        """Flat binary: magic, n, d, kind code, component count, time, data."""
        ncomp = self.d if self.kind == "vector" else 1
        header = _MAGIC + struct.pack(
            "<IIIId", self.n, self.d, _KIND_CODES[self.kind], ncomp, self.time
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise ValueError(f"{path}: not a chaoslab field file")
            n, d, code, ncomp, time = struct.unpack("<IIIId", fh.read(24))
            kind = _CODE_KINDS.get(code)
            if kind is None:
                raise ValueError(f"{path}: unknown kind code {code}")
            count = ncomp * n**d
            data = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
        shape = ((ncomp,) if kind == "vector" else ()) + (n,) * d
        return cls(data.reshape(shape).copy(), kind, time)

    def to_csv(self, path):
        x = grid_points(self.n, self.d)
        coords = [x[j].ravel() for j in range(self.d)]
        if self.kind == "vector":
            comps = [self.values[j].ravel() for j in range(self.d)]
            names = [f"x{j+1}" for j in range(self.d)] + [
                f"v{j+1}" for j in range(self.d)
            ]
            cols = coords + comps
        else:
            names = [f"x{j+1}" for j in range(self.d)] + ["value"]
            cols = coords + [self.values.ravel()]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for row in zip(*cols):
                fh.write(",".join(repr(v) for v in row) + "\n")
