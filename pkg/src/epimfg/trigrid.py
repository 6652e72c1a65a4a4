"""Shared raster of the belief triangle {(s, a): s, a >= 0, s + a <= 1}.

Nodes sit at (i*h, j*h) with i + j <= n and h = 1/n, stored in a flat vector
(row-major in i, then j).  The grid carries precomputed neighbor indices for
one-sided differences, the reflection partner (i, n-i-j) used by the value
solver, and boundary masks.  Both the HJB and the density solver run on the
same instance so policies never need interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OUTSIDE = -1


@dataclass(frozen=True, eq=False)
class TriGrid:
    n: int
    h: float = field(init=False)
    i: np.ndarray = field(init=False, repr=False)
    j: np.ndarray = field(init=False, repr=False)
    s: np.ndarray = field(init=False, repr=False)
    a: np.ndarray = field(init=False, repr=False)
    flat_of: np.ndarray = field(init=False, repr=False)  # (n+1, n+1) lookup, OUTSIDE off-triangle
    ip: np.ndarray = field(init=False, repr=False)   # (i+1, j)
    im: np.ndarray = field(init=False, repr=False)   # (i-1, j)
    jp: np.ndarray = field(init=False, repr=False)   # (i, j+1)
    jm: np.ndarray = field(init=False, repr=False)   # (i, j-1)
    diag: np.ndarray = field(init=False, repr=False)     # (i-1, j+1), along the hypotenuse
    adiag: np.ndarray = field(init=False, repr=False)    # (i+1, j-1)
    reflect: np.ndarray = field(init=False, repr=False)  # (i, n-i-j)

    def __post_init__(self):
        n = self.n
        if n < 2:
            raise ValueError("grid needs n >= 2")
        ii = np.concatenate([np.full(n + 1 - i, i, dtype=np.int64) for i in range(n + 1)])
        jj = np.concatenate([np.arange(n + 1 - i, dtype=np.int64) for i in range(n + 1)])
        flat_of = np.full((n + 1, n + 1), OUTSIDE, dtype=np.int64)
        flat_of[ii, jj] = np.arange(ii.size)

        def look(di: int, dj: int) -> np.ndarray:
            qi, qj = ii + di, jj + dj
            ok = (qi >= 0) & (qi <= n) & (qj >= 0) & (qj <= n)
            out = np.full(ii.size, OUTSIDE, dtype=np.int64)
            out[ok] = flat_of[qi[ok], qj[ok]]
            return out

        object.__setattr__(self, "h", 1.0 / n)
        object.__setattr__(self, "i", ii)
        object.__setattr__(self, "j", jj)
        object.__setattr__(self, "s", ii / n)
        object.__setattr__(self, "a", jj / n)
        object.__setattr__(self, "flat_of", flat_of)
        object.__setattr__(self, "ip", look(1, 0))
        object.__setattr__(self, "im", look(-1, 0))
        object.__setattr__(self, "jp", look(0, 1))
        object.__setattr__(self, "jm", look(0, -1))
        object.__setattr__(self, "diag", look(-1, 1))
        object.__setattr__(self, "adiag", look(1, -1))
        object.__setattr__(self, "reflect", flat_of[ii, n - ii - jj])

    @property
    def size(self) -> int:
        return self.i.size

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    # -- masks -------------------------------------------------------------

    @property
    def s0_mask(self) -> np.ndarray:
        return self.i == 0

    @property
    def a0_mask(self) -> np.ndarray:
        return self.j == 0

    @property
    def hyp_mask(self) -> np.ndarray:
        return self.i + self.j == self.n

    @property
    def lower_mask(self) -> np.ndarray:
        """Nodes with a <= (1-s)/2, the half solved by the value stepper."""
        return 2 * self.j <= self.n - self.i

    @property
    def interior_mask(self) -> np.ndarray:
        return (self.i > 0) & (self.j > 0) & (self.i + self.j < self.n)

    # -- helpers -------------------------------------------------------------

    def index(self, i: int, j: int) -> int:
        k = int(self.flat_of[i, j])
        if k == OUTSIDE:
            raise IndexError(f"({i}, {j}) outside the triangle (n={self.n})")
        return k

    def integrate(self, values: np.ndarray) -> float:
        """Node-centered midpoint quadrature with uniform cell area h^2."""
        return float(values.sum() * self.cell_area)

    def to_matrix(self, values: np.ndarray, fill=np.nan) -> np.ndarray:
        out = np.full((self.n + 1, self.n + 1), fill, dtype=float)
        out[self.i, self.j] = values
        return out
