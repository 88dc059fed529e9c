"""Mass-coordinate mesh and time-step bookkeeping.

The independent spatial variable is the Lagrangian mass coordinate s.  Node
values s_0 < s_1 < ... < s_N are fixed for the whole run; kinematic fields
(radius, velocity) live on the nodes, thermodynamic fields (density,
pressure, internal energy) on the N cells between them.
"""

from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    """Invalid mesh specification."""


@dataclass(frozen=True)
class MassMesh:
    """Fixed, possibly nonuniform partition of the mass interval.

    s : mass-coordinate nodes, shape (N+1,), strictly increasing, N >= 2.

    Cell widths and midpoints are always derived from ``s`` so there is a
    single source of truth; the node array is made read-only on construction.
    """

    s: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        if s.ndim != 1 or s.size < 3:
            raise MeshError(f"need at least 3 mass nodes (2 cells), got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise MeshError("mass nodes must be finite")
        bad = np.nonzero(np.diff(s) <= 0.0)[0]
        if bad.size:
            raise MeshError(f"mass nodes must be strictly increasing; violated at interval {bad[0]}")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def n_cells(self) -> int:
        return self.s.size - 1

    @property
    def n_nodes(self) -> int:
        return self.s.size

    @property
    def h(self) -> np.ndarray:
        """Cell widths h_i = s_{i+1} - s_i, shape (N,)."""
        return np.diff(self.s)

    @property
    def midpoints(self) -> np.ndarray:
        """Cell midpoints s_{i+1/2}, shape (N,)."""
        return 0.5 * (self.s[:-1] + self.s[1:])

    @property
    def nodal_masses(self) -> np.ndarray:
        """Mass lumped onto each node: half of each adjacent cell, shape (N+1,)."""
        h = self.h
        m = np.empty(self.n_nodes)
        m[0] = 0.5 * h[0]
        m[-1] = 0.5 * h[-1]
        m[1:-1] = 0.5 * (h[:-1] + h[1:])
        return m

    def interior_spacings(self) -> np.ndarray:
        """Staggered spacings (h_{i-1} + h_i)/2 at interior nodes 1..N-1."""
        h = self.h
        return 0.5 * (h[:-1] + h[1:])


def build_mesh(s) -> MassMesh:
    """Build a mesh from an explicit node array (validated, copied)."""
    return MassMesh(np.asarray(s, dtype=float))


def uniform_mesh(s_min: float, s_max: float, n_cells: int) -> MassMesh:
    """Uniform partition of [s_min, s_max] into n_cells cells."""
    if n_cells < 2:
        raise MeshError(f"need at least 2 cells, got {n_cells}")
    if not s_max > s_min:
        raise MeshError(f"empty mass interval [{s_min}, {s_max}]")
    return MassMesh(np.linspace(s_min, s_max, n_cells + 1))


@dataclass(frozen=True)
class TimeLayer:
    """One implicit step from time t to t + tau.

    Provides the midpoint values the time-centered scheme needs: the
    half-step time and the two-layer average of t^2 (which is *not* the
    square of the half-step time).
    """

    t: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0.0 or not np.isfinite(self.tau):
            raise MeshError(f"step length must be positive and finite, got {self.tau}")

    @property
    def t_hat(self) -> float:
        return self.t + self.tau

    @property
    def t_half(self) -> float:
        return self.t + 0.5 * self.tau

    @property
    def t_sq_half(self) -> float:
        return 0.5 * (self.t * self.t + self.t_hat * self.t_hat)
