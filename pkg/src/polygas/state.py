"""Grid functions on one time layer and the staggered-mesh operators.

Kinematic fields (r, u) are nodal, shape (N+1,); thermodynamic fields
(rho, p, eps) are cell-centered, shape (N,).  A layer is tied to one
MassMesh and one time value and is treated as immutable: a time step
produces a new layer instead of mutating in place.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .mesh import MassMesh, TimeLayer


class LayerError(ValueError):
    """Grid-function arrays inconsistent with the mesh or unphysical."""


_NODAL_FIELDS = ("r", "u")
_CELL_FIELDS = ("rho", "p", "eps")


@dataclass(frozen=True)
class GridLayer:
    """All grid functions of one time layer.

    mesh : the mass mesh everything lives on
    t    : time stamp of the layer
    r, u : nodal radius and velocity, shape (N+1,)
    rho, p, eps : cell density, pressure, specific internal energy, shape (N,)
    """

    mesh: MassMesh
    t: float
    r: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        n_nodes = self.mesh.n_nodes
        n_cells = self.mesh.n_cells
        for name, size in [("r", n_nodes), ("u", n_nodes),
                           ("rho", n_cells), ("p", n_cells), ("eps", n_cells)]:
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (size,):
                raise LayerError(f"field '{name}' must have shape ({size},), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise LayerError(f"field '{name}' contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def validate(self, n: int, mass_tol: float = 1e-10) -> None:
        """Check physical invariants for geometry exponent n (0, 1 or 2).

        Raises LayerError on nonpositive density, disordered or (for n >= 1)
        negative radii, or a mass-consistency defect above ``mass_tol``
        (relative to the cell width).
        """
        if np.any(self.rho <= 0.0):
            i = int(np.argmax(self.rho <= 0.0))
            raise LayerError(f"nonpositive density in cell {i}: rho={self.rho[i]!r}")
        dr = np.diff(self.r)
        if np.any(dr <= 0.0):
            i = int(np.argmax(dr <= 0.0))
            raise LayerError(f"radii not strictly increasing at node {i + 1}")
        if n >= 1 and self.r[0] < 0.0:
            raise LayerError(f"negative radius {self.r[0]!r} with curved geometry n={n}")
        defect = self.mass_consistency_defect(n)
        if defect > mass_tol:
            raise LayerError(f"mass-consistency defect {defect:.3e} exceeds {mass_tol:.1e}")

    def mass_consistency_defect(self, n: int) -> float:
        """Max relative defect of h_i = rho_i * (r_{i+1}^{n+1} - r_i^{n+1})/(n+1).

        This ties cell volume, density and cell mass together; initial data
        built through the mass-coordinate map satisfies it to round-off and
        the scheme preserves it.
        """
        h = self.mesh.h
        vol = np.diff(self.r ** (n + 1)) / (n + 1)
        return float(np.max(np.abs(self.rho * vol - h) / h))

    def with_fields(self, **fields) -> "GridLayer":
        """Copy of the layer with some fields replaced."""
        return replace(self, **fields)


@dataclass(frozen=True)
class TwoLayerView:
    """A consecutive pair of layers (lo at t, hi at t + tau) on one mesh.

    This is the object every residual and conservation audit consumes:
    all time averaging and differencing is defined on it.
    """

    lo: GridLayer
    hi: GridLayer
    tau: float

    def __post_init__(self):
        if self.lo.mesh is not self.hi.mesh and not np.array_equal(self.lo.mesh.s, self.hi.mesh.s):
            raise LayerError("layers live on different meshes")
        if not self.tau > 0.0:
            raise LayerError(f"step length must be positive, got {self.tau}")
        if abs(self.hi.t - self.lo.t - self.tau) > 1e-9 * max(1.0, abs(self.hi.t)):
            raise LayerError(
                f"layer times {self.lo.t}, {self.hi.t} inconsistent with tau={self.tau}")

    @property
    def mesh(self) -> MassMesh:
        return self.lo.mesh

    @property
    def time(self) -> TimeLayer:
        return TimeLayer(self.lo.t, self.tau)


# --- staggered-mesh operators ------------------------------------------------

def time_diff(lo_value, hi_value, tau: float):
    """Two-layer time difference (hi - lo)/tau; works on scalars and arrays."""
    return (np.asarray(hi_value) - np.asarray(lo_value)) / tau


def weighted(lo_value, hi_value, alpha: float):
    """Implicit weighting alpha*hi + (1 - alpha)*lo, alpha in [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"weight must lie in [0, 1], got {alpha}")
    return alpha * np.asarray(hi_value) + (1.0 - alpha) * np.asarray(lo_value)


def forward_s(f_nodal: np.ndarray, mesh: MassMesh, i: int | None = None):
    """Cell-based difference of a nodal field: (f_{i+1} - f_i)/h_i.

    Returns the full (N,) array, or a single value when a cell index is given.
    """
    f = np.asarray(f_nodal)
    if i is None:
        return (f[1:] - f[:-1]) / mesh.h
    if not 0 <= i < mesh.n_cells:
        raise IndexError(f"cell index {i} out of range [0, {mesh.n_cells})")
    return (f[i + 1] - f[i]) / mesh.h[i]


def backward_s_cellfield(g_cells: np.ndarray, mesh: MassMesh, i: int | None = None):
    """Node-based difference of a cell field on the staggered spacing.

    At interior node i: (g_{i+1/2} - g_{i-1/2}) / ((h_{i-1} + h_i)/2).
    Boundary nodes have no two-sided value; asking for one is an error.
    Returns the (N-1,) interior-node array, or a single value for index i.
    """
    g = np.asarray(g_cells)
    if i is None:
        return (g[1:] - g[:-1]) / mesh.interior_spacings()
    if not 1 <= i <= mesh.n_cells - 1:
        raise IndexError(f"node index {i} is not interior (valid: 1..{mesh.n_cells - 1})")
    return (g[i] - g[i - 1]) / (0.5 * (mesh.h[i - 1] + mesh.h[i]))


def interp_nodal_pressure(p_cells: np.ndarray, mesh: MassMesh, i: int | None = None):
    """Width-weighted interpolation of a cell field to interior nodes.

    p*_i = (h_i p_{i-1/2} + h_{i-1} p_{i+1/2}) / (h_{i-1} + h_i): the weights
    are swapped relative to naive linear interpolation, which is exactly what
    makes the energy flux telescope.  Output lies between the adjacent cell
    values.  Interior nodes only.
    """
    p = np.asarray(p_cells)
    h = mesh.h
    if i is None:
        return (h[1:] * p[:-1] + h[:-1] * p[1:]) / (h[:-1] + h[1:])
    if not 1 <= i <= mesh.n_cells - 1:
        raise IndexError(f"node index {i} is not interior (valid: 1..{mesh.n_cells - 1})")
    return (h[i] * p[i - 1] + h[i - 1] * p[i]) / (h[i - 1] + h[i])


def cell_average(f_nodal: np.ndarray) -> np.ndarray:
    """Plain average of a nodal field over each cell: (f_i + f_{i+1})/2.

    The argument is the already-evaluated nodal expression; e.g. the cell
    kinetic energy uses cell_average(u*u), not cell_average(u)**2.
    """
    f = np.asarray(f_nodal)
    return 0.5 * (f[:-1] + f[1:])


def total_cell_quantity(layer: GridLayer, density_cells: np.ndarray) -> float:
    """Mass-weighted total sum(h_i * density_i) with compensated summation."""
    return math.fsum(layer.mesh.h * np.asarray(density_cells))


def total_nodal_quantity(layer: GridLayer, density_nodes: np.ndarray) -> float:
    """Node-mass-weighted total sum(m_i * density_i) with compensated summation."""
    return math.fsum(layer.mesh.nodal_masses * np.asarray(density_nodes))
