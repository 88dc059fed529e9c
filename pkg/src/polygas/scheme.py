"""Implicit completely conservative time step.

One step advances every field from t to t + tau by solving a coupled
nonlinear system for the new nodal velocities and one pressure-like unknown
per cell (the new pressure in pointwise-EOS mode, the two-layer half-sum
pressure in conservative mode).  Radii, densities and internal energies are
eliminated in closed form, so the Newton system is pentadiagonal in the
interleaved unknown ordering [u_0, q_0, u_1, q_1, ..., u_N].

The difference equations are built so that, at the solution, discrete
analogues of mass, momentum, energy and center-of-mass balance telescope to
round-off; in conservative mode two additional quadratic balances hold as
well when gamma equals the geometry-specific exponent 1 + 2/(n+1).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.linalg import LinAlgError

from .mesh import MassMesh
from .state import (
    GridLayer,
    LayerError,
    TwoLayerView,
    backward_s_cellfield,
    cell_average,
    forward_s,
    interp_nodal_pressure,
    time_diff,
    weighted,
)

_SQRT_EPS = math.sqrt(np.finfo(float).eps)

GEOMETRIES = (0, 1, 2)  # plane, cylinder, sphere
EOS_MODES = ("pointwise", "conservative")
RESIDUAL_FAMILIES = ("mass", "momentum", "energy", "trajectory", "eos")


class ConfigError(ValueError):
    """Invalid scheme parameters or run configuration."""


@dataclass(frozen=True)
class PressureTrace:
    """Prescribed boundary pressure as a function of time.

    kind: "constant" (p0), "linear" (p0 + rate*t) or "exp_decay"
    (p0 * exp(-rate*t)).
    """

    kind: str = "constant"
    p0: float = 1.0
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "exp_decay"):
            raise ConfigError(f"unknown pressure trace kind {self.kind!r}")

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return self.p0
        if self.kind == "linear":
            return self.p0 + self.rate * t
        return self.p0 * math.exp(-self.rate * t)


@dataclass(frozen=True)
class BoundaryCondition:
    """Closure at one end of the mass interval.

    kind "wall": the boundary node moves with prescribed velocity u_wall
    (0 for a rigid wall).  kind "pressure": an external pressure trace acts
    on the boundary node through a one-sided momentum equation.
    """

    kind: str = "wall"
    u_wall: float = 0.0
    trace: PressureTrace | None = None

    def __post_init__(self):
        if self.kind not in ("wall", "pressure"):
            raise ConfigError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "pressure" and self.trace is None:
            raise ConfigError("pressure boundary needs a trace")
        if not np.isfinite(self.u_wall):
            raise ConfigError("wall velocity must be finite")

    @classmethod
    def wall(cls, u_wall: float = 0.0) -> "BoundaryCondition":
        return cls(kind="wall", u_wall=u_wall)

    @classmethod
    def pressure(cls, trace: PressureTrace | float) -> "BoundaryCondition":
        if not isinstance(trace, PressureTrace):
            trace = PressureTrace(kind="constant", p0=float(trace))
        return cls(kind="pressure", trace=trace)


_WALL = BoundaryCondition.wall()


@dataclass(frozen=True)
class SchemeParams:
    """Everything that defines the difference scheme for a run.

    n        : geometry exponent (0 plane, 1 cylinder, 2 sphere)
    gamma    : polytropic exponent of the ideal-gas closure
    alpha    : implicitness weight of the pressure terms (pointwise mode;
               conservative mode is inherently time-centered and ignores it)
    eos_mode : "pointwise" (gas law imposed on the new layer) or
               "conservative" (two-layer gas law with the correction terms
               that make the quadratic balances exact)
    visc_nu  : coefficient of the quadratic artificial viscosity (0 = off)
    """

    n: int
    gamma: float
    alpha: float = 0.5
    eos_mode: str = "pointwise"
    bc_left: BoundaryCondition = _WALL
    bc_right: BoundaryCondition = _WALL
    visc_nu: float = 0.0
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    def __post_init__(self):
        if self.n not in GEOMETRIES:
            raise ConfigError(f"geometry exponent must be one of {GEOMETRIES}, got {self.n}")
        if not np.isfinite(self.gamma) or self.gamma in (0.0, 1.0):
            raise ConfigError(f"gamma must be finite and different from 0 and 1, got {self.gamma}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.eos_mode not in EOS_MODES:
            raise ConfigError(f"eos_mode must be one of {EOS_MODES}, got {self.eos_mode!r}")
        if self.visc_nu < 0.0:
            raise ConfigError(f"viscosity coefficient must be >= 0, got {self.visc_nu}")
        if not self.newton_tol > 0.0:
            raise ConfigError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter must be >= 1")

    @property
    def gamma_star(self) -> float:
        """The gamma for which the additional quadratic balances are exact."""
        return 1.0 + 2.0 / (self.n + 1)

    @property
    def alpha_effective(self) -> float:
        return 0.5 if self.eos_mode == "conservative" else self.alpha

    @property
    def is_conservative(self) -> bool:
        return self.eos_mode == "conservative"


@dataclass
class StepReport:
    """Diagnostics of one attempted step.

    residual_max maps each equation family (mass, momentum, energy,
    trajectory, eos) to the max |residual| recomputed from the accepted
    layers; residuals keeps the per-cell/per-node arrays themselves.
    history is the scaled Newton residual norm per iteration.
    """

    accepted: bool
    iterations: int
    final_residual_norm: float
    history: list[float] = field(default_factory=list)
    residual_max: dict[str, float] = field(default_factory=dict)
    reason: str = ""
    residuals: dict[str, np.ndarray] | None = None


class StepRejected(RuntimeError):
    """The step did not produce an acceptable new layer; carries a StepReport."""

    def __init__(self, reason: str, report: StepReport):
        super().__init__(reason)
        self.report = report


# --- geometric factors and constitutive pieces -------------------------------

def r_factor(r_lo, r_hi, n: int):
    """Effective area factor R(r, r_hat) = (r_hat^{n+1} - r^{n+1}) / ((n+1)(r_hat - r)).

    Evaluated in closed form (1, arithmetic mean, quadratic mean-like), so it
    stays finite when r_hat == r.  Satisfies r_hat^{n+1} - r^{n+1} =
    (n+1) * R * (r_hat - r) identically, which is what makes the swept cell
    volume consistent with the mass equation.
    """
    r_lo = np.asarray(r_lo, dtype=float)
    r_hi = np.asarray(r_hi, dtype=float)
    if n == 0:
        return np.ones_like(r_lo)
    if n == 1:
        return 0.5 * (r_lo + r_hi)
    if n == 2:
        return (r_hi * r_hi + r_hi * r_lo + r_lo * r_lo) / 3.0
    raise ConfigError(f"geometry exponent must be one of {GEOMETRIES}, got {n}")


def _eos_bracket(r_lo, r_hi, n: int):
    """Nodal field whose s-difference corrects the two-layer gas law.

    Equals (r^{(1/2)} * R - midpoint of r^{n+1}) in closed form:
    0 for n = 0, -(r_hat - r)^2/4 for n = 1, -(r_hat + r)(r_hat - r)^2/3
    for n = 2.  O(tau^2) since r_hat - r = tau * v.
    """
    if n == 0:
        return np.zeros_like(np.asarray(r_lo, dtype=float))
    d = np.asarray(r_hi, dtype=float) - np.asarray(r_lo, dtype=float)
    if n == 1:
        return -0.25 * d * d
    return -(np.asarray(r_hi, dtype=float) + np.asarray(r_lo, dtype=float)) * d * d / 3.0


def viscous_pressure(view: TwoLayerView, params: SchemeParams) -> np.ndarray:
    """Quadratic artificial viscosity per cell, active only under compression.

    omega = visc_nu * rho^{(1/2)} * (du)^2 where du is the jump of the
    time-centered velocity across the cell; zero where the swept-volume rate
    (R v)_s is nonnegative.  Added to the cell pressure everywhere except in
    the gas-law residual.
    """
    n_cells = view.mesh.n_cells
    if params.visc_nu == 0.0:
        return np.zeros(n_cells)
    v = 0.5 * (view.lo.u + view.hi.u)
    big_r = r_factor(view.lo.r, view.hi.r, params.n)
    d_rv = forward_s(big_r * v, view.mesh)
    du = v[1:] - v[:-1]
    rho_half = 0.5 * (view.lo.rho + view.hi.rho)
    return np.where(d_rv < 0.0, params.visc_nu * rho_half * du * du, 0.0)


def effective_boundaries(params: SchemeParams, r_left: float) -> tuple[BoundaryCondition, BoundaryCondition]:
    """Resolve the boundary pair, enforcing the coordinate-origin rule.

    With curved geometry (n >= 1) a boundary node sitting exactly at r = 0
    must stay there: only a resting wall is meaningful.
    """
    bc_left = params.bc_left
    if params.n >= 1 and r_left == 0.0:
        if bc_left.kind != "wall" or bc_left.u_wall != 0.0:
            raise ConfigError("the node at r = 0 must be a resting wall for n >= 1")
    return bc_left, params.bc_right


def boundary_pressure(bc: BoundaryCondition, t_lo: float, t_hi: float, alpha_eff: float) -> float:
    """Alpha-weighted external pressure over the step for a pressure boundary."""
    p_lo = bc.trace(t_lo)
    p_hi = bc.trace(t_hi)
    if not (np.isfinite(p_lo) and np.isfinite(p_hi)):
        raise ConfigError(f"boundary pressure trace not finite on [{t_lo}, {t_hi}]")
    return alpha_eff * p_hi + (1.0 - alpha_eff) * p_lo


def effective_cell_pressure(view: TwoLayerView, params: SchemeParams) -> np.ndarray:
    """Alpha-weighted cell pressure plus artificial viscosity, shape (N,)."""
    p_w = weighted(view.lo.p, view.hi.p, params.alpha_effective)
    return p_w + viscous_pressure(view, params)


# --- residuals of the difference equations (recomputed from raw layers) ------

def residual_mass(view: TwoLayerView, params: SchemeParams) -> np.ndarray:
    """Per cell: (1/rho)_t - (R v)_s."""
    v = 0.5 * (view.lo.u + view.hi.u)
    big_r = r_factor(view.lo.r, view.hi.r, params.n)
    spec_vol_t = time_diff(1.0 / view.lo.rho, 1.0 / view.hi.rho, view.tau)
    return spec_vol_t - forward_s(big_r * v, view.mesh)


def residual_momentum(view: TwoLayerView, params: SchemeParams,
                      p_weighted: np.ndarray | None = None) -> np.ndarray:
    """Per interior node: u_t + R * (P + omega)_s-staggered."""
    if p_weighted is None:
        p_weighted = weighted(view.lo.p, view.hi.p, params.alpha_effective)
    p_eff = p_weighted + viscous_pressure(view, params)
    big_r = r_factor(view.lo.r, view.hi.r, params.n)
    u_t = time_diff(view.lo.u, view.hi.u, view.tau)
    return u_t[1:-1] + big_r[1:-1] * backward_s_cellfield(p_eff, view.mesh)


def residual_energy(view: TwoLayerView, params: SchemeParams,
                    p_weighted: np.ndarray | None = None) -> np.ndarray:
    """Per cell: eps_t + (P + omega) * (R v)_s."""
    if p_weighted is None:
        p_weighted = weighted(view.lo.p, view.hi.p, params.alpha_effective)
    p_eff = p_weighted + viscous_pressure(view, params)
    v = 0.5 * (view.lo.u + view.hi.u)
    big_r = r_factor(view.lo.r, view.hi.r, params.n)
    eps_t = time_diff(view.lo.eps, view.hi.eps, view.tau)
    return eps_t + p_eff * forward_s(big_r * v, view.mesh)


def residual_trajectory(view: TwoLayerView, params: SchemeParams) -> np.ndarray:
    """Per node: r_t - u^{(1/2)}."""
    del params  # geometry-independent
    r_t = time_diff(view.lo.r, view.hi.r, view.tau)
    return r_t - 0.5 * (view.lo.u + view.hi.u)


def residual_eos(view: TwoLayerView, params: SchemeParams) -> np.ndarray:
    """Per cell: defect of the ideal-gas closure in the selected mode.

    Pointwise: eps_hat - p_hat / ((gamma - 1) rho_hat) on the new layer.
    Conservative: two-layer form written for the half-sum pressure, with the
    O(tau^2) velocity and geometry corrections included; this is the variant
    whose quadratic balances telescope exactly at gamma = gamma_star.
    """
    gm1 = params.gamma - 1.0
    if not params.is_conservative:
        return view.hi.eps - view.hi.p / (gm1 * view.hi.rho)
    q = weighted(view.lo.p, view.hi.p, 0.5)
    inv_rho_half = 0.5 * (1.0 / view.lo.rho + 1.0 / view.hi.rho)
    u_t = time_diff(view.lo.u, view.hi.u, view.tau)
    ut2_avg = cell_average(u_t * u_t)
    brack = _eos_bracket(view.lo.r, view.hi.r, params.n)
    rhs = (q * inv_rho_half / gm1
           - 0.125 * view.tau ** 2 * ut2_avg
           + 0.5 * q * forward_s(brack, view.mesh))
    return weighted(view.lo.eps, view.hi.eps, 0.5) - rhs


def boundary_residuals(view: TwoLayerView, params: SchemeParams) -> np.ndarray:
    """Residuals of the two boundary closures, [left, right].

    Wall: u_hat - u_wall.  Pressure: one-sided momentum balance against the
    alpha-weighted external pressure on the half-width boundary cell.
    """
    bc_left, bc_right = effective_boundaries(params, float(view.lo.r[0]))
    p_eff = effective_cell_pressure(view, params)
    big_r = r_factor(view.lo.r, view.hi.r, params.n)
    u_t = time_diff(view.lo.u, view.hi.u, view.tau)
    h = view.mesh.h
    alpha_eff = params.alpha_effective
    out = np.empty(2)
    if bc_left.kind == "wall":
        out[0] = view.hi.u[0] - bc_left.u_wall
    else:
        pb = boundary_pressure(bc_left, view.lo.t, view.hi.t, alpha_eff)
        out[0] = u_t[0] + big_r[0] * (p_eff[0] - pb) / (0.5 * h[0])
    if bc_right.kind == "wall":
        out[1] = view.hi.u[-1] - bc_right.u_wall
    else:
        pb = boundary_pressure(bc_right, view.lo.t, view.hi.t, alpha_eff)
        out[1] = u_t[-1] + big_r[-1] * (pb - p_eff[-1]) / (0.5 * h[-1])
    return out


# --- the Newton solve ---------------------------------------------------------

class _StepSystem:
    """Nonlinear system of one step: unknowns x = [u_0, q_0, ..., q_{N-1}, u_N]."""

    def __init__(self, lo: GridLayer, tau: float, params: SchemeParams):
        self.lo = lo
        self.tau = tau
        self.params = params
        mesh = lo.mesh
        self.h = mesh.h
        self.hbar = mesh.interior_spacings()
        self.n_unknowns = 2 * mesh.n_cells + 1
        self.inv_rho = 1.0 / lo.rho
        self.gm1 = params.gamma - 1.0
        self.alpha_eff = params.alpha_effective
        self.bc_left, self.bc_right = effective_boundaries(params, float(lo.r[0]))
        t_hi = lo.t + tau
        self.pb_left = (boundary_pressure(self.bc_left, lo.t, t_hi, self.alpha_eff)
                        if self.bc_left.kind == "pressure" else None)
        self.pb_right = (boundary_pressure(self.bc_right, lo.t, t_hi, self.alpha_eff)
                         if self.bc_right.kind == "pressure" else None)

    def initial_guess(self) -> np.ndarray:
        x = np.empty(self.n_unknowns)
        x[0::2] = self.lo.u
        x[1::2] = self.lo.p
        return x

    def residual(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        lo, tau, params = self.lo, self.tau, self.params
        u_hat = x[0::2]
        q = x[1::2]
        v = 0.5 * (lo.u + u_hat)
        r_hat = lo.r + tau * v
        big_r = r_factor(lo.r, r_hat, params.n)
        rv = big_r * v
        d_rv = (rv[1:] - rv[:-1]) / self.h
        delta = tau * d_rv  # change of specific volume over the step
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            rho_hat = lo.rho / (1.0 + lo.rho * delta)
        if params.visc_nu > 0.0:
            du = v[1:] - v[:-1]
            rho_half = 0.5 * (lo.rho + rho_hat)
            omega = np.where(d_rv < 0.0, params.visc_nu * rho_half * du * du, 0.0)
        else:
            omega = np.zeros(self.h.size)
        if params.is_conservative:
            p_w = q
        else:
            p_w = self.alpha_eff * q + (1.0 - self.alpha_eff) * lo.p
        p_eff = p_w + omega
        eps_hat = lo.eps - p_eff * delta  # energy equation, eliminated
        u_t = (u_hat - lo.u) / tau

        f_node = np.empty(u_hat.size)
        f_node[1:-1] = u_t[1:-1] + big_r[1:-1] * (p_eff[1:] - p_eff[:-1]) / self.hbar
        if self.bc_left.kind == "wall":
            f_node[0] = u_hat[0] - self.bc_left.u_wall
        else:
            f_node[0] = u_t[0] + big_r[0] * (p_eff[0] - self.pb_left) / (0.5 * self.h[0])
        if self.bc_right.kind == "wall":
            f_node[-1] = u_hat[-1] - self.bc_right.u_wall
        else:
            f_node[-1] = u_t[-1] + big_r[-1] * (self.pb_right - p_eff[-1]) / (0.5 * self.h[-1])

        if params.is_conservative:
            ut2_avg = cell_average(u_t * u_t)
            brack = _eos_bracket(lo.r, r_hat, params.n)
            brack_s = (brack[1:] - brack[:-1]) / self.h
            rhs = (q * (self.inv_rho + 0.5 * delta) / self.gm1
                   - 0.125 * tau * tau * ut2_avg
                   + 0.5 * q * brack_s)
            f_cell = 0.5 * (eps_hat + lo.eps) - rhs
        else:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                f_cell = eps_hat - q * (self.inv_rho + delta) / self.gm1

        f = np.empty(self.n_unknowns)
        f[0::2] = f_node
        f[1::2] = f_cell
        aux = {"u_hat": u_hat, "q": q, "r_hat": r_hat, "rho_hat": rho_hat,
               "eps_hat": eps_hat, "delta": delta, "omega": omega}
        return f, aux

    def scales(self, aux: dict) -> np.ndarray:
        """Row scaling for the convergence test: velocity rows by max(1, |u|),
        energy rows by max(1, |eps|)."""
        s = np.empty(self.n_unknowns)
        s[0::2] = np.maximum(1.0, np.abs(aux["u_hat"]))
        eps_scale = aux["eps_hat"]
        if self.params.is_conservative:
            eps_scale = 0.5 * (eps_scale + self.lo.eps)
        s[1::2] = np.maximum(1.0, np.abs(eps_scale))
        return s


def _scaled_norm(f: np.ndarray, scales: np.ndarray) -> float:
    a = np.abs(f) / scales
    if not np.all(np.isfinite(a)):
        return math.inf
    return float(a.max())


def _fd_banded_jacobian(residual, x: np.ndarray, f0: np.ndarray) -> np.ndarray:
    """Finite-difference Jacobian in solve_banded layout, bandwidths (2, 2).

    Every equation touches unknowns at most two slots away in the interleaved
    ordering, so columns j, j+5, j+10, ... have disjoint row footprints and
    can be perturbed together: 5 residual evaluations total.
    """
    m = x.size
    ab = np.zeros((5, m))
    rows = np.arange(m)
    for group in range(5):
        cols = np.arange(group, m, 5)
        steps = _SQRT_EPS * np.maximum(np.abs(x[cols]), 1.0)
        dx = np.zeros(m)
        dx[cols] = steps
        f1, _ = residual(x + dx)
        df = (f1 - f0)
        for c, st in zip(cols, steps):
            lo_r = max(0, c - 2)
            hi_r = min(m, c + 3)
            ab[2 + rows[lo_r:hi_r] - c, c] = df[lo_r:hi_r] / st
    return ab


def step(lo: GridLayer, tau: float, params: SchemeParams,
         mass_tol: float = 1e-10) -> tuple[GridLayer, StepReport]:
    """Advance one implicit step; returns (new layer, report).

    Raises StepRejected (carrying the report) if Newton fails to converge or
    the converged layer violates positivity/ordering, so no partial state
    escapes.  The caller may retry with a smaller tau.
    """
    if not tau > 0.0 or not np.isfinite(tau):
        raise ConfigError(f"step length must be positive and finite, got {tau}")
    system = _StepSystem(lo, tau, params)
    history: list[float] = []

    def reject(reason: str) -> StepRejected:
        report = StepReport(accepted=False, iterations=len(history),
                            final_residual_norm=history[-1] if history else math.inf,
                            history=list(history), reason=reason)
        return StepRejected(reason, report)

    x = system.initial_guess()
    f, aux = system.residual(x)
    norm = _scaled_norm(f, system.scales(aux))
    history.append(norm)
    if not np.isfinite(norm):
        raise reject("non-finite residual at the initial guess")

    while norm > params.newton_tol:
        if len(history) > params.newton_max_iter:
            raise reject(f"no Newton convergence in {params.newton_max_iter} iterations "
                         f"(residual {norm:.3e})")
        ab = _fd_banded_jacobian(system.residual, x, f)
        if not np.all(np.isfinite(ab)):
            raise reject("non-finite Jacobian")
        try:
            dx = solve_banded((2, 2), ab, -f)
        except (LinAlgError, ValueError) as exc:
            raise reject(f"linear solve failed: {exc}") from exc
        # damped update: halve until the scaled norm stops growing
        best = None
        lam = 1.0
        for _ in range(9):
            x_try = x + lam * dx
            f_try, aux_try = system.residual(x_try)
            n_try = _scaled_norm(f_try, system.scales(aux_try))
            if best is None or n_try < best[0]:
                best = (n_try, x_try, f_try, aux_try)
            if n_try <= params.newton_tol or n_try < norm:
                break
            lam *= 0.5
        if not np.isfinite(best[0]):
            raise reject("Newton iteration diverged (non-finite residual)")
        if best[0] >= norm and best[0] > params.newton_tol:
            raise reject(f"Newton stagnated at residual {best[0]:.3e}")
        norm, x, f, aux = best
        history.append(norm)

    if params.is_conservative:
        p_hat = 2.0 * aux["q"] - lo.p  # snapshot pressure consistent with the half-sum
    else:
        p_hat = aux["q"]
    try:
        hi = GridLayer(mesh=lo.mesh, t=lo.t + tau, r=aux["r_hat"], u=aux["u_hat"],
                       rho=aux["rho_hat"], p=p_hat, eps=aux["eps_hat"])
        hi.validate(params.n, mass_tol=mass_tol)
    except LayerError as exc:
        raise reject(f"positivity/ordering failure: {exc}") from exc

    view = TwoLayerView(lo=lo, hi=hi, tau=tau)
    residuals = {
        "mass": residual_mass(view, params),
        "momentum": residual_momentum(view, params),
        "energy": residual_energy(view, params),
        "trajectory": residual_trajectory(view, params),
        "eos": residual_eos(view, params),
        "boundary": boundary_residuals(view, params),
    }
    residual_max = {name: float(np.max(np.abs(residuals[name])))
                    for name in RESIDUAL_FAMILIES}
    residual_max["momentum"] = max(residual_max["momentum"],
                                   float(np.max(np.abs(residuals["boundary"]))))
    report = StepReport(accepted=True, iterations=len(history),
                        final_residual_norm=norm, history=history,
                        residual_max=residual_max, residuals=residuals)
    return hi, report


def step_with_retry(lo: GridLayer, tau: float, params: SchemeParams,
                    max_halvings: int = 10) -> tuple[GridLayer, StepReport, float]:
    """step() with tau-halving on rejection; returns (hi, report, tau_used)."""
    last: StepRejected | None = None
    for _ in range(max_halvings + 1):
        try:
            hi, report = step(lo, tau, params)
            return hi, report, tau
        except StepRejected as exc:
            last = exc
            tau *= 0.5
    raise last
