"""Batch driver: run, convergence and audit subcommands over JSON configs.

Configs are strict: unknown keys anywhere are an error, so typos cannot
silently disable an option.  Runs are deterministic — identical configs
produce byte-identical snapshots and ledgers.

Exit codes: 0 success, 1 solver failure, 2 conservation-budget violation,
3 bad configuration or unreadable input.  Log verbosity comes from the
POLYGAS_LOG environment variable (debug/info/warning/error).
"""

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conservation import ALL_LAWS, LawId, audit_all, write_ledger
from .mesh import MeshError
from .problems import EulerProfile, ProblemError, invert_mass_coordinate, make_initial_layer, problem_library
from .scheme import (
    BoundaryCondition,
    ConfigError,
    PressureTrace,
    SchemeParams,
    StepRejected,
    step,
    step_with_retry,
)
from .snapshots import SnapshotError, read_snapshot, read_snapshot_meta, write_snapshot
from .state import GridLayer, LayerError, TwoLayerView, cell_average, total_cell_quantity, total_nodal_quantity

log = logging.getLogger("polygas")


# --- configuration --------------------------------------------------------------

_TOP_KEYS = {"problem", "mesh", "params", "time", "snapshot_every", "output_dir",
             "audit", "budget_tol"}
_PARAM_KEYS = {"n", "gamma", "alpha", "eos_mode", "visc_nu", "newton_tol",
               "newton_max_iter", "bc_left", "bc_right"}
_TIME_KEYS = {"t_end", "tau", "allow_tau_halving", "max_halvings"}
_MESH_FORMS = ({"cells"}, {"r_nodes"}, {"s_min", "s_max", "cells"}, {"s_nodes"})
_BC_KEYS = {"kind", "u_wall", "p0", "trace"}
_TRACE_KEYS = {"kind", "p0", "rate"}


@dataclass
class RunConfig:
    """A fully resolved run: profile + scheme parameters + schedule."""

    profile: EulerProfile
    params: SchemeParams
    t_end: float
    tau: float
    snapshot_every: int = 0
    output_dir: str | None = None
    laws: tuple[LawId, ...] = ALL_LAWS
    budget_tol: float = 1e-10
    allow_tau_halving: bool = False
    max_halvings: int = 10
    problem_name: str = ""
    problem_options: dict = dataclasses.field(default_factory=dict)
    mesh_spec: dict = dataclasses.field(default_factory=dict)


def _check_keys(mapping: dict, allowed: set, context: str) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context} must be an object, got {type(mapping).__name__}")
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {sorted(unknown)}")


def _parse_trace(raw, context: str) -> PressureTrace:
    if isinstance(raw, (int, float)):
        return PressureTrace(kind="constant", p0=float(raw))
    _check_keys(raw, _TRACE_KEYS, context)
    return PressureTrace(kind=raw.get("kind", "constant"),
                         p0=float(raw.get("p0", 1.0)),
                         rate=float(raw.get("rate", 0.0)))


def _parse_bc(raw, context: str) -> BoundaryCondition:
    _check_keys(raw, _BC_KEYS, context)
    kind = raw.get("kind")
    if kind == "wall":
        extra = set(raw) & {"p0", "trace"}
        if extra:
            raise ConfigError(f"{context}: wall boundary takes no {sorted(extra)}")
        return BoundaryCondition.wall(float(raw.get("u_wall", 0.0)))
    if kind == "pressure":
        if "u_wall" in raw:
            raise ConfigError(f"{context}: pressure boundary takes no 'u_wall'")
        if "trace" in raw:
            return BoundaryCondition.pressure(_parse_trace(raw["trace"], f"{context}.trace"))
        if "p0" in raw:
            return BoundaryCondition.pressure(float(raw["p0"]))
        raise ConfigError(f"{context}: pressure boundary needs 'trace' or 'p0'")
    raise ConfigError(f"{context}: boundary kind must be 'wall' or 'pressure', got {kind!r}")


def _parse_laws(raw) -> tuple[LawId, ...]:
    if raw == "all":
        return ALL_LAWS
    if raw == "none":
        return ()
    if not isinstance(raw, list):
        raise ConfigError("'audit' must be \"all\", \"none\" or a list of law names")
    known = {law.value: law for law in LawId}
    laws = []
    for name in raw:
        if name not in known:
            raise ConfigError(f"unknown conservation law {name!r}; known: {sorted(known)}")
        laws.append(known[name])
    return tuple(laws)


def _resolve_mesh(spec: dict, profile: EulerProfile, options: dict, n: int) -> EulerProfile:
    """Apply the mesh block: replace the profile's node radii."""
    if not spec:
        return profile
    keys = set(spec)
    if keys not in [set(form) for form in _MESH_FORMS]:
        raise ConfigError(f"mesh spec must be one of {[sorted(f) for f in _MESH_FORMS]}, "
                          f"got keys {sorted(keys)}")
    if keys == {"cells"}:
        cells = int(spec["cells"])
        r_min = float(options.get("r_min", 0.0))
        r_max = float(options.get("r_max", 1.0))
        return profile.with_r_nodes(np.linspace(r_min, r_max, cells + 1))
    if keys == {"r_nodes"}:
        return profile.with_r_nodes(np.asarray(spec["r_nodes"], dtype=float))
    if keys == {"s_nodes"}:
        s = np.asarray(spec["s_nodes"], dtype=float)
    else:
        cells = int(spec["cells"])
        s = np.linspace(float(spec["s_min"]), float(spec["s_max"]), cells + 1)
    return profile.with_r_nodes(invert_mass_coordinate(profile, n, s))


def resolve_config(raw: dict) -> RunConfig:
    """Validate a raw config mapping and build the resolved RunConfig."""
    _check_keys(raw, _TOP_KEYS, "config")
    problem = raw.get("problem", "uniform")
    if isinstance(problem, str):
        name, options = problem, {}
    else:
        _check_keys(problem, set(problem) | {"name"}, "config.problem")
        if "name" not in problem:
            raise ConfigError("config.problem needs a 'name'")
        options = {k: v for k, v in problem.items() if k != "name"}
        name = problem["name"]
    profile, params = problem_library(name, **options)

    overrides = dict(raw.get("params", {}))
    _check_keys(overrides, _PARAM_KEYS, "config.params")
    if "bc_left" in overrides:
        overrides["bc_left"] = _parse_bc(overrides["bc_left"], "config.params.bc_left")
    if "bc_right" in overrides:
        overrides["bc_right"] = _parse_bc(overrides["bc_right"], "config.params.bc_right")
    if "n" in overrides:
        overrides["n"] = int(overrides["n"])
    params = dataclasses.replace(params, **overrides)

    # the profile's gamma must match the scheme's so eps = p/((gamma-1) rho)
    profile = dataclasses.replace(profile, gamma=params.gamma)
    mesh_spec = raw.get("mesh", {})
    profile = _resolve_mesh(mesh_spec, profile, options, params.n)

    time_block = raw.get("time")
    if time_block is None:
        raise ConfigError("config needs a 'time' block with t_end and tau")
    _check_keys(time_block, _TIME_KEYS, "config.time")
    try:
        t_end = float(time_block["t_end"])
        tau = float(time_block["tau"])
    except KeyError as exc:
        raise ConfigError(f"config.time needs {exc.args[0]!r}") from None
    if not t_end > 0.0 or not tau > 0.0:
        raise ConfigError(f"t_end and tau must be positive, got {t_end}, {tau}")

    budget_tol = float(raw.get("budget_tol", 1e-10))
    if not budget_tol > 0.0:
        raise ConfigError("budget_tol must be positive")
    snapshot_every = int(raw.get("snapshot_every", 0))
    if snapshot_every < 0:
        raise ConfigError("snapshot_every must be >= 0")

    return RunConfig(
        profile=profile, params=params, t_end=t_end, tau=tau,
        snapshot_every=snapshot_every,
        output_dir=raw.get("output_dir"),
        laws=_parse_laws(raw.get("audit", "all")),
        budget_tol=budget_tol,
        allow_tau_halving=bool(time_block.get("allow_tau_halving", False)),
        max_halvings=int(time_block.get("max_halvings", 10)),
        problem_name=name, problem_options=options, mesh_spec=dict(mesh_spec))


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    return resolve_config(raw)


def with_resolution(cfg: RunConfig, cells: int, tau: float) -> RunConfig:
    """Same run at a different resolution; needs a 'cells'-style mesh."""
    if cfg.mesh_spec and set(cfg.mesh_spec) != {"cells"}:
        raise ConfigError("convergence studies need a mesh given as {'cells': ...}")
    options = dict(cfg.problem_options)
    r_min = float(options.get("r_min", 0.0))
    r_max = float(options.get("r_max", 1.0))
    profile = cfg.profile.with_r_nodes(np.linspace(r_min, r_max, cells + 1))
    return dataclasses.replace(cfg, profile=profile, tau=tau, output_dir=None,
                               snapshot_every=0, mesh_spec={"cells": cells})


# --- run driver -------------------------------------------------------------------

@dataclass
class SimulationResult:
    initial_layer: GridLayer
    final_layer: GridLayer
    steps: int
    records: list[dict]
    violations: list[dict]
    failure: str | None
    exit_code: int
    reports: list
    views: list[TwoLayerView] | None = None


def _totals(layer: GridLayer, n: int) -> dict:
    out = {
        "volume": total_cell_quantity(layer, 1.0 / layer.rho),
        "energy": total_cell_quantity(layer, layer.eps + 0.5 * cell_average(layer.u * layer.u)),
    }
    if n == 0:
        out["momentum"] = total_nodal_quantity(layer, layer.u)
        out["center_of_mass"] = total_nodal_quantity(layer, layer.r - layer.t * layer.u)
    return out


def run_simulation(cfg: RunConfig, out_dir=None, capture_views: bool = False) -> SimulationResult:
    """Advance the configured run to t_end, auditing every step.

    Writes snapshots/ledger/summary when out_dir is given.  A rejected step
    (after any configured tau-halving) stops the run with exit code 1; a
    violated expected-zero budget marks exit code 2; otherwise 0.
    """
    out_path = Path(out_dir) if out_dir is not None else None
    initial = make_initial_layer(cfg.profile, cfg.params.n)
    layer = initial
    if out_path is not None:
        write_snapshot(layer, out_path, step=0)

    records: list[dict] = []
    violations: list[dict] = []
    reports = []
    views: list[TwoLayerView] | None = [] if capture_views else None
    failure = None
    step_index = 0
    last_written = 0

    while True:
        remaining = cfg.t_end - layer.t
        if remaining <= 1e-9 * cfg.tau:
            break
        tau_j = min(cfg.tau, remaining)
        try:
            if cfg.allow_tau_halving:
                hi, report, tau_used = step_with_retry(layer, tau_j, cfg.params,
                                                       max_halvings=cfg.max_halvings)
            else:
                hi, report = step(layer, tau_j, cfg.params)
                tau_used = tau_j
        except StepRejected as exc:
            failure = str(exc)
            reports.append(exc.report)
            log.error("step %d rejected: %s", step_index, failure)
            break
        view = TwoLayerView(lo=layer, hi=hi, tau=tau_used)
        for budget in audit_all(view, cfg.params, cfg.laws):
            record = budget.to_record(step=step_index, t=layer.t, tau=tau_used)
            records.append(record)
            if budget.applicable and budget.expected_zero and budget.relative_defect > cfg.budget_tol:
                violations.append(record)
        reports.append(report)
        if views is not None:
            views.append(view)
        layer = hi
        step_index += 1
        log.debug("step %d: t=%g, %d Newton iterations, residual %.3e",
                  step_index, layer.t, report.iterations, report.final_residual_norm)
        if out_path is not None and cfg.snapshot_every and step_index % cfg.snapshot_every == 0:
            write_snapshot(layer, out_path, step=step_index, tau=tau_used)
            last_written = step_index

    exit_code = 1 if failure else (2 if violations else 0)
    if out_path is not None:
        if step_index != last_written:
            write_snapshot(layer, out_path, step=step_index)
        write_ledger(records, out_path / "ledger.jsonl")
        summary = {
            "problem": cfg.problem_name,
            "n": cfg.params.n,
            "gamma": cfg.params.gamma,
            "eos_mode": cfg.params.eos_mode,
            "cells": layer.mesh.n_cells,
            "steps": step_index,
            "t_final": layer.t,
            "failure": failure,
            "budget_violations": len(violations),
            "exit_code": exit_code,
            "totals_initial": _totals(initial, cfg.params.n),
            "totals_final": _totals(layer, cfg.params.n),
        }
        with open(out_path / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    if failure:
        log.error("run stopped after %d steps: %s", step_index, failure)
    elif violations:
        log.warning("run finished with %d budget violations", len(violations))
    else:
        log.info("run finished: %d steps to t=%g", step_index, layer.t)
    return SimulationResult(
        initial_layer=initial, final_layer=layer, steps=step_index, records=records,
        violations=violations, failure=failure, exit_code=exit_code, reports=reports,
        views=views)


# --- convergence study --------------------------------------------------------------

def _order_pairs(errors: list[float], scale: float) -> list:
    """log2 ratios of successive errors; 'exact' when below the noise floor."""
    floor = 1e-13 * max(1.0, scale)
    orders = []
    for e_coarse, e_fine in zip(errors, errors[1:]):
        if e_coarse < floor or e_fine < floor:
            orders.append("exact")
        else:
            orders.append(math.log2(e_coarse / e_fine))
    return orders


def convergence_study(cfg: RunConfig, levels: int = 3, mode: str = "both") -> dict:
    """Self-convergence of the final velocity field under mesh/step refinement.

    Spatial: (cells, tau) -> (2 cells, tau/4) per level, so the first-order
    time error refines like the second-order space error; errors compare
    coincident nodes of successive levels.  Temporal: fixed mesh, tau -> tau/2.
    """
    if levels < 3:
        raise ConfigError(f"need at least 3 levels for an observed order, got {levels}")
    if mode not in ("spatial", "temporal", "both"):
        raise ConfigError(f"mode must be spatial, temporal or both, got {mode!r}")
    if cfg.problem_name == "sod":
        log.warning("convergence study on a discontinuous problem: order claims are void")
    base_cells = cfg.profile.n_cells
    report: dict = {"problem": cfg.problem_name, "t_end": cfg.t_end, "levels": levels}

    def run_level(cells: int, tau: float) -> np.ndarray:
        result = run_simulation(with_resolution(cfg, cells, tau))
        if result.failure:
            raise ConfigError(f"convergence run at cells={cells}, tau={tau} failed: "
                              f"{result.failure}")
        return result.final_layer.u

    if mode in ("spatial", "both"):
        fields = [run_level(base_cells * 2 ** k, cfg.tau / 4 ** k) for k in range(levels)]
        errors = [float(np.max(np.abs(fine[::2] - coarse)))
                  for coarse, fine in zip(fields, fields[1:])]
        scale = float(np.max(np.abs(fields[-1])))
        report["spatial"] = {
            "cells": [base_cells * 2 ** k for k in range(levels)],
            "tau": [cfg.tau / 4 ** k for k in range(levels)],
            "errors": errors,
            "orders": _order_pairs(errors, scale),
        }
    if mode in ("temporal", "both"):
        fields = [run_level(base_cells, cfg.tau / 2 ** k) for k in range(levels)]
        errors = [float(np.max(np.abs(fine - coarse)))
                  for coarse, fine in zip(fields, fields[1:])]
        scale = float(np.max(np.abs(fields[-1])))
        report["temporal"] = {
            "cells": [base_cells] * levels,
            "tau": [cfg.tau / 2 ** k for k in range(levels)],
            "errors": errors,
            "orders": _order_pairs(errors, scale),
        }
    return report


def _write_convergence(report: dict, out_dir) -> None:
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    with open(out_path / "convergence.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    # gnuplot-friendly table: one block per study
    with open(out_path / "convergence.dat", "w") as fh:
        for study in ("spatial", "temporal"):
            if study not in report:
                continue
            fh.write(f"# {study}: cells tau error order\n")
            block = report[study]
            for k, err in enumerate(block["errors"]):
                order = block["orders"][k - 1] if k >= 1 else ""
                fh.write(f"{block['cells'][k]} {block['tau'][k]!r} {err!r} {order}\n")
            fh.write("\n\n")


# --- offline audit ------------------------------------------------------------------

def audit_snapshots(cfg: RunConfig, lo_nodes, lo_cells, hi_nodes, hi_cells,
                    tau: float | None = None) -> list[dict]:
    """Rebuild two layers from snapshot files and audit the step between them.

    The step index and tau come from the hi-side sidecar when not given, so
    the records match the inline ledger of the producing run byte for byte.
    """
    lo = read_snapshot(lo_nodes, lo_cells)
    hi = read_snapshot(hi_nodes, hi_cells)
    if not np.array_equal(lo.mesh.s, hi.mesh.s):
        raise SnapshotError("snapshots live on different meshes; audit needs one mesh")
    meta = read_snapshot_meta(hi_nodes) or {}
    if tau is None:
        tau = float(meta.get("tau", hi.t - lo.t))
    if not tau > 0.0:
        raise SnapshotError(f"non-positive step length {tau} between snapshots")
    step_index = int(meta["step"]) - 1 if "step" in meta else None
    view = TwoLayerView(lo=lo, hi=hi, tau=tau)
    return [budget.to_record(step=step_index, t=lo.t, tau=tau)
            for budget in audit_all(view, cfg.params, cfg.laws)]


# --- command-line front end ----------------------------------------------------------

def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output_dir
    if out_dir is None:
        raise ConfigError("no output directory: pass --out or set 'output_dir'")
    result = run_simulation(cfg, out_dir=out_dir)
    print(f"{cfg.problem_name}: {result.steps} steps to t={result.final_layer.t:g}, "
          f"exit {result.exit_code}"
          + (f" ({result.failure})" if result.failure else
             f", {len(result.violations)} budget violations"))
    return result.exit_code


def _cmd_convergence(args) -> int:
    cfg = load_config(args.config)
    report = convergence_study(cfg, levels=args.levels, mode=args.mode)
    out_dir = args.out or cfg.output_dir
    if out_dir is not None:
        _write_convergence(report, out_dir)
    for study in ("spatial", "temporal"):
        if study in report:
            block = report[study]
            print(f"{study}: errors {['%.3e' % e for e in block['errors']]} "
                  f"orders {block['orders']}")
    return 0


def _cmd_audit(args) -> int:
    cfg = load_config(args.config)
    records = audit_snapshots(cfg, args.lo_nodes, args.lo_cells,
                              args.hi_nodes, args.hi_cells, tau=args.tau)
    lines = [json.dumps(record) for record in records]
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polygas",
        description="Conservative implicit solver for 1-D polytropic gas flows "
                    "in mass-Lagrangian coordinates.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="advance a configured problem and audit every step")
    p_run.add_argument("--config", required=True, help="JSON run configuration")
    p_run.add_argument("--out", help="output directory (overrides config output_dir)")
    p_run.set_defaults(func=_cmd_run)

    p_conv = sub.add_parser("convergence", help="self-convergence study")
    p_conv.add_argument("--config", required=True)
    p_conv.add_argument("--levels", type=int, default=3)
    p_conv.add_argument("--mode", choices=("spatial", "temporal", "both"), default="both")
    p_conv.add_argument("--out", help="directory for convergence.json/.dat")
    p_conv.set_defaults(func=_cmd_convergence)

    p_audit = sub.add_parser("audit", help="audit the step between two snapshots")
    p_audit.add_argument("--config", required=True, help="config supplying the scheme parameters")
    p_audit.add_argument("--lo-nodes", required=True)
    p_audit.add_argument("--lo-cells", required=True)
    p_audit.add_argument("--hi-nodes", required=True)
    p_audit.add_argument("--hi-cells", required=True)
    p_audit.add_argument("--tau", type=float, default=None,
                         help="step length (default: hi sidecar, else time difference)")
    p_audit.add_argument("--out", help="also write the records to this JSONL file")
    p_audit.set_defaults(func=_cmd_audit)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("POLYGAS_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ProblemError, MeshError, LayerError, SnapshotError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
