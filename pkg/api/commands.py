import argparse
import dataclasses
import logging
import math
import sys
from typing import Optional

import yaml
from pydantic import ValidationError

from models.errors import InputError, NumericalFailure, UsageError
from models.fem import PerturbedDisk
from models.run_config import RunConfig
from services.ball_energy_service import energy_value, optimal_distribution, solve_radial
from services.eigen_disk_service import (
    eigen_mode_form,
    eigen_mode_table,
    lambda_m,
    landau_check,
    m0_threshold,
    mlambda_scan,
    neumann_mu2,
)
from services.energy_stability_service import (
    classify,
    mode_form,
    mode_table,
    steklov_inequality_check,
    threshold_m1,
    worst_mode,
)
from services.fem2d_service import (
    build_system,
    dump_mesh,
    eigen_derivatives,
    energy_derivatives,
    neumann_mu2_fem,
    solve_eigen,
    solve_energy,
    symmetry_breaking_scan,
)
from utils.env_utils import get_env_vars
from utils.pool_manager import PoolSingleton
from utils.table_utils import to_csv, to_json, write_output

logger = logging.getLogger("insulation_lab")

FD_TOLERANCE = 0.05
MU2_TOLERANCE = 0.01
LANDAU_T_GRID = (0.2, 0.6, 1.0, 1.4, 1.8)
LANDAU_S_GRID = (1.0, 1.5, 2.0, 3.0, 5.0, 8.0)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


# --- Argument parsing ---
def _common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML run configuration; flags override its values")
    parser.add_argument("--n", type=int, help="ball dimension (default 2)")
    parser.add_argument("--R", type=float, help="ball radius (default 1)")
    parser.add_argument("--f", help="source coefficients c0,c1,... of f(r) = sum c_k r^k")
    parser.add_argument("--format", dest="output_format", choices=("json", "csv"))
    parser.add_argument("--output", help="write the report to this path instead of stdout")
    parser.add_argument("--log-level", dest="log_level", help="logging level (default from env)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="insulation-lab",
        description="Verification experiments for optimal thermal insulation on balls and disks.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    energy = commands.add_parser("energy-ball", help="radial energy solution on B_R")
    _common_arguments(energy)
    energy.add_argument("--m", help="material amount (m expression)")

    stability = commands.add_parser("stability", help="second-variation stability of B_R for the energy")
    _common_arguments(stability)
    stability.add_argument("--m", help="material amounts (m expression)")
    stability.add_argument("--smax", dest="s_max", type=int, help="largest mode (default 12)")
    stability.add_argument("--trials", type=int, help="random harmonic functions in the trace check")

    eigen = commands.add_parser("eigen", help="insulated eigenvalue on B_R via Bessel equations")
    _common_arguments(eigen)
    eigen.add_argument("--m", help="material amounts (m expression)")
    eigen.add_argument("--m-grid", dest="m_grid", help="m sweep, e.g. log:1.01m0:1e6:40")
    eigen.add_argument("--smax", dest="s_max", type=int, help="largest mode in f_s tables (default 12)")
    eigen.add_argument("--fs", action="store_true", default=None, help="emit f_s and disk mode forms (n = 2)")

    fem = commands.add_parser("fem-verify", help="finite-element cross-checks on perturbed disks")
    _common_arguments(fem)
    fem.add_argument("--problem", choices=("energy", "eigen", "eigen-fd"))
    fem.add_argument("--m", help="material amounts (m expression)")
    fem.add_argument("--m-grid", dest="m_grid", help="m sweep for the eigen problem")
    fem.add_argument("--s", type=int, help="perturbation mode (default 2)")
    fem.add_argument("--a", type=float, help="perturbation amplitude (default 1)")
    fem.add_argument("--t", type=float, help="deformation of the dumped mesh (default 0)")
    fem.add_argument("--nr", dest="n_r", type=int, help="radial rings (default 48)")
    fem.add_argument("--ntheta", dest="n_theta", type=int, help="angular nodes (default 192)")
    fem.add_argument("--dt", type=float, help="finite-difference step (default 0.02)")
    fem.add_argument("--order", type=int, choices=(2, 4), help="finite-difference stencil order")
    fem.add_argument("--dump-mesh", dest="dump_mesh", help="directory for nodes/triangles/field dumps")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge the optional YAML file with command-line flags into a validated RunConfig."""
    overrides = {
        key: value for key, value in vars(args).items()
        if key not in ("config", "log_level") and value is not None
    }
    try:
        data = {}
        if args.config:
            with open(args.config, encoding="utf-8") as handle:
                data = RunConfig.from_yaml(handle.read()).model_dump(exclude_unset=True)
        data.update(overrides)
        return RunConfig(**data)
    except OSError as e:
        raise UsageError(f"Cannot read config file {args.config}: {e}") from e
    except yaml.YAMLError as e:
        raise UsageError(f"Config file {args.config} is not valid YAML: {e}") from e
    except ValidationError as e:
        raise UsageError(f"Invalid run configuration: {e}") from e


# --- Commands ---
def _m0_resolver(cfg: RunConfig):
    return lambda: m0_threshold(cfg.ball())


def _require_m(cfg: RunConfig, grid: bool = False) -> list[float]:
    values = cfg.m_values(_m0_resolver(cfg), grid=grid)
    if not values:
        raise UsageError(f"{cfg.command} needs --m" + (" or --m-grid" if grid else ""))
    return values


def cmd_energy_ball(cfg: RunConfig) -> dict:
    config, f = cfg.ball(), cfg.source()
    results = []
    for m in _require_m(cfg):
        sol = solve_radial(config, f, m)
        h = optimal_distribution(sol)
        results.append({
            "m": m,
            "mean_f": sol.mean_f,
            "u_R": sol.u_R,
            "ur_R": sol.ur_R,
            "urr_R": sol.urr_R,
            "energy": energy_value(sol),
            "h_m": float(h(0.0)),
            "ode_residual": sol.ode_residual,
        })
    return {
        "command": cfg.command,
        "ball": {"n": config.n, "R": config.R, "perimeter": config.perimeter, "volume": config.volume},
        "results": results,
        "table": results,
        "table_prefix": "energy",
    }


def cmd_stability(cfg: RunConfig) -> dict:
    config, f = cfg.ball(), cfg.source()
    rows, verdicts = [], []
    for m in _require_m(cfg):
        sol = solve_radial(config, f, m)
        verdict = classify(config, f, m)
        modes = mode_table(sol, cfg.s_max)
        worst = worst_mode(sol, cfg.s_max) if cfg.s_max >= 2 else 1
        if verdict.marginal:
            logger.warning(f"m = {m:.6g}: criterion vanishes, reported as marginally stable")
        verdicts.append({
            "m": m,
            "case_label": verdict.case_label,
            "criterion_value": verdict.criterion_value,
            "stable": verdict.stable,
            "status": verdict.status,
            "m1": verdict.m1,
            "worst_mode": worst,
            "modes": [
                {"s": form.s, "q_value": form.q_value, "parts": dataclasses.asdict(form.parts)}
                for form in modes
            ],
        })
        for form in modes:
            rows.append({
                "m": m,
                "s": form.s,
                "q_value": form.q_value,
                "linearized": form.parts.linearized,
                "curvature": form.parts.curvature,
                "source": form.parts.source,
                "nonlocal_boundary": form.parts.nonlocal_boundary,
                "stable": verdict.stable,
                "status": verdict.status,
            })
    steklov = steklov_inequality_check(config, cfg.trials)
    return {
        "command": cfg.command,
        "ball": {"n": config.n, "R": config.R},
        "m1": threshold_m1(config, f),
        "verdicts": verdicts,
        "trace_inequality": {
            "max_ratio": steklov.max_ratio,
            "holds": steklov.holds,
            "mode_identity_residuals": steklov.mode_identity_residuals,
        },
        "table": rows,
        "table_prefix": "stability",
    }


def cmd_eigen(cfg: RunConfig) -> dict:
    config = cfg.ball()
    mu2 = neumann_mu2(config)
    m0 = m0_threshold(config)
    limit = (config.n - 1) / config.n * config.perimeter ** 2 / config.volume
    report = {
        "command": cfg.command,
        "ball": {"n": config.n, "R": config.R},
        "mu2": mu2,
        "m0": m0,
        "m0_mu2": m0 * mu2,
        "identity_residual": abs(m0 * mu2 - limit) / limit,
        "curvature_identity_residual": abs(m0 * mu2 - (config.n - 1) / config.R * config.perimeter) / (m0 * mu2),
    }
    grid = cfg.m_values(_m0_resolver(cfg), grid=True)
    rows = []
    if grid:
        pool = PoolSingleton()
        scan = mlambda_scan(config, grid, mapper=pool.map_ordered)
        report["lambda_table"] = scan
        rows = [dict(row) for row in scan]
    if cfg.fs:
        if not grid:
            raise UsageError("--fs needs --m or --m-grid")
        tables = PoolSingleton().map_ordered(lambda m: eigen_mode_table(config, m, cfg.s_max), grid)
        report["mode_forms"] = [
            {"m": m, "modes": [dataclasses.asdict(form) for form in forms]}
            for m, forms in zip(grid, tables)
        ]
        landau = landau_check(LANDAU_T_GRID, LANDAU_S_GRID)
        report["bessel_ratio_monotone"] = landau.holds
        rows = [
            {**row, "s": form.s, "fs": form.f_s, "q_value": form.q_value}
            for row, forms in zip(rows, tables)
            for form in forms
        ]
    report["table"] = rows
    report["table_prefix"] = "eigen"
    return report


def _fem_energy(cfg: RunConfig) -> dict:
    f = cfg.source()
    m = _require_m(cfg)[0]
    ball = solve_radial(cfg.ball(), f, m)
    derivatives = energy_derivatives(cfg.R, f, m, cfg.s, cfg.a, cfg.dt, cfg.order, cfg.n_r, cfg.n_theta,
                                     mapper=PoolSingleton().map_ordered)
    scale = max(abs(derivatives.analytic), abs(mode_form(ball, 2).q_value))
    relative = abs(derivatives.scaled_d2 - derivatives.analytic) / scale
    zeta_norm = math.pi * cfg.R ** 3 * cfg.a ** 2
    stationary = abs(derivatives.d1) <= 0.02 * max(abs(derivatives.d2), zeta_norm * scale) * cfg.dt
    fem_energy = derivatives.energies[len(derivatives.energies) // 2]
    result = {
        "m": m,
        "s": cfg.s,
        "d1": derivatives.d1,
        "d2": derivatives.d2,
        "fd_second_variation": derivatives.scaled_d2,
        "analytic_second_variation": derivatives.analytic,
        "relative_error": relative,
        "tolerance": FD_TOLERANCE,
        "stationary": stationary,
        "fem_energy": fem_energy,
        "ball_energy": energy_value(ball),
        "passed": relative <= FD_TOLERANCE and stationary,
    }
    if cfg.dump_mesh:
        system = build_system(PerturbedDisk(R=cfg.R, s=cfg.s, a=cfg.a, t=cfg.t), f, cfg.n_r, cfg.n_theta)
        dump_mesh(system, solve_energy(system, m).u, cfg.dump_mesh)
    return {"results": [result], "table": [result]}


def _fem_eigen(cfg: RunConfig) -> dict:
    grid = _require_m(cfg, grid=True) if cfg.m_grid else _require_m(cfg)
    mu2 = neumann_mu2(cfg.ball())
    rows = symmetry_breaking_scan(cfg.R, grid, cfg.n_r, cfg.n_theta, mapper=PoolSingleton().map_ordered)
    results = []
    for row in rows:
        result = dataclasses.asdict(row)
        if row.regime == "nonuniform":
            close = abs(row.pencil_lambda - mu2) <= MU2_TOLERANCE * mu2
            result["pencil_matches_mu2"] = close
            if row.passed is not None:
                result["passed"] = bool(row.passed and close and row.sign_changing)
        results.append(result)
    if cfg.dump_mesh:
        system = build_system(PerturbedDisk(R=cfg.R), cfg.source(), cfg.n_r, cfg.n_theta)
        dump_mesh(system, solve_eigen(system, grid[0]).u, cfg.dump_mesh)
    return {
        "mu2": mu2,
        "mu2_fem": neumann_mu2_fem(build_system(PerturbedDisk(R=cfg.R), cfg.source(), cfg.n_r, cfg.n_theta)),
        "m0": m0_threshold(cfg.ball()),
        "results": results,
        "table": results,
    }


def _fem_eigen_fd(cfg: RunConfig) -> dict:
    m = _require_m(cfg)[0]
    derivatives = eigen_derivatives(cfg.R, m, cfg.s, cfg.a, cfg.dt, cfg.order, cfg.n_r, cfg.n_theta,
                                    mapper=PoolSingleton().map_ordered)
    scale = max(abs(derivatives.analytic), abs(eigen_mode_form(cfg.ball(), m, 2).q_value))
    relative = abs(derivatives.scaled_d2 - derivatives.analytic) / scale
    c_norm = 2.0 * (cfg.R * cfg.a) ** 2
    stationary = abs(derivatives.d1) <= 0.02 * max(abs(derivatives.d2), c_norm * scale) * cfg.dt
    result = {
        "m": m,
        "s": cfg.s,
        "d1": derivatives.d1,
        "d2": derivatives.d2,
        "fd_second_variation": derivatives.scaled_d2,
        "analytic_second_variation": derivatives.analytic,
        "relative_error": relative,
        "tolerance": FD_TOLERANCE,
        "stationary": stationary,
        "fem_lambda": derivatives.lambdas[len(derivatives.lambdas) // 2],
        "disk_lambda": lambda_m(cfg.ball(), m).lambda_,
        "passed": relative <= FD_TOLERANCE and stationary,
    }
    return {"results": [result], "table": [result]}


FEM_PROBLEMS = {
    "energy": _fem_energy,
    "eigen": _fem_eigen,
    "eigen-fd": _fem_eigen_fd,
}


def cmd_fem_verify(cfg: RunConfig) -> dict:
    if cfg.n != 2:
        raise UsageError("fem-verify works on disks (n = 2)")
    body = FEM_PROBLEMS[cfg.problem](cfg)
    passed = [r["passed"] for r in body["results"] if r.get("passed") is not None]
    return {
        "command": cfg.command,
        "problem": cfg.problem,
        "resolution": {"n_r": cfg.n_r, "n_theta": cfg.n_theta},
        **body,
        "all_passed": all(passed),
        "table_prefix": f"fem.{cfg.problem}",
    }


COMMANDS = {
    "energy-ball": cmd_energy_ball,
    "stability": cmd_stability,
    "eigen": cmd_eigen,
    "fem-verify": cmd_fem_verify,
}


def render(report: dict, cfg: RunConfig) -> str:
    table = report.pop("table")
    prefix = report.pop("table_prefix")
    if cfg.output_format == "csv":
        return to_csv(table, prefix)
    return to_json({"config": cfg.model_dump(), **report})


def _configure_logging(level_name: Optional[str], default: str) -> None:
    level = getattr(logging, (level_name or default).upper(), logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s', stream=sys.stderr)
    logger.setLevel(level)


def run(argv: Optional[list[str]] = None) -> int:
    """Parse arguments, run one command and return the process exit code."""
    env_vars = get_env_vars()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    _configure_logging(args.log_level, env_vars["INSULATION_LAB_LOG_LEVEL"])

    try:
        cfg = load_config(args)
        report = COMMANDS[cfg.command](cfg)
        write_output(render(report, cfg), cfg.output)
        return EXIT_OK
    except InputError as e:
        logger.error(f"Input error: {e}")
        return EXIT_USAGE
    except NumericalFailure as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return EXIT_FAILURE
    finally:
        PoolSingleton.shutdown()
