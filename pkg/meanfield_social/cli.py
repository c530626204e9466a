"""
Meanfield Social CLI - solve, check and simulate cooperative mean-field LQ models.

Every command takes a JSON or YAML run config; any config key may be
overridden with a dotted flag, e.g. `--simulation.N=64`.

Re-running a manifest reproduces every report and CSV byte for byte, for any
MEANFIELD_THREADS; within manifest.json only wall_time_seconds changes.
"""

import logging
import time
from pathlib import Path
from typing import Callable, List, Optional

import click
import numpy as np
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .__version__ import __version__
from .core.config import RunConfig, config_hash, load_config
from .core.constants import ENV_VARS, Command, ExitCode, LogLevel, ModelKind
from .core.exceptions import (
    ConfigError,
    InsufficientSignalError,
    MeanFieldError,
    ModelValidationError,
    NumericalError,
    ReportError,
)
from .core.sentry_config import capture_exception, initialize_sentry, set_run_context, shutdown_sentry
from .reporting import ArtifactWriter

console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger(__name__)

# .env must be read before click resolves envvar defaults
load_dotenv()

OVERRIDE_SETTINGS = {"ignore_unknown_options": True, "allow_extra_args": True}

Body = Callable[[RunConfig, ArtifactWriter], ExitCode]


def _configure_logging(debug: bool, log_level: str) -> None:
    level = logging.DEBUG if debug else getattr(logging, log_level.upper())
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


@click.group()
@click.version_option(__version__, prog_name="meanfield-social")
@click.option("--debug", is_flag=True, help="Enable debug logging")
@click.option(
    "--log-level",
    type=click.Choice([level.value for level in LogLevel], case_sensitive=False),
    envvar=ENV_VARS["LOG_LEVEL"],
    default=LogLevel.INFO.value,
    help="Log level when --debug is not given",
)
@click.option("--sentry-dsn", envvar=ENV_VARS["SENTRY_DSN"], help="Sentry DSN for error tracking")
@click.option(
    "--sentry-env", envvar=ENV_VARS["SENTRY_ENVIRONMENT"], default="development", help="Sentry environment"
)
@click.option("--with-sentry", is_flag=True, envvar=ENV_VARS["SENTRY_ENABLED"], help="Enable Sentry error tracking")
@click.pass_context
def main(ctx, debug, log_level, sentry_dsn, sentry_env, with_sentry):
    """Meanfield Social - cooperative mean-field LQ control toolkit."""
    _configure_logging(debug, log_level)

    ctx.ensure_object(dict)
    ctx.obj["debug"] = debug

    if with_sentry and sentry_dsn:
        if initialize_sentry(dsn=sentry_dsn, environment=sentry_env, enabled=True):
            err_console.print(f"[green]Sentry initialized for environment: {sentry_env}[/green]")
        else:
            err_console.print("[yellow]Failed to initialize Sentry[/yellow]")
    elif with_sentry:
        err_console.print("[yellow]Sentry enabled but no DSN provided[/yellow]")


def _execute(ctx: click.Context, command: Command, config_path: str, output_dir: Optional[str], body: Body) -> None:
    """Load the config, run `body`, write the manifest and exit with the mapped code."""
    started = time.perf_counter()
    overrides: List[str] = list(ctx.args)
    code = ExitCode.OK
    try:
        cfg, raw = load_config(config_path, overrides)
        raw_hash = config_hash(raw)
        set_run_context(command.value, cfg.simulation.seed, raw_hash, model=cfg.model_kind.value)
        writer = ArtifactWriter(Path(output_dir or cfg.output_dir))
        logger.info(f"{command.value}: config {config_path} (sha256 {raw_hash[:12]})")
        code = body(cfg, writer)
        writer.manifest(
            command=command.value,
            seed=cfg.simulation.seed,
            config_hash=raw_hash,
            resolved_hash=cfg.resolved_hash(),
            overrides=overrides,
            wall_time=time.perf_counter() - started,
            status="ok" if code == ExitCode.OK else code.name.lower(),
        )
        err_console.print(f"[dim]Artifacts written to {writer.output_dir}[/dim]")
    except ModelValidationError as e:
        err_console.print("[red]Model validation failed:[/red]")
        for violation in e.errors:
            err_console.print(f"  - {violation}")
        code = ExitCode.VALIDATION_FAILURE
    except (ConfigError, ReportError) as e:
        err_console.print(f"[red]Error:[/red] {e.message}")
        code = ExitCode.VALIDATION_FAILURE
    except NumericalError as e:
        capture_exception(e, extra={"details": e.details})
        err_console.print(f"[red]Numerical failure:[/red] {e.message}")
        code = ExitCode.NUMERICAL_FAILURE
    except MeanFieldError as e:
        err_console.print(f"[red]Error:[/red] {e.message}")
        code = ExitCode.VALIDATION_FAILURE
    finally:
        shutdown_sentry()
    ctx.exit(int(code))


def _print_pairs(title: str, rows: List[tuple]) -> None:
    table = Table(title=title)
    table.add_column("quantity")
    table.add_column("value", justify="right")
    for name, value in rows:
        table.add_row(name, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print(table)


def _lq_solution(cfg: RunConfig):
    from .lq import solve_all, validate

    model = cfg.build_model()
    validate(model).raise_if_failed()
    grid = cfg.time_grid()
    v, m, u = solve_all(model, grid)
    return model, v, m, u


def _sr_solutions(cfg: RunConfig):
    from .systemic_risk import solve_direct, solve_master

    params = cfg.build_model()
    grid = cfg.time_grid()
    return params, grid, solve_master(params, grid), solve_direct(params, cfg.simulation.N, grid)


def _sr_identities(master, direct) -> dict:
    from .systemic_risk import control_limit, control_limit_master_form

    grid = master.grid
    forms = 0.0
    for t in grid.times[:: max(1, grid.steps // 50)]:
        for x, xbar in ((1.0, 0.0), (-0.5, 0.25), (0.3, -1.2)):
            forms = max(forms, abs(control_limit(master, t, x, xbar) - control_limit_master_form(master, t, x, xbar)))
    return {
        "N": direct.N,
        "identity_defect": master.identity_defect(),
        "pd_defect": master.pd_defect(),
        "control_forms_defect": forms,
    }


def _simulation_problem(cfg: RunConfig):
    """Closed loop under φ, its state dimension and control dimension."""
    from .simulation import LqProblem
    from .systemic_risk import SystemicRiskProblem

    if cfg.model_kind == ModelKind.LQ:
        model, v, _, _ = _lq_solution(cfg)
        return LqProblem(model, v)
    params, _, master, _ = _sr_solutions(cfg)
    return SystemicRiskProblem.limit(params, master)


@main.command(context_settings=OVERRIDE_SETTINGS)
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", "-o", help="Directory for artifacts (overrides output_dir)")
@click.pass_context
def solve(ctx, config, output_dir):
    """Solve the coefficient ODEs and write them as CSV tables."""

    def body(cfg: RunConfig, out: ArtifactWriter) -> ExitCode:
        if cfg.model_kind == ModelKind.LQ:
            model, v, m, u = _lq_solution(cfg)
            out.csv("v_coefficients.csv", v.to_frame())
            out.csv("m_coefficients.csv", m.to_frame())
            out.csv("u_coefficients.csv", u.to_frame())
            summary = {
                "model": "lq",
                "n": model.n,
                "steps": cfg.grid.steps,
                "T": model.T,
                "V_at_0": v.at(0.0),
                "min_P_eigenvalue": float(np.min(np.linalg.eigvalsh(v.P))),
            }
        else:
            from .systemic_risk import sr_table

            params, grid, master, direct = _sr_solutions(cfg)
            out.csv("systemic_risk_coefficients.csv", sr_table(direct, master))
            summary = {"model": "systemic_risk", "params": params.to_dict(), "steps": grid.steps}
            summary.update(_sr_identities(master, direct))
        out.json("solve.json", summary)
        _print_pairs("solve", [("model", summary["model"]), ("steps", cfg.grid.steps)])
        return ExitCode.OK

    _execute(ctx, Command.SOLVE, config, output_dir, body)


@main.command(context_settings=OVERRIDE_SETTINGS)
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", "-o", help="Directory for artifacts (overrides output_dir)")
@click.pass_context
def check(ctx, config, output_dir):
    """Audit identities, residuals and pointwise field properties."""

    def body(cfg: RunConfig, out: ArtifactWriter) -> ExitCode:
        if cfg.model_kind == ModelKind.LQ:
            from .lq import check_fields, check_identities, validate

            model = cfg.build_model()
            validation = validate(model)
            out.json("validation.json", validation)
            validation.raise_if_failed()
            model, v, m, u = _lq_solution(cfg)
            residuals = check_identities(v, m, u, model)
            rng = np.random.Generator(np.random.Philox(key=cfg.simulation.seed))
            fields = check_fields(
                model, v, m, u, rng, points=cfg.experiment.check_points, controls=cfg.experiment.check_controls
            )
            out.json("residuals.json", residuals)
            out.json("fields.json", fields)
            _print_pairs(
                "check",
                [
                    ("Z identity", residuals.z_identity),
                    ("representation defect", fields.max_representation_defect),
                    ("min Φ excess", fields.min_Phi_excess),
                    ("gradient defect", fields.max_gradient_defect),
                ],
            )
            passed = residuals.passed and fields.passed
            for name, value in residuals.failures().items():
                err_console.print(f"[red]FAIL[/red] {name} = {value:.3e}")
        else:
            from .core.constants import SR_IDENTITY_TOLERANCE

            _, _, master, direct = _sr_solutions(cfg)
            report = _sr_identities(master, direct)
            passed = (
                report["identity_defect"] <= SR_IDENTITY_TOLERANCE
                and report["pd_defect"] <= SR_IDENTITY_TOLERANCE
                and report["control_forms_defect"] <= SR_IDENTITY_TOLERANCE
            )
            report["passed"] = passed
            out.json("residuals.json", report)
            _print_pairs("check", [(k, v) for k, v in report.items() if k != "passed"])
        if not passed:
            err_console.print("[red]Acceptance checks failed[/red]")
            return ExitCode.CHECK_FAILURE
        console.print("[green]All checks passed[/green]")
        return ExitCode.OK

    _execute(ctx, Command.CHECK, config, output_dir, body)


@main.command(context_settings=OVERRIDE_SETTINGS)
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", "-o", help="Directory for artifacts (overrides output_dir)")
@click.pass_context
def simulate(ctx, config, output_dir):
    """Monte Carlo social cost of the cooperative closed loop."""

    def body(cfg: RunConfig, out: ArtifactWriter) -> ExitCode:
        from .simulation import simulate as run_simulation

        problem = _simulation_problem(cfg)
        dump = str(out.path("paths.csv")) if cfg.simulation.dump_paths else None
        report = run_simulation(problem, cfg.sim_config(problem.n, dump))
        if dump:
            out.register("paths.csv")
        out.json("simulate.json", report)
        rows = [("N", report.N), ("paths", report.paths), ("J_soc", report.mean), ("stderr", report.stderr)]

        if cfg.experiment.benchmark:
            if cfg.model_kind != ModelKind.LQ:
                raise ConfigError("the benchmark comparison is defined for LQ models only")
            from .experiments import run_benchmark_consistency

            model, v, _, u = _lq_solution(cfg)
            bench = run_benchmark_consistency(
                model, v, u, cfg.sim_config(model.n), cfg.experiment.N_list
            )
            out.json("benchmark.json", bench)
            rows.append(("benchmark trend p-value", bench.kendall_pvalue))
        _print_pairs("simulate", rows)
        return ExitCode.OK

    _execute(ctx, Command.SIMULATE, config, output_dir, body)


def _factory(cfg: RunConfig):
    from .experiments import lq_factory, systemic_risk_factory

    if cfg.model_kind == ModelKind.LQ:
        model, v, _, _ = _lq_solution(cfg)
        return lq_factory(model, v, cfg.deviation_menu(model.n1)), model.n
    params = cfg.build_model()
    grid = cfg.time_grid()
    from .systemic_risk import solve_master

    master = solve_master(params, grid)
    include = cfg.experiment.menu is None
    base = systemic_risk_factory(params, master, grid, include_default=include)
    if include:
        return base, 1
    extra = cfg.deviation_menu(1)

    def factory(N: int):
        problem, menu = base(N)
        return problem, extra + menu

    return factory, 1


@main.command(context_settings=OVERRIDE_SETTINGS)
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", "-o", help="Directory for artifacts (overrides output_dir)")
@click.pass_context
def pbp(ctx, config, output_dir):
    """Person-by-person gap of each menu deviation at one N."""

    def body(cfg: RunConfig, out: ArtifactWriter) -> ExitCode:
        from .experiments import run_gap

        factory, n = _factory(cfg)
        problem, menu = factory(cfg.simulation.N)
        report = run_gap(problem, cfg.sim_config(n), menu, cfg.experiment.K0)
        out.json("pbp_gap.json", report)

        table = Table(title=f"gaps at N={report.N}")
        for column in ("deviation", "Δ mean", "stderr", "admissible"):
            table.add_column(column)
        for g in report.gaps:
            table.add_row(g.deviation, f"{g.mean:.6g}", f"{g.stderr:.3g}", str(g.admissible))
        console.print(table)
        return ExitCode.OK

    _execute(ctx, Command.PBP, config, output_dir, body)


@main.command(context_settings=OVERRIDE_SETTINGS)
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", "-o", help="Directory for artifacts (overrides output_dir)")
@click.pass_context
def scaling(ctx, config, output_dir):
    """Gap estimate across N with a log-log slope fit."""

    def body(cfg: RunConfig, out: ArtifactWriter) -> ExitCode:
        from .experiments import run_scaling

        factory, n = _factory(cfg)
        try:
            report = run_scaling(factory, cfg.sim_config(n), cfg.experiment.N_list)
            payload = report.to_dict()
            payload["insufficient_signal"] = False
        except InsufficientSignalError as e:
            err_console.print(f"[yellow]{e.message}[/yellow]")
            report = e.report
            payload = report.to_dict()
            payload["insufficient_signal"] = True
        out.json("scaling.json", payload)
        out.csv("scaling.csv", report.to_frame())
        _print_pairs("scaling", [("slope", report.slope if report.slope is not None else "n/a")])
        return ExitCode.OK

    _execute(ctx, Command.SCALING, config, output_dir, body)


@main.command(name="systemic-risk", context_settings=OVERRIDE_SETTINGS)
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", "-o", help="Directory for artifacts (overrides output_dir)")
@click.option("--convergence", is_flag=True, help="Also sweep N and fit the finite-N convergence slopes")
@click.pass_context
def systemic_risk(ctx, config, output_dir, convergence):
    """Systemic-risk coefficients, identities and finite-N convergence."""

    def body(cfg: RunConfig, out: ArtifactWriter) -> ExitCode:
        if cfg.model_kind != ModelKind.SYSTEMIC_RISK:
            raise ConfigError("systemic-risk needs a config with model.kind = systemic_risk")
        from .systemic_risk import convergence_report, sr_table

        params, grid, master, direct = _sr_solutions(cfg)
        out.csv("systemic_risk_coefficients.csv", sr_table(direct, master))
        identities = _sr_identities(master, direct)
        out.json("systemic_risk.json", {"params": params.to_dict(), "steps": grid.steps, **identities})
        rows = list(identities.items())
        if convergence:
            conv = convergence_report(params, cfg.experiment.convergence_N_list, grid)
            out.csv("convergence.csv", conv.to_frame())
            out.json("convergence.json", conv)
            rows += [("slope e1", conv.slope_e1), ("slope e2", conv.slope_e2)]
        _print_pairs("systemic risk", rows)
        return ExitCode.OK

    _execute(ctx, Command.SYSTEMIC_RISK, config, output_dir, body)


if __name__ == "__main__":
    main()
