"""Command-line interface.

Exit codes: 0 success, 1 bad input, 2 infeasible stage or missing cuts,
3 numerical failure, 4 oracle size guard.
"""

from __future__ import annotations

import csv
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import bellman, oracle, portfolio, sim, solver
from .model import ModelFormatError, ModelValidationError, load_model, save_model
from .value import CutSet

EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3
EXIT_TOO_LARGE = 4


class Exit(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _read_model(path):
    try:
        return load_model(Path(path).read_text())
    except (ModelFormatError, ModelValidationError) as exc:
        raise Exit(EXIT_INPUT, f"{path}: {exc}") from exc


def _read_cuts(path, model):
    try:
        cuts = CutSet.from_csv(Path(path).read_text(), model.horizon, model.num_d)
    except (ValueError, IndexError) as exc:
        raise Exit(EXIT_INPUT, f"{path}: {exc}") from exc
    if cuts.n != model.n:
        raise Exit(EXIT_INPUT, f"{path}: cuts have dimension {cuts.n}, model has n={model.n}")
    return cuts


def _stage_exit(exc):
    cause = exc.__cause__ if isinstance(exc, solver.IterationError) else exc
    if isinstance(cause, (bellman.StageInfeasibleError, bellman.MissingCutsError)):
        return Exit(EXIT_INFEASIBLE, str(exc))
    return Exit(EXIT_NUMERICAL, str(exc))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _writable(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise Exit(EXIT_INPUT, f"directory does not exist: {parent}")
    return path


@click.group(context_settings={"auto_envvar_prefix": "RDDP", "help_option_names": ["-h", "--help"]})
def cli():
    """Risk-averse dual dynamic programming."""


@cli.command("gen-portfolio")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Instance JSON to write.")
@click.option("--fees", type=float, default=0.004, show_default=True, help="Proportional fee per trade.")
@click.option("--horizon", type=int, default=5, show_default=True)
@click.option("--lambda", "lam", type=float, default=0.0, show_default=True, help="Weight on AV@R.")
@click.option("--alpha", type=float, default=1.0, show_default=True, help="AV@R level; 0 is worst case.")
@click.option("--grid", type=int, default=19, show_default=True, help="Market grid points (odd).")
@click.option("--wealth", type=float, default=1.0, show_default=True, help="Initial cash.")
@click.option("--joint-noise", is_flag=True, help="81-atom rule including the market noise.")
def gen_portfolio(out, fees, horizon, lam, alpha, grid, wealth, joint_noise):
    """Write the portfolio benchmark instance and a params sidecar."""
    _writable(out)
    try:
        params = portfolio.default_params().replace(
            delta_plus=np.full(3, fees), delta_minus=np.full(3, fees), horizon=horizon,
            lam=lam, alpha=alpha, grid_size=grid, initial_wealth=wealth, wealth_cap=None,
            joint_market_noise=joint_noise)
        model = portfolio.build_instance(params)
        text = save_model(model)
        load_model(text)
    except (ValueError, ModelValidationError) as exc:
        raise Exit(EXIT_INPUT, str(exc)) from exc
    Path(out).write_text(text)
    sidecar = Path(out).with_suffix(".params.json")
    sidecar.write_text(params.to_json())
    click.echo(f"|D|={model.num_d} |Omega_d|={len(model.outcomes[0])} n={model.n} m={model.m} "
               f"T={model.horizon} lambda={lam:g} alpha={alpha:g} -> {out}")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--iters", type=int, default=50, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--out-cuts", required=True, type=click.Path(dir_okay=False))
@click.option("--trace", required=True, type=click.Path(dir_okay=False),
              help="CSV of iteration,lb.")
@click.option("--progress", type=click.Path(dir_okay=False), default=None,
              help="CSV of iteration,lb,wall_ms.")
@click.option("--trajectories", type=int, default=1, show_default=True)
@click.option("--stall-tol", type=float, default=None)
@click.option("--stall-window", type=int, default=5, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker threads (default: all cores).")
def solve(model_path, iters, seed, out_cuts, trace, progress, trajectories, stall_tol,
          stall_window, threads):
    """Run cut generation and write the cuts and the lower-bound trace."""
    for p in (out_cuts, trace, progress):
        if p:
            _writable(p)
    model = _read_model(model_path)
    try:
        config = solver.RddpConfig(
            max_iterations=iters, rng_seed=seed, trajectories_per_iteration=trajectories,
            stall_tolerance=stall_tol, stall_window=stall_window,
            threads=threads or os.cpu_count() or 1)
    except solver.ConfigurationError as exc:
        raise Exit(EXIT_INPUT, str(exc)) from exc
    try:
        result = solver.run(model, config)
    except solver.ConfigurationError as exc:
        raise Exit(EXIT_INPUT, str(exc)) from exc
    except (solver.IterationError, bellman.StageError) as exc:
        raise _stage_exit(exc) from exc
    Path(out_cuts).write_text(result.cuts.to_csv())
    _write_csv(trace, ["iteration", "lb"],
               [[i + 1, format(v, ".17g")] for i, v in enumerate(result.lb_trace)])
    if progress:
        _write_csv(progress, ["iteration", "lb", "wall_ms"],
                   [[i + 1, format(v, ".17g"), f"{ms:.3f}"]
                    for i, (v, ms) in enumerate(zip(result.lb_trace, result.wall_ms))])
    click.echo(f"iterations={result.iterations_run} lb={result.lower_bound:.10g} "
               f"cuts={len(result.cuts)} stopped_by={result.stopped_by} "
               f"time={result.wall_time:.2f}s")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--cuts", "cuts_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--runs", type=click.IntRange(1), default=3000, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--report", required=True, type=click.Path(dir_okay=False))
@click.option("--per-run", type=click.Path(dir_okay=False), default=None,
              help="CSV of run,total_cost.")
@click.option("--continuous", "params_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Portfolio params sidecar; sample the Gaussian dynamics.")
def simulate(model_path, cuts_path, runs, seed, report, per_run, params_path):
    """Evaluate the greedy policy of a cut file by simulation."""
    for p in (report, per_run):
        if p:
            _writable(p)
    model = _read_model(model_path)
    cuts = _read_cuts(cuts_path, model)
    missing = [k for k in cuts.uncovered() if k[0] > 0]
    if missing:
        raise Exit(EXIT_INFEASIBLE, f"cuts missing for (t, d): {missing}")
    step = None
    if params_path:
        params = portfolio.PortfolioParams.from_json(Path(params_path).read_text())
        step = portfolio.continuous_step(params, portfolio.market_grid(params))
    try:
        rep = sim.simulate(model, cuts, runs, seed, step=step)
    except bellman.StageError as exc:
        raise _stage_exit(exc) from exc
    Path(report).write_text(rep.to_json())
    if per_run:
        Path(per_run).write_text(rep.trajectories_csv())
    click.echo(f"runs={rep.runs} mean_cost={rep.mean_return:.8g} std={rep.std_return:.8g} "
               f"ci2sd=[{rep.ci2sd[0]:.8g}, {rep.ci2sd[1]:.8g}]")


@cli.command("oracle")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--max-nodes", type=click.IntRange(1), default=oracle.MAX_TREE_NODES, show_default=True)
def oracle_cmd(model_path, max_nodes):
    """Print the exact value at the initial state (small trees only)."""
    model = _read_model(model_path)
    try:
        res = oracle.exact_value(model, 0, model.initial_d, model.initial_x, max_nodes=max_nodes)
    except oracle.TreeTooLargeError as exc:
        raise Exit(EXIT_TOO_LARGE, str(exc)) from exc
    except oracle.OracleError as exc:
        raise Exit(EXIT_NUMERICAL, str(exc)) from exc
    click.echo(format(res.value, ".17g"))


@cli.command("export-cuts")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--cuts", "cuts_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--stage", "stage", type=int, default=None, help="Keep only this stage.")
@click.option("--state", "state", type=int, default=None, help="Keep only this discrete state.")
def export_cuts(model_path, cuts_path, out, stage, state):
    """Validate a cut file against its model and write a filtered copy."""
    _writable(out)
    model = _read_model(model_path)
    cuts = _read_cuts(cuts_path, model)
    kept = CutSet(model.horizon, model.num_d, model.n)
    for t in range(model.horizon):
        for d in range(model.num_d):
            if (stage is None or t == stage) and (state is None or d == state):
                for c in cuts.cuts(t, d):
                    kept.add_cut(t, d, c)
    Path(out).write_text(kept.to_csv())
    per_stage = [sum(len(kept.cuts(t, d)) for d in range(model.num_d)) for t in range(model.horizon)]
    click.echo(f"cuts={len(kept)} per_stage={per_stage}")


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="rddp", standalone_mode=False)
    except Exit as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.code)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(EXIT_INPUT)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_INPUT)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    sys.exit(0)


if __name__ == "__main__":
    main()
