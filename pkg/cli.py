"""
Command line: ``generate``, ``train``, ``experiment`` and ``eval``.

Options resolve as built-in defaults, then experiment presets, then the
``--config`` file, then flags. Results go to stdout; activity goes to stderr.
"""

import csv
import json
from pathlib import Path

import click
import numpy as np

from baselines import mi_scores, single_step_baseline, te_scores
from dynamics import SystemParams, build_dataset, load_dataset, resolve_system, save_dataset
from errors import GdpError, UsageError
from evaluation import ScoreMatrix, align_to, auc, auc_ambiguous
from experiment_worker import run_tasks
from experiments import EXPERIMENTS, run_experiment
from graphs import make_graph, read_edge_list
from log_utils import get_logger, log_activity, setup_logging
from model import history_rows, predict_scores, save_checkpoint, train
from report_exporter import ReportExporter
from settings import parse_int_grid, resolve_config
from version import get_version, get_version_info

logger = get_logger("cli")


def _options(*decorators):
    def apply(f):
        for decorator in reversed(decorators):
            f = decorator(f)
        return f
    return apply


common_options = _options(
    click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None,
                 help="INI-style key = value file; flags override it."),
    click.option("--out", default=None, help="Output directory (default $GDP_OUT or ./out)."),
)

data_options = _options(
    click.option("--system", default=None, help="Dynamics tag, e.g. diffusion, springs, kuramoto."),
    click.option("--graph", default=None, help="Graph shorthand: er:n:p, erd:n:p, ba:n:m, ws:n:k:p."),
    click.option("--dt", default=None, help="Sampling interval in native steps (lists for sweeps)."),
    click.option("--traj", type=int, default=None, help="Number of training trajectories."),
    click.option("--len", "length", type=int, default=None, help="Snapshots per trajectory."),
    click.option("--n-valid", type=int, default=None),
    click.option("--n-test", type=int, default=None),
    click.option("--seed", type=int, default=None, help="Data seed."),
    click.option("--rossler-standard-form/--rossler-as-printed", default=None),
    click.option("--kuramoto-k", type=float, default=None),
)

train_options = _options(
    click.option("--data", default=None, help="Dataset directory or manifest."),
    click.option("--seeds", default=None, help="Seed list: 0..4 or 0,1,2."),
    click.option("--jobs", type=int, default=None, help="Parallel workers for seeds and cells."),
    click.option("--epochs", type=int, default=None),
    click.option("--lr-generator", type=float, default=None),
    click.option("--lr-surrogate", type=float, default=None),
    click.option("--beta-gen", type=float, default=None),
    click.option("--K", "K", default=None, help="Polynomial order (lists for sweeps)."),
    click.option("--hidden", type=int, default=None),
    click.option("--hidden-layers", type=int, default=None),
    click.option("--val-every", type=int, default=None),
    click.option("--tied/--untied", default=None, help="Symmetric edge logits."),
)


def _write_history(rows, path: Path):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "val_mse", "auc"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})


def _write_run_summary(path: Path, config, results):
    payload = {"version": get_version_info()["artifact_version"], "config": config, "results": results}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@click.group()
@click.version_option(get_version(), prog_name="gdp")
@click.option("-v", "--verbose", count=True, help="More activity output (-vv for debug).")
@click.option("-q", "--quiet", is_flag=True, help="Errors only.")
def cli(verbose, quiet):
    """Relational inference from sampled dynamics with a graph dynamics prior."""
    setup_logging(-1 if quiet else verbose)


@cli.command()
@common_options
@data_options
def generate(config_file, **options):
    """Simulate a system on a graph and write trajectories, edge list and manifest."""
    run = resolve_config(config_file, options)
    if not run.system or not run.graph:
        raise UsageError("generate needs --system and --graph")
    resolve_system(run.system)
    G = make_graph(run.graph, run.seed)
    params = SystemParams(rossler_standard_form=run.rossler_standard_form, kuramoto_k=run.kuramoto_k)
    dataset = build_dataset(run.system, G, run.traj, run.length, parse_int_grid(run.dt)[0], run.seed,
                            n_valid=run.n_valid, n_test=run.n_test, params=params)
    manifest = save_dataset(dataset, run.resolved_out(), config=run.to_dict())
    log_activity(f"dataset written to {manifest.parent}", "SUCCESS", "cli")
    click.echo(f"{dataset.system}: {len(dataset.train)} train, {len(dataset.valid)} valid, "
               f"{len(dataset.test)} test trajectories -> {manifest}")


@cli.command("train")
@common_options
@train_options
@click.option("--baseline", type=click.Choice(["single-step", "mi", "te"]), default=None,
              help="Train a baseline instead of the full model.")
@click.option("--bins", type=int, default=None, help="Histogram bins for mi / te.")
@click.option("--quantile/--equal-width", default=None, help="Binning rule for mi / te.")
def train_cmd(config_file, **options):
    """Train on a generated or external dataset; writes checkpoints, histories and scores."""
    run = resolve_config(config_file, options)
    if not run.data:
        raise UsageError("train needs --data")
    dataset = load_dataset(run.data)
    out = run.resolved_out()
    out.mkdir(parents=True, exist_ok=True)
    config = run.to_dict()

    if run.baseline in ("mi", "te"):
        if run.baseline == "mi":
            scores = mi_scores(dataset, bins=run.bins, quantile=run.quantile)
        else:
            scores = te_scores(dataset, bins=run.bins or 2, quantile=run.quantile)
        value = None
        if dataset.graph is not None:
            scores = align_to(scores, dataset.graph)
            value = auc_ambiguous(scores, dataset.graph)
        scores.to_csv(out / f"{run.baseline}_scores.csv")
        _write_run_summary(out / f"{run.baseline}_run.json", config,
                           {"auc": value, "metadata": scores.metadata})
        click.echo(f"{run.baseline} AUC {value:.2f}" if value is not None else f"{run.baseline}: no ground truth")
        return

    cfg = run.train_config()
    seeds = parse_int_grid(run.seeds)
    kind = "single_step" if run.baseline == "single-step" else "gdp"

    def task(seed):
        def fn():
            trained = single_step_baseline(dataset, cfg, seed=seed) if kind == "single_step" \
                else train(dataset, cfg, seed=seed)
            save_checkpoint(trained, out / f"{kind}_checkpoint_seed{seed}.json", config)
            _write_history(history_rows(trained), out / f"{kind}_history_seed{seed}.csv")
            scores = predict_scores(trained)
            scores.to_csv(out / f"{kind}_scores_seed{seed}.csv")
            value = auc_ambiguous(scores, dataset.graph) if dataset.graph is not None else None
            return {"seed": seed, "auc": value, "best_epoch": trained.best_epoch,
                    "best_val_mse": trained.best_val_mse}
        return fn

    results = run_tasks([(s, task(s)) for s in seeds], run.jobs)
    rows = [results[s] for s in seeds]
    _write_run_summary(out / f"{kind}_run.json", config, rows)
    log_activity(f"{kind}: trained {len(rows)} seed(s) into {out}", "SUCCESS", "cli")
    aucs = [r["auc"] for r in rows if r["auc"] is not None]
    if aucs:
        click.echo(f"{kind} AUC {np.mean(aucs):.2f} +- {np.std(aucs):.2f} over {len(aucs)} seed(s)")
    else:
        click.echo(f"{kind}: trained {len(rows)} seed(s), no ground truth")


@cli.command()
@click.argument("tag")
@common_options
@data_options
@train_options
@click.option("--mode", type=click.Choice(["continuous", "discrete"]), default=None)
@click.option("--coupling", type=float, default=None, help="Coupling strength of the effective graph.")
@click.option("--t", "t", default=None, help="Filter mix t (list for the bound fit).")
@click.option("--eps", default=None, help="Perturbation magnitudes.")
@click.option("--draws", type=int, default=None)
@click.option("--warmup", type=int, default=None, help="Adjacency-only epochs before the switch.")
@click.option("--window", type=int, default=None)
@click.option("--control/--no-control", default=None, help="Keep the polynomial term off after warmup.")
@click.option("--fractions", default=None, help="Edge-type flip fractions.")
@click.option("--runs", type=int, default=None)
@click.option("--p-grid", default=None, help="Rewiring probabilities.")
@click.option("--traj-grid", default=None, help="Training trajectory counts for the volume sweep.")
@click.option("--bins", type=int, default=None)
@click.option("--full-size/--desk-size", default=None, help="Use n = 50 graphs.")
def experiment(tag, config_file, **options):
    """Run an experiment by tag and write its report."""
    if tag not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {tag!r}; valid: {', '.join(sorted(EXPERIMENTS))}")
    run = resolve_config(config_file, options, base=EXPERIMENTS[tag])
    logger.debug(f"resolved config for {tag}: {run.to_dict()}")
    report = run_experiment(tag, run)
    out = run.resolved_out() / tag
    config = run.to_dict()
    ReportExporter.export_to_json(report, out / "report.json", config)
    ReportExporter.export_to_csv(report, out / "report.csv")
    log_activity(f"experiment {tag} finished; report in {out}", "SUCCESS", "cli")
    click.echo(ReportExporter.export_to_text(report), nl=False)


@cli.command("eval")
@click.option("--scores", required=True, type=click.Path(dir_okay=False), help="Score matrix CSV.")
@click.option("--graph", "graph_file", required=True, type=click.Path(dir_okay=False), help="Edge list.")
@click.option("--raw", is_flag=True, help="Report AUC without resolving the complement ambiguity.")
def eval_cmd(scores, graph_file, raw):
    """Recompute AUC from a score CSV and an edge list."""
    G = read_edge_list(graph_file)
    matrix = ScoreMatrix.from_csv(scores, directed=G.directed)
    value = auc(matrix, G) if raw else auc_ambiguous(matrix, G)
    click.echo(f"AUC {value:.4f}")


def main(argv=None) -> int:
    """Run the command line and map failures to exit codes 1 (usage), 2 (data) and 3 (numeric)."""
    try:
        cli.main(args=argv, prog_name="gdp", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        click.echo("Aborted.", err=True)
        return 1
    except GdpError as e:
        log_activity(str(e), "ERROR", "cli")
        seed = getattr(e, "seed", None)
        if seed is not None:
            click.echo(f"error: {e} (trajectory seed {seed})", err=True)
        else:
            click.echo(f"error: {e}", err=True)
        return e.exit_code
    return 0
