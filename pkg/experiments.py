"""
Experiment suite: effective-graph sweeps, the noise amplifier study, root
enumeration, and training-based studies (escape, distortion, K sweep,
polynomial-only ablation, Watts-Strogatz sweep, layer stacking, method table,
sampling-interval and data-volume sweeps).

Every study returns an ``ExperimentReport``; seeds and cells run through
``experiment_worker.run_tasks`` and are merged by (cell, seed).
"""

from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence

import numpy as np

from baselines import mi_scores, single_step_baseline, te_scores, TE_BIN_CHOICES
from dynamics import build_dataset, load_dataset, resolve_system, SystemParams
from errors import ContractError, UsageError
from evaluation import ScoreMatrix, align_to, auc, auc_ambiguous, class_statistics, pair_index
from experiment_worker import run_tasks
from graphs import (EffectiveGraphConfig, Graph, effective_graph, enumerate_poly_roots, gen_ws,
                    make_graph, normalized_adjacency, parse_graph_spec, poly_filter)
from log_utils import get_logger, log_activity
from model import (BRANCHES, GdpModel, TrainConfig, TrainedModel, gdp_loss, predict_scores,
                   score_candidates, train)
from numcore import stream_rng
from report_exporter import ExperimentReport
from settings import RunConfig, parse_float_grid, parse_int_grid

__all__ = [
    "ScoreMatrix", "auc", "auc_ambiguous", "NoiseAmplifierConfig", "fig2_sweep",
    "fig3_noise_amplifier", "bound_fit", "roots_experiment", "escape_experiment",
    "distortion_experiment", "k_sweep", "ablation_poly_only", "ws_sweep", "stacking_control",
    "table_benchmark", "interval_sweep", "volume_sweep", "run_experiment", "EXPERIMENTS",
]

logger = get_logger("experiments")

FROZEN_LOGIT = 10.0


def _model_auc(trained, graph: Optional[Graph]) -> Optional[float]:
    if graph is None:
        return None
    return auc_ambiguous(predict_scores(trained), graph)


def _branch_mse(model: GdpModel, inputs, targets) -> float:
    """Mean over branches of each branch's one-step MSE."""
    _, parts = gdp_loss(model, inputs, targets, {name: 1.0 for name in model.branches})
    return float(np.mean(list(parts.values())))


def _held_out(dataset) -> str:
    return "test" if dataset.test else "valid"


def _run(report: ExperimentReport, tasks, jobs: int):
    """Execute ``(cell, seed, params, fn)`` tasks; ``fn`` returns ``(metrics, extra)``."""
    logger.debug(f"{report.tag}: {len(tasks)} task(s) on {jobs} job(s)")
    results = run_tasks([((cell, seed), fn) for cell, seed, _, fn in tasks], jobs)
    for cell, seed, params, _ in tasks:
        metrics, extra = results[(cell, seed)]
        report.add(cell, seed, metrics, params=params, extra=extra)
    for cell in report.cells:
        log_activity(f"{report.tag} {cell}: {len(report.cell_records(cell))} seeds done", "INFO", "experiments")
    return report


def _non_increasing(values: Sequence[float], tol: float = 0.0) -> bool:
    return all(b <= a + tol for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# Effective interaction graph sweep
# ---------------------------------------------------------------------------

def fig2_sweep(graph_spec="er:30:0.3", coupling=1.0, dt_grid=(0.5, 1, 2, 4), mode="continuous",
               seeds=range(20), jobs=1) -> ExperimentReport:
    """AUC and per-class score statistics of the effective graph over a sampling-interval grid."""
    if mode not in EffectiveGraphConfig.MODES:
        raise ContractError(f"mode must be one of {EffectiveGraphConfig.MODES}, got {mode!r}")
    report = ExperimentReport("fig2", {"dt": list(dt_grid), "seeds": list(seeds)},
                              {"graph": graph_spec, "coupling": coupling, "mode": mode})

    configs = {dt: EffectiveGraphConfig(coupling, dt, mode) for dt in dt_grid}

    def cell(dt, seed):
        def fn():
            G = make_graph(graph_spec, seed)
            cfg = configs[dt]
            scores = effective_graph(G, cfg)
            metrics = {"auc": auc_ambiguous(scores, G)}
            metrics.update(class_statistics(scores, G))
            return metrics, {}
        return fn

    tasks = [(f"dt={dt:g}", s, {"dt": dt, "coupling_dt": coupling * dt}, cell(dt, s))
             for dt in dt_grid for s in seeds]
    _run(report, tasks, jobs)
    means = [report.mean(c, "auc") for c in report.cells]
    report.flags["auc_by_dt"] = dict(zip(report.cells, means))
    if mode == "continuous":
        report.flags["non_increasing"] = _non_increasing(means)
    return report


# ---------------------------------------------------------------------------
# Noise amplifier of polynomial filters
# ---------------------------------------------------------------------------

@dataclass
class NoiseAmplifierConfig:
    eps_grid: Sequence[float] = (0.0, 0.01, 0.02, 0.05, 0.1)
    t: float = 1e-5
    K_grid: Sequence[int] = (1, 2, 3, 4, 5)
    draws: int = 50
    seed: int = 0
    noise_low: float = 0.0
    noise_high: float = 1.0
    probe_low: float = -1.0
    probe_high: float = 1.0

    def validate(self):
        if self.t <= 0:
            raise ContractError(f"filter mix t must be positive, got {self.t}")
        if self.draws < 1 or not self.K_grid or not self.eps_grid:
            raise ContractError("need at least one draw, K and eps value")
        return self


def _draw(cfg: NoiseAmplifierConfig, n: int, index: int):
    """Symmetric zero-diagonal perturbation and a probe signal."""
    rng = stream_rng(cfg.seed, "noise", index)
    upper = np.triu(rng.uniform(cfg.noise_low, cfg.noise_high, size=(n, n)), k=1)
    return upper + upper.T, rng.uniform(cfg.probe_low, cfg.probe_high, size=n)


def cosine_gap(a: np.ndarray, b: np.ndarray):
    """``(cos, 1 - cos)`` with the gap computed as half the squared distance of unit vectors."""
    ua = a / np.linalg.norm(a)
    ub = b / np.linalg.norm(b)
    gap = 0.5 * float(np.sum((ua - ub) ** 2))
    return 1.0 - gap, gap


def _filtered_signal(M, Xi, x, eps, t, K):
    M_eps = M + eps * Xi
    return (M_eps + t * poly_filter(M_eps, np.ones(K + 1))) @ x


def fig3_noise_amplifier(cfg: NoiseAmplifierConfig, G: Graph) -> ExperimentReport:
    """Cosine similarity between ``M x`` and ``(M_eps + t g(M_eps)) x`` per (eps, K)."""
    cfg.validate()
    M = normalized_adjacency(G)
    report = ExperimentReport("fig3", {"eps": list(cfg.eps_grid), "K": list(cfg.K_grid)},
                              {"t": cfg.t, "draws": cfg.draws, "graph": G.describe(), "theta": "ones"})
    draws = [_draw(cfg, G.n, d) for d in range(cfg.draws)]
    for K in cfg.K_grid:
        for eps in cfg.eps_grid:
            name = f"K={K},eps={eps:g}"
            for d, (Xi, x) in enumerate(draws):
                cos, gap = cosine_gap(M @ x, _filtered_signal(M, Xi, x, eps, cfg.t, K))
                report.add(name, d, {"cos": cos, "one_minus_cos": gap}, params={"K": K, "eps": eps})

    for K in cfg.K_grid:
        curve = [report.mean(f"K={K},eps={e:g}", "cos") for e in cfg.eps_grid]
        report.flags[f"non_increasing_in_eps_K{K}"] = _non_increasing(curve)
    for eps in cfg.eps_grid:
        by_k = [report.mean(f"K={K},eps={eps:g}", "cos") for K in cfg.K_grid]
        report.flags[f"decreasing_in_K_eps{eps:g}"] = all(b < a for a, b in zip(by_k, by_k[1:]))
    return report


def bound_fit(G: Graph, t_grid=(1e-3, 1e-4, 1e-5), K=5, draws=50, seed=0) -> ExperimentReport:
    """Fit ``1 - cos ~ C t^p`` at eps = 0."""
    cfg = NoiseAmplifierConfig(eps_grid=(0.0,), K_grid=(K,), draws=draws, seed=seed).validate()
    M = normalized_adjacency(G)
    report = ExperimentReport("bound", {"t": list(t_grid)}, {"K": K, "draws": draws, "graph": G.describe()})
    samples = [_draw(cfg, G.n, d) for d in range(draws)]
    for t in t_grid:
        for d, (Xi, x) in enumerate(samples):
            cos, gap = cosine_gap(M @ x, _filtered_signal(M, Xi, x, 0.0, t, K))
            report.add(f"t={t:g}", d, {"cos": cos, "one_minus_cos": gap}, params={"t": t})
    gaps = np.array([report.mean(f"t={t:g}", "one_minus_cos") for t in t_grid])
    if len(t_grid) >= 2 and np.all(gaps > 0):
        slope, intercept = np.polyfit(np.log(np.asarray(t_grid, dtype=float)), np.log(gaps), 1)
        report.flags["exponent"] = float(slope)
        report.flags["constant"] = float(np.exp(intercept))
    return report


# ---------------------------------------------------------------------------
# Root enumeration
# ---------------------------------------------------------------------------

KERNELS = {
    "identity": (0.0, 1.0),
    "square": (0.0, 0.0, 1.0),
    "cube": (0.0, 0.0, 0.0, 1.0),
}


def random_symmetric(n: int, seed: int) -> np.ndarray:
    """Symmetric matrix with distinct eigenvalues of magnitude in [0.5, 2]."""
    rng = stream_rng(seed, "roots")
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    mags = np.sort(rng.uniform(0.5, 2.0, size=n))
    mags += 0.05 * np.arange(n)
    lam = mags * rng.choice([-1.0, 1.0], size=n)
    return (Q * lam) @ Q.T


def roots_experiment(n=4, kernels: Optional[Dict[str, Sequence[float]]] = None, seeds=range(5)) -> ExperimentReport:
    kernels = kernels or KERNELS
    report = ExperimentReport("roots", {"kernel": list(kernels), "seeds": list(seeds)}, {"n": n})
    for name, theta in kernels.items():
        for seed in seeds:
            result = enumerate_poly_roots(random_symmetric(n, seed), theta)
            metrics = result.to_dict()
            report.add(name, seed, {"total": metrics["total"], "validated": metrics["validated"],
                                    "basis_non_unique": int(metrics["basis_non_unique"])},
                       params={"theta": list(theta)}, extra={"root_counts": metrics["root_counts"]})
    return report


# ---------------------------------------------------------------------------
# Training-based studies
# ---------------------------------------------------------------------------

def escape_experiment(dataset, cfg: TrainConfig, warmup_epochs: int, seeds=range(5), window=50,
                      control=False, jobs=1) -> ExperimentReport:
    """Adjacency-only training for ``warmup_epochs``, then the polynomial term is switched on."""
    if warmup_epochs < 0:
        raise ContractError(f"warmup must be non-negative, got {warmup_epochs}")
    run_cfg = replace(cfg, warmup_epochs=warmup_epochs, switch=not control,
                      epochs=max(cfg.epochs, warmup_epochs + window))
    report = ExperimentReport("escape", {"seeds": list(seeds)},
                              {"warmup": warmup_epochs, "window": window, "control": control,
                               "dataset": dataset.describe()})

    def task(seed):
        def fn():
            trained = train(dataset, run_cfg, seed=seed)
            curve = [r.auc for r in trained.history]
            if warmup_epochs == 0 or dataset.graph is None:
                return {"final_auc": curve[-1] if curve else None}, {"auc_curve": curve}
            plateau = curve[warmup_epochs - 1]
            post = curve[warmup_epochs:warmup_epochs + window]
            best = max(post) if post else plateau
            to_jump = next((k + 1 for k, a in enumerate(post) if a >= plateau + 10.0), None)
            metrics = {"plateau_auc": plateau, "post_switch_auc": best, "jump": best - plateau,
                       "epochs_to_jump": to_jump, "final_auc": curve[-1]}
            return metrics, {"auc_curve": curve}
        return fn

    cell = "control" if control else "switch"
    _run(report, [(cell, s, {"warmup": warmup_epochs}, task(s)) for s in seeds], jobs)
    jumps = report.values(cell, "jump")
    report.flags["seeds_with_jump_ge_10"] = int(sum(j >= 10.0 for j in jumps))
    return report


def distort_graph(graph: Graph, fraction: float, seed: int) -> np.ndarray:
    """Flip the edge type of ``round(fraction * pairs)`` evaluated pairs."""
    if not 0.0 <= fraction <= 1.0:
        raise ContractError(f"flip fraction must lie in [0, 1], got {fraction}")
    rows, cols = pair_index(graph.n, graph.directed)
    count = int(round(fraction * rows.size))
    rng = stream_rng(seed, "flip", f"{fraction:g}")
    chosen = rng.choice(rows.size, size=count, replace=False)
    A = graph.adjacency.copy()
    A[rows[chosen], cols[chosen]] = 1.0 - A[rows[chosen], cols[chosen]]
    if not graph.directed:
        A[cols[chosen], rows[chosen]] = A[rows[chosen], cols[chosen]]
    return A


def distortion_experiment(dataset, flip_fractions: Sequence[float], cfg: TrainConfig, runs=10,
                          models=("gdp", "single_step"), jobs=1) -> ExperimentReport:
    """Train surrogates on a frozen, partially flipped ground-truth graph."""
    if dataset.graph is None:
        raise ContractError("distortion needs a dataset with ground truth")
    held = _held_out(dataset)
    report = ExperimentReport("distortion", {"fractions": list(flip_fractions), "runs": runs,
                                             "models": list(models)},
                              {"frozen_logit": FROZEN_LOGIT, "held_out": held, "dataset": dataset.describe()})
    train_pairs = dataset.pairs("train")
    held_pairs = dataset.pairs(held)

    def task(kind, fraction, run):
        def fn():
            branches = BRANCHES if kind == "gdp" else ("adjacency",)
            mcfg = replace(cfg, freeze_generator=True, branches=branches)
            model = GdpModel(dataset.n, dataset.dims, mcfg, directed=dataset.directed, seed=run)
            model.set_graph(distort_graph(dataset.graph, fraction, run), FROZEN_LOGIT)
            trained = train(dataset, mcfg, seed=run, model=model)
            return {"train_mse": _branch_mse(trained.model, *train_pairs),
                    "test_mse": _branch_mse(trained.model, *held_pairs)}, {}
        return fn

    tasks = [(f"{kind},fraction={f:g}", r, {"model": kind, "fraction": f}, task(kind, f, r))
             for kind in models for f in flip_fractions for r in range(runs)]
    _run(report, tasks, jobs)
    for kind in models:
        means = [report.mean(f"{kind},fraction={f:g}", "test_mse") for f in flip_fractions]
        report.flags[f"{kind}_min_fraction"] = float(flip_fractions[int(np.argmin(means))])
    return report


def k_sweep(dataset, K_grid: Sequence[int], cfg: TrainConfig, seeds=range(10), jobs=1) -> ExperimentReport:
    if not K_grid:
        raise ContractError("K grid must be non-empty")
    held = _held_out(dataset)
    report = ExperimentReport("ksweep", {"K": list(K_grid), "seeds": list(seeds)},
                              {"dataset": dataset.describe(), "dt": dataset.dt,
                               "volume": list(dataset.volume), "held_out": held})
    train_pairs = dataset.pairs("train")
    held_pairs = dataset.pairs(held)

    def task(K, seed):
        def fn():
            trained = train(dataset, replace(cfg, K=K), seed=seed)
            return {"auc": _model_auc(trained, dataset.graph),
                    "train_mse": _branch_mse(trained.model, *train_pairs),
                    "test_mse": _branch_mse(trained.model, *held_pairs)}, {}
        return fn

    _run(report, [(f"K={K}", s, {"K": K}, task(K, s)) for K in K_grid for s in seeds], jobs)
    means = [report.mean(f"K={K}", "auc") for K in K_grid]
    report.flags["best_K"] = int(K_grid[int(np.nanargmax(means))]) if dataset.graph is not None else None
    return report


def _candidate_aucs(trained: TrainedModel, graph: Graph) -> Dict[str, float]:
    return {f"auc_{key}": auc_ambiguous(align_to(s, graph), graph) for key, s in score_candidates(trained).items()}


def ablation_poly_only(dataset, seeds, cfg: TrainConfig, jobs=1) -> ExperimentReport:
    """Polynomial-branch-only training versus full GDP, scored from A, its normalization and the filter."""
    seeds = list(seeds)
    if len(seeds) < 4:
        raise ContractError("the ablation needs at least 4 seeds")
    if dataset.graph is None:
        raise ContractError("the ablation needs a dataset with ground truth")
    report = ExperimentReport("ablation", {"seeds": seeds}, {"dataset": dataset.describe()})

    def task(branches, seed):
        def fn():
            trained = train(dataset, replace(cfg, branches=branches), seed=seed)
            metrics = _candidate_aucs(trained, dataset.graph)
            winner = max(metrics, key=metrics.get)
            return metrics, {"winner": winner}
        return fn

    tasks = [("poly_only", s, {"branches": "polynomial"}, task(("polynomial",), s)) for s in seeds]
    tasks += [("gdp", s, {"branches": "adjacency,polynomial"}, task(BRANCHES, s)) for s in seeds]
    _run(report, tasks, jobs)
    winners = [r["extra"]["winner"] for r in report.cell_records("poly_only")]
    report.flags["poly_only_winners"] = winners
    report.flags["winner_varies"] = len(set(winners)) > 1
    poly_var = float(np.var(report.values("poly_only", "auc_A")))
    gdp_var = float(np.var(report.values("gdp", "auc_A")))
    report.flags["gdp_A_variance_lower"] = gdp_var < poly_var
    return report


def ws_sweep(p_grid: Sequence[float], cfg: TrainConfig, seeds=range(10), n=30, k=2, system="diffusion",
             dt=1, traj=30, length=20, jobs=1) -> ExperimentReport:
    """GDP on Watts-Strogatz graphs over a rewiring-probability grid."""
    for p in p_grid:
        if not 0.0 <= p <= 1.0:
            raise ContractError(f"rewiring probability must lie in [0, 1], got {p}")
    report = ExperimentReport("ws", {"p_rewire": list(p_grid), "seeds": list(seeds)},
                              {"n": n, "k": k, "system": system, "dt": dt, "volume": [traj, length]})

    def task(p, seed):
        def fn():
            G = gen_ws(n, k, p, seed)
            data = build_dataset(system, G, traj, length, dt, seed)
            trained = train(data, cfg, seed=seed)
            info = G.describe()
            return {"auc": _model_auc(trained, G), "clustering": info["mean_clustering"],
                    "regular": int(info["regular"])}, {}
        return fn

    _run(report, [(f"p={p:g}", s, {"p_rewire": p}, task(p, s)) for p in p_grid for s in seeds], jobs)
    means = [report.mean(c, "auc") for c in report.cells]
    stds = [float(np.std(report.values(c, "auc"))) for c in report.cells]
    report.flags["non_increasing_within_std"] = all(
        b <= a + max(sa, sb) for a, b, sa, sb in zip(means, means[1:], stds, stds[1:]))
    return report


def stacking_control(dataset, cfg: TrainConfig, seeds=range(5), jobs=1) -> ExperimentReport:
    """One- and two-round adjacency-only message passing next to full GDP."""
    report = ExperimentReport("stacking", {"seeds": list(seeds)}, {"dataset": dataset.describe()})

    def task(kind, seed):
        def fn():
            if kind == "one_round":
                trained = single_step_baseline(dataset, replace(cfg, rounds=1), seed=seed)
            elif kind == "two_round":
                trained = single_step_baseline(dataset, replace(cfg, rounds=2), seed=seed)
            else:
                trained = train(dataset, replace(cfg, rounds=1), seed=seed)
            return {"auc": _model_auc(trained, dataset.graph)}, {}
        return fn

    kinds = ("one_round", "two_round", "gdp")
    _run(report, [(kind, s, {"model": kind}, task(kind, s)) for kind in kinds for s in seeds], jobs)
    return report


def _info_aucs(dataset, G: Graph, mi_bins=None):
    """MI AUC and TE AUC per bin choice; returns ``(mi_scores, mi_auc, te_aucs, best_te_bins)``."""
    mi = mi_scores(dataset, bins=mi_bins)
    te_auc = {b: auc_ambiguous(align_to(te_scores(dataset, bins=b), G), G) for b in TE_BIN_CHOICES}
    return mi, auc_ambiguous(align_to(mi, G), G), te_auc, max(te_auc, key=te_auc.get)


def _sweep_cell(system: str, graph_spec: str, traj: int, length: int, dt: int, cfg: TrainConfig, seed: int,
                n_valid: int):
    """GDP, single-step, MI and TE AUC on one freshly simulated dataset."""
    G = make_graph(graph_spec, seed)
    data = build_dataset(system, G, traj, length, dt, seed, n_valid=n_valid)
    _, mi_auc, te_auc, best_bins = _info_aucs(data, G)
    metrics = {"gdp_auc": _model_auc(train(data, cfg, seed=seed), G),
               "single_step_auc": _model_auc(single_step_baseline(data, cfg, seed=seed), G),
               "mi_auc": mi_auc, "te_auc": te_auc[best_bins]}
    if resolve_system(system).name == "linear":
        reference = effective_graph(G, EffectiveGraphConfig(1.0, dt, "discrete"))
        metrics["reference_auc"] = auc_ambiguous(reference, G)
    return metrics, {"te_bins": best_bins}


def _beats_baselines(report: ExperimentReport, cell: str) -> bool:
    gdp = report.mean(cell, "gdp_auc")
    return all(gdp >= report.mean(cell, key) for key in ("single_step_auc", "mi_auc", "te_auc"))


def table_benchmark(dataset, cfg: TrainConfig, seeds=range(5), mi_bins=None, jobs=1) -> ExperimentReport:
    """MI, TE (best bin count), single-step and GDP AUC on one dataset."""
    G = dataset.graph
    if G is None:
        raise ContractError("the method table needs a dataset with ground truth")
    report = ExperimentReport("table", {"seeds": list(seeds)}, {"dataset": dataset.describe()})

    mi, mi_auc, te_auc, best_bins = _info_aucs(dataset, G, mi_bins)
    report.add("mi", 0, {"auc": mi_auc}, params={"bins": mi.metadata["bins"]},
               extra={"bins_defaulted": mi.metadata["bins_defaulted"]})
    report.add("te", 0, {"auc": te_auc[best_bins]}, params={"bins": best_bins},
               extra={f"auc_bins_{b}": v for b, v in te_auc.items()})

    def task(kind, seed):
        def fn():
            trained = single_step_baseline(dataset, cfg, seed=seed) if kind == "single_step" \
                else train(dataset, cfg, seed=seed)
            return {"auc": _model_auc(trained, G)}, {}
        return fn

    _run(report, [(kind, s, {"model": kind}, task(kind, s)) for kind in ("single_step", "gdp") for s in seeds],
         jobs)
    return report


def interval_sweep(system: str, graph_spec: str, dt_grid: Sequence[int], traj: int, length: int,
                   cfg: TrainConfig, seeds=range(5), n_valid=10, jobs=1, tag="interval") -> ExperimentReport:
    """GDP, single-step, MI and TE AUC versus sampling interval at fixed data volume.

    For the linear map the AUC of the exact effective graph ``M^dt`` is reported as ``reference_auc``.
    """
    report = ExperimentReport(tag, {"dt": list(dt_grid), "seeds": list(seeds)},
                              {"system": system, "graph": graph_spec, "volume": [traj, length]})

    def task(dt, seed):
        return lambda: _sweep_cell(system, graph_spec, traj, length, dt, cfg, seed, n_valid)

    _run(report, [(f"dt={dt}", s, {"dt": dt}, task(dt, s)) for dt in dt_grid for s in seeds], jobs)
    gdp_means = [report.mean(c, "gdp_auc") for c in report.cells]
    single_means = [report.mean(c, "single_step_auc") for c in report.cells]
    report.flags["gdp_non_increasing"] = _non_increasing(gdp_means)
    report.flags["gdp_at_least_single_step"] = all(g >= s for g, s in zip(gdp_means, single_means))
    report.flags["gdp_best_cells"] = [c for c in report.cells if _beats_baselines(report, c)]
    if resolve_system(system).name == "linear":
        odd = [report.mean(f"dt={dt}", "reference_auc") for dt in dt_grid if dt % 2]
        even = [report.mean(f"dt={dt}", "reference_auc") for dt in dt_grid if not dt % 2]
        if odd and even:
            report.flags["reference_odd_above_even"] = min(odd) > max(even)
    return report


def volume_sweep(system: str, graph_spec: str, traj_grid: Sequence[int], cfg: TrainConfig, length=10, dt=5,
                 seeds=range(5), n_valid=10, jobs=1) -> ExperimentReport:
    """GDP, single-step, MI and TE AUC as the number of training trajectories grows."""
    if not traj_grid or min(traj_grid) < 1:
        raise ContractError(f"trajectory counts must be positive, got {list(traj_grid)}")
    report = ExperimentReport("volume", {"traj": list(traj_grid), "seeds": list(seeds)},
                              {"system": system, "graph": graph_spec, "length": length, "dt": dt})

    def task(traj, seed):
        return lambda: _sweep_cell(system, graph_spec, traj, length, dt, cfg, seed, n_valid)

    _run(report, [(f"traj={t}", s, {"traj": t, "volume": [t, length]}, task(t, s))
                  for t in traj_grid for s in seeds], jobs)
    report.flags["gdp_best_cells"] = [c for c in report.cells if _beats_baselines(report, c)]
    report.flags["gdp_best_everywhere"] = len(report.flags["gdp_best_cells"]) == len(report.cells)
    return report


# ---------------------------------------------------------------------------
# Tag registry
# ---------------------------------------------------------------------------

_DESK_TRAIN = {"hidden": 32, "hidden_layers": 1, "epochs": 1500}

EXPERIMENTS: Dict[str, Dict] = {
    "fig2": {"graph": "er:30:0.3", "seeds": "0..19", "dt": "0.5,1,2,4"},
    "fig3": {"graph": "er:50:0.1", "K": "1..5", "draws": 50},
    "bound": {"graph": "er:50:0.1", "t": "1e-3,1e-4,1e-5", "K": "5"},
    "roots": {"seeds": "0..4"},
    "escape": dict(_DESK_TRAIN, system="kuramoto", graph="er:20:0.1", dt="1", traj=30, length=20,
                   seeds="0..4", warmup=1000),
    "distortion": dict(_DESK_TRAIN, system="diffusion", graph="er:20:0.5", dt="1", traj=20, length=10,
                       n_test=10, runs=10, epochs=500),
    "ksweep": dict(_DESK_TRAIN, system="michaelis_menten", graph="er:20:0.1", dt="4", traj=50, length=10,
                   n_test=10, K="1..6", seeds="0..9"),
    "ablation": dict(_DESK_TRAIN, system="diffusion", graph="er:20:0.1", dt="1", traj=20, length=10,
                     seeds="0..3"),
    "ws": dict(_DESK_TRAIN, system="diffusion", dt="1", traj=30, length=20, seeds="0..9"),
    "stacking": dict(_DESK_TRAIN, system="springs", graph="er:20:0.1", dt="20", traj=15, length=10,
                     seeds="0..4"),
    "table": dict(_DESK_TRAIN, system="diffusion", graph="er:20:0.1", dt="1", traj=20, length=10,
                  seeds="0..4"),
    "interval": dict(_DESK_TRAIN, system="michaelis_menten", graph="er:20:0.1", dt="1,2,4", traj=50,
                     length=10, seeds="0..4"),
    "volume": dict(_DESK_TRAIN, system="michaelis_menten", graph="er:20:0.1", dt="5", traj_grid="10,20,30,50",
                   length=10, seeds="0..4"),
    "linear": dict(_DESK_TRAIN, system="linear", graph="er:30:0.3", dt="1,2,3,4", traj=30, length=20,
                   seeds="0..4"),
}


def full_size_graph(spec: str) -> str:
    """Scale a desk-size (n = 20) graph shorthand to n = 50."""
    params = parse_graph_spec(spec)
    if params["n"] != 20:
        return spec
    parts = spec.split(":")
    parts[1] = "50"
    return ":".join(parts)


def _dataset_for(run: RunConfig, dt: Optional[int] = None):
    if run.data:
        return load_dataset(run.data)
    if not run.system or not run.graph:
        raise UsageError("experiment needs --data or both --system and --graph")
    graph_spec = full_size_graph(run.graph) if run.full_size else run.graph
    G = make_graph(graph_spec, run.seed)
    params = SystemParams(rossler_standard_form=run.rossler_standard_form, kuramoto_k=run.kuramoto_k)
    return build_dataset(run.system, G, run.traj, run.length, dt or parse_int_grid(run.dt)[0], run.seed,
                         n_valid=run.n_valid, n_test=run.n_test, params=params)


def run_experiment(tag: str, run: RunConfig) -> ExperimentReport:
    if tag not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {tag!r}; valid: {', '.join(sorted(EXPERIMENTS))}")
    seeds = parse_int_grid(run.seeds)
    jobs = run.jobs
    log_activity(f"experiment {tag}: {len(seeds)} seed(s), jobs={jobs}", "INFO", "experiments")

    if tag == "fig2":
        return fig2_sweep(run.graph, run.coupling, parse_float_grid(run.dt), run.mode, seeds, jobs)
    if tag == "fig3":
        cfg = NoiseAmplifierConfig(eps_grid=parse_float_grid(run.eps), t=parse_float_grid(run.t)[0],
                                   K_grid=parse_int_grid(run.K), draws=run.draws, seed=run.seed)
        return fig3_noise_amplifier(cfg, make_graph(run.graph, run.seed))
    if tag == "bound":
        return bound_fit(make_graph(run.graph, run.seed), parse_float_grid(run.t), parse_int_grid(run.K)[0],
                         run.draws, run.seed)
    if tag == "roots":
        return roots_experiment(seeds=seeds)

    cfg = run.train_config()
    if tag == "ws":
        n = 50 if run.full_size else 30
        return ws_sweep(parse_float_grid(run.p_grid), cfg, seeds, n=n, system=run.system or "diffusion",
                        dt=parse_int_grid(run.dt)[0], traj=run.traj, length=run.length, jobs=jobs)
    graph_spec = full_size_graph(run.graph) if run.full_size and run.graph else run.graph
    if tag in ("interval", "linear"):
        return interval_sweep(run.system, graph_spec, parse_int_grid(run.dt), run.traj, run.length, cfg,
                              seeds, n_valid=run.n_valid, jobs=jobs, tag=tag)
    if tag == "volume":
        return volume_sweep(run.system, graph_spec, parse_int_grid(run.traj_grid), cfg, run.length,
                            parse_int_grid(run.dt)[0], seeds, n_valid=run.n_valid, jobs=jobs)

    dataset = _dataset_for(run)
    if tag == "escape":
        return escape_experiment(dataset, cfg, run.warmup, seeds, run.window, run.control, jobs)
    if tag == "distortion":
        return distortion_experiment(dataset, parse_float_grid(run.fractions), cfg, run.runs, jobs=jobs)
    if tag == "ksweep":
        return k_sweep(dataset, parse_int_grid(run.K), cfg, seeds, jobs)
    if tag == "ablation":
        return ablation_poly_only(dataset, seeds, cfg, jobs)
    if tag == "stacking":
        return stacking_control(dataset, cfg, seeds, jobs)
    return table_benchmark(dataset, cfg, seeds, run.bins, jobs)
