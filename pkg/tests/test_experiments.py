import numpy as np
import pytest

from dynamics import build_dataset
from experiments import (EXPERIMENTS, NoiseAmplifierConfig, ablation_poly_only, bound_fit, distort_graph,
                         distortion_experiment, escape_experiment, fig2_sweep, fig3_noise_amplifier,
                         full_size_graph, interval_sweep, k_sweep, roots_experiment, run_experiment,
                         stacking_control, table_benchmark, volume_sweep, ws_sweep)
from errors import ContractError, UsageError
from evaluation import auc_ambiguous
from graphs import EffectiveGraphConfig, effective_graph, gen_er, make_graph
from model import TrainConfig
from settings import resolve_config


def _cfg(**kw):
    base = dict(epochs=3, hidden=6, hidden_layers=1, K=2, val_every=1)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def tiny_data():
    G = make_graph("er:6:0.5", seed=0)
    return build_dataset("diffusion", G, n_traj=2, traj_len=4, dt=1, seed=0, n_valid=1, n_test=1)


def test_fig2_continuous_trend_and_first_order_regime():
    report = fig2_sweep("er:30:0.3", 1.0, (0.01, 0.5, 4.0), "continuous", seeds=range(20))
    assert report.mean("dt=0.01", "auc") >= 99.9
    assert report.mean("dt=4", "auc") < report.mean("dt=0.5", "auc")
    assert report.summary()["dt=0.5"]["seeds"] == 20
    assert "positive_std" in report.cell_records("dt=4")[0]["metrics"]


def test_fig2_discrete_odd_hops():
    report = fig2_sweep("er:30:0.3", 1.0, (2, 3), "discrete", seeds=range(20))
    assert report.mean("dt=3", "auc") > report.mean("dt=2", "auc")
    with pytest.raises(ContractError):
        fig2_sweep(mode="sideways")
    with pytest.raises(ContractError):
        fig2_sweep("er:10:0.3", 1.0, (0.5, 1), "discrete", seeds=range(1))


def test_fig3_noise_amplifier():
    G = gen_er(50, 0.1, seed=0)
    report = fig3_noise_amplifier(NoiseAmplifierConfig(eps_grid=(0.0, 0.05), draws=50), G)
    for K in range(1, 6):
        assert report.mean(f"K={K},eps=0", "cos") >= 0.999
    assert report.flags["decreasing_in_K_eps0.05"]
    with pytest.raises(ContractError):
        fig3_noise_amplifier(NoiseAmplifierConfig(t=0.0), G)


def test_fig3_is_deterministic():
    G = gen_er(20, 0.2, seed=1)
    cfg = NoiseAmplifierConfig(eps_grid=(0.02,), K_grid=(2,), draws=5, seed=3)
    a = fig3_noise_amplifier(cfg, G).to_dict()
    b = fig3_noise_amplifier(cfg, G).to_dict()
    assert a == b


def test_bound_fit_quadratic_exponent():
    report = bound_fit(gen_er(50, 0.1, seed=0), t_grid=(1e-3, 1e-4, 1e-5), K=5, draws=50)
    assert report.flags["exponent"] == pytest.approx(2.0, abs=0.1)


def test_roots_experiment_counts():
    report = roots_experiment(n=4, seeds=range(3))
    assert report.values("square", "validated") == [16.0, 16.0, 16.0]
    assert report.values("cube", "validated") == [1.0, 1.0, 1.0]


def test_distort_graph_fractions():
    G = gen_er(10, 0.3, seed=2)
    np.testing.assert_array_equal(distort_graph(G, 0.0, seed=0), G.adjacency)
    complement = distort_graph(G, 1.0, seed=0)
    off = ~np.eye(10, dtype=bool)
    np.testing.assert_array_equal(complement[off], 1.0 - G.adjacency[off])
    half = distort_graph(G, 0.5, seed=0)
    np.testing.assert_array_equal(half, half.T)
    assert np.count_nonzero(np.triu(half != G.adjacency, 1)) == round(0.5 * 45)
    with pytest.raises(ContractError):
        distort_graph(G, 1.5, seed=0)


def test_distortion_reports_both_models(tiny_data):
    report = distortion_experiment(tiny_data, (0.0, 1.0), _cfg(), runs=2)
    assert set(report.cells) == {"gdp,fraction=0", "gdp,fraction=1", "single_step,fraction=0",
                                 "single_step,fraction=1"}
    assert report.metadata["held_out"] == "test"
    assert report.summary()["gdp,fraction=1"]["seeds"] == 2


def test_escape_without_warmup_matches_standard_training(tiny_data):
    from model import train
    report = escape_experiment(tiny_data, _cfg(), warmup_epochs=0, seeds=[0], window=2)
    plain = train(tiny_data, _cfg(), seed=0)
    assert report.cell_records("switch")[0]["extra"]["auc_curve"] == [r.auc for r in plain.history]


def test_escape_metrics_after_warmup(tiny_data):
    report = escape_experiment(tiny_data, _cfg(epochs=4), warmup_epochs=2, seeds=[0, 1], window=2)
    record = report.cell_records("switch")[0]["metrics"]
    assert record["jump"] == pytest.approx(record["post_switch_auc"] - record["plateau_auc"])
    assert "seeds_with_jump_ge_10" in report.flags


def test_k_sweep_records_protocol(tiny_data):
    report = k_sweep(tiny_data, [1, 2], _cfg(), seeds=[0])
    assert report.metadata["volume"] == [2, 4]
    assert report.cells == ["K=1", "K=2"]
    assert report.flags["best_K"] in (1, 2)


def test_ablation_needs_four_seeds(tiny_data):
    with pytest.raises(ContractError):
        ablation_poly_only(tiny_data, [0, 1], _cfg())
    report = ablation_poly_only(tiny_data, range(4), _cfg(epochs=1))
    assert len(report.flags["poly_only_winners"]) == 4
    assert set(report.cell_records("gdp")[0]["metrics"]) == {"auc_A", "auc_A_norm", "auc_g_A_norm"}


def test_ws_sweep_reports_lattice_metadata():
    report = ws_sweep([0.0, 1.0], _cfg(epochs=1), seeds=[0], n=8, k=2, traj=2, length=3)
    assert report.values("p=0", "regular") == [1.0]
    with pytest.raises(ContractError):
        ws_sweep([1.5], _cfg())


def test_stacking_one_round_equals_single_step(tiny_data):
    from baselines import single_step_baseline
    report = stacking_control(tiny_data, _cfg(), seeds=[0])
    single = single_step_baseline(tiny_data, _cfg(), seed=0)
    from evaluation import auc_ambiguous
    from model import predict_scores
    expected = auc_ambiguous(predict_scores(single), tiny_data.graph)
    assert report.values("one_round", "auc") == [expected]
    assert report.cells == ["one_round", "two_round", "gdp"]


def test_table_and_interval(tiny_data):
    table = table_benchmark(tiny_data, _cfg(epochs=1), seeds=[0])
    assert table.cells == ["mi", "te", "single_step", "gdp"]
    assert table.cell_records("te")[0]["params"]["bins"] in (2, 200)
    interval = interval_sweep("diffusion", "er:6:0.5", [1, 2], 2, 3, _cfg(epochs=1), seeds=[0], n_valid=1)
    assert interval.cells == ["dt=1", "dt=2"]
    record = interval.cell_records("dt=2")[0]
    assert set(record["metrics"]) == {"gdp_auc", "single_step_auc", "mi_auc", "te_auc"}
    assert record["extra"]["te_bins"] in (2, 200)


def test_linear_interval_reports_exact_reference():
    report = interval_sweep("linear", "er:6:0.5", [1, 3], 2, 3, _cfg(epochs=1), seeds=[0], n_valid=1, tag="linear")
    G = make_graph("er:6:0.5", 0)
    expected = auc_ambiguous(effective_graph(G, EffectiveGraphConfig(1.0, 3, "discrete")), G)
    assert report.tag == "linear"
    assert report.values("dt=3", "reference_auc") == [expected]
    assert "reference_odd_above_even" not in report.flags


def test_volume_sweep_grows_training_set():
    report = volume_sweep("diffusion", "er:6:0.5", [1, 3], _cfg(epochs=1), length=3, dt=2, seeds=[0], n_valid=1)
    assert report.cells == ["traj=1", "traj=3"]
    record = report.cell_records("traj=3")[0]
    assert record["params"]["volume"] == [3, 3]
    assert set(record["metrics"]) == {"gdp_auc", "single_step_auc", "mi_auc", "te_auc"}
    assert isinstance(report.flags["gdp_best_everywhere"], bool)
    with pytest.raises(ContractError):
        volume_sweep("diffusion", "er:6:0.5", [0], _cfg())


def test_parallel_jobs_match_serial():
    serial = fig2_sweep("er:12:0.3", 1.0, (1.0,), "continuous", seeds=range(4), jobs=1).to_dict()
    parallel = fig2_sweep("er:12:0.3", 1.0, (1.0,), "continuous", seeds=range(4), jobs=2).to_dict()
    assert serial == parallel


def test_full_size_graph():
    assert full_size_graph("er:20:0.1") == "er:50:0.1"
    assert full_size_graph("er:30:0.3") == "er:30:0.3"


def test_run_experiment_dispatch():
    run = resolve_config(None, {"seeds": "0..1"}, base=EXPERIMENTS["roots"])
    report = run_experiment("roots", run)
    assert report.tag == "roots"
    with pytest.raises(UsageError):
        run_experiment("fig9", run)


# ---------------------------------------------------------------------------
# Desk-scale acceptance runs
# ---------------------------------------------------------------------------

def _desk(**kw):
    base = dict(hidden=32, hidden_layers=1, epochs=1500)
    base.update(kw)
    return TrainConfig(**base)


@pytest.mark.slow
def test_michaelis_menten_gdp_beats_single_step():
    G = make_graph("er:20:0.1", seed=0)
    data = build_dataset("michaelis_menten", G, 50, 10, 1, seed=0)
    report = table_benchmark(data, _desk(), seeds=range(5))
    gdp = report.mean("gdp", "auc")
    assert gdp >= 85
    assert gdp - report.mean("single_step", "auc") >= 20


@pytest.mark.slow
@pytest.mark.parametrize("dt", [1, 4])
def test_diffusion_accuracy(dt):
    G = make_graph("er:20:0.1", seed=0)
    data = build_dataset("diffusion", G, 20, 10, dt, seed=0)
    report = table_benchmark(data, _desk(), seeds=range(5))
    assert report.mean("gdp", "auc") >= 85


@pytest.mark.slow
def test_undersampling_robustness():
    report = interval_sweep("michaelis_menten", "er:20:0.1", [1, 2, 4], 50, 10, _desk(), seeds=range(5))
    assert report.flags["gdp_non_increasing"]
    assert report.flags["gdp_at_least_single_step"]


@pytest.mark.slow
def test_escape_after_warmup():
    G = make_graph("er:20:0.1", seed=0)
    data = build_dataset("kuramoto", G, 30, 20, 1, seed=0)
    report = escape_experiment(data, _desk(epochs=1050), warmup_epochs=1000, seeds=range(5), window=50)
    assert report.flags["seeds_with_jump_ge_10"] >= 3


@pytest.mark.slow
def test_stacking_degrades_two_rounds():
    G = make_graph("er:20:0.1", seed=0)
    data = build_dataset("springs", G, 15, 10, 20, seed=0)
    report = stacking_control(data, _desk(), seeds=range(5))
    assert report.mean("two_round", "auc") <= 60
    assert report.mean("one_round", "auc") >= 90


@pytest.mark.slow
def test_poly_only_ablation():
    G = make_graph("er:20:0.1", seed=0)
    data = build_dataset("diffusion", G, 20, 10, 1, seed=0)
    report = ablation_poly_only(data, range(4), _desk())
    assert report.flags["winner_varies"]
    assert report.flags["gdp_A_variance_lower"]


@pytest.mark.slow
def test_distortion_minimum_at_true_graph():
    G = make_graph("er:20:0.5", seed=0)
    data = build_dataset("diffusion", G, 20, 10, 1, seed=0, n_test=10)
    report = distortion_experiment(data, (0.0, 0.1, 0.3, 0.5), _desk(epochs=500), runs=10, models=("gdp",))
    assert report.flags["gdp_min_fraction"] == 0.0


@pytest.mark.slow
def test_gdp_leads_across_data_volumes():
    report = volume_sweep("michaelis_menten", "er:20:0.1", [10, 50], _desk(), seeds=range(5))
    assert report.flags["gdp_best_everywhere"]


@pytest.mark.slow
def test_linear_map_even_intervals_hide_the_graph():
    report = interval_sweep("linear", "er:30:0.3", [1, 2, 3], 30, 20, _desk(), seeds=range(5), tag="linear")
    assert report.flags["reference_odd_above_even"]
    assert report.mean("dt=1", "gdp_auc") > report.mean("dt=2", "gdp_auc")
