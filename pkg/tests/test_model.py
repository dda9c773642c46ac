import numpy as np
import pytest

from dynamics import build_dataset
from errors import ContractError, DataError, TrainingAborted
from evaluation import auc_ambiguous
from graphs import gen_er, make_graph
from model import (MLP, GdpModel, SurrogateBranch, TrainConfig, edge_messages, edge_probabilities,
                   evaluate_mse, gdp_loss, load_checkpoint, normalize_soft, predict_scores, save_checkpoint,
                   score_candidates, surrogate_step, train)
from numcore import Tensor, analytic_grad, finite_difference_grad, stream_rng


def _tiny_cfg(**kw):
    base = dict(epochs=3, hidden=6, hidden_layers=1, K=2, val_every=1)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def tiny_batch():
    rng = np.random.default_rng(0)
    return rng.uniform(-1, 1, size=(3, 4, 2)), rng.uniform(-1, 1, size=(3, 4, 2))


def test_edge_probabilities_sum_to_one_off_diagonal():
    psi = Tensor(np.random.default_rng(1).normal(size=(2, 5, 5)))
    a0, a1 = edge_probabilities(psi, 0.5)
    total = a0.data + a1.data
    np.testing.assert_allclose(total[~np.eye(5, dtype=bool)], 1.0)
    assert np.all(np.diag(a1.data) == 0)


def test_tied_probabilities_are_symmetric():
    psi = Tensor(np.random.default_rng(2).normal(size=(2, 5, 5)))
    _, a1 = edge_probabilities(psi, 0.5, tied=True)
    np.testing.assert_allclose(a1.data, a1.data.T)


def test_end_to_end_loss_gradients(tiny_batch):
    x, y = tiny_batch
    model = GdpModel(4, 2, _tiny_cfg(), seed=3)
    fn = lambda: gdp_loss(model, x, y)[0]  # noqa: E731
    targets = [model.psi, model.theta, model.branches["polynomial"].vertex.params["polynomial.vertex.W0"]]
    analytic = analytic_grad(fn, targets)
    for tensor, grad in zip(targets, analytic):
        np.testing.assert_allclose(grad, finite_difference_grad(fn, tensor), rtol=1e-4, atol=1e-8)


def test_directed_loss_gradients(tiny_batch):
    x, y = tiny_batch
    model = GdpModel(4, 2, _tiny_cfg(), directed=True, seed=4)
    fn = lambda: gdp_loss(model, x, y)[0]  # noqa: E731
    (grad,) = analytic_grad(fn, [model.psi])
    np.testing.assert_allclose(grad, finite_difference_grad(fn, model.psi), rtol=1e-4, atol=1e-8)


def test_edge_type_swap_leaves_loss_unchanged(tiny_batch):
    x, y = tiny_batch
    model = GdpModel(4, 2, _tiny_cfg(tied=False), seed=5)
    before = gdp_loss(model, x, y)[0].item()
    model.psi.data[...] = model.psi.data[::-1].copy()
    for branch in model.branches.values():
        for mlp0, mlp1 in branch.edge:
            for (W0, b0), (W1, b1) in zip(mlp0.layers, mlp1.layers):
                W0.data, W1.data = W1.data.copy(), W0.data.copy()
                b0.data, b1.data = b1.data.copy(), b0.data.copy()
    after = gdp_loss(model, x, y)[0].item()
    assert after == before


@pytest.mark.parametrize("hidden_layers", [0, 1, 2])
def test_edge_messages_match_per_pair_sum(hidden_layers):
    rng = np.random.default_rng(7)
    B, n, w = 2, 4, 3
    mlp = MLP([2 * w] + [5] * hidden_layers + [5], stream_rng(0, "init", "t"), "t")
    F = rng.uniform(0, 1, size=(n, n))
    x = rng.normal(size=(B, n, w))
    got = edge_messages(mlp, Tensor(F), Tensor(x)).data
    expected = np.zeros((B, n, 5))
    for b in range(B):
        for r in range(n):
            for s in range(n):
                pair = Tensor(np.concatenate([x[b, s], x[b, r]])[None, :])
                expected[b, r] += F[r, s] * mlp(pair).data[0]
    np.testing.assert_allclose(got, expected, atol=1e-10)


@pytest.mark.parametrize("hidden_layers", [0, 2])
def test_loss_gradients_across_depths(tiny_batch, hidden_layers):
    x, y = tiny_batch
    model = GdpModel(4, 2, _tiny_cfg(hidden_layers=hidden_layers), seed=6)
    fn = lambda: gdp_loss(model, x, y)[0]  # noqa: E731
    edge_W = model.branches["adjacency"].edge[0][1].layers[-1][0]
    targets = [model.psi, edge_W]
    for tensor, grad in zip(targets, analytic_grad(fn, targets)):
        np.testing.assert_allclose(grad, finite_difference_grad(fn, tensor), rtol=1e-4, atol=1e-8)


def test_polynomial_branch_alone_moves_logits(tiny_batch):
    x, y = tiny_batch
    model = GdpModel(4, 2, _tiny_cfg(), seed=3)
    fn = lambda: gdp_loss(model, x, y, {"adjacency": 0.0, "polynomial": 1.0})[0]  # noqa: E731
    (grad,) = analytic_grad(fn, [model.psi])
    assert np.max(np.abs(grad)) > 0


def test_identity_filter_reduces_to_normalized_adjacency(tiny_batch):
    x, _ = tiny_batch
    model = GdpModel(4, 2, _tiny_cfg(K=3), seed=8)
    np.testing.assert_array_equal(model.theta.data, [0.0, 1.0, 0.0, 0.0])
    A0, A1 = model.probabilities()
    direct = surrogate_step(model.branches["polynomial"], normalize_soft(A0), normalize_soft(A1), x)
    np.testing.assert_allclose(model.predict(x, "polynomial").data, direct.data, atol=1e-10)


def test_adjacency_branch_ignores_filter_coefficients(tiny_batch):
    x, _ = tiny_batch
    model = GdpModel(4, 2, _tiny_cfg(), seed=9)
    before = model.predict(x, "adjacency").data.copy()
    model.theta.data += np.random.default_rng(0).normal(size=model.theta.shape)
    np.testing.assert_array_equal(model.predict(x, "adjacency").data, before)


def test_surrogate_step_linear_layers_by_hand():
    branch = SurrogateBranch("lin", dims=1, hidden=1, hidden_layers=0, rounds=1, seed=0)
    (e0, e1), vertex = branch.edge[0], branch.vertex
    coeffs = {e0: (0.5, -1.0, 0.2), e1: (2.0, 0.3, -0.1)}
    for mlp, (a, b, c) in coeffs.items():
        W, bias = mlp.layers[0]
        W.data[...] = [[a], [b]]
        bias.data[...] = [c]
    vertex.layers[0][0].data[...] = [[1.5]]
    vertex.layers[0][1].data[...] = [0.25]

    F0 = np.array([[0.0, 0.4, 0.6], [0.1, 0.0, 0.9], [0.7, 0.2, 0.0]])
    F1 = 1.0 - F0 - np.eye(3)
    x = np.array([[0.3], [-0.8], [1.1]])
    out = surrogate_step(branch, Tensor(F0), Tensor(F1), x).data

    expected = np.zeros((3, 1))
    for r in range(3):
        msg = 0.0
        for s in range(3):
            if s == r:
                continue
            for F, (a, b, c) in ((F0, coeffs[e0]), (F1, coeffs[e1])):
                msg += F[r, s] * (a * x[s, 0] + b * x[r, 0] + c)
        expected[r, 0] = x[r, 0] + 1.5 * msg + 0.25
    np.testing.assert_allclose(out, expected, atol=1e-12)


@pytest.mark.parametrize("system", ["michaelis_menten", "rossler", "diffusion", "springs", "kuramoto", "fj",
                                    "cmn"])
def test_loss_gradients_are_finite_for_every_system(system):
    data = build_dataset(system, gen_er(10, 0.3, seed=0), n_traj=2, traj_len=4, dt=1, seed=0, n_valid=1)
    x, y = data.pairs("train")
    model = GdpModel(data.n, data.dims, _tiny_cfg(), seed=0)
    grads = analytic_grad(lambda: gdp_loss(model, x, y)[0], list(model.all_params().values()))
    assert all(np.all(np.isfinite(g)) for g in grads)


@pytest.mark.parametrize("magnitude", [1.0, 10.0])
def test_saturated_logits_recover_graph(magnitude):
    G = gen_er(8, 0.4, seed=2)
    model = GdpModel(8, 1, _tiny_cfg(), seed=0)
    model.set_graph(G.adjacency, magnitude)
    assert auc_ambiguous(predict_scores(model), G) == 100.0


def test_set_graph_saturates_probabilities():
    G = gen_er(6, 0.4, seed=0)
    model = GdpModel(6, 1, _tiny_cfg(), seed=0)
    model.set_graph(G.adjacency, 10.0)
    _, a1 = model.probabilities()
    off = ~np.eye(6, dtype=bool)
    assert np.max(np.abs(a1.data[off] - G.adjacency[off])) < 1e-4


def test_directed_model_cannot_tie():
    with pytest.raises(ContractError):
        GdpModel(4, 1, _tiny_cfg(tied=True), directed=True)


def test_config_validation():
    with pytest.raises(ContractError):
        TrainConfig(K=0).validate()
    with pytest.raises(ContractError):
        TrainConfig(branches=("spectral",)).validate()
    cfg = TrainConfig(K=3, branches=("adjacency",))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


@pytest.fixture
def small_dataset():
    G = make_graph("er:5:0.5", seed=1)
    return build_dataset("diffusion", G, n_traj=2, traj_len=4, dt=1, seed=1, n_valid=1)


def test_train_records_history_and_selects_best(small_dataset):
    trained = train(small_dataset, _tiny_cfg(epochs=4), seed=0)
    assert [r.epoch for r in trained.history] == [1, 2, 3, 4]
    vals = [r.val_mse for r in trained.history]
    assert trained.best_val_mse == min(vals)
    assert all(r.auc is not None for r in trained.history)
    assert all(50.0 <= r.auc <= 100.0 for r in trained.history)
    assert predict_scores(trained).n == 5


def test_validation_uses_configured_weights_during_warmup(small_dataset):
    cfg = _tiny_cfg(epochs=4, warmup_epochs=2)
    VX, VY = small_dataset.pairs("valid")
    seen = {}

    def progress(epoch, record):
        seen[epoch] = (record.val_mse, evaluate_mse(trained_model, VX, VY))

    trained_model = GdpModel(small_dataset.n, small_dataset.dims, cfg, seed=0)
    train(small_dataset, cfg, seed=0, model=trained_model, progress=progress)
    for val_mse, full in seen.values():
        assert val_mse == full


def test_train_is_deterministic(small_dataset):
    a = train(small_dataset, _tiny_cfg(), seed=2)
    b = train(small_dataset, _tiny_cfg(), seed=2)
    np.testing.assert_array_equal(a.model.psi.data, b.model.psi.data)
    assert [r.train_loss for r in a.history] == [r.train_loss for r in b.history]


def test_frozen_generator_keeps_logits(small_dataset):
    cfg = _tiny_cfg(freeze_generator=True)
    model = GdpModel(small_dataset.n, small_dataset.dims, cfg, seed=0)
    model.set_graph(small_dataset.graph.adjacency)
    before = model.psi.data.copy()
    train(small_dataset, cfg, seed=0, model=model)
    np.testing.assert_array_equal(model.psi.data, before)


def test_training_aborts_on_non_finite_loss(small_dataset):
    model = GdpModel(small_dataset.n, small_dataset.dims, _tiny_cfg(), seed=0)
    model.branches["adjacency"].vertex.params["adjacency.vertex.W0"].data[...] = np.inf
    with pytest.raises(TrainingAborted) as info:
        train(small_dataset, _tiny_cfg(), seed=0, model=model)
    assert info.value.epoch == 1


def test_score_candidates_shapes(small_dataset):
    trained = train(small_dataset, _tiny_cfg(epochs=1), seed=0)
    cands = score_candidates(trained)
    assert set(cands) == {"A", "A_norm", "g_A_norm"}
    for s in cands.values():
        assert s.n == 5 and not s.directed


def test_checkpoint_round_trip(tmp_path, small_dataset):
    trained = train(small_dataset, _tiny_cfg(epochs=2), seed=0)
    path = save_checkpoint(trained, tmp_path / "ck.json", {"seed": 0})
    back = load_checkpoint(path)
    np.testing.assert_array_equal(back.model.psi.data, trained.model.psi.data)
    assert back.best_epoch == trained.best_epoch
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "bad.json")
