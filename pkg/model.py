"""
Graph Dynamics Prior learner.

Edge logits Psi (two channels per ordered pair) define soft adjacencies A^0 and
A^1. Two surrogate branches predict the next snapshot by message passing: the
adjacency branch weights messages by A^a directly, the polynomial branch by a
trainable polynomial filter of the normalized A^a. Both branches share Psi and
are trained jointly on the sum of their one-step MSEs.
"""

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import ContractError, DataError, NumericError, TrainingAborted, UndefinedMetricError
from evaluation import ScoreMatrix, auc_ambiguous
from graphs import EPS_DEG, poly_filter
from log_utils import get_logger
from numcore import (AdamState, Tape, Tensor, adam_step, add, backward, elu, floor_clamp,
                     matmul, mse, mul, power, reshape, scalar_mul, sigmoid, stream_rng, sub,
                     sum_reduce, take, transpose)
from version import get_version_info

logger = get_logger("model")

BRANCHES = ("adjacency", "polynomial")


@dataclass
class TrainConfig:
    epochs: int = 3000
    lr_generator: float = 0.1
    lr_surrogate: float = 0.0005
    beta_gen: float = 0.5
    K: int = 4
    hidden: int = 256
    hidden_layers: int = 2
    val_every: int = 10
    tied: Optional[bool] = None
    branches: Tuple[str, ...] = BRANCHES
    adj_weight: float = 1.0
    poly_weight: float = 1.0
    warmup_epochs: int = 0
    switch: bool = True
    rounds: int = 1
    freeze_generator: bool = False

    def validate(self):
        if self.epochs < 0:
            raise ContractError(f"epochs must be non-negative, got {self.epochs}")
        if self.lr_generator <= 0 or self.lr_surrogate <= 0:
            raise ContractError("learning rates must be positive")
        if self.beta_gen <= 0:
            raise ContractError(f"generator inverse temperature must be positive, got {self.beta_gen}")
        if self.K < 1:
            raise ContractError(f"polynomial order must be >= 1, got {self.K}")
        if self.val_every < 1 or self.rounds < 1 or self.hidden < 1 or self.hidden_layers < 0:
            raise ContractError("val_every, rounds and hidden must be >= 1; hidden_layers >= 0")
        unknown = set(self.branches) - set(BRANCHES)
        if unknown or not self.branches:
            raise ContractError(f"branches must be a non-empty subset of {BRANCHES}, got {self.branches}")
        return self

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["branches"] = list(self.branches)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "TrainConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        if "branches" in known:
            known["branches"] = tuple(known["branches"])
        return cls(**known)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

class MLP:
    """Dense layers with ELU between them and a linear output."""

    def __init__(self, sizes: List[int], rng: np.random.Generator, prefix: str):
        self.params: Dict[str, Tensor] = {}
        self.layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            W = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True,
                       name=f"{prefix}.W{i}")
            b = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{prefix}.b{i}")
            self.params[W.name] = W
            self.params[b.name] = b
            self.layers.append((W, b))

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            x = add(matmul(x, W), b)
            if i < last:
                x = elu(x)
        return x


class SurrogateBranch:
    """Edge MLPs per edge type and message round, plus one vertex MLP.

    Messages run sender -> receiver with weight F[receiver, sender].
    """

    def __init__(self, name: str, dims: int, hidden: int, hidden_layers: int, rounds: int, seed: int):
        self.name = name
        self.rounds = rounds
        self.edge: List[Tuple[MLP, MLP]] = []
        width = dims
        for r in range(rounds):
            pair = []
            for a in (0, 1):
                tag = f"edge{a}" if r == 0 else f"edge{a}_r{r}"
                sizes = [2 * width] + [hidden] * hidden_layers + [hidden]
                pair.append(MLP(sizes, stream_rng(seed, "init", name, tag), f"{name}.{tag}"))
            self.edge.append(tuple(pair))
            width = hidden
        self.vertex = MLP([hidden] + [hidden] * hidden_layers + [dims],
                          stream_rng(seed, "init", name, "vertex"), f"{name}.vertex")

    @property
    def params(self) -> Dict[str, Tensor]:
        out = {}
        for pair in self.edge:
            for mlp in pair:
                out.update(mlp.params)
        out.update(self.vertex.params)
        return out


_OFF_DIAG_CACHE: Dict[int, Tensor] = {}


def _off_diagonal(n: int) -> Tensor:
    if n not in _OFF_DIAG_CACHE:
        _OFF_DIAG_CACHE[n] = Tensor(1.0 - np.eye(n))
    return _OFF_DIAG_CACHE[n]


# ---------------------------------------------------------------------------
# Generator, filters, surrogate step
# ---------------------------------------------------------------------------

def _masks(n: int, tied: bool) -> Tuple[np.ndarray, np.ndarray]:
    off = 1.0 - np.eye(n)
    return (np.triu(np.ones((n, n)), k=1) if tied else off), off


def edge_probabilities(psi: Tensor, beta_gen: float, tied=False) -> Tuple[Tensor, Tensor]:
    """Soft adjacencies ``A^a = softmax(beta [Psi^0, Psi^1])_a`` with the diagonal masked out.

    ``psi`` has shape (2, n, n); with ``tied`` only the strict upper triangle is used
    and mirrored.
    """
    if beta_gen <= 0:
        raise ContractError(f"generator inverse temperature must be positive, got {beta_gen}")
    n = psi.shape[-1]
    keep, off = _masks(n, tied)
    logits = mul(psi, Tensor(keep))
    if tied:
        logits = add(logits, transpose(logits))
    psi0, psi1 = take(logits, 0, axis=0), take(logits, 1, axis=0)
    mask = Tensor(off)
    a1 = mul(sigmoid(scalar_mul(sub(psi1, psi0), beta_gen)), mask)
    a0 = mul(sigmoid(scalar_mul(sub(psi0, psi1), beta_gen)), mask)
    return a0, a1


def normalize_soft(A: Tensor, directed=False) -> Tensor:
    """Degree normalization of a probabilistic adjacency; degrees floored at ``EPS_DEG``."""
    deg = floor_clamp(sum_reduce(A, axis=-1, keepdims=True), EPS_DEG)
    if directed:
        return mul(A, power(deg, -1.0))
    inv = power(deg, -0.5)
    return mul(mul(A, inv), transpose(inv))


def branch_filters(A0: Tensor, A1: Tensor, theta: Optional[Tensor], branch: str,
                   directed=False) -> Tuple[Tensor, Tensor]:
    if branch == "adjacency":
        return A0, A1
    if branch != "polynomial":
        raise ContractError(f"unknown branch {branch!r}")
    return (poly_filter(normalize_soft(A0, directed), theta),
            poly_filter(normalize_soft(A1, directed), theta))


def edge_messages(mlp: MLP, F: Tensor, state: Tensor) -> Tensor:
    """``sum_s F[r, s] f_e(x_s, x_r)`` for every receiver ``r``; ``state`` is (B, n, w).

    The first layer splits into sender and receiver projections computed per node,
    and the linear last layer is applied after the weighted sum over senders.
    """
    B, n, w = state.shape
    W0, b0 = mlp.layers[0]
    U = matmul(state, take(W0, np.arange(w), axis=0))
    V = add(matmul(state, take(W0, np.arange(w, 2 * w), axis=0)), b0)
    deg = sum_reduce(F, axis=-1, keepdims=True)
    if len(mlp.layers) == 1:
        return add(matmul(F, U), mul(deg, V))

    h = U.shape[-1]
    H = elu(add(reshape(U, (B, 1, n, h)), reshape(V, (B, n, 1, h))))
    for W, b in mlp.layers[1:-1]:
        H = elu(add(matmul(H, W), b))
    pooled = sum_reduce(mul(H, reshape(F, (1, n, n, 1))), axis=2)
    W_last, b_last = mlp.layers[-1]
    return add(matmul(pooled, W_last), mul(deg, b_last))


def surrogate_step(branch: SurrogateBranch, F0: Tensor, F1: Tensor, x) -> Tensor:
    """One-step prediction ``x + f_v(sum_a sum_{s != r} F^a[r, s] f_e^a(x_s, x_r))``."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    off = _off_diagonal(x.shape[-2])
    weights = (mul(F0, off), mul(F1, off))

    state = x
    for mlp0, mlp1 in branch.edge:
        state = add(edge_messages(mlp0, weights[0], state), edge_messages(mlp1, weights[1], state))
    out = add(x, branch.vertex(state))
    if squeeze:
        out = reshape(out, out.shape[1:])
    return out


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

class GdpModel:
    """Edge logits, polynomial coefficients and the surrogate branches."""

    def __init__(self, n: int, dims: int, cfg: TrainConfig = None, directed=False, seed=0):
        self.cfg = (cfg or TrainConfig()).validate()
        self.n = n
        self.dims = dims
        self.directed = bool(directed)
        self.tied = (not self.directed) if self.cfg.tied is None else bool(self.cfg.tied)
        if self.tied and self.directed:
            raise ContractError("directed targets cannot use symmetric-tied edge logits")
        self.seed = seed
        rng = stream_rng(seed, "init", "psi")
        self.psi = Tensor(rng.uniform(-0.1, 0.1, size=(2, n, n)), requires_grad=True, name="psi")
        theta = np.zeros(self.cfg.K + 1)
        theta[1] = 1.0
        self.theta = Tensor(theta, requires_grad=True, name="theta")
        self.branches: Dict[str, SurrogateBranch] = {
            name: SurrogateBranch(name, dims, self.cfg.hidden, self.cfg.hidden_layers, self.cfg.rounds, seed)
            for name in self.cfg.branches
        }

    def generator_params(self) -> Dict[str, Tensor]:
        return {"psi": self.psi}

    def surrogate_params(self) -> Dict[str, Tensor]:
        out = {}
        if "polynomial" in self.branches:
            out["theta"] = self.theta
        for branch in self.branches.values():
            out.update(branch.params)
        return out

    def all_params(self) -> Dict[str, Tensor]:
        out = self.generator_params()
        out.update(self.surrogate_params())
        return out

    def probabilities(self) -> Tuple[Tensor, Tensor]:
        return edge_probabilities(self.psi, self.cfg.beta_gen, self.tied)

    def predict(self, x, branch: str) -> Tensor:
        A0, A1 = self.probabilities()
        F0, F1 = branch_filters(A0, A1, self.theta, branch, self.directed)
        return surrogate_step(self.branches[branch], F0, F1, x)

    def set_graph(self, adjacency, magnitude=10.0):
        """Encode a binary graph as saturated logits ``Psi^1 = -Psi^0 = +-magnitude``."""
        sign = np.where(np.asarray(adjacency) > 0, 1.0, -1.0)
        self.psi.data[0] = -magnitude * sign
        self.psi.data[1] = magnitude * sign

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.all_params().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        params = self.all_params()
        for name, value in state.items():
            if name not in params:
                raise DataError(f"unknown parameter {name!r} in state")
            value = np.asarray(value, dtype=np.float64)
            if value.shape != params[name].shape:
                raise DataError(f"parameter {name!r}: stored shape {value.shape} vs {params[name].shape}")
            params[name].data[...] = value


def gdp_loss(model: GdpModel, inputs, targets, weights: Optional[Dict[str, float]] = None):
    """Weighted sum of per-branch one-step MSEs; also returns the unweighted per-branch values."""
    weights = weights or {"adjacency": model.cfg.adj_weight, "polynomial": model.cfg.poly_weight}
    targets = targets if isinstance(targets, Tensor) else Tensor(targets)
    A0, A1 = model.probabilities()
    total = None
    parts = {}
    for name, branch in model.branches.items():
        F0, F1 = branch_filters(A0, A1, model.theta, name, model.directed)
        term = mse(surrogate_step(branch, F0, F1, inputs), targets)
        parts[name] = term.item()
        term = scalar_mul(term, weights.get(name, 1.0))
        total = term if total is None else add(total, term)
    return total, parts


def predict_scores(model) -> ScoreMatrix:
    """Edge-presence probabilities ``A^1``; symmetrized for untied undirected models."""
    model = model.model if isinstance(model, TrainedModel) else model
    _, A1 = model.probabilities()
    scores = ScoreMatrix(A1.data, directed=model.directed)
    if not model.directed and not model.tied:
        scores = scores.symmetrized()
    return scores


def score_candidates(model) -> Dict[str, ScoreMatrix]:
    """Scores read from ``A^1``, its normalization, and the learned filter of it."""
    model = model.model if isinstance(model, TrainedModel) else model
    _, A1 = model.probabilities()
    norm = normalize_soft(A1, model.directed)
    filtered = poly_filter(norm.data, model.theta.data)
    out = {}
    for key, values in (("A", A1.data), ("A_norm", norm.data), ("g_A_norm", filtered)):
        s = ScoreMatrix(values, directed=model.directed)
        out[key] = s if model.directed else s.symmetrized()
    return out


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mse: Optional[float] = None
    auc: Optional[float] = None
    parts: Dict[str, float] = field(default_factory=dict)


class TrainedModel:
    def __init__(self, model: GdpModel, history: List[EpochRecord], best_epoch: int,
                 best_val_mse: Optional[float], seed: int):
        self.model = model
        self.history = history
        self.best_epoch = best_epoch
        self.best_val_mse = best_val_mse
        self.seed = seed

    @property
    def selected_auc(self) -> Optional[float]:
        for rec in self.history:
            if rec.epoch == self.best_epoch:
                return rec.auc
        return None


def _safe_auc(model: GdpModel, graph) -> Optional[float]:
    if graph is None:
        return None
    try:
        return auc_ambiguous(predict_scores(model), graph)
    except UndefinedMetricError:
        return None


def evaluate_mse(model: GdpModel, inputs, targets, weights=None) -> float:
    loss, _ = gdp_loss(model, inputs, targets, weights)
    return loss.item()


def train(dataset, cfg: TrainConfig = None, seed=0, model: GdpModel = None, progress=None) -> TrainedModel:
    """Joint training with two Adam optimizers and validation-MSE snapshot selection.

    Validation MSE uses the configured branch weights in every epoch, warmup included.
    ``progress`` is an optional callable receiving ``(epoch, record)``.
    """
    cfg = (cfg or TrainConfig()).validate()
    if not dataset.valid:
        raise ContractError("training needs a non-empty validation split")
    model = model or GdpModel(dataset.n, dataset.dims, cfg, directed=dataset.directed, seed=seed)
    X, Y = (Tensor(a) for a in dataset.pairs("train"))
    VX, VY = (Tensor(a) for a in dataset.pairs("valid"))

    gen_state = AdamState(model.generator_params(), cfg.lr_generator)
    sur_params = model.surrogate_params()
    sur_state = AdamState(sur_params, cfg.lr_surrogate)

    val_weights = {"adjacency": cfg.adj_weight, "polynomial": cfg.poly_weight}
    history: List[EpochRecord] = []
    best_val = None
    best_epoch = 0
    best_state = model.state_dict()

    for epoch in range(1, cfg.epochs + 1):
        in_warmup = epoch <= cfg.warmup_epochs or (cfg.warmup_epochs and not cfg.switch)
        weights = {"adjacency": cfg.adj_weight, "polynomial": 0.0 if in_warmup else cfg.poly_weight}
        for p in model.all_params().values():
            p.zero_grad()
        try:
            with Tape() as tape:
                loss, parts = gdp_loss(model, X, Y, weights)
            backward(tape, loss)
        except NumericError as exc:
            raise TrainingAborted(epoch, str(exc)) from exc
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise TrainingAborted(epoch)

        if not cfg.freeze_generator:
            adam_step(gen_state, model.generator_params())
        adam_step(sur_state, sur_params)

        record = EpochRecord(epoch, loss_value, auc=_safe_auc(model, dataset.graph), parts=parts)
        if epoch % cfg.val_every == 0 or epoch == cfg.epochs:
            try:
                record.val_mse = evaluate_mse(model, VX, VY, val_weights)
            except NumericError as exc:
                raise TrainingAborted(epoch, str(exc)) from exc
            if best_val is None or record.val_mse < best_val:
                best_val = record.val_mse
                best_epoch = epoch
                best_state = model.state_dict()
            logger.debug(f"seed {seed} epoch {epoch}: loss {loss_value:.6g} val {record.val_mse:.6g} "
                         f"auc {record.auc}")
        history.append(record)
        if progress is not None:
            progress(epoch, record)

    model.load_state_dict(best_state)
    if history:
        logger.info(f"seed {seed}: selected epoch {best_epoch} (val mse {best_val:.6g})")
    return TrainedModel(model, history, best_epoch, best_val, seed)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def history_rows(trained: TrainedModel) -> List[Dict]:
    return [{"epoch": r.epoch, "train_loss": r.train_loss, "val_mse": r.val_mse, "auc": r.auc}
            for r in trained.history]


def save_checkpoint(trained: TrainedModel, path, config: Optional[Dict] = None) -> Path:
    model = trained.model
    payload = {
        "version": get_version_info()["artifact_version"],
        "config": config or {},
        "train_config": model.cfg.to_dict(),
        "n": model.n,
        "dims": model.dims,
        "directed": model.directed,
        "seed": trained.seed,
        "best_epoch": trained.best_epoch,
        "best_val_mse": trained.best_val_mse,
        "params": {name: value.tolist() for name, value in model.state_dict().items()},
        "history": history_rows(trained),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> TrainedModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        payload = json.loads(path.read_text())
        cfg = TrainConfig.from_dict(payload["train_config"])
        model = GdpModel(payload["n"], payload["dims"], cfg, directed=payload["directed"], seed=payload["seed"])
        model.load_state_dict({k: np.array(v) for k, v in payload["params"].items()})
        history = [EpochRecord(r["epoch"], r["train_loss"], r["val_mse"], r["auc"]) for r in payload["history"]]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed checkpoint {path}: {exc}") from exc
    return TrainedModel(model, history, payload["best_epoch"], payload["best_val_mse"], payload["seed"])


def clone_model(model: GdpModel) -> GdpModel:
    return copy.deepcopy(model)
