"""
Benchmark dynamical systems on graphs and dataset packaging.

Seven benchmark systems and a linear control map are simulated at a native
snapshot resolution; datasets keep every ``dt``-th snapshot, normalize each
observed dimension to [-1, 1] from the training split, and serialize as
per-trajectory CSV files plus a JSON manifest.
"""

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from errors import ContractError, DataError, DivergenceError, SingularityError, UsageError
from graphs import Graph, in_deg_normalize, normalized_adjacency, read_edge_list, sym_normalize, write_edge_list
from log_utils import get_logger
from numcore import stream_rng
from version import get_version_info

logger = get_logger("dynamics")

ROSSLER_LIMIT = 1e6
ROSSLER_ATTEMPTS = 10
SPRING_SOURCE_SNAPSHOTS = 49


@dataclass
class SystemParams:
    """Per-system constants; fields irrelevant to a system are ignored."""

    ode_step: float = 0.01
    rossler_standard_form: bool = False
    spring_k: float = 0.1
    box_half: float = 2.5
    spring_step: float = 0.001
    spring_substeps: int = 100
    kuramoto_k: float = 1.0
    omega_low: float = 0.5
    omega_high: float = 1.5
    kuramoto_step: float = 0.01
    kuramoto_substeps: int = 10
    cmn_eps: float = 0.2
    cmn_eta: float = 3.5

    def validate(self):
        for name in ("ode_step", "spring_k", "box_half", "spring_step", "kuramoto_step",
                     "cmn_eps", "cmn_eta", "omega_low", "omega_high"):
            if getattr(self, name) <= 0:
                raise ContractError(f"system parameter {name} must be positive")
        if self.spring_substeps < 1 or self.kuramoto_substeps < 1:
            raise ContractError("substep counts must be >= 1")
        if self.kuramoto_k < 0:
            raise ContractError("Kuramoto coupling must be non-negative")
        return self


@dataclass(frozen=True)
class SystemSpec:
    name: str
    state_dims: int
    static_dims: int
    native_interval: float
    discrete: bool


SYSTEMS: Dict[str, SystemSpec] = {
    "michaelis_menten": SystemSpec("michaelis_menten", 1, 0, 1.0, False),
    "rossler": SystemSpec("rossler", 3, 0, 1.0, False),
    "diffusion": SystemSpec("diffusion", 1, 0, 0.1, False),
    "springs": SystemSpec("springs", 4, 0, 0.1, False),
    "kuramoto": SystemSpec("kuramoto", 3, 1, 0.1, False),
    "fj": SystemSpec("fj", 1, 1, 1.0, True),
    "cmn": SystemSpec("cmn", 1, 0, 1.0, True),
    "linear": SystemSpec("linear", 1, 0, 1.0, True),
}

ALIASES = {
    "mm": "michaelis_menten",
    "michaelis-menten": "michaelis_menten",
    "spring": "springs",
    "friedkin_johnsen": "fj",
    "friedkin-johnsen": "fj",
}


def resolve_system(name: str) -> SystemSpec:
    key = str(name).strip().lower()
    key = ALIASES.get(key, key)
    if key not in SYSTEMS:
        raise UsageError(f"unknown system {name!r}; valid: {', '.join(sorted(SYSTEMS))}")
    return SYSTEMS[key]


# ---------------------------------------------------------------------------
# Right-hand sides and maps
# ---------------------------------------------------------------------------

def _adjacency(G) -> np.ndarray:
    return G.adjacency if isinstance(G, Graph) else np.asarray(G, dtype=np.float64)


def _neighbour_mean(A: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Mean of ``values`` over each node's neighbours; 0 for isolated nodes."""
    deg = A.sum(axis=1)
    total = A @ values
    safe = np.where(deg > 0, deg, 1.0)
    if total.ndim > 1:
        return np.where((deg > 0)[:, None], total / safe[:, None], 0.0)
    return np.where(deg > 0, total / safe, 0.0)


def deriv_michaelis_menten(x, G) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(x == -1.0):
        raise SingularityError("Michaelis-Menten term x/(1+x) evaluated at x = -1")
    return -x + _neighbour_mean(_adjacency(G), x / (1.0 + x))


def deriv_rossler(x, G, standard_form=False) -> np.ndarray:
    """Coupled Rossler oscillators; ``standard_form`` uses ``0.1 + x3 (x1 - 18)`` for the third channel."""
    x = np.asarray(x, dtype=np.float64)
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    out = np.empty_like(x)
    out[:, 0] = -x2 - x3 + _neighbour_mean(_adjacency(G), np.sin(x1))
    out[:, 1] = x1 + 0.1 * x2
    out[:, 2] = 0.1 + x3 * ((x1 if standard_form else x3) - 18.0)
    return out


def deriv_diffusion(x, G) -> np.ndarray:
    if isinstance(G, Graph) and G.directed:
        M = in_deg_normalize(G)
    else:
        M = sym_normalize(G)
    return M @ np.asarray(x, dtype=np.float64)


def springs_acceleration(r, G, k) -> np.ndarray:
    """Hooke forces ``-k sum_j (r_i - r_j)`` over the neighbours of each particle."""
    A = _adjacency(G)
    r = np.asarray(r, dtype=np.float64)
    return -k * (A.sum(axis=1)[:, None] * r - A @ r)


def _reflect(r, v, half):
    over = r > half
    r = np.where(over, 2 * half - r, r)
    v = np.where(over, -np.abs(v), v)
    under = r < -half
    r = np.where(under, -2 * half - r, r)
    v = np.where(under, np.abs(v), v)
    return r, v


def step_springs(state, G, params: SystemParams = None) -> np.ndarray:
    """One observed step: ``spring_substeps`` velocity-Verlet substeps with elastic walls."""
    params = params or SystemParams()
    state = np.asarray(state, dtype=np.float64)
    r, v = state[:, :2].copy(), state[:, 2:].copy()
    h = params.spring_step
    a = springs_acceleration(r, G, params.spring_k)
    for _ in range(params.spring_substeps):
        v_half = v + 0.5 * h * a
        r = r + h * v_half
        r, v_half = _reflect(r, v_half, params.box_half)
        a = springs_acceleration(r, G, params.spring_k)
        v = v_half + 0.5 * h * a
    if not np.all(np.isfinite(r)) or not np.all(np.isfinite(v)):
        raise DivergenceError("springs simulation produced non-finite state")
    return np.concatenate([r, v], axis=1)


def deriv_kuramoto(phi, omega, G, k=1.0) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    A = _adjacency(G)
    return np.asarray(omega, dtype=np.float64) + k * np.sum(A * np.sin(phi[None, :] - phi[:, None]), axis=1)


def step_fj(x, s, G) -> np.ndarray:
    """One opinion update; ``x`` and ``s`` are (n,) or (n, 1)."""
    A = _adjacency(G)
    x = np.asarray(x, dtype=np.float64)
    deg = A.sum(axis=1).reshape((-1,) + (1,) * (x.ndim - 1))
    return (np.asarray(s, dtype=np.float64).reshape(x.shape) + A @ x) / (1.0 + deg)


def step_linear(x, G) -> np.ndarray:
    """``x <- M x`` with M the normalized adjacency of ``G``."""
    M = normalized_adjacency(G) if isinstance(G, Graph) else sym_normalize(G)
    return M @ np.asarray(x, dtype=np.float64)


def step_cmn(x, G, params: SystemParams = None) -> np.ndarray:
    params = params or SystemParams()
    x = np.asarray(x, dtype=np.float64)
    f = params.cmn_eta * x * (1.0 - x)
    return (1.0 - params.cmn_eps) * f + params.cmn_eps * _neighbour_mean(_adjacency(G), f)


def rk4_integrate(deriv: Callable[[np.ndarray], np.ndarray], x0, inner_step: float, n_inner: int) -> np.ndarray:
    """Classical fourth-order Runge-Kutta with a fixed step."""
    if inner_step <= 0:
        raise ContractError(f"inner step must be positive, got {inner_step}")
    x = np.array(x0, dtype=np.float64)
    h = inner_step
    for step in range(int(n_inner)):
        k1 = deriv(x)
        k2 = deriv(x + 0.5 * h * k1)
        k3 = deriv(x + 0.5 * h * k2)
        k4 = deriv(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"integration diverged at step {step}", step=step)
    return x


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

class Trajectory:
    """Snapshots ``states`` (T, n, d_s) plus optional static node features (n, d_f)."""

    def __init__(self, states, dt=1, static=None):
        states = np.asarray(states, dtype=np.float64)
        if states.ndim == 2:
            states = states[:, :, None]
        if states.ndim != 3 or states.shape[0] < 2:
            raise ContractError(f"trajectory needs shape (T>=2, n, d), got {states.shape}")
        if not np.all(np.isfinite(states)):
            raise ContractError("trajectory contains non-finite values")
        self.states = states
        self.static = None if static is None else np.asarray(static, dtype=np.float64).reshape(states.shape[1], -1)
        self.dt = dt

    @property
    def length(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def observed(self) -> np.ndarray:
        """Dynamic channels with static features repeated at every snapshot."""
        if self.static is None:
            return self.states
        tiled = np.broadcast_to(self.static, (self.length,) + self.static.shape)
        return np.concatenate([self.states, tiled], axis=2)


def simulate(system: str, G: Graph, length: int, rng: np.random.Generator,
             params: SystemParams = None) -> Trajectory:
    """Simulate ``length`` native snapshots from a random initial condition."""
    spec = resolve_system(system)
    params = (params or SystemParams()).validate()
    n = G.n
    static = None
    snaps = []

    if spec.name == "michaelis_menten":
        x = rng.uniform(0.5, 1.5, size=(n, 1))
        n_inner = int(round(spec.native_interval / params.ode_step))
        step = lambda s: rk4_integrate(lambda y: deriv_michaelis_menten(y, G), s, params.ode_step, n_inner)
    elif spec.name == "rossler":
        x = rng.uniform(-1.0, 1.0, size=(n, 3))
        n_inner = int(round(spec.native_interval / params.ode_step))
        rhs = lambda y: deriv_rossler(y, G, params.rossler_standard_form)
        step = lambda s: rk4_integrate(rhs, s, params.ode_step, n_inner)
    elif spec.name == "diffusion":
        x = rng.uniform(-1.0, 1.0, size=(n, 1))
        n_inner = max(1, int(round(spec.native_interval / params.ode_step)))
        step = lambda s: rk4_integrate(lambda y: deriv_diffusion(y, G), s, params.ode_step, n_inner)
    elif spec.name == "springs":
        r = np.clip(rng.normal(0.0, 0.5, size=(n, 2)), -params.box_half, params.box_half)
        v = rng.normal(size=(n, 2))
        v = 0.5 * v / np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-12)
        x = np.concatenate([r, v], axis=1)
        step = lambda s: step_springs(s, G, params)
    elif spec.name == "kuramoto":
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        omega = rng.uniform(params.omega_low, params.omega_high, size=n)
        static = omega[:, None]
        rhs = lambda p: deriv_kuramoto(p, omega, G, params.kuramoto_k)
        for t in range(length):
            snaps.append(np.stack([rhs(phi), np.sin(phi), phi], axis=1))
            if t + 1 < length:
                phi = rk4_integrate(rhs, phi, params.kuramoto_step, params.kuramoto_substeps)
        return Trajectory(np.stack(snaps), static=static)
    elif spec.name == "fj":
        x = rng.uniform(-1.0, 1.0, size=(n, 1))
        s = rng.uniform(-1.0, 1.0, size=(n, 1))
        static = s
        step = lambda cur: step_fj(cur, s, G)
    elif spec.name == "linear":
        x = rng.uniform(-1.0, 1.0, size=(n, 1))
        step = lambda cur: step_linear(cur, G)
    else:
        x = rng.uniform(0.0, 1.0, size=(n, 1))
        x = np.where(x == 0.0, 0.5, x)
        step = lambda cur: step_cmn(cur, G, params)

    snaps.append(x)
    for _ in range(length - 1):
        x = step(x)
        snaps.append(x)
    return Trajectory(np.stack(snaps), static=static)


def _simulate_checked(system, G, length, seed, split, index, params) -> Trajectory:
    spec = resolve_system(system)
    attempts = ROSSLER_ATTEMPTS if spec.name == "rossler" else 1
    for attempt in range(attempts):
        rng = stream_rng(seed, split, index, attempt) if attempt else stream_rng(seed, split, index)
        try:
            traj = simulate(system, G, length, rng, params)
        except DivergenceError as exc:
            if attempt + 1 < attempts:
                logger.debug(f"{split}/{index} diverged on attempt {attempt}, reseeding")
                continue
            raise DivergenceError(f"{spec.name} {split} trajectory {index} diverged: {exc}",
                                  step=exc.step, seed=seed) from exc
        if spec.name == "rossler" and np.max(np.abs(traj.states)) > ROSSLER_LIMIT:
            if attempt + 1 < attempts:
                logger.debug(f"{split}/{index} exceeded {ROSSLER_LIMIT:g}, reseeding")
                continue
            raise DivergenceError(f"rossler {split} trajectory {index} exceeded {ROSSLER_LIMIT:g}", seed=seed)
        return traj
    raise DivergenceError(f"{spec.name} {split} trajectory {index} failed", seed=seed)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

class Normalization:
    """Per-dimension affine map of the training range onto [-1, 1]."""

    def __init__(self, minimum, maximum):
        self.minimum = np.asarray(minimum, dtype=np.float64)
        self.maximum = np.asarray(maximum, dtype=np.float64)

    @classmethod
    def fit(cls, arrays: List[np.ndarray]) -> "Normalization":
        stacked = np.concatenate([a.reshape(-1, a.shape[-1]) for a in arrays], axis=0)
        return cls(stacked.min(axis=0), stacked.max(axis=0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        span = self.maximum - self.minimum
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, 2.0 * (x - self.minimum) / safe - 1.0, 0.0)

    def to_dict(self) -> Dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}


class Dataset:
    """Train/validation/test trajectories sharing one graph and one normalization."""

    def __init__(self, system, graph: Optional[Graph], train: List[Trajectory], valid: List[Trajectory],
                 test: Optional[List[Trajectory]] = None, dt=1, seed=None, params: SystemParams = None,
                 normalization: Normalization = None, static_dims=0):
        if not train:
            raise ContractError("dataset needs at least one training trajectory")
        self.system = system
        self.graph = graph
        self.train = list(train)
        self.valid = list(valid)
        self.test = list(test or [])
        self.dt = dt
        self.seed = seed
        self.params = params or SystemParams()
        self.static_dims = static_dims
        self.normalization = normalization or Normalization.fit([t.observed() for t in self.train])

    @property
    def n(self) -> int:
        return self.train[0].n

    @property
    def dims(self) -> int:
        return self.train[0].observed().shape[2]

    @property
    def volume(self) -> Tuple[int, int]:
        return len(self.train), self.train[0].length

    @property
    def directed(self) -> bool:
        return bool(self.graph.directed) if self.graph is not None else False

    def split(self, name: str) -> List[Trajectory]:
        if name not in ("train", "valid", "test"):
            raise ContractError(f"unknown split {name!r}")
        return getattr(self, name)

    def normalized(self, name="train") -> List[np.ndarray]:
        return [self.normalization.apply(t.observed()) for t in self.split(name)]

    def pairs(self, name="train") -> Tuple[np.ndarray, np.ndarray]:
        """Consecutive normalized snapshots stacked as (P, n, d) inputs and targets."""
        arrays = self.normalized(name)
        if not arrays:
            raise ContractError(f"split {name!r} is empty")
        inputs = np.concatenate([a[:-1] for a in arrays], axis=0)
        targets = np.concatenate([a[1:] for a in arrays], axis=0)
        return inputs, targets

    def all_series(self) -> List[np.ndarray]:
        """Raw observed train and validation snapshots, one (T, n, d) array per trajectory."""
        return [t.observed() for t in self.train + self.valid]

    def describe(self) -> Dict:
        return {
            "system": self.system,
            "dt": self.dt,
            "volume": list(self.volume),
            "n_valid": len(self.valid),
            "n_test": len(self.test),
            "seed": self.seed,
            "n": self.n,
            "dims": self.dims,
            "static_dims": self.static_dims,
        }


def source_length(system: str, traj_len: int, dt: int) -> int:
    """Native snapshots simulated per trajectory before subsampling."""
    needed = (traj_len - 1) * dt + 1
    if resolve_system(system).name == "springs":
        return max(SPRING_SOURCE_SNAPSHOTS, needed)
    return needed


def build_dataset(system: str, G: Graph, n_traj: int, traj_len: int, dt: int, seed: int,
                  n_valid=10, n_test=0, params: SystemParams = None) -> Dataset:
    spec = resolve_system(system)
    if n_traj < 1 or traj_len < 2 or n_valid < 0 or n_test < 0:
        raise ContractError("need n_traj >= 1, traj_len >= 2 and non-negative split sizes")
    if int(dt) != dt or dt < 1:
        raise ContractError(f"sampling interval must be a positive integer, got {dt}")
    dt = int(dt)
    params = (params or SystemParams()).validate()
    length = source_length(spec.name, traj_len, dt)

    def make(split, count):
        out = []
        for i in range(count):
            traj = _simulate_checked(spec.name, G, length, seed, split, i, params)
            out.append(Trajectory(traj.states[::dt][:traj_len], dt=dt, static=traj.static))
        return out

    train = make("trajectory", n_traj)
    valid = make("valid", n_valid)
    test = make("test", n_test)
    logger.info(f"built {spec.name} dataset: {n_traj}x{traj_len} at dt={dt}, n={G.n}")
    return Dataset(spec.name, G, train, valid, test, dt=dt, seed=seed, params=params,
                   static_dims=spec.static_dims)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def write_trajectory_csv(traj: Trajectory, path):
    observed = traj.observed()
    T, n, d = observed.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "node"] + [f"dim{k}" for k in range(d)])
        for t in range(T):
            for i in range(n):
                writer.writerow([t, i] + [format(float(v), ".17g") for v in observed[t, i]])


def read_trajectory_csv(path, static_dims=0, dt=1) -> Trajectory:
    path = Path(path)
    if not path.exists():
        raise DataError(f"trajectory file not found: {path}")
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if header[:2] != ["t", "node"]:
                raise ValueError(f"header must start with t,node, got {header[:2]}")
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.array(rows)
        T = int(data[:, 0].max()) + 1
        n = int(data[:, 1].max()) + 1
        d = data.shape[1] - 2
        observed = np.full((T, n, d), np.nan)
        observed[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2:]
        if np.any(np.isnan(observed)):
            raise ValueError("missing (t, node) rows")
    except (StopIteration, ValueError, IndexError) as exc:
        raise DataError(f"malformed trajectory file {path}: {exc}") from exc
    if static_dims:
        return Trajectory(observed[:, :, :d - static_dims], dt=dt, static=observed[0, :, d - static_dims:])
    return Trajectory(observed, dt=dt)


def save_dataset(dataset: Dataset, out_dir, config: Optional[Dict] = None) -> Path:
    """Write edge list, trajectory CSVs and ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for split in ("train", "valid", "test"):
        names = []
        for i, traj in enumerate(dataset.split(split)):
            name = f"{split}_{i:03d}.csv"
            write_trajectory_csv(traj, out_dir / name)
            names.append(name)
        files[split] = names

    ground_truth = None
    if dataset.graph is not None:
        ground_truth = "graph.txt"
        write_edge_list(dataset.graph, out_dir / ground_truth)

    manifest = dataset.describe()
    manifest.update({
        "ground_truth": ground_truth,
        "directed": dataset.directed,
        "normalization": dataset.normalization.to_dict(),
        "params": asdict(dataset.params),
        "kuramoto_params_assumed": True,
        "files": files,
        "config": config or {},
        "version": get_version_info()["artifact_version"],
    })
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(path) -> Dataset:
    """Load a manifest (or its directory); ``ground_truth`` may be null for external data."""
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    if not manifest_path.exists():
        raise DataError(f"dataset manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {manifest_path}: {exc}") from exc

    root = manifest_path.parent
    static_dims = int(manifest.get("static_dims", 0))
    dt = manifest.get("dt", 1)
    files = manifest.get("files") or {}
    splits = {name: [read_trajectory_csv(root / f, static_dims, dt) for f in files.get(name, [])]
              for name in ("train", "valid", "test")}
    if not splits["train"]:
        raise DataError(f"manifest {manifest_path} lists no training trajectories")

    graph = None
    if manifest.get("ground_truth"):
        graph = read_edge_list(root / manifest["ground_truth"])
        if manifest.get("directed") is not None and bool(manifest["directed"]) != graph.directed:
            raise DataError("manifest and edge list disagree on directedness")

    normalization = None
    if manifest.get("normalization"):
        normalization = Normalization(manifest["normalization"]["min"], manifest["normalization"]["max"])
    known = {k: v for k, v in (manifest.get("params") or {}).items() if k in SystemParams.__dataclass_fields__}
    return Dataset(manifest.get("system", "external"), graph, splits["train"], splits["valid"], splits["test"],
                   dt=dt, seed=manifest.get("seed"), params=SystemParams(**known),
                   normalization=normalization, static_dims=static_dims)
