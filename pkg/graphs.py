"""
Graph generation, normalization, effective interaction graphs and the
polynomial-root enumerator for matrix polynomial filters.
"""

import itertools
from pathlib import Path
from typing import Dict, List, Sequence

import networkx as nx
import numpy as np

from errors import ContractError, DataError, UsageError
from evaluation import ScoreMatrix
from log_utils import get_logger
from numcore import Tensor, add, mat_exp, mat_pow, matmul, mul, stream_int, sym_eig, take

EPS_DEG = 1e-8
ROOT_CAP = 256

logger = get_logger("graphs")


class Graph:
    """Adjacency matrix with a direction flag.

    For directed graphs entry (i, j) is the edge j -> i, so row i holds the
    in-neighbourhood of node i.
    """

    def __init__(self, adjacency, directed=False, seed=None, family=None):
        A = np.array(adjacency, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ContractError(f"adjacency must be square, got {A.shape}")
        if np.any(np.diag(A) != 0):
            raise ContractError("adjacency must have a zero diagonal")
        if not directed and not np.array_equal(A, A.T):
            raise ContractError("undirected adjacency must be symmetric")
        self.adjacency = A
        self.directed = bool(directed)
        self.seed = seed
        self.family = family

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_count(self) -> int:
        count = int(np.count_nonzero(self.adjacency))
        return count if self.directed else count // 2

    def neighbours(self, i: int) -> np.ndarray:
        return np.nonzero(self.adjacency[i])[0]

    def degrees(self) -> np.ndarray:
        """Row sums; in-degrees for directed graphs."""
        return self.adjacency.sum(axis=1)

    def to_networkx(self):
        if self.directed:
            return nx.from_numpy_array(self.adjacency.T, create_using=nx.DiGraph)
        return nx.from_numpy_array(self.adjacency)

    def describe(self) -> Dict:
        info = {
            "n": self.n,
            "edges": self.edge_count,
            "directed": self.directed,
            "family": self.family,
            "seed": self.seed,
        }
        if not self.directed and self.n > 0:
            g = self.to_networkx()
            degrees = self.degrees()
            info["mean_clustering"] = float(nx.average_clustering(g))
            info["regular"] = bool(np.all(degrees == degrees[0]))
            info["connected"] = bool(nx.is_connected(g))
        return info

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph(n={self.n}, edges={self.edge_count}, {kind})"


def _from_nx(g, n, directed, seed, family) -> Graph:
    A = nx.to_numpy_array(g, nodelist=range(n), weight=None)
    if directed:
        A = A.T
    np.fill_diagonal(A, 0.0)
    return Graph(A, directed=directed, seed=seed, family=family)


def gen_er(n: int, p: float, seed: int, directed=False) -> Graph:
    if n < 2:
        raise ContractError(f"ER graph needs n >= 2, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"edge probability must lie in [0, 1], got {p}")
    g = nx.gnp_random_graph(n, p, seed=stream_int(seed, "graph"), directed=directed)
    return _from_nx(g, n, directed, seed, "erd" if directed else "er")


def gen_ba(n: int, m: int, seed: int) -> Graph:
    if m < 1:
        raise ContractError(f"BA attachment count must be >= 1, got {m}")
    if n <= m:
        raise ContractError(f"BA graph needs n > m, got n={n}, m={m}")
    core = nx.complete_graph(m + 1)
    if n == m + 1:
        g = core
    else:
        g = nx.barabasi_albert_graph(n, m, seed=stream_int(seed, "graph"), initial_graph=core)
    return _from_nx(g, n, False, seed, "ba")


def gen_ws(n: int, k: int, p_rewire: float, seed: int) -> Graph:
    if k % 2:
        raise ContractError(f"Watts-Strogatz k must be even, got {k}")
    if not 0 <= k < n:
        raise ContractError(f"Watts-Strogatz needs 0 <= k < n, got k={k}, n={n}")
    if not 0.0 <= p_rewire <= 1.0:
        raise ContractError(f"rewiring probability must lie in [0, 1], got {p_rewire}")
    g = nx.watts_strogatz_graph(n, k, p_rewire, seed=stream_int(seed, "graph"))
    return _from_nx(g, n, False, seed, "ws")


GRAPH_FAMILIES = {
    "er": ("n:int", "p:float"),
    "erd": ("n:int", "p:float"),
    "ba": ("n:int", "m:int"),
    "ws": ("n:int", "k:int", "p:float"),
}


def parse_graph_spec(spec: str) -> Dict:
    """Parse ``family:args`` shorthand (er:n:p, erd:n:p, ba:n:m, ws:n:k:p)."""
    parts = [p.strip() for p in str(spec).split(":")]
    family = parts[0].lower()
    if family not in GRAPH_FAMILIES:
        raise UsageError(f"unknown graph family {family!r}; valid: {', '.join(sorted(GRAPH_FAMILIES))}")
    fields = GRAPH_FAMILIES[family]
    if len(parts) - 1 != len(fields):
        raise UsageError(f"graph spec {spec!r} needs {family}:" + ":".join(f.split(':')[0] for f in fields))
    parsed = {"family": family}
    for raw, field in zip(parts[1:], fields):
        name, kind = field.split(":")
        try:
            parsed[name] = int(raw) if kind == "int" else float(raw)
        except ValueError as exc:
            raise UsageError(f"bad value {raw!r} for {name} in graph spec {spec!r}") from exc
    return parsed


def make_graph(spec: str, seed: int) -> Graph:
    params = parse_graph_spec(spec)
    family = params["family"]
    if family == "er":
        return gen_er(params["n"], params["p"], seed)
    if family == "erd":
        return gen_er(params["n"], params["p"], seed, directed=True)
    if family == "ba":
        return gen_ba(params["n"], params["m"], seed)
    return gen_ws(params["n"], params["k"], params["p"], seed)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def _adjacency_of(G) -> np.ndarray:
    return G.adjacency if isinstance(G, Graph) else np.asarray(G, dtype=np.float64)


def sym_normalize(G) -> np.ndarray:
    """``D^-1/2 A D^-1/2`` with degrees floored at ``EPS_DEG``."""
    if isinstance(G, Graph) and G.directed:
        raise ContractError("sym_normalize requires an undirected graph")
    A = _adjacency_of(G)
    inv_sqrt = 1.0 / np.sqrt(np.maximum(A.sum(axis=1), EPS_DEG))
    return A * inv_sqrt[:, None] * inv_sqrt[None, :]


def in_deg_normalize(G) -> np.ndarray:
    """Row i scaled by ``1 / max(in-degree(i), EPS_DEG)``; entry (i, j) weights the message j -> i."""
    if isinstance(G, Graph) and not G.directed:
        raise ContractError("in_deg_normalize requires a directed graph")
    A = _adjacency_of(G)
    return A / np.maximum(A.sum(axis=1), EPS_DEG)[:, None]


def norm_laplacian(G) -> np.ndarray:
    A = _adjacency_of(G)
    return np.eye(A.shape[0]) - sym_normalize(G)


def normalized_adjacency(G: Graph) -> np.ndarray:
    return in_deg_normalize(G) if G.directed else sym_normalize(G)


def poly_filter(M, theta):
    """``sum_k theta_k M^k`` by Horner's rule; taped when either argument is a Tensor."""
    if isinstance(M, Tensor) or isinstance(theta, Tensor):
        return _poly_filter_taped(M, theta)
    M = np.asarray(M, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    eye = np.eye(M.shape[-1])
    out = theta[-1] * eye
    for k in range(theta.size - 2, -1, -1):
        out = M @ out + theta[k] * eye
    return out


def _poly_filter_taped(M, theta) -> Tensor:
    M = M if isinstance(M, Tensor) else Tensor(M)
    theta = theta if isinstance(theta, Tensor) else Tensor(theta)
    K = theta.shape[0] - 1
    eye = Tensor(np.eye(M.shape[-1]))
    out = mul(take(theta, K, axis=0), eye)
    for k in range(K - 1, -1, -1):
        out = add(matmul(M, out), mul(take(theta, k, axis=0), eye))
    return out


# ---------------------------------------------------------------------------
# Effective interaction graph
# ---------------------------------------------------------------------------

class EffectiveGraphConfig:
    """Dynamics coupling, sampling interval and time model for the effective graph."""

    MODES = ("continuous", "discrete")

    def __init__(self, coupling=1.0, dt=1.0, mode="continuous"):
        if mode not in self.MODES:
            raise ContractError(f"mode must be one of {self.MODES}, got {mode!r}")
        if dt <= 0:
            raise ContractError(f"sampling interval must be positive, got {dt}")
        if mode == "discrete" and float(dt) != int(dt):
            raise ContractError(f"discrete mode needs an integer sampling interval, got {dt}")
        self.coupling = float(coupling)
        self.dt = dt
        self.mode = mode

    def to_dict(self) -> Dict:
        return {"coupling": self.coupling, "dt": self.dt, "mode": self.mode}


def effective_graph(G: Graph, cfg: EffectiveGraphConfig) -> ScoreMatrix:
    M = normalized_adjacency(G)
    if cfg.mode == "continuous":
        J = mat_exp(M, cfg.coupling * cfg.dt)
    else:
        J = mat_pow(M, int(cfg.dt))
    return ScoreMatrix(np.abs(J), directed=G.directed, metadata=cfg.to_dict())


# ---------------------------------------------------------------------------
# Root enumeration for g(M') = g(M)
# ---------------------------------------------------------------------------

class RootEnumeration:
    def __init__(self, root_counts, total, alternatives, basis_non_unique, truncated):
        self.root_counts: List[int] = root_counts
        self.total: int = total
        self.alternatives: List[np.ndarray] = alternatives
        self.basis_non_unique: bool = basis_non_unique
        self.truncated: bool = truncated

    @property
    def solution_count(self) -> int:
        return len(self.alternatives)

    def to_dict(self) -> Dict:
        return {
            "root_counts": list(self.root_counts),
            "total": self.total,
            "validated": self.solution_count,
            "basis_non_unique": self.basis_non_unique,
            "truncated": self.truncated,
        }


def _poly_eval(theta: np.ndarray, x: float) -> float:
    return float(np.polynomial.polynomial.polyval(x, theta))


def _real_roots(theta: np.ndarray, target: float, anchor: float) -> List[float]:
    coeffs = theta.copy()
    coeffs[0] -= target
    while coeffs.size > 1 and coeffs[-1] == 0.0:
        coeffs = coeffs[:-1]
    if coeffs.size == 1:
        return [anchor]
    deriv = np.polynomial.polynomial.polyder(coeffs)
    roots = []
    for r in np.roots(coeffs[::-1]):
        if abs(r.imag) > 1e-7 * max(1.0, abs(r)):
            continue
        x = float(r.real)
        for _ in range(3):
            slope = np.polynomial.polynomial.polyval(x, deriv)
            if slope == 0:
                break
            x -= np.polynomial.polynomial.polyval(x, coeffs) / slope
        roots.append(x)
    roots.append(anchor)
    roots.sort()
    unique = []
    for x in roots:
        if not unique or abs(x - unique[-1]) > 1e-6 * max(1.0, abs(x)):
            unique.append(x)
    return unique


def enumerate_poly_roots(M, theta: Sequence[float], cap=ROOT_CAP) -> RootEnumeration:
    """All real eigenvalue substitutions giving matrices with the same filter output."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] > 8:
        raise ContractError(f"root enumeration is limited to n <= 8, got {M.shape[0]}")
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    dec = sym_eig(M)
    lam = dec.eigenvalues
    basis_non_unique = bool(np.any(np.diff(lam) < 1e-8))
    if basis_non_unique:
        logger.warning("repeated eigenvalues: eigenbasis is not unique")

    choices = [_real_roots(theta, _poly_eval(theta, l), l) for l in lam]
    counts = [len(c) for c in choices]
    total = int(np.prod(counts))

    reference = poly_filter(M, theta)
    ref_norm = np.linalg.norm(reference)
    tol = 1e-6 * ref_norm if ref_norm > 0 else 1e-6
    U = dec.eigenvectors
    alternatives = []
    for mu in itertools.islice(itertools.product(*choices), cap):
        candidate = (U * np.array(mu)) @ U.T
        if np.linalg.norm(poly_filter(candidate, theta) - reference) < tol:
            alternatives.append(candidate)
    return RootEnumeration(counts, total, alternatives, basis_non_unique, total > cap)


# ---------------------------------------------------------------------------
# Edge-list files
# ---------------------------------------------------------------------------

def write_edge_list(G: Graph, path):
    """Header ``n <count> directed <0|1>`` then ``i j`` per edge; directed lines read source target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"n {G.n} directed {int(G.directed)}"]
    if G.directed:
        targets, sources = np.nonzero(G.adjacency)
        pairs = sorted(zip(sources.tolist(), targets.tolist()))
    else:
        rows, cols = np.nonzero(np.triu(G.adjacency, k=1))
        pairs = list(zip(rows.tolist(), cols.tolist()))
    lines += [f"{i} {j}" for i, j in pairs]
    path.write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> Graph:
    path = Path(path)
    if not path.exists():
        raise DataError(f"edge list not found: {path}")
    lines = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    try:
        header = lines[0]
        if len(header) != 4 or header[0] != "n" or header[2] != "directed":
            raise ValueError(f"bad header {' '.join(header)!r}")
        n, directed = int(header[1]), header[3] == "1"
        A = np.zeros((n, n))
        for fields in lines[1:]:
            i, j = int(fields[0]), int(fields[1])
            if directed:
                A[j, i] = 1.0
            else:
                A[i, j] = A[j, i] = 1.0
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed edge list {path}: {exc}") from exc
    return Graph(A, directed=directed)
