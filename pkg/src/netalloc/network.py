"""Random communication graph models and mean-Laplacian analysis.

Per-step graphs may be directed; only the mean Laplacian must be symmetric
with positive algebraic connectivity for the allocation dynamics to mix.
Sampled adjacencies are 0/1 with zero diagonal; weighted adjacencies are
accepted for diagnostics (e.g. stepping the recursion with the mean graph).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


def laplacian(adjacency) -> np.ndarray:
    """Graph Laplacian: degree matrix minus adjacency. Rows sum to zero."""
    A = np.asarray(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    if np.abs(np.diag(A)).max(initial=0.0) != 0.0:
        raise ValueError("adjacency diagonal must be zero")
    return np.diag(A.sum(axis=1)) - A


@dataclass
class GraphSample:
    """One drawn communication graph: adjacency[i, j] = 1 iff i hears j."""

    n: int
    adjacency: np.ndarray
    laplacian: np.ndarray

    @classmethod
    def from_adjacency(cls, adjacency):
        A = np.asarray(adjacency, dtype=float)
        return cls(n=A.shape[0], adjacency=A, laplacian=laplacian(A))


@dataclass
class GraphModel:
    """A distribution over communication graphs, drawn i.i.d. across steps.

    Kinds
    -----
    fixed_pool:       uniform draw from a given list of adjacency matrices
                      (directed entries allowed).
    erdos_renyi_pool: a pool of `pool_size` undirected G(n, p) graphs,
                      materialized once at construction with p drawn
                      uniformly from [p_lo, p_hi] per graph; sampling then
                      draws uniformly from the pool.
    gossip:           a single uniformly random undirected edge per step.
    broadcast:        a single uniformly random node wakes and is heard by
                      its neighbors in a base graph.
    """

    kind: str
    n: int
    graphs: Optional[np.ndarray] = field(default=None, repr=False)  # (pool, n, n)
    laplacians: Optional[np.ndarray] = field(default=None, repr=False)
    base: Optional[np.ndarray] = field(default=None, repr=False)
    p_lo: Optional[float] = None
    p_hi: Optional[float] = None
    pool_size: Optional[int] = None

    @classmethod
    def fixed_pool(cls, graphs):
        graphs = np.array([np.asarray(g, dtype=float) for g in graphs])
        if graphs.ndim != 3 or graphs.shape[1] != graphs.shape[2]:
            raise ValueError("fixed_pool needs a list of square adjacency matrices")
        for g in graphs:
            if np.abs(np.diag(g)).max(initial=0.0) != 0.0:
                raise ValueError("adjacency diagonal must be zero")
        laps = np.array([laplacian(g) for g in graphs])
        return cls(kind="fixed_pool", n=graphs.shape[1], graphs=graphs, laplacians=laps,
                   pool_size=graphs.shape[0])

    @classmethod
    def erdos_renyi_pool(cls, n, pool_size, p_lo, p_hi, seed):
        if not (0.0 <= p_lo <= p_hi <= 1.0):
            raise ValueError("need 0 <= p_lo <= p_hi <= 1")
        rng = np.random.default_rng(seed)
        graphs = np.empty((pool_size, n, n))
        for k in range(pool_size):
            p = rng.uniform(p_lo, p_hi)
            A = (rng.random((n, n)) < p).astype(float)
            A = np.triu(A, 1)
            graphs[k] = A + A.T
        laps = np.array([laplacian(g) for g in graphs])
        return cls(kind="erdos_renyi_pool", n=n, graphs=graphs, laplacians=laps,
                   p_lo=float(p_lo), p_hi=float(p_hi), pool_size=int(pool_size))

    @classmethod
    def gossip(cls, n):
        if n < 2:
            raise ValueError("gossip needs n >= 2")
        return cls(kind="gossip", n=int(n))

    @classmethod
    def broadcast(cls, base):
        base = np.asarray(base, dtype=float)
        if np.abs(base - base.T).max() > 0:
            raise ValueError("broadcast base graph must be undirected")
        if np.abs(np.diag(base)).max(initial=0.0) != 0.0:
            raise ValueError("base adjacency diagonal must be zero")
        return cls(kind="broadcast", n=base.shape[0], base=base)


def sample_graph(model: GraphModel, rng) -> GraphSample:
    """One i.i.d. draw from the model, consuming `rng` deterministically."""
    n = model.n
    if model.kind in ("fixed_pool", "erdos_renyi_pool"):
        k = int(rng.integers(0, model.graphs.shape[0]))
        return GraphSample(n=n, adjacency=model.graphs[k], laplacian=model.laplacians[k])
    if model.kind == "gossip":
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n - 1))
        if j >= i:
            j += 1
        A = np.zeros((n, n))
        A[i, j] = A[j, i] = 1.0
        return GraphSample.from_adjacency(A)
    if model.kind == "broadcast":
        w = int(rng.integers(0, n))
        A = np.zeros((n, n))
        A[:, w] = model.base[w]
        return GraphSample.from_adjacency(A)
    raise ValueError(f"unknown model kind {model.kind!r}")


def mean_laplacian(model: GraphModel) -> np.ndarray:
    """Exact expectation of the per-step Laplacian."""
    n = model.n
    if model.kind in ("fixed_pool", "erdos_renyi_pool"):
        return model.laplacians.mean(axis=0)
    if model.kind == "gossip":
        # each of the n(n-1)/2 edges appears with equal probability
        pairs = n * (n - 1) / 2.0
        return (n * np.eye(n) - np.ones((n, n))) / pairs
    if model.kind == "broadcast":
        return laplacian(model.base) / n
    raise ValueError(f"unknown model kind {model.kind!r}")


def mean_laplacian_mc(model: GraphModel, draws=100_000, seed=0):
    """Monte Carlo estimate of the mean Laplacian with entrywise standard errors."""
    if draws < 1:
        raise ValueError("need at least one draw")
    rng = np.random.default_rng(seed)
    n = model.n
    acc = np.zeros((n, n))
    acc2 = np.zeros((n, n))
    for _ in range(draws):
        L = sample_graph(model, rng).laplacian
        acc += L
        acc2 += L * L
    mean = acc / draws
    var = np.maximum(acc2 / draws - mean**2, 0.0)
    stderr = np.sqrt(var / draws)
    return mean, stderr


def algebraic_connectivity(L) -> float:
    """Second-smallest eigenvalue of a symmetric Laplacian."""
    L = np.asarray(L, dtype=float)
    if np.abs(L - L.T).max(initial=0.0) > 1e-9:
        raise ValueError("matrix must be symmetric within 1e-9")
    return float(np.linalg.eigvalsh(0.5 * (L + L.T))[1])


@dataclass
class ValidationReport:
    """Outcome of the connectivity-in-mean check on a graph model."""

    symmetry_defect: float
    s2: float
    passed: bool
    method: str
    s2_stderr: Optional[float] = None

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (
            f"[{status}] mean-Laplacian symmetry defect {self.symmetry_defect:.3e}, "
            f"algebraic connectivity {self.s2:.6g} ({self.method})"
        )


def validate_model(model: GraphModel, mc_draws=100_000, mc_seed=0) -> ValidationReport:
    """Check that the mean Laplacian is symmetric with s2 > 0.

    All built-in kinds have exact mean Laplacians; the Monte Carlo branch
    covers models whose expectation must be estimated, passing only when s2
    clears three standard errors.
    """
    try:
        Lbar = mean_laplacian(model)
        method = "exact"
        stderr = None
        s2_floor = 1e-8
    except ValueError:
        Lbar, se = mean_laplacian_mc(model, draws=mc_draws, seed=mc_seed)
        method = "monte_carlo"
        stderr = float(np.linalg.norm(se))
        s2_floor = 3.0 * stderr
    defect = float(np.abs(Lbar - Lbar.T).max())
    if defect < 1e-8:
        s2 = float(np.linalg.eigvalsh(0.5 * (Lbar + Lbar.T))[1])
    else:
        s2 = float("nan")
    passed = defect < 1e-8 and s2 > s2_floor
    return ValidationReport(
        symmetry_defect=defect, s2=s2, passed=passed, method=method, s2_stderr=stderr
    )


# ---------------------------------------------------------------------------
# JSON serialization


def model_to_json(model: GraphModel) -> dict:
    doc = {"n": model.n, "kind": model.kind}
    if model.kind in ("fixed_pool", "erdos_renyi_pool"):
        doc["graphs"] = [g.ravel().tolist() for g in model.graphs]
        doc["pool_size"] = model.pool_size
        if model.kind == "erdos_renyi_pool":
            doc["p_lo"] = model.p_lo
            doc["p_hi"] = model.p_hi
    elif model.kind == "broadcast":
        doc["graphs"] = [model.base.ravel().tolist()]
    return doc


def model_from_json(doc: dict) -> GraphModel:
    kind = doc["kind"]
    n = int(doc["n"])
    if kind in ("fixed_pool", "erdos_renyi_pool"):
        graphs = [np.asarray(g, dtype=float).reshape(n, n) for g in doc["graphs"]]
        model = GraphModel.fixed_pool(graphs)
        if kind == "erdos_renyi_pool":
            model.kind = "erdos_renyi_pool"
            model.p_lo = doc.get("p_lo")
            model.p_hi = doc.get("p_hi")
        return model
    if kind == "gossip":
        return GraphModel.gossip(n)
    if kind == "broadcast":
        return GraphModel.broadcast(np.asarray(doc["graphs"][0], dtype=float).reshape(n, n))
    raise ValueError(f"unknown model kind {kind!r}")
