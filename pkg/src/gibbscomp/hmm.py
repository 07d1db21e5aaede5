"""Lattice hidden Markov models with local, epsilon-perturbed dynamics.

Local densities are taken relative to the uniform probability on each
alphabet, so a density table is ``k`` times the corresponding probability
table.  With that convention ``delta <= q^v <= 1/delta`` is a genuine
minorization of the local kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .core import StateSpace, encode
from .streams import HIDDEN, OBSERVE, categorical, stream

ENVELOPE_TOL = 1e-12


class EnvelopeError(ValueError):
    """A constructed model violates one of its envelope constants."""


@dataclass(frozen=True)
class LatticeGraph:
    """Rectangular grid (1-d path/cycle or 2-d grid/torus), vertex ``r * cols + c``."""

    shape: tuple[int, ...]
    r: int = 1
    periodic: bool = True

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if not 1 <= len(shape) <= 2 or any(s < 1 for s in shape):
            raise ValueError(f"unsupported grid shape {shape}")
        if self.r < 0:
            raise ValueError("interaction radius must be >= 0")
        object.__setattr__(self, "shape", shape)

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        dims = self.shape if len(self.shape) == 2 else (1, self.shape[0])
        rows, cols = dims
        out = set()
        for a in range(rows):
            for b in range(cols):
                i = a * cols + b
                for da, db in ((0, 1), (1, 0)):
                    aa, bb = a + da, b + db
                    if self.periodic:
                        aa, bb = aa % rows, bb % cols
                    elif aa >= rows or bb >= cols:
                        continue
                    j = aa * cols + bb
                    if i != j:
                        out.add((min(i, j), max(i, j)))
        return tuple(sorted(out))

    @cached_property
    def distance(self) -> np.ndarray:
        n = self.n_vertices
        if not self.edges:
            d = np.full((n, n), np.inf)
            np.fill_diagonal(d, 0.0)
            return d
        i, j = np.array(self.edges).T
        adj = csr_matrix((np.ones(i.size), (i, j)), shape=(n, n))
        return shortest_path(adj, directed=False, unweighted=True)

    @cached_property
    def neighborhoods(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(u) for u in np.flatnonzero(row <= self.r)) for row in self.distance)

    def set_distance(self, A: Sequence[int], B: Sequence[int]) -> float:
        return float(self.distance[np.ix_(list(A), list(B))].min())


@dataclass
class LatticeHMM:
    """Hidden Markov model on a lattice graph.

    ``q[v]`` is a ``k x k`` probability table.  ``theta[v]`` has one row per
    configuration of ``N(v)`` (mixed radix, first neighbour fastest) and
    values in ``[-1, 1]``; the perturbed kernel is
    ``p^v(x, .) ∝ q^v(x_v, .) * exp(lam * theta[v][x^{N(v)}])`` with
    ``lam = log(1/eps) / 2``.  ``obs[v]`` is the ``k x m`` probability table
    of ``Y^v`` given ``X^v``.
    """

    graph: LatticeGraph
    k: int
    obs_k: int
    q: list[np.ndarray] = field(repr=False)
    theta: list[np.ndarray] = field(repr=False)
    obs: list[np.ndarray] = field(repr=False)
    eps: float = 1.0
    delta: float = 0.0
    kappa: float = 0.0
    init: tuple[int, ...] | None = None

    def __post_init__(self):
        n = self.graph.n_vertices
        if len(self.q) != n or len(self.theta) != n or len(self.obs) != n:
            raise ValueError("one table per vertex required")
        self.q = [np.asarray(t, dtype=float) for t in self.q]
        self.theta = [np.asarray(t, dtype=float) for t in self.theta]
        self.obs = [np.asarray(t, dtype=float) for t in self.obs]
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        for v in range(n):
            nb = len(self.graph.neighborhoods[v])
            if self.q[v].shape != (self.k, self.k) or not np.allclose(self.q[v].sum(1), 1.0, atol=1e-12):
                raise ValueError(f"q[{v}] is not a {self.k}x{self.k} stochastic table")
            if self.theta[v].shape != (self.k**nb, self.k) or np.abs(self.theta[v]).max() > 1:
                raise ValueError(f"theta[{v}] must have shape {(self.k**nb, self.k)} with entries in [-1, 1]")
            if self.obs[v].shape != (self.k, self.obs_k) or not np.allclose(self.obs[v].sum(1), 1.0, atol=1e-12):
                raise ValueError(f"obs[{v}] is not a {self.k}x{self.obs_k} stochastic table")
        if self.init is None:
            self.init = (0,) * n
        self.init = tuple(int(s) for s in self.init)
        if len(self.init) != n or not all(0 <= s < self.k for s in self.init):
            raise ValueError("initial configuration does not fit the model")

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    @cached_property
    def space(self) -> StateSpace:
        return StateSpace((self.k,) * self.n_vertices)

    @cached_property
    def local_kernels(self) -> list[np.ndarray]:
        """``p[v][c, z]``: probability of ``z`` at ``v`` given neighbourhood configuration ``c``."""
        lam = 0.5 * np.log(1.0 / self.eps)
        out = []
        for v in range(self.n_vertices):
            nbhd = self.graph.neighborhoods[v]
            c = np.arange(self.k ** len(nbhd))
            own = (c // self.k ** nbhd.index(v)) % self.k
            if lam == 0:
                out.append(self.q[v][own])
                continue
            w = self.q[v][own] * np.exp(lam * self.theta[v])
            out.append(w / w.sum(axis=1, keepdims=True))
        return out

    def neighborhood_index(self, v: int, configs: np.ndarray) -> np.ndarray:
        nbhd = list(self.graph.neighborhoods[v])
        return encode(configs[..., nbhd], [self.k] * len(nbhd))

    def likelihood(self, v: int, y: int) -> np.ndarray:
        """``g^v(., y)`` as a density relative to the uniform law on ``Y^v``."""
        return self.obs_k * self.obs[v][:, y]

    def verify_envelopes(self) -> None:
        """Raise ``EnvelopeError`` naming the tightest violated entry, if any."""
        worst = None
        checks = []
        for v in range(self.n_vertices):
            nbhd = self.graph.neighborhoods[v]
            c = np.arange(self.k ** len(nbhd))
            own = (c // self.k ** nbhd.index(v)) % self.k
            ratio = self.local_kernels[v] / self.q[v][own]
            checks.append((f"p[{v}]/q[{v}]", ratio, self.eps, 1 / self.eps))
            checks.append((f"q[{v}] density", self.k * self.q[v], self.delta, 1 / self.delta if self.delta > 0 else np.inf))
            checks.append((f"g[{v}] density", self.obs_k * self.obs[v], self.kappa, 1 / self.kappa if self.kappa > 0 else np.inf))
        for name, vals, lo, hi in checks:
            gap = max(lo - vals.min(), vals.max() - hi)
            if gap > ENVELOPE_TOL and (worst is None or gap > worst[0]):
                idx = np.unravel_index(np.argmax(np.maximum(lo - vals, vals - hi)), vals.shape)
                worst = (gap, f"{name}{list(idx)} = {vals[idx]:.6g} outside [{lo:.6g}, {hi:.6g}]")
        if worst is not None:
            raise EnvelopeError(worst[1])

    def with_eps(self, eps: float) -> LatticeHMM:
        """Same randomness, different perturbation strength."""
        return LatticeHMM(self.graph, self.k, self.obs_k, self.q, self.theta, self.obs, eps, self.delta, self.kappa, self.init)

    def transition_matrix(self) -> np.ndarray:
        """Full ``|X| x |X|`` transition table (small models only)."""
        configs = self.space.configs()
        P = np.ones((configs.shape[0], configs.shape[0]))
        for v in range(self.n_vertices):
            pv = self.local_kernels[v][self.neighborhood_index(v, configs)]
            P *= pv[:, configs[:, v]]
        return P

    def observation_likelihood(self, y: Sequence[int]) -> np.ndarray:
        """``g(x, y)`` for every hidden configuration ``x`` (small models only)."""
        configs = self.space.configs()
        out = np.ones(configs.shape[0])
        for v, yv in enumerate(y):
            out *= self.likelihood(v, int(yv))[configs[:, v]]
        return out


def _normalized_density_rows(rng, rows: int, k: int, bound: float) -> np.ndarray:
    """Probability rows whose densities ``k * p`` lie in ``[bound, 1/bound]``."""
    half = 0.5 * np.log(1.0 / bound)
    w = np.exp(rng.uniform(-half, half, (rows, k)))
    return w / w.sum(axis=1, keepdims=True)


def build_grid_model(shape, r: int = 1, eps: float = 0.9, delta_floor: float = 0.5, kappa: float = 0.5,
                     seed: int = 0, k: int = 2, obs_k: int = 2, periodic: bool = True, init=None) -> LatticeHMM:
    """Random lattice HMM satisfying the (eps, delta, kappa) envelopes entrywise."""
    if not 0 < eps <= 1 or not 0 < delta_floor <= 1 or not 0 < kappa <= 1:
        raise EnvelopeError("eps, delta and kappa must lie in (0, 1]")
    graph = LatticeGraph(tuple(shape) if np.ndim(shape) else (int(shape),), r, periodic)
    rng = np.random.default_rng(seed)
    q, theta, obs = [], [], []
    for v in range(graph.n_vertices):
        nb = len(graph.neighborhoods[v])
        q.append(_normalized_density_rows(rng, k, k, delta_floor))
        theta.append(rng.uniform(-1.0, 1.0, (k**nb, k)))
        obs.append(_normalized_density_rows(rng, k, obs_k, kappa))
    model = LatticeHMM(graph, k, obs_k, q, theta, obs, eps, delta_floor, kappa, init)
    model.verify_envelopes()
    return model


@dataclass
class Trajectory:
    x: np.ndarray  # (n + 1, V)
    y: np.ndarray  # (n, V); y[t - 1] is the observation at time t


def step(model: LatticeHMM, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Advance configurations ``x`` (shape ``(..., V)``) one step using uniforms ``u``."""
    out = np.empty_like(x)
    for v in range(model.n_vertices):
        rows = model.local_kernels[v][model.neighborhood_index(v, x)]
        out[..., v] = categorical(rows, u[..., v])
    return out


def observe(model: LatticeHMM, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for v in range(model.n_vertices):
        out[..., v] = categorical(model.obs[v][x[..., v]], u[..., v])
    return out


def simulate(model: LatticeHMM, n: int, seed: int) -> Trajectory:
    """Sample ``X_0..X_n`` from the point mass at ``model.init`` and ``Y_1..Y_n``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    V = model.n_vertices
    xs = np.zeros((n + 1, V), dtype=np.int64)
    ys = np.zeros((n, V), dtype=np.int64)
    xs[0] = model.init
    for t in range(1, n + 1):
        xs[t] = step(model, xs[t - 1], stream(seed, HIDDEN, t).random(V))
        ys[t - 1] = observe(model, xs[t], stream(seed, OBSERVE, t).random(V))
    return Trajectory(xs, ys)


# ---------------------------------------------------------------- partitions


@dataclass(frozen=True)
class Partition:
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(v) for v in K)) for K in self.blocks)
        object.__setattr__(self, "blocks", blocks)

    def validate(self, n_vertices: int) -> None:
        flat = [v for K in self.blocks for v in K]
        if any(not K for K in self.blocks):
            raise ValueError("blocks must be nonempty")
        if sorted(flat) != list(range(n_vertices)):
            raise ValueError("blocks must partition the vertex set")

    def block_of(self, v: int) -> int:
        for b, K in enumerate(self.blocks):
            if v in K:
                return b
        raise KeyError(v)

    @classmethod
    def contiguous(cls, n_vertices: int, size: int) -> Partition:
        return cls(tuple(tuple(range(s, min(s + size, n_vertices))) for s in range(0, n_vertices, size)))

    @classmethod
    def single(cls, n_vertices: int) -> Partition:
        return cls((tuple(range(n_vertices)),))


@dataclass
class Geometry:
    block_max: int
    Delta: int
    Delta_K: int
    boundaries: list[tuple[int, ...]]
    dist_to_boundary: np.ndarray  # per vertex; inf when its block has empty boundary


def geometry(partition: Partition, graph: LatticeGraph) -> Geometry:
    partition.validate(graph.n_vertices)
    nbhd = graph.neighborhoods
    boundaries = [tuple(v for v in K if not set(nbhd[v]) <= set(K)) for K in partition.blocks]
    dist = np.full(graph.n_vertices, np.inf)
    for K, dK in zip(partition.blocks, boundaries):
        if dK:
            for v in K:
                dist[v] = graph.set_distance([v], dK)
    Delta_K = max(
        sum(graph.set_distance(K, L) <= graph.r for L in partition.blocks) for K in partition.blocks
    )
    return Geometry(
        block_max=max(len(K) for K in partition.blocks),
        Delta=max(len(N) for N in nbhd),
        Delta_K=int(Delta_K),
        boundaries=boundaries,
        dist_to_boundary=dist,
    )
