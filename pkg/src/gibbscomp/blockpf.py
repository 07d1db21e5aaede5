"""Exact filter, block filter, block particle filter and their error experiments.

Three filter representations are used:

* ``JointState``: exact table over all hidden configurations (oracle mode);
* ``BlockState``: one exact table per block, the measure being their product;
* ``ParticleState``: ``N`` particles with one weight vector per block; block
  ``K`` of the measure is the weighted empirical law of the ``K`` columns.
"""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .core import StateSpace, encode
from .hmm import LatticeHMM, Partition, Trajectory, geometry, simulate
from .oracle import ExactMeasure, check_guard, marginal
from .streams import PROPAGATE, RESAMPLE, categorical, categorical_shared, stream

TNORM_MAX_ATOMS = 2**12
BLOCK_GUARD = 2**24
CSV_COLUMNS = ("experiment_id", "n", "block_size", "site", "dist_to_boundary", "N", "replicates", "error", "stderr")


class RepresentationError(TypeError):
    """Operator applied to a filter state it does not support."""


# ---------------------------------------------------------------- states


@dataclass
class JointState:
    probs: np.ndarray
    n: int = 0


@dataclass
class BlockState:
    partition: Partition
    tables: list[np.ndarray]
    n: int = 0


@dataclass
class ParticleState:
    partition: Partition
    particles: np.ndarray  # (N, V)
    weights: np.ndarray  # (n_blocks, N), rows normalized
    n: int = 0

    @property
    def N(self) -> int:
        return self.particles.shape[0]


def initial_joint(model: LatticeHMM) -> JointState:
    check_guard(model.space.size)
    p = np.zeros(model.space.size)
    p[model.space.index(model.init)] = 1.0
    return JointState(p)


def initial_blocks(model: LatticeHMM, partition: Partition) -> BlockState:
    partition.validate(model.n_vertices)
    tables = []
    for K in partition.blocks:
        t = np.zeros(model.k ** len(K))
        t[encode(np.array([model.init[v] for v in K]), [model.k] * len(K))] = 1.0
        tables.append(t)
    return BlockState(partition, tables)


def initial_particles(model: LatticeHMM, partition: Partition, N: int) -> ParticleState:
    if N < 1:
        raise ValueError("N must be >= 1")
    partition.validate(model.n_vertices)
    parts = np.tile(np.asarray(model.init, dtype=np.int64), (N, 1))
    w = np.full((len(partition.blocks), N), 1.0 / N)
    return ParticleState(partition, parts, w)


# ---------------------------------------------------------------- operators


def predict(state, model: LatticeHMM):
    """Apply the transition kernel.  Particles are advanced individually (weights kept)."""
    if isinstance(state, JointState):
        return JointState(state.probs @ model.transition_matrix(), state.n + 1)
    if isinstance(state, BlockState):
        joint = _product_table(model, state)
        return JointState(joint @ model.transition_matrix(), state.n + 1)
    raise RepresentationError("predict on particles needs random numbers; use propagate()")


def propagate(model: LatticeHMM, particles: np.ndarray, vertices: Sequence[int], u: np.ndarray) -> np.ndarray:
    """Draw new values at ``vertices`` for each particle row given uniforms ``u`` (N, |vertices|)."""
    out = np.empty((particles.shape[0], len(vertices)), dtype=np.int64)
    for c, v in enumerate(vertices):
        rows = model.local_kernels[v][model.neighborhood_index(v, particles)]
        out[:, c] = categorical(rows, u[:, c])
    return out


def _block_loglik(model: LatticeHMM, K: Sequence[int], values: np.ndarray, y) -> np.ndarray:
    lik = np.ones(values.shape[0])
    for c, v in enumerate(K):
        lik = lik * model.likelihood(v, int(y[v]))[values[:, c]]
    return lik


def _block_configs(model: LatticeHMM, K) -> np.ndarray:
    return StateSpace((model.k,) * len(K)).configs()


def correct(state, model: LatticeHMM, y):
    """Bayes reweighting by the observation likelihood."""
    y = np.asarray(y)
    if isinstance(state, JointState):
        w = state.probs * model.observation_likelihood(y)
        return JointState(_normalize(w), state.n)
    if isinstance(state, BlockState):
        tables = [_normalize(t * _block_loglik(model, K, _block_configs(model, K), y))
                  for K, t in zip(state.partition.blocks, state.tables)]
        return BlockState(state.partition, tables, state.n)
    if isinstance(state, ParticleState):
        w = np.empty_like(state.weights)
        for b, K in enumerate(state.partition.blocks):
            w[b] = _normalize(state.weights[b] * _block_loglik(model, K, state.particles[:, list(K)], y))
        return ParticleState(state.partition, state.particles, w, state.n)
    raise RepresentationError(type(state).__name__)


def _normalize(w: np.ndarray) -> np.ndarray:
    s = w.sum()
    if not s > 0:
        raise ZeroDivisionError("observation has zero likelihood under the state")
    return w / s


def block(state, model: LatticeHMM, partition: Partition):
    """Replace the measure by the product of its block marginals."""
    partition.validate(model.n_vertices)
    if isinstance(state, JointState):
        mu = ExactMeasure(model.space, state.probs)
        return BlockState(partition, [marginal(mu, K) for K in partition.blocks], state.n)
    if isinstance(state, BlockState):
        if state.partition == partition:
            return state
        return block(JointState(_product_table(model, state), state.n), model, partition)
    if isinstance(state, ParticleState):
        if state.partition == partition:
            return state
        if len(state.partition.blocks) != 1:
            raise RepresentationError("re-blocking a blocked ensemble is not supported")
        w = np.tile(state.weights[0], (len(partition.blocks), 1))
        return ParticleState(partition, state.particles, w, state.n)
    raise RepresentationError(type(state).__name__)


def sample(state, model: LatticeHMM, N: int, seed: int, replicate: int = 0):
    """Empirical measure of ``N`` independent draws (per block for blocked states)."""
    if isinstance(state, JointState):
        u = stream(seed, replicate, state.n, 0, RESAMPLE).random(N)
        idx = categorical_shared(state.probs, u)
        parts = model.space.configs()[idx]
        return ParticleState(Partition.single(model.n_vertices), parts, np.full((1, N), 1.0 / N), state.n)
    if isinstance(state, BlockState):
        parts = np.zeros((N, model.n_vertices), dtype=np.int64)
        for b, (K, t) in enumerate(zip(state.partition.blocks, state.tables)):
            u = stream(seed, replicate, state.n, b, RESAMPLE).random(N)
            parts[:, list(K)] = _block_configs(model, K)[categorical_shared(t, u)]
        w = np.full((len(state.partition.blocks), N), 1.0 / N)
        return ParticleState(state.partition, parts, w, state.n)
    if isinstance(state, ParticleState):
        parts = np.zeros((N, model.n_vertices), dtype=np.int64)
        for b, K in enumerate(state.partition.blocks):
            u = stream(seed, replicate, state.n, b, RESAMPLE).random(N)
            anc = categorical_shared(state.weights[b], u)
            parts[:, list(K)] = state.particles[anc][:, list(K)]
        w = np.full((len(state.partition.blocks), N), 1.0 / N)
        return ParticleState(state.partition, parts, w, state.n)
    raise RepresentationError(type(state).__name__)


# ---------------------------------------------------------------- marginals


def _product_table(model: LatticeHMM, state: BlockState) -> np.ndarray:
    check_guard(model.space.size)
    return marginal_on(state, model, tuple(range(model.n_vertices)))


def _combine(parts: list[tuple[tuple[int, ...], np.ndarray]], J: tuple[int, ...], k: int) -> np.ndarray:
    """Product of independent pieces, laid out over sorted ``J`` (first site fastest)."""
    t = np.ones((k,) * len(J))
    for sites, dist in parts:
        shape = [1] * len(J)
        piece = dist.reshape((k,) * len(sites), order="F")
        for s in sites:
            shape[J.index(s)] = k
        # sites are sorted, so their axes keep the same relative order
        t = t * piece.reshape(shape)
    return t.ravel(order="F")


def marginal_on(state, model: LatticeHMM, J: Sequence[int]) -> np.ndarray:
    """Marginal table of the filter state over sorted sites ``J``."""
    J = tuple(sorted(int(v) for v in J))
    k = model.k
    if isinstance(state, JointState):
        return marginal(ExactMeasure(model.space, state.probs), J)
    parts = []
    for b, K in enumerate(state.partition.blocks):
        sites = tuple(v for v in J if v in K)
        if not sites:
            continue
        pos = [K.index(v) for v in sites]
        if isinstance(state, BlockState):
            t = state.tables[b].reshape((k,) * len(K), order="F")
            other = tuple(a for a in range(len(K)) if a not in pos)
            dist = t.sum(axis=other).ravel(order="F") if other else t.ravel(order="F")
        elif isinstance(state, ParticleState):
            idx = encode(state.particles[:, list(sites)], [k] * len(sites))
            dist = np.bincount(idx, weights=state.weights[b], minlength=k ** len(sites))
        else:
            raise RepresentationError(type(state).__name__)
        parts.append((sites, dist))
    return _combine(parts, J, k)


def local_tv(p: np.ndarray, q: np.ndarray) -> float:
    """sup over |f| <= 1 of |p f - q f|, i.e. the L1 distance."""
    return float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# ---------------------------------------------------------------- filters


def exact_filter(model: LatticeHMM, ys) -> JointState:
    """Exact filter by alternating prediction and Bayes correction."""
    check_guard(model.space.size)
    P = model.transition_matrix()
    state = initial_joint(model)
    for t, y in enumerate(ys, start=1):
        w = (state.probs @ P) * model.observation_likelihood(y)
        state = JointState(_normalize(w), t)
    return state


def path_space_filter(model: LatticeHMM, ys) -> np.ndarray:
    """Brute-force conditional law of ``X_n`` given ``Y_1..Y_n`` over all hidden paths."""
    n = len(ys)
    S = model.space.size
    check_guard(S ** max(n, 1))
    P = model.transition_matrix()
    liks = [model.observation_likelihood(y) for y in ys]
    out = np.zeros(S)
    x0 = model.space.index(model.init)
    if n == 0:
        out[x0] = 1.0
        return out
    for path in itertools.product(range(S), repeat=n):
        w = 1.0
        prev = x0
        for t, x in enumerate(path):
            w *= P[prev, x] * liks[t][x]
            if w == 0.0:
                break
            prev = x
        out[path[-1]] += w
    return out / out.sum()


def _neighbourhood_sites(model: LatticeHMM, K) -> tuple[int, ...]:
    return tuple(sorted({u for v in K for u in model.graph.neighborhoods[v]}))


def _block_transition(model: LatticeHMM, K, NK) -> np.ndarray:
    """``T[c, z]``: law of ``X^K`` at the next step given configuration ``c`` of ``N(K)``."""
    k = model.k
    n_c, n_z = k ** len(NK), k ** len(K)
    check_guard(n_c * n_z, BLOCK_GUARD)
    cfg = StateSpace((k,) * len(NK)).configs()
    full = np.zeros((n_c, model.n_vertices), dtype=np.int64)
    full[:, list(NK)] = cfg
    z = _block_configs(model, K)
    T = np.ones((n_c, n_z))
    for c, v in enumerate(K):
        rows = model.local_kernels[v][model.neighborhood_index(v, full)]
        T *= rows[:, z[:, c]]
    return T


def block_filter(model: LatticeHMM, partition: Partition, ys) -> BlockState:
    """Exact block filter: correct, block and predict, all as exact per-block tables."""
    state = initial_blocks(model, partition)
    plan = []
    for K in partition.blocks:
        NK = _neighbourhood_sites(model, K)
        plan.append((K, NK, _block_transition(model, K, NK), _block_configs(model, K)))
    for t, y in enumerate(ys, start=1):
        tables = []
        for K, NK, T, zc in plan:
            prior = marginal_on(state, model, NK) @ T
            tables.append(_normalize(prior * _block_loglik(model, K, zc, y)))
        state = BlockState(partition, tables, t)
    return state


def block_particle_filter(model: LatticeHMM, partition: Partition, ys, N: int, seed: int, replicate: int = 0) -> ParticleState:
    """Block particle filter ``C B S^N P``.

    For block ``K`` each of the ``N`` new particles draws an ancestor index
    independently in every block (the blocked measure is a product), reads
    its neighbourhood from those ancestors and propagates the ``K`` sites.
    Random streams are keyed by ``(replicate, time, block, role)``.
    """
    state = initial_particles(model, partition, N)
    B = len(partition.blocks)
    for t, y in enumerate(ys, start=1):
        new = np.zeros_like(state.particles)
        for b, K in enumerate(partition.blocks):
            u = stream(seed, replicate, t, b, RESAMPLE).random((B, N))
            src = np.empty_like(state.particles)
            for b2, K2 in enumerate(partition.blocks):
                anc = categorical_shared(state.weights[b2], u[b2])
                src[:, list(K2)] = state.particles[anc][:, list(K2)]
            uu = stream(seed, replicate, t, b, PROPAGATE).random((N, len(K)))
            new[:, list(K)] = propagate(model, src, K, uu)
        w = np.empty((B, N))
        for b, K in enumerate(partition.blocks):
            w[b] = _normalize(_block_loglik(model, K, new[:, list(K)], y))
        state = ParticleState(partition, new, w, t)
    return state


def bootstrap_particle_filter(model: LatticeHMM, ys, N: int, seed: int, replicate: int = 0) -> ParticleState:
    """Classical bootstrap filter (multinomial resampling every step)."""
    V = model.n_vertices
    parts = np.tile(np.asarray(model.init, dtype=np.int64), (N, 1))
    w = np.full(N, 1.0 / N)
    sites = tuple(range(V))
    for t, y in enumerate(ys, start=1):
        u = stream(seed, replicate, t, 0, RESAMPLE).random((1, N))[0]
        anc = categorical_shared(w, u)
        uu = stream(seed, replicate, t, 0, PROPAGATE).random((N, V))
        parts = propagate(model, parts[anc], sites, uu)
        w = _normalize(_block_loglik(model, sites, parts, y))
    return ParticleState(Partition.single(V), parts, w[None, :], len(ys))


# ---------------------------------------------------------------- error norms


def tnorm_estimate(reference, runs: Sequence, model: LatticeHMM, J: Sequence[int]) -> tuple[float, float]:
    """Estimate ``sup_{|f|<=1, f J-local} E[(pi f - pi' f)^2]^{1/2}`` over replicate runs.

    ``reference`` is one state (shared) or one state per run.  The supremum
    of the convex map ``f -> E[(d.f)^2]`` is attained at sign vectors, which
    are enumerated exhaustively.  Returns ``(estimate, stderr)`` with a
    delta-method standard error.
    """
    if len(runs) < 2:
        raise ValueError("need at least two replicate runs")
    refs = reference if isinstance(reference, (list, tuple)) else [reference] * len(runs)
    if len(refs) != len(runs):
        raise ValueError("need one reference per run")
    d = np.array([marginal_on(a, model, J) - marginal_on(r, model, J) for r, a in zip(refs, runs)])
    return tnorm_from_differences(d)


def tnorm_from_differences(d: np.ndarray) -> tuple[float, float]:
    d = np.asarray(d, dtype=float)
    m = d.shape[1]
    if m > TNORM_MAX_ATOMS:
        raise ValueError(f"|X^J| = {m} exceeds {TNORM_MAX_ATOMS}")
    best_sq, best_s = -1.0, None
    # fix the first sign (f and -f give the same value)
    for bits in range(2 ** max(m - 1, 0)):
        s = np.ones(m)
        for i in range(1, m):
            if bits >> (i - 1) & 1:
                s[i] = -1.0
        val = np.mean((d @ s) ** 2)
        if val > best_sq:
            best_sq, best_s = val, s
    sq = (d @ best_s) ** 2
    est = float(np.sqrt(best_sq))
    se_sq = float(sq.std(ddof=1) / np.sqrt(len(sq)))
    stderr = se_sq / (2 * est) if est > 0 else 0.0
    return est, stderr


# ---------------------------------------------------------------- experiments


@dataclass
class ErrorCurve:
    rows: list[dict] = field(default_factory=list)
    raw: list[tuple] = field(default_factory=list)  # (site, dist, error) or (N, replicate, error)
    summary: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def bias_experiment(model: LatticeHMM, partition: Partition, n: int, obs_seeds: Sequence[int],
                    experiment_id: str = "bias", threads: int = 1) -> ErrorCurve:
    """Per-site localization error ``||pi_n - pi~_n||_{v}`` averaged over observation sequences."""
    geo = geometry(partition, model.graph)
    V = model.n_vertices

    def one(seed):
        traj = simulate(model, n, seed)
        pi = exact_filter(model, traj.y)
        pit = block_filter(model, partition, traj.y)
        return [local_tv(marginal_on(pi, model, (v,)), marginal_on(pit, model, (v,))) for v in range(V)]

    errs = np.array(_pool_map(one, list(obs_seeds), threads))
    curve = ErrorCurve()
    for v in range(V):
        e = errs[:, v]
        curve.rows.append({
            "experiment_id": experiment_id, "n": n, "block_size": len(partition.blocks[partition.block_of(v)]),
            "site": v, "dist_to_boundary": float(geo.dist_to_boundary[v]), "N": 0, "replicates": len(e),
            "error": float(e.mean()), "stderr": float(e.std(ddof=1) / np.sqrt(len(e))) if len(e) > 1 else 0.0,
        })
        curve.raw.extend((v, float(geo.dist_to_boundary[v]), float(x)) for x in e)
    pts = np.array([(d, x) for _, d, x in curve.raw if np.isfinite(d)])
    if len(pts) > 2 and np.ptp(pts[:, 0]) > 0 and np.ptp(pts[:, 1]) > 0:
        res = stats.spearmanr(pts[:, 0], pts[:, 1])
        curve.summary.update(spearman=float(res.statistic), spearman_p=float(res.pvalue))
    return curve


def variance_experiment(model: LatticeHMM, partition: Partition, n: int, N_list: Sequence[int], seeds: int,
                        obs_seed: int = 0, J: Sequence[int] = (0,), experiment_id: str = "variance",
                        threads: int = 1) -> ErrorCurve:
    """Sampling error ``|||pi~_n - pi^_n|||_J`` against ``N`` for a fixed observation record."""
    geo = geometry(partition, model.graph)
    traj = simulate(model, n, obs_seed)
    ref = block_filter(model, partition, traj.y)
    J = tuple(sorted(J))
    ref_m = marginal_on(ref, model, J)
    jobs = [(N, rep) for N in N_list for rep in range(seeds)]

    def one(job):
        N, rep = job
        st = block_particle_filter(model, partition, traj.y, N, obs_seed, replicate=rep)
        return marginal_on(st, model, J) - ref_m

    diffs = _pool_map(one, jobs, threads)
    curve = ErrorCurve()
    b = partition.block_of(J[0])
    for i, N in enumerate(N_list):
        d = np.array(diffs[i * seeds:(i + 1) * seeds])
        est, se = tnorm_from_differences(d)
        curve.rows.append({
            "experiment_id": experiment_id, "n": n, "block_size": len(partition.blocks[b]),
            "site": " ".join(map(str, J)), "dist_to_boundary": float(min(geo.dist_to_boundary[v] for v in J)),
            "N": int(N), "replicates": seeds, "error": est, "stderr": se,
        })
    errs = np.array([r["error"] for r in curve.rows])
    if len(N_list) > 1 and (errs > 0).all():
        curve.summary["slope"] = float(np.polyfit(np.log(N_list), np.log(errs), 1)[0])
    return curve


# ---------------------------------------------------------------- feasibility


def _constant(q, beta, eps, delta, Delta, first_exponent):
    mix = 1 - eps ** (2 * (Delta + 1))
    floor = 1 - eps**2 * delta**2
    with np.errstate(over="ignore", invalid="ignore"):
        first = np.where(mix == 0, 0.0, 3 * q * Delta**2 * np.exp(first_exponent) * mix)
        third = np.where(floor == 0, 0.0, np.exp(beta * q) * floor**q)
        return first + np.exp(beta) * floor + third


def bias_constant(q, beta, eps, delta, r, Delta):
    """Contraction constant of the bias theorem (first exponent ``beta * (q + 2r)``)."""
    return _constant(q, beta, eps, delta, Delta, beta * (q + 2 * r))


def variance_constant(q, beta, eps, delta, r, Delta):
    """Same constant with the variance theorem's first exponent ``beta * q``."""
    return _constant(q, beta, eps, delta, Delta, beta * q)


@dataclass
class Feasibility:
    feasible: bool
    q: int | None
    beta: float | None
    c: float
    c_variance: float | None
    regime: str | None
    rate_exponent: float | None
    grid: dict


BETA_GRID = np.geomspace(1e-4, 10.0, 401)
Q_MAX = 200


def feasibility_search(eps: float, delta: float, r: int, Delta: int, Delta_K: int | None = None,
                       q_max: int = Q_MAX, betas: np.ndarray = BETA_GRID) -> Feasibility:
    """Grid search for ``(q, beta)`` minimizing the bias constant subject to ``c < 1``.

    When ``Delta_K`` is given, the variance regime is classified by
    ``exp(-beta) * Delta_K`` against 1 and the resulting ``N`` exponent is
    reported.
    """
    qs = np.arange(1, q_max + 1)[:, None]
    B = np.asarray(betas)[None, :]
    c = bias_constant(qs, B, eps, delta, r, Delta)
    i, j = np.unravel_index(np.argmin(c), c.shape)
    best = float(c[i, j])
    grid = {"q_max": q_max, "beta_min": float(B.min()), "beta_max": float(B.max()), "beta_points": int(B.size)}
    if not best < 1:
        return Feasibility(False, None, None, best, None, None, None, grid)
    q, beta = int(qs[i, 0]), float(B[0, j])
    cv = float(variance_constant(q, beta, eps, delta, r, Delta))
    regime = exponent = None
    if Delta_K is not None:
        x = np.exp(-beta) * Delta_K
        if np.isclose(x, 1.0, rtol=0, atol=1e-12):
            regime, exponent = "critical", 0.5
        elif x < 1:
            regime, exponent = "subcritical", 0.5
        else:
            regime, exponent = "supercritical", float(beta / (2 * np.log(Delta_K)))
    return Feasibility(True, q, beta, best, cv, regime, exponent, grid)
