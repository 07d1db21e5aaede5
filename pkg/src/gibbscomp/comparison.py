"""Coupled update rules, comparison bounds and uniqueness certificates.

The bound compared against exact inference is

    |rho f - rho~ f| <= sum_ij delta_i(f) D_ij a_j / W_jj,   D = sum_k (W^-1 R)^k,

built from a cover with positive weights, per-region conditional kernels of
both measures, and couplings between kernel rows.  All couplings here are
the greedy TV-maximal ones ("tv-greedy"): exact Wasserstein minimizers for the
trivial metric, and still valid (possibly loose) couplings for table metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import (
    LocalFunction,
    SiteMetric,
    StateSpace,
    check_region,
    complement,
    oscillations,
    region_index,
    site_metrics,
    table_oscillations,
)
from .couplings import Coupling, tv_optimal_coupling
from .matrices import NeumannResult, mat_pow, neumann_sum, norm_1, norm_inf, spectral_radius, weighted_norm_1
from .oracle import ConditionalKernel, ExactMeasure, check_guard, conditional_kernel, marginal, verify_invariance

PAIR_GUARD = 2**22
POWER_SEARCH_MAX = 64
INVARIANCE_TOL = 1e-10
COUPLING_KIND = "tv-greedy"


class CertificationError(RuntimeError):
    """A bound was requested but no convergence condition holds."""


# ---------------------------------------------------------------- covers


@dataclass
class Cover:
    regions: list[tuple[int, ...]]
    weights: np.ndarray = None

    def __post_init__(self):
        self.regions = [tuple(sorted(int(i) for i in J)) for J in self.regions]
        if self.weights is None:
            self.weights = np.ones(len(self.regions))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.weights.size == 1 and len(self.regions) > 1:
            self.weights = np.full(len(self.regions), float(self.weights[0]))
        if self.weights.size != len(self.regions):
            raise ValueError("one weight per region required")
        if not (self.weights > 0).all():
            raise ValueError("cover weights must be strictly positive")

    def validate(self, space: StateSpace) -> None:
        covered = set()
        for J in self.regions:
            if not J:
                raise ValueError("cover regions must be nonempty")
            check_region(space, J)
            covered.update(J)
        missing = set(range(space.n_sites)) - covered
        if missing:
            raise ValueError(f"sites {sorted(missing)} are not covered")

    def diag(self, n_sites: int, weights=None) -> np.ndarray:
        w = self.weights if weights is None else np.asarray(weights, dtype=float)
        d = np.zeros(n_sites)
        for J, wJ in zip(self.regions, w):
            d[list(J)] += wJ
        return d


def singleton_cover(n_sites: int) -> Cover:
    return Cover([(i,) for i in range(n_sites)])


def edge_cover(edges, n_sites: int) -> Cover:
    """One region per edge, plus singletons for sites on no edge."""
    regions = [tuple(sorted(e)) for e in edges]
    seen = {i for e in regions for i in e}
    regions += [(i,) for i in range(n_sites) if i not in seen]
    return Cover(regions)


def horizontal_pair_cover(rows: int, cols: int) -> Cover:
    """Horizontally adjacent pairs of a ``rows x cols`` grid (site ``r * cols + c``)."""
    if cols < 2:
        return singleton_cover(rows * cols)
    regions = [(r * cols + c, r * cols + c + 1) for r in range(rows) for c in range(cols - 1)]
    return Cover(regions)


def temporal_cover(space: StateSpace, q: int) -> Cover:
    """Blocks ``{(l-1)q+1, ..., lq} x {v}`` for sites labelled ``(time, vertex)``."""
    if space.labels is None:
        raise ValueError("temporal cover needs (time, vertex) site labels")
    if q < 1:
        raise ValueError("block length must be >= 1")
    times = sorted({t for t, _ in space.labels})
    t0 = times[0]
    groups: dict = {}
    for i, (t, v) in enumerate(space.labels):
        groups.setdefault((v, (t - t0) // q), []).append(i)
    return Cover([tuple(g) for _, g in sorted(groups.items())])


def site_times(space: StateSpace) -> np.ndarray:
    if space.labels is None:
        raise ValueError("space has no (time, vertex) labels")
    return np.array([t for t, _ in space.labels])


# ---------------------------------------------------------------- rules


def _tv_metric_integrals(r1: np.ndarray, r2: np.ndarray, cards: Sequence[int], etas: Sequence[np.ndarray]) -> np.ndarray:
    """Metric integrals at every region position for greedy TV couplings of row pairs.

    ``r1``, ``r2`` have shape ``(P, n_J)``; returns ``(P, len(cards))``.
    """
    common = np.minimum(r1, r2)
    a = r1 - common
    b = r2 - common
    t = a.sum(axis=1)
    P = r1.shape[0]
    m = len(cards)
    shape = (P,) + tuple(reversed(cards))
    a = a.reshape(shape)
    b = b.reshape(shape)
    out = np.zeros((P, m))
    for pos in range(m):
        ax = 1 + (m - 1 - pos)
        others = tuple(x for x in range(1, m + 1) if x != ax)
        A = a.sum(axis=others) if others else a
        B = b.sum(axis=others) if others else b
        out[:, pos] = np.einsum("ps,st,pt->p", A, etas[pos], B)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(t[:, None] > 0, out / np.where(t > 0, t, 1.0)[:, None], 0.0)
    return out


@dataclass
class CoupledUpdateRule:
    """Per-region kernels for two measures, with greedy TV couplings between rows.

    ``tau`` is set for one-sided rules; each region then conditions only on
    sites with ``tau <= tau(J)``.
    """

    rho: ExactMeasure
    rho_tilde: ExactMeasure
    cover: Cover
    metrics: list[SiteMetric]
    gamma: list[ConditionalKernel] = field(repr=False)
    gamma_tilde: list[ConditionalKernel] = field(repr=False)
    tau: np.ndarray | None = None
    coupling: str = COUPLING_KIND

    @property
    def space(self) -> StateSpace:
        return self.rho.space

    @property
    def flags(self) -> dict:
        return {
            "zero_mass_rows_rho": int(sum(g.flagged for g in self.gamma)),
            "zero_mass_rows_rho_tilde": int(sum(g.flagged for g in self.gamma_tilde)),
        }

    @cached_property
    def _configs(self) -> np.ndarray:
        return self.space.configs()

    @cached_property
    def rows(self) -> list[np.ndarray]:
        return [g.rows(self._configs) for g in self.gamma]

    @cached_property
    def rows_tilde(self) -> list[np.ndarray]:
        return [g.rows(self._configs) for g in self.gamma_tilde]

    def region_cards(self, r: int) -> tuple[int, ...]:
        return tuple(self.space.cards[i] for i in self.cover.regions[r])

    def region_etas(self, r: int) -> list[np.ndarray]:
        return [self.metrics[i].matrix(self.space.cards[i]) for i in self.cover.regions[r]]

    def Q(self, r: int, x: int, z: int) -> Coupling:
        """Coupling of ``gamma^J_x`` and ``gamma^J_z`` (configuration indices)."""
        return tv_optimal_coupling(self.rows[r][x], self.rows[r][z], self.region_cards(r))

    def Q_hat(self, r: int, x: int) -> Coupling:
        """Coupling of ``gamma^J_x`` and ``gamma~^J_x``."""
        return tv_optimal_coupling(self.rows[r][x], self.rows_tilde[r][x], self.region_cards(r))

    def invariance_deviation(self) -> float:
        """Max deviation of each measure from its one-step update (should be ~0)."""
        dev = 0.0
        for gam, gam_t in zip(self.gamma, self.gamma_tilde):
            if self.tau is None:
                dev = max(dev, verify_invariance(self.rho, gam), verify_invariance(self.rho_tilde, gam_t))
            else:
                dev = max(dev, _oneside_deviation(self.rho, gam), _oneside_deviation(self.rho_tilde, gam_t))
        return dev


def _oneside_deviation(mu: ExactMeasure, gamma: ConditionalKernel) -> float:
    keep = tuple(sorted(gamma.region + gamma.context))
    sub = mu.space.sub(keep)
    restricted = ExactMeasure(sub, marginal(mu, keep))
    pos = {s: k for k, s in enumerate(keep)}
    local = conditional_kernel(
        restricted,
        [pos[i] for i in gamma.region],
        [pos[i] for i in gamma.context],
    )
    local.table = gamma.table
    return verify_invariance(restricted, local)


def build_rule(rho: ExactMeasure, rho_tilde: ExactMeasure, cover: Cover, metric=None) -> CoupledUpdateRule:
    """Two-sided rule: kernels are exact conditionals given everything outside the region."""
    if rho.space.cards != rho_tilde.space.cards:
        raise ValueError("measures live on different spaces")
    check_guard(rho.space.size)
    cover.validate(rho.space)
    metrics = site_metrics(rho.space, metric)
    gamma = [conditional_kernel(rho, J) for J in cover.regions]
    gamma_t = [conditional_kernel(rho_tilde, J) for J in cover.regions]
    return CoupledUpdateRule(rho, rho_tilde, cover, metrics, gamma, gamma_t)


def build_oneside_rule(rho: ExactMeasure, rho_tilde: ExactMeasure, cover: Cover, tau, metric=None) -> CoupledUpdateRule:
    """One-sided rule: each region conditions on the other sites with ``tau <= tau(J)``."""
    if rho.space.cards != rho_tilde.space.cards:
        raise ValueError("measures live on different spaces")
    check_guard(rho.space.size)
    cover.validate(rho.space)
    tau = np.asarray(tau, dtype=np.int64)
    if tau.shape != (rho.space.n_sites,):
        raise ValueError("one time index per site required")
    metrics = site_metrics(rho.space, metric)
    gamma, gamma_t = [], []
    for J in cover.regions:
        tJ = tau[list(J)]
        if tJ.min() != tJ.max():
            raise ValueError(f"region {J} spans several time indices")
        ctx = tuple(i for i in complement(rho.space, J) if tau[i] <= tJ[0])
        gamma.append(conditional_kernel(rho, J, ctx))
        gamma_t.append(conditional_kernel(rho_tilde, J, ctx))
    return CoupledUpdateRule(rho, rho_tilde, cover, metrics, gamma, gamma_t, tau=tau)


# ---------------------------------------------------------------- matrices


def build_W(cover: Cover, n_sites: int, weights=None) -> np.ndarray:
    return np.diag(cover.diag(n_sites, weights))


def build_R(rule: CoupledUpdateRule, weights=None) -> np.ndarray:
    """Influence matrix: worst-case weighted coupling mismatch at i per unit change at j."""
    space = rule.space
    w = rule.cover.weights if weights is None else np.asarray(weights, dtype=float)
    n = space.n_sites
    configs = rule._configs
    R = np.zeros((n, n))
    for j in range(n):
        k = space.cards[j]
        if k == 1:
            continue
        eta_j = rule.metrics[j].matrix(k)
        active = [r for r, g in enumerate(rule.gamma) if j in g.context and w[r] > 0]
        if not active:
            continue
        for b in range(k):
            X = np.flatnonzero(configs[:, j] != b)
            if X.size * len(active) > PAIR_GUARD:
                check_guard(X.size * len(active), PAIR_GUARD)
            Z = X + (b - configs[X, j]) * int(space.strides[j])
            S = np.zeros((X.size, n))
            for r in active:
                J = list(rule.cover.regions[r])
                rows = rule.rows[r]
                S[:, J] += w[r] * _tv_metric_integrals(rows[X], rows[Z], rule.region_cards(r), rule.region_etas(r))
            S /= eta_j[configs[X, j], b][:, None]
            np.maximum(R[:, j], S.max(axis=0), out=R[:, j])
    if rule.tau is not None:
        R[rule.tau[None, :] > rule.tau[:, None]] = 0.0
    return R


def build_a(rule: CoupledUpdateRule, weights=None) -> np.ndarray:
    """Expected (under rho~) weighted mismatch between the two measures' kernels."""
    space = rule.space
    w = rule.cover.weights if weights is None else np.asarray(weights, dtype=float)
    a = np.zeros(space.n_sites)
    for r, J in enumerate(rule.cover.regions):
        M = _tv_metric_integrals(rule.rows[r], rule.rows_tilde[r], rule.region_cards(r), rule.region_etas(r))
        a[list(J)] += w[r] * (rule.rho_tilde.probs @ M)
    return a


# ---------------------------------------------------------------- certificates


@dataclass
class Certificate:
    condition: int
    passed: bool
    witness: dict = field(default_factory=dict)


def uniqueness_check(W, R, condition: int, pseudometric=None, metric_diameters=None) -> Certificate:
    """Evaluate one of the six alternative convergence conditions on finite ``W``, ``R``."""
    W = np.asarray(W, dtype=float)
    R = np.asarray(R, dtype=float)
    d = np.diag(W)
    if not (d > 0).all():
        raise ValueError("W must have a strictly positive diagonal")
    P = R / d[:, None]
    Pt = R / d[None, :]
    if condition == 1:
        res = neumann_sum(P)
        return Certificate(1, res.converged, {
            "neumann_terms": res.terms_used,
            "neumann_residual": res.residual,
            "spectral_radius": spectral_radius(P),
        })
    if condition in (2, 4):
        if not np.isfinite(R).all():
            return Certificate(condition, False, {"reason": "R has infinite entries"})
        base = P if condition == 2 else Pt
        norms = {"inf": norm_inf, "1": norm_1} if condition == 2 else {"inf": norm_inf}
        power = np.eye(base.shape[0])
        best = None
        for n in range(1, POWER_SEARCH_MAX + 1):
            power = power @ base
            for name, fn in norms.items():
                val = fn(power)
                if best is None or val < best[2]:
                    best = (n, name, val)
                if val < 1:
                    return Certificate(condition, True, {"n": n, "norm": name, "value": val, "search_cap": POWER_SEARCH_MAX})
        wit = {"search_cap": POWER_SEARCH_MAX}
        if best is not None:
            wit.update({"best_n": best[0], "best_norm": best[1], "best_value": best[2]})
        return Certificate(condition, False, wit)
    if condition == 3:
        val = norm_inf(P)
        return Certificate(3, val < 1, {"norm_inf_Winv_R": val})
    if condition == 5:
        val = norm_1(Pt)
        total = float(np.sum(metric_diameters)) if metric_diameters is not None else float(R.shape[0])
        return Certificate(5, bool(val < 1 and np.isfinite(total)), {"norm_1_R_Winv": val, "sum_metric_diameters": total})
    if condition == 6:
        if pseudometric is None:
            raise ValueError("condition 6 needs a pseudometric on the sites")
        m = np.asarray(pseudometric, dtype=float)
        val = norm_1(Pt)
        reach = float(m[R > 0].max()) if (R > 0).any() else 0.0
        wit = {"norm_1_R_Winv": val, "interaction_range": reach}
        passed = val < 1
        if passed:
            beta = 0.5 * (-np.log(val) / reach) if (reach > 0 and val > 0) else 1.0
            wit["beta"] = float(beta)
            wit["weighted_norm_1"] = weighted_norm_1(Pt, m, beta)
        return Certificate(6, bool(passed), wit)
    raise ValueError(f"unknown condition {condition}")


# ---------------------------------------------------------------- bounds


@dataclass
class BoundReport:
    W: np.ndarray
    R: np.ndarray
    a: np.ndarray
    D: NeumannResult
    delta_f: np.ndarray
    bound: float | None
    exact: float | None
    certified: bool
    certificate: Certificate
    flags: dict = field(default_factory=dict)

    def evaluate(self, delta_f) -> float | None:
        """Bound for another function, given its oscillation vector."""
        if not self.certified:
            return None
        return float(np.asarray(delta_f) @ self.D.sum @ (self.a / np.diag(self.W)))


def _exact_difference(rho: ExactMeasure, rho_tilde: ExactMeasure, f: LocalFunction) -> float:
    return abs(rho.expect(f) - rho_tilde.expect(f))


def _report(space, W, R, a, metrics, f, rho, rho_tilde, flags) -> BoundReport:
    d = np.diag(W)
    D = neumann_sum(R / d[:, None])
    cert = Certificate(1, D.converged, {"neumann_terms": D.terms_used, "neumann_residual": D.residual})
    delta = oscillations(space, f, metrics)
    bound = float(delta @ D.sum @ (a / d)) if D.converged else None
    exact = _exact_difference(rho, rho_tilde, f)
    return BoundReport(W, R, a, D, delta, bound, exact, D.converged, cert, flags)


def main_bound(rule: CoupledUpdateRule, f: LocalFunction, weights=None) -> BoundReport:
    """Comparison bound for ``|rho f - rho~ f|`` from a coupled update rule.

    Weights with ``max W_ii > 1`` are rescaled (the bound is scale-invariant);
    this is recorded in ``flags``.
    """
    space = rule.space
    f.validate(space)
    w = rule.cover.weights if weights is None else np.asarray(weights, dtype=float)
    flags = dict(rule.flags, coupling=rule.coupling, rescaled_by=1.0)
    top = rule.cover.diag(space.n_sites, w).max()
    if top > 1:
        w = w / top
        flags["rescaled_by"] = float(top)
    W = build_W(rule.cover, space.n_sites, w)
    R = build_R(rule, w)
    a = build_a(rule, w)
    return _report(space, W, R, a, rule.metrics, f, rule.rho, rule.rho_tilde, flags)


def oneside_bound(rule: CoupledUpdateRule, f: LocalFunction, weights=None) -> BoundReport:
    if rule.tau is None:
        raise ValueError("rule is not one-sided")
    return main_bound(rule, f, weights)


def _site_conditionals(mu: ExactMeasure, i: int) -> np.ndarray:
    """``out[x, s] = mu(x_i = s | x_rest)`` for every full configuration index ``x``."""
    space = mu.space
    t = mu.tensor()
    mass = t.sum(axis=i, keepdims=True)
    k = space.cards[i]
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(mass > 0, t / np.where(mass > 0, mass, 1.0), 1.0 / k)
    flat = cond.ravel(order="F")
    configs = space.configs()
    base = space.index(configs) - configs[:, i] * space.strides[i]
    return flat[base[:, None] + np.arange(k)[None, :] * space.strides[i]]


def classical_bound(rho: ExactMeasure, rho_tilde: ExactMeasure, f: LocalFunction, metric=None) -> BoundReport:
    """Single-site comparison bound with ``D = sum_k C^k`` (unit weights)."""
    space = rho.space
    check_guard(space.size)
    metrics = site_metrics(space, metric)
    n = space.n_sites
    configs = space.configs()
    conds = [_site_conditionals(rho, i) for i in range(n)]
    conds_t = [_site_conditionals(rho_tilde, i) for i in range(n)]

    def dist(i, p, q):
        return tv_optimal_coupling(p, q).metric_integral(0, metrics[i].matrix(space.cards[i]))

    C = np.zeros((n, n))
    for j in range(n):
        eta_j = metrics[j].matrix(space.cards[j])
        for x in range(space.size):
            for b in range(space.cards[j]):
                if b == configs[x, j]:
                    continue
                z = x + (b - configs[x, j]) * int(space.strides[j])
                for i in range(n):
                    if i == j:
                        continue
                    C[i, j] = max(C[i, j], dist(i, conds[i][x], conds[i][z]) / eta_j[configs[x, j], b])
    b_vec = np.array([
        sum(rho_tilde.probs[x] * dist(j, conds[j][x], conds_t[j][x]) for x in range(space.size))
        for j in range(n)
    ])
    flags = {"coupling": COUPLING_KIND}
    return _report(space, np.eye(n), C, b_vec, metrics, f, rho, rho_tilde, flags)


# ---------------------------------------------------------------- Markov comparison


def _splice_maps(space: StateSpace, region: Sequence[int], configs: np.ndarray):
    region = list(region)
    base = configs.copy()
    base[:, region] = 0
    base_idx = space.index(base)
    sub = space.sub(region).configs()
    full = np.zeros((sub.shape[0], space.n_sites), dtype=np.int64)
    full[:, region] = sub
    return base_idx, space.index(full)


def gibbs_sampler(rule: CoupledUpdateRule, v, tilde: bool = False) -> np.ndarray:
    """Random-scan Gibbs kernel: pick region J w.p. ``v_J`` and resample it."""
    v = np.asarray(v, dtype=float)
    if v.size != len(rule.cover.regions) or (v < 0).any():
        raise ValueError("need one nonnegative weight per region")
    if v.sum() > 1 + 1e-12:
        raise ValueError(f"region probabilities sum to {v.sum()} > 1")
    space = rule.space
    configs = rule._configs
    G = np.eye(space.size) * (1.0 - v.sum())
    rows = rule.rows_tilde if tilde else rule.rows
    for r, J in enumerate(rule.cover.regions):
        if v[r] == 0:
            continue
        base, off = _splice_maps(space, J, configs)
        np.add.at(G, (np.arange(space.size)[:, None], base[:, None] + off[None, :]), v[r] * rows[r])
    return G


def gibbs_coupling(rule: CoupledUpdateRule, v) -> np.ndarray:
    """Couplings ``Q_x`` of the two Gibbs samplers' rows, shape ``(S, S, S)``."""
    v = np.asarray(v, dtype=float)
    space = rule.space
    configs = rule._configs
    size = space.size
    Q = np.zeros((size, size, size))
    Q[np.arange(size), np.arange(size), np.arange(size)] = 1.0 - v.sum()
    for r, J in enumerate(rule.cover.regions):
        if v[r] == 0:
            continue
        base, off = _splice_maps(space, J, configs)
        for x in range(size):
            q = rule.Q_hat(r, x).joint
            idx = base[x] + off
            Q[x][np.ix_(idx, idx)] += v[r] * q
    return Q


@dataclass
class MarkovBound:
    bound: float
    coupling_term: float
    remainder_term: float


def markov_comparison(G, G_tilde, rho: ExactMeasure, rho_tilde: ExactMeasure, V, Q, n: int, f: LocalFunction, metric=None) -> MarkovBound:
    """Comparison of invariant measures of two kernels through a Wasserstein matrix ``V``.

    ``Q[x]`` is a joint table coupling ``G[x]`` and ``G_tilde[x]``.
    """
    space = rho.space
    metrics = site_metrics(space, metric)
    G = np.asarray(G, dtype=float)
    G_tilde = np.asarray(G_tilde, dtype=float)
    Q = np.asarray(Q, dtype=float)
    V = np.asarray(V, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    dev = max(np.abs(rho.probs @ G - rho.probs).max(), np.abs(rho_tilde.probs @ G_tilde - rho_tilde.probs).max())
    if dev > INVARIANCE_TOL:
        raise ValueError(f"invariance violated by {dev:.3e}")
    if np.abs(Q.sum(axis=2) - G).max() > INVARIANCE_TOL or np.abs(Q.sum(axis=1) - G_tilde).max() > INVARIANCE_TOL:
        raise ValueError("Q[x] does not couple G[x] and G_tilde[x]")
    configs = space.configs()
    expected = np.zeros(space.n_sites)
    product = np.zeros(space.n_sites)
    for j in range(space.n_sites):
        eta = metrics[j].matrix(space.cards[j])
        H = eta[configs[:, j][:, None], configs[:, j][None, :]]
        expected[j] = rho_tilde.probs @ np.einsum("xab,ab->x", Q, H)
        product[j] = marginal(rho, (j,)) @ eta @ marginal(rho_tilde, (j,))
    delta = oscillations(space, f, metrics)
    N = np.zeros_like(V)
    power = np.eye(V.shape[0])
    for _ in range(n):
        N += power
        power = power @ V
    first = float(delta @ N @ expected)
    second = float(delta @ power @ product)
    return MarkovBound(first + second, first, second)


def wasserstein_check(G, V, space: StateSpace, metric=None, test_functions=None, n_random: int = 100, seed: int = 0) -> float:
    """Largest violation of ``delta_j(Gf) <= sum_i delta_i(f) V_ij`` over a test family.

    The family is every single-configuration indicator, ``n_random`` random
    tables, and any ``test_functions`` (columns of shape ``(S,)``).
    """
    G = np.asarray(G, dtype=float)
    V = np.asarray(V, dtype=float)
    parts = [np.eye(space.size)]
    if n_random:
        rng = np.random.default_rng(seed)
        parts.append(rng.uniform(-1.0, 1.0, (space.size, n_random)))
    if test_functions is not None:
        parts.append(np.asarray(test_functions, dtype=float).reshape(space.size, -1))
    F = np.hstack(parts)
    dF = table_oscillations(space, F, metric)
    dGF = table_oscillations(space, G @ F, metric)
    return float((dGF - V.T @ dF).max())


def lemma_wasserstein_matrix(rule: CoupledUpdateRule, v) -> np.ndarray:
    """``I - W^v + R^v`` for region-selection probabilities ``v``."""
    n = rule.space.n_sites
    v = np.asarray(v, dtype=float)
    return np.eye(n) - build_W(rule.cover, n, v) + build_R(rule, v)


def certify(rule: CoupledUpdateRule, condition: int, weights=None, pseudometric=None) -> Certificate:
    w = rule.cover.weights if weights is None else np.asarray(weights, dtype=float)
    n = rule.space.n_sites
    W = build_W(rule.cover, n, w)
    R = build_R(rule, w)
    diam = [m.diameter(k) for m, k in zip(rule.metrics, rule.space.cards)]
    return uniqueness_check(W, R, condition, pseudometric=pseudometric, metric_diameters=diam)


def truncated_series(A, tol: float = 1e-14, max_terms: int = 100_000) -> np.ndarray:
    """Partial sums of ``sum_k A^k`` stopped adaptively (for identity checks)."""
    A = np.asarray(A, dtype=float)
    total = np.eye(A.shape[0])
    power = np.eye(A.shape[0])
    for _ in range(max_terms):
        power = power @ A
        total += power
        if np.abs(power).max() <= tol:
            break
    return total


__all__ = [
    "BoundReport",
    "Certificate",
    "CertificationError",
    "Cover",
    "CoupledUpdateRule",
    "MarkovBound",
    "build_W",
    "build_R",
    "build_a",
    "build_oneside_rule",
    "build_rule",
    "certify",
    "classical_bound",
    "edge_cover",
    "gibbs_coupling",
    "gibbs_sampler",
    "horizontal_pair_cover",
    "lemma_wasserstein_matrix",
    "main_bound",
    "markov_comparison",
    "mat_pow",
    "oneside_bound",
    "singleton_cover",
    "site_times",
    "temporal_cover",
    "truncated_series",
    "uniqueness_check",
    "wasserstein_check",
]
