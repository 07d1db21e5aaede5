"""Exact brute-force inference on small finite models.

Everything here enumerates the full joint table.  It is the ground truth the
comparison bounds are checked against, not a scalable engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import LocalFunction, StateSpace, check_region, complement, region_index

ORACLE_GUARD = 2**24


class GuardExceeded(RuntimeError):
    """Joint table too large for exact enumeration."""


def check_guard(size: int, guard: int = ORACLE_GUARD) -> None:
    if size > guard:
        raise GuardExceeded(f"joint size {size} exceeds oracle guard {guard}")


@dataclass
class FactorModel:
    """Unnormalized product of nonnegative local factors.

    Each factor is ``(region, table)`` with ``table`` flat over the region's
    configurations in mixed-radix order (first site of the region fastest).
    """

    space: StateSpace
    factors: list[tuple[tuple[int, ...], np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        checked = []
        for region, table in self.factors:
            region = check_region(self.space, region)
            table = np.asarray(table, dtype=float).ravel()
            if table.size != self.space.region_size(region):
                raise ValueError(f"factor on {region} has {table.size} entries")
            if (table < 0).any() or not np.isfinite(table).all():
                raise ValueError("factor entries must be finite and nonnegative")
            if not (table > 0).any():
                raise ValueError(f"factor on {region} is identically zero")
            checked.append((region, table))
        self.factors = checked

    def add(self, region: Sequence[int], table) -> FactorModel:
        self.factors.append((region, table))
        self.__post_init__()
        return self

    def unnormalized(self) -> np.ndarray:
        check_guard(self.space.size)
        cards = self.space.cards
        joint = np.ones(cards if cards else (), dtype=float)
        for region, table in self.factors:
            t = table.reshape([cards[i] for i in region], order="F")
            shape = [1] * len(cards)
            for i in region:
                shape[i] = cards[i]
            joint = joint * t.reshape(shape)
        return np.asarray(joint).ravel(order="F")


@dataclass
class ExactMeasure:
    space: StateSpace
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if p.size != self.space.size:
            raise ValueError("probability table does not match the space")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12 * max(1, p.size):
            raise ValueError("probabilities must be nonnegative and sum to one")
        self.probs = p

    @classmethod
    def from_weights(cls, space: StateSpace, weights) -> ExactMeasure:
        w = np.asarray(weights, dtype=float).ravel()
        z = w.sum()
        if not z > 0:
            raise ValueError("weights sum to zero")
        return cls(space, w / z)

    def tensor(self) -> np.ndarray:
        return self.probs.reshape(self.space.cards, order="F")

    def expect(self, f: LocalFunction | np.ndarray) -> float:
        if isinstance(f, LocalFunction):
            return float(marginal(self, f.region) @ f.table)
        return float(self.probs @ np.asarray(f, dtype=float))


def normalize(model: FactorModel) -> ExactMeasure:
    w = model.unnormalized()
    z = w.sum()
    if not z > 0:
        raise ValueError("factor product is identically zero")
    return ExactMeasure(model.space, w / z)


def marginal(mu: ExactMeasure, region: Sequence[int]) -> np.ndarray:
    """Exact marginal table over the sorted region."""
    region = check_region(mu.space, region)
    other = complement(mu.space, region)
    m = mu.tensor().sum(axis=other) if other else mu.tensor()
    return np.asarray(m).ravel(order="F")


@dataclass
class ConditionalKernel:
    """Conditional law of the sites in ``region`` given the sites in ``context``.

    ``table[b, c]`` is the probability of region configuration ``c`` given the
    context configuration with index ``b``.  ``zero_rows`` marks context
    configurations of zero mass, which were filled uniformly.
    """

    space: StateSpace
    region: tuple[int, ...]
    context: tuple[int, ...]
    table: np.ndarray = field(repr=False)
    zero_rows: np.ndarray = field(repr=False)

    @property
    def flagged(self) -> int:
        return int(self.zero_rows.sum())

    def rows(self, configs: np.ndarray | None = None) -> np.ndarray:
        """Kernel rows ``gamma_x`` for each full configuration ``x``."""
        if configs is None:
            configs = self.space.configs()
        return self.table[region_index(self.space, self.context, configs)]


def conditional_kernel(mu: ExactMeasure, region: Sequence[int], context: Sequence[int] | None = None) -> ConditionalKernel:
    """Exact Bayes conditional of ``region`` given ``context`` (default: all other sites).

    A one-sided kernel is obtained by passing a ``context`` smaller than the
    complement; the remaining sites are marginalized out first.
    """
    space = mu.space
    region = check_region(space, region)
    context = complement(space, region) if context is None else check_region(space, context)
    if set(region) & set(context):
        raise ValueError("region and context overlap")
    keep = tuple(sorted(region + context))
    joint = marginal(mu, keep).reshape([space.cards[i] for i in keep], order="F")
    # axes: context first then region, each flattened F-order
    ctx_axes = [keep.index(i) for i in context]
    reg_axes = [keep.index(i) for i in region]
    t = np.transpose(joint, ctx_axes + reg_axes)
    n_ctx = space.region_size(context)
    n_reg = space.region_size(region)
    t = t.reshape((n_ctx, n_reg), order="F")
    mass = t.sum(axis=1)
    zero = mass <= 0
    table = np.empty_like(t)
    table[~zero] = t[~zero] / mass[~zero, None]
    table[zero] = 1.0 / n_reg
    return ConditionalKernel(space, region, context, table, zero)


def apply_kernel(mu: ExactMeasure, gamma: ConditionalKernel) -> ExactMeasure:
    """Law of ``z^J x^{I\\J}`` with ``x ~ mu`` and ``z^J ~ gamma_x``."""
    space = mu.space
    configs = space.configs()
    rows = gamma.rows(configs)
    region = list(gamma.region)
    base = configs.copy()
    base[:, region] = 0
    base_idx = space.index(base)
    sub = space.sub(region)
    offsets = space.index(_embed(space, region, sub.configs()))
    out = np.zeros(space.size)
    np.add.at(out, base_idx[:, None] + offsets[None, :], mu.probs[:, None] * rows)
    return ExactMeasure(space, out)


def _embed(space: StateSpace, region, sub_configs: np.ndarray) -> np.ndarray:
    full = np.zeros((sub_configs.shape[0], space.n_sites), dtype=np.int64)
    full[:, list(region)] = sub_configs
    return full


def verify_invariance(mu: ExactMeasure, gamma: ConditionalKernel) -> float:
    """Max absolute entry difference between ``mu`` and ``mu gamma^J``."""
    if gamma.space != mu.space:
        raise ValueError("kernel and measure live on different spaces")
    return float(np.abs(apply_kernel(mu, gamma).probs - mu.probs).max())


def tv_local(mu: ExactMeasure, nu: ExactMeasure, region: Sequence[int]) -> float:
    """sup over J-local |f| <= 1 of |mu f - nu f|, i.e. L1 distance of J-marginals."""
    if mu.space.cards != nu.space.cards:
        raise ValueError("measures live on different spaces")
    return float(np.abs(marginal(mu, region) - marginal(nu, region)).sum())


def product_measure(space: StateSpace, site_probs: Sequence) -> ExactMeasure:
    model = FactorModel(space, [((i,), np.asarray(p, dtype=float)) for i, p in enumerate(site_probs)])
    return normalize(model)


def ising_model(space: StateSpace, couplings: dict, fields: Sequence[float] | None = None) -> FactorModel:
    """Binary Ising factor model with spins ``s = 2x - 1``.

    ``couplings`` maps edges ``(i, j)`` to ``beta_ij`` giving factors
    ``exp(beta_ij s_i s_j)``; ``fields`` give ``exp(h_i s_i)``.
    """
    if any(k != 2 for k in space.cards):
        raise ValueError("Ising models need binary sites")
    factors = []
    for (i, j), b in couplings.items():
        # region sorted; table index a + 2b (a fastest) is symmetric in (a, b)
        factors.append((tuple(sorted((i, j))), np.exp(b * np.array([1.0, -1.0, -1.0, 1.0]))))
    if fields is not None:
        for i, h in enumerate(fields):
            if h:
                factors.append(((i,), np.exp(h * np.array([-1.0, 1.0]))))
    return FactorModel(space, factors)


def grid_edges(rows: int, cols: int, periodic: bool = False) -> list[tuple[int, int]]:
    """Nearest-neighbour edges of a ``rows x cols`` grid, site ``r * cols + c``."""
    edges = set()
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if periodic:
                    rr, cc = rr % rows, cc % cols
                elif rr >= rows or cc >= cols:
                    continue
                j = rr * cols + cc
                if i != j:
                    edges.add((min(i, j), max(i, j)))
    return sorted(edges)


def random_pairwise_model(space: StateSpace, edges, rng: np.random.Generator, scale: float = 0.5) -> FactorModel:
    """Pairwise model with log-potential entries uniform in ``[-scale, scale]``."""
    factors = []
    for i, j in edges:
        region = (min(i, j), max(i, j))
        n = space.region_size(region)
        factors.append((region, np.exp(rng.uniform(-scale, scale, n))))
    return FactorModel(space, factors)


def jitter_model(model: FactorModel, rng: np.random.Generator, amount: float = 0.1) -> FactorModel:
    """Perturb every log-potential entry by an independent uniform in ``[-amount, amount]``."""
    factors = [(r, t * np.exp(rng.uniform(-amount, amount, t.size))) for r, t in model.factors]
    return FactorModel(model.space, factors)
