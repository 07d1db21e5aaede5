"""Finite product spaces, configurations, local functions and site metrics.

Joint configurations are enumerated in mixed-radix order with site 0 as the
fastest-varying digit.  A flat table over ``StateSpace(cards)`` therefore
reshapes to an array indexed ``[x_0, x_1, ...]`` with ``order="F"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

MAX_JOINT = 2**31


class RegionError(ValueError):
    """Raised when a region or partial configuration does not fit a space."""


@dataclass(frozen=True)
class StateSpace:
    """Product of finite alphabets, one per site.

    ``labels`` optionally attaches a hashable label (e.g. a ``(time, vertex)``
    pair) to each site.
    """

    cards: tuple[int, ...]
    labels: tuple | None = None

    def __post_init__(self):
        cards = tuple(int(k) for k in self.cards)
        if any(k < 1 for k in cards):
            raise ValueError(f"alphabet sizes must be >= 1, got {cards}")
        object.__setattr__(self, "cards", cards)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != len(cards):
                raise ValueError("one label per site required")
            if len(set(labels)) != len(labels):
                raise ValueError("site labels must be unique")
            object.__setattr__(self, "labels", labels)
        if self.size > MAX_JOINT:
            raise ValueError(f"joint size {self.size} exceeds 2^31")

    @property
    def n_sites(self) -> int:
        return len(self.cards)

    @cached_property
    def size(self) -> int:
        return int(np.prod(self.cards, dtype=np.int64)) if self.cards else 1

    @cached_property
    def strides(self) -> np.ndarray:
        s = np.ones(self.n_sites, dtype=np.int64)
        for i in range(1, self.n_sites):
            s[i] = s[i - 1] * self.cards[i - 1]
        return s

    def region_size(self, region: Sequence[int]) -> int:
        return int(np.prod([self.cards[i] for i in region], dtype=np.int64))

    def sub(self, region: Sequence[int]) -> StateSpace:
        region = check_region(self, region)
        labels = None if self.labels is None else tuple(self.labels[i] for i in region)
        return StateSpace(tuple(self.cards[i] for i in region), labels)

    def configs(self) -> np.ndarray:
        """All configurations as an ``(size, n_sites)`` integer array."""
        return decode(np.arange(self.size, dtype=np.int64), self.cards)

    def index(self, x) -> np.ndarray | int:
        x = np.asarray(x, dtype=np.int64)
        return x @ self.strides

    def site_of(self, label) -> int:
        if self.labels is None:
            raise KeyError("space has no labels")
        return self.labels.index(label)


def decode(index, cards: Sequence[int]) -> np.ndarray:
    """Mixed-radix decode (first digit fastest) of an index array."""
    index = np.asarray(index, dtype=np.int64)
    out = np.empty(index.shape + (len(cards),), dtype=np.int64)
    rem = index.copy()
    for i, k in enumerate(cards):
        out[..., i] = rem % k
        rem //= k
    return out


def encode(x, cards: Sequence[int]) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    idx = np.zeros(x.shape[:-1], dtype=np.int64)
    mult = 1
    for i, k in enumerate(cards):
        idx += x[..., i] * mult
        mult *= k
    return idx


def check_region(space: StateSpace, region: Sequence[int]) -> tuple[int, ...]:
    region = tuple(int(i) for i in region)
    if len(set(region)) != len(region):
        raise RegionError(f"duplicate sites in region {region}")
    if any(i < 0 or i >= space.n_sites for i in region):
        raise RegionError(f"region {region} not within {space.n_sites} sites")
    return tuple(sorted(region))


def complement(space: StateSpace, region: Sequence[int]) -> tuple[int, ...]:
    r = set(region)
    return tuple(i for i in range(space.n_sites) if i not in r)


def region_index(space: StateSpace, region: Sequence[int], configs: np.ndarray) -> np.ndarray:
    """Index of ``x^J`` inside the region's own mixed-radix enumeration."""
    region = list(region)
    if not region:
        return np.zeros(configs.shape[0], dtype=np.int64)
    return encode(configs[:, region], [space.cards[i] for i in region])


def splice(space: StateSpace, x, region: Sequence[int], z) -> np.ndarray:
    """Return ``z^J x^{I\\J}``: ``x`` with the sites in ``region`` replaced by ``z``."""
    x = np.asarray(x, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    if x.shape != (space.n_sites,):
        raise RegionError("configuration length does not match the space")
    if len(set(int(i) for i in region)) != len(region):
        raise RegionError(f"duplicate sites in region {tuple(region)}")
    check_region(space, region)
    if z.shape != (len(region),):
        raise RegionError("partial configuration does not match region")
    for site, value in zip(region, z):
        if not 0 <= value < space.cards[site]:
            raise RegionError(f"value {value} outside alphabet of site {site}")
    out = x.copy()
    out[list(region)] = z
    return out


@dataclass(frozen=True)
class SiteMetric:
    """Metric on one site's alphabet.  ``table=None`` is the trivial metric."""

    table: np.ndarray | None = None

    def __post_init__(self):
        if self.table is None:
            return
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("metric table must be square")
        if np.any(t < 0) or np.any(np.diag(t) != 0) or not np.array_equal(t, t.T):
            raise ValueError("metric table must be nonnegative, symmetric, zero on the diagonal")
        k = t.shape[0]
        off = ~np.eye(k, dtype=bool)
        if np.any(t[off] <= 0):
            raise ValueError("metric must separate distinct states")
        # exhaustive triangle check; alphabets are small
        if np.any(t[:, None, :] > t[:, :, None] + t[None, :, :] + 1e-12):
            raise ValueError("metric violates the triangle inequality")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def trivial(self) -> bool:
        return self.table is None

    def matrix(self, k: int) -> np.ndarray:
        if self.table is None:
            return 1.0 - np.eye(k)
        if self.table.shape[0] != k:
            raise ValueError(f"metric is for alphabet size {self.table.shape[0]}, not {k}")
        return self.table

    def diameter(self, k: int) -> float:
        return float(self.matrix(k).max()) if k > 1 else 0.0


def site_metrics(space: StateSpace, metric=None) -> list[SiteMetric]:
    """Normalize ``None`` / one ``SiteMetric`` / a sequence into a per-site list."""
    if metric is None:
        return [SiteMetric() for _ in space.cards]
    if isinstance(metric, SiteMetric):
        return [metric for _ in space.cards]
    metrics = list(metric)
    if len(metrics) != space.n_sites:
        raise ValueError("one metric per site required")
    for m, k in zip(metrics, space.cards):
        m.matrix(k)
    return metrics


@dataclass(frozen=True)
class LocalFunction:
    """A real function depending only on the sites in ``region``.

    ``table`` is flat over configurations of the (sorted) region.
    """

    region: tuple[int, ...]
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        region = tuple(int(i) for i in self.region)
        if list(region) != sorted(set(region)):
            raise RegionError("region must be sorted and duplicate-free")
        object.__setattr__(self, "region", region)
        t = np.asarray(self.table, dtype=float).ravel()
        object.__setattr__(self, "table", t)

    def validate(self, space: StateSpace) -> None:
        check_region(space, self.region)
        if self.table.size != space.region_size(self.region):
            raise RegionError("table size does not match region")

    def on_space(self, space: StateSpace) -> np.ndarray:
        """Evaluate on every joint configuration of ``space``."""
        self.validate(space)
        return self.table[region_index(space, self.region, space.configs())]

    @classmethod
    def indicator(cls, site: int, value: int, k: int) -> LocalFunction:
        t = np.zeros(k)
        t[value] = 1.0
        return cls((site,), t)

    @classmethod
    def full(cls, space: StateSpace, values) -> LocalFunction:
        return cls(tuple(range(space.n_sites)), np.asarray(values, dtype=float))


def oscillation(space: StateSpace, f: LocalFunction, j: int, metric: SiteMetric | None = None) -> float:
    """sup of |f(x) - f(z)| / eta_j(x_j, z_j) over x, z differing only at site j."""
    f.validate(space)
    if j not in f.region:
        return 0.0
    metric = metric or SiteMetric()
    k = space.cards[j]
    if k == 1:
        return 0.0
    cards = [space.cards[i] for i in f.region]
    t = f.table.reshape(cards, order="F")
    t = np.moveaxis(t, f.region.index(j), 0).reshape(k, -1)
    eta = metric.matrix(k)
    best = 0.0
    for a in range(k):
        for b in range(a + 1, k):
            best = max(best, float(np.max(np.abs(t[a] - t[b]))) / eta[a, b])
    return best


def oscillations(space: StateSpace, f: LocalFunction, metric=None) -> np.ndarray:
    """Vector of per-site oscillations ``delta_i f``."""
    metrics = site_metrics(space, metric)
    return np.array([oscillation(space, f, i, metrics[i]) for i in range(space.n_sites)])


def table_oscillations(space: StateSpace, values: np.ndarray, metric=None) -> np.ndarray:
    """Oscillations of many full-space functions at once.

    ``values`` has shape ``(space.size, m)``; returns ``(n_sites, m)``.
    """
    metrics = site_metrics(space, metric)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    m = values.shape[1]
    t = values.reshape(tuple(space.cards) + (m,), order="F")
    out = np.zeros((space.n_sites, m))
    for j, k in enumerate(space.cards):
        eta = metrics[j].matrix(k)
        tj = np.moveaxis(t, j, 0).reshape(k, -1, m)
        for a in range(k):
            for b in range(a + 1, k):
                d = np.abs(tj[a] - tj[b]).max(axis=0) / eta[a, b]
                np.maximum(out[j], d, out=out[j])
    return out
