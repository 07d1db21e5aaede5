"""Coupling constructors: TV-optimal, minorization, and Markov-path minorization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import decode


class MinorizationError(ValueError):
    """The minorization precondition ``mu >= alpha * gamma`` fails."""


@dataclass
class Coupling:
    """Joint law of a pair of configurations over a common region.

    ``joint[a, b]`` is indexed by mixed-radix configuration indices over
    ``cards`` (first coordinate fastest).  A plain distribution on ``k``
    states uses ``cards=(k,)``.
    """

    joint: np.ndarray = field(repr=False)
    cards: tuple[int, ...] = ()

    def __post_init__(self):
        self.joint = np.asarray(self.joint, dtype=float)
        n = self.joint.shape[0]
        if not self.cards:
            self.cards = (n,)
        if self.joint.shape != (n, n) or int(np.prod(self.cards)) != n:
            raise ValueError("joint table does not match cards")

    @property
    def left(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def right(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def metric_integral(self, pos: int, eta: np.ndarray | None = None) -> float:
        """Integral of ``eta(omega_pos, omega'_pos)`` under the coupling."""
        states = decode(np.arange(self.joint.shape[0]), self.cards)[:, pos]
        k = self.cards[pos]
        eta = 1.0 - np.eye(k) if eta is None else np.asarray(eta, dtype=float)
        return float((self.joint * eta[states[:, None], states[None, :]]).sum())


def coupling_mismatch(Q: Coupling, pos: int = 0) -> float:
    """Probability that the two coordinates at position ``pos`` differ."""
    if not 0 <= pos < len(Q.cards):
        raise IndexError(f"position {pos} outside coupled region")
    return Q.metric_integral(pos)


def _check_dist(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if (p < -1e-15).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} is not a probability vector")
    return np.clip(p, 0.0, None)


def tv_optimal_coupling(mu, nu, cards: Sequence[int] = ()) -> Coupling:
    """Maximal coupling: common part on the diagonal, residuals as a product."""
    mu = _check_dist(mu, "mu")
    nu = _check_dist(nu, "nu")
    if mu.shape != nu.shape:
        raise ValueError("distributions have different supports")
    common = np.minimum(mu, nu)
    joint = np.diag(common)
    r_mu, r_nu = mu - common, nu - common
    t = r_mu.sum()
    if t > 0:
        joint = joint + np.outer(r_mu, r_nu) / t
    return Coupling(joint, tuple(cards))


def max_minorization(mu, nu, gamma) -> float:
    """Largest ``alpha`` with ``mu >= alpha gamma`` and ``nu >= alpha gamma`` (capped at 1)."""
    gamma = np.asarray(gamma, dtype=float)
    pos = gamma > 0
    if not pos.any():
        return 1.0
    ratio = np.minimum(np.asarray(mu, dtype=float)[pos], np.asarray(nu, dtype=float)[pos]) / gamma[pos]
    return float(min(1.0, ratio.min()))


def _residual(p: np.ndarray, gamma: np.ndarray, alpha: float, what: str) -> np.ndarray:
    r = p - alpha * gamma
    bad = np.flatnonzero(r < -1e-12)
    if bad.size:
        i = int(bad[0])
        raise MinorizationError(f"{what}[{i}] = {p[i]} < alpha * gamma[{i}] = {alpha * gamma[i]}")
    r = np.clip(r, 0.0, None)
    s = r.sum()
    return r / s if s > 1e-15 else None


def minorize_coupling(mu, nu, gamma, alpha: float | None = None) -> Coupling:
    """Coupling ``alpha * diag(gamma) + (1 - alpha) * mu_res (x) nu_res``.

    ``mu_res = (mu - alpha gamma) / (1 - alpha)``; the mismatch probability is
    at most ``1 - alpha``.  ``alpha`` defaults to the largest feasible value.
    """
    mu = _check_dist(mu, "mu")
    nu = _check_dist(nu, "nu")
    gamma = _check_dist(gamma, "gamma")
    if alpha is None:
        alpha = max_minorization(mu, nu, gamma)
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    r_mu = _residual(mu, gamma, alpha, "mu")
    r_nu = _residual(nu, gamma, alpha, "nu")
    joint = alpha * np.diag(gamma)
    if alpha < 1:
        if r_mu is None or r_nu is None:
            # zero residual mass: stay on the diagonal
            joint = joint + (1 - alpha) * np.diag(mu if r_mu is None else r_mu)
        else:
            joint = joint + (1 - alpha) * np.outer(r_mu, r_nu)
    return Coupling(joint)


def _step_coupling(P: np.ndarray, nu: np.ndarray, alpha: float, i: int) -> np.ndarray:
    """Kernel ``T[x, z, x', z']`` coupling ``P(x, .)`` and ``P(z, .)`` as in the sticky construction."""
    k = P.shape[0]
    T = np.zeros((k, k, k, k))
    res = np.zeros_like(P)
    if alpha < 1:
        for x in range(k):
            r = P[x] - alpha * nu
            if (r < -1e-12).any():
                raise MinorizationError(f"step {i}: P[{x}] is not minorized by alpha * nu")
            r = np.clip(r, 0.0, None)
            s = r.sum()
            res[x] = r / s if s > 1e-15 else P[x]
    for x in range(k):
        for z in range(k):
            T[x, z] += alpha * np.diag(nu)
            if alpha < 1:
                if x == z:
                    T[x, z] += (1 - alpha) * np.diag(res[x])
                else:
                    T[x, z] += (1 - alpha) * np.outer(res[x], res[z])
    return T


def markov_minorize_coupling(kernels: Sequence, minorants: Sequence, alpha: float, x: int, z: int) -> Coupling:
    """Coupling of two length-``q`` path laws started at ``x`` and ``z``.

    Each step uses ``alpha * nu_i`` as the common component and, once the two
    paths agree, keeps them together.  Position ``i - 1`` of the returned
    coupling is step ``i``.
    """
    kernels = [np.asarray(P, dtype=float) for P in kernels]
    minorants = [_check_dist(v, "nu") for v in minorants]
    if len(kernels) != len(minorants) or not kernels:
        raise ValueError("need one minorant per kernel")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    k = kernels[0].shape[0]
    for i, (P, v) in enumerate(zip(kernels, minorants), start=1):
        if P.shape != (k, k) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError(f"kernel {i} is not a {k}x{k} stochastic matrix")
        rows = np.flatnonzero((P < alpha * v[None, :] - 1e-12).any(axis=1))
        if rows.size:
            raise MinorizationError(f"minorization fails at step {i}, state {int(rows[0])}")
    # state: law of (path, path', current x, current z)
    q = len(kernels)
    law = np.zeros((1, 1, k, k))
    law[0, 0, x, z] = 1.0
    for i, (P, v) in enumerate(zip(kernels, minorants), start=1):
        T = _step_coupling(P, v, alpha, i)
        # new[p, p', a', b'] = sum_{a,b} law[p, p', a, b] T[a, b, a', b']
        new = np.einsum("pqab,abcd->pqcd", law, T)
        npaths = law.shape[0]
        # append the new step as the slowest digit of the path index
        law = np.zeros((npaths * k, npaths * k, k, k))
        for a in range(k):
            for b in range(k):
                law[a * npaths:(a + 1) * npaths, b * npaths:(b + 1) * npaths, a, b] = new[:, :, a, b]
    joint = law.sum(axis=(2, 3))
    return Coupling(joint, (k,) * q)


def path_law(kernels: Sequence, x: int) -> np.ndarray:
    """Exact law of ``(omega_1, ..., omega_q)`` started at ``x``, mixed-radix step 1 fastest."""
    kernels = [np.asarray(P, dtype=float) for P in kernels]
    k = kernels[0].shape[0]
    law = kernels[0][x].copy()
    steps = 1
    for P in kernels[1:]:
        last = decode(np.arange(law.size), (k,) * steps)[:, -1]
        law = (law[:, None] * P[last]).ravel(order="F")
        steps += 1
    return law
