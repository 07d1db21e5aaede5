import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_measure
from gibbscomp import comparison as cmp
from gibbscomp.core import LocalFunction, SiteMetric, StateSpace
from gibbscomp.oracle import (
    ExactMeasure,
    FactorModel,
    conditional_kernel,
    grid_edges,
    ising_model,
    jitter_model,
    normalize,
    product_measure,
    random_pairwise_model,
    verify_invariance,
)


def loop_conditional(mu, J, x):
    """gamma^J_x by direct enumeration over the region's configurations."""
    space = mu.space
    sub = StateSpace(tuple(space.cards[i] for i in J)).configs()
    w = np.empty(len(sub))
    for c, zc in enumerate(sub):
        y = np.array(x)
        y[list(J)] = zc
        w[c] = mu.probs[space.index(y)]
    return w / w.sum()


def loop_R_a(rho, rho_t, cover):
    space = rho.space
    n = space.n_sites
    configs = space.configs()
    R = np.zeros((n, n))
    for j in range(n):
        for x in configs:
            for b in range(space.cards[j]):
                if b == x[j]:
                    continue
                z = x.copy()
                z[j] = b
                acc = np.zeros(n)
                for J, w in zip(cover.regions, cover.weights):
                    sub = StateSpace(tuple(space.cards[i] for i in J)).configs()
                    p, q = loop_conditional(rho, J, x), loop_conditional(rho, J, z)
                    for pos, i in enumerate(J):
                        # TV-optimal coupling mismatch at one coordinate, via its joint table
                        common = np.minimum(p, q)
                        t = (p - common).sum()
                        joint = np.diag(common) + (np.outer(p - common, q - common) / t if t > 0 else 0)
                        acc[i] += w * sum(joint[a, c] for a in range(len(sub)) for c in range(len(sub)) if sub[a][pos] != sub[c][pos])
                R[:, j] = np.maximum(R[:, j], acc)
    a = np.zeros(n)
    for J, w in zip(cover.regions, cover.weights):
        sub = StateSpace(tuple(space.cards[i] for i in J)).configs()
        for xi, x in enumerate(configs):
            p, q = loop_conditional(rho, J, x), loop_conditional(rho_t, J, x)
            common = np.minimum(p, q)
            t = (p - common).sum()
            joint = np.diag(common) + (np.outer(p - common, q - common) / t if t > 0 else 0)
            for pos, i in enumerate(J):
                a[i] += w * rho_t.probs[xi] * sum(joint[u, v] for u in range(len(sub)) for v in range(len(sub)) if sub[u][pos] != sub[v][pos])
    return R, a


def test_R_and_a_match_loop_oracle(rng):
    rho = random_measure(rng, 4, scale=0.8)
    model = random_pairwise_model(StateSpace((2,) * 4), [(0, 1), (1, 2), (2, 3)], rng, 0.8)
    rho_t = normalize(model)
    for cover in (cmp.singleton_cover(4), cmp.edge_cover([(0, 1), (2, 3), (1, 2)], 4)):
        rule = cmp.build_rule(rho, rho_t, cover)
        R, a = loop_R_a(rho, rho_t, cover)
        np.testing.assert_allclose(cmp.build_R(rule), R, atol=1e-14)
        np.testing.assert_allclose(cmp.build_a(rule), a, atol=1e-14)


def test_R_nonbinary_with_table_metric(rng):
    space = StateSpace((3, 2, 3))
    rho = ExactMeasure.from_weights(space, rng.uniform(0.2, 1, space.size))
    eta = SiteMetric(np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0.0]]))
    metrics = [eta, SiteMetric(), eta]
    rule = cmp.build_rule(rho, rho, cmp.Cover([(0, 1), (1, 2)]), metrics)
    R = cmp.build_R(rule)
    configs = space.configs()
    expect = np.zeros((3, 3))
    for xi, zi in itertools.product(range(space.size), repeat=2):
        x, z = configs[xi], configs[zi]
        diff = np.flatnonzero(x != z)
        if len(diff) != 1:
            continue
        j = diff[0]
        acc = np.zeros(3)
        for r, J in enumerate(rule.cover.regions):
            Q = rule.Q(r, xi, zi)
            for pos, i in enumerate(J):
                acc[i] += Q.metric_integral(pos, metrics[i].matrix(space.cards[i]))
        expect[:, j] = np.maximum(expect[:, j], acc / metrics[j].matrix(space.cards[j])[x[j], z[j]])
    np.testing.assert_allclose(R, expect, atol=1e-14)


def test_two_site_ising_influence_is_tanh():
    b = 0.6
    space = StateSpace((2, 2))
    rho = normalize(ising_model(space, {(0, 1): b}))
    indep = product_measure(space, [[0.5, 0.5], [0.5, 0.5]])
    rule = cmp.build_rule(rho, indep, cmp.singleton_cover(2))
    R = cmp.build_R(rule)
    assert R[0, 1] == pytest.approx(np.tanh(b), abs=1e-14)
    assert R[1, 0] == pytest.approx(np.tanh(b), abs=1e-14)
    assert R[0, 0] == 0


def test_trivial_cases(rng):
    rho = random_measure(rng, 3)
    rule = cmp.build_rule(rho, rho, cmp.singleton_cover(3))
    np.testing.assert_array_equal(cmp.build_W(rule.cover, 3), np.eye(3))
    assert np.all(cmp.build_a(rule) == 0)
    rep = cmp.main_bound(rule, LocalFunction.indicator(0, 1, 2))
    assert rep.certified and rep.bound == 0 and rep.exact == 0
    for r in range(3):
        for x in range(rho.space.size):
            assert rule.Q_hat(r, x).joint.trace() == pytest.approx(1.0)
    one = ExactMeasure(StateSpace((2,)), [0.3, 0.7])
    rule = cmp.build_rule(one, one, cmp.singleton_cover(1))
    assert cmp.build_R(rule).tolist() == [[0.0]]
    prod = product_measure(StateSpace((2, 2, 2)), [[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]])
    rule = cmp.build_rule(prod, rho, cmp.Cover([(0, 1), (1, 2)]))
    assert np.all(cmp.build_R(rule) == 0)


def test_one_site_bound_is_tight():
    p, q = 0.3, 0.55
    space = StateSpace((2,))
    rho, rho_t = ExactMeasure(space, [1 - p, p]), ExactMeasure(space, [1 - q, q])
    rep = cmp.main_bound(cmp.build_rule(rho, rho_t, cmp.singleton_cover(1)), LocalFunction.indicator(0, 1, 2))
    assert rep.W[0, 0] == 1 and rep.R[0, 0] == 0
    assert rep.a[0] == pytest.approx(abs(p - q))
    assert rep.bound == pytest.approx(abs(p - q)) and rep.exact == pytest.approx(abs(p - q))


def test_ising_grid_bound_dominates_exact():
    space = StateSpace((2,) * 4)
    edges = grid_edges(2, 2)
    rho = normalize(ising_model(space, {e: 0.2 for e in edges}))
    rho_t = normalize(ising_model(space, {e: 0.25 for e in edges}, fields=[0.05, 0, 0, 0]))
    rule = cmp.build_rule(rho, rho_t, cmp.singleton_cover(4))
    for i in range(4):
        rep = cmp.main_bound(rule, LocalFunction.indicator(i, 1, 2))
        assert rep.certified and rep.exact <= rep.bound + 1e-12


def test_classical_matches_general_and_product_case(rng):
    a = product_measure(StateSpace((2, 2)), [[0.2, 0.8], [0.6, 0.4]])
    b = product_measure(StateSpace((2, 2)), [[0.3, 0.7], [0.5, 0.5]])
    f = LocalFunction((0, 1), [0.0, 1.0, 0.5, 2.0])
    rep = cmp.classical_bound(a, b, f)
    assert np.all(rep.R == 0)
    assert rep.bound == pytest.approx(rep.delta_f @ rep.a)
    np.testing.assert_allclose(rep.a, [0.1, 0.1])
    assert cmp.classical_bound(a, a, f).bound == 0


def test_weight_rescaling_is_flagged_and_invariant(rng):
    rho = random_measure(rng, 4)
    rho_t = random_measure(rng, 4)
    f = LocalFunction.indicator(2, 1, 2)
    cover = cmp.edge_cover([(0, 1), (1, 2), (2, 3), (0, 3)], 4)
    rule = cmp.build_rule(rho, rho_t, cover)
    base = cmp.main_bound(rule, f, weights=np.full(4, 0.5))
    scaled = cmp.main_bound(rule, f, weights=np.full(4, 3.0))
    assert base.flags["rescaled_by"] == 1.0 and scaled.flags["rescaled_by"] == pytest.approx(6.0)
    assert scaled.bound == pytest.approx(base.bound, rel=1e-12)


def test_uncertified_report_has_no_bound():
    space = StateSpace((2, 2))
    rho = normalize(ising_model(space, {(0, 1): 30.0}))
    rho_t = product_measure(space, [[0.5, 0.5]] * 2)
    rep = cmp.main_bound(cmp.build_rule(rho, rho_t, cmp.singleton_cover(2)), LocalFunction.indicator(0, 1, 2))
    assert not rep.certified and rep.bound is None and rep.exact is not None


def test_oneside_single_slice_reduces_to_main(rng):
    rho, rho_t = random_measure(rng, 4), random_measure(rng, 4)
    f = LocalFunction.indicator(1, 1, 2)
    cover = cmp.singleton_cover(4)
    one = cmp.oneside_bound(cmp.build_oneside_rule(rho, rho_t, cover, np.zeros(4)), f)
    two = cmp.main_bound(cmp.build_rule(rho, rho_t, cover), f)
    assert one.bound == pytest.approx(two.bound, abs=1e-15)
    np.testing.assert_array_equal(one.R, two.R)


def chain_measure(P0, P):
    space = StateSpace((2, 2))
    probs = np.array([P0[x0] * P[x0, x1] for x1 in range(2) for x0 in range(2)])
    return ExactMeasure(space, probs)


def test_oneside_markov_chain():
    P0 = np.array([0.6, 0.4])
    P = np.array([[0.8, 0.2], [0.3, 0.7]])
    Pt = np.array([[0.75, 0.25], [0.35, 0.65]])
    rho, rho_t = chain_measure(P0, P), chain_measure(np.array([0.55, 0.45]), Pt)
    cover = cmp.singleton_cover(2)
    rule = cmp.build_oneside_rule(rho, rho_t, cover, [0, 1])
    assert rule.invariance_deviation() <= 1e-14
    R = cmp.build_R(rule)
    assert R[0, 1] == 0  # the past does not look at the future
    # the one-sided kernel at time 1 is the transition matrix, so R_10 = TV of its rows
    assert R[1, 0] == pytest.approx(0.5, abs=1e-14)
    for i in range(2):
        rep = cmp.oneside_bound(rule, LocalFunction.indicator(i, 1, 2))
        assert rep.certified and rep.exact <= rep.bound + 1e-12
    same = cmp.oneside_bound(cmp.build_oneside_rule(rho, rho, cover, [0, 1]), LocalFunction.indicator(1, 1, 2))
    assert same.bound == 0
    with pytest.raises(ValueError):
        cmp.build_oneside_rule(rho, rho, cmp.Cover([(0, 1)]), [0, 1])


def test_gibbs_sampler_examples(rng):
    rho = random_measure(rng, 3)
    rule = cmp.build_rule(rho, rho, cmp.singleton_cover(3))
    np.testing.assert_array_equal(cmp.gibbs_sampler(rule, np.zeros(3)), np.eye(8))
    full = cmp.build_rule(rho, rho, cmp.Cover([(0, 1, 2)]))
    G = cmp.gibbs_sampler(full, [1.0])
    np.testing.assert_allclose(G, np.tile(rho.probs, (8, 1)), atol=1e-15)
    with pytest.raises(ValueError):
        cmp.gibbs_sampler(rule, [0.5, 0.5, 0.5])


def test_wasserstein_trivial_kernels(rng):
    space = StateSpace((2, 2))
    assert cmp.wasserstein_check(np.eye(4), np.eye(2), space) <= 1e-15
    const = np.tile(rng.dirichlet(np.ones(4)), (4, 1))
    assert cmp.wasserstein_check(const, np.zeros((2, 2)), space) <= 1e-15
    assert cmp.wasserstein_check(np.eye(4), np.zeros((2, 2)), space) > 0.5


def test_markov_comparison_examples(rng):
    rho, rho_t = random_measure(rng, 3), random_measure(rng, 3)
    f = LocalFunction.indicator(0, 1, 2)
    rule = cmp.build_rule(rho, rho_t, cmp.singleton_cover(3))
    v = np.full(3, 1 / 3)
    G, Gt = cmp.gibbs_sampler(rule, v), cmp.gibbs_sampler(rule, v, tilde=True)
    Q = cmp.gibbs_coupling(rule, v)
    V = cmp.lemma_wasserstein_matrix(rule, v)
    assert cmp.wasserstein_check(G, V, rho.space) <= 1e-9
    exact = abs(rho.expect(f) - rho_t.expect(f))
    for n in (1, 2, 5, 50):
        assert cmp.markov_comparison(G, Gt, rho, rho_t, V, Q, n, f).bound >= exact - 1e-12
    same = cmp.build_rule(rho, rho, cmp.singleton_cover(3))
    Gs = cmp.gibbs_sampler(same, v)
    res = cmp.markov_comparison(Gs, Gs, rho, rho, V, cmp.gibbs_coupling(same, v), 200, f)
    assert res.coupling_term == pytest.approx(0, abs=1e-15) and res.remainder_term < 1e-6
    res = cmp.markov_comparison(G, Gt, rho, rho_t, np.zeros((3, 3)), Q, 1, f)
    configs = rho.space.configs()
    direct = sum(rho_t.probs[x] * Q[x][configs[:, 0][:, None] != configs[:, 0][None, :]].sum() for x in range(8))
    assert res.bound == pytest.approx(direct, abs=1e-14)
    with pytest.raises(ValueError):
        cmp.markov_comparison(G, Gt, rho_t, rho_t, V, Q, 3, f)


def test_gibbs_limit_below_main_bound(rng):
    for _ in range(5):
        rho, rho_t = random_measure(rng, 4), random_measure(rng, 4)
        cover = cmp.edge_cover([(0, 1), (1, 2), (2, 3), (0, 3)], 4)
        rule = cmp.build_rule(rho, rho_t, cover)
        v = np.full(4, 0.25)
        f = LocalFunction.indicator(1, 1, 2)
        main = cmp.main_bound(rule, f, weights=v)
        mk = cmp.markov_comparison(cmp.gibbs_sampler(rule, v), cmp.gibbs_sampler(rule, v, True), rho, rho_t,
                                   cmp.lemma_wasserstein_matrix(rule, v), cmp.gibbs_coupling(rule, v), 3000, f)
        assert mk.bound <= main.bound * (1 + 1e-6)


def test_matrix_identity_small(rng):
    W = np.diag([0.5, 0.8])
    R = np.array([[0.0, 0.2], [0.3, 0.0]])
    lhs = cmp.truncated_series(np.eye(2) - W + R)
    rhs = cmp.truncated_series(np.linalg.solve(W, R)) @ np.linalg.inv(W)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_uniqueness_conditions():
    n = 3
    for c in range(1, 7):
        kw = {"pseudometric": np.abs(np.subtract.outer(range(n), range(n))).astype(float)} if c == 6 else {}
        assert cmp.uniqueness_check(np.eye(n), np.zeros((n, n)), c, **kw).passed
    assert cmp.uniqueness_check(np.eye(2), 0.9 * np.eye(2), 3).passed
    assert not cmp.uniqueness_check(np.eye(2), 1.1 * np.eye(2), 3).passed
    with pytest.raises(ValueError):
        cmp.uniqueness_check(np.eye(2), np.zeros((2, 2)), 6)
    # a nilpotent influence with norm > 1 needs a power to certify
    R = np.array([[0, 5.0], [0, 0]])
    c2 = cmp.uniqueness_check(np.eye(2), R, 2)
    assert c2.passed and c2.witness["n"] == 2
    assert not cmp.uniqueness_check(np.eye(2), R, 3).passed
    assert cmp.uniqueness_check(np.eye(2), R, 4).passed


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_condition3_implies_condition1(seed):
    rng = np.random.default_rng(seed)
    n = 4
    W = np.diag(rng.uniform(0.2, 1.0, n))
    R = rng.uniform(0, 0.5, (n, n))
    if cmp.uniqueness_check(W, R, 3).passed:
        assert cmp.uniqueness_check(W, R, 1).passed


def test_ising_condition3_threshold():
    space = StateSpace((2,) * 9)
    edges = grid_edges(3, 3)

    def passes(beta):
        rho = normalize(ising_model(space, {e: beta for e in edges}))
        return cmp.certify(cmp.build_rule(rho, rho, cmp.singleton_cover(9)), 3).passed

    assert passes(0.1) and not passes(1.0)


def test_certified_rule_has_unique_invariant_measure(rng):
    # any other measure fails invariance for some kernel of a certified rule
    for _ in range(10):
        rho = random_measure(rng, 4)
        rule = cmp.build_rule(rho, rho, cmp.singleton_cover(4))
        assert cmp.certify(rule, 3).passed
        other = random_measure(rng, 4)
        assert max(verify_invariance(other, g) for g in rule.gamma) > 1e-8


def test_cover_validation():
    with pytest.raises(ValueError):
        cmp.Cover([(0,), (1,)], [1.0, 0.0])
    with pytest.raises(ValueError):
        cmp.Cover([(0,)]).validate(StateSpace((2, 2)))
    labels = tuple((t, v) for t in range(4) for v in range(2))
    tc = cmp.temporal_cover(StateSpace((2,) * 8, labels), 2)
    assert tc.regions == [(0, 2), (4, 6), (1, 3), (5, 7)]


@pytest.mark.parametrize("beta", [0.1, 0.27, 0.6])
def test_grid_ising_influence_closed_form(beta):
    space = StateSpace((2,) * 9)
    rho = normalize(ising_model(space, {e: beta for e in grid_edges(3, 3)}))
    R = cmp.build_R(cmp.build_rule(rho, rho, cmp.singleton_cover(9)))
    # centre (site 4): three other neighbours sum to an odd number
    np.testing.assert_allclose(R[4, [1, 3, 5, 7]], 0.5 * np.tanh(2 * beta), atol=1e-14)
    # edge midpoint (site 1): two other neighbours can cancel
    np.testing.assert_allclose(R[1, [0, 2, 4]], np.tanh(beta), atol=1e-14)
    assert R[4].sum() == pytest.approx(max(R.sum(axis=1)))
