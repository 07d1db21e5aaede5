import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbscomp.core import StateSpace
from gibbscomp.oracle import (
    ExactMeasure,
    FactorModel,
    GuardExceeded,
    apply_kernel,
    check_guard,
    conditional_kernel,
    ising_model,
    marginal,
    normalize,
    product_measure,
    random_pairwise_model,
    tv_local,
    verify_invariance,
)


def brute_joint(model):
    space = model.space
    out = np.zeros(space.size)
    for idx, x in enumerate(space.configs()):
        w = 1.0
        for region, table in model.factors:
            sub = [space.cards[i] for i in region]
            pos = sum(x[i] * int(np.prod(sub[:a])) for a, i in enumerate(region))
            w *= table[pos]
        out[idx] = w
    return out / out.sum()


def test_factor_product_matches_loop(rng):
    space = StateSpace((2, 3, 2))
    model = random_pairwise_model(space, [(0, 1), (1, 2), (0, 2)], rng)
    np.testing.assert_allclose(normalize(model).probs, brute_joint(model), rtol=1e-13)


def test_normalize_simple_cases():
    space = StateSpace((3,))
    assert np.allclose(normalize(FactorModel(space, [((0,), np.ones(3))])).probs, 1 / 3)
    mu = product_measure(StateSpace((2, 2)), [[0.3, 0.7], [0.6, 0.4]])
    np.testing.assert_allclose(mu.tensor(), np.outer([0.3, 0.7], [0.6, 0.4]))


def test_two_site_ising_agreement_probability():
    b = 0.7
    mu = normalize(ising_model(StateSpace((2, 2)), {(0, 1): b}))
    agree = mu.probs[0] + mu.probs[3]
    assert agree == pytest.approx(np.exp(b) / (np.exp(b) + np.exp(-b)), abs=1e-14)


def test_ising_conditional_is_logistic():
    b = 0.4
    mu = normalize(ising_model(StateSpace((2, 2)), {(0, 1): b}))
    g = conditional_kernel(mu, [0])
    # row for x_1 = 1: P(x_0 = 1) = e^b / (e^b + e^-b)
    assert g.table[1, 1] == pytest.approx(1 / (1 + np.exp(-2 * b)), abs=1e-14)
    assert g.table[0, 1] == pytest.approx(1 / (1 + np.exp(2 * b)), abs=1e-14)


def test_marginals():
    mu = normalize(ising_model(StateSpace((2, 2, 2)), {(0, 1): 0.5, (1, 2): 0.5}))
    np.testing.assert_allclose(marginal(mu, [1]), [0.5, 0.5], atol=1e-15)
    np.testing.assert_array_equal(marginal(mu, [0, 1, 2]), mu.probs)
    p = product_measure(StateSpace((2, 3)), [[0.2, 0.8], [0.1, 0.3, 0.6]])
    np.testing.assert_allclose(marginal(p, [1]), [0.1, 0.3, 0.6])


def test_conditional_kernel_shapes_and_full_region(rng):
    mu = ExactMeasure.from_weights(StateSpace((2, 2)), rng.uniform(size=4))
    g = conditional_kernel(mu, [0, 1])
    np.testing.assert_allclose(g.table[0], mu.probs)
    assert verify_invariance(mu, g) <= 1e-15
    p = product_measure(StateSpace((2, 2, 2)), [[0.3, 0.7]] * 3)
    g = conditional_kernel(p, [1])
    assert np.allclose(g.table, g.table[0])


def test_chain_rule_reconstructs_joint(rng):
    space = StateSpace((2, 2, 3))
    mu = ExactMeasure.from_weights(space, rng.uniform(size=space.size))
    for J in ([0], [2], [0, 2]):
        g = conditional_kernel(mu, J)
        rows = g.rows()
        configs = space.configs()
        from gibbscomp.core import region_index
        ctx_marg = marginal(mu, g.context)[region_index(space, g.context, configs)]
        own = rows[np.arange(space.size), region_index(space, J, configs)]
        np.testing.assert_allclose(ctx_marg * own, mu.probs, atol=1e-12)


def test_invariance_fails_for_foreign_kernel():
    space = StateSpace((2, 2))
    mu = normalize(ising_model(space, {(0, 1): 0.8}))
    nu = normalize(ising_model(space, {(0, 1): -0.8}))
    assert verify_invariance(mu, conditional_kernel(nu, [0])) > 0.1


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_invariance_random_models(seed, n):
    rng = np.random.default_rng(seed)
    space = StateSpace((2,) * n)
    edges = [(i, i + 1) for i in range(n - 1)]
    mu = normalize(random_pairwise_model(space, edges, rng, 1.0))
    for J in [(i,) for i in range(n)] + [tuple(e) for e in edges]:
        assert verify_invariance(mu, conditional_kernel(mu, J)) <= 1e-12


def test_zero_mass_rows_are_flagged():
    space = StateSpace((2, 2))
    mu = ExactMeasure(space, [0.5, 0.5, 0.0, 0.0])  # x_1 = 1 has zero mass
    g = conditional_kernel(mu, [0])
    assert g.flagged == 1
    np.testing.assert_allclose(g.table[1], [0.5, 0.5])


def test_tv_local_conventions(rng):
    space = StateSpace((2,))
    a, b = ExactMeasure(space, [0.7, 0.3]), ExactMeasure(space, [0.4, 0.6])
    assert tv_local(a, a, [0]) == 0
    assert tv_local(a, b, [0]) == pytest.approx(2 * 0.3)
    assert tv_local(ExactMeasure(space, [1, 0]), ExactMeasure(space, [0, 1]), [0]) == 2
    s3 = StateSpace((2, 2, 2))
    mu = ExactMeasure.from_weights(s3, rng.uniform(size=8))
    nu = ExactMeasure.from_weights(s3, rng.uniform(size=8))
    for J, K in itertools.combinations([(0,), (0, 1), (0, 1, 2)], 2):
        assert tv_local(mu, nu, J) <= tv_local(mu, nu, K) + 1e-15


def test_apply_kernel_full_region_equals_measure(rng):
    space = StateSpace((2, 3))
    mu = ExactMeasure.from_weights(space, rng.uniform(size=6))
    out = apply_kernel(mu, conditional_kernel(mu, [0, 1]))
    np.testing.assert_allclose(out.probs, mu.probs, atol=1e-15)


def test_guard():
    check_guard(2**24)
    with pytest.raises(GuardExceeded):
        check_guard(2**24 + 1)
    with pytest.raises(GuardExceeded):
        FactorModel(StateSpace((2,) * 25)).unnormalized()
