"""Choice-value fixed points, choice rules and the probability simulator."""

import itertools

import numpy as np
import pytest

from tradeinno import (
    CHOICES,
    ChoicePair,
    DrawSet,
    ModelPrimitives,
    NoEntrantsError,
    Preferences,
    StructuralBeta,
    TransitionSet,
    ZCell,
    choice_values,
    conditional_prob_table,
    emax_solve,
    flow_payoff,
    hard_choice,
    simulate_conditional_prob,
    smoothed_probabilities,
    solve_commitment_values,
)
from tradeinno.dynamics import _flow_commit_all, choice_value_rows


def toy_prims(k=4, sigma=0.75, delta=0.95, seed=0, state_values=None):
    rng = np.random.default_rng(seed)
    mats = rng.dirichlet(np.ones(k) * 2.0, size=(4, k))
    return ModelPrimitives(
        prefs=Preferences(0.7517, 0.9163),
        sigma=sigma,
        transitions=TransitionSet(mats),
        delta=delta,
        state_values=state_values,
    )


BETA = StructuralBeta(-8.9705, 0.4345, -1.7658, 8.3171, -2.3615, 8.4302, -1.404)


def test_transition_set_validation():
    with pytest.raises(ValueError):
        TransitionSet(np.ones((4, 3, 3)))  # rows don't sum to 1
    with pytest.raises(ValueError):
        TransitionSet(np.stack([np.eye(1)] * 4))  # K < 2
    ts = TransitionSet(np.stack([np.eye(3)] * 4))
    assert ts.k == 3


def test_default_delta_and_state_values():
    prims = toy_prims()
    assert 1.0 - prims.delta == pytest.approx(0.05)
    assert np.array_equal(prims.state_values, [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ValueError):
        toy_prims(state_values=[2.0, 1.0, 3.0, 4.0])


def test_drawset_moments():
    draws = DrawSet.draw(1_000_000, seed=2028)
    for lam in (draws.lam1, draws.lam2):
        assert abs(lam.mean() - 1.0) < 0.01
        assert abs(lam.var() - 1.0) < 0.01
    assert abs(draws.eps3.mean()) < 0.01
    assert abs(np.corrcoef(draws.lam1, draws.lam2)[0, 1]) < 0.01


def test_flow_payoff_structure():
    prims = toy_prims()
    draws = DrawSet.draw(64, seed=1)
    cell = ZCell(2, 0, 0, 0)
    base = flow_payoff(ChoicePair(0, 0), cell, draws, BETA, prims)
    # (0,0) payoff has no beta terms at all
    other = flow_payoff(ChoicePair(0, 0), cell, draws, StructuralBeta(1, 2, 3, 4, 5, 6, 7), prims)
    assert np.array_equal(base, other)
    # lagged exporter pays no entry cost; the difference is exactly it
    f_new = flow_payoff(ChoicePair(0, 1), ZCell(2, 0, 0, 0), draws, BETA, prims)
    f_old = flow_payoff(ChoicePair(0, 1), ZCell(2, 0, 1, 0), draws, BETA, prims)
    expected = np.exp(BETA.b3) + draws.eps5
    np.testing.assert_allclose(f_old - f_new, expected, rtol=1e-12)
    # reference magnitude: exp(8.3171) per unit of fixed production cost
    assert np.exp(BETA.b3) == pytest.approx(4093.0, abs=0.5)


def test_commitment_fixed_point_geometric_cases():
    # K=2 identity chain, disc = 0.9, flows (1, 0) -> w = (10, 0)
    ts = TransitionSet(np.stack([np.eye(2)] * 4))
    prims = ModelPrimitives(
        prefs=Preferences(0.5, 0.6), sigma=0.9 / 0.95, transitions=ts,
        delta=0.95, state_values=[1.0, 2.0],
    )
    assert prims.disc == pytest.approx(0.9)
    draws = DrawSet(np.array([1.0]), np.array([1.0]), *[np.zeros(1)] * 4)
    flows = _flow_commit_all(StructuralBeta(0, 0, 0, 0, 0, 0, 0), draws, prims)[0, :, 0]
    w = solve_commitment_values(CHOICES[0], StructuralBeta(0, 0, 0, 0, 0, 0, 0), draws, prims)
    np.testing.assert_allclose(w[0], flows / (1.0 - 0.9), rtol=1e-12)


def test_commitment_matches_value_iteration():
    # linear solve vs 500-iteration value iteration on random K=4 instances;
    # moderate costs and clipped capability draws keep values O(1e2) so the
    # absolute 1e-8 agreement bound is meaningful
    beta = StructuralBeta(-8.0, 0.2, -0.5, 2.0, -0.8, 1.5, -0.5)
    for trial in range(100):
        prims = toy_prims(seed=trial, state_values=[1.0, 1.3, 1.6, 2.0])
        draws = DrawSet.draw(8, seed=trial + 1)
        draws = DrawSet(np.minimum(draws.lam1, 3.0), np.minimum(draws.lam2, 3.0),
                        draws.eps3, draws.eps4, draws.eps5, draws.eps6)
        for choice in CHOICES:
            w = solve_commitment_values(choice, beta, draws, prims)
            flows = _flow_commit_all(beta, draws, prims)[:, :, choice.index]
            m = prims.transitions.matrices[choice.index]
            w_it = np.zeros_like(flows)
            for _ in range(500):
                w_it = flows + prims.disc * w_it @ m.T
            assert np.abs(w - w_it).max() < 1e-8
            resid = np.abs(w - (flows + prims.disc * w @ m.T)).max()
            assert resid < 1e-10


def test_contraction_property():
    rng = np.random.default_rng(5)
    prims = toy_prims(seed=9)
    for choice in CHOICES:
        m = prims.transitions.matrices[choice.index]
        for _ in range(50):
            w1 = rng.normal(size=4) * 10
            w2 = rng.normal(size=4) * 10
            t1 = prims.disc * m @ w1
            t2 = prims.disc * m @ w2
            assert np.abs(t1 - t2).max() <= prims.disc * np.abs(w1 - w2).max() + 1e-12


def test_choice_values_beta_free_v00_and_cost_dominance():
    prims = toy_prims(seed=3)
    draws = DrawSet.draw(128, seed=4)
    cell = ZCell(3, 0, 0, 1)
    v_a = choice_values(cell, BETA, draws, prims)
    v_b = choice_values(cell, StructuralBeta(0, -3, 2, 1, 0, -1, 2), draws, prims)
    assert np.array_equal(v_a[:, 0], v_b[:, 0])  # bitwise
    # prohibitive costs push every active choice far below (0,0)
    expensive = StructuralBeta(-8.9705, 30.0, 30.0, 30.0, 0.0, 30.0, 0.0)
    v = choice_values(ZCell(3, 0, 0, 0), expensive, draws, prims)
    assert np.all(v[:, 3] < v[:, 0])


def test_choice_values_monotone_in_lam1():
    prims = toy_prims(seed=6)
    values = []
    for lam1 in (0.5, 1.0, 2.0):
        draws = DrawSet(np.array([lam1]), np.array([1.0]), *[np.zeros(1)] * 4)
        values.append(choice_values(ZCell(2, 0, 0, 0), BETA, draws, prims)[0, 0])
    assert values[0] < values[1] < values[2]


def test_hard_choice_rules_and_brute_force():
    assert hard_choice(np.array([1.0, 0, 0, 0])) == ChoicePair(0, 0)
    assert hard_choice(np.array([0.0, 0, 0, 1.0])) == ChoicePair(1, 1)
    # tie priority: (0,0) wins exact ties
    assert hard_choice(np.array([1.0, 1.0, 1.0, 1.0])) == ChoicePair(0, 0)
    rng = np.random.default_rng(123)
    vals = rng.normal(size=(100_000, 4))
    for row in vals[:: 500]:
        assert hard_choice(row).index == int(np.argmax(row))
    # vectorized check of the full sample
    np.testing.assert_array_equal(
        np.array([hard_choice(v).index for v in vals[:2000]]),
        np.argmax(vals[:2000], axis=1),
    )


def test_smoothed_probabilities_properties():
    p = smoothed_probabilities(np.zeros(4))
    np.testing.assert_allclose(p, 0.25)
    p = smoothed_probabilities(np.array([0.0, 0.0, 0.0, np.log(3.0)]))
    assert p[3] == pytest.approx(0.5, rel=1e-12)
    rng = np.random.default_rng(17)
    vals = rng.normal(size=(1000, 4)) * 5
    probs = smoothed_probabilities(vals, scale=1.0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((probs > 0) & (probs < 1))
    # scale -> 0 recovers the hard argmax
    sharp = smoothed_probabilities(vals, scale=1e-9)
    np.testing.assert_array_equal(np.argmax(sharp, axis=1), np.argmax(vals, axis=1))
    with pytest.raises(ValueError):
        smoothed_probabilities(vals, scale=0.0)


def test_simulate_conditional_prob_gating():
    prims = toy_prims(seed=8)
    draws = DrawSet.draw(500, seed=9)
    cell = ZCell(1, 0, 0, 0)
    prob = simulate_conditional_prob(cell, BETA, draws, prims)
    assert 0.0 <= prob <= 1.0
    # prohibitive entry costs drive the joint probability to ~0
    blocked = StructuralBeta(-8.9705, 0.4345, -1.7658, 30.0, 0.0, 30.0, 0.0)
    assert simulate_conditional_prob(cell, blocked, draws, prims) < 1e-6
    # no entrants: make the no-activity value always negative via the state grid
    tiny = ModelPrimitives(
        prefs=prims.prefs, sigma=prims.sigma, transitions=prims.transitions,
        state_values=np.array([1e-6, 2e-6, 3e-6, 4e-6]),
    )
    with pytest.raises(NoEntrantsError) as err:
        simulate_conditional_prob(cell, BETA, draws, tiny)
    assert err.value.cell == cell


def test_entry_cost_option_value_per_draw():
    # with positive realized entry costs, the smoothed (1,1) probability is
    # strictly larger when the activities were already active last period;
    # moderate entry costs keep the softmax terms above underflow
    prims = toy_prims(seed=10, state_values=[1.0, 1.3, 1.6, 2.0])
    beta = StructuralBeta(-8.0, 0.0, -0.5, 1.2, -0.5, 1.2, -0.5)
    draws = DrawSet.draw(200, seed=12)
    v_fresh = choice_values(ZCell(2, 0, 0, 0), beta, draws, prims)
    v_incumbent = choice_values(ZCell(2, 1, 1, 0), beta, draws, prims)
    p_fresh = smoothed_probabilities(v_fresh)[:, 3]
    p_inc = smoothed_probabilities(v_incumbent)[:, 3]
    positive = (np.exp(beta.b3) + draws.eps5 > 0) & (np.exp(beta.b5) + draws.eps6 > 0)
    # exclude draws saturated at 0 or 1 in double precision on both sides
    keep = positive & (p_fresh > 0) & (p_inc < 1)
    assert keep.sum() > 100
    assert np.all(p_inc[keep] > p_fresh[keep])


def test_conditional_prob_table_matches_percell():
    prims = toy_prims(seed=14, state_values=[1.0, 1.5, 2.0, 2.5])
    draws = DrawSet.draw(300, seed=15)
    beta = StructuralBeta(-3.0, 0.0, -0.5, 3.0, -1.0, 2.5, -0.5)
    probs, n_entered = conditional_prob_table(beta, draws, prims)
    for cell in [ZCell(k, l1, l2, b) for k in (1, 4) for l1 in (0, 1) for l2 in (0, 1) for b in (0, 1)]:
        want = simulate_conditional_prob(cell, beta, draws, prims)
        got = probs[cell.state - 1, cell.lag1, cell.lag2, cell.is_big]
        assert got == pytest.approx(want, abs=1e-14)
    assert np.all(n_entered >= 0)


def test_emax_dominates_commitment_and_limits():
    prims = toy_prims(k=2, seed=20, state_values=[1.0, 2.0])
    draws = DrawSet.draw(60, seed=21)
    beta = StructuralBeta(-3.0, 0.1, -1.0, 2.0, -0.5, 2.0, -0.5)
    vstar = emax_solve(beta, draws, prims, is_big=0)
    for k, l1, l2 in itertools.product((1, 2), (0, 1), (0, 1)):
        cv = choice_values(ZCell(k, l1, l2, 0), beta, draws, prims)
        assert np.all(vstar[:, k - 1, l1, l2] >= cv.max(axis=1) - 1e-9)
    # sup-norm Bellman residual below 1e-10: one explicit update moves nothing
    updated = np.full_like(vstar, -np.inf)
    for c, choice in enumerate(CHOICES):
        cont = vstar[:, :, choice.chi1, choice.chi2] @ prims.transitions.matrices[c].T
        for l1, l2 in itertools.product((0, 1), (0, 1)):
            flows = np.stack(
                [flow_payoff(choice, ZCell(k, l1, l2, 0), draws, beta, prims) for k in (1, 2)],
                axis=1,
            )
            updated[:, :, l1, l2] = np.maximum(updated[:, :, l1, l2], flows + prims.disc * cont)
    assert np.abs(updated - vstar).max() < 1e-10
    # disc -> 0: the value function collapses to the max flow payoff
    myopic = ModelPrimitives(
        prefs=prims.prefs, sigma=1e-12, transitions=prims.transitions,
        delta=1e-12, state_values=prims.state_values,
    )
    v0 = emax_solve(beta, draws, myopic, is_big=0)
    for k, l1, l2 in itertools.product((1, 2), (0, 1), (0, 1)):
        flows = np.stack(
            [flow_payoff(c, ZCell(k, l1, l2, 0), draws, beta, myopic) for c in CHOICES],
            axis=1,
        )
        np.testing.assert_allclose(v0[:, k - 1, l1, l2], flows.max(axis=1), atol=1e-9)


def test_emax_matches_policy_enumeration():
    # K=2 toy: exhaustive evaluation of all 4^8 stationary policies
    prims = toy_prims(k=2, seed=30, state_values=[1.0, 2.0])
    draws = DrawSet(np.array([0.9]), np.array([0.8]),
                    np.array([0.1]), np.array([-0.2]), np.array([0.3]), np.array([0.0]))
    beta = StructuralBeta(-1.5, 0.0, -0.5, 1.0, -0.3, 0.8, -0.2)
    vstar = emax_solve(beta, draws, prims, is_big=0)[0]  # (K, 2, 2)

    points = [(k, l1, l2) for k in (0, 1) for l1 in (0, 1) for l2 in (0, 1)]
    flows = {}
    for c, choice in enumerate(CHOICES):
        for k, l1, l2 in points:
            flows[(k, l1, l2, c)] = float(
                flow_payoff(choice, ZCell(k + 1, l1, l2, 0), draws, beta, prims)[0]
            )
    best = np.full(8, -np.inf)
    disc = prims.disc
    mats = prims.transitions.matrices
    for policy in itertools.product(range(4), repeat=8):
        a = np.eye(8)
        f = np.empty(8)
        for i, (k, l1, l2) in enumerate(points):
            c = policy[i]
            f[i] = flows[(k, l1, l2, c)]
            nxt_l1, nxt_l2 = CHOICES[c].chi1, CHOICES[c].chi2
            for j in (0, 1):  # next state index
                col = points.index((j, nxt_l1, nxt_l2))
                a[i, col] -= disc * mats[c][k, j]
        v_pol = np.linalg.solve(a, f)
        best = np.maximum(best, v_pol)
    flat_vstar = np.array([vstar[k, l1, l2] for (k, l1, l2) in points])
    np.testing.assert_allclose(flat_vstar, best, rtol=1e-8, atol=1e-8)


def test_choice_value_rows_matches_cellwise():
    prims = toy_prims(seed=40)
    draws = DrawSet.draw(6, seed=41)
    states = np.array([1, 2, 3, 4, 2, 3])
    lag1 = np.array([0, 1, 0, 1, 0, 1])
    lag2 = np.array([1, 0, 0, 1, 1, 0])
    big = np.array([0, 0, 1, 1, 0, 1])
    rows = choice_value_rows(states, lag1, lag2, big, draws, BETA, prims)
    for i in range(6):
        one = DrawSet(
            draws.lam1[i : i + 1], draws.lam2[i : i + 1], draws.eps3[i : i + 1],
            draws.eps4[i : i + 1], draws.eps5[i : i + 1], draws.eps6[i : i + 1],
        )
        cell = ZCell(int(states[i]), int(lag1[i]), int(lag2[i]), int(big[i]))
        np.testing.assert_allclose(rows[i], choice_values(cell, BETA, one, prims)[0], rtol=1e-12)
