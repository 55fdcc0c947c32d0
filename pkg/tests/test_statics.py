"""Closed-form statics against independent numerical oracles."""

import numpy as np
import pytest

from tradeinno import (
    ChoicePair,
    CostStructure,
    Endowments,
    MarketEnv,
    Preferences,
    marginal_cost,
    optimal_eta,
    optimal_prices,
    period_profit,
    revenues,
)
from tradeinno.statics import lambda2_hat


def gross_profit_domestic(endow, env, prefs, eta):
    """Oracle: (p - c) q at the markup price, evaluated from demand."""
    c = marginal_cost(endow, env, prefs, eta)
    p = c / prefs.rho
    q = env.a * p ** (1.0 / (prefs.rho - 1.0))
    return (p - c) * q


def random_inputs(rng):
    prefs = Preferences(rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.95))
    endow = Endowments(rng.lognormal(0, 0.5), rng.lognormal(0, 0.5), rng.lognormal(0, 0.3))
    env = MarketEnv(rng.lognormal(0, 0.5), rng.lognormal(0, 0.5),
                    rng.lognormal(1, 0.3), rng.lognormal(0, 0.3))
    return prefs, endow, env


def test_marginal_cost_eta_zero_collapses_aggregator():
    endow = Endowments(1.0, 1.0, 3.0)
    env = MarketEnv(1.0, 1.0, 10.0, 5.0)
    prefs = Preferences(0.5, 0.6)
    assert marginal_cost(endow, env, prefs, 0.0) == pytest.approx(2.0, rel=1e-12)


def test_marginal_cost_hand_value():
    # lambda2=1, zeta=1, rho=0.5, eta=1: aggregator (1+1)^2 = 4, c = 2/4
    endow = Endowments(1.0, 1.0, 1.0)
    env = MarketEnv(1.0, 1.0, 1.0, 1.0)
    assert marginal_cost(endow, env, Preferences(0.5, 0.6), 1.0) == pytest.approx(0.5, rel=1e-12)


def test_marginal_cost_inverse_in_lambda1():
    env = MarketEnv(1.0, 1.0, 3.0, 2.0)
    prefs = Preferences(0.6, 0.7)
    c1 = marginal_cost(Endowments(1.0, 2.0, 1.5), env, prefs, 0.7)
    c2 = marginal_cost(Endowments(2.0, 2.0, 1.5), env, prefs, 0.7)
    assert c2 == pytest.approx(c1 / 2.0, rel=1e-12)


def test_marginal_cost_rejects_bad_inputs():
    with pytest.raises(ValueError):
        Endowments(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        MarketEnv(1.0, 1.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        marginal_cost(Endowments(1, 1, 1), MarketEnv(1, 1, 1, 1), Preferences(0.5, 0.5), -0.1)


def test_optimal_eta_identity_cases():
    prefs = Preferences(0.37, 0.5)
    assert optimal_eta(Endowments(1.0, 1.0, 1.0), prefs) == pytest.approx(1.0)
    assert optimal_eta(Endowments(1.0, 2.0, 1.0), Preferences(0.5, 0.5)) == pytest.approx(4.0)


def test_optimal_eta_matches_grid_argmax_fine():
    # single draw, one-shot 1e6-point grid over [0, 10 * eta_formula]
    rng = np.random.default_rng(7)
    prefs, endow, env = random_inputs(rng)
    eta_star = optimal_eta(endow, prefs)
    grid = np.linspace(0.0, 10.0 * eta_star, 1_000_000)
    profits = np.array([gross_profit_domestic(endow, env, prefs, e) for e in grid[:: 10_000]])
    # coarse pass to bracket, then exact dense evaluation near the bracket
    coarse = grid[:: 10_000]
    k = int(np.argmax(profits))
    lo, hi = coarse[max(k - 1, 0)], coarse[min(k + 1, len(coarse) - 1)]
    dense = np.linspace(lo, hi, 200_001)
    dense_profits = np.array([gross_profit_domestic(endow, env, prefs, e) for e in dense[::100]])
    best = dense[::100][int(np.argmax(dense_profits))]
    assert abs(best - eta_star) <= (hi - lo) / 2000 + 1e-9


def test_optimal_eta_grid_oracle_thousand_draws():
    # two-stage grid (coarse then refined) at effective 1e6 resolution
    rng = np.random.default_rng(42)
    for _ in range(1000):
        prefs, endow, env = random_inputs(rng)
        eta_star = optimal_eta(endow, prefs)
        hi = 10.0 * eta_star
        coarse = np.linspace(0.0, hi, 1001)
        cp = gross_profit_vec(endow, env, prefs, coarse)
        k = int(np.argmax(cp))
        lo2, hi2 = coarse[max(k - 1, 0)], coarse[min(k + 1, 1000)]
        fine = np.linspace(lo2, hi2, 2001)
        fp = gross_profit_vec(endow, env, prefs, fine)
        best = fine[int(np.argmax(fp))]
        step = fine[1] - fine[0]
        assert abs(best - eta_star) <= step + 1e-12, (endow, prefs)


def gross_profit_vec(endow, env, prefs, etas):
    """Vectorized oracle of the domestic gross profit over an eta grid."""
    rho = prefs.rho
    agg = np.ones_like(etas)
    pos = etas > 0
    agg[pos] = (1.0 + endow.zeta**rho * etas[pos] ** rho) ** (1.0 / rho)
    c = (endow.lambda2 + etas) * env.w_plus_m / (endow.lambda2 * agg * endow.lambda1 * env.psi)
    p = c / rho
    q = env.a * p ** (1.0 / (rho - 1.0))
    return (p - c) * q


def test_prices_markup_and_foc():
    assert optimal_prices(1.0, 1.0, Preferences(0.5, 0.6))[0] == pytest.approx(2.0)
    p_tilde = optimal_prices(1.0, 1.2, Preferences(0.5, 0.9163))[1]
    assert p_tilde == pytest.approx(1.2 / 0.9163, rel=1e-12)
    # central-difference derivative of (p - c) A p^(1/(rho-1)) vanishes at p = c/rho
    rng = np.random.default_rng(3)
    for _ in range(1000):
        rho = rng.uniform(0.2, 0.9)
        c = rng.lognormal(0, 0.5)
        a = rng.lognormal(0, 0.5)
        p = c / rho
        h = p * 1e-5

        def profit(price):
            return (price - c) * a * price ** (1.0 / (rho - 1.0))

        deriv = (profit(p + h) - profit(p - h)) / (2 * h)
        assert abs(deriv * p) < 1e-6 * abs(profit(p)) + 1e-12


def test_revenues_trivial_and_monotone_in_tau():
    env = MarketEnv(1.0, 1.0, 1.0, 1.0)
    prefs = Preferences(0.5, 0.8)
    r, _ = revenues(env, prefs, 1.0, 1.0)
    assert r == pytest.approx(0.5, rel=1e-12)
    _, rt_low = revenues(env, prefs, 1.0, 1.0)
    _, rt_high = revenues(env, prefs, 1.0, 1.5)
    assert rt_high < rt_low


def test_variable_cost_identity():
    # c q = rho R and tau c q~ = rho~ R~, both evaluated independently from demand
    rng = np.random.default_rng(11)
    for _ in range(1000):
        prefs, endow, env = random_inputs(rng)
        tau = rng.uniform(1.0, 2.0)
        c = marginal_cost(endow, env, prefs, 0.0)
        r, rt = revenues(env, prefs, c, tau)
        p, pt = optimal_prices(c, tau, prefs)
        q = env.a * p ** (1.0 / (prefs.rho - 1.0))
        qt = env.a_tilde * pt ** (1.0 / (prefs.rho_tilde - 1.0))
        assert c * q == pytest.approx(prefs.rho * r, rel=1e-12)
        assert tau * c * qt == pytest.approx(prefs.rho_tilde * rt, rel=1e-12)


def make_costs(rng, tau=None):
    return CostStructure(
        f=rng.lognormal(0, 0.3),
        f_n=rng.lognormal(0, 0.3),
        f_n_e=rng.lognormal(1, 0.3),
        f_e=rng.lognormal(0, 0.3),
        f_e_e=rng.lognormal(1, 0.3),
        tau=tau if tau is not None else rng.uniform(1.0, 2.0),
    )


def test_period_profit_structure():
    rng = np.random.default_rng(5)
    prefs, endow, env = random_inputs(rng)
    costs = make_costs(rng)
    # no export -> pi_tilde is zero
    _, pt = period_profit(ChoicePair(1, 0), ChoicePair(0, 0), endow, env, costs, prefs)
    assert pt == 0.0
    # repeat innovator pays the recurring cost only
    pi_rep, _ = period_profit(ChoicePair(1, 0), ChoicePair(1, 0), endow, env, costs, prefs)
    pi_new, _ = period_profit(ChoicePair(1, 0), ChoicePair(0, 0), endow, env, costs, prefs)
    assert pi_new == pytest.approx(pi_rep - costs.f_n_e, rel=1e-12)


def test_innovation_gain_scales_by_lambda2_hat():
    # negligible costs: the identities concern gross profits, and a material
    # fixed cost absorbs tiny export revenues in floating point
    rng = np.random.default_rng(6)
    tiny = CostStructure(1e-12, 1e-12, 1e-12, 1e-12, 1e-12, 1.0)
    for _ in range(200):
        prefs, endow, env = random_inputs(rng)
        tau = rng.uniform(1.0, 2.0)
        costs = CostStructure(tiny.f, tiny.f_n, tiny.f_n_e, tiny.f_e, tiny.f_e_e, tau)
        lags = ChoicePair(1, 1)  # gross comparison: no entry costs
        pi0, pt0 = period_profit(ChoicePair(0, 1), lags, endow, env, costs, prefs)
        pi1, pt1 = period_profit(ChoicePair(1, 1), lags, endow, env, costs, prefs)
        gross0 = pi0 + costs.f
        gross1 = pi1 + costs.f + costs.f_n
        l2h = lambda2_hat(endow, prefs)
        assert gross1 == pytest.approx(gross0 * (1.0 + l2h), rel=1e-8)
        # export gross profit scales by (1 + l2h)^((1-rho) rho~ / (rho (1-rho~)))
        e1 = (1 - prefs.rho) * prefs.rho_tilde / (prefs.rho * (1 - prefs.rho_tilde))
        gx0 = pt0 + costs.f_e
        gx1 = pt1 + costs.f_e
        assert gx1 == pytest.approx(gx0 * (1.0 + l2h) ** e1, rel=1e-8)


def test_trade_cost_comparative_static():
    # d(pi~(1))/d(tau) < d(pi~(0))/d(tau) < 0 by central differences on gross
    # export profit (fixed/entry costs do not depend on tau, and at extreme
    # draws they absorb the tiny revenue term in floating point)
    rng = np.random.default_rng(8)
    lags = ChoicePair(1, 1)
    for _ in range(1000):
        prefs, endow, env = random_inputs(rng)
        tau = rng.uniform(1.05, 2.0)
        h = tau * 1e-5

        def gross(t, chi1):
            costs = CostStructure(1e-12, 1e-12, 1e-12, 1e-12, 1e-12, t)
            pi_t = period_profit(ChoicePair(chi1, 1), lags, endow, env, costs, prefs)[1]
            return pi_t + costs.f_e

        d0 = (gross(tau + h, 0) - gross(tau - h, 0)) / (2 * h)
        d1 = (gross(tau + h, 1) - gross(tau - h, 1)) / (2 * h)
        assert d0 < 0
        assert d1 < d0


def test_profit_monotone_in_capabilities():
    rng = np.random.default_rng(9)
    prefs, endow, env = random_inputs(rng)
    costs = make_costs(rng)
    lags = ChoicePair(1, 1)
    for scale in (1.5, 3.0):
        hi1 = Endowments(endow.lambda1 * scale, endow.lambda2, endow.zeta)
        hi2 = Endowments(endow.lambda1, endow.lambda2 * scale, endow.zeta)
        base, _ = period_profit(ChoicePair(1, 1), lags, endow, env, costs, prefs)
        assert period_profit(ChoicePair(1, 1), lags, hi1, env, costs, prefs)[0] > base
        assert period_profit(ChoicePair(1, 1), lags, hi2, env, costs, prefs)[0] > base


def test_elasticities_match_reported_values():
    assert round(Preferences(0.7517, 0.9163).elasticity, 2) == 4.03
    assert round(Preferences(0.7517, 0.9163).elasticity_export, 2) == 11.95


def test_choice_pair_validation():
    with pytest.raises(ValueError):
        ChoicePair(2, 0)
    assert ChoicePair(1, 1).index == 3
