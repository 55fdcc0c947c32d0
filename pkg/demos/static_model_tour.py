"""Tour of the closed-form statics: costs, innovation, prices, revenues.

Run:  python3 demos/static_model_tour.py
"""

import numpy as np

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

prefs = Preferences(rho=0.7517, rho_tilde=0.9163)  # the headline estimates
endow = Endowments(lambda1=1.2, lambda2=0.9, zeta=1.1)
env = MarketEnv(a=50.0, a_tilde=5e5, w_plus_m=4.0, psi=2.0)
costs = CostStructure(f=1.0, f_n=0.2, f_n_e=30.0, f_e=0.5, f_e_e=40.0, tau=1.4)

print("CES preferences")
print(f"  domestic elasticity of substitution: {prefs.elasticity:.2f}")
print(f"  export elasticity of substitution:   {prefs.elasticity_export:.2f}")

eta = optimal_eta(endow, prefs)
print("\nInnovation intensity (new-to-old output ratio)")
print(f"  optimal eta = {eta:.3f}")
for trial in (0.0, 0.5 * eta, eta, 2.0 * eta):
    c = marginal_cost(endow, env, prefs, trial)
    print(f"  eta = {trial:7.3f} -> marginal cost {c:.4f}" + ("   <- minimum" if trial == eta else ""))

c_star = marginal_cost(endow, env, prefs, eta)
p, p_x = optimal_prices(c_star, costs.tau, prefs)
r, r_x = revenues(env, prefs, c_star, costs.tau)
print("\nMarkup pricing and revenues at the optimum")
print(f"  prices: domestic {p:.4f} (markup {p / c_star:.3f}), export {p_x:.4f}")
print(f"  revenues: domestic {r:.2f}, export {r_x:.2f}")
print(f"  variable-cost shares: {prefs.rho:.4f} R and {prefs.rho_tilde:.4f} R~ (exact identities)")

print("\nPer-period profits by choice (first year, no history)")
fresh = ChoicePair(0, 0)
for chi1 in (0, 1):
    for chi2 in (0, 1):
        pi, pi_x = period_profit(ChoicePair(chi1, chi2), fresh, endow, env, costs, prefs)
        print(f"  innovate={chi1} export={chi2}: domestic {pi:9.2f}, export {pi_x:9.2f}")

print("\nTrade liberalization raises the innovation payoff for exporters")
for tau in (1.4, 1.2):
    costs_t = CostStructure(costs.f, costs.f_n, costs.f_n_e, costs.f_e, costs.f_e_e, tau)
    gain = (
        period_profit(ChoicePair(1, 1), ChoicePair(1, 1), endow, env, costs_t, prefs)[1]
        - period_profit(ChoicePair(0, 1), ChoicePair(1, 1), endow, env, costs_t, prefs)[1]
    )
    print(f"  tau = {tau}: export-profit gain from innovating = {gain:.2f}")
