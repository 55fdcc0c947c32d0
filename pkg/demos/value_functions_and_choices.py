"""Dynamic layer: commitment values, entry, and the option value of history.

Run:  python3 demos/value_functions_and_choices.py
"""

import numpy as np

from tradeinno import (
    CHOICES,
    DrawSet,
    ModelPrimitives,
    Preferences,
    StructuralBeta,
    TransitionSet,
    ZCell,
    choice_values,
    hard_choice,
    simulate_conditional_prob,
    smoothed_probabilities,
    solve_commitment_values,
)

mats = np.array(
    [
        [[0.95, 0.05], [0.06, 0.94]],
        [[0.92, 0.08], [0.04, 0.96]],
        [[0.92, 0.08], [0.04, 0.96]],
        [[0.89, 0.11], [0.02, 0.98]],
    ]
)
prims = ModelPrimitives(
    prefs=Preferences(0.75, 0.92), sigma=0.75,
    transitions=TransitionSet(mats), state_values=[1.8, 2.0],
)
beta = StructuralBeta(-4.3, 0.0, -0.7, 9.0, -6.0, 1.7, 6.2)
print(f"discounting: delta = {prims.delta}, survival sigma = {prims.sigma}, "
      f"effective factor {prims.disc:.4f}")

one = DrawSet(np.array([1.0]), np.array([1.0]), *[np.zeros(1)] * 4)
print("\nCommitment values by state for a median firm (units of the fixed cost)")
for choice in CHOICES:
    w = solve_commitment_values(choice, beta, one, prims)[0]
    print(f"  always ({choice.chi1},{choice.chi2}): " + "  ".join(f"{v:9.2f}" for v in w))

print("\nChoice values at state 2 depend on history through entry costs")
for lag1, lag2 in ((0, 0), (0, 1), (1, 1)):
    v = choice_values(ZCell(2, lag1, lag2, 0), beta, one, prims)[0]
    pick = hard_choice(v)
    print(f"  lags ({lag1},{lag2}): v = " + " ".join(f"{x:9.2f}" for x in v)
          + f"  -> chooses ({pick.chi1},{pick.chi2})")

print("\nKernel-smoothed choice probabilities at those values (scale 1)")
v = choice_values(ZCell(2, 0, 1, 0), beta, one, prims)[0]
probs = smoothed_probabilities(v)
for choice, p in zip(CHOICES, probs):
    print(f"  Pr({choice.chi1},{choice.chi2}) = {p:.4f}")

print("\nSimulated joint probability, conditional on entry and staying")
draws = DrawSet.draw(20000, seed=7)
for cell in (ZCell(1, 0, 0, 0), ZCell(2, 0, 0, 1), ZCell(2, 1, 1, 0), ZCell(2, 1, 1, 1)):
    p = simulate_conditional_prob(cell, beta, draws, prims)
    print(f"  z = (state {cell.state}, lags {cell.lag1}{cell.lag2}, big {cell.is_big}): "
          f"Pr(innovate & export) = {p:.4f}")
print("history matters: incumbents skip the entry costs, so both-active lags"
      "\nraise the joint probability by an order of magnitude")
