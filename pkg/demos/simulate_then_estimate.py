"""Round trip through the library API: simulate a panel, run all four steps.

The dynamic criterion has a long shallow ridge, so the full draw count and
optimizer budgets matter; with the production settings below the recovered
dynamic parameters land close to the truth (run the acceptance suite to see
them bracketed by bootstrap standard errors).

Run:  python3 demos/simulate_then_estimate.py       (about a minute)
"""

import numpy as np
import pandas as pd

from tradeinno import (
    ModelPrimitives,
    Preferences,
    SimConfig,
    StructuralBeta,
    TransitionSet,
    simulate_panel,
)
from tradeinno.pipeline import PipelineConfig, run_pipeline

mats = np.array(
    [
        [[0.95, 0.05], [0.06, 0.94]],
        [[0.92, 0.08], [0.04, 0.96]],
        [[0.92, 0.08], [0.04, 0.96]],
        [[0.89, 0.11], [0.02, 0.98]],
    ]
)
truth = StructuralBeta(-4.3, 0.0, -0.7, 9.0, -6.0, 1.7, 6.2)
prims = ModelPrimitives(
    prefs=Preferences(0.75, 0.92), sigma=0.75,
    transitions=TransitionSet(mats), state_values=[1.8, 2.0],
)
years = list(range(2000, 2008))
aggregates = pd.DataFrame(
    {"year": years, "gni_pc_home": 100.0, "gni_pc_world": 1000.0,
     "dwto": [int(y >= 2002) for y in years]}
)
config = SimConfig(
    n_entrants_per_year=62, years=years, true_beta=truth, prims=prims,
    aggregates=aggregates, seed=13, alpha1_true=-0.135,
    noise_tvc=0.05, noise_lny=0.05, burn_in=10, endowment_mode="truncated",
)
panel = simulate_panel(config)
print(f"simulated {len(panel)} firm-years, {panel['firm_id'].nunique()} firms")

pipe = PipelineConfig(
    seed=99, k_states=2, d_draws=1000, state_values=[1.8, 2.0],
    trade_boot=40, dynamic_boot=0,
)
report, _ = run_pipeline(panel, aggregates, pipe)

print("\nstep 1: CES preferences")
print(f"  rho       = {report['ces']['rho_hat']:.4f}   (truth 0.75)")
print(f"  rho_tilde = {report['ces']['rho_tilde_hat']:.4f}   (truth 0.92)")
print("\nstep 2: liberalization effect on the iceberg trade cost")
print(f"  alpha1 = {report['trade_cost']['alpha1']:.4f}  "
      f"(bootstrap se {report['trade_cost']['se_alpha1']:.4f}, truth -0.135)")
print("\nstep 3: survival and transitions")
print(f"  sigma = {report['exit']['sigma_hat']:.4f}   (truth 0.75)")
err = np.abs(np.asarray(report["transitions"]["matrices"]) - mats).max()
print(f"  transition matrices max-abs deviation from truth: {err:.4f}")
print("\nstep 4: dynamic choice parameters (truth in brackets)")
for name, b, t in zip(report["dynamic"]["beta_names"], report["dynamic"]["beta"], truth.as_array()):
    print(f"  {name} = {b:8.3f}   [{t}]")
print(f"  Q = {report['dynamic']['q']:.6f} over {report['dynamic']['n_used']} observations")
print("\nentry costs (beta3, beta5) sit far above fixed costs (beta1, beta2),")
print("the pattern that makes starting to export or innovate an investment.")
print("the criterion is flat in the fixed-cost levels once they are small, so")
print("beta1/beta2 wander while the entry-cost parameters stay pinned; the")
print("acceptance suite brackets beta0, beta3, beta5 with bootstrap errors")
