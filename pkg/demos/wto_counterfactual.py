"""Liberalization counterfactual via the command-line pipeline.

Simulates a panel, estimates everything, and compares the observed joint
export-and-innovation frequency with the model's counterfactual (trade costs
at their post-liberalization level in every year).

Run:  python3 demos/wto_counterfactual.py      (a few minutes)
"""

import tempfile
from pathlib import Path

import pandas as pd

from tradeinno.cli import main

scratch = Path(tempfile.mkdtemp(prefix="tradeinno_demo_"))
cfg = scratch / "sim.cfg"
cfg.write_text(
    "n_entrants_per_year = 62\n"
    "years = 2000,2001,2002,2003,2004,2005,2006,2007\n"
    "wto_year = 2002\n"
    "seed = 13\n"
    "burn_in = 10\n"
    "endowment_mode = truncated\n"
    "noise_tvc = 0.05\n"
    "noise_lny = 0.05\n"
)
est = scratch / "est.cfg"
est.write_text(
    "seed = 99\n"
    "k_states = 2\n"
    "state_values = 1.8,2.0\n"
    "draws = 400\n"
    "trade_boot = 40\n"
    "bootstrap = 0\n"
    "sa_maxiter = 60\n"
    "sa_maxfun = 2000\n"
)

assert main(["simulate", "--config", str(cfg), "--out", str(scratch)]) == 0
assert main([
    "estimate", "--config", str(est), "--panel", str(scratch / "panel.csv"),
    "--aggregates", str(scratch / "aggregates.csv"), "--out", str(scratch),
]) == 0
assert main([
    "counterfactual", "--report", str(scratch / "report.json"),
    "--panel", str(scratch / "panel.csv"), "--out", str(scratch),
]) == 0

series = pd.read_csv(scratch / "counterfactual.csv")
print("\nobserved vs counterfactual joint export-and-innovation probability")
print(series.to_string(index=False))
gap = series["simulated"] - series["observed"]
pre = gap[series["regime"] == "pre"].mean()
post = gap[series["regime"] == "post"].mean()
print(f"\nmean gap before liberalization: {pre:.4f}")
print(f"mean gap after liberalization:  {post:.4f}")
print(f"difference-in-differences:      {pre - post:.4f}")
print("\nthe pre-period gap is larger: holding trade costs at their low")
print("post-liberalization level would have raised joint activity before the")
print("reform, which is the liberalization effect read off the gap difference")
print(f"\noutputs kept in {scratch}")
