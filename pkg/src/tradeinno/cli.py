"""Batch command-line interface: simulate | estimate | counterfactual | report.

Configuration files are plain `key = value` text with `#` comments; values
are parsed as int, float, true/false, or comma-separated lists, in that
order.  Command-line flags override file values.  Every command is
deterministic given (config, seed) and never mutates its inputs; failures
exit nonzero after printing a one-line JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .counterfactual import adjust_beta0, counterfactual_series, did_effect
from .dynamics import ModelPrimitives, StructuralBeta, TransitionSet
from .estimation import EstimationError, apply_state, attach_cells
from .panelio import (
    SchemaError,
    derive_columns,
    load_json,
    read_aggregates,
    read_panel,
    save_json,
    write_aggregates,
    write_csv,
    write_panel,
)
from .pipeline import (
    PipelineConfig,
    report_beta,
    report_draws,
    report_prims,
    report_state_info,
    run_pipeline,
)
from .simulate import SimConfig, simulate_panel
from .statics import Preferences

# Built-in demo parameterization: a two-state economy with persistence-heavy
# transitions that activity shifts toward the better state, and cost
# parameters placed so that entry, quit and both single-activity margins all
# occur at observable rates (entry costs far above fixed costs).
DEFAULT_TRANSITIONS = {
    (0, 0): [[0.95, 0.05], [0.06, 0.94]],
    (0, 1): [[0.92, 0.08], [0.04, 0.96]],
    (1, 0): [[0.92, 0.08], [0.04, 0.96]],
    (1, 1): [[0.89, 0.11], [0.02, 0.98]],
}
DEFAULT_BETA = [-4.3, 0.0, -0.7, 9.0, -6.0, 1.7, 6.2]
DEFAULT_STATE_VALUES = [1.8, 2.0]


def parse_config_file(path) -> dict:
    """Parse the `key = value` config format."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = _parse_value(value.strip())
    return values


def _parse_value(text: str):
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if "," in text:
        return [_parse_value(t.strip()) for t in text.split(",")]
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            continue
    return text


def _setting(args, config: dict, key: str, default=None):
    """Flag value if given, else config-file value, else default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, default)


def _as_list(value):
    return value if isinstance(value, list) else [value]


def _transitions_from_config(config: dict, k_states: int) -> TransitionSet:
    keys = ["trans_00", "trans_01", "trans_10", "trans_11"]
    if not any(k in config for k in keys):
        if k_states != 2:
            raise ValueError("built-in default transitions are 2-state; supply trans_* for other K")
        return TransitionSet(np.stack([np.array(DEFAULT_TRANSITIONS[(c // 2, c % 2)]) for c in range(4)]))
    mats = []
    for key in keys:
        if key not in config:
            raise ValueError(f"config missing {key}")
        flat = np.asarray(config[key], dtype=float)
        if flat.size != k_states * k_states:
            raise ValueError(f"{key} needs {k_states * k_states} values")
        mats.append(flat.reshape(k_states, k_states))
    return TransitionSet(np.stack(mats))


def cmd_simulate(args) -> int:
    config = parse_config_file(args.config) if args.config else {}
    seed = _setting(args, config, "seed")
    if seed is None:
        raise ValueError("simulate requires a seed (--seed or config)")
    k_states = int(_setting(args, config, "k_states", 2))
    years = [int(y) for y in _as_list(config.get("years", list(range(2000, 2008))))]
    wto_year = int(config.get("wto_year", 2002))
    agg = pd.DataFrame(
        {
            "year": years,
            "gni_pc_home": float(config.get("gni_pc_home", 100.0)),
            "gni_pc_world": float(config.get("gni_pc_world", 1000.0)),
            "dwto": [int(y >= wto_year) for y in years],
        }
    )
    beta_vals = [float(config.get(f"beta{i}", DEFAULT_BETA[i])) for i in range(7)]
    state_values = None
    if "state_values" in config:
        state_values = [float(v) for v in _as_list(config["state_values"])]
    elif not any(f"trans_{c}" in config for c in ("00", "01", "10", "11")):
        state_values = DEFAULT_STATE_VALUES
    prims = ModelPrimitives(
        prefs=Preferences(float(config.get("rho", 0.75)), float(config.get("rho_tilde", 0.92))),
        sigma=float(config.get("sigma", 0.75)),
        transitions=_transitions_from_config(config, k_states),
        delta=float(config.get("delta", 0.95)),
        state_values=state_values,
    )
    sim = SimConfig(
        n_entrants_per_year=int(config.get("n_entrants_per_year", 60)),
        years=years,
        true_beta=StructuralBeta(*beta_vals),
        prims=prims,
        aggregates=agg,
        seed=int(seed),
        alpha1_true=float(config.get("alpha1_true", -0.135)),
        noise_tvc=float(config.get("noise_tvc", 0.0)),
        noise_lny=float(config.get("noise_lny", 0.0)),
        burn_in=int(config.get("burn_in", 8)),
        endowment_mode=str(config.get("endowment_mode", "fixed")),
        eps_mode=str(config.get("eps_mode", "yearly")),
        raw_mode=bool(config.get("raw_mode", False)),
        processing_share=float(config.get("processing_share", 0.0)),
    )
    panel = simulate_panel(sim)
    out = Path(args.out)
    write_panel(out / "panel.csv", panel)
    write_aggregates(out / "aggregates.csv", agg)
    print(f"wrote {out / 'panel.csv'} ({len(panel)} rows, {panel['firm_id'].nunique()} firms)")
    print(f"wrote {out / 'aggregates.csv'} ({len(agg)} years)")
    return 0


def cmd_estimate(args) -> int:
    config = parse_config_file(args.config) if args.config else {}
    seed = _setting(args, config, "seed")
    if seed is None:
        raise ValueError("estimate requires a seed (--seed or config)")
    steps = _setting(args, config, "steps", [1, 2, 3, 4])
    if isinstance(steps, str):
        steps = [int(s) for s in steps.split(",")]
    pipeline_config = PipelineConfig(
        seed=int(seed),
        steps=tuple(int(s) for s in _as_list(steps)),
        k_states=int(_setting(args, config, "k_states", 4)),
        d_draws=int(_setting(args, config, "draws", 1000)),
        scale=float(_setting(args, config, "scale", 1.0)),
        mode=str(_setting(args, config, "mode", "commitment")),
        gate_numerator=bool(config.get("gate_numerator", True)),
        use_state_column=not bool(_setting(args, config, "rebuild_state", False)),
        isbig_threshold=config.get("isbig_threshold"),
        filter_processing=bool(_setting(args, config, "filter_processing", False)),
        trade_spec=str(_setting(args, config, "trade_spec", "dwto")),
        trade_method=str(config.get("trade_method", "re")),
        trade_boot=int(config.get("trade_boot", 200)),
        transition_boot=int(config.get("transition_boot", 0)),
        dynamic_boot=int(_setting(args, config, "bootstrap", 0)),
        delta=float(config.get("delta", 0.95)),
        state_values=[float(v) for v in _as_list(config["state_values"])] if "state_values" in config else None,
        postwto_only=bool(config.get("postwto_only", True)),
        bound=float(config.get("bound", 15.0)),
        sa_maxiter=int(config.get("sa_maxiter", 150)),
        sa_maxfun=int(config.get("sa_maxfun", 4000)),
        nm_maxfev=int(config.get("nm_maxfev", 4000)),
        workers=int(_setting(args, config, "workers", 1)),
    )
    panel = read_panel(args.panel)
    aggregates = read_aggregates(args.aggregates)
    prior = load_json(args.prior_report) if args.prior_report else None
    report, artifacts = run_pipeline(panel, aggregates, pipeline_config, prior_report=prior)
    out = Path(args.out)
    save_json(out / "report.json", report)
    for name, frame in artifacts.items():
        if frame is not None:
            write_csv(out / f"{name}.csv", frame)
    print(f"wrote {out / 'report.json'}")
    if report["failed_step"] is not None:
        record = {"error": report["error"], "type": "step_failure", "failed_step": report["failed_step"]}
        print(json.dumps(record), file=sys.stderr)
        return 3
    return 0


def cmd_counterfactual(args) -> int:
    report = load_json(args.report)
    for key in ("dynamic", "ces", "exit", "transitions"):
        if report.get(key) is None:
            raise EstimationError(f"report lacks field {key!r}; run the estimation steps first")
    beta = report_beta(report)
    prims = report_prims(report)
    draws = report_draws(report)
    cfg = report["config"]
    panel = derive_columns(read_panel(args.panel))
    info = report_state_info(report)
    if info.source == "pca":
        panel = apply_state(panel, info)
    else:
        panel, _ = attach_cells(
            panel, prims.k, use_state_column=True, isbig_threshold=info.isbig_threshold
        )
    wto_split = int(args.wto_split) if args.wto_split is not None else 2002
    series = counterfactual_series(
        panel, beta, prims, draws,
        wto_split=wto_split,
        scale=float(cfg["scale"]),
        gate_numerator=bool(cfg["gate_numerator"]),
        mode=str(cfg["mode"]),
    )
    effect = did_effect(series, wto_split)
    out = Path(args.out)
    write_csv(out / "counterfactual.csv", series)
    summary = {"did_effect": effect, "wto_split": wto_split, "n_years": int(len(series))}
    trade = report.get("trade_cost")
    if trade and trade.get("alpha1") is not None:
        summary["beta0_pre"] = adjust_beta0(
            beta.b0, float(trade["alpha1"]), float(report["ces"]["rho_tilde_hat"])
        )
    save_json(out / "counterfactual_summary.json", summary)
    print(f"wrote {out / 'counterfactual.csv'}")
    print(f"did_effect = {effect!r}")
    return 0


def cmd_report(args) -> int:
    """Render an estimation report for reading."""
    report = load_json(args.report)
    print(f"tradeinno report (schema {report['schema_version']}, package {report['package']['version']})")
    if report.get("failed_step"):
        print(f"FAILED at step {report['failed_step']}: {report['error']}")
    ces = report.get("ces")
    if ces:
        print("\nstep 1 - CES preferences")
        print(f"  rho       = {ces['rho_hat']:.4f}  (se {ces['se_rho']:.4f}, n={ces['n_nonexporters']})")
        print(f"  rho_tilde = {ces['rho_tilde_hat']:.4f}  (se {ces['se_rho_tilde']:.4f}, n={ces['n_exporters']})")
    trade = report.get("trade_cost")
    if trade:
        print("\nstep 2 - trade-cost effect")
        if trade.get("alpha1") is not None:
            print(f"  alpha1 = {trade['alpha1']:.4f}  (bootstrap se {trade['se_alpha1']:.4f}, B={trade['n_boot']})")
        if trade.get("year_coefs"):
            for year, coef in sorted(trade["year_coefs"].items()):
                print(f"  year {year}: {coef:.4f} (se {trade['year_ses'][year]:.4f})")
        print(f"  alpha0 = {trade['alpha0']:.4f}  n={trade['n_obs']} obs, {trade['n_firms']} firms")
    exit_d = report.get("exit")
    if exit_d:
        print("\nstep 3 - exit and transitions")
        print(f"  sigma = {exit_d['sigma_hat']:.4f}  (se {exit_d['se']:.4f}, {exit_d['n_exits']}/{exit_d['n_eligible']} exits)")
        trans = report.get("transitions")
        if trans:
            print(f"  transition pairs: {trans['n_pairs']}; uniform-filled rows: {len(trans['filled_rows'])}")
            for c, label in enumerate(["(0,0)", "(0,1)", "(1,0)", "(1,1)"]):
                mat = np.asarray(trans["matrices"][c])
                rows = "\n    ".join(" ".join(f"{v:.4f}" for v in row) for row in mat)
                print(f"  choice {label}:\n    {rows}")
    dyn = report.get("dynamic")
    if dyn:
        print("\nstep 4 - dynamic choice parameters")
        ses = dyn.get("se") or [float("nan")] * 7
        for name, b, s in zip(dyn["beta_names"], dyn["beta"], ses):
            print(f"  {name} = {b: .4f}  (se {s:.4f})")
        print(f"  Q = {dyn['q']:.6f}  n={dyn['n_used']}  converged={dyn['converged']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tradeinno",
        description="Simulate and estimate the export/product-innovation model",
    )
    parser.add_argument("--version", action="version", version=f"tradeinno {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic panel and aggregates")
    sim.add_argument("--config", help="key = value config file")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--k-states", dest="k_states", type=int)
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="run the four-step estimation")
    est.add_argument("--config", help="key = value config file")
    est.add_argument("--panel", required=True)
    est.add_argument("--aggregates", required=True)
    est.add_argument("--out", required=True)
    est.add_argument("--seed", type=int)
    est.add_argument("--steps", help="comma list, e.g. 1,2,3,4")
    est.add_argument("--k-states", dest="k_states", type=int)
    est.add_argument("--draws", type=int)
    est.add_argument("--bootstrap", type=int, help="dynamic-step bootstrap replicates")
    est.add_argument("--mode", choices=["commitment", "emax"])
    est.add_argument("--scale", type=float)
    est.add_argument("--workers", type=int)
    est.add_argument("--trade-spec", dest="trade_spec", choices=["dwto", "dwto_lagged", "year_dummies"])
    est.add_argument("--filter-processing", dest="filter_processing", action="store_const", const=True)
    est.add_argument("--rebuild-state", dest="rebuild_state", action="store_const", const=True)
    est.add_argument("--prior-report", dest="prior_report")
    est.set_defaults(func=cmd_estimate)

    cf = sub.add_parser("counterfactual", help="observed vs simulated joint probabilities by year")
    cf.add_argument("--report", required=True)
    cf.add_argument("--panel", required=True)
    cf.add_argument("--out", required=True)
    cf.add_argument("--wto-split", dest="wto_split", type=int)
    cf.set_defaults(func=cmd_counterfactual)

    rep = sub.add_parser("report", help="render a report document")
    rep.add_argument("--report", required=True)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as err:
        print(json.dumps({"error": str(err), "type": "schema", "line": err.line}), file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - the CLI boundary reports everything
        print(json.dumps({"error": str(err), "type": type(err).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
