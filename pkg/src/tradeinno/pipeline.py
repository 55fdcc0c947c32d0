"""End-to-end estimation runs and the self-describing report document.

A report records every point estimate, standard error, the state-construction
moments and bin edges, the filter trail, and the master seed, so a later
counterfactual run can rebuild the primitives, the parameter vector and the
simulation draws from the report alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from . import __version__
from .dynamics import DrawSet, ModelPrimitives, StructuralBeta, TransitionSet
from .estimation import (
    DynamicConfig,
    EstimationError,
    StateInfo,
    attach_cells,
    bootstrap_pipeline,
    derive_seeds,
    estimate_ces,
    estimate_dynamic,
    estimate_exit,
    estimate_trade_cost,
    estimate_transitions,
    BETA_NAMES,
)
from .panelio import REPORT_SCHEMA_VERSION, derive_columns
from .statics import Preferences


@dataclass
class PipelineConfig:
    """One estimation run: which steps, state-space and draw sizes, bootstrap
    budgets and optimizer budgets.  The seed is mandatory and drives the
    simulation draws, the annealing path and all bootstrap resampling."""

    seed: int
    steps: tuple[int, ...] = (1, 2, 3, 4)
    k_states: int = 4
    d_draws: int = 1000
    scale: float = 1.0
    mode: str = "commitment"
    gate_numerator: bool = True
    use_state_column: bool = True
    isbig_threshold: float | None = None
    filter_processing: bool = False
    trade_spec: str = "dwto"
    trade_method: str = "re"
    trade_boot: int = 200
    transition_boot: int = 0
    dynamic_boot: int = 0
    delta: float = 0.95
    state_values: list[float] | None = None
    postwto_only: bool = True
    bound: float = 15.0
    sa_maxiter: int = 150
    sa_maxfun: int = 4000
    nm_maxfev: int = 4000
    x0: list[float] | None = None
    workers: int = 1

    def dynamic_config(self) -> DynamicConfig:
        return DynamicConfig(
            d_draws=self.d_draws,
            seed=self.seed,
            scale=self.scale,
            gate_numerator=self.gate_numerator,
            mode=self.mode,
            bound=self.bound,
            x0=None if self.x0 is None else np.asarray(self.x0, dtype=float),
            sa_maxiter=self.sa_maxiter,
            sa_maxfun=self.sa_maxfun,
            nm_maxfev=self.nm_maxfev,
            postwto_only=self.postwto_only,
        )


def _config_echo(config: PipelineConfig) -> dict:
    echo = asdict(config)
    echo["steps"] = list(config.steps)
    return echo


def run_pipeline(
    panel_raw: pd.DataFrame,
    aggregates: pd.DataFrame,
    config: PipelineConfig,
    prior_report: dict | None = None,
) -> tuple[dict, dict]:
    """Run the selected estimation steps and assemble the report.

    Steps not selected are loaded from `prior_report` when later steps need
    them.  A step failure is recorded in the report (failed_step, error) and
    the run stops there; everything already estimated stays in the report.

    Returns (report, artifacts); artifacts holds replicate tables and other
    frames that belong next to, not inside, the report document.
    """
    report: dict = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "package": {"name": "tradeinno", "version": __version__},
        "config": _config_echo(config),
        "failed_step": None,
        "error": None,
    }
    artifacts: dict = {}
    seeds = derive_seeds(config.seed)

    n_input = len(panel_raw)
    panel = panel_raw
    if config.filter_processing:
        if "processing_flag" in panel.columns:
            panel = panel[panel["processing_flag"] == 0]
        else:
            raise EstimationError("processing filter requested but the panel has no processing_flag column")
    report["filters"] = {
        "n_input_rows": int(n_input),
        "n_after_processing_filter": int(len(panel)),
        "processing_filter": bool(config.filter_processing),
    }
    panel = derive_columns(panel)
    panel, state_info = attach_cells(
        panel, config.k_states,
        use_state_column=config.use_state_column,
        isbig_threshold=config.isbig_threshold,
    )
    report["state"] = asdict(state_info)

    ces = exit_result = trans = None
    step_running = 0
    try:
        if 1 in config.steps:
            step_running = 1
            ces = estimate_ces(panel)
            report["ces"] = asdict(ces)
        if 2 in config.steps:
            step_running = 2
            ces_for_2 = ces if ces is not None else _ces_from_report(prior_report)
            tc = estimate_trade_cost(
                panel, aggregates,
                spec=config.trade_spec, method=config.trade_method,
                ces=ces_for_2, n_boot=config.trade_boot, seed=seeds["trade_boot"],
            )
            artifacts["trade_replicates"] = tc.replicates
            report["trade_cost"] = {
                "alpha0": tc.alpha0_hat,
                "alpha1": tc.alpha1_hat,
                "se_alpha0": tc.se_alpha0,
                "se_alpha1": tc.se_alpha1,
                "year_coefs": tc.year_coefs,
                "year_ses": tc.year_ses,
                "spec": tc.spec,
                "method": tc.method,
                "n_obs": tc.n_obs,
                "n_firms": tc.n_firms,
                "sigma2_within": tc.variance_components[0],
                "sigma2_between_firm": tc.variance_components[1],
                "n_boot": tc.n_boot,
                "n_boot_failed": tc.n_boot_failed,
            }
        if 3 in config.steps:
            step_running = 3
            exit_result = estimate_exit(panel)
            report["exit"] = asdict(exit_result)
            trans = estimate_transitions(
                panel, config.k_states, n_boot=config.transition_boot, seed=seeds["trans_boot"]
            )
            report["transitions"] = {
                "matrices": trans.transitions.matrices.tolist(),
                "se": None if trans.se is None else trans.se.tolist(),
                "counts": trans.counts.tolist(),
                "filled_rows": [list(f) for f in trans.filled_rows],
                "n_pairs": trans.n_pairs,
                "n_boot": config.transition_boot,
            }
        if 4 in config.steps:
            step_running = 4
            prims = _prims_for_step4(report, prior_report, config)
            draws = DrawSet.draw(config.d_draws, seeds["draws"])
            dyn_cfg = config.dynamic_config()
            dyn = estimate_dynamic(
                panel, prims, dyn_cfg, aggregates=aggregates, draws=draws,
                sa_rng=np.random.default_rng(seeds["annealing"]),
            )
            report["dynamic"] = {
                "beta": dyn.beta_hat.as_array().tolist(),
                "beta_names": BETA_NAMES,
                "q": dyn.q_final,
                "q_annealing": dyn.q_sa,
                "q_initial": dyn.q_initial,
                "n_used": dyn.n_used,
                "n_dropped_no_lag": dyn.n_dropped_no_lag,
                "n_dropped_pre_wto": dyn.n_dropped_pre_wto,
                "converged": dyn.converged,
                "trace": dyn.trace,
                "se": None,
                "n_boot": 0,
                "n_boot_failed": 0,
            }
            if config.dynamic_boot > 0:
                boot = bootstrap_pipeline(
                    panel, aggregates, steps=(4,), b_reps=config.dynamic_boot,
                    seed=seeds["bootstrap"], k_states=config.k_states,
                    trade_spec=config.trade_spec, trade_method=config.trade_method,
                    dyn_config=dyn_cfg, beta_start=dyn.beta_hat, draws=draws,
                    state_values=config.state_values, workers=config.workers,
                )
                artifacts["dynamic_replicates"] = boot.replicates
                report["dynamic"]["se"] = [boot.ses[n] for n in BETA_NAMES]
                report["dynamic"]["n_boot"] = boot.b_requested
                report["dynamic"]["n_boot_failed"] = boot.n_failed
    except (EstimationError, ValueError) as err:
        report["failed_step"] = step_running
        report["error"] = str(err)
    return report, artifacts


def _ces_from_report(prior: dict | None):
    from .estimation import CesResult

    if prior is None or "ces" not in prior:
        raise EstimationError("step 2 needs step-1 results: run step 1 or supply a prior report")
    return CesResult(**prior["ces"])


def _prims_for_step4(report: dict, prior: dict | None, config: PipelineConfig) -> ModelPrimitives:
    def lookup(key):
        if key in report:
            return report[key]
        if prior is not None and key in prior and prior[key] is not None:
            return prior[key]
        raise EstimationError(f"step 4 needs {key!r}: run the earlier steps or supply a prior report")

    ces = lookup("ces")
    exit_d = lookup("exit")
    trans = lookup("transitions")
    return ModelPrimitives(
        prefs=Preferences(float(ces["rho_hat"]), float(ces["rho_tilde_hat"])),
        sigma=float(exit_d["sigma_hat"]),
        transitions=TransitionSet(np.asarray(trans["matrices"])),
        delta=config.delta,
        state_values=config.state_values,
    )


# ---------------------------------------------------------------------------
# report accessors (used by the counterfactual command)


def report_prims(report: dict) -> ModelPrimitives:
    cfg = report["config"]
    return _prims_for_step4(
        report, None,
        PipelineConfig(seed=0, delta=cfg["delta"], state_values=cfg.get("state_values")),
    )


def report_beta(report: dict) -> StructuralBeta:
    dyn = report.get("dynamic")
    if dyn is None or "beta" not in dyn:
        raise EstimationError("report lacks the dynamic step (field 'dynamic.beta')")
    return StructuralBeta.from_array(dyn["beta"])


def report_draws(report: dict) -> DrawSet:
    """Recreate the estimation draw set from the master seed in the report."""
    cfg = report["config"]
    return DrawSet.draw(int(cfg["d_draws"]), derive_seeds(int(cfg["seed"]))["draws"])


def report_state_info(report: dict) -> StateInfo:
    return StateInfo(**report["state"])
