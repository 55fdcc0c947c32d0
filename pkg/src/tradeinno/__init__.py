"""Structural model of firm export and product innovation under trade
liberalization: closed-form statics, dynamic choice values, a forward panel
simulator, the four-step estimator, and trade-cost counterfactuals."""

__version__ = "0.1.0"

from .statics import (
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
from .dynamics import (
    CHOICES,
    ChoiceValues,
    DrawSet,
    ModelPrimitives,
    NoEntrantsError,
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
from .simulate import SimConfig, simulate_panel, stationary_initial_states
from .estimation import (
    CesResult,
    DynamicConfig,
    DynamicEstimate,
    EstimationError,
    ExitResult,
    StateInfo,
    TradeCostResult,
    TransitionEstimate,
    bootstrap_pipeline,
    build_state,
    construct_lny,
    dynamic_objective,
    estimate_ces,
    estimate_dynamic,
    estimate_exit,
    estimate_trade_cost,
    estimate_transitions,
    make_primitives,
)
from .counterfactual import (
    adjust_beta0,
    conditional_frequencies,
    counterfactual_series,
    did_effect,
    observed_yearly_joint,
    simulated_yearly_joint,
)
from .pipeline import PipelineConfig, run_pipeline
from .panelio import derive_columns, read_aggregates, read_panel, write_aggregates, write_panel
