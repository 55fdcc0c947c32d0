"""Four-step estimation of the export/innovation model from a firm panel.

Step one recovers the CES preference parameters from the structural relation
TVC = rho R + rho~ R~ (no intercept): rho from non-exporters, then rho~ from
exporters using the residual.  Step two turns the export-to-domestic revenue
ratio into a log trade-cost index and regresses it on the liberalization
dummy (random-effects by default).  Step three estimates the survival
probability and the choice-conditional state transition matrices as relative
frequencies, with the state constructed by PCA over firm size and capital
intensity.  Step four estimates the seven dynamic-choice parameters by
simulated least squares: the kernel-smoothed joint choice probability is
matched to the observed export-and-innovate indicator, minimized by simulated
annealing followed by a Nelder-Mead polish.  Standard errors everywhere
resample firms as blocks and re-run the upstream steps inside each replicate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
import scipy.optimize

from .dynamics import (
    DrawSet,
    ModelPrimitives,
    NoEntrantsError,
    StructuralBeta,
    TransitionSet,
    all_cells,
    conditional_prob_table,
)
from .statics import Preferences

BETA_NAMES = ["beta0", "beta1", "beta2", "beta3", "beta4", "beta5", "beta6"]


class EstimationError(RuntimeError):
    pass


def derive_seeds(seed: int) -> dict[str, np.random.SeedSequence]:
    """Fixed-order child streams of the master seed; re-deriving with the
    same seed reproduces the estimation draws exactly (the report stores only
    the master seed)."""
    children = np.random.SeedSequence(seed).spawn(5)
    names = ["draws", "annealing", "bootstrap", "trade_boot", "trans_boot"]
    return dict(zip(names, children))


# ---------------------------------------------------------------------------
# step one: CES preference parameters


@dataclass
class CesResult:
    rho_hat: float
    rho_tilde_hat: float
    se_rho: float
    se_rho_tilde: float
    n_nonexporters: int
    n_exporters: int
    resid_sd_nonexporters: float
    resid_sd_exporters: float


def _ols_no_intercept(y: np.ndarray, x: np.ndarray) -> tuple[float, float, float]:
    """Slope, conventional SE and residual sd of y = b x + e."""
    sxx = float(np.dot(x, x))
    if sxx <= 0.0:
        raise EstimationError("regressor has no variation")
    b = float(np.dot(x, y)) / sxx
    resid = y - b * x
    dof = max(len(y) - 1, 1)
    sigma2 = float(np.dot(resid, resid)) / dof
    return b, float(np.sqrt(sigma2 / sxx)), float(np.sqrt(sigma2))


def estimate_ces(panel: pd.DataFrame) -> CesResult:
    """Two-stage no-intercept least squares for (rho, rho~).

    Stage A regresses TVC on domestic revenue over non-exporters; stage B
    regresses TVC - rho_hat R on export revenue over exporters.
    """
    nonexp = panel[panel["chi2"] == 0]
    exp_ = panel[panel["chi2"] == 1]
    if len(nonexp) < 2:
        raise EstimationError("need at least 2 non-exporter observations for step one")
    if len(exp_) < 2:
        raise EstimationError("need at least 2 exporter observations for step one")
    rho, se_rho, sd_ne = _ols_no_intercept(
        nonexp["tvc"].to_numpy(), nonexp["dom_revenue"].to_numpy()
    )
    y2 = exp_["tvc"].to_numpy() - rho * exp_["dom_revenue"].to_numpy()
    rho_t, se_rho_t, sd_e = _ols_no_intercept(y2, exp_["export_revenue"].to_numpy())
    for name, value in (("rho", rho), ("rho_tilde", rho_t)):
        if not (0.0 < value < 1.0):
            warnings.warn(f"estimated {name} = {value:.4f} outside (0, 1); data may violate the model")
    return CesResult(rho, rho_t, se_rho, se_rho_t, len(nonexp), len(exp_), sd_ne, sd_e)


# ---------------------------------------------------------------------------
# step two: trade-cost index and liberalization effect


def construct_lny(panel: pd.DataFrame, aggregates: pd.DataFrame, rho: float, rho_tilde: float) -> pd.DataFrame:
    """Log trade-cost index for exporter rows.

    lny = ln(rho~ R~^((rho~-1)/rho~)) - ln(rho R^((rho-1)/rho))
          + ((rho-1)/rho) ln Y - ((rho~-1)/rho~) ln Y~,
    which equals ln tau plus a time-constant term on model-generated data.
    """
    if not (0.0 < rho < 1.0 and 0.0 < rho_tilde < 1.0):
        raise EstimationError("rho and rho_tilde must lie in (0, 1) to build lny")
    rows = panel[panel["chi2"] == 1].copy()
    missing = sorted(set(rows["year"]) - set(aggregates["year"]))
    if missing:
        raise EstimationError(f"aggregates missing years: {missing}")
    rows = rows.merge(aggregates, on="year", how="left")
    a = (rho - 1.0) / rho
    a_t = (rho_tilde - 1.0) / rho_tilde
    rows["lny"] = (
        np.log(rho_tilde)
        + a_t * np.log(rows["export_revenue"])
        - np.log(rho)
        - a * np.log(rows["dom_revenue"])
        + a * np.log(rows["gni_pc_home"])
        - a_t * np.log(rows["gni_pc_world"])
    )
    return rows[["firm_id", "year", "lny", "dwto"]]


def _swamy_arora(y: np.ndarray, x: np.ndarray, groups: np.ndarray):
    """Random-effects FGLS with Swamy-Arora variance components.

    x includes the intercept as its first column.  Returns (coef, se,
    (sigma2_e, sigma2_u)).
    """
    n_obs, k = x.shape
    if np.linalg.matrix_rank(x) < k:
        raise EstimationError("singular design: a regressor has no variation")
    _, inv, counts = np.unique(groups, return_inverse=True, return_counts=True)
    n_firms = counts.size
    if not np.any(counts >= 2):
        raise EstimationError("random effects need at least one firm observed twice")
    ybar = np.bincount(inv, weights=y) / counts
    xbar = np.stack([np.bincount(inv, weights=x[:, j]) / counts for j in range(k)], axis=1)
    yw = y - ybar[inv]
    xw = x - xbar[inv]
    rank_w = np.linalg.matrix_rank(xw) if np.abs(xw).max() > 0 else 0
    if rank_w > 0:
        bw, *_ = np.linalg.lstsq(xw, yw, rcond=None)
        rss_w = float(np.sum((yw - xw @ bw) ** 2))
    else:
        rss_w = float(np.sum(yw**2))
    dof_w = max(n_obs - n_firms - rank_w, 1)
    sigma2_e = rss_w / dof_w
    bb, *_ = np.linalg.lstsq(xbar, ybar, rcond=None)
    rss_b = float(np.sum((ybar - xbar @ bb) ** 2))
    sigma2_b = rss_b / max(n_firms - np.linalg.matrix_rank(xbar), 1)
    t_harm = n_firms / np.sum(1.0 / counts)
    sigma2_u = max(sigma2_b - sigma2_e / t_harm, 0.0)
    theta = 1.0 - np.sqrt(sigma2_e / (counts * sigma2_u + sigma2_e))
    ystar = y - theta[inv] * ybar[inv]
    xstar = x - theta[inv][:, None] * xbar[inv]
    coef, *_ = np.linalg.lstsq(xstar, ystar, rcond=None)
    resid = ystar - xstar @ coef
    sigma2 = float(np.sum(resid**2)) / max(n_obs - k, 1)
    vcov = sigma2 * np.linalg.inv(xstar.T @ xstar)
    return coef, np.sqrt(np.diag(vcov)), (sigma2_e, sigma2_u)


def _pooled_ols(y: np.ndarray, x: np.ndarray):
    k = x.shape[1]
    if np.linalg.matrix_rank(x) < k:
        raise EstimationError("singular design: a regressor has no variation")
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    sigma2 = float(np.sum(resid**2)) / max(len(y) - k, 1)
    vcov = sigma2 * np.linalg.inv(x.T @ x)
    return coef, np.sqrt(np.diag(vcov)), (sigma2, 0.0)


@dataclass
class TradeCostResult:
    alpha0_hat: float
    alpha1_hat: float | None
    se_alpha0: float
    se_alpha1: float | None
    year_coefs: dict[int, float] | None
    year_ses: dict[int, float] | None
    spec: str
    method: str
    n_obs: int
    n_firms: int
    variance_components: tuple[float, float]
    n_boot: int = 0
    n_boot_failed: int = 0
    replicates: pd.DataFrame | None = None


def _trade_design(lny_rows: pd.DataFrame, aggregates: pd.DataFrame, spec: str):
    """Design matrix (with intercept first) for the chosen regressor set."""
    if spec == "dwto":
        x = np.column_stack([np.ones(len(lny_rows)), lny_rows["dwto"].to_numpy(float)])
        return x, ["const", "dwto"]
    if spec == "dwto_lagged":
        agg = aggregates.sort_values("year")
        lagged = dict(zip(agg["year"].to_numpy()[1:], agg["dwto"].to_numpy()[:-1]))
        first = int(agg["year"].iloc[0])
        lag = lny_rows["year"].map(lambda y: lagged.get(y, 0 if y <= first else None)).to_numpy(float)
        x = np.column_stack([np.ones(len(lny_rows)), lag])
        return x, ["const", "dwto_lagged"]
    if spec == "year_dummies":
        years = sorted(lny_rows["year"].unique())
        cols = [np.ones(len(lny_rows))]
        names = ["const"]
        for y in years[1:]:
            cols.append((lny_rows["year"] == y).to_numpy(float))
            names.append(f"year_{y}")
        return np.column_stack(cols), names
    raise ValueError(f"unknown trade-cost spec {spec!r}")


def estimate_trade_cost(
    panel: pd.DataFrame,
    aggregates: pd.DataFrame,
    spec: str = "dwto",
    method: str = "re",
    ces: CesResult | None = None,
    n_boot: int = 0,
    seed=None,
) -> TradeCostResult:
    """Regress the trade-cost index on the liberalization regressor set.

    alpha1 estimates ln(tau_post) - ln(tau_pre).  Bootstrap standard errors
    resample firms as blocks and re-run step one inside each replicate so the
    first-step estimation error propagates.
    """
    if ces is None:
        ces = estimate_ces(panel)

    def run(pnl: pd.DataFrame, ces_r: CesResult):
        lny_rows = construct_lny(pnl, aggregates, ces_r.rho_hat, ces_r.rho_tilde_hat)
        if lny_rows["firm_id"].nunique() < 2 or not (lny_rows.groupby("firm_id")["year"].count() >= 2).any():
            raise EstimationError("need at least 2 firms with at least 2 years of export data")
        x, names = _trade_design(lny_rows, aggregates, spec)
        y = lny_rows["lny"].to_numpy()
        groups = lny_rows["firm_id"].to_numpy()
        if method == "re":
            coef, se, comps = _swamy_arora(y, x, groups)
        elif method == "pooled":
            coef, se, comps = _pooled_ols(y, x)
        else:
            raise ValueError(f"unknown method {method!r}")
        return coef, se, comps, names, lny_rows

    coef, se, comps, names, lny_rows = run(panel, ces)
    year_coefs = year_ses = None
    if spec == "year_dummies":
        year_coefs = {int(n.split("_")[1]): float(c) for n, c in zip(names[1:], coef[1:])}
        year_ses = {int(n.split("_")[1]): float(s) for n, s in zip(names[1:], se[1:])}
        alpha1, se_alpha1 = None, None
    else:
        alpha1, se_alpha1 = float(coef[1]), float(se[1])

    n_failed = 0
    replicates = None
    if n_boot > 0:
        rng = np.random.default_rng(seed)
        rows = []
        for _ in range(n_boot):
            rep = resample_firms(panel, rng)
            try:
                ces_b = estimate_ces(rep)
                coef_b, _, _, names_b, _ = run(rep, ces_b)
                rows.append({n: float(c) for n, c in zip(names_b, coef_b)})
            except EstimationError:
                n_failed += 1
        if len(rows) < 2:
            raise EstimationError("too few successful bootstrap replicates for step two")
        replicates = pd.DataFrame(rows)
        boot_se = replicates.std(ddof=1)
        se = np.array([boot_se.get(n, np.nan) for n in names])
        if spec == "year_dummies":
            year_ses = {int(n.split("_")[1]): float(boot_se[n]) for n in names[1:]}
        else:
            se_alpha1 = float(se[1])

    return TradeCostResult(
        alpha0_hat=float(coef[0]),
        alpha1_hat=alpha1,
        se_alpha0=float(se[0]),
        se_alpha1=se_alpha1,
        year_coefs=year_coefs,
        year_ses=year_ses,
        spec=spec,
        method=method,
        n_obs=len(lny_rows),
        n_firms=int(lny_rows["firm_id"].nunique()),
        variance_components=(float(comps[0]), float(comps[1])),
        n_boot=n_boot,
        n_boot_failed=n_failed,
        replicates=replicates,
    )


def resample_firms(panel: pd.DataFrame, rng: np.random.Generator) -> pd.DataFrame:
    """Firm-block bootstrap resample; sampled blocks get fresh firm ids so a
    firm drawn twice enters as two distinct firms."""
    firms = np.sort(panel["firm_id"].unique())
    picked = rng.choice(firms, size=firms.size, replace=True)
    blocks = []
    grouped = dict(tuple(panel.groupby("firm_id", sort=True)))
    for new_id, firm in enumerate(picked):
        block = grouped[firm].copy()
        block["firm_id"] = new_id
        blocks.append(block)
    return pd.concat(blocks, ignore_index=True)


# ---------------------------------------------------------------------------
# step three: exit probability, state construction, transitions


@dataclass
class ExitResult:
    sigma_hat: float
    se: float
    n_eligible: int
    n_exits: int


def estimate_exit(panel: pd.DataFrame) -> ExitResult:
    """Survival probability: one minus the share of firm-years that do not
    reappear the following year.  Years whose successor is outside the sample
    window are excluded from the denominator."""
    years = set(panel["year"].unique())
    eligible = panel[panel["year"].map(lambda y: (y + 1) in years)]
    if len(eligible) == 0:
        raise EstimationError("no firm-year has a defined next year in the sample window")
    present = set(zip(panel["firm_id"], panel["year"]))
    exits = sum(
        (fid, yr + 1) not in present
        for fid, yr in zip(eligible["firm_id"], eligible["year"])
    )
    sigma = 1.0 - exits / len(eligible)
    se = float(np.sqrt(sigma * (1.0 - sigma) / len(eligible)))
    return ExitResult(float(sigma), se, int(len(eligible)), int(exits))


@dataclass
class StateInfo:
    """Everything needed to reproduce a state assignment on new rows.

    The moment fields are None when the state came from the panel's own
    state column instead of the PCA construction.
    """

    k: int
    edges: list[float]
    loadings: list[float]
    tl_kl_corr: float | None
    tl_mean: float | None
    tl_sd: float | None
    kl_mean: float | None
    kl_sd: float | None
    isbig_threshold: float
    source: str


def build_state(panel: pd.DataFrame, k_states: int, isbig_threshold: float | None = None):
    """Construct the discrete productivity state and the size flag.

    Pooled z-scores of workers and capital intensity enter the first
    principal component (sign fixed so the workers loading is positive);
    the component is divided by per-worker variable cost and cut at pooled
    quantiles into k_states bins.  is_big is workers above the pooled median
    unless an explicit threshold is given.
    """
    if k_states < 2:
        raise EstimationError("need K >= 2 states")
    out = panel.copy()
    tl = out["workers"].to_numpy(float)
    kl = (out["fixed_assets_net"] / out["workers"]).to_numpy(float)
    if tl.std() == 0.0 or kl.std() == 0.0:
        raise EstimationError("degenerate input: workers or capital intensity has zero variance")
    z_tl = (tl - tl.mean()) / tl.std()
    z_kl = (kl - kl.mean()) / kl.std()
    corr = float(np.mean(z_tl * z_kl))
    loading = np.array([1.0, 1.0 if corr >= 0 else -1.0]) / np.sqrt(2.0)
    score = (z_tl * loading[0] + z_kl * loading[1]) / out["wm"].to_numpy(float)
    edges = np.quantile(score, [i / k_states for i in range(1, k_states)])
    out["state"] = np.searchsorted(edges, score, side="left") + 1
    threshold = float(np.median(tl)) if isbig_threshold is None else float(isbig_threshold)
    out["is_big"] = (tl > threshold).astype(int)
    info = StateInfo(
        k=k_states,
        edges=[float(e) for e in edges],
        loadings=[float(v) for v in loading],
        tl_kl_corr=corr,
        tl_mean=float(tl.mean()),
        tl_sd=float(tl.std()),
        kl_mean=float(kl.mean()),
        kl_sd=float(kl.std()),
        isbig_threshold=threshold,
        source="pca",
    )
    return out, info


def apply_state(panel: pd.DataFrame, info: StateInfo) -> pd.DataFrame:
    """Assign states/is_big on new rows using persisted moments and edges."""
    out = panel.copy()
    tl = out["workers"].to_numpy(float)
    kl = (out["fixed_assets_net"] / out["workers"]).to_numpy(float)
    z_tl = (tl - info.tl_mean) / info.tl_sd
    z_kl = (kl - info.kl_mean) / info.kl_sd
    score = (z_tl * info.loadings[0] + z_kl * info.loadings[1]) / out["wm"].to_numpy(float)
    out["state"] = np.searchsorted(np.asarray(info.edges), score, side="left") + 1
    out["is_big"] = (tl > info.isbig_threshold).astype(int)
    return out


def attach_cells(
    panel: pd.DataFrame,
    k_states: int,
    use_state_column: bool = True,
    isbig_threshold: float | None = None,
) -> tuple[pd.DataFrame, StateInfo]:
    """Ensure the panel carries state and is_big columns.

    A state column emitted by the simulator is used as-is (is_big still comes
    from the size threshold); otherwise the PCA pipeline runs.
    """
    if use_state_column and "state" in panel.columns:
        out = panel.copy()
        if out["state"].max() > k_states:
            raise EstimationError(
                f"state column has {out['state'].max()} states but K={k_states}; "
                "rebuild with --rebuild-state or adjust K"
            )
        tl = out["workers"].to_numpy(float)
        threshold = float(np.median(tl)) if isbig_threshold is None else float(isbig_threshold)
        out["is_big"] = (tl > threshold).astype(int)
        info = StateInfo(
            k=k_states, edges=[], loadings=[], tl_kl_corr=None,
            tl_mean=None, tl_sd=None, kl_mean=None, kl_sd=None,
            isbig_threshold=threshold, source="column",
        )
        return out, info
    return build_state(panel, k_states, isbig_threshold)


@dataclass
class TransitionEstimate:
    transitions: TransitionSet
    se: np.ndarray | None
    counts: np.ndarray
    filled_rows: list[tuple[int, int, int]]
    n_pairs: int


def _transition_counts(panel: pd.DataFrame, k_states: int) -> np.ndarray:
    """Counts[(choice index), from-state, to-state] over consecutive firm-year
    pairs, conditioning on the earlier year's choice."""
    cur = panel[["firm_id", "year", "state", "chi1", "chi2"]].copy()
    nxt = panel[["firm_id", "year", "state"]].copy()
    nxt["year"] = nxt["year"] - 1
    pairs = cur.merge(nxt, on=["firm_id", "year"], suffixes=("", "_next"))
    counts = np.zeros((4, k_states, k_states))
    flat = (
        (pairs["chi1"].to_numpy(int) * 2 + pairs["chi2"].to_numpy(int)) * k_states**2
        + (pairs["state"].to_numpy(int) - 1) * k_states
        + (pairs["state_next"].to_numpy(int) - 1)
    )
    np.add.at(counts.reshape(-1), flat, 1.0)
    return counts


def estimate_transitions(
    panel: pd.DataFrame,
    k_states: int,
    n_boot: int = 0,
    seed=None,
) -> TransitionEstimate:
    """Relative-frequency transition matrices per choice pair.

    Rows with no observed pairs are filled uniformly and flagged (a zero
    frequency may reflect a zero probability or a lack of data).  Bootstrap
    standard errors resample firms; entries estimated at exactly 0 or 1 are
    reported with a standard error of 0.
    """
    counts = _transition_counts(panel, k_states)
    n_pairs = int(counts.sum())
    if n_pairs == 0:
        raise EstimationError("no consecutive firm-year pairs to estimate transitions")
    mats = np.empty_like(counts)
    filled = []
    for c in range(4):
        for k in range(k_states):
            row_n = counts[c, k].sum()
            if row_n == 0:
                mats[c, k] = 1.0 / k_states
                filled.append((c // 2, c % 2, k + 1))
            else:
                mats[c, k] = counts[c, k] / row_n
    se = None
    if n_boot > 0:
        rng = np.random.default_rng(seed)
        reps = np.full((n_boot, 4, k_states, k_states), np.nan)
        for b in range(n_boot):
            rep_counts = _transition_counts(resample_firms(panel, rng), k_states)
            row_n = rep_counts.sum(axis=2, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                reps[b] = np.where(row_n > 0, rep_counts / np.maximum(row_n, 1), np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            se = np.nanstd(reps, axis=0, ddof=1)
        se = np.where(np.isnan(se), 0.0, se)
        se[(mats == 0.0) | (mats == 1.0)] = 0.0
    return TransitionEstimate(TransitionSet(mats), se, counts, filled, n_pairs)


def make_primitives(
    ces: CesResult,
    exit_result: ExitResult,
    transitions: TransitionEstimate | TransitionSet,
    delta: float = 0.95,
    state_values=None,
) -> ModelPrimitives:
    ts = transitions.transitions if isinstance(transitions, TransitionEstimate) else transitions
    return ModelPrimitives(
        prefs=Preferences(ces.rho_hat, ces.rho_tilde_hat),
        sigma=exit_result.sigma_hat,
        transitions=ts,
        delta=delta,
        state_values=state_values,
    )


# ---------------------------------------------------------------------------
# step four: dynamic simulated least squares


@dataclass
class DynamicConfig:
    """Knobs of the dynamic estimator; defaults follow the estimation design
    (D = 1000 common draws, box [-15, 15], annealing then simplex)."""

    d_draws: int = 1000
    seed: int = 0
    scale: float = 1.0
    gate_numerator: bool = True
    mode: str = "commitment"
    bound: float = 15.0
    x0: np.ndarray | None = None
    sa_maxiter: int = 150
    sa_maxfun: int = 4000
    nm_maxfev: int = 4000
    nm_fatol: float = 1e-8
    nm_xatol: float = 1e-6
    postwto_only: bool = True
    use_annealing: bool = True  # bootstrap replicates polish from the point estimate instead


@dataclass
class DynamicEstimate:
    beta_hat: StructuralBeta
    q_final: float
    q_sa: float
    q_initial: float
    n_used: int
    n_dropped_no_lag: int
    n_dropped_pre_wto: int
    converged: bool
    trace: list[dict]
    ses: np.ndarray | None = None
    n_boot: int = 0
    n_boot_failed: int = 0
    replicates: pd.DataFrame | None = None


def _cell_stats(panel: pd.DataFrame, k_states: int):
    """Per-cell observation count and sum of the joint indicator.

    Rows without defined lags are excluded (their cell is undefined) and the
    drop is reported by the caller.
    """
    rows = panel[panel["has_lag"]]
    flat = (
        ((rows["state"].to_numpy(int) - 1) * 2 + rows["lag1"].to_numpy(int)) * 4
        + rows["lag2"].to_numpy(int) * 2
        + rows["is_big"].to_numpy(int)
    )
    y = (rows["chi1"].to_numpy(int) * rows["chi2"].to_numpy(int)).astype(float)
    n_cells = k_states * 8
    n_c = np.bincount(flat, minlength=n_cells).astype(float)
    s_c = np.bincount(flat, weights=y, minlength=n_cells)
    return n_c, s_c


def _objective_factory(
    n_c: np.ndarray,
    s_c: np.ndarray,
    draws: DrawSet,
    prims: ModelPrimitives,
    scale: float,
    gate_numerator: bool,
    mode: str,
):
    n_total = n_c.sum()
    if n_total == 0:
        raise EstimationError("no observations with defined cells for the dynamic step")
    used = n_c > 0
    cells = all_cells(prims.k)

    def objective(beta_vec: np.ndarray) -> float:
        beta = StructuralBeta.from_array(beta_vec)
        probs, _ = conditional_prob_table(
            beta, draws, prims, scale=scale, gate_numerator=gate_numerator, mode=mode
        )
        p = probs.reshape(-1)
        bad = used & ~np.isfinite(p)
        if bad.any():
            raise NoEntrantsError(cells[int(np.flatnonzero(bad)[0])])
        q = np.sum(n_c[used] * p[used] ** 2 - 2.0 * p[used] * s_c[used] + s_c[used])
        return float(q / (2.0 * n_total))

    return objective, int(n_total)


def dynamic_objective(
    beta: StructuralBeta,
    panel: pd.DataFrame,
    draws: DrawSet,
    prims: ModelPrimitives,
    scale: float = 1.0,
    gate_numerator: bool = True,
    mode: str = "commitment",
) -> float:
    """Simulated least-squares criterion Q at one parameter vector.

    Q = (1/2N) sum over firm-years of (chi1*chi2 - Pr(1,1 | entry, stay, z))^2
    with the probability cached per decision cell.
    """
    n_c, s_c = _cell_stats(panel, prims.k)
    objective, _ = _objective_factory(n_c, s_c, draws, prims, scale, gate_numerator, mode)
    return objective(beta.as_array())


def _anneal(objective, bounds, x0, maxiter, maxfun, rng):
    try:
        return scipy.optimize.dual_annealing(
            objective, bounds=bounds, x0=x0, maxiter=maxiter, maxfun=maxfun,
            no_local_search=True, rng=rng,
        )
    except TypeError:  # scipy < 1.15 uses `seed`
        return scipy.optimize.dual_annealing(
            objective, bounds=bounds, x0=x0, maxiter=maxiter, maxfun=maxfun,
            no_local_search=True, seed=rng,
        )


def estimate_dynamic(
    panel: pd.DataFrame,
    prims: ModelPrimitives,
    config: DynamicConfig,
    aggregates: pd.DataFrame | None = None,
    draws: DrawSet | None = None,
    sa_rng=None,
) -> DynamicEstimate:
    """Minimize the simulated least-squares criterion over beta.

    A bounded simulated-annealing sweep finds the starting point; Nelder-Mead
    polishes it.  One common DrawSet is used at every evaluation, so the
    objective is deterministic and the returned Q never exceeds the annealing
    incumbent's.
    """
    if draws is None:
        draws = DrawSet.draw(config.d_draws, derive_seeds(config.seed)["draws"])
    if sa_rng is None:
        sa_rng = np.random.default_rng(derive_seeds(config.seed)["annealing"])
    rows = panel
    n_pre = 0
    if config.postwto_only:
        if aggregates is None:
            raise EstimationError("post-liberalization subsampling needs the aggregates table")
        post_years = set(aggregates.loc[aggregates["dwto"] == 1, "year"])
        keep = rows["year"].isin(post_years)
        n_pre = int((~keep).sum())
        rows = rows[keep]
    n_no_lag = int((~rows["has_lag"]).sum())
    n_c, s_c = _cell_stats(rows, prims.k)
    objective, n_used = _objective_factory(
        n_c, s_c, draws, prims, config.scale, config.gate_numerator, config.mode
    )
    x0 = np.zeros(7) if config.x0 is None else np.asarray(config.x0, dtype=float)
    q_initial = objective(x0)
    bounds = [(-config.bound, config.bound)] * 7
    trace = [{"phase": "initial", "q": q_initial, "nfev": 1}]
    if config.use_annealing:
        sa = _anneal(objective, bounds, x0, config.sa_maxiter, config.sa_maxfun, sa_rng)
        incumbent, q_sa = np.asarray(sa.x), float(sa.fun)
        if q_initial < q_sa:  # annealing never loses the starting point
            incumbent, q_sa = x0, q_initial
        trace.append({"phase": "annealing", "q": q_sa, "nfev": int(sa.nfev)})
    else:
        incumbent, q_sa = x0, q_initial
    nm = scipy.optimize.minimize(
        objective,
        incumbent,
        method="Nelder-Mead",
        bounds=bounds,
        options={
            "fatol": config.nm_fatol,
            "xatol": config.nm_xatol,
            "maxfev": config.nm_maxfev,
        },
    )
    trace.append({"phase": "simplex", "q": float(nm.fun), "nfev": int(nm.nfev)})
    if nm.fun <= q_sa:
        beta_hat, q_final = np.asarray(nm.x), float(nm.fun)
    else:
        beta_hat, q_final = incumbent, q_sa
    return DynamicEstimate(
        beta_hat=StructuralBeta.from_array(beta_hat),
        q_final=q_final,
        q_sa=q_sa,
        q_initial=q_initial,
        n_used=n_used,
        n_dropped_no_lag=n_no_lag,
        n_dropped_pre_wto=n_pre,
        converged=bool(nm.success),
        trace=trace,
    )


# ---------------------------------------------------------------------------
# pipeline bootstrap


@dataclass
class BootstrapResult:
    ses: dict[str, float]
    replicates: pd.DataFrame
    n_failed: int
    b_requested: int


def _bootstrap_replicate(
    panel: pd.DataFrame,
    aggregates: pd.DataFrame,
    steps: tuple[int, ...],
    k_states: int,
    trade_spec: str,
    trade_method: str,
    dyn_config: DynamicConfig | None,
    beta_start: np.ndarray | None,
    draws: DrawSet | None,
    state_values,
    rep_seed,
) -> dict[str, float]:
    ss = rep_seed if isinstance(rep_seed, np.random.SeedSequence) else np.random.SeedSequence(rep_seed)
    resample_stream, anneal_stream = ss.spawn(2)
    rep = resample_firms(panel, np.random.default_rng(resample_stream))
    out: dict[str, float] = {}
    ces = estimate_ces(rep) if steps_need(steps, 1) else None
    if 1 in steps:
        out["rho"] = ces.rho_hat
        out["rho_tilde"] = ces.rho_tilde_hat
    if 2 in steps:
        tc = estimate_trade_cost(rep, aggregates, spec=trade_spec, method=trade_method, ces=ces)
        out["alpha0"] = tc.alpha0_hat
        if tc.alpha1_hat is not None:
            out["alpha1"] = tc.alpha1_hat
        if tc.year_coefs is not None:
            out.update({f"year_{y}": v for y, v in tc.year_coefs.items()})
    if steps_need(steps, 3):
        ex = estimate_exit(rep)
        tr = estimate_transitions(rep, k_states)
        if 3 in steps:
            out["sigma"] = ex.sigma_hat
            flat = tr.transitions.matrices.reshape(-1)
            out.update({f"trans_{i}": float(v) for i, v in enumerate(flat)})
    if 4 in steps:
        prims = make_primitives(ces, ex, tr, state_values=state_values)
        cfg = replace(dyn_config, x0=beta_start)
        dyn = estimate_dynamic(
            rep, prims, cfg, aggregates=aggregates, draws=draws,
            sa_rng=np.random.default_rng(anneal_stream),
        )
        out.update(dict(zip(BETA_NAMES, dyn.beta_hat.as_array())))
        out["q"] = dyn.q_final
    return out


def steps_need(steps, step: int) -> bool:
    """Whether `step` must run: requested directly or needed downstream
    (step 2 re-runs step 1; step 4 re-runs steps 1 and 3)."""
    if step in steps:
        return True
    if step == 1:
        return 2 in steps or 4 in steps
    if step == 3:
        return 4 in steps
    return False


def bootstrap_pipeline(
    panel: pd.DataFrame,
    aggregates: pd.DataFrame,
    steps: tuple[int, ...],
    b_reps: int,
    seed,
    k_states: int = 4,
    trade_spec: str = "dwto",
    trade_method: str = "re",
    dyn_config: DynamicConfig | None = None,
    beta_start: StructuralBeta | None = None,
    draws: DrawSet | None = None,
    state_values=None,
    workers: int = 1,
) -> BootstrapResult:
    """Firm-block bootstrap over the requested estimation steps.

    Each replicate resamples firms with replacement and re-runs the selected
    steps together with their upstream dependencies, so downstream standard
    errors carry the earlier steps' estimation error, not just the data's.
    Dynamic-step replicates re-run the full optimizer (annealing included
    unless the config disables it) starting from the point estimate, with the
    common draw set shared across replicates; replicate-level failures are
    excluded and counted.  Deterministic for a fixed seed regardless of the
    worker count.
    """
    if b_reps < 2:
        raise EstimationError("bootstrap needs B >= 2 replicates")
    if 4 in steps and (dyn_config is None or beta_start is None):
        raise EstimationError("step-4 bootstrap needs the dynamic config and point estimate")
    rep_seeds = np.random.SeedSequence(seed).spawn(b_reps) if not isinstance(
        seed, np.random.SeedSequence
    ) else seed.spawn(b_reps)
    start = beta_start.as_array() if beta_start is not None else None
    args = [
        (panel, aggregates, tuple(steps), k_states, trade_spec, trade_method,
         dyn_config, start, draws, state_values, rep_seeds[b])
        for b in range(b_reps)
    ]

    def run_one(arg):
        try:
            return _bootstrap_replicate(*arg)
        except (EstimationError, NoEntrantsError, ValueError):
            return None

    if workers > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=workers)(delayed(run_one)(a) for a in args)
    else:
        results = [run_one(a) for a in args]
    rows = [r for r in results if r is not None]
    n_failed = b_reps - len(rows)
    if len(rows) < 2:
        raise EstimationError(f"only {len(rows)} bootstrap replicates succeeded out of {b_reps}")
    replicates = pd.DataFrame(rows)
    ses = {c: float(replicates[c].std(ddof=1)) for c in replicates.columns}
    return BootstrapResult(ses=ses, replicates=replicates, n_failed=n_failed, b_requested=b_reps)
