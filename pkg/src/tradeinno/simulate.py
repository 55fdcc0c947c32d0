"""Forward simulator: synthetic firm panels from known parameters.

Each calendar year a cohort of candidate firms draws endowments, enters iff
the normalized value of staying out of both activities is nonnegative, and
surviving incumbents pick the best (innovate, export) pair given their state,
lagged activity and realized cost shocks.  The productivity state then moves
by the transition matrix of the chosen pair.  Trajectories start `burn_in`
years before the observation window so first-window cross-sections carry
realistic activity histories, and the trade-cost regime follows the
aggregates file's liberalization dummy.

Three endowment regimes control how the capability draws attach to firms.
"fixed" (the structural reading) draws them once at entry; "yearly" redraws
them every period; "truncated" redraws them every period with the production
capability drawn from its lognormal conditional on clearing the entry
condition at the firm's current state.  The truncated regime is the sampling
model the estimation step assumes (each observed firm-year looks like a
fresh entrant that cleared entry and stayed), so it is the regime under
which simulated-then-estimated parameters are directly comparable to the
truth; the fixed regime keeps the survivor-composition effects the estimator
does not model.

Randomness is split into one child stream per firm, spawned from the master
seed in creation order, so generation is reproducible and trajectories are
independent across firms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import ndtr, ndtri

from .counterfactual import adjust_beta0
from .dynamics import (
    CHOICES,
    LOGNORMAL_MEAN,
    LOGNORMAL_SD,
    DrawSet,
    ModelPrimitives,
    StructuralBeta,
    choice_value_rows,
    solve_commitment_values,
)

ENDOWMENT_MODES = ("fixed", "yearly", "truncated")


def entry_cutoffs(prims: ModelPrimitives) -> np.ndarray:
    """Production-capability entry cutoffs per state.

    The no-activity value is linear in lambda1_hat: w00[k] = a_k lambda1 - b_k
    with positive coefficients, so v00 >= 0 iff lambda1 >= b_k / a_k.
    """
    rho = prims.prefs.rho
    sv_dom = prims.state_values ** (rho / (1.0 - rho))
    dom_pref = (1.0 - rho) * rho ** (rho / (1.0 - rho))
    inv = np.linalg.inv(np.eye(prims.k) - prims.disc * prims.transitions.matrix(0, 0))
    a = inv @ (dom_pref * sv_dom)
    b = inv @ np.ones(prims.k)
    return b / a


@dataclass
class SimConfig:
    """Configuration of one synthetic panel.

    true_beta.b0 is the post-liberalization value; years with dwto = 0 use
    the back-adjusted pre value implied by alpha1_true.  noise_tvc is the
    standard deviation of the additive measurement error on total variable
    cost, noise_lny the standard deviation of the trade-cost equation error
    (implemented as a lognormal tilt on export revenue).  endowment_mode
    "fixed" draws capabilities once at entry; "yearly" redraws them every
    period.  eps_mode controls whether the cost shocks are redrawn yearly
    (default) or frozen at their entry values.  raw_mode additionally
    constructs workers and capital intensity so the state-construction
    pipeline recovers the simulated state.
    """

    n_entrants_per_year: int
    years: list[int]
    true_beta: StructuralBeta
    prims: ModelPrimitives
    aggregates: pd.DataFrame
    seed: int
    alpha1_true: float = 0.0
    noise_tvc: float = 0.0
    noise_lny: float = 0.0
    burn_in: int = 8
    endowment_mode: str = "fixed"
    eps_mode: str = "yearly"
    raw_mode: bool = False
    processing_share: float = 0.0
    wage_share: float = 0.3

    def __post_init__(self):
        if self.n_entrants_per_year < 1:
            raise ValueError("n_entrants_per_year must be >= 1")
        if len(self.years) == 0:
            raise ValueError("years must be nonempty")
        if self.noise_tvc < 0 or self.noise_lny < 0:
            raise ValueError("noise levels must be nonnegative")
        if self.endowment_mode not in ENDOWMENT_MODES:
            raise ValueError(f"endowment_mode must be one of {ENDOWMENT_MODES}")
        if self.eps_mode not in ("yearly", "fixed"):
            raise ValueError("eps_mode must be 'yearly' or 'fixed'")
        missing = set(self.years) - set(int(y) for y in self.aggregates["year"])
        if missing:
            raise ValueError(f"aggregates missing years: {sorted(missing)}")


def stationary_initial_states(transitions) -> np.ndarray:
    """Stationary distribution of the no-activity transition matrix, used to
    place entrants on the state grid.  Falls back to uniform with a warning
    when that matrix is not irreducible."""
    m = transitions.matrix(0, 0)
    k = m.shape[0]
    reach = np.eye(k, dtype=bool)
    step = (m > 0) | np.eye(k, dtype=bool)
    for _ in range(k):
        reach = reach @ step
    if not reach.all():
        warnings.warn("no-activity transition matrix is not irreducible; using uniform initial states")
        return np.full(k, 1.0 / k)
    a = np.vstack([m.T - np.eye(k), np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass
class _Cohort:
    """Firms born in one calendar year, with their pre-drawn randomness."""

    birth_year: int
    uid: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    is_big: np.ndarray
    processing: np.ndarray
    state: np.ndarray
    lag1: np.ndarray
    lag2: np.ndarray
    alive: np.ndarray
    eps: np.ndarray          # (n, T, 4)
    u_exit: np.ndarray       # (n, T)
    u_trans: np.ndarray      # (n, T)
    z_lny: np.ndarray        # (n, T)
    z_tvc: np.ndarray        # (n, T)
    u_tl: np.ndarray         # (n, T)
    u_kl: np.ndarray         # (n, T)
    lam_yearly: np.ndarray | None  # (n, T, 2) when endowments redraw
    u_lam1: np.ndarray | None      # (n, T) truncated-mode uniforms
    z_lam2: np.ndarray | None      # (n, T) truncated-mode normals


def _spawn_cohort(cfg: SimConfig, root: np.random.SeedSequence, birth_year: int,
                  first_uid: int, t_max: int, init_cdf: np.ndarray) -> _Cohort:
    n = cfg.n_entrants_per_year
    lam1 = np.empty(n)
    lam2 = np.empty(n)
    u_state = np.empty(n)
    processing = np.empty(n)
    eps = np.empty((n, t_max, 4))
    u_exit = np.empty((n, t_max))
    u_trans = np.empty((n, t_max))
    z_lny = np.empty((n, t_max))
    z_tvc = np.empty((n, t_max))
    u_tl = np.empty((n, t_max))
    u_kl = np.empty((n, t_max))
    lam_yearly = np.empty((n, t_max, 2)) if cfg.endowment_mode == "yearly" else None
    truncated = cfg.endowment_mode == "truncated"
    u_lam1 = np.empty((n, t_max)) if truncated else None
    z_lam2 = np.empty((n, t_max)) if truncated else None
    for i, child in enumerate(root.spawn(n)):
        rng = np.random.default_rng(child)
        ent = rng.standard_normal(2)
        lam1[i], lam2[i] = np.exp(LOGNORMAL_MEAN + LOGNORMAL_SD * ent)
        u_state[i] = rng.random()
        processing[i] = rng.random()
        eps[i] = rng.standard_normal((t_max, 4))
        u_exit[i] = rng.random(t_max)
        u_trans[i] = rng.random(t_max)
        z_lny[i] = rng.standard_normal(t_max)
        z_tvc[i] = rng.standard_normal(t_max)
        u_tl[i] = rng.standard_normal(t_max)
        u_kl[i] = rng.standard_normal(t_max)
        if lam_yearly is not None:
            lam_yearly[i] = np.exp(LOGNORMAL_MEAN + LOGNORMAL_SD * rng.standard_normal((t_max, 2)))
        if truncated:
            u_lam1[i] = rng.random(t_max)
            z_lam2[i] = rng.standard_normal(t_max)
    state = np.searchsorted(init_cdf, u_state, side="right") + 1
    state = np.minimum(state, len(init_cdf))
    if truncated:
        # the birth-year capability draw is conditioned on clearing entry
        entered = np.ones(n, dtype=bool)
    else:
        # stage one: enter iff the no-activity value at the initial state is >= 0
        v00 = solve_commitment_values(CHOICES[0], cfg.true_beta, _entry_draws(lam1, lam2), cfg.prims)
        entered = v00[np.arange(n), state - 1] >= 0.0
    keep = np.flatnonzero(entered)
    is_big = (np.arange(keep.size) % 2).astype(int)  # alternate: half of each cohort is big
    return _Cohort(
        birth_year=birth_year,
        uid=first_uid + np.arange(keep.size),
        lam1=lam1[keep],
        lam2=lam2[keep],
        is_big=is_big,
        processing=(processing[keep] < cfg.processing_share).astype(int),
        state=state[keep].astype(int),
        lag1=np.zeros(keep.size, dtype=int),
        lag2=np.zeros(keep.size, dtype=int),
        alive=np.ones(keep.size, dtype=bool),
        eps=eps[keep],
        u_exit=u_exit[keep],
        u_trans=u_trans[keep],
        z_lny=z_lny[keep],
        z_tvc=z_tvc[keep],
        u_tl=u_tl[keep],
        u_kl=u_kl[keep],
        lam_yearly=lam_yearly[keep] if lam_yearly is not None else None,
        u_lam1=u_lam1[keep] if u_lam1 is not None else None,
        z_lam2=z_lam2[keep] if z_lam2 is not None else None,
    )


def _truncated_lam1(u: np.ndarray, cutoff: np.ndarray) -> np.ndarray:
    """Lognormal capability draw conditioned on lam1 >= cutoff, by inverse CDF."""
    z_star = (np.log(cutoff) - LOGNORMAL_MEAN) / LOGNORMAL_SD
    p0 = ndtr(z_star)
    return np.exp(LOGNORMAL_MEAN + LOGNORMAL_SD * ndtri(p0 + u * (1.0 - p0)))


def _entry_draws(lam1, lam2) -> DrawSet:
    zeros = np.zeros_like(lam1)
    return DrawSet(lam1, lam2, zeros, zeros, zeros, zeros)


def _regime_lookup(cfg: SimConfig):
    """Map any simulation year to its liberalization dummy: the most recent
    aggregates row at or before that year (first row before the window)."""
    agg = cfg.aggregates.sort_values("year")
    agg_years = agg["year"].to_numpy()
    dwto = agg["dwto"].to_numpy()

    def regime(year: int) -> int:
        idx = np.searchsorted(agg_years, year, side="right") - 1
        return int(dwto[max(idx, 0)])

    return regime


def simulate_panel(cfg: SimConfig) -> pd.DataFrame:
    """Simulate the decision process and emit the observation-window panel.

    Deterministic for a fixed seed.  Exit events terminate trajectories, so
    no firm-year appears after its firm's exit.  Output rows are sorted by
    (firm_id, year) and follow the panel CSV schema, including the state
    column (ground truth) and the processing flag.
    """
    prims = cfg.prims
    prefs = prims.prefs
    years = sorted(int(y) for y in cfg.years)
    first, last = years[0] - cfg.burn_in, years[-1]
    obs_years = set(years)
    regime = _regime_lookup(cfg)
    beta_pre = cfg.true_beta.replace_b0(
        adjust_beta0(cfg.true_beta.b0, cfg.alpha1_true, prefs.rho_tilde)
    )
    init_cdf = np.cumsum(stationary_initial_states(prims.transitions))
    trans_cdf = np.cumsum(prims.transitions.matrices, axis=2)
    cutoffs = entry_cutoffs(prims) if cfg.endowment_mode == "truncated" else None
    root = np.random.SeedSequence(cfg.seed)

    rho, rho_t = prefs.rho, prefs.rho_tilde
    e1 = (1.0 - rho) * rho_t / (rho * (1.0 - rho_t))
    sv_all = prims.state_values

    cohorts: list[_Cohort] = []
    next_uid = 0
    records: list[dict] = []

    for year in range(first, last + 1):
        # stage two: incumbents face the survival shock
        for c in cohorts:
            t = year - c.birth_year
            if t <= 0:
                continue
            c.alive &= ~(c.u_exit[:, t] < (1.0 - prims.sigma))
        # stage one: this year's entrant cohort
        cohort = _spawn_cohort(cfg, root, year, next_uid, last - year + 1, init_cdf)
        next_uid += cohort.uid.size
        cohorts.append(cohort)

        beta_y = cfg.true_beta if regime(year) == 1 else beta_pre
        for c in cohorts:
            live = np.flatnonzero(c.alive)
            if live.size == 0:
                continue
            t = year - c.birth_year
            if cfg.endowment_mode == "yearly" and t > 0:
                lam1 = c.lam_yearly[live, t, 0]
                lam2 = c.lam_yearly[live, t, 1]
            elif cfg.endowment_mode == "truncated":
                lam1 = _truncated_lam1(c.u_lam1[live, t], cutoffs[c.state[live] - 1])
                lam2 = np.exp(LOGNORMAL_MEAN + LOGNORMAL_SD * c.z_lam2[live, t])
            else:
                lam1, lam2 = c.lam1[live], c.lam2[live]
            t_eps = 0 if cfg.eps_mode == "fixed" else t
            draws = DrawSet(
                lam1, lam2,
                c.eps[live, t_eps, 0], c.eps[live, t_eps, 1],
                c.eps[live, t_eps, 2], c.eps[live, t_eps, 3],
            )
            values = choice_value_rows(
                c.state[live], c.lag1[live], c.lag2[live], c.is_big[live],
                draws, beta_y, prims,
            )
            choice_idx = np.argmax(values, axis=1)
            chi1, chi2 = choice_idx // 2, choice_idx % 2

            if year in obs_years:
                sv = sv_all[c.state[live] - 1]
                rev = rho ** (rho / (1 - rho)) * sv ** (rho / (1 - rho)) * lam1 * (1 + lam2 * chi1)
                lny_tilt = np.exp(cfg.noise_lny * c.z_lny[live, t] * rho_t / (rho_t - 1.0))
                rev_x = chi2 * (
                    rho_t ** (rho_t / (1 - rho_t))
                    * np.exp(beta_y.b0)
                    * sv ** (rho_t / (1 - rho_t))
                    * lam1 ** e1
                    * (1 + lam2) ** (e1 * chi1)
                    * lny_tilt
                )
                tvc_clean = rho * rev + rho_t * rev_x
                tvc = np.maximum(tvc_clean + cfg.noise_tvc * c.z_tvc[live, t], 0.01 * tvc_clean)
                workers = (0.1 + 0.9 * c.is_big[live]) * np.exp(0.05 * c.u_tl[live, t])
                kl = np.exp(0.3 * c.u_kl[live, t])
                records.append(
                    {
                        "firm_id": c.uid[live],
                        "year": np.full(live.size, year),
                        "dom_revenue": rev,
                        "export_revenue": rev_x,
                        "total_wage": cfg.wage_share * tvc,
                        "intermediates": (1.0 - cfg.wage_share) * tvc,
                        "workers": workers,
                        "new_product_value": chi1 * rev * lam2 / (1.0 + lam2),
                        "fixed_assets_net": kl * workers,
                        "processing_flag": c.processing[live],
                        "state": c.state[live],
                        "_u_tl": c.u_tl[live, t],
                        "_u_kl": c.u_kl[live, t],
                    }
                )

            # state transition under the chosen pair; lags follow the choice
            row_cdf = trans_cdf[choice_idx, c.state[live] - 1, :]
            u = c.u_trans[live, t]
            nxt = (u[:, None] > row_cdf).sum(axis=1) + 1
            c.state[live] = np.minimum(nxt, prims.k)
            c.lag1[live] = chi1
            c.lag2[live] = chi2

    if not records:
        raise RuntimeError("no firm entered during the observation window")
    panel = pd.DataFrame({k: np.concatenate([r[k] for r in records]) for k in records[0]})
    panel = panel.sort_values(["firm_id", "year"], kind="mergesort").reset_index(drop=True)
    if cfg.raw_mode:
        panel = _raw_observables(panel, prims)
    return panel.drop(columns=["_u_tl", "_u_kl"])


def _raw_observables(panel: pd.DataFrame, prims: ModelPrimitives) -> pd.DataFrame:
    """Rewrite workers and fixed assets so the PCA state pipeline reproduces
    the simulated state.

    Workers solve tl - c = d * (tvc / tl) with d = (sv^3 - a) * jitter, sign
    and magnitude carrying the state, and capital intensity is proportional
    to workers.  Both pooled z-scores then equal z(d * wm), so the principal
    component divided by wm is d / sd up to the jitter: exact per-state
    clusters that pooled quantile cuts separate whenever state shares are
    near-balanced.  The centering constant a is iterated so the clusters sit
    symmetrically around zero.  The is_big median split is not meaningful
    under raw mode; use the default mode when size classes matter.
    """
    out = panel.copy()
    tvc = (out["total_wage"] + out["intermediates"]).to_numpy()
    sv = prims.state_values[out["state"].to_numpy(int) - 1]
    jitter = np.exp(0.01 * out["_u_tl"].to_numpy())
    base = sv**3 * jitter

    def workers_for(a_shift):
        d = base - a_shift * jitter
        c = 2.0 * np.sqrt(np.abs(d * tvc).max())
        tl = 0.5 * (c + np.sqrt(c * c + 4.0 * d * tvc))
        return d, tl

    a_shift = base.mean()
    for _ in range(60):
        d, tl = workers_for(a_shift)
        wm = tvc / tl
        a_new = np.sum(base * wm) / np.sum(jitter * wm)
        if abs(a_new - a_shift) < 1e-13 * max(abs(a_shift), 1.0):
            a_shift = a_new
            break
        a_shift = a_new
    d, tl = workers_for(a_shift)
    out["workers"] = tl
    out["fixed_assets_net"] = tl * tl  # capital intensity proportional to size
    return out
