"""Descriptive frequency tables and the trade-liberalization counterfactual.

The counterfactual compares, year by year, the observed joint export-and-
innovation frequency with the model-simulated probability evaluated at the
estimated (post-liberalization) trade-cost level.  Before liberalization the
gap reflects both estimation error and the higher trade cost; afterwards it
is estimation error only, so the difference in mean gaps across regimes reads
off the policy effect (a diff-in-differences on the probability scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dynamics import (
    DrawSet,
    ModelPrimitives,
    NoEntrantsError,
    StructuralBeta,
    all_cells,
    conditional_prob_table,
)


def adjust_beta0(beta0_post: float, alpha1: float, rho_tilde: float) -> float:
    """Back out the pre-liberalization beta0 from the post value.

    beta0 contains ln(tau^(rho_tilde/(rho_tilde-1))) and alpha1 estimates
    ln(tau_post) - ln(tau_pre), so
    beta0_pre = beta0_post + (rho_tilde/(rho_tilde-1)) * (-alpha1).
    """
    if not (0.0 < rho_tilde < 1.0):
        raise ValueError("rho_tilde must lie in (0, 1)")
    return float(beta0_post + (rho_tilde / (rho_tilde - 1.0)) * (-alpha1))


@dataclass
class FrequencyTable:
    """A 2x2 conditional frequency table with binomial standard errors.

    probs[r, c] = Pr(current = c | conditioning = r); rows sum to 1.
    counts[r] is the number of observations with conditioning value r, and
    flagged marks conditioning rows with no observations (probs NaN there).
    """

    probs: np.ndarray
    ses: np.ndarray
    counts: np.ndarray
    flagged: list[int]


def _freq_table(cond: np.ndarray, cur: np.ndarray) -> FrequencyTable:
    probs = np.full((2, 2), np.nan)
    ses = np.full((2, 2), np.nan)
    counts = np.zeros(2, dtype=int)
    flagged = []
    for r in (0, 1):
        sel = cond == r
        counts[r] = sel.sum()
        if counts[r] == 0:
            flagged.append(r)
            continue
        p1 = cur[sel].mean()
        probs[r] = [1.0 - p1, p1]
        se = np.sqrt(p1 * (1.0 - p1) / counts[r])
        ses[r] = [se, se]
    return FrequencyTable(probs, ses, counts, flagged)


def conditional_frequencies(panel: pd.DataFrame, conditioning: str = "lagged") -> dict[str, FrequencyTable]:
    """Innovation/export probabilities conditional on history or on the
    contemporaneous other activity.

    `conditioning` = "lagged" reproduces the persistence tables
    (Pr(chi | chi_{-1}) for each activity, lag-defined rows only);
    "contemporaneous" the complementarity tables (Pr(chi1 | chi2) and
    Pr(chi2 | chi1)).
    """
    if conditioning == "lagged":
        rows = panel[panel["has_lag"]]
        return {
            "innovation": _freq_table(rows["lag1"].to_numpy(int), rows["chi1"].to_numpy(int)),
            "export": _freq_table(rows["lag2"].to_numpy(int), rows["chi2"].to_numpy(int)),
        }
    if conditioning == "contemporaneous":
        return {
            "innovation": _freq_table(panel["chi2"].to_numpy(int), panel["chi1"].to_numpy(int)),
            "export": _freq_table(panel["chi1"].to_numpy(int), panel["chi2"].to_numpy(int)),
        }
    raise ValueError(f"unknown conditioning {conditioning!r}")


def default_series_years(panel: pd.DataFrame) -> list[int]:
    """Years usable in the yearly series: those whose previous calendar year
    is also in the sample, so lagged choices are defined.  On the original
    sample layout (2000-2007 with 2004 missing) this drops 2000 and 2005."""
    years = set(panel["year"].unique())
    return sorted(y for y in years if (y - 1) in years)


def observed_yearly_joint(panel: pd.DataFrame, years=None) -> pd.DataFrame:
    """Observed relative frequency of firms that both export and innovate,
    per year, over rows with defined lags (the rows the simulated series can
    cover)."""
    if years is None:
        years = default_series_years(panel)
    rows = panel[panel["has_lag"]]
    out = []
    for year in years:
        sub = rows[rows["year"] == year]
        if len(sub) == 0:
            raise ValueError(f"no lag-defined observations in year {year}")
        out.append(
            {
                "year": int(year),
                "observed": float((sub["chi1"] * sub["chi2"]).mean()),
                "n": int(len(sub)),
            }
        )
    return pd.DataFrame(out)


def cell_distributions(panel: pd.DataFrame, k_states: int, years=None) -> pd.DataFrame:
    """Per-year distribution over decision cells z = (state, lag1, lag2,
    is_big); one row per year, one column per flat cell index, rows sum to 1."""
    if years is None:
        years = default_series_years(panel)
    rows = panel[panel["has_lag"]]
    n_cells = k_states * 8
    dist = np.zeros((len(years), n_cells))
    for i, year in enumerate(years):
        sub = rows[rows["year"] == year]
        if len(sub) == 0:
            raise ValueError(f"no lag-defined observations in year {year}")
        flat = (
            ((sub["state"].to_numpy(int) - 1) * 2 + sub["lag1"].to_numpy(int)) * 4
            + sub["lag2"].to_numpy(int) * 2
            + sub["is_big"].to_numpy(int)
        )
        counts = np.bincount(flat, minlength=n_cells)
        dist[i] = counts / counts.sum()
    frame = pd.DataFrame(dist, columns=[f"cell_{j}" for j in range(n_cells)])
    frame.insert(0, "year", [int(y) for y in years])
    return frame


def simulated_yearly_joint(
    beta: StructuralBeta,
    prims: ModelPrimitives,
    draws: DrawSet,
    cell_dists: pd.DataFrame,
    scale: float = 1.0,
    gate_numerator: bool = True,
    mode: str = "commitment",
    beta0_by_year: dict[int, float] | None = None,
) -> pd.DataFrame:
    """Model-implied joint probability per year: the cell-probability table
    mixed over each year's empirical cell distribution.

    By default every year is evaluated at beta.b0 (the estimate from
    post-liberalization data), which is the counterfactual of interest; pass
    `beta0_by_year` to evaluate specific years at an adjusted beta0 instead.
    """
    cells = all_cells(prims.k)
    years = [int(y) for y in cell_dists["year"]]
    weights = cell_dists.drop(columns="year").to_numpy()
    tables: dict[float, np.ndarray] = {}
    out = []
    for i, year in enumerate(years):
        b0 = beta.b0 if beta0_by_year is None else beta0_by_year.get(year, beta.b0)
        if b0 not in tables:
            probs, _ = conditional_prob_table(
                beta.replace_b0(b0), draws, prims, scale=scale,
                gate_numerator=gate_numerator, mode=mode,
            )
            tables[b0] = probs.reshape(-1)
        flat_probs = tables[b0]
        w = weights[i]
        bad = (w > 0) & ~np.isfinite(flat_probs)
        if bad.any():
            raise NoEntrantsError(cells[int(np.flatnonzero(bad)[0])])
        out.append({"year": year, "simulated": float(np.dot(np.where(w > 0, flat_probs, 0.0), w))})
    return pd.DataFrame(out)


def did_effect(series: pd.DataFrame, wto_split: int) -> float:
    """Mean simulated-minus-observed gap before the split year minus the mean
    gap after it; positive when the pre-period gap is larger (the direction a
    trade-cost reduction implies).  Post-liberalization years are those with
    year > wto_split."""
    gap = series["simulated"] - series["observed"]
    pre = gap[series["year"] <= wto_split]
    post = gap[series["year"] > wto_split]
    if len(pre) == 0 or len(post) == 0:
        raise ValueError(f"both regimes must be nonempty around split {wto_split}")
    return float(pre.mean() - post.mean())


def counterfactual_series(
    panel: pd.DataFrame,
    beta: StructuralBeta,
    prims: ModelPrimitives,
    draws: DrawSet,
    wto_split: int,
    scale: float = 1.0,
    gate_numerator: bool = True,
    mode: str = "commitment",
) -> pd.DataFrame:
    """Plot-ready observed-vs-simulated series with the regime labels.

    Columns: t_index (1-based position in the included years), year,
    observed, simulated, regime ("pre"/"post"), n.
    """
    years = default_series_years(panel)
    observed = observed_yearly_joint(panel, years)
    dists = cell_distributions(panel, prims.k, years)
    simulated = simulated_yearly_joint(
        beta, prims, draws, dists, scale=scale, gate_numerator=gate_numerator, mode=mode
    )
    series = observed.merge(simulated, on="year")
    series.insert(0, "t_index", np.arange(1, len(series) + 1))
    series["regime"] = np.where(series["year"] > wto_split, "post", "pre")
    return series[["t_index", "year", "observed", "simulated", "regime", "n"]]
