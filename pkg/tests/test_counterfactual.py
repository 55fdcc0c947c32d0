"""Frequency tables, the yearly series, and the liberalization diff-in-diff."""

import numpy as np
import pandas as pd
import pytest

from tradeinno import (
    DrawSet,
    adjust_beta0,
    conditional_frequencies,
    counterfactual_series,
    derive_columns,
    did_effect,
    make_primitives,
    estimate_ces,
    estimate_exit,
    estimate_transitions,
    observed_yearly_joint,
    simulate_panel,
    simulated_yearly_joint,
)
from tradeinno.counterfactual import cell_distributions, default_series_years
from tradeinno.estimation import attach_cells, derive_seeds
from tests.test_simulate import BETA, SV, base_config


def hand_panel(rows):
    frame = pd.DataFrame(
        rows,
        columns=["firm_id", "year", "chi1_flag", "chi2_flag"],
    )
    frame["dom_revenue"] = 1.0
    frame["export_revenue"] = frame.pop("chi2_flag") * 2.0
    frame["new_product_value"] = frame.pop("chi1_flag") * 3.0
    frame["total_wage"] = 0.2
    frame["intermediates"] = 0.3
    frame["workers"] = 1.0
    frame["fixed_assets_net"] = 1.0
    return derive_columns(frame)


def test_conditional_frequencies_hand_case():
    # two previously-innovating firms innovate again; two fresh firms do not
    panel = hand_panel(
        [
            (0, 2000, 1, 0), (0, 2001, 1, 0),
            (1, 2000, 1, 0), (1, 2001, 1, 0),
            (2, 2000, 0, 0), (2, 2001, 0, 0),
            (3, 2000, 0, 0), (3, 2001, 0, 0),
        ]
    )
    tables = conditional_frequencies(panel, "lagged")
    assert tables["innovation"].probs[1, 1] == pytest.approx(1.0)
    assert tables["innovation"].probs[0, 1] == pytest.approx(0.0)
    np.testing.assert_allclose(tables["innovation"].probs.sum(axis=1), 1.0)
    assert tables["innovation"].ses[1, 1] == pytest.approx(0.0)


def test_conditional_frequencies_contemporaneous_and_flags():
    panel = hand_panel([(0, 2000, 1, 1), (1, 2000, 1, 1), (2, 2000, 0, 1)])
    tables = conditional_frequencies(panel, "contemporaneous")
    # Pr(chi1 = 1 | chi2 = 1) = 2/3; no chi2 = 0 observations -> flagged row
    assert tables["innovation"].probs[1, 1] == pytest.approx(2.0 / 3.0)
    assert tables["innovation"].flagged == [0]
    with pytest.raises(ValueError):
        conditional_frequencies(panel, "sideways")


def test_observed_yearly_joint_hand_values():
    rows = []
    for f in range(10):
        rows.append((f, 2000, 0, 0))
        rows.append((f, 2001, int(f < 3), int(f < 3)))
    panel = hand_panel(rows)
    series = observed_yearly_joint(panel)
    assert series["year"].tolist() == [2001]  # 2000 has no lags
    assert series["observed"].iloc[0] == pytest.approx(0.3)
    with pytest.raises(ValueError):
        observed_yearly_joint(panel, years=[1999])


def test_default_series_years_skips_gap_years():
    rows = [(0, y, 0, 0) for y in (2000, 2001, 2002, 2003, 2005, 2006, 2007)]
    panel = hand_panel(rows)
    assert default_series_years(panel) == [2001, 2002, 2003, 2006, 2007]


def test_adjust_beta0_paper_value_and_involution():
    assert adjust_beta0(-8.9705, -0.135, 0.9163) == pytest.approx(-10.449, abs=1e-3)
    assert adjust_beta0(-5.0, 0.0, 0.9) == -5.0
    roundtrip = adjust_beta0(adjust_beta0(-8.9705, -0.135, 0.9163), 0.135, 0.9163)
    assert roundtrip == pytest.approx(-8.9705, abs=1e-12)
    with pytest.raises(ValueError):
        adjust_beta0(-8.0, -0.1, 1.2)


def test_did_effect_arithmetic():
    series = pd.DataFrame(
        {
            "year": [2001, 2002, 2003, 2006],
            "observed": [0.10, 0.10, 0.16, 0.16],
            "simulated": [0.20, 0.20, 0.20, 0.20],
        }
    )
    assert did_effect(series, 2002) == pytest.approx(0.06)
    sym = series.assign(simulated=series["observed"] + 0.05)
    assert did_effect(sym, 2002) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        did_effect(series[series["year"] > 2002], 2002)


@pytest.fixture(scope="module")
def fitted_panel():
    cfg = base_config(n=62, seed=13)
    panel, _ = attach_cells(derive_columns(simulate_panel(cfg)), 2)
    prims = make_primitives(
        estimate_ces(panel), estimate_exit(panel), estimate_transitions(panel, 2),
        state_values=SV,
    )
    draws = DrawSet.draw(500, derive_seeds(99)["draws"])
    return panel, prims, draws


def test_simulated_series_mixture_cases(fitted_panel):
    panel, prims, draws = fitted_panel
    dists = cell_distributions(panel, prims.k)
    np.testing.assert_allclose(dists.drop(columns="year").sum(axis=1), 1.0, atol=1e-12)
    sim = simulated_yearly_joint(BETA, prims, draws, dists)
    assert ((sim["simulated"] >= 0) & (sim["simulated"] <= 1)).all()
    # degenerate distribution on one cell equals that cell's probability
    from tradeinno.dynamics import simulate_conditional_prob, all_cells

    one = dists.iloc[[0]].copy()
    cols = [c for c in one.columns if c != "year"]
    one[cols] = 0.0
    idx = 12
    one[f"cell_{idx}"] = 1.0
    got = simulated_yearly_joint(BETA, prims, draws, one)["simulated"].iloc[0]
    want = simulate_conditional_prob(all_cells(prims.k)[idx], BETA, draws, prims)
    assert got == pytest.approx(want, abs=1e-14)
    # uniform over two cells: arithmetic mean of the two probabilities
    two = one.copy()
    two[cols] = 0.0
    two["cell_4"] = 0.5
    two["cell_12"] = 0.5
    got2 = simulated_yearly_joint(BETA, prims, draws, two)["simulated"].iloc[0]
    p4 = simulate_conditional_prob(all_cells(prims.k)[4], BETA, draws, prims)
    assert got2 == pytest.approx(0.5 * (p4 + want), abs=1e-14)


def test_lower_trade_cost_raises_series(fitted_panel):
    panel, prims, draws = fitted_panel
    dists = cell_distributions(panel, prims.k)
    post = simulated_yearly_joint(BETA, prims, draws, dists)
    beta0_pre = adjust_beta0(BETA.b0, -0.135, prims.prefs.rho_tilde)
    pre = simulated_yearly_joint(
        BETA, prims, draws, dists, beta0_by_year={int(y): beta0_pre for y in dists["year"]}
    )
    assert (post["simulated"].to_numpy() >= pre["simulated"].to_numpy()).all()
    assert post["simulated"].sum() > pre["simulated"].sum()


def test_counterfactual_series_and_did_positive(fitted_panel):
    panel, prims, draws = fitted_panel
    series = counterfactual_series(panel, BETA, prims, draws, wto_split=2002)
    assert list(series.columns) == ["t_index", "year", "observed", "simulated", "regime", "n"]
    assert series["t_index"].tolist() == list(range(1, len(series) + 1))
    assert set(series["regime"]) == {"pre", "post"}
    assert did_effect(series, 2002) > 0
