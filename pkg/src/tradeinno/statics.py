"""Static firm-level economics under CES monopolistic competition.

Demand in each market is q = A p^(1/(rho-1)) with 0 < rho < 1, where output
aggregates existing and new products through a CES basket.  Firms combine one
worker with m units of intermediates; innovation raises effective capability
from lambda2 to lambda2 + eta at the cost of spreading it over both product
types.  Everything here is a closed form: marginal cost, the optimal
innovation intensity, markup prices, revenues, and per-period profits for the
four (innovate, export) branches.  No dynamics and no normalization by the
fixed production cost; both live in :mod:`tradeinno.dynamics`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Preferences:
    """CES preference parameters for the domestic and export markets."""

    rho: float
    rho_tilde: float

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not (0.0 < self.rho_tilde < 1.0):
            raise ValueError(f"rho_tilde must lie in (0, 1), got {self.rho_tilde}")

    @property
    def elasticity(self) -> float:
        """Elasticity of substitution in the domestic market, 1/(1 - rho)."""
        return 1.0 / (1.0 - self.rho)

    @property
    def elasticity_export(self) -> float:
        """Elasticity of substitution in the export market."""
        return 1.0 / (1.0 - self.rho_tilde)


@dataclass(frozen=True)
class Endowments:
    """Firm capability endowments drawn at entry.

    lambda1: production capability (unobserved labor-productivity component).
    lambda2: innovation capability.
    zeta: attractiveness of new products relative to existing ones.
    """

    lambda1: float
    lambda2: float
    zeta: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "zeta"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class CostStructure:
    """Fixed, entry and trade costs.

    f is the per-period fixed cost of production and serves as the
    normalization unit downstream, so it must be strictly positive.  tau is
    the iceberg trade cost: tau units must ship for one to arrive.
    """

    f: float
    f_n: float
    f_n_e: float
    f_e: float
    f_e_e: float
    tau: float

    def __post_init__(self):
        if not self.f > 0.0:
            raise ValueError("f must be strictly positive (normalization unit)")
        if not self.tau > 0.0:
            raise ValueError("tau must be strictly positive")


@dataclass(frozen=True)
class MarketEnv:
    """Market-level environment: aggregate demands and input costs.

    a and a_tilde are domestic and foreign aggregate demand (income over a
    price index); w_plus_m is the per-worker variable input cost w + m (only
    the sum is ever used); psi is the observed labor-productivity component,
    so effective productivity is s = lambda1 * psi.
    """

    a: float
    a_tilde: float
    w_plus_m: float
    psi: float

    def __post_init__(self):
        for name in ("a", "a_tilde", "w_plus_m", "psi"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class ChoicePair:
    """Indicator pair (chi1, chi2): product innovation and export."""

    chi1: int
    chi2: int

    def __post_init__(self):
        if self.chi1 not in (0, 1) or self.chi2 not in (0, 1):
            raise ValueError(f"choice indicators must be 0/1, got {(self.chi1, self.chi2)}")

    @property
    def index(self) -> int:
        """Position in the canonical ordering (0,0), (0,1), (1,0), (1,1)."""
        return 2 * self.chi1 + self.chi2


def marginal_cost(endow: Endowments, env: MarketEnv, prefs: Preferences, eta: float) -> float:
    """Marginal cost of production at innovation level eta >= 0.

    c = (lambda2 + eta) (w + m) / [lambda2 (1 + zeta^rho eta^rho)^(1/rho) s]
    with s = lambda1 * psi.  Computed in log space; at eta = 0 the CES
    aggregator term is exactly 1.
    """
    eta = float(eta)
    if eta < 0.0:
        raise ValueError("eta must be nonnegative")
    rho = prefs.rho
    log_c = (
        np.log(endow.lambda2 + eta)
        + np.log(env.w_plus_m)
        - np.log(endow.lambda2)
        - np.log(endow.lambda1 * env.psi)
    )
    if eta > 0.0:
        log_c -= np.log1p(np.exp(rho * (np.log(endow.zeta) + np.log(eta)))) / rho
    return float(np.exp(log_c))


def optimal_eta(endow: Endowments, prefs: Preferences) -> float:
    """Profit-maximizing innovation intensity eta = q_new / q_old.

    eta = lambda2^(1/(1-rho)) * zeta^(rho/(1-rho)); this is the unique
    minimizer of marginal cost, hence the maximizer of gross profit.
    """
    rho = prefs.rho
    return float(np.exp((np.log(endow.lambda2) + rho * np.log(endow.zeta)) / (1.0 - rho)))


def optimal_prices(c: float, tau: float, prefs: Preferences) -> tuple[float, float]:
    """Markup prices p = c / rho (domestic) and p_tilde = tau c / rho_tilde."""
    if not c > 0.0:
        raise ValueError("marginal cost must be strictly positive")
    return c / prefs.rho, tau * c / prefs.rho_tilde


def revenues(env: MarketEnv, prefs: Preferences, c: float, tau: float) -> tuple[float, float]:
    """Optimal per-period domestic and export revenues.

    R = rho^(rho/(1-rho)) A c^(rho/(rho-1)) and
    R~ = rho~^(rho~/(1-rho~)) A~ (tau c)^(rho~/(rho~-1)).
    The variable-cost identity holds exactly: c q = rho R and tau c q~ = rho~ R~.
    """
    rho, rho_t = prefs.rho, prefs.rho_tilde
    log_c = np.log(c)
    log_r = (rho / (1.0 - rho)) * np.log(rho) + np.log(env.a) + (rho / (rho - 1.0)) * log_c
    log_rt = (
        (rho_t / (1.0 - rho_t)) * np.log(rho_t)
        + np.log(env.a_tilde)
        + (rho_t / (rho_t - 1.0)) * (log_c + np.log(tau))
    )
    return float(np.exp(log_r)), float(np.exp(log_rt))


def lambda2_hat(endow: Endowments, prefs: Preferences) -> float:
    """Composite innovation gain (lambda2 zeta)^(rho/(1-rho)) scaling gross profit."""
    rho = prefs.rho
    return float(np.exp((rho / (1.0 - rho)) * (np.log(endow.lambda2) + np.log(endow.zeta))))


def period_profit(
    choice: ChoicePair,
    lags: ChoicePair,
    endow: Endowments,
    env: MarketEnv,
    costs: CostStructure,
    prefs: Preferences,
) -> tuple[float, float]:
    """Per-period profits (pi, pi_tilde) given current and lagged choices.

    Innovation intensity is the closed-form optimum when chi1 = 1 and zero
    otherwise.  Entry costs are charged only when the activity is chosen and
    was not active in the previous period.  pi_tilde is zero when the firm
    does not export.
    """
    eta = optimal_eta(endow, prefs) if choice.chi1 == 1 else 0.0
    c = marginal_cost(endow, env, prefs, eta)
    r, r_tilde = revenues(env, prefs, c, costs.tau)
    pi = (1.0 - prefs.rho) * r - costs.f
    if choice.chi1 == 1:
        pi -= costs.f_n + costs.f_n_e * (1 - lags.chi1)
    if choice.chi2 == 1:
        pi_tilde = (1.0 - prefs.rho_tilde) * r_tilde - (
            costs.f_e + costs.f_e_e * (1 - lags.chi2)
        )
    else:
        pi_tilde = 0.0
    return pi, pi_tilde
