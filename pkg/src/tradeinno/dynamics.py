"""Dynamic layer: normalized choice values over a discretized state space.

Firms choose (chi1, chi2) = (innovate, export) each period.  Per-period
payoffs are normalized by the fixed cost of production and parameterized by
the composite endowment draws lambda1_hat, lambda2_hat and cost shocks
eps3..eps6; beta0..beta6 enter through the export demand composite, fixed
costs and entry costs.  The state (psi/(w+m)) follows a finite Markov chain
whose transition matrix depends on the current choice.

The recursion v_choice = flow + delta*sigma*E[v_choice] solves a per-choice
commitment fixed point: lagged indicators equal the committed choice from the
second period on, so entry costs are paid at most once and v_(0,0) carries no
beta terms at all.  An optional emax mode replaces the continuation with the
max over next-period choices; it is available everywhere a `mode` argument
appears but is not the literal model.

All solvers are pure functions of their arguments and vectorized over the
draw dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .statics import ChoicePair, Preferences

# Canonical ordering of the four (chi1, chi2) choices; index = 2*chi1 + chi2.
CHOICES = (ChoicePair(0, 0), ChoicePair(0, 1), ChoicePair(1, 0), ChoicePair(1, 1))

# Lognormal parameters giving lambda_hat draws mean 1 and variance 1.
LOGNORMAL_MEAN = -0.5 * np.log(2.0)
LOGNORMAL_SD = np.sqrt(np.log(2.0))


class NoEntrantsError(RuntimeError):
    """No simulation draw clears the entry condition v00 >= 0 at a cell."""

    def __init__(self, cell: "ZCell"):
        self.cell = cell
        super().__init__(f"no draw satisfies the entry condition at cell {cell}")


@dataclass(frozen=True)
class StructuralBeta:
    """The seven dynamic-choice parameters.

    b0: log of the export demand composite (contains the iceberg trade cost
        raised to rho_tilde/(rho_tilde - 1)); b1/b2: log fixed costs of export
        and innovation relative to the fixed production cost; b3..b6: log
        entry costs of export and innovation with big-firm shifters.
    """

    b0: float
    b1: float
    b2: float
    b3: float
    b4: float
    b5: float
    b6: float

    def __post_init__(self):
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"beta must be finite, got {arr}")

    def as_array(self) -> np.ndarray:
        return np.array([self.b0, self.b1, self.b2, self.b3, self.b4, self.b5, self.b6])

    @classmethod
    def from_array(cls, arr) -> "StructuralBeta":
        return cls(*(float(x) for x in np.asarray(arr, dtype=float)))

    def replace_b0(self, b0: float) -> "StructuralBeta":
        return StructuralBeta(float(b0), self.b1, self.b2, self.b3, self.b4, self.b5, self.b6)


class TransitionSet:
    """Four K x K row-stochastic matrices, one per (chi1, chi2) choice."""

    def __init__(self, matrices):
        mats = np.asarray(matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[0] != 4 or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"expected shape (4, K, K), got {mats.shape}")
        if mats.shape[1] < 2:
            raise ValueError("state space needs K >= 2")
        if np.any(mats < -1e-12) or np.any(mats > 1.0 + 1e-12):
            raise ValueError("transition probabilities must lie in [0, 1]")
        rowsums = mats.sum(axis=2)
        if np.any(np.abs(rowsums - 1.0) > 1e-9):
            raise ValueError("every transition row must sum to 1 within 1e-9")
        self.matrices = np.clip(mats, 0.0, 1.0)

    @property
    def k(self) -> int:
        return self.matrices.shape[1]

    def matrix(self, chi1: int, chi2: int) -> np.ndarray:
        return self.matrices[2 * chi1 + chi2]

    @classmethod
    def from_dict(cls, mapping) -> "TransitionSet":
        return cls(np.stack([np.asarray(mapping[(c.chi1, c.chi2)], dtype=float) for c in CHOICES]))


@dataclass
class ModelPrimitives:
    """Parameters known before the dynamic step: preferences, discounting,
    survival, transition beliefs and the representative state values."""

    prefs: Preferences
    sigma: float
    transitions: TransitionSet
    delta: float = 0.95
    state_values: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if not (0.0 < self.sigma < 1.0):
            raise ValueError("sigma must lie in (0, 1)")
        if self.state_values is None:
            self.state_values = np.arange(1, self.transitions.k + 1, dtype=float)
        else:
            self.state_values = np.asarray(self.state_values, dtype=float)
        if self.state_values.shape != (self.transitions.k,):
            raise ValueError("state_values must have one entry per state")
        if np.any(np.diff(self.state_values) <= 0.0):
            raise ValueError("state_values must be strictly increasing")

    @property
    def k(self) -> int:
        return self.transitions.k

    @property
    def disc(self) -> float:
        """Effective discount factor delta * sigma on the survival branch."""
        return self.delta * self.sigma


@dataclass(frozen=True)
class ZCell:
    """One point of the discrete decision environment z.

    state is a 1-based index into the productivity grid; lag1/lag2 are the
    previous period's innovation and export indicators; is_big flags firms
    above the size threshold (shifts entry costs).
    """

    state: int
    lag1: int
    lag2: int
    is_big: int

    def __post_init__(self):
        if self.state < 1:
            raise ValueError("state index is 1-based")
        for name in ("lag1", "lag2", "is_big"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0/1")

    def flat_index(self, k_states: int) -> int:
        if self.state > k_states:
            raise ValueError(f"state {self.state} out of range for K={k_states}")
        return ((self.state - 1) * 2 + self.lag1) * 4 + self.lag2 * 2 + self.is_big


def all_cells(k_states: int) -> list[ZCell]:
    """Every cell in flat-index order: (state, lag1, lag2, is_big) nested loops."""
    return [
        ZCell(k, l1, l2, b)
        for k in range(1, k_states + 1)
        for l1 in (0, 1)
        for l2 in (0, 1)
        for b in (0, 1)
    ]


@dataclass
class DrawSet:
    """D simulated endowment and cost-shock vectors, common across beta
    evaluations so the estimation objective is deterministic and smooth."""

    lam1: np.ndarray
    lam2: np.ndarray
    eps3: np.ndarray
    eps4: np.ndarray
    eps5: np.ndarray
    eps6: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        for name in ("lam1", "lam2", "eps3", "eps4", "eps5", "eps6"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.lam1 > 0).all() or not (self.lam2 > 0).all():
            raise ValueError("lambda_hat draws must be strictly positive")

    @property
    def d(self) -> int:
        return self.lam1.shape[0]

    @classmethod
    def draw(cls, d: int, seed: int) -> "DrawSet":
        """Draw lambda1_hat, lambda2_hat lognormal with mean and variance 1
        and eps3..eps6 standard normal, all mutually independent."""
        rng = np.random.default_rng(seed)
        lam1 = np.exp(rng.normal(LOGNORMAL_MEAN, LOGNORMAL_SD, size=d))
        lam2 = np.exp(rng.normal(LOGNORMAL_MEAN, LOGNORMAL_SD, size=d))
        eps = rng.standard_normal(size=(4, d))
        return cls(lam1, lam2, eps[0], eps[1], eps[2], eps[3], seed=seed)


@dataclass(frozen=True)
class ChoiceValues:
    """Normalized values of the four choices at one cell for one draw."""

    v00: float
    v01: float
    v10: float
    v11: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v00, self.v01, self.v10, self.v11])


# ---------------------------------------------------------------------------
# flow payoffs


def _pieces(prims: ModelPrimitives):
    """Constants of the normalized flow payoff that depend only on primitives."""
    rho, rho_t = prims.prefs.rho, prims.prefs.rho_tilde
    sv = prims.state_values
    return {
        "dom_pref": (1.0 - rho) * rho ** (rho / (1.0 - rho)),
        "ex_pref": (1.0 - rho_t) * rho_t ** (rho_t / (1.0 - rho_t)),
        "sv_dom": sv ** (rho / (1.0 - rho)),
        "sv_ex": sv ** (rho_t / (1.0 - rho_t)),
        "e1": (1.0 - rho) * rho_t / (rho * (1.0 - rho_t)),
    }


def _entry_costs(beta: StructuralBeta, draws: DrawSet, is_big) -> tuple[np.ndarray, np.ndarray]:
    """Realized entry costs of export and innovation, shape broadcast of
    (draws, is_big)."""
    b = np.asarray(is_big)
    ec_export = np.exp(beta.b3 + beta.b4 * b) + draws.eps5
    ec_innov = np.exp(beta.b5 + beta.b6 * b) + draws.eps6
    return ec_export, ec_innov


def flow_payoff(
    choice: ChoicePair,
    cell: ZCell,
    draws: DrawSet,
    beta: StructuralBeta,
    prims: ModelPrimitives,
    charge_entry: bool = True,
) -> np.ndarray:
    """Normalized per-period payoff of `choice` at `cell`, one value per draw.

    The (0,0) payoff is (1-rho) rho^(rho/(1-rho)) sv^(rho/(1-rho)) lam1 - 1
    and carries no beta terms.  Export adds the beta0-scaled foreign term and
    the fixed cost exp(b1)+eps3; innovation multiplies the domestic term by
    (1+lam2), scales the export term by (1+lam2)^e1 and costs exp(b2)+eps4.
    Entry costs are charged only if `charge_entry` and the matching lag is 0.
    """
    p = _pieces(prims)
    k = cell.state - 1
    out = p["dom_pref"] * p["sv_dom"][k] * draws.lam1 * (1.0 + draws.lam2 * choice.chi1) - 1.0
    if choice.chi2:
        out = out + (
            p["ex_pref"]
            * np.exp(beta.b0)
            * p["sv_ex"][k]
            * draws.lam1 ** p["e1"]
            * (1.0 + draws.lam2) ** (p["e1"] * choice.chi1)
        )
        out = out - (np.exp(beta.b1) + draws.eps3)
    if choice.chi1:
        out = out - (np.exp(beta.b2) + draws.eps4)
    if charge_entry:
        ec_export, ec_innov = _entry_costs(beta, draws, cell.is_big)
        out = out - choice.chi2 * (1 - cell.lag2) * ec_export
        out = out - choice.chi1 * (1 - cell.lag1) * ec_innov
    return out


def _flow_commit_all(beta: StructuralBeta, draws: DrawSet, prims: ModelPrimitives) -> np.ndarray:
    """Per-period payoffs with lags equal to the choice (no entry costs),
    for all four choices and all states; shape (D, K, 4)."""
    p = _pieces(prims)
    lam1 = draws.lam1[:, None]
    dom0 = p["dom_pref"] * p["sv_dom"][None, :] * lam1
    dom1 = dom0 * (1.0 + draws.lam2[:, None])
    exbase = p["ex_pref"] * np.exp(beta.b0) * p["sv_ex"][None, :] * lam1 ** p["e1"]
    ex1 = exbase * (1.0 + draws.lam2[:, None]) ** p["e1"]
    fe = (np.exp(beta.b1) + draws.eps3)[:, None]
    fn = (np.exp(beta.b2) + draws.eps4)[:, None]
    flows = np.empty((draws.d, prims.k, 4))
    flows[:, :, 0] = dom0 - 1.0
    flows[:, :, 1] = dom0 - 1.0 + exbase - fe
    flows[:, :, 2] = dom1 - 1.0 - fn
    flows[:, :, 3] = dom1 - 1.0 + ex1 - fe - fn
    return flows


# ---------------------------------------------------------------------------
# fixed points


def solve_commitment_values(
    choice: ChoicePair,
    beta: StructuralBeta,
    draws: DrawSet,
    prims: ModelPrimitives,
) -> np.ndarray:
    """Stationary values of committing to `choice` forever, shape (D, K).

    Solves w = flow + delta*sigma*M_choice w by direct linear solve; the
    spectral radius of delta*sigma*M is below 1 so the solution is unique.
    """
    flows = _flow_commit_all(beta, draws, prims)[:, :, choice.index]
    m = prims.transitions.matrices[choice.index]
    a = np.eye(prims.k) - prims.disc * m
    return np.linalg.solve(a, flows.T).T


def _commitment_all(beta: StructuralBeta, draws: DrawSet, prims: ModelPrimitives) -> np.ndarray:
    """Commitment values for all four choices at once, shape (D, K, 4)."""
    flows = _flow_commit_all(beta, draws, prims)
    out = np.empty_like(flows)
    for c in range(4):
        a = np.eye(prims.k) - prims.disc * prims.transitions.matrices[c]
        out[:, :, c] = np.linalg.solve(a, flows[:, :, c].T).T
    return out


def emax_solve(
    beta: StructuralBeta,
    draws: DrawSet,
    prims: ModelPrimitives,
    is_big: int,
    tol: float = 1e-12,
    max_iter: int = 5000,
) -> np.ndarray:
    """Optimal value function over (state, lag1, lag2) by value iteration,
    shape (D, K, 2, 2).  Continuation takes the max over next-period choices;
    lags evolve deterministically to the current choice."""
    flows = _flow_commit_all(beta, draws, prims)  # (D, K, 4), no entry costs
    ec_export, ec_innov = _entry_costs(beta, draws, is_big)
    # entry[d, l1, l2, c]: entry costs charged for choice c at lags (l1, l2)
    lag1 = np.array([0, 1])[None, :, None, None]
    lag2 = np.array([0, 1])[None, None, :, None]
    chi1 = np.array([c.chi1 for c in CHOICES])[None, None, None, :]
    chi2 = np.array([c.chi2 for c in CHOICES])[None, None, None, :]
    entry = chi2 * (1 - lag2) * ec_export[:, None, None, None] + chi1 * (1 - lag1) * ec_innov[
        :, None, None, None
    ]
    disc = prims.disc
    v = np.zeros((draws.d, prims.k, 2, 2))
    cand = np.empty((draws.d, prims.k, 2, 2, 4))
    for _ in range(max_iter):
        for c, choice in enumerate(CHOICES):
            cont = v[:, :, choice.chi1, choice.chi2] @ prims.transitions.matrices[c].T
            cand[:, :, :, :, c] = (
                flows[:, :, None, None, c] - entry[:, None, :, :, c] + disc * cont[:, :, None, None]
            )
        v_new = cand.max(axis=4)
        change = np.abs(v_new - v).max()
        v = v_new
        if change < tol:
            break
    else:
        raise RuntimeError("value iteration did not converge")
    return v


# ---------------------------------------------------------------------------
# choice values and probabilities


def choice_values(
    cell: ZCell,
    beta: StructuralBeta,
    draws: DrawSet,
    prims: ModelPrimitives,
    mode: str = "commitment",
) -> np.ndarray:
    """Values of the four choices at `cell`, shape (D, 4) in CHOICES order.

    Commitment mode: v_c(cell) = w_c[state] minus the entry costs implied by
    the cell's lags (continuation lags equal the committed choice, so entry is
    paid at most once).  Emax mode replaces the continuation with the optimal
    value function.
    """
    if mode == "commitment":
        w = _commitment_all(beta, draws, prims)[:, cell.state - 1, :]
    elif mode == "emax":
        vstar = emax_solve(beta, draws, prims, cell.is_big)
        flows = _flow_commit_all(beta, draws, prims)
        k = cell.state - 1
        w = np.empty((draws.d, 4))
        for c, choice in enumerate(CHOICES):
            cont = vstar[:, :, choice.chi1, choice.chi2] @ prims.transitions.matrices[c][k]
            w[:, c] = flows[:, k, c] + prims.disc * cont
    else:
        raise ValueError(f"unknown dynamics mode {mode!r}")
    ec_export, ec_innov = _entry_costs(beta, draws, cell.is_big)
    chi1 = np.array([c.chi1 for c in CHOICES])
    chi2 = np.array([c.chi2 for c in CHOICES])
    return (
        w
        - chi2[None, :] * (1 - cell.lag2) * ec_export[:, None]
        - chi1[None, :] * (1 - cell.lag1) * ec_innov[:, None]
    )


def choice_value_rows(
    state_index: np.ndarray,
    lag1: np.ndarray,
    lag2: np.ndarray,
    is_big: np.ndarray,
    draws: DrawSet,
    beta: StructuralBeta,
    prims: ModelPrimitives,
    mode: str = "commitment",
) -> np.ndarray:
    """Choice values for N heterogeneous firm rows, shape (N, 4).

    Row i pairs the i-th draw of `draws` with state_index[i] (1-based),
    lags and size flag; used by the forward simulator where each firm-year
    carries its own realized draws.
    """
    state_index = np.asarray(state_index, dtype=int)
    rows = np.arange(state_index.shape[0])
    if mode == "commitment":
        w = _commitment_all(beta, draws, prims)[rows, state_index - 1, :]
    elif mode == "emax":
        flows = _flow_commit_all(beta, draws, prims)
        w = np.empty((state_index.shape[0], 4))
        for b in (0, 1):
            sel = np.asarray(is_big) == b
            if not sel.any():
                continue
            vstar = emax_solve(beta, _subset(draws, sel), prims, b)
            fsel = flows[sel]
            ks = state_index[sel] - 1
            for c, choice in enumerate(CHOICES):
                cont = vstar[:, :, choice.chi1, choice.chi2] @ prims.transitions.matrices[c].T
                w[sel, c] = fsel[np.arange(sel.sum()), ks, c] + prims.disc * cont[
                    np.arange(sel.sum()), ks
                ]
    else:
        raise ValueError(f"unknown dynamics mode {mode!r}")
    ec_export, ec_innov = _entry_costs(beta, draws, np.asarray(is_big))
    chi1 = np.array([c.chi1 for c in CHOICES])
    chi2 = np.array([c.chi2 for c in CHOICES])
    return (
        w
        - chi2[None, :] * (1 - np.asarray(lag2))[:, None] * ec_export[:, None]
        - chi1[None, :] * (1 - np.asarray(lag1))[:, None] * ec_innov[:, None]
    )


def _subset(draws: DrawSet, sel) -> DrawSet:
    return DrawSet(
        draws.lam1[sel],
        draws.lam2[sel],
        draws.eps3[sel],
        draws.eps4[sel],
        draws.eps5[sel],
        draws.eps6[sel],
        seed=draws.seed,
    )


def hard_choice(values) -> ChoicePair:
    """Argmax over the four values; exact ties resolve to the earliest choice
    in CHOICES order, i.e. (0,0) > (0,1) > (1,0) > (1,1)."""
    arr = values.as_array() if isinstance(values, ChoiceValues) else np.asarray(values)
    if arr.shape != (4,):
        raise ValueError("expected four choice values")
    return CHOICES[int(np.argmax(arr))]


def smoothed_probabilities(values, scale: float = 1.0) -> np.ndarray:
    """Logistic (McFadden kernel) smoothing of the argmax choice rule.

    Pr(c) = 1 / sum_c' exp((v_c' - v_c)/scale), a softmax over the last axis;
    scale 1 reproduces the estimation formula, scale -> 0 the hard argmax.
    """
    if not scale > 0.0:
        raise ValueError("smoothing scale must be positive")
    arr = values.as_array() if isinstance(values, ChoiceValues) else np.asarray(values)
    z = arr / scale
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def simulate_conditional_prob(
    cell: ZCell,
    beta: StructuralBeta,
    draws: DrawSet,
    prims: ModelPrimitives,
    scale: float = 1.0,
    gate_numerator: bool = True,
    mode: str = "commitment",
) -> float:
    """Simulated Pr(chi1=1, chi2=1 | entry, stay) at one cell.

    Averages the smoothed (1,1) probability over draws that clear the entry
    condition v00 >= 0; the entry indicator never depends on beta in
    commitment mode.  With `gate_numerator` (default) the numerator sums over
    entering draws only, making the result a proper conditional probability.
    """
    values = choice_values(cell, beta, draws, prims, mode=mode)
    entered = values[:, 0] >= 0.0
    n_in = int(entered.sum())
    if n_in == 0:
        raise NoEntrantsError(cell)
    p11 = smoothed_probabilities(values, scale)[:, 3]
    num = p11[entered].sum() if gate_numerator else p11.sum()
    return float(num / n_in)


def conditional_prob_table(
    beta: StructuralBeta,
    draws: DrawSet,
    prims: ModelPrimitives,
    scale: float = 1.0,
    gate_numerator: bool = True,
    mode: str = "commitment",
) -> tuple[np.ndarray, np.ndarray]:
    """Pr(1,1 | entry, stay) at every cell in one pass.

    Returns (probs, n_entered): probs has shape (K, 2, 2, 2) indexed by
    (state-1, lag1, lag2, is_big) with NaN where no draw enters, and
    n_entered has shape (K, 2) indexed by (state-1, is_big).  The entry count
    varies with is_big only in emax mode.
    """
    k_states = prims.k
    big = np.array([0.0, 1.0])
    ec_export = np.exp(beta.b3 + beta.b4 * big)[None, :] + draws.eps5[:, None]  # (D, 2)
    ec_innov = np.exp(beta.b5 + beta.b6 * big)[None, :] + draws.eps6[:, None]
    chi1 = np.array([c.chi1 for c in CHOICES])
    chi2 = np.array([c.chi2 for c in CHOICES])
    probs = np.full((k_states, 2, 2, 2), np.nan)
    n_entered = np.zeros((k_states, 2), dtype=int)
    lag1 = np.array([0, 1])
    lag2 = np.array([0, 1])
    if mode not in ("commitment", "emax"):
        raise ValueError(f"unknown dynamics mode {mode!r}")
    w_commit = _commitment_all(beta, draws, prims) if mode == "commitment" else None
    flows = _flow_commit_all(beta, draws, prims) if mode == "emax" else None

    for b in (0, 1):
        if mode == "commitment":
            w = w_commit  # (D, K, 4), is_big-free
        else:
            vstar = emax_solve(beta, draws, prims, b)
            w = np.empty((draws.d, k_states, 4))
            for c, choice in enumerate(CHOICES):
                cont = vstar[:, :, choice.chi1, choice.chi2] @ prims.transitions.matrices[c].T
                w[:, :, c] = flows[:, :, c] + prims.disc * cont
        # v[d, k, l1, l2, c]
        entry = (
            chi2[None, None, None, :] * (1 - lag2)[None, None, :, None] * ec_export[:, b][:, None, None, None]
            + chi1[None, None, None, :] * (1 - lag1)[None, :, None, None] * ec_innov[:, b][:, None, None, None]
        )
        v = w[:, :, None, None, :] - entry[:, None, :, :, :]
        entered = v[:, :, 0, 0, 0] >= 0.0  # v00 is lag-free
        n_entered[:, b] = entered.sum(axis=0)
        p11 = smoothed_probabilities(v, scale)[..., 3]  # (D, K, 2, 2)
        gate = entered if gate_numerator else np.ones_like(entered)
        num = (p11 * gate[:, :, None, None]).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            probs[:, :, :, b] = np.where(
                n_entered[:, b][:, None, None] > 0,
                num / n_entered[:, b][:, None, None],
                np.nan,
            )
    return probs, n_entered
