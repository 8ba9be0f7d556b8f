"""Replication and super-replication holdings at a grid node and state.

All holdings are quoted both as position values (shares times account price,
the quantity the exported tables carry) and as share counts against supplied
account prices.  Identities maintained here:

* wealth: sum of all position values minus the collateral account equals the
  replicated surface value;
* collateral: psi_m * B_m = -M at all times;
* drift: the position-implied wealth drift equals the negative XVA drift
  plus the nonnegative surplus rate of the robust selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import LatticeSurface, StateSpace
from .market import ContagionModel, MarketConfig, Portfolio


def funding_rate_select(cfg: MarketConfig, y: float) -> tuple[float, bool]:
    """Treasury rate applied to a funding balance y.

    Returns r_f_minus for y < 0 and r_f_plus for y > 0.  At y = 0 the accrual
    vanishes either way; r_f_plus is returned with a tie flag for
    determinism.
    """
    if y < 0.0:
        return cfg.r_f_minus, False
    return cfg.r_f_plus, y == 0.0


@dataclass(frozen=True)
class StrategySnapshot:
    """Holdings at one (time, state) point.

    ``xi_ref_values[i]`` is the position value in the account of surviving
    entity i (1-based ids in ``alive``); share counts divide by the supplied
    account prices.
    """

    t: float
    state: int
    alive: tuple[int, ...]
    xi_ref_values: dict[int, float]
    xi_I_value: float
    xi_C_value: float
    xi_f_value: float
    psi_m_value: float
    xi_ref: dict[int, float]
    xi_I: float
    xi_C: float
    xi_f: float
    psi_m: float

    def wealth(self) -> float:
        """Total portfolio value carried by the holdings."""
        return (
            sum(self.xi_ref_values.values())
            + self.xi_I_value
            + self.xi_C_value
            + self.xi_f_value
            - self.psi_m_value
        )


@dataclass(frozen=True)
class AccountPrices:
    """Denominators for share counts; default to unit prices."""

    refs: dict[int, float] | None = None
    investor: float = 1.0
    counterparty: float = 1.0
    funding: float = 1.0
    margin: float = 1.0

    def ref(self, i: int) -> float:
        if self.refs is None:
            return 1.0
        return self.refs[i]


def _snapshot(
    u_surface: LatticeSurface,
    v_hat: LatticeSurface,
    m_surface: LatticeSurface,
    portfolio: Portfolio,
    t: float,
    key: int,
    accounts: AccountPrices,
) -> StrategySnapshot:
    space = u_surface.space
    u = u_surface.at(key, t)
    v = v_hat.at(key, t)
    m = m_surface.at(key, t)
    gap = v - m
    pos = max(gap, 0.0)
    neg = max(-gap, 0.0)
    if space.homogeneous:
        k = key
        alive = tuple(range(1, portfolio.n - k + 1))  # anonymized survivor slots
        child_u = u_surface.at(k + 1, t) if k < portfolio.n else 0.0
        ref_vals = {i: u - child_u for i in alive}
    else:
        alive = tuple(space.alive(key))
        ref_vals = {
            i: u - u_surface.at(space.child(key, i), t) for i in alive
        }
    xi_I_value = portfolio.loss_investor * pos + u
    xi_C_value = -portfolio.loss_counterparty * neg + u
    psi_m_value = -m
    xi_f_value = (
        -u
        - sum(ref_vals.values())
        + portfolio.loss_counterparty * neg
        - portfolio.loss_investor * pos
        - m
    )
    return StrategySnapshot(
        t=t,
        state=key,
        alive=alive,
        xi_ref_values=ref_vals,
        xi_I_value=xi_I_value,
        xi_C_value=xi_C_value,
        xi_f_value=xi_f_value,
        psi_m_value=psi_m_value,
        xi_ref={i: ref_vals[i] / accounts.ref(i) for i in alive},
        xi_I=xi_I_value / accounts.investor,
        xi_C=xi_C_value / accounts.counterparty,
        xi_f=xi_f_value / accounts.funding,
        psi_m=psi_m_value / accounts.margin,
    )


def robust_strategy(
    upper: LatticeSurface,
    v_hat: LatticeSurface,
    m_surface: LatticeSurface,
    portfolio: Portfolio,
    t: float,
    key: int,
    accounts: AccountPrices = AccountPrices(),
) -> StrategySnapshot:
    """Super-replicating holdings built from the upper XVA surface."""
    return _snapshot(upper, v_hat, m_surface, portfolio, t, key, accounts)


def actual_strategy(
    actual: LatticeSurface,
    v_hat: LatticeSurface,
    m_surface: LatticeSurface,
    portfolio: Portfolio,
    t: float,
    key: int,
    accounts: AccountPrices = AccountPrices(),
) -> StrategySnapshot:
    """Replicating holdings built from the actual XVA surface."""
    return _snapshot(actual, v_hat, m_surface, portfolio, t, key, accounts)


def lower_strategy(
    lower: LatticeSurface,
    v_hat: LatticeSurface,
    m_surface: LatticeSurface,
    portfolio: Portfolio,
    t: float,
    key: int,
    accounts: AccountPrices = AccountPrices(),
) -> StrategySnapshot:
    """Sub-replicating holdings built from the lower XVA surface."""
    return _snapshot(lower, v_hat, m_surface, portfolio, t, key, accounts)


def wealth_drift(
    cfg: MarketConfig,
    model: ContagionModel,
    portfolio: Portfolio,
    snapshot: StrategySnapshot,
    m: float,
    mu_C_true: float,
    t: float,
    count: int,
) -> float:
    """Instantaneous wealth growth of the holdings under the true rate.

    Accounts for the defaultable-account drifts at their account rates
    mu = h + r_D, the sign-dependent treasury rate on the funding balance
    (which finances the surviving loss notionals on top of the funding
    account itself), and the collateral remuneration.
    """
    loss_sum = _alive_loss_sum(portfolio, snapshot)
    mu_I = model.intensity_by_count("I", t, count) + cfg.r_D
    drift = 0.0
    for i in snapshot.alive:
        mu_i = _ref_mu(cfg, model, portfolio, t, count, i, snapshot)
        drift += snapshot.xi_ref_values[i] * mu_i
    drift += snapshot.xi_I_value * mu_I
    drift += snapshot.xi_C_value * mu_C_true
    y = snapshot.xi_f_value + loss_sum
    drift += cfg.r_f_plus * max(y, 0.0) - cfg.r_f_minus * max(-y, 0.0)
    drift += -cfg.r_D * loss_sum
    drift += cfg.r_m_plus * max(m, 0.0) - cfg.r_m_minus * max(-m, 0.0)
    return drift


def _alive_loss_sum(portfolio: Portfolio, snapshot: StrategySnapshot) -> float:
    if not snapshot.alive:
        return 0.0
    contracts = portfolio.contracts
    if len({(c.spread, c.loss, c.direction) for c in contracts}) == 1:
        c0 = contracts[0]
        return len(snapshot.alive) * c0.direction * c0.loss
    return sum(
        contracts[i - 1].direction * contracts[i - 1].loss for i in snapshot.alive
    )


def _ref_mu(cfg, model, portfolio, t, count, i, snapshot) -> float:
    if model.shared_reference_dynamics():
        return model.intensity_by_count(1, t, count) + cfg.r_D
    from .market import DefaultState
    return model.intensity(i, t, DefaultState(snapshot.state, portfolio.n)) + cfg.r_D
