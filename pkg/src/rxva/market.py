"""Static market data: rates, the counterparty rate band, contagion intensities,
portfolio contracts, and validation of the no-arbitrage assumption.

All rates are per annum and all times are in years.  Default states are
encoded as bitmasks over the reference entities, with bit ``i - 1`` set when
entity ``i`` (1-based) has defaulted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

INVESTOR = "I"
COUNTERPARTY = "C"


class ConfigError(ValueError):
    """Raised when a configuration file or dictionary is malformed."""


# ---------------------------------------------------------------------------
# Default states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DefaultState:
    """Set of defaulted reference entities.

    Attributes:
        mask: bitmask over entities; bit (i - 1) set means entity i defaulted.
        n: total number of reference entities.
    """

    mask: int
    n: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >= (1 << self.n):
            raise ValueError(f"mask {self.mask} out of range for n={self.n}")

    @property
    def k(self) -> int:
        """Number of defaulted entities |J|."""
        return bin(self.mask).count("1")

    def contains(self, entity: int) -> bool:
        """True when the 1-based ``entity`` is in the defaulted set."""
        return bool(self.mask >> (entity - 1) & 1)

    def with_default(self, entity: int) -> "DefaultState":
        """State after the additional default of 1-based ``entity``."""
        if self.contains(entity):
            raise ValueError(f"entity {entity} already defaulted")
        return DefaultState(self.mask | (1 << (entity - 1)), self.n)

    def alive(self) -> list[int]:
        """Surviving 1-based entity ids, ascending."""
        return [i for i in range(1, self.n + 1) if not self.contains(i)]


# ---------------------------------------------------------------------------
# Market configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarketConfig:
    """Rates and the counterparty account-rate uncertainty band.

    ``mu_C_true`` is optional and used only by the actual-rate solve and the
    Monte Carlo verifier.  It is either a float or the string ``"model"``,
    in which case the true rate is read off the contagion model as
    ``h_C(t, J) + r_D``.
    """

    r_D: float
    r_f_plus: float
    r_f_minus: float
    r_m_plus: float
    r_m_minus: float
    mu_C_lower: float
    mu_C_upper: float
    mu_C_true: float | str | None = None

    def __post_init__(self):
        if self.mu_C_lower > self.mu_C_upper:
            raise ConfigError(
                f"inverted counterparty band: lower {self.mu_C_lower} > "
                f"upper {self.mu_C_upper}"
            )
        if isinstance(self.mu_C_true, str) and self.mu_C_true != "model":
            raise ConfigError(f"mu_C_true must be a number or 'model', got {self.mu_C_true!r}")

    def counterparty_band_rates(self) -> tuple[float, float]:
        """Risk-neutral intensity band (lower, upper) = (mu - r_D) endpoints.

        Both endpoints are strictly positive for a validated configuration.
        """
        return (self.mu_C_lower - self.r_D, self.mu_C_upper - self.r_D)


# ---------------------------------------------------------------------------
# Contagion model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseTable:
    """Piecewise-constant intensity, keyed by (time piece, default count).

    ``breaks`` are the interior time breakpoints; piece ``p`` covers
    ``[breaks[p-1], breaks[p])`` with the convention that piece 0 starts at 0
    and the last piece is unbounded on the right.  ``values[p][k]`` is the
    intensity on piece ``p`` when ``k`` prior defaults are relevant (``|J|``
    for the trading parties, ``|J \\ {i}|`` for a surviving reference
    entity).  A row shorter than requested is clamped at its last entry.
    """

    breaks: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.values) != len(self.breaks) + 1:
            raise ConfigError(
                f"table needs {len(self.breaks) + 1} value rows, got {len(self.values)}"
            )
        if any(b2 <= b1 for b1, b2 in zip(self.breaks, self.breaks[1:])):
            raise ConfigError("table breakpoints must be strictly increasing")

    def at(self, t: float, count: int) -> float:
        p = int(np.searchsorted(self.breaks, t, side="right"))
        row = self.values[p]
        return row[min(count, len(row) - 1)]


def _as_table(spec) -> PiecewiseTable:
    """Builds a PiecewiseTable from a config fragment.

    Accepts either a bare number (constant intensity), or a mapping with
    ``breaks`` and ``values`` where each value row is a number (no count
    dependence) or a list indexed by default count.
    """
    if isinstance(spec, (int, float)):
        return PiecewiseTable(breaks=(), values=((float(spec),),))
    breaks = tuple(float(b) for b in spec.get("breaks", ()))
    rows = []
    for row in spec["values"]:
        if isinstance(row, (int, float)):
            rows.append((float(row),))
        else:
            rows.append(tuple(float(v) for v in row))
    return PiecewiseTable(breaks=breaks, values=tuple(rows))


@dataclass(frozen=True)
class ContagionModel:
    """Interacting default intensities for references, investor and counterparty.

    In parametric mode the risk-neutral intensities are::

        h_I(t, J) = a10 + a13 |J|
        h_C(t, J) = a20 + a23 |J|
        h_i(t, J) = a30 + a33 |J \\ {i}|     for surviving i

    The cross-party couplings a12, a21, a31, a32 are accepted but play no
    role before the first trading-party default; they are kept only so that
    configurations carrying them round-trip.

    In general mode, per-entity piecewise-constant tables keyed by
    (time piece, default count) replace the affine parameterization.
    """

    n: int
    a10: float = 0.0
    a13: float = 0.0
    a20: float = 0.0
    a23: float = 0.0
    a30: float = 0.0
    a33: float = 0.0
    a12: float = 0.0
    a21: float = 0.0
    a31: float = 0.0
    a32: float = 0.0
    investor_table: PiecewiseTable | None = None
    counterparty_table: PiecewiseTable | None = None
    reference_tables: tuple[PiecewiseTable, ...] | None = None

    def __post_init__(self):
        if self.reference_tables is not None:
            if len(self.reference_tables) not in (1, self.n):
                raise ConfigError(
                    "reference_tables must hold one shared table or one per entity"
                )

    @property
    def general_mode(self) -> bool:
        return self.reference_tables is not None

    def _ref_table(self, entity: int) -> PiecewiseTable:
        tables = self.reference_tables
        return tables[0] if len(tables) == 1 else tables[entity - 1]

    def intensity(self, who, t: float, state: DefaultState) -> float:
        """Risk-neutral default intensity h_who(t, J).

        ``who`` is a 1-based entity id, or one of the markers ``"I"``/``"C"``.
        Raises for a reference entity that already defaulted.
        """
        if who == INVESTOR:
            if self.investor_table is not None:
                return self.investor_table.at(t, state.k)
            return self.a10 + self.a13 * state.k
        if who == COUNTERPARTY:
            if self.counterparty_table is not None:
                return self.counterparty_table.at(t, state.k)
            return self.a20 + self.a23 * state.k
        entity = int(who)
        if state.contains(entity):
            raise ValueError(f"entity {entity} has defaulted and carries no intensity")
        count = state.k  # i is alive, so |J \ {i}| == |J|
        if self.general_mode:
            return self._ref_table(entity).at(t, count)
        return self.a30 + self.a33 * count

    def intensity_by_count(self, who, t: float, count: int) -> float:
        """Intensity as a function of the default count only.

        Valid whenever the model is count-based (always true in parametric
        mode; in general mode this uses the shared/first table).
        """
        if who == INVESTOR:
            if self.investor_table is not None:
                return self.investor_table.at(t, count)
            return self.a10 + self.a13 * count
        if who == COUNTERPARTY:
            if self.counterparty_table is not None:
                return self.counterparty_table.at(t, count)
            return self.a20 + self.a23 * count
        if self.general_mode:
            return self.reference_tables[0].at(t, count)
        return self.a30 + self.a33 * count

    def breakpoints(self) -> tuple[float, ...]:
        """Sorted time breakpoints of all piecewise-constant intensities."""
        pts: set[float] = set()
        for table in self._tables():
            pts.update(table.breaks)
        return tuple(sorted(pts))

    def _tables(self):
        out = []
        if self.investor_table is not None:
            out.append(self.investor_table)
        if self.counterparty_table is not None:
            out.append(self.counterparty_table)
        if self.reference_tables is not None:
            out.extend(self.reference_tables)
        return out

    def shared_reference_dynamics(self) -> bool:
        """True when all reference entities share one intensity specification."""
        if not self.general_mode:
            return True
        return len(self.reference_tables) == 1

    def min_intensity(self, who, horizon: float) -> float:
        """Infimum of h_who over t in [0, horizon] and all default counts."""
        counts = range(self.n + 1)
        times = [0.0] + [b for b in self.breakpoints() if b < horizon]
        return min(self.intensity_by_count(who, t, k) for t in times for k in counts)


# ---------------------------------------------------------------------------
# Portfolio
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Contract:
    """One CDS contract: spread per year, loss rate, direction.

    ``direction = +1`` is the canonical orientation used internally: the
    holder pays the running spread and receives the loss payment at the
    reference default.  ``direction = -1`` flips every cash flow.
    """

    spread: float
    loss: float
    direction: int = 1

    def __post_init__(self):
        if self.loss < 0.0:
            raise ConfigError(f"loss must be nonnegative, got {self.loss}")
        if self.direction not in (1, -1):
            raise ConfigError(f"direction must be +1 or -1, got {self.direction}")


@dataclass(frozen=True)
class CollateralSpec:
    """Collateralization parameters: VM ratio, IM stress factor, VaR level, delay."""

    alpha: float = 0.0
    beta: float = 0.0
    q: float = 0.99
    delta: float = 10.0 / 252.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0.0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if not 0.0 < self.q < 1.0:
            raise ConfigError(f"q must lie in (0, 1), got {self.q}")
        if self.delta <= 0.0:
            raise ConfigError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class Portfolio:
    contracts: tuple[Contract, ...]
    maturity: float
    loss_investor: float
    loss_counterparty: float
    collateral: CollateralSpec = field(default_factory=CollateralSpec)

    def __post_init__(self):
        if self.maturity <= 0.0:
            raise ConfigError(f"maturity must be positive, got {self.maturity}")
        for name, val in (("L_I", self.loss_investor), ("L_C", self.loss_counterparty)):
            if not 0.0 <= val <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {val}")

    @property
    def n(self) -> int:
        return len(self.contracts)

    def homogeneous_contracts(self) -> bool:
        if not self.contracts:
            return True
        first = self.contracts[0]
        return all(c == first for c in self.contracts)

    def flipped(self) -> "Portfolio":
        """Portfolio with every contract direction negated."""
        return Portfolio(
            contracts=tuple(
                Contract(c.spread, c.loss, -c.direction) for c in self.contracts
            ),
            maturity=self.maturity,
            loss_investor=self.loss_investor,
            loss_counterparty=self.loss_counterparty,
            collateral=self.collateral,
        )


def is_homogeneous(model: ContagionModel, portfolio: Portfolio) -> bool:
    """True when the lattice collapses to default-count states.

    Requires identical contracts and reference intensities that depend on the
    defaulted set only through its cardinality.
    """
    return portfolio.homogeneous_contracts() and model.shared_reference_dynamics()


# ---------------------------------------------------------------------------
# Assumption validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs < self.rhs


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[InequalityCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[InequalityCheck]:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "passed": c.passed}
                for c in self.checks
            ],
        }


class AssumptionError(RuntimeError):
    """Raised when pricing is attempted on a failed validation without override."""

    def __init__(self, report: ValidationReport):
        self.report = report
        names = ", ".join(c.name for c in report.failures())
        super().__init__(f"no-arbitrage assumption violated: {names}")


def validate_assumptions(
    cfg: MarketConfig, model: ContagionModel, horizon: float | None = None
) -> ValidationReport:
    """Checks the rate inequalities required for an arbitrage-free market.

    The account rate of each firm is mu = h + r_D, so the requirement
    max(r_D, r_f+) < min(mu_1..mu_N, mu_I, mu_C_lower) translates into
    strictly positive intensities plus upper bounds on the funding rates.
    For multi-name portfolios the comparison argument additionally needs
    r_f- below the same minimum.
    """
    horizon = horizon if horizon is not None else float("inf")
    mu_refs = [
        model.min_intensity(i, horizon) + cfg.r_D for i in range(1, model.n + 1)
    ]
    mu_i = model.min_intensity(INVESTOR, horizon) + cfg.r_D
    mu_min = min(mu_refs + [mu_i, cfg.mu_C_lower])
    checks = [
        InequalityCheck("r_D < min(mu_1..mu_N, mu_I, mu_C_lower)", cfg.r_D, mu_min),
        InequalityCheck("r_f_plus < min(mu_1..mu_N, mu_I, mu_C_lower)", cfg.r_f_plus, mu_min),
        InequalityCheck("r_D < mu_C_lower", cfg.r_D, cfg.mu_C_lower),
    ]
    if model.n > 1:
        checks.append(
            InequalityCheck(
                "r_f_minus < min(mu_1..mu_N, mu_I, mu_C_lower)", cfg.r_f_minus, mu_min
            )
        )
    if cfg.mu_C_true is not None and not isinstance(cfg.mu_C_true, str):
        checks.append(
            InequalityCheck(
                "mu_C_lower <= mu_C_true", cfg.mu_C_lower - 1e-15, cfg.mu_C_true + 1e-15
            )
        )
        checks.append(
            InequalityCheck(
                "mu_C_true <= mu_C_upper", cfg.mu_C_true - 1e-15, cfg.mu_C_upper + 1e-15
            )
        )
    return ValidationReport(tuple(checks))


# ---------------------------------------------------------------------------
# Configuration loading
# ---------------------------------------------------------------------------

def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing key {key!r} in {where}")
    return d[key]


def market_from_dict(doc: dict) -> tuple[MarketConfig, ContagionModel, Portfolio, ContagionModel]:
    """Parses a configuration document.

    Returns (market config, risk-neutral contagion model, portfolio,
    physical contagion model).  The physical model defaults to the
    risk-neutral one when no ``physical_contagion`` block is present.
    """
    rates = _require(doc, "rates", "config")
    band = _require(doc, "counterparty_band", "config")
    pf = _require(doc, "portfolio", "config")
    contracts = tuple(
        Contract(
            spread=float(_require(c, "spread", "contract")),
            loss=float(_require(c, "loss", "contract")),
            direction=int(c.get("direction", 1)),
        )
        for c in _require(pf, "contracts", "portfolio")
    )
    coll = pf.get("collateral", {})
    portfolio = Portfolio(
        contracts=contracts,
        maturity=float(_require(pf, "maturity", "portfolio")),
        loss_investor=float(_require(pf, "L_I", "portfolio")),
        loss_counterparty=float(_require(pf, "L_C", "portfolio")),
        collateral=CollateralSpec(
            alpha=float(coll.get("alpha", 0.0)),
            beta=float(coll.get("beta", 0.0)),
            q=float(coll.get("q", 0.99)),
            delta=float(coll.get("delta", 10.0 / 252.0)),
        ),
    )
    cfg = MarketConfig(
        r_D=float(_require(rates, "r_D", "rates")),
        r_f_plus=float(_require(rates, "r_f_plus", "rates")),
        r_f_minus=float(_require(rates, "r_f_minus", "rates")),
        r_m_plus=float(_require(rates, "r_m_plus", "rates")),
        r_m_minus=float(_require(rates, "r_m_minus", "rates")),
        mu_C_lower=float(_require(band, "mu_lower", "counterparty_band")),
        mu_C_upper=float(_require(band, "mu_upper", "counterparty_band")),
        mu_C_true=band.get("mu_true"),
    )
    model = _contagion_from_dict(_require(doc, "contagion", "config"), portfolio.n)
    phys_doc = doc.get("physical_contagion")
    phys = _contagion_from_dict(phys_doc, portfolio.n) if phys_doc else model
    return cfg, model, portfolio, phys


def _contagion_from_dict(doc: dict, n: int) -> ContagionModel:
    kwargs: dict = {"n": n}
    for key in ("a10", "a13", "a20", "a23", "a30", "a33", "a12", "a21", "a31", "a32"):
        if key in doc:
            kwargs[key] = float(doc[key])
    if "investor_table" in doc:
        kwargs["investor_table"] = _as_table(doc["investor_table"])
    if "counterparty_table" in doc:
        kwargs["counterparty_table"] = _as_table(doc["counterparty_table"])
    if "reference_tables" in doc:
        specs = doc["reference_tables"]
        if not isinstance(specs, list):
            specs = [specs]
        kwargs["reference_tables"] = tuple(_as_table(s) for s in specs)
    elif "reference_table" in doc:
        kwargs["reference_tables"] = (_as_table(doc["reference_table"]),)
    return ContagionModel(**kwargs)


def load_config(path) -> tuple[MarketConfig, ContagionModel, Portfolio, ContagionModel]:
    """Loads a JSON configuration file; see the repository README for the schema."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top-level config must be a JSON object")
    return market_from_dict(doc)
