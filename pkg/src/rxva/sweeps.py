"""Comparative statics: solve the full XVA triple across a parameter grid."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .engine import run_engine
from .market import market_from_dict
from .strategies import robust_strategy

SWEEPABLE = ("a20", "a23", "a33", "a30", "alpha", "band_width")


@dataclass(frozen=True)
class SweepSpec:
    """Parameter grid for one comparative-statics run.

    ``derive_band`` re-derives the counterparty band from the contagion
    parameters at every grid point (mu_lower = a20 + r_D and
    mu_upper = a20 + r_D + N * a23), matching the benchmark convention; it
    defaults to on for the a20 / a23 sweeps.
    """

    param: str
    values: tuple[float, ...]
    derive_band: bool | None = None

    def __post_init__(self):
        if self.param not in SWEEPABLE:
            raise ValueError(f"unknown sweep parameter {self.param!r}")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep grid must be strictly increasing")

    @property
    def rederive(self) -> bool:
        if self.derive_band is None:
            return self.param in ("a20", "a23")
        return self.derive_band


def default_grid(base_value: float, points: int = 21, span: float = 0.5) -> tuple[float, ...]:
    """Grid of ``points`` values spanning +-span (relative) around the base."""
    if base_value == 0.0:
        return tuple(np.linspace(0.0, 1.0, points))
    lo, hi = base_value * (1.0 - span), base_value * (1.0 + span)
    if lo > hi:
        lo, hi = hi, lo
    return tuple(np.linspace(lo, hi, points))


@dataclass
class SweepRow:
    value: float
    ok: bool
    error: str = ""
    xva_lower: float = float("nan")
    xva_actual: float = float("nan")
    xva_upper: float = float("nan")
    xi_ref_val: float = float("nan")
    xi_I_val: float = float("nan")
    xi_C_val: float = float("nan")
    xi_f_val: float = float("nan")
    v_hat_0: float = float("nan")


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows if r.ok])


def _apply_param(doc: dict, param: str, value: float) -> dict:
    doc = copy.deepcopy(doc)
    if param in ("a20", "a23", "a33", "a30"):
        doc["contagion"][param] = value
    elif param == "alpha":
        doc["portfolio"].setdefault("collateral", {})["alpha"] = value
    elif param == "band_width":
        band = doc["counterparty_band"]
        center = 0.5 * (float(band["mu_lower"]) + float(band["mu_upper"]))
        band["mu_lower"] = center - 0.5 * value
        band["mu_upper"] = center + 0.5 * value
    return doc


def _rederive_band(doc: dict) -> None:
    contagion = doc["contagion"]
    n = len(doc["portfolio"]["contracts"])
    r_D = float(doc["rates"]["r_D"])
    a20 = float(contagion.get("a20", 0.0))
    a23 = float(contagion.get("a23", 0.0))
    doc["counterparty_band"]["mu_lower"] = a20 + r_D
    doc["counterparty_band"]["mu_upper"] = a20 + r_D + n * a23


def run_sweep(
    base_doc: dict,
    spec: SweepSpec,
    grid_points: int = 2000,
    allow_assumption_violation: bool = False,
) -> SweepResult:
    """One full lattice solve (clean + XVA triple + strategy values) per point.

    Solver failures are recorded on the affected row and the sweep continues.
    """
    out = SweepResult(spec=spec)
    for value in spec.values:
        row = SweepRow(value=value, ok=False)
        try:
            doc = _apply_param(base_doc, spec.param, value)
            if spec.rederive:
                _rederive_band(doc)
            cfg, model, portfolio, model_P = market_from_dict(doc)
            variants = ("actual", "upper", "lower") if cfg.mu_C_true is not None \
                else ("upper", "lower")
            result = run_engine(
                cfg, model, portfolio, model_P,
                variants=variants,
                grid_points=grid_points,
                allow_assumption_violation=allow_assumption_violation,
            )
            root = result.space.root()
            row.v_hat_0 = result.clean.at0(root)
            row.xva_upper = result.xva["upper"].surface.at0(root)
            row.xva_lower = result.xva["lower"].surface.at0(root)
            if "actual" in result.xva:
                row.xva_actual = result.xva["actual"].surface.at0(root)
            snap = robust_strategy(
                result.xva["upper"].surface, result.clean, result.margins.m,
                portfolio, 0.0, root,
            )
            if snap.alive:
                row.xi_ref_val = snap.xi_ref_values[snap.alive[0]]
            row.xi_I_val = snap.xi_I_value
            row.xi_C_val = snap.xi_C_value
            row.xi_f_val = snap.xi_f_value
            row.ok = True
        except Exception as exc:  # noqa: BLE001 - sweep must keep going
            row.error = f"{type(exc).__name__}: {exc}"
        out.rows.append(row)
    return out


def is_monotone(values: np.ndarray, direction: str, slack: float = 1e-10) -> bool:
    """Nonstrict monotonicity across adjacent grid points with a slack."""
    diffs = np.diff(values)
    if direction == "nonincreasing":
        return bool(np.all(diffs <= slack))
    if direction == "nondecreasing":
        return bool(np.all(diffs >= -slack))
    if direction == "constant":
        return bool(np.all(np.abs(diffs) <= slack))
    raise ValueError(f"unknown direction {direction!r}")
