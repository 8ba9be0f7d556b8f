"""End-to-end solve pipeline shared by the CLI, sweeps, and the verifier."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .clean import solve_clean
from .collateral import MarginSchedule, margin_schedule
from .grids import LatticeSurface, StateSpace, build_grid, choose_state_space
from .market import (
    AssumptionError,
    ContagionModel,
    MarketConfig,
    Portfolio,
    validate_assumptions,
)
from .xva import XvaResult, solve_xva


@dataclass
class EngineResult:
    cfg: MarketConfig
    model: ContagionModel
    portfolio: Portfolio
    model_P: ContagionModel
    grid: np.ndarray
    space: StateSpace
    clean: LatticeSurface
    margins: MarginSchedule
    xva: dict[str, XvaResult] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)


def grid_breakpoints(model: ContagionModel, portfolio: Portfolio) -> list[float]:
    """Time nodes the integrator must not step across."""
    pts = list(model.breakpoints())
    coll = portfolio.collateral
    if coll.beta > 0.0:
        pts.append(portfolio.maturity - coll.delta)
    return sorted({p for p in pts if 0.0 < p < portfolio.maturity})


def run_engine(
    cfg: MarketConfig,
    model: ContagionModel,
    portfolio: Portfolio,
    model_P: ContagionModel | None = None,
    variants: tuple[str, ...] = (),
    grid_points: int = 2000,
    force_full: bool = False,
    allow_assumption_violation: bool = False,
    mc_var=None,
) -> EngineResult:
    """Validates, builds the grid, and solves the requested surfaces."""
    model_P = model_P if model_P is not None else model
    report = validate_assumptions(cfg, model, horizon=portfolio.maturity)
    if not report.passed and not allow_assumption_violation:
        raise AssumptionError(report)
    space = choose_state_space(model, portfolio, force_full=force_full)
    grid = build_grid(
        portfolio.maturity, grid_breakpoints(model, portfolio), min_points=grid_points
    )
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    clean = solve_clean(cfg, model, portfolio, grid, space)
    timings["clean"] = time.perf_counter() - t0
    margins = margin_schedule(cfg, model_P, portfolio, clean, mc_var=mc_var)
    result = EngineResult(
        cfg=cfg,
        model=model,
        portfolio=portfolio,
        model_P=model_P,
        grid=grid,
        space=space,
        clean=clean,
        margins=margins,
        timings=timings,
    )
    for which in variants:
        t0 = time.perf_counter()
        result.xva[which] = solve_xva(cfg, model, portfolio, grid, space, margins, which)
        timings[which] = time.perf_counter() - t0
    return result
