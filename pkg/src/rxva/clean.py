"""Third-party (clean) valuation of the CDS portfolio over the default lattice.

The clean value surface solves, in reversed time s = T - t and for every
default state J,

    dv/ds = -r_D v - sum_{i alive} S_i + sum_{i alive} h_i (L_i + v_child - v)

with v = 0 at s = 0 and v identically zero once all entities have defaulted.
Spreads and losses carry the contract direction sign.  A closed-form
evaluation of the single-name integral representation serves as the exact
cross-check for the ODE path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import LatticeSurface, StateSpace, rk4_sweep, zero_surface
from .market import ContagionModel, MarketConfig, PiecewiseTable, Portfolio


# ---------------------------------------------------------------------------
# Per-segment lattice coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateCoeffs:
    """Coefficients of one default state on one constant-coefficient piece.

    ``transitions`` lists the one-default moves out of the state as tuples
    ``(child, rate, loss, count)``: the target state, the aggregate intensity
    of the move, the signed loss paid on it, and the number of contracts it
    retires (greater than one only in homogeneous mode, where all alive
    entities share the same child state).
    """

    sum_S: float
    sum_L: float
    h_I: float
    h_C: float
    alive_count: int
    transitions: tuple


@dataclass(frozen=True)
class _Coeffs:
    """Per-state coefficient bundle for one constant-coefficient time piece."""

    states: tuple  # one StateCoeffs per lattice state, in key order


class LatticeCoefficients:
    """Builds and caches per-time-piece coefficient bundles for the lattice.

    Coefficients are piecewise constant in time; the cache is keyed by the
    index of the piece containing the queried time.
    """

    def __init__(self, model: ContagionModel, portfolio: Portfolio, space: StateSpace):
        self.model = model
        self.portfolio = portfolio
        self.space = space
        self.breaks = np.asarray(model.breakpoints())
        self._cache: dict[int, _Coeffs] = {}

    def at(self, t: float) -> _Coeffs:
        piece = int(np.searchsorted(self.breaks, t, side="right"))
        cached = self._cache.get(piece)
        if cached is not None:
            return cached
        coeffs = self._build(t)
        self._cache[piece] = coeffs
        return coeffs

    def per_segment(self, mids: np.ndarray) -> list:
        """Coefficient bundle for every grid segment, indexed by segment.

        Segments within one constant-coefficient piece share a single bundle
        object, so the lookup inside the integrator is a list access.
        """
        return [self.at(float(t)) for t in mids]

    def _build(self, t: float) -> _Coeffs:
        model, pf, space = self.model, self.portfolio, self.space
        states = []
        for key in space.keys:
            count = space.count(key)
            alive_count = pf.n - count
            h_I = model.intensity_by_count("I", t, count)
            h_C = model.intensity_by_count("C", t, count)
            if space.homogeneous:
                if alive_count:
                    c0 = pf.contracts[0]
                    sum_S = alive_count * c0.direction * c0.spread
                    sum_L = alive_count * c0.direction * c0.loss
                    h = model.intensity_by_count(1, t, count)
                    transitions = (
                        (key + 1, alive_count * h, c0.direction * c0.loss,
                         alive_count),
                    )
                else:
                    sum_S = sum_L = 0.0
                    transitions = ()
            else:
                sum_S = sum_L = 0.0
                moves = []
                for i in range(1, pf.n + 1):
                    if key >> (i - 1) & 1:
                        continue
                    con = pf.contracts[i - 1]
                    sum_S += con.direction * con.spread
                    sum_L += con.direction * con.loss
                    moves.append((
                        key | 1 << (i - 1),
                        self._entity_intensity(i, t, key),
                        con.direction * con.loss,
                        1,
                    ))
                transitions = tuple(moves)
            states.append(StateCoeffs(
                sum_S=sum_S, sum_L=sum_L, h_I=h_I, h_C=h_C,
                alive_count=alive_count, transitions=transitions,
            ))
        return _Coeffs(states=tuple(states))

    def _entity_intensity(self, i: int, t: float, mask: int) -> float:
        from .market import DefaultState
        return self.model.intensity(i, t, DefaultState(mask, self.portfolio.n))

    def clean_rhs(self, coeffs: _Coeffs, r_D: float, v: np.ndarray) -> np.ndarray:
        """dv/ds for the clean system on one constant-coefficient piece."""
        vl = v.tolist()
        out = [0.0] * len(vl)
        for k, st in enumerate(coeffs.states):
            vk = vl[k]
            dv = -r_D * vk - st.sum_S
            for child, rate, loss, _count in st.transitions:
                dv += rate * (loss + vl[child] - vk)
            out[k] = dv
        return np.asarray(out)


# ---------------------------------------------------------------------------
# ODE solve
# ---------------------------------------------------------------------------

def solve_clean(
    cfg: MarketConfig,
    model: ContagionModel,
    portfolio: Portfolio,
    grid: np.ndarray,
    space: StateSpace,
) -> LatticeSurface:
    """Clean value surface for every default state on the grid."""
    coeffs = LatticeCoefficients(model, portfolio, space)
    surface = zero_surface(grid, space, "v_hat")
    mids = 0.5 * (grid[:-1] + grid[1:])
    by_seg = coeffs.per_segment(mids)

    def rhs(seg, _s, y):
        return coeffs.clean_rhs(by_seg[seg], cfg.r_D, y)

    def record(node, y):
        for k in space.keys:
            surface.values[k][node] = y[k]

    rk4_sweep(grid, np.zeros(space.size), rhs, record)
    return surface


# ---------------------------------------------------------------------------
# Single-name closed form
# ---------------------------------------------------------------------------

def clean_closed_form_single(
    r_D: float,
    h_table,
    S: float,
    L: float,
    T: float,
    t: float,
    direction: int = 1,
) -> float:
    """Exact single-name clean value from the integral representation.

    v(t) = direction * int_t^T (h(u) L - S) exp(-int_t^u (h + r_D)) du,
    evaluated piece by piece with exponential primitives (no quadrature
    error for piecewise-constant h).  ``h_table`` is a PiecewiseTable or a
    (breaks, values) pair of flat sequences.
    """
    if not isinstance(h_table, PiecewiseTable):
        breaks, values = h_table
        h_table = PiecewiseTable(
            breaks=tuple(float(b) for b in breaks),
            values=tuple((float(v),) for v in values),
        )
    if t >= T:
        return 0.0
    edges = [t] + [b for b in h_table.breaks if t < b < T] + [T]
    total = 0.0
    discount = 1.0
    for a, b in zip(edges, edges[1:]):
        h = h_table.at(0.5 * (a + b), 0)
        rate = h + r_D
        width = b - a
        if rate == 0.0:
            piece = (h * L - S) * width
        else:
            piece = (h * L - S) * (1.0 - np.exp(-rate * width)) / rate
        total += discount * piece
        discount *= np.exp(-rate * width)
    return direction * total
