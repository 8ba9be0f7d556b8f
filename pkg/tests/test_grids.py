"""Grid construction, state spaces, surfaces, and the RK4 integrator."""

import numpy as np
import pytest

from rxva.grids import (
    LatticeSurface,
    StateSpace,
    build_grid,
    choose_state_space,
    rk4_sweep,
    zero_surface,
)
from rxva.market import ContagionModel, Contract, Portfolio


class TestBuildGrid:
    def test_basic_properties(self):
        grid = build_grid(3.0, breakpoints=(2.0,), min_points=2000)
        assert grid[0] == 0.0 and grid[-1] == 3.0
        assert len(grid) - 1 >= 2000
        assert np.all(np.diff(grid) > 0.0)

    def test_breakpoints_are_nodes(self):
        grid = build_grid(3.0, breakpoints=(0.7, 2.0), min_points=500)
        for b in (0.7, 2.0):
            assert np.min(np.abs(grid - b)) == 0.0

    def test_uniform_between_breakpoints(self):
        grid = build_grid(2.0, breakpoints=(1.0,), min_points=100)
        left = np.diff(grid[grid <= 1.0])
        assert np.allclose(left, left[0], rtol=0.0, atol=1e-12)

    def test_breakpoints_outside_range_ignored(self):
        grid = build_grid(1.0, breakpoints=(-1.0, 0.0, 1.0, 5.0), min_points=10)
        assert grid[0] == 0.0 and grid[-1] == 1.0

    def test_nonpositive_maturity(self):
        with pytest.raises(ValueError):
            build_grid(0.0)


class TestStateSpace:
    def test_full_mode(self):
        space = StateSpace(n=3, homogeneous=False)
        assert space.size == 8
        assert space.count(0b101) == 2
        assert space.alive(0b101) == [2]
        assert space.child(0b001, 3) == 0b101
        assert space.root() == 0

    def test_homogeneous_mode(self):
        space = StateSpace(n=5, homogeneous=True)
        assert space.size == 6
        assert space.count(3) == 3
        assert space.child(2, 99) == 3
        with pytest.raises(ValueError):
            space.alive(0)

    def test_choose_state_space(self):
        con = Contract(spread=0.02, loss=0.5)
        pf = Portfolio(contracts=(con, con), maturity=1.0,
                       loss_investor=0.5, loss_counterparty=0.5)
        model = ContagionModel(n=2, a30=0.1)
        assert choose_state_space(model, pf).homogeneous
        assert not choose_state_space(model, pf, force_full=True).homogeneous
        hetero = Portfolio(
            contracts=(con, Contract(spread=0.03, loss=0.5)),
            maturity=1.0, loss_investor=0.5, loss_counterparty=0.5,
        )
        assert not choose_state_space(model, hetero).homogeneous


class TestLatticeSurface:
    def test_interpolation(self):
        grid = np.array([0.0, 1.0, 2.0])
        space = StateSpace(n=1, homogeneous=True)
        surf = LatticeSurface(grid=grid, space=space, tag="v_hat",
                              values={0: np.array([0.0, 2.0, 4.0]),
                                      1: np.zeros(3)})
        assert surf.at(0, 0.5) == pytest.approx(1.0)
        assert surf.at0(0) == 0.0
        assert surf.terminal(0) == 4.0

    def test_rows_order(self):
        grid = np.array([0.0, 1.0])
        space = StateSpace(n=1, homogeneous=True)
        surf = zero_surface(grid, space, "v_hat")
        rows = list(surf.rows())
        assert [(r[0], r[1]) for r in rows] == [(0.0, 0), (1.0, 0), (0.0, 1), (1.0, 1)]


class TestRk4Sweep:
    def test_exponential_decay_order(self):
        # dv/ds = -lambda v, v(s=0)=1, over s in [0, T]; calendar node 0
        # corresponds to s = T.
        lam = 1.3
        errors = []
        for n in (50, 100):
            grid = np.linspace(0.0, 2.0, n + 1)
            got = {}

            def record(node, y, got=got):
                got[node] = float(y[0])

            def rhs(seg, s, y):
                return -lam * y

            rk4_sweep(grid, np.array([1.0]), rhs, record)
            errors.append(abs(got[0] - np.exp(-lam * 2.0)))
        assert errors[0] / errors[1] > 12.0  # fourth order: factor ~16

    def test_terminal_node_records_initial_data(self):
        grid = np.linspace(0.0, 1.0, 11)
        seen = {}
        rk4_sweep(grid, np.array([3.0]),
                  lambda seg, s, y: np.zeros_like(y),
                  lambda node, y: seen.__setitem__(node, float(y[0])))
        assert seen[10] == 3.0
        assert seen[0] == 3.0
        assert len(seen) == 11

    def test_segment_indices_cover_grid_backwards(self):
        grid = np.linspace(0.0, 1.0, 5)
        segs = []
        rk4_sweep(grid, np.zeros(1),
                  lambda seg, s, y: (segs.append(seg), np.zeros(1))[1],
                  lambda node, y: None)
        assert segs[::4] == [3, 2, 1, 0]
