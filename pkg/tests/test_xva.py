"""XVA drivers, switching rule, lattice solves, and the rXVA process."""

import json

import numpy as np
import pytest

from rxva.engine import run_engine
from rxva.market import MarketConfig, market_from_dict
from rxva.xva import (
    REGIME_HI,
    REGIME_LO,
    REGIME_TIE,
    assemble_rxva,
    f_tilde,
    g_check,
    solve_value_direct,
    solve_xva,
    switching_rate,
)

from conftest import SINGLE_NAME


def _load_doc():
    with open(SINGLE_NAME, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cfg(r_D=0.0, r_f_plus=0.0, r_f_minus=0.0, r_m_plus=0.0, r_m_minus=0.0,
         lo=0.1, hi=0.2, true=None):
    return MarketConfig(
        r_D=r_D, r_f_plus=r_f_plus, r_f_minus=r_f_minus,
        r_m_plus=r_m_plus, r_m_minus=r_m_minus,
        mu_C_lower=lo, mu_C_upper=hi, mu_C_true=true,
    )


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

class TestFTilde:
    def test_zero_rates_vanish(self):
        cfg = _cfg()
        rng = np.random.default_rng(7)
        for _ in range(20):
            args = rng.normal(size=6)
            assert f_tilde(cfg, *args) == 0.0

    def test_symmetric_rates_discount_only(self):
        # with r_f = r_m = r_D on both signs the driver collapses to
        # -r_D * xva regardless of the other arguments
        r = 0.037
        cfg = _cfg(r_D=r, r_f_plus=r, r_f_minus=r, r_m_plus=r, r_m_minus=r)
        rng = np.random.default_rng(8)
        for _ in range(20):
            xva, z, z_I, z_C, m, lam = rng.normal(size=6)
            got = f_tilde(cfg, xva, z, z_I, z_C, m, lam)
            assert got == pytest.approx(-r * xva, abs=1e-12)

    def test_vectorized_matches_scalar(self):
        cfg = _cfg(r_D=0.01, r_f_plus=0.05, r_f_minus=0.02,
                   r_m_plus=0.01, r_m_minus=0.03)
        rng = np.random.default_rng(9)
        args = rng.normal(size=(6, 16))
        vec = f_tilde(cfg, *args)
        for j in range(16):
            assert vec[j] == pytest.approx(
                float(f_tilde(cfg, *args[:, j])), abs=1e-14
            )


class TestGCheck:
    def test_zero_fixed_point(self):
        cfg = _cfg(r_D=0.01, r_f_plus=0.05, r_f_minus=0.02,
                   r_m_plus=0.01, r_m_minus=0.03)
        got = g_check(cfg, 0.5, 0.5, u=0.0, children=[0.0, 0.0],
                      h_children=[0.1, 0.2], h_I=0.1, h_C=0.2,
                      v_hat=0.0, m=0.0, loss_sum=0.0)
        assert got == 0.0

    def test_single_name_reduction(self):
        # with one surviving name the multi-name driver must equal the
        # single-name driver written out longhand
        cfg = _cfg(r_D=0.01, r_f_plus=0.005, r_f_minus=0.002,
                   r_m_plus=0.001, r_m_minus=0.003)
        rng = np.random.default_rng(11)
        for _ in range(10):
            u, uc, v, m = rng.normal(scale=0.5, size=4)
            h1, h_I, h_C = rng.uniform(0.05, 0.4, size=3)
            L_I, L_C = 0.5, 0.4
            gL = 0.6
            got = g_check(cfg, L_I, L_C, u, [uc], [h1], h_I, h_C, v, m, gL)
            gap = v - m
            z_I = -L_I * max(gap, 0.0) - u
            z_C = L_C * max(-gap, 0.0) - u
            z1 = uc - u
            y = u + z1 + z_I + z_C + gL - m
            f = -(
                cfg.r_f_plus * max(y, 0.0)
                - cfg.r_f_minus * max(-y, 0.0)
                - cfg.r_D * (z1 + z_I + z_C)
                + cfg.r_m_plus * max(m, 0.0)
                - cfg.r_m_minus * max(-m, 0.0)
                - cfg.r_D * gL
            )
            want = h_I * z_I + h_C * z_C + h1 * (uc - u) + f
            assert got == pytest.approx(want, abs=1e-13)


class TestSwitchingRate:
    def test_positive_exposure_upper_picks_high(self):
        cfg = _cfg(lo=0.1, hi=0.2)
        mu, tie = switching_rate(cfg, v_hat=-0.3, m=0.0, u=0.0, mode="upper")
        assert mu == 0.2 and not tie

    def test_negative_exposure_upper_picks_low(self):
        cfg = _cfg(lo=0.1, hi=0.2)
        mu, tie = switching_rate(cfg, v_hat=0.0, m=0.0, u=0.3, mode="upper")
        assert mu == 0.1 and not tie

    def test_lower_mode_swaps(self):
        cfg = _cfg(lo=0.1, hi=0.2)
        assert switching_rate(cfg, -0.3, 0.0, 0.0, "lower")[0] == 0.1
        assert switching_rate(cfg, 0.0, 0.0, 0.3, "lower")[0] == 0.2

    def test_tie_flagged_with_mode_default(self):
        cfg = _cfg(lo=0.1, hi=0.2)
        mu, tie = switching_rate(cfg, 0.0, 0.0, 0.0, "upper")
        assert tie and mu == 0.2
        mu, tie = switching_rate(cfg, 0.0, 0.0, 0.0, "lower")
        assert tie and mu == 0.1

    def test_loss_rate_scaling_matters(self):
        cfg = _cfg(lo=0.1, hi=0.2)
        # theta_C_tilde = L_C * 1.0 = 0.1 < u = 0.5: low branch
        mu, _ = switching_rate(cfg, -1.0, 0.0, 0.5, "upper", L_C=0.1)
        assert mu == 0.1

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            switching_rate(_cfg(), 0.0, 0.0, 0.0, "sideways")


# ---------------------------------------------------------------------------
# Lattice solves
# ---------------------------------------------------------------------------

class TestSolveXva:
    def test_ordering_everywhere(self, single_name_result):
        res = single_name_result
        for key in res.space.keys:
            lower = res.xva["lower"].surface.values[key]
            actual = res.xva["actual"].surface.values[key]
            upper = res.xva["upper"].surface.values[key]
            assert np.min(actual - lower) >= -1e-10
            assert np.min(upper - actual) >= -1e-10

    def test_terminal_and_absorbed_zero(self, single_name_result):
        res = single_name_result
        for which in ("actual", "upper", "lower"):
            surf = res.xva[which].surface
            assert surf.terminal(0) == 0.0
            assert np.all(surf.values[1] == 0.0)

    def test_band_collapse_single_name(self):
        doc = _load_doc()
        true = doc["counterparty_band"]["mu_true"]
        doc["counterparty_band"]["mu_lower"] = true
        doc["counterparty_band"]["mu_upper"] = true
        cfg, model, portfolio, model_P = market_from_dict(doc)
        res = run_engine(cfg, model, portfolio, model_P,
                         variants=("actual", "upper", "lower"), grid_points=500)
        surfs = [res.xva[w].surface.values[0] for w in ("actual", "upper", "lower")]
        spread = np.max(np.abs(surfs[0] - surfs[1])) + np.max(np.abs(surfs[0] - surfs[2]))
        assert spread < 1e-10

    def test_band_widening_is_monotone(self, single_name_result):
        narrow = single_name_result
        doc = _load_doc()
        doc["counterparty_band"]["mu_lower"] = 0.1301
        doc["counterparty_band"]["mu_upper"] = 0.2701
        cfg, model, portfolio, model_P = market_from_dict(doc)
        wide = run_engine(cfg, model, portfolio, model_P,
                          variants=("upper", "lower"), grid_points=2000)
        up_n = narrow.xva["upper"].surface.values[0]
        up_w = wide.xva["upper"].surface.values[0]
        lo_n = narrow.xva["lower"].surface.values[0]
        lo_w = wide.xva["lower"].surface.values[0]
        assert np.min(up_w - up_n) >= -1e-10
        assert np.max(lo_w - lo_n) <= 1e-10

    def test_regime_matches_exposure_sign(self, single_name_result):
        res = single_name_result
        L_C = res.portfolio.loss_counterparty
        lo, hi = res.cfg.mu_C_lower, res.cfg.mu_C_upper
        for which, hi_sign in (("upper", 1.0), ("lower", -1.0)):
            xres = res.xva[which]
            for key in res.space.keys:
                v = res.clean.values[key]
                m = res.margins.m.values[key]
                u = xres.surface.values[key]
                z_C = L_C * np.maximum(-(v - m), 0.0) - u
                regime = xres.regime[key]
                mu_sel = np.where(regime == REGIME_HI, hi, lo)
                # super-solution inequality against both band endpoints,
                # with the sign flipped for the minimizing variant
                live = regime != REGIME_TIE
                for mu_other in (lo, hi):
                    prod = hi_sign * (mu_sel - mu_other) * z_C
                    if np.any(live):
                        assert np.min(prod[live]) >= -1e-15
                ties = regime == REGIME_TIE
                assert np.all(z_C[ties] == 0.0)

    def test_upper_regime_switches_present(self, single_name_result):
        regime = single_name_result.xva["upper"].regime[0]
        assert {REGIME_LO, REGIME_HI} <= set(np.unique(regime))

    def test_actual_requires_true_rate(self, single_name_setup):
        cfg, model, portfolio, _ = single_name_setup
        cfg_no_true = MarketConfig(
            r_D=cfg.r_D, r_f_plus=cfg.r_f_plus, r_f_minus=cfg.r_f_minus,
            r_m_plus=cfg.r_m_plus, r_m_minus=cfg.r_m_minus,
            mu_C_lower=cfg.mu_C_lower, mu_C_upper=cfg.mu_C_upper,
        )
        with pytest.raises(ValueError, match="mu_C_true"):
            run_engine(cfg_no_true, model, portfolio,
                       variants=("actual",), grid_points=100)

    def test_bad_variant_name(self, single_name_result):
        res = single_name_result
        with pytest.raises(ValueError, match="which"):
            solve_xva(res.cfg, res.model, res.portfolio, res.grid,
                      res.space, res.margins, "median")

    def test_pocket_zero_at_origin_grows_backwards(self, single_name_result):
        pocket = single_name_result.xva["upper"].pocket
        assert pocket.terminal(0) == 0.0
        # accumulated surplus from t to T is nonnegative for the upper solve
        assert np.min(pocket.values[0]) >= -1e-12


class TestDirectValueSolve:
    def test_value_minus_clean_is_xva(self, single_name_result):
        res = single_name_result
        u_bar = solve_value_direct(res.cfg, res.model, res.portfolio,
                                   res.grid, res.margins)
        diff = u_bar.values[0] - res.clean.values[0] \
            - res.xva["actual"].surface.values[0]
        assert np.max(np.abs(diff)) < 1e-8

    def test_multi_name_rejected(self, five_name_result):
        res = five_name_result
        with pytest.raises(ValueError, match="single-name"):
            solve_value_direct(res.cfg, res.model, res.portfolio,
                               res.grid, res.margins)


# ---------------------------------------------------------------------------
# rXVA process
# ---------------------------------------------------------------------------

class TestRXvaProcess:
    def test_value_tracks_upper_surface(self, single_name_result):
        res = single_name_result
        proc = assemble_rxva(res.xva["upper"].surface, res.clean,
                             res.margins.m, res.portfolio)
        for t in (0.0, 1.3, 2.9):
            assert proc.value(t, 0) == pytest.approx(
                res.xva["upper"].surface.at(0, t), abs=1e-15
            )

    def test_closeout_values(self, single_name_result):
        res = single_name_result
        proc = assemble_rxva(res.xva["upper"].surface, res.clean,
                             res.margins.m, res.portfolio)
        t = 1.0
        v = res.clean.at(0, t)
        m = res.margins.m.at(0, t)
        assert proc.closeout("I", t, 0) == pytest.approx(
            -0.5 * max(v - m, 0.0), abs=1e-15
        )
        assert proc.closeout("C", t, 0) == pytest.approx(
            0.5 * max(-(v - m), 0.0), abs=1e-15
        )
        with pytest.raises(ValueError):
            proc.closeout("Z", t, 0)

    def test_query_outside_horizon_rejected(self, single_name_result):
        res = single_name_result
        proc = assemble_rxva(res.xva["upper"].surface, res.clean,
                             res.margins.m, res.portfolio)
        with pytest.raises(ValueError):
            proc.value(-0.1, 0)
        with pytest.raises(ValueError):
            proc.value(res.portfolio.maturity + 1.0, 0)
