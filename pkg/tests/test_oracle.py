"""Monte Carlo oracle: samplers, estimators, and pathwise audits."""

import math

import numpy as np
import pytest

from rxva.market import ContagionModel, Contract, MarketConfig, Portfolio
from rxva.oracle import (
    drift_identity_error,
    is_linear_driver,
    mc_clean_value,
    mc_xva_closeout,
    pathwise_wealth_check,
    simulate_paths,
    verify,
)


def _cfg(r_D=0.0):
    return MarketConfig(
        r_D=r_D, r_f_plus=r_D, r_f_minus=r_D, r_m_plus=r_D, r_m_minus=r_D,
        mu_C_lower=0.5, mu_C_upper=0.5,
    )


def _portfolio(n, S=0.02, L=0.5, T=1.0, direction=1):
    con = Contract(spread=S, loss=L, direction=direction)
    return Portfolio(contracts=(con,) * n, maturity=T,
                     loss_investor=0.5, loss_counterparty=0.5)


class TestSimulatePaths:
    def test_default_probability(self):
        model = ContagionModel(n=1, a10=0.1, a20=0.1, a30=0.1)
        pf = _portfolio(1)
        paths = simulate_paths(model, pf, 20_000, seed=3, include_parties=False)
        hits = sum(1 for p in paths if p.ref_events)
        p_hat = hits / len(paths)
        p_true = 1.0 - math.exp(-0.1)
        se = math.sqrt(p_true * (1.0 - p_true) / len(paths))
        assert abs(p_hat - p_true) <= 3.0 * se
        assert abs(p_hat - 0.09516) <= 3.0 * se + 1e-5

    def test_zero_intensity_no_defaults(self):
        model = ContagionModel(n=1, a10=0.1, a20=0.1, a30=0.0)
        paths = simulate_paths(model, _portfolio(1), 500, seed=4,
                               include_parties=False)
        assert all(not p.ref_events for p in paths)

    def test_determinism(self):
        model = ContagionModel(n=2, a10=0.1, a20=0.1, a30=0.2, a33=0.1)
        pf = _portfolio(2, T=2.0)
        a = simulate_paths(model, pf, 200, seed=5)
        b = simulate_paths(model, pf, 200, seed=5)
        assert [(p.ref_events, p.party, p.party_time) for p in a] == \
               [(p.ref_events, p.party, p.party_time) for p in b]

    def test_contagion_raises_empirical_hazard(self):
        # exposure-time estimate of the hazard before and after the first
        # default: a30 versus a30 + a33
        a30, a33, T = 0.1, 0.4, 5.0
        model = ContagionModel(n=2, a10=0.1, a20=0.1, a30=a30, a33=a33)
        pf = _portfolio(2, T=T)
        paths = simulate_paths(model, pf, 6_000, seed=6, include_parties=False)
        events1 = exposure1 = events2 = exposure2 = 0.0
        for p in paths:
            if p.ref_events:
                t1 = p.ref_events[0][0]
                events1 += 1.0
                exposure1 += 2.0 * t1
                if len(p.ref_events) > 1:
                    events2 += 1.0
                    exposure2 += p.ref_events[1][0] - t1
                else:
                    exposure2 += T - t1
            else:
                exposure1 += 2.0 * T
        lam1 = events1 / exposure1
        lam2 = events2 / exposure2
        assert abs(lam1 - a30) <= 3.0 * math.sqrt(events1) / exposure1
        assert abs(lam2 - (a30 + a33)) <= 3.0 * math.sqrt(events2) / exposure2

    def test_party_default_ends_path(self):
        model = ContagionModel(n=1, a10=5.0, a20=5.0, a30=0.01)
        paths = simulate_paths(model, _portfolio(1, T=3.0), 300, seed=7)
        with_party = [p for p in paths if p.party is not None]
        assert len(with_party) > 250
        for p in with_party:
            assert p.party in ("I", "C")
            assert all(t < p.party_time for t, _ in p.ref_events)


class TestMcCleanValue:
    def test_protection_leg_value(self):
        model = ContagionModel(n=1, a10=0.1, a20=0.1, a30=0.1)
        pf = _portfolio(1, S=0.0, L=0.5)
        est, se = mc_clean_value(_cfg(0.0), model, pf, 20_000, seed=10)
        true = 0.5 * (1.0 - math.exp(-0.1))
        # the discounted protection flow is constant at r_D = 0, so the
        # stratified estimator is exact up to rounding
        assert abs(est - true) <= 3.0 * se + 1e-12

    def test_premium_leg_value(self):
        model = ContagionModel(n=1, a10=0.1, a20=0.1, a30=0.1)
        pf = _portfolio(1, S=0.02, L=0.0)
        est, se = mc_clean_value(_cfg(0.0), model, pf, 20_000, seed=11)
        assert abs(est - (-0.0190325)) <= 3.0 * se + 1e-7

    def test_zero_portfolio(self):
        pf = Portfolio(contracts=(), maturity=1.0,
                       loss_investor=0.5, loss_counterparty=0.5)
        model = ContagionModel(n=0, a10=0.1, a20=0.1)
        assert mc_clean_value(_cfg(0.01), model, pf, 100, seed=1) == (0.0, 0.0)

    def test_deterministic_under_seed(self):
        model = ContagionModel(n=1, a10=0.1, a20=0.1, a30=0.1)
        pf = _portfolio(1)
        assert mc_clean_value(_cfg(0.01), model, pf, 5_000, seed=12) == \
               mc_clean_value(_cfg(0.01), model, pf, 5_000, seed=12)

    def test_multi_name_estimator(self, five_name_result):
        res = five_name_result
        est, se = mc_clean_value(res.cfg, res.model, res.portfolio,
                                 20_000, seed=13)
        assert abs(est - res.clean.at0(0)) <= 3.0 * se

    def test_stratified_beats_plain_sampling(self, single_name_result):
        res = single_name_result
        est, se = mc_clean_value(res.cfg, res.model, res.portfolio,
                                 10_000, seed=14)
        assert abs(est - res.clean.at0(0)) <= 3.0 * se
        assert se < 5e-4 * max(1.0, abs(res.clean.at0(0)))


class TestMcXvaCloseout:
    def test_linear_driver_detection(self, single_name_result, five_name_result):
        assert is_linear_driver(single_name_result.cfg,
                                single_name_result.portfolio)
        assert not is_linear_driver(five_name_result.cfg,
                                    five_name_result.portfolio)

    def test_matches_ode(self, single_name_result):
        res = single_name_result
        est, se = mc_xva_closeout(res, 20_000, seed=15)
        ode = res.xva["actual"].surface.at0(0)
        assert abs(est - ode) <= 3.0 * se


class TestPathwiseWealth:
    def test_upper_dominates(self, single_name_result):
        rep = pathwise_wealth_check(single_name_result, "upper", 2_000, seed=16)
        assert rep.violations == 0
        assert rep.worst_margin >= -1e-8
        assert rep.mean_surplus >= 0.0

    def test_lower_subreplicates(self, single_name_result):
        rep = pathwise_wealth_check(single_name_result, "lower", 2_000, seed=17)
        assert rep.violations == 0
        assert rep.worst_margin >= -1e-8

    def test_bad_variant(self, single_name_result):
        with pytest.raises(ValueError):
            pathwise_wealth_check(single_name_result, "actual", 10, seed=0)


class TestDriftIdentity:
    def test_single_name(self, single_name_result):
        assert drift_identity_error(single_name_result, "upper") < 1e-9
        assert drift_identity_error(single_name_result, "lower") < 1e-9

    def test_five_name_homogeneous(self, five_name_result):
        assert drift_identity_error(five_name_result, "upper") < 1e-9


class TestVerifyReport:
    def test_full_report_passes(self, single_name_result):
        report = verify(single_name_result, n_paths=4_000, seed=20)
        assert report["passed"] is True
        checks = report["checks"]
        assert checks["clean_value"]["within_3se"]
        assert checks["xva_closeout"]["within_3se"]
        assert checks["dominance"]["violations"] == 0
        assert checks["subreplication"]["violations"] == 0
        assert checks["drift_identity"]["max_error"] < 1e-9
