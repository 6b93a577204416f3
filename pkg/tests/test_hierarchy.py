from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hartree_waveops import estfun
from hartree_waveops.grid import (GridError, ModelParams, PhaseField, ProfileField, g0_array, hk_norm_array,
                                  l2_norm_array, random_band_limited)
from hartree_waveops.hierarchy import (TailFitError, TimeGrid, capped_ell, cumulative_integral,
                                       hierarchy_decay_report, hierarchy_gauge_check, interp_tau, power_law_tail,
                                       psi_tail_report, solve_hierarchy, solve_psi_tail)


@pytest.fixture(scope="module")
def hier(params, w_plus, short_grid):
    return solve_hierarchy(w_plus, 1, short_grid, params)


class TestTimeGrid:
    def test_nodes(self):
        tg = TimeGrid(1.0, 1e2, 4)
        assert tg.size == 9
        np.testing.assert_allclose(tg.nodes, 10.0 ** (np.arange(9) / 4), rtol=1e-14)
        np.testing.assert_allclose(np.diff(tg.tau), math.log(10) / 4, rtol=1e-12)

    @pytest.mark.parametrize("kw", [dict(t_min=0.5), dict(t_max=1.0), dict(steps_per_decade=1),
                                    dict(t_max=1e4 + 1.0), dict(t_max=1.1, steps_per_decade=8)])
    def test_rejected(self, kw):
        with pytest.raises(ValueError):
            TimeGrid(**kw)

    def test_index(self):
        tg = TimeGrid(1.0, 1e3, 8)
        assert tg.index(10.0) == 8
        with pytest.raises(ValueError):
            tg.index(11.0)

    def test_refined(self):
        assert TimeGrid(1.0, 1e2, 8).refined().steps_per_decade == 16


class TestQuadratureInTau:
    @settings(max_examples=30, deadline=None)
    @given(coef=st.lists(st.floats(-3, 3), min_size=1, max_size=4))
    def test_cubic_integrand_exact(self, coef):
        tau = np.linspace(0.0, 2.0, 21)
        poly = np.polynomial.Polynomial(coef)
        got = cumulative_integral(poly(tau), tau[1] - tau[0])
        want = poly.integ()(tau) - poly.integ()(0.0)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_fourth_order(self):
        errs = []
        for n in (20, 40, 80):
            tau = np.linspace(0.0, 3.0, n + 1)
            got = cumulative_integral(np.exp(np.sin(2 * tau)), tau[1] - tau[0])
            ref = integrate.quad(lambda x: math.exp(math.sin(2 * x)), 0.0, 3.0, epsrel=1e-13)[0]
            errs.append(abs(got[-1] - ref))
        orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert min(orders) > 3.5

    def test_needs_four_nodes(self):
        with pytest.raises(ValueError):
            cumulative_integral(np.ones(3), 0.1)

    def test_interp_exact_at_nodes_and_for_cubics(self):
        tg = TimeGrid(1.0, 1e2, 8)
        traj = tg.tau**3 - 2 * tg.tau
        for j in (0, 5, tg.size - 1):
            assert interp_tau(traj, tg, tg.tau[j]) == traj[j]
        for tau in (0.13, 2.0, tg.tau[-1] - 0.01):
            assert interp_tau(traj, tg, tau) == pytest.approx(tau**3 - 2 * tau, rel=1e-12)

    @pytest.mark.parametrize("beta", [1.3, 2.0, 3.5])
    def test_power_law_tail_exact(self, beta):
        tg = TimeGrid(1.0, 1e3, 8)
        source = tg.nodes ** (-beta)
        integrand = (tg.nodes * source)[:, None]
        tail, fitted = power_law_tail(tg, integrand, np.abs(integrand[:, 0]))
        assert fitted == pytest.approx(beta, rel=1e-12)
        assert tail[0] == pytest.approx(tg.t_max ** (1 - beta) / (beta - 1), rel=1e-12)

    def test_power_law_tail_divergent(self):
        tg = TimeGrid(1.0, 1e3, 8)
        integrand = np.ones((tg.size, 1))
        with pytest.raises(TailFitError):
            power_law_tail(tg, integrand, integrand[:, 0])


class TestHierarchy:
    def test_phi0_is_h0_times_g0(self, params, w_plus):
        # closed form against the tau quadrature; the gap is the rule's O(dtau^4) truncation
        errs = []
        for spd in (16, 32):
            tg = TimeGrid(1.0, 1e3, spd)
            h = solve_hierarchy(w_plus, 0, tg, params)
            h0 = estfun.eval_h0(estfun.EstContext(params.gamma), tg.nodes)
            ref = h0[:, None, None, None] * g0_array(params, w_plus.values, w_plus.values)
            errs.append(float(np.max(np.abs(h.phi[0] - ref))) / float(np.max(np.abs(ref))))
        assert errs[1] <= 1e-6
        assert math.log2(errs[0] / errs[1]) > 3.5

    def test_phases_vanish_at_one(self, hier):
        for phi in hier.phi:
            assert not np.any(phi[0])

    def test_w0_is_w_plus(self, hier, w_plus):
        assert np.array_equal(hier.w[0][-1], w_plus.values)

    def test_partial_sums(self, hier):
        np.testing.assert_array_equal(hier.W(1), hier.w[0] + hier.w[1])
        assert not np.any(hier.Phi(-1))

    def test_free_case_is_zero(self, free_params, w_plus, short_grid):
        h = solve_hierarchy(ProfileField(free_params, w_plus.values), 1, short_grid, free_params)
        for arr in h.phi + h.w[1:] + [h.w_next]:
            assert not np.any(arr)

    def test_quadratic_scaling(self, params, w_plus, short_grid):
        a = solve_hierarchy(w_plus, 0, short_grid, params)
        b = solve_hierarchy(ProfileField(params, 2.0 * w_plus.values), 0, short_grid, params)
        np.testing.assert_allclose(b.phi[0], 4.0 * a.phi[0], rtol=1e-12, atol=1e-15)

    def test_budget(self, params, w_plus, short_grid):
        with pytest.raises(GridError):
            solve_hierarchy(w_plus, 3, short_grid, params)

    def test_needs_t_min_one(self, params, w_plus):
        with pytest.raises(ValueError):
            solve_hierarchy(w_plus, 0, TimeGrid(10.0, 1e3, 16), params)

    def test_psi_tail_domain(self, w_plus, short_grid):
        p = ModelParams(gamma=0.4)
        h = solve_hierarchy(ProfileField(p, w_plus.values), 0, short_grid, p)
        assert h.psi_tail is None
        with pytest.raises(estfun.DomainError):
            solve_psi_tail(h)

    def test_psi_tail_present(self, hier):
        assert hier.psi_tail is not None
        assert hier.psi_tail.dtype == float

    def test_capped_ell(self, params):
        assert capped_ell(params, 2) == 2
        assert capped_ell(params, 9) == params.max_order - 2


class TestReports:
    def test_decay_tables(self, hier):
        names = [tb.name for tb in hierarchy_decay_report(hier)]
        assert names == ["w1/Q0", "phi0/N0", "w2/Q1", "phi1/N1"]
        assert psi_tail_report(hier).name == "phi2/P1"

    def test_ratios_bounded(self, hier):
        for tb in hierarchy_decay_report(hier, t_hi=1e2):
            assert np.all(np.isfinite(tb.ratio))
            assert 0.3 < tb.drift < 3.0


class TestGauge:
    def test_constant_sigma(self, params, w_plus, short_grid):
        sigma = PhaseField(params, np.full(params.shape, 0.8))
        assert hierarchy_gauge_check(w_plus, sigma, 1, short_grid, params) <= 1e-10

    def test_zero_sigma_exact(self, params, w_plus, short_grid):
        sigma = PhaseField(params, np.zeros(params.shape))
        assert hierarchy_gauge_check(w_plus, sigma, 1, short_grid, params) == 0.0

    def test_band_limited_sigma(self, params, w_plus, short_grid):
        sigma = random_band_limited(3, 3, 1.0, params.k, params, real=True)
        assert hierarchy_gauge_check(w_plus, sigma, 1, short_grid, params) <= 1e-6


@pytest.fixture(scope="module")
def runs(params, w_plus):
    return {spd: solve_hierarchy(w_plus, 1, TimeGrid(1.0, 1e4, spd), params) for spd in (16, 32)}


@pytest.mark.slow
class TestLongTime:
    def test_amplitude_saturates_to_inverse_t(self, runs, params):
        # (m+1) gamma > 1 for w_2: the decay approaches t^-1
        h = runs[32]
        n = hk_norm_array(params, h.w_next, 1)
        slope = math.log10(n[h.tg.index(1e4)] / n[h.tg.index(1e3)])
        assert -1.15 <= slope <= -0.85

    def test_phase_growth_slows(self, runs, params):
        h = runs[32]
        n = l2_norm_array(params, h.phi[1])
        i2, i3, i4 = (h.tg.index(t) for t in (1e2, 1e3, 1e4))
        assert n[i4] / n[i3] < n[i3] / n[i2]

    def test_refinement_stable(self, runs, params):
        a, b = runs[16], runs[32]
        for ta, tb in zip(hierarchy_decay_report(a), hierarchy_decay_report(b)):
            ra = ta.ratio[-1]
            rb = tb.ratio[-1]
            assert abs(ra - rb) <= 0.01 * abs(rb)
