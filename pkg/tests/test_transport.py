from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hartree_waveops.grid import PhaseField, ProfileField, l2_norm_array, random_band_limited
from hartree_waveops.hierarchy import TimeGrid, solve_hierarchy
from hartree_waveops.scattering import transport_order_study
from hartree_waveops.transport import (StepRejected, V_rate_table, compare_V_Wp, frozen_tail_data,
                                       gauge_check_transport, gauge_partner, l2_drift, solve_chi, solve_V,
                                       transport_phase)


@pytest.fixture(scope="module")
def hier(params, w_plus, short_grid):
    return solve_hierarchy(w_plus, 1, short_grid, params)


@pytest.fixture(scope="module")
def phase(hier):
    return transport_phase(hier)


class TestTrivialPhase:
    def test_zero_phase_keeps_amplitude(self, w_plus, short_grid, params):
        V = solve_V(w_plus, np.zeros((short_grid.size,) + params.shape), short_grid)
        assert np.array_equal(V, np.broadcast_to(w_plus.values, V.shape))

    def test_zero_phase_keeps_chi(self, psi_plus, short_grid, params):
        chi = solve_chi(psi_plus, np.zeros((short_grid.size,) + params.shape), short_grid)
        assert np.array_equal(chi, np.broadcast_to(psi_plus.values, chi.shape))

    def test_zero_psi_gives_zero_chi(self, zero_phase, phase, short_grid):
        assert not np.any(solve_chi(zero_phase, phase, short_grid))

    def test_constant_psi_is_transported_unchanged(self, params, phase, short_grid):
        chi = solve_chi(PhaseField(params, np.full(params.shape, 0.3)), phase, short_grid)
        assert float(np.max(np.abs(chi - 0.3))) <= 1e-10


@pytest.fixture(scope="module")
def basis(params, phase, short_grid):
    f = random_band_limited(1, 3, 1.0, 2, params)
    g = random_band_limited(2, 3, 1.0, 2, params)
    return f, g, solve_V(f, phase, short_grid), solve_V(g, phase, short_grid)


class TestStructure:
    @settings(max_examples=5, deadline=None)
    @given(a=st.floats(-2, 2), b=st.floats(-2, 2))
    def test_linear_in_data(self, params, phase, short_grid, basis, a, b):
        f, g, Vf, Vg = basis
        lhs = solve_V(ProfileField(params, a * f.values + b * g.values), phase, short_grid)
        rhs = a * Vf + b * Vg
        assert float(np.max(np.abs(lhs - rhs))) <= 1e-10 * (1 + abs(a) + abs(b))

    def test_mass_conserved(self, w_plus, phase, short_grid, params):
        V = solve_V(w_plus, phase, short_grid)
        assert l2_drift(V, params) <= 1e-6

    def test_callable_phase(self, w_plus, params, short_grid):
        prof = random_band_limited(4, 2, 0.3, 2, params, real=True).values
        traj = np.array([prof * t**0.2 for t in short_grid.nodes])
        a = solve_V(w_plus, traj, short_grid)
        b = solve_V(w_plus, lambda t: prof * t**0.2, short_grid)
        assert float(np.max(l2_norm_array(params, a - b))) <= 1e-6

    def test_rk4_order(self, params):
        w0 = random_band_limited(3, 2, 0.3, params.k, params)
        phi0 = random_band_limited(4, 2, 0.3, params.k, params, real=True)
        order = transport_order_study(w0, PhaseField(params, 20.0 * phi0.values))
        assert 3.5 <= order <= 4.5

    def test_tail_rejects_linear_phase_growth(self, params, w_plus):
        with pytest.raises(StepRejected):
            frozen_tail_data(params, np.zeros(params.shape), 1e3, 1.0, w_plus=w_plus.values)

    def test_stability_bound(self, params, w_plus):
        tg = TimeGrid(1.0, 1e2, 4)
        big = random_band_limited(4, 3, 1e4, params.k, params, real=True).values
        with pytest.raises(StepRejected):
            solve_V(w_plus, lambda t: big, tg, tail=False)


class TestRates:
    def test_p0_collapse(self, params, w_plus, short_grid):
        # with p = 0, V - W_0 is V - w_+, so both tables share a numerator
        h = solve_hierarchy(w_plus, 0, short_grid, params)
        V = solve_V(w_plus, np.zeros((short_grid.size,) + params.shape), short_grid)
        a = V_rate_table(V, w_plus, short_grid)
        b = compare_V_Wp(V, h, k=params.k - 1)
        np.testing.assert_array_equal(a.numerator, b.numerator)

    def test_free_case_ratio_zero(self, free_params, w_plus, short_grid):
        w = ProfileField(free_params, w_plus.values)
        h = solve_hierarchy(w, 1, short_grid, free_params)
        V = solve_V(w, transport_phase(h), short_grid)
        assert not np.any(V_rate_table(V, w, short_grid).ratio)

    def test_rates_finite(self, w_plus, phase, hier, short_grid):
        V = solve_V(w_plus, phase, short_grid)
        for tb in (V_rate_table(V, w_plus, short_grid), compare_V_Wp(V, hier)):
            assert np.all(np.isfinite(tb.ratio))
            assert tb.sup > 0


class TestGauge:
    def test_partner_has_zero_phase(self, w_plus, psi_plus):
        w2, psi2 = gauge_partner(w_plus, psi_plus)
        assert not np.any(psi2.values)
        np.testing.assert_allclose(w2.values * np.exp(-1j * psi2.values),
                                   w_plus.values * np.exp(-1j * psi_plus.values), atol=1e-15)

    def test_zero_psi_exact(self, w_plus, zero_phase, phase, short_grid):
        assert gauge_check_transport(w_plus, zero_phase, phase, short_grid) == 0.0

    def test_constant_psi(self, w_plus, params, phase, short_grid):
        psi = PhaseField(params, np.full(params.shape, 1.3))
        assert gauge_check_transport(w_plus, psi, phase, short_grid) <= 1e-10

    def test_band_limited_psi(self, w_plus, psi_plus, phase, short_grid):
        assert gauge_check_transport(w_plus, psi_plus, phase, short_grid) <= 1e-6
