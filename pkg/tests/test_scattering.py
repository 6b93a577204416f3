from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hartree_waveops.auxsys import AuxState, free_flow, integrate, omega0
from hartree_waveops.grid import (ModelParams, PhaseField, ProfileField, hk_norm_array, l2_norm_array,
                                  random_band_limited)
from hartree_waveops.scattering import (GaugeError, PhysicalSample, _check_r, asymptotic_error_report,
                                        centered_coords, common_gauge_metric, cross_integrator_check, delta_r,
                                        direct_profile_solve, gauge_covariance_check, gauge_equiv, injectivity_gap,
                                        lambda_map, observed_order, omega, sigma_extract)

SEQ = [50.0, 100.0, 200.0, 400.0]
P3 = ModelParams(gamma=0.6, N=16)


def _field(seed, norm=1.0, real=False, radius=3):
    return random_band_limited(seed, radius, norm, P3.k, P3, real=real)


@pytest.fixture(scope="module")
def free_w(free_params, w_plus):
    return ProfileField(free_params, w_plus.values)


@pytest.fixture(scope="module")
def free_run(free_params, free_w, short_grid):
    return omega(free_w, 1, short_grid, SEQ, free_params, strict=False)


class TestLambdaMap:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 500), t=st.floats(1.0, 1e4))
    def test_l2_isometry(self, seed, t):
        w = _field(seed)
        u = lambda_map(w, _field(seed + 1, 0.5, real=True), t)
        assert u.lr_norm(2.0) == pytest.approx(float(l2_norm_array(P3, w.values)), rel=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(-10, 10), t=st.floats(1.0, 100.0))
    def test_constant_phase_shift(self, c, t):
        w, phi = _field(1), _field(2, 0.3, real=True)
        a = lambda_map(w, phi, t)
        b = lambda_map(w, PhaseField(P3, phi.values + c), t)
        np.testing.assert_allclose(b.values, a.values * np.exp(-1j * c), atol=1e-14)

    def test_argument_at_one(self):
        # w > 0 and phi = 0: arg u = |y|^2 / 2 - n pi / 4 (mod 2 pi)
        w = ProfileField(P3, np.abs(_field(3).values) + 0.1)
        u = lambda_map(w, PhaseField(P3, np.zeros(P3.shape)), 1.0)
        y2 = sum(y**2 for y in centered_coords(P3))
        gap = np.angle(u.values * np.exp(-1j * (0.5 * y2 - P3.n * math.pi / 4)))
        assert float(np.max(np.abs(gap))) <= 1e-9

    def test_points_scale_with_t(self):
        u = lambda_map(_field(1), PhaseField(P3, np.zeros(P3.shape)), 4.0)
        np.testing.assert_allclose(u.points[0], 4.0 * centered_coords(P3)[0])
        assert float(np.min(centered_coords(P3)[0])) == pytest.approx(-P3.L / 2)

    def test_t_below_one(self):
        with pytest.raises(ValueError):
            lambda_map(_field(1), PhaseField(P3, np.zeros(P3.shape)), 0.5)

    def test_sup_norm(self):
        vals = np.zeros(P3.shape, dtype=complex)
        vals[1, 2, 3] = 3 - 4j
        assert PhysicalSample(2.0, (), vals, P3).lr_norm(math.inf) == 5.0


class TestGaugeEquiv:
    def test_sigma(self):
        w, sig = _field(1), _field(2, 1.0, real=True)
        d = gauge_equiv(w, PhaseField(P3, np.zeros(P3.shape)), ProfileField(P3, w.values * np.exp(1j * sig.values)),
                        sig)
        assert float(d) <= 1e-12

    def test_two_pi(self):
        w = _field(1)
        zero = PhaseField(P3, np.zeros(P3.shape))
        assert float(gauge_equiv(w, zero, w, PhaseField(P3, np.full(P3.shape, 2 * math.pi)))) <= 1e-12

    def test_constant_offset_value(self):
        w = _field(1)
        zero = PhaseField(P3, np.zeros(P3.shape))
        got = float(gauge_equiv(w, zero, w, PhaseField(P3, np.full(P3.shape, 0.1))))
        assert got == pytest.approx(2 * float(l2_norm_array(P3, w.values)) * math.sin(0.05), rel=1e-12)

    def test_batched(self):
        w = np.stack([_field(1).values, _field(2).values])
        phi = np.zeros((2,) + P3.shape)
        out = gauge_equiv(ProfileField(P3, w[0]), phi, w, phi + 0.1)
        assert out.shape == (2,)

    def test_needs_typed_field(self):
        a = np.zeros(P3.shape)
        with pytest.raises(GaugeError):
            gauge_equiv(a, a, a, a)

    @settings(max_examples=20, deadline=None)
    @given(s=st.lists(st.integers(0, 1000), min_size=3, max_size=3, unique=True))
    def test_pseudometric(self, s):
        pts = [(_field(x), _field(x + 7, 0.5, real=True)) for x in s]
        d = lambda a, b: float(gauge_equiv(*a, *b))  # noqa: E731
        a, b, c = pts
        assert d(a, a) == 0.0
        assert d(a, b) == pytest.approx(d(b, a), rel=1e-14)
        assert d(a, c) <= d(a, b) + d(b, c) + 1e-12

    def test_moduli_of_equivalent_trajectories(self, short_grid):
        w, sig = _field(1), _field(2, 0.5, real=True, radius=2)
        a = integrate(AuxState(1.0, w, PhaseField(P3, np.zeros(P3.shape))), short_grid, t_stop=10.0)
        b = integrate(AuxState(1.0, ProfileField(P3, w.values * np.exp(1j * sig.values)), sig), short_grid,
                      t_stop=10.0)
        assert float(np.max(np.abs(np.abs(a.w) - np.abs(b.w)))) <= 1e-8


class TestDirectSolver:
    def test_free_flow_oracle(self, free_params, free_w, short_grid):
        psi = direct_profile_solve(free_w, 1.0, short_grid, 100.0)
        ref = free_flow(free_params, free_w.values, 1.0, 100.0)
        assert float(l2_norm_array(free_params, psi[-1] - ref)) <= 1e-9

    def test_mass(self, w_plus, short_grid, params):
        psi = direct_profile_solve(w_plus, 1.0, short_grid)
        mass = l2_norm_array(params, psi)
        assert float(np.max(np.abs(mass - mass[0]))) <= 1e-10 * mass[0]

    def test_forward_only(self, w_plus, short_grid):
        with pytest.raises(ValueError):
            direct_profile_solve(w_plus, 10.0, short_grid, 2.0)

    def test_cross_check(self, params, short_grid):
        w0 = random_band_limited(3, 2, 0.3, params.k, params)
        phi0 = random_band_limited(4, 2, 0.3, params.k, params, real=True)
        cc = cross_integrator_check(w0, phi0, 1.0, 10.0, short_grid)
        assert cc.max_gap <= 1e-5
        assert cc.mass_drift_aux <= 1e-8 and cc.mass_drift_direct <= 1e-8


class TestSigma:
    def test_constant_shift(self):
        t = np.array([1.0, 10.0, 100.0])
        w = np.stack([_field(1).values] * 3)
        phi = np.zeros((3,) + P3.shape)
        est = sigma_extract(t, w, phi, w * np.exp(1j * 0.4), phi + 0.4, P3)
        np.testing.assert_allclose(est.sigma.values, 0.4, atol=1e-15)
        assert est.residual == 0.0
        assert est.w_plus_mismatch <= 1e-13

    def test_identical(self):
        t = np.array([1.0, 10.0])
        w = np.stack([_field(1).values] * 2)
        phi = np.stack([_field(2, 0.3, real=True).values] * 2)
        est = sigma_extract(t, w, phi, w, phi, P3)
        assert not np.any(est.sigma.values)
        assert est.residual == 0.0 and est.w_plus_mismatch == 0.0

    def test_not_equivalent(self):
        t = np.array([1.0, 10.0])
        w = np.stack([_field(1).values] * 2)
        phi = np.zeros((2,) + P3.shape)
        with pytest.raises(GaugeError):
            sigma_extract(t, w, phi, 1.1 * w, phi, P3)


class TestErrorProxies:
    @pytest.mark.parametrize("n, r, expected", [(3, 2.0, 0.0), (3, 6.0, 1.0), (3, math.inf, 1.5), (4, 4.0, 1.0)])
    def test_delta(self, n, r, expected):
        assert delta_r(n, r) == pytest.approx(expected)

    @pytest.mark.parametrize("r", [1.0, 1.99])
    def test_r_below_two(self, r):
        with pytest.raises(ValueError):
            _check_r(P3, r)

    def test_r_at_bound(self):
        _check_r(P3, math.inf)  # delta = 3/2 <= min(k, n/2)
        narrow = ModelParams(n=3, mu=0.5, k=2, ell=2, enforce_hypotheses=False)
        _check_r(narrow, 6.0)

    def test_r_strict_when_k_is_half_n(self):
        p = ModelParams(n=4, mu=1.0, k=2, ell=3, enforce_hypotheses=False)
        with pytest.raises(ValueError):
            _check_r(p, math.inf)

    def test_free_energy_error_is_dispersion(self, free_run, free_params, free_w):
        res = free_run.result
        rep = asymptotic_error_report(res, res.pipeline.h, (2.0, 6.0))
        t0 = res.runs[-1].t0
        for j in (0, 20, len(rep.energy.t) - 1):
            t = float(rep.energy.t[j])
            ref = free_flow(free_params, free_w.values, t0, t) - free_w.values
            assert float(rep.energy.numerator[j]) == pytest.approx(
                float(hk_norm_array(free_params, ref, free_params.k)), rel=1e-8, abs=1e-14)

    def test_r2_collapse(self, free_run):
        res = free_run.result
        rep = asymptotic_error_report(res, res.pipeline.h, (2.0,))
        np.testing.assert_allclose(rep.lr_rows[2.0].numerator, rep.e0, rtol=1e-12, atol=1e-15)


class TestOmega:
    def test_free_profile(self, free_run, free_params, free_w, short_grid):
        traj = free_run.result.trajectory
        t0 = free_run.result.runs[-1].t0
        for i in (traj.i_lo, short_grid.index(100.0), traj.i_hi):
            st = traj.state(i)
            psi = st.w.values * np.exp(-1j * st.phi.values)
            ref = free_flow(free_params, free_w.values, t0, st.t)
            assert float(l2_norm_array(free_params, psi - ref)) <= 1e-9

    def test_sample(self, free_run, free_w):
        u = free_run.sample(free_run.result.trajectory.i_hi)
        assert u.lr_norm(2.0) == pytest.approx(float(l2_norm_array(free_w.grid, free_w.values)), rel=1e-10)
        assert free_run.lower_limit == 1.0

    def test_injectivity_free(self, free_run, free_params, short_grid):
        other = omega(ProfileField(free_params, 1.1 * free_run.result.pipeline.w_plus.values), 1, short_grid, SEQ,
                      free_params, strict=False)
        delta, metric = injectivity_gap(free_run, other)
        # the free flow is unitary, so the gap is carried unchanged to t = 1
        assert metric == pytest.approx(delta, rel=1e-9)

    def test_no_common_nodes(self, free_run, free_params, short_grid):
        a = integrate(AuxState(1.0, free_run.result.pipeline.w_plus, PhaseField(free_params,
                                                                                 np.zeros(free_params.shape))),
                      short_grid, t_stop=2.0)
        b = integrate(AuxState(100.0, free_run.result.pipeline.w_plus, PhaseField(free_params,
                                                                                   np.zeros(free_params.shape))),
                      short_grid)
        with pytest.raises(GaugeError):
            common_gauge_metric(a, b)


class TestOrders:
    @pytest.mark.parametrize("order", [1, 2, 4])
    def test_observed_order_synthetic(self, order):
        h = 0.1
        vals = [np.array([1.0 + (h / f) ** order]) for f in (1, 2, 4)]
        assert observed_order(*vals) == pytest.approx(order, rel=1e-9)

    def test_exact_sequence(self):
        v = np.ones(3)
        assert observed_order(v, v, v) == math.inf


@pytest.mark.slow
class TestNonlinear:
    def test_gauge_covariance(self, w_plus, psi_plus, short_grid, params):
        cov = gauge_covariance_check(w_plus, psi_plus, 1, SEQ, short_grid, params)
        assert cov.max_metric <= 1e-5
        assert math.isfinite(cov.sigma.residual)
        assert cov.sigma.w_plus_mismatch <= 1e-5

    def test_injectivity(self, w_plus, short_grid, params):
        a = omega(w_plus, 1, short_grid, SEQ, params, strict=False)
        b = omega(ProfileField(params, w_plus.values + 0.2 * _field(9).values), 1, short_grid, SEQ, params,
                  strict=False)
        delta, metric = injectivity_gap(a, b)
        assert metric >= 0.5 * delta

    def test_error_report_shapes(self, w_plus, psi_plus, short_grid, params):
        res = omega0(w_plus, psi_plus, 1, SEQ, short_grid, params, strict=False)
        rep = asymptotic_error_report(res, res.pipeline.h, (2.0, 3.0, 6.0))
        assert set(rep.lr_rows) == {2.0, 3.0, 6.0}
        for tb in [rep.energy] + list(rep.lr_rows.values()):
            assert np.all(np.isfinite(tb.ratio))
        np.testing.assert_allclose(rep.lr_rows[2.0].numerator, rep.e0, rtol=1e-12)
