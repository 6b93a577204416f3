"""Linear transport of the amplitude V and the phase chi from data at infinity.

In tau = log t the equations read

    dV/dtau   = (2t)^-1 (2 grad phi . grad + lap phi) V
    dchi/dtau = t^-1 grad phi . grad chi

and are integrated backward from ``t_max`` with classical RK4.  The data
at ``t_max`` accounts for the stretch ``[t_max, inf)`` by freezing the
generator at ``t_max`` and weighting it with the integral of the fitted
power law of ``|phi|``; see ``frozen_tail_data``.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import estfun
from .grid import (PhaseField, ProfileField, gradient, grad_dot, hk_norm_array, l2_norm_array, laplacian,
                   transport_generator, yl_norm_array)
from .hierarchy import Hierarchy, TimeGrid, capped_ell, interp_tau
from .rates import RateTable

# RK4 is stable on the imaginary axis up to |z| = 2.83; keep a margin
_MAX_STEP_NUMBER = 2.0


class StepRejected(RuntimeError):
    """A step would exceed the stability/accuracy bound of the explicit scheme."""


def _phi_sampler(phi, tg: TimeGrid) -> Callable[[float], np.ndarray]:
    if callable(phi):
        return lambda tau: np.asarray(phi(math.exp(tau)))
    traj = np.asarray(phi)
    if traj.shape[0] != tg.size:
        raise ValueError("phase trajectory does not cover the time grid")
    return lambda tau: interp_tau(traj, tg, tau)


def _phase_growth_exponent(grid, sampler, tg: TimeGrid) -> float:
    """Exponent alpha of ``|phi| ~ t^alpha`` over the last decade (0 if phi vanishes)."""
    tau_hi = tg.tau[-1]
    tau_lo = tau_hi - math.log(10.0)
    if tau_lo < tg.tau[0]:
        tau_lo = tg.tau[0]
    a = float(l2_norm_array(grid, sampler(tau_hi)))
    b = float(l2_norm_array(grid, sampler(tau_lo)))
    if a == 0.0 or b == 0.0 or tau_hi == tau_lo:
        return 0.0
    return math.log(a / b) / (tau_hi - tau_lo)


def _generator_bound(grid, phi) -> float:
    """Crude spectral-radius bound of ``2 grad phi . grad + lap phi``."""
    gphi = gradient(grid, phi)
    kmax = max(float(np.max(np.abs(kk))) for kk in grid.wavenumbers)
    speed = float(np.max(np.sqrt(np.sum(gphi**2, axis=0))))
    return 2.0 * speed * kmax + float(np.max(np.abs(laplacian(grid, phi))))


def _rk4(f, y, dt):
    k1 = f(0.0, y)
    k2 = f(0.5, y + 0.5 * dt * k1)
    k3 = f(0.5, y + 0.5 * dt * k2)
    k4 = f(1.0, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _apply_exponential(op, y, weight: float, bound: float):
    """``exp(weight * op) y`` by RK4 in pseudo-time, substeps chosen from ``bound``."""
    if weight == 0.0 or bound == 0.0:
        return y
    steps = max(4, int(math.ceil(abs(weight) * bound / 0.25)))
    dt = weight / steps
    for _ in range(steps):
        y = _rk4(lambda _s, v: op(v), y, dt)
    return y


def frozen_tail_data(grid, phi_T: np.ndarray, T: float, alpha: float, w_plus=None, psi_plus=None):
    """Data at ``T`` from data at infinity with the generator frozen at ``phi_T``.

    With ``phi(t) ~ phi_T (t/T)^alpha`` the backward integrals over ``[T, inf)``
    of the V and chi generators carry weights ``kappa`` and ``2 kappa`` with
    ``kappa = 1 / (2 T (1 - alpha))``.
    """
    if alpha >= 1.0:
        raise StepRejected(f"phase grows like t^{alpha:.2f}; the transport integral to infinity diverges")
    kappa = 1.0 / (2.0 * T * (1.0 - alpha))
    bound = _generator_bound(grid, phi_T)
    out = []
    if w_plus is not None:
        out.append(_apply_exponential(lambda v: transport_generator(grid, phi_T, v), np.asarray(w_plus, dtype=complex),
                                      -kappa, bound))
    if psi_plus is not None:
        out.append(_apply_exponential(lambda c: 2.0 * grad_dot(grid, phi_T, c), np.asarray(psi_plus, dtype=float),
                                      -kappa, bound))
    return out


def _march_backward(grid, tg: TimeGrid, sampler, rhs, y_end, stop_index: int = 0):
    traj = np.empty((tg.size,) + grid.shape, dtype=y_end.dtype)
    traj[-1] = y_end
    y = y_end
    dtau = -tg.dtau
    for i in range(tg.size - 1, stop_index, -1):
        tau_a = tg.tau[i]
        t_a = tg.nodes[i]
        phis = {0.0: sampler(tau_a), 0.5: sampler(tau_a + 0.5 * dtau), 1.0: sampler(tg.tau[i - 1])}
        bound = _generator_bound(grid, phis[0.0])
        if tg.dtau * bound / (2.0 * tg.nodes[i - 1]) > _MAX_STEP_NUMBER:
            raise StepRejected(f"step at t={t_a:.4g} exceeds the RK4 stability bound; refine the time grid")

        def f(frac, v, tau_a=tau_a, phis=phis):
            t = math.exp(tau_a + frac * dtau)
            return rhs(phis[frac], v, t)

        y = _rk4(f, y, dtau)
        traj[i - 1] = y
    traj[:stop_index] = 0.0
    return traj


def solve_V(w_plus: ProfileField, phi, tg: TimeGrid, tail: bool = True) -> np.ndarray:
    """Amplitude V on every node, ``V(inf) = w_plus``.

    ``phi`` is a node trajectory or a callable ``t -> array``.  With
    ``tail=False`` the data ``V(t_max) = w_plus`` is imposed directly.
    """
    grid = w_plus.grid
    sampler = _phi_sampler(phi, tg)
    y_end = np.array(w_plus.values, dtype=complex)
    if tail:
        alpha = _phase_growth_exponent(grid, sampler, tg)
        (y_end,) = frozen_tail_data(grid, sampler(tg.tau[-1]), tg.t_max, alpha, w_plus=y_end)

    def rhs(ph, v, t):
        return transport_generator(grid, ph, v) / (2.0 * t)

    return _march_backward(grid, tg, sampler, rhs, y_end)


def solve_chi(psi_plus: PhaseField, phi, tg: TimeGrid, tail: bool = True) -> np.ndarray:
    """Phase chi on every node, ``chi(inf) = psi_plus``."""
    grid = psi_plus.grid
    sampler = _phi_sampler(phi, tg)
    y_end = np.array(psi_plus.values, dtype=float)
    if tail:
        alpha = _phase_growth_exponent(grid, sampler, tg)
        (y_end,) = frozen_tail_data(grid, sampler(tg.tau[-1]), tg.t_max, alpha, psi_plus=y_end)

    def rhs(ph, c, t):
        return grad_dot(grid, ph, c) / t

    return _march_backward(grid, tg, sampler, rhs, y_end)


def transport_phase(h: Hierarchy) -> np.ndarray:
    """The transporting phase of the standard pipeline, ``Phi_{p-1}``."""
    return h.Phi(h.p - 1)


def V_rate_table(V: np.ndarray, w_plus: ProfileField, tg: TimeGrid, k: int | None = None,
                 t_hi: float | None = None) -> RateTable:
    grid = w_plus.grid
    k = grid.k if k is None else k
    num = hk_norm_array(grid, V - w_plus.values, k - 1)
    env = estfun.eval_h(estfun.EstContext(grid.gamma), tg.nodes)
    return RateTable("V-w+/h", tg.nodes, num, env, tg.t_max / 10.0 if t_hi is None else t_hi)


def chi_rate_table(chi: np.ndarray, psi_plus: PhaseField, tg: TimeGrid, ell: int | None = None,
                   t_hi: float | None = None) -> RateTable:
    grid = psi_plus.grid
    ell = grid.ell if ell is None else ell
    num = yl_norm_array(grid, chi - psi_plus.values, capped_ell(grid, ell - 1))
    env = estfun.eval_h(estfun.EstContext(grid.gamma), tg.nodes)
    return RateTable("chi-psi+/h", tg.nodes, num, env, tg.t_max / 10.0 if t_hi is None else t_hi)


def compare_V_Wp(V: np.ndarray, h: Hierarchy, k: int | None = None, t_hi: float | None = None) -> RateTable:
    grid, tg = h.params, h.tg
    k = grid.k if k is None else k
    num = hk_norm_array(grid, V - h.W(h.p), k)
    env = estfun.eval_Q(estfun.EstContext(grid.gamma), h.p, tg.nodes)
    return RateTable(f"V-W{h.p}/Q{h.p}", tg.nodes, num, env, tg.t_max / 10.0 if t_hi is None else t_hi)


def l2_drift(V: np.ndarray, grid) -> float:
    norms = l2_norm_array(grid, V)
    return float(np.max(np.abs(norms - norms[-1])) / norms[-1]) if norms[-1] > 0 else 0.0


def gauge_partner(w_plus: ProfileField, psi_plus: PhaseField, psi_plus_new: PhaseField | None = None):
    """Asymptotic state gauge-equivalent to ``(w_plus, psi_plus)`` with phase ``psi_plus_new`` (default 0)."""
    grid = w_plus.grid
    new = np.zeros(grid.shape) if psi_plus_new is None else psi_plus_new.values
    return ProfileField(grid, w_plus.values * np.exp(-1j * (psi_plus.values - new))), PhaseField(grid, new)


def gauge_check_transport(w_plus: ProfileField, psi_plus: PhaseField, phi, tg: TimeGrid) -> float:
    """``max_t ||V e^{-i chi} - V' e^{-i chi'}||_2`` for two gauge-equivalent data sets."""
    grid = w_plus.grid
    V = solve_V(w_plus, phi, tg)
    chi = solve_chi(psi_plus, phi, tg)
    w2, psi2 = gauge_partner(w_plus, psi_plus)
    V2 = solve_V(w2, phi, tg)
    chi2 = solve_chi(psi2, phi, tg)
    diff = V * np.exp(-1j * chi) - V2 * np.exp(-1j * chi2)
    return float(np.max(l2_norm_array(grid, diff)))


def richardson_pair(w_plus: ProfileField, phi, tg: TimeGrid) -> tuple:
    """V from the full grid and from one truncated a decade earlier; returns (V_full, V_short, diff_l2)."""
    short = TimeGrid(tg.t_min, tg.t_max / 10.0, tg.steps_per_decade)
    V_full = solve_V(w_plus, phi, tg)
    V_short = solve_V(w_plus, phi if callable(phi) else np.asarray(phi)[: short.size], short)
    diff = l2_norm_array(w_plus.grid, V_full[: short.size] - V_short)
    return V_full, V_short, diff
