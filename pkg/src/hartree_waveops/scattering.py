"""Physical-variable layer: the map back to u, gauge equivalence, the direct
single-field solver used as an independent oracle, and the error proxies
comparing a wave-operator solution with its asymptotic target."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import estfun
from .auxsys import AuxState, AuxTrajectory, WaveOpResult, free_flow, integrate, omega0
from .grid import ModelParams, PhaseField, ProfileField, g0_array, hk_norm_array, l2_norm_array, yl_norm_array
from .hierarchy import Hierarchy, TimeGrid, capped_ell
from .rates import RateTable, nearest_index

GAUGE_TOL = 1e-6


class GaugeError(ValueError):
    pass


def centered_coords(params: ModelParams) -> tuple:
    """Grid coordinates shifted into ``[-L/2, L/2)``."""
    half = params.L / 2.0
    return tuple((c + half) % params.L - half for c in params.coords())


@dataclass(frozen=True)
class PhysicalSample:
    t: float
    points: tuple        # x = t * y, one array per axis
    values: np.ndarray
    params: ModelParams

    def lr_norm(self, r: float) -> float:
        """L^r norm on the moving grid; the cell volume scales with t^n."""
        cell = self.params.cell_volume * self.t ** self.params.n
        a = np.abs(self.values)
        if math.isinf(r):
            return float(a.max())
        return float((cell * np.sum(a**r)) ** (1.0 / r))


def lambda_map(w: ProfileField, phi: PhaseField, t: float) -> PhysicalSample:
    if t < 1.0:
        raise ValueError("t must be at least 1")
    params = w.grid
    ys = centered_coords(params)
    y2 = sum(y**2 for y in ys)
    pref = (1j * t) ** (-params.n / 2.0)
    u = pref * np.exp(0.5j * t * y2) * np.exp(-1j * phi.values) * w.values
    return PhysicalSample(float(t), tuple(t * y for y in ys), u, params)


def gauge_equiv(w, phi, w2, phi2) -> float:
    """``||w e^{-i phi} - w2 e^{-i phi2}||_2``; accepts fields or arrays batched over time."""
    params = _grid_of(w, phi, w2, phi2)
    a = _vals(w) * np.exp(-1j * _vals(phi)) - _vals(w2) * np.exp(-1j * _vals(phi2))
    return l2_norm_array(params, a)


def _vals(f):
    return f.values if isinstance(f, (ProfileField, PhaseField)) else np.asarray(f)


def _grid_of(*fields):
    grids = {f.grid for f in fields if isinstance(f, (ProfileField, PhaseField))}
    if len(grids) != 1:
        raise GaugeError("pass at least one typed field, all on the same grid")
    return grids.pop()


# ---------------------------------------------------------------------------
# direct single-field solver


def direct_profile_solve(psi0: ProfileField, t0: float, tg: TimeGrid, t_stop: float | None = None) -> np.ndarray:
    """Evolve ``i psi_t = -(2t^2)^-1 lap psi + t^-gamma g0(psi, psi) psi`` on the nodes from t0 to t_stop.

    Both Strang substeps are exact: the free flow in Fourier space, and a
    pointwise phase rotation for the potential, which leaves |psi| and hence
    g0 unchanged during the substep.
    """
    params = psi0.grid
    i0 = tg.index(t0)
    i1 = tg.size - 1 if t_stop is None else nearest_index(tg.nodes, t_stop)
    if i1 < i0:
        raise ValueError("direct_profile_solve runs forward in time")
    psi = psi0.values.copy()
    out = [psi]
    for i in range(i0, i1):
        t_a, t_b = float(tg.nodes[i]), float(tg.nodes[i + 1])
        t_m = math.exp(0.5 * (tg.tau[i] + tg.tau[i + 1]))
        psi = free_flow(params, psi, t_a, t_m)
        pot = g0_array(params, psi, psi)
        dh = estfun.h0_closed(params.gamma, t_b) - estfun.h0_closed(params.gamma, t_a)
        psi = psi * np.exp(-1j * pot * dh)
        psi = free_flow(params, psi, t_m, t_b)
        out.append(psi)
    return np.array(out)


@dataclass
class CrossCheck:
    t: np.ndarray
    psi_gap: np.ndarray        # per node
    mass_drift_aux: float
    mass_drift_direct: float

    @property
    def max_gap(self) -> float:
        return float(self.psi_gap.max())


def cross_integrator_check(w0: ProfileField, phi0: PhaseField, t0: float, t_stop: float, tg: TimeGrid) -> CrossCheck:
    """Evolve (w, phi) with the split auxiliary system and psi = e^{-i phi} w directly; compare psi."""
    params = w0.grid
    traj = integrate(AuxState(t0, w0, phi0), tg, "forward", t_stop=t_stop)
    psi_aux = traj.w * np.exp(-1j * traj.phi)
    psi_dir = direct_profile_solve(ProfileField(params, psi_aux[0]), t0, tg, t_stop)
    gap = l2_norm_array(params, psi_aux - psi_dir)

    def drift(a):
        m = l2_norm_array(params, a)
        return float(np.max(np.abs(m - m[0])) / m[0])

    return CrossCheck(traj.t, gap, drift(traj.w), drift(psi_dir))


# ---------------------------------------------------------------------------
# wave operator for u and gauge covariance


@dataclass
class OmegaResult:
    result: WaveOpResult

    def sample(self, i_global: int) -> PhysicalSample:
        st = self.result.trajectory.state(i_global)
        return lambda_map(st.w, st.phi, st.t)

    @property
    def lower_limit(self) -> float:
        return float(self.result.trajectory.t[0])


def omega(u_plus_profile: ProfileField, p: int, tg: TimeGrid, t0_sequence, params: ModelParams | None = None,
          strict: bool = True) -> OmegaResult:
    """Wave operator on asymptotic data given directly as its profile ``w_+``; the phase datum is zero."""
    params = u_plus_profile.grid if params is None else params
    zero = PhaseField(params, np.zeros(params.shape))
    return OmegaResult(omega0(u_plus_profile, zero, p, t0_sequence, tg, params, strict=strict))


def common_gauge_metric(a: AuxTrajectory, b: AuxTrajectory) -> np.ndarray:
    lo, hi = max(a.i_lo, b.i_lo), min(a.i_hi, b.i_hi)
    if lo > hi:
        raise GaugeError("trajectories share no time nodes")
    sa = slice(lo - a.i_lo, hi - a.i_lo + 1)
    sb = slice(lo - b.i_lo, hi - b.i_lo + 1)
    return l2_norm_array(a.params, a.w[sa] * np.exp(-1j * a.phi[sa]) - b.w[sb] * np.exp(-1j * b.phi[sb]))


def injectivity_gap(first: OmegaResult, second: OmegaResult) -> tuple:
    """(||w_+ - w'_+||_2, gauge metric of the two solutions at their common lower time)."""
    pa, pb = first.result.pipeline, second.result.pipeline
    delta = float(l2_norm_array(pa.w_plus.grid, pa.w_plus.values - pb.w_plus.values))
    metric = common_gauge_metric(first.result.trajectory, second.result.trajectory)
    return delta, float(metric[0])


# ---------------------------------------------------------------------------
# asymptotic error proxies


def delta_r(n: int, r: float) -> float:
    return n / 2.0 if math.isinf(r) else n / 2.0 - n / r


def _check_r(params: ModelParams, r: float):
    if not r >= 2.0:
        raise ValueError(f"r={r} must be at least 2")
    d = delta_r(params.n, r)
    cap = min(params.k, params.n / 2.0)
    if d > cap + 1e-15 or (params.k == params.n / 2.0 and d >= cap):
        raise ValueError(f"delta(r)={d:g} exceeds min(k, n/2)={cap:g}")


@dataclass
class ErrorReport:
    energy: RateTable                  # E_k / P_p
    lr_rows: dict                      # r -> RateTable of t^delta(r) ||u - target||_r / P_p
    e0: np.ndarray                     # E_0 for the r = 2 collapse


def asymptotic_error_report(result: WaveOpResult, h: Hierarchy, r_list=(2.0,), t_hi: float | None = None) -> ErrorReport:
    """Compare u with its modified free target ``M D e^{-i Phi_p} w_+ e^{-i psi_+}`` in profile variables."""
    params = h.params
    for r in r_list:
        _check_r(params, r)
    traj = result.trajectory
    pipe = result.pipeline
    t = traj.t
    ctx = estfun.EstContext(params.gamma)
    Phip = traj.hierarchy_slice(h.Phi(h.p))
    target = pipe.w_plus.values * np.exp(-1j * pipe.psi_plus.values)
    diff = np.exp(1j * (Phip - traj.phi)) * traj.w - target
    Pp = estfun.eval_P(ctx, h.p, t)
    t_hi = result.runs[-1].t0 / 8.0 if t_hi is None else t_hi
    ek = hk_norm_array(params, diff, params.k)
    rows = {}
    for r in r_list:
        # moving-grid L^r norm of u - target, times t^delta(r)
        vals = []
        for j, tt in enumerate(t):
            u = lambda_map(ProfileField(params, traj.w[j]), PhaseField(params, traj.phi[j]), float(tt))
            ref = lambda_map(ProfileField(params, target), PhaseField(params, Phip[j]), float(tt))
            gap = PhysicalSample(u.t, u.points, u.values - ref.values, params)
            vals.append(tt ** delta_r(params.n, r) * gap.lr_norm(r))
        rows[r] = RateTable(f"Lr[{r:g}]/P{h.p}", t, np.array(vals), Pp, t_hi)
    return ErrorReport(RateTable(f"E{params.k}/P{h.p}", t, ek, Pp, t_hi), rows, l2_norm_array(params, diff))


# ---------------------------------------------------------------------------
# gauge transformation between asymptotic states


@dataclass
class SigmaEstimate:
    sigma: PhaseField
    residual: float
    w_plus_mismatch: float


def sigma_extract(t: np.ndarray, w, phi, w2, phi2, params: ModelParams, ell: int | None = None,
                  tol: float = 1e-5) -> SigmaEstimate:
    """sigma = (phi2 - phi)(t_max) for two gauge-equivalent trajectories given on nodes ``t``.

    ``residual`` is the last-decade sup of ``|(phi2 - phi)(t) - sigma|_{ell-2} / h(t)``;
    ``w_plus_mismatch`` is ``||w2(t_max) - w(t_max) e^{i sigma}||_2``.
    """
    w, phi, w2, phi2 = (np.asarray(_vals(a)) for a in (w, phi, w2, phi2))
    metric = l2_norm_array(params, w * np.exp(-1j * phi) - w2 * np.exp(-1j * phi2))
    if float(np.max(metric)) > tol:
        raise GaugeError(f"trajectories are not gauge equivalent (metric {float(np.max(metric)):.3g})")
    ell = params.ell if ell is None else ell
    sigma = phi2[-1] - phi[-1]
    t = np.asarray(t, dtype=float)
    last = t >= t[-1] / 10.0 * (1 - 1e-12)
    dev = yl_norm_array(params, (phi2 - phi)[last] - sigma, capped_ell(params, ell - 2))
    env = estfun.eval_h(estfun.EstContext(params.gamma), t[last])
    mismatch = float(l2_norm_array(params, w2[-1] - w[-1] * np.exp(1j * sigma)))
    return SigmaEstimate(PhaseField(params, sigma), float(np.max(dev / env)), mismatch)


@dataclass
class CovarianceCheck:
    first: WaveOpResult
    second: WaveOpResult
    metric: np.ndarray
    sigma: SigmaEstimate

    @property
    def max_metric(self) -> float:
        return float(self.metric.max())


def gauge_covariance_check(w_plus: ProfileField, psi_plus: PhaseField, p: int, t0_sequence, tg: TimeGrid,
                           params: ModelParams | None = None) -> CovarianceCheck:
    """omega0(w_+, psi_+) against omega0(w_+ e^{-i psi_+}, 0)."""
    from .transport import gauge_partner

    params = w_plus.grid if params is None else params
    first = omega0(w_plus, psi_plus, p, t0_sequence, tg, params, strict=False)
    w2, psi2 = gauge_partner(w_plus, psi_plus)
    second = omega0(w2, psi2, p, t0_sequence, tg, params, strict=False)
    metric = common_gauge_metric(first.trajectory, second.trajectory)
    a, b = first.trajectory, second.trajectory
    lo, hi = max(a.i_lo, b.i_lo), min(a.i_hi, b.i_hi)
    sa, sb = slice(lo - a.i_lo, hi - a.i_lo + 1), slice(lo - b.i_lo, hi - b.i_lo + 1)
    sig = sigma_extract(tg.nodes[lo:hi + 1], a.w[sa], a.phi[sa], b.w[sb], b.phi[sb], params, tol=math.inf)
    return CovarianceCheck(first, second, metric, sig)


# ---------------------------------------------------------------------------
# temporal convergence orders


def observed_order(coarse: np.ndarray, mid: np.ndarray, fine: np.ndarray, ratio: float = 2.0,
                   norm=np.linalg.norm) -> float:
    """Three-resolution Richardson estimate ``log(|c - m| / |m - f|) / log(ratio)``."""
    a = float(norm(coarse - mid))
    b = float(norm(mid - fine))
    if a == 0.0 or b == 0.0:
        return math.inf
    return math.log(a / b) / math.log(ratio)


def strang_order_study(w0: ProfileField, phi0: PhaseField, t_end: float = 10.0, base_steps: int = 16) -> float:
    """Observed order of the split auxiliary integrator on [1, t_end] at 1x, 2x, 4x resolution."""
    finals = []
    for f in (1, 2, 4):
        tg = TimeGrid(1.0, t_end, base_steps * f)
        traj = integrate(AuxState(1.0, w0, phi0), tg, "forward")
        finals.append(np.concatenate([traj.w[-1].ravel(), traj.phi[-1].ravel()]))
    return observed_order(*finals)


def transport_order_study(w_plus: ProfileField, phase_profile: PhaseField, growth: float = 0.0,
                          t_end: float = 10.0, base_steps: int = 8) -> float:
    """Observed order of the backward RK4 transport solve with an analytic phase ``phase_profile * t^growth``."""
    from .transport import solve_V

    finals = []
    for f in (1, 2, 4):
        tg = TimeGrid(1.0, t_end, base_steps * f)
        V = solve_V(w_plus, lambda t: phase_profile.values * t**growth, tg, tail=False)
        finals.append(V[0].ravel())
    return observed_order(*finals)
