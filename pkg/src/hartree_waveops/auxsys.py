"""Integrator for the auxiliary amplitude/phase system and the wave operators built on it.

The system, in tau = log t,

    dw/dtau   = i (2t)^-1 lap w + (2t)^-1 (2 grad phi . grad + lap phi) w
    dphi/dtau = (2t)^-1 |grad phi|^2 + t^(1-gamma) g0(w, w)

is advanced by Strang splitting: the dispersive part is applied exactly in
Fourier space for half a step on each side of one RK4 step of the rest.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import estfun
from .grid import (ModelParams, PhaseField, ProfileField, g0_array, grad_dot, gradient, hk_norm_array,
                   l2_norm_array, laplacian, transport_generator, yl_norm_array)
from .hierarchy import Hierarchy, TimeGrid, capped_ell, solve_hierarchy
from .rates import RateTable, nearest_index
from .transport import solve_V, solve_chi, transport_phase

BLOWUP_FACTOR = 1e6
_MAX_STEP_NUMBER = 2.0


class BlowUp(RuntimeError):
    def __init__(self, t: float):
        super().__init__(f"solution norm exceeded {BLOWUP_FACTOR:g} x initial near t={t:.4g}")
        self.t = t


class StepRejected(RuntimeError):
    pass


class CauchyFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class AuxState:
    t: float
    w: ProfileField
    phi: PhaseField

    def __post_init__(self):
        if self.t < 1.0:
            raise ValueError("t must be at least 1")
        if self.w.grid != self.phi.grid:
            raise ValueError("w and phi live on different grids")


@dataclass
class AuxTrajectory:
    """Node values of (w, phi) on ``tg.nodes[i_lo : i_hi + 1]``."""

    tg: TimeGrid
    i_lo: int
    i_hi: int
    w: np.ndarray
    phi: np.ndarray
    params: ModelParams
    lower_limit: float | None = None   # t where backward integration stopped on blow-up

    @property
    def t(self) -> np.ndarray:
        return self.tg.nodes[self.i_lo:self.i_hi + 1]

    def local(self, i_global: int) -> int:
        if not self.i_lo <= i_global <= self.i_hi:
            raise IndexError("node outside the trajectory")
        return i_global - self.i_lo

    def state(self, i_global: int) -> AuxState:
        j = self.local(i_global)
        return AuxState(float(self.tg.nodes[i_global]), ProfileField(self.params, self.w[j]),
                        PhaseField(self.params, self.phi[j]))

    def hierarchy_slice(self, arr: np.ndarray) -> np.ndarray:
        return arr[self.i_lo:self.i_hi + 1]


# ---------------------------------------------------------------------------
# stepping


def free_flow(params: ModelParams, w: np.ndarray, t_a: float, t_b: float) -> np.ndarray:
    """Exact solution of ``dw/dt = i (2t^2)^-1 lap w`` from ``t_a`` to ``t_b``."""
    phase = np.exp(-0.5j * params.k2 * (1.0 / t_a - 1.0 / t_b))
    return np.fft.ifftn(np.fft.fftn(w, axes=params.axes) * phase, axes=params.axes)


def _nonlinear_rhs(params: ModelParams, t: float, w, phi):
    dw = transport_generator(params, phi, w) / (2.0 * t)
    dphi = grad_dot(params, phi, phi) / (2.0 * t) + t ** (1.0 - params.gamma) * g0_array(params, w, w)
    return dw, dphi


def _step_bound(params: ModelParams, phi, t: float, dtau: float) -> float:
    gphi = gradient(params, phi)
    kmax = max(float(np.max(np.abs(kk))) for kk in params.wavenumbers)
    speed = float(np.max(np.sqrt(np.sum(gphi**2, axis=0))))
    return abs(dtau) * (2.0 * speed * kmax + float(np.max(np.abs(laplacian(params, phi))))) / (2.0 * t)


def strang_step(params: ModelParams, w, phi, tau_a: float, dtau: float):
    t_a = math.exp(tau_a)
    t_m = math.exp(tau_a + 0.5 * dtau)
    t_b = math.exp(tau_a + dtau)
    if _step_bound(params, phi, min(t_a, t_b), dtau) > _MAX_STEP_NUMBER:
        raise StepRejected(f"step at t={t_a:.4g} exceeds the RK4 stability bound; refine the time grid")
    w = free_flow(params, w, t_a, t_m)

    def f(frac, y):
        return _nonlinear_rhs(params, math.exp(tau_a + frac * dtau), *y)

    k1 = f(0.0, (w, phi))
    k2 = f(0.5, (w + 0.5 * dtau * k1[0], phi + 0.5 * dtau * k1[1]))
    k3 = f(0.5, (w + 0.5 * dtau * k2[0], phi + 0.5 * dtau * k2[1]))
    k4 = f(1.0, (w + dtau * k3[0], phi + dtau * k3[1]))
    w = w + dtau / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    phi = phi + dtau / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    w = free_flow(params, w, t_m, t_b)
    return w, phi


def _state_size(params, w, phi) -> float:
    return float(l2_norm_array(params, w)) + float(np.max(np.abs(phi)))


def integrate(state0: AuxState, tg: TimeGrid, direction: str = "forward", t_stop: float | None = None,
              stop_on_blowup: bool = False) -> AuxTrajectory:
    """March node by node from ``state0.t`` to ``t_stop`` (default: the grid end).

    With ``stop_on_blowup`` a blow-up during backward integration ends the
    trajectory at the last good node instead of raising.
    """
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    params = state0.w.grid
    i0 = tg.index(state0.t)
    if t_stop is None:
        i1 = tg.size - 1 if direction == "forward" else 0
    else:
        i1 = nearest_index(tg.nodes, t_stop)
    step = 1 if direction == "forward" else -1
    if (i1 - i0) * step < 0:
        raise ValueError("t_stop lies on the wrong side of the initial time")
    w = state0.w.values.astype(complex)
    phi = state0.phi.values.astype(float)
    ws, phis = [w], [phi]
    size0 = max(_state_size(params, w, phi), 1e-300)
    lower = None
    dtau = step * tg.dtau
    for i in range(i0, i1, step):
        try:
            w_new, phi_new = strang_step(params, w, phi, tg.tau[i], dtau)
            ok = np.all(np.isfinite(w_new)) and np.all(np.isfinite(phi_new))
            if not ok or _state_size(params, w_new, phi_new) > BLOWUP_FACTOR * size0:
                raise BlowUp(float(tg.nodes[i + step]))
        except (BlowUp, StepRejected):
            if stop_on_blowup and direction == "backward":
                lower = float(tg.nodes[i])
                break
            raise
        w, phi = w_new, phi_new
        ws.append(w)
        phis.append(phi)
    if step < 0:
        ws.reverse()
        phis.reverse()
    n = len(ws)
    lo, hi = (i0, i0 + n - 1) if step > 0 else (i0 - n + 1, i0)
    return AuxTrajectory(tg, lo, hi, np.array(ws), np.array(phis), params, lower_limit=lower)


def join(backward: AuxTrajectory, forward: AuxTrajectory) -> AuxTrajectory:
    if backward.i_hi != forward.i_lo:
        raise ValueError("trajectories do not meet at a common node")
    return AuxTrajectory(backward.tg, backward.i_lo, forward.i_hi,
                         np.concatenate([backward.w, forward.w[1:]]),
                         np.concatenate([backward.phi, forward.phi[1:]]),
                         backward.params, lower_limit=backward.lower_limit)


# ---------------------------------------------------------------------------
# local wave operator and its t0 -> infinity limit


@dataclass
class Pipeline:
    """Hierarchy and transport data shared by every t0 run for one asymptotic state."""

    w_plus: ProfileField
    psi_plus: PhaseField
    h: Hierarchy
    V: np.ndarray
    chi: np.ndarray

    @classmethod
    def build(cls, w_plus: ProfileField, psi_plus: PhaseField, p: int, tg: TimeGrid,
              params: ModelParams | None = None) -> "Pipeline":
        params = w_plus.grid if params is None else params
        if not (p + 2) * params.gamma > 1.0:
            raise estfun.DomainError(f"(p+2) gamma = {(p + 2) * params.gamma:g} <= 1")
        h = solve_hierarchy(w_plus, p, tg, params)
        phi = transport_phase(h)
        return cls(w_plus, psi_plus, h, solve_V(w_plus, phi, tg), solve_chi(psi_plus, phi, tg))


@dataclass
class LocalWaveOp:
    t0: float
    trajectory: AuxTrajectory
    tables: dict

    @property
    def T(self) -> float:
        return float(self.trajectory.t[0])


def _local_tables(pipe: Pipeline, traj: AuxTrajectory, t0: float) -> dict:
    params, h = pipe.h.params, pipe.h
    ctx = estfun.EstContext(params.gamma)
    t = traj.t
    sl = traj.hierarchy_slice
    k, ell = params.k, capped_ell(params, params.ell)
    Wp, Phip = sl(h.W(h.p)), sl(h.Phi(h.p))
    V, chi = sl(pipe.V), sl(pipe.chi)
    Qp = estfun.eval_Q(ctx, h.p, t)
    Pp = estfun.eval_P(ctx, h.p, t)
    h0 = estfun.eval_h0(ctx, t)
    Qp0 = estfun.eval_Q(ctx, h.p, t0)
    after = t >= t0 * (1 - 1e-12)
    # beyond t0 the envelopes are Q_p(t0) and Q_p(t0) h0(t); below t0 they are Q_p(t) and P_p(t)
    env_w = np.where(after, Qp0, Qp)
    env_phi = np.where(after, Qp0 * h0, Pp)
    dv = hk_norm_array(params, traj.w - V, k)
    dW = hk_norm_array(params, traj.w - Wp, k)
    dchi = yl_norm_array(params, traj.phi - Phip - chi, ell)
    dpsi = yl_norm_array(params, traj.phi - Phip - pipe.psi_plus.values, ell)
    t_hi = t0
    return {
        "w-V": RateTable("w-V", t, dv, env_w, t_hi),
        "w-Wp": RateTable("w-Wp", t, dW, env_w, t_hi),
        "phi-Phip-chi": RateTable("phi-Phip-chi", t, dchi, env_phi, t_hi),
        "phi-Phip-psi+": RateTable("phi-Phip-psi+", t, dpsi, env_phi, t_hi),
        "|w|": RateTable("|w|", t, hk_norm_array(params, traj.w, k), np.ones_like(t), t_hi),
        "|phi|/h0": RateTable("|phi|/h0", t, yl_norm_array(params, traj.phi, ell), h0, t_hi),
    }


def local_wave_op(w_plus: ProfileField, psi_plus: PhaseField, p: int, t0: float, tg: TimeGrid,
                  params: ModelParams | None = None, pipeline: Pipeline | None = None) -> LocalWaveOp:
    """Solve from ``(V(t0), Phi_p(t0) + chi(t0))`` down to ``max(t_min, T)`` and up to ``t_max``."""
    params = w_plus.grid if params is None else params
    if not (p + 2) * params.gamma > 1.0:
        raise estfun.DomainError(f"(p+2) gamma = {(p + 2) * params.gamma:g} <= 1")
    pipe = pipeline or Pipeline.build(w_plus, psi_plus, p, tg, params)
    i0 = nearest_index(tg.nodes, t0)
    t0n = float(tg.nodes[i0])
    start = AuxState(t0n, ProfileField(params, pipe.V[i0]),
                     PhaseField(params, pipe.h.Phi(p)[i0] + pipe.chi[i0]))
    down = integrate(start, tg, "backward", stop_on_blowup=True)
    up = integrate(start, tg, "forward")
    traj = join(down, up)
    return LocalWaveOp(t0n, traj, _local_tables(pipe, traj, t0n))


@dataclass
class WaveOpResult:
    p: int
    pipeline: Pipeline
    runs: list
    cauchy_rows: list = field(default_factory=list)
    fixed_time: float = 0.0
    fixed_time_diffs: list = field(default_factory=list)
    rate_tables: dict = field(default_factory=dict)

    @property
    def trajectory(self) -> AuxTrajectory:
        return self.runs[-1].trajectory

    @property
    def t0_sequence(self) -> list:
        return [r.t0 for r in self.runs]

    @property
    def cauchy_ratio_spread(self) -> float:
        r = [row[3] for row in self.cauchy_rows]
        return max(r) / min(r) if r and min(r) > 0 else (1.0 if r and max(r) == 0 else math.inf)

    @property
    def fixed_time_monotone(self) -> bool:
        d = self.fixed_time_diffs
        return all(b <= 1.5 * a for a, b in zip(d, d[1:]))


def omega0(w_plus: ProfileField, psi_plus: PhaseField, p: int, t0_sequence, tg: TimeGrid,
           params: ModelParams | None = None, strict: bool = True,
           pipeline: Pipeline | None = None, workers: int = 1) -> WaveOpResult:
    params = w_plus.grid if params is None else params
    if not (p + 2) * params.gamma > 1.0:
        raise estfun.DomainError(f"(p+2) gamma = {(p + 2) * params.gamma:g} <= 1")
    seq = list(t0_sequence)
    if len(seq) < 4 or any(b <= a for a, b in zip(seq, seq[1:])):
        raise ValueError("t0_sequence must be increasing with at least 4 entries")
    pipe = pipeline or Pipeline.build(w_plus, psi_plus, p, tg, params)
    run = partial(local_wave_op, w_plus, psi_plus, p, tg=tg, params=params, pipeline=pipe)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda t0: run(t0=t0), seq))
    else:
        runs = [run(t0=t0) for t0 in seq]
    ctx = estfun.EstContext(params.gamma)
    rows = []
    for a, b in zip(runs, runs[1:]):
        i = nearest_index(tg.nodes, a.t0)
        diff = float(hk_norm_array(params, b.trajectory.w[b.trajectory.local(i)] - pipe.V[i], params.k))
        q = float(estfun.eval_Q(ctx, p, a.t0))
        rows.append((a.t0, diff, q, diff / q))
    t_fix = runs[0].t0
    i_fix = nearest_index(tg.nodes, t_fix)
    fixed = []
    for a, b in zip(runs, runs[1:]):
        fixed.append(float(hk_norm_array(params, a.trajectory.w[a.trajectory.local(i_fix)]
                                         - b.trajectory.w[b.trajectory.local(i_fix)], params.k - 1)))
    res = WaveOpResult(p, pipe, runs, rows, t_fix, fixed)
    res.rate_tables = final_rate_tables(res)
    if strict and not res.fixed_time_monotone:
        raise CauchyFailure(f"fixed-time differences {fixed} do not shrink along the t0 sequence")
    return res


def final_rate_tables(res: WaveOpResult) -> dict:
    """|w-V|_k / Q_p, |w-W_p|_k / Q_p, |phi-Phi_p-chi|_l / P_p, |phi-Phi_p-psi+|_l / P_p on [T, t0_last/8]."""
    pipe, traj = res.pipeline, res.trajectory
    params, h = pipe.h.params, pipe.h
    ctx = estfun.EstContext(params.gamma)
    t_hi = res.runs[-1].t0 / 8.0
    keep = traj.t <= t_hi * (1 + 1e-12)
    t = traj.t[keep]
    sl = lambda a: traj.hierarchy_slice(a)[keep]  # noqa: E731
    k, ell = params.k, capped_ell(params, params.ell)
    w, phi = traj.w[keep], traj.phi[keep]
    Qp = estfun.eval_Q(ctx, h.p, t)
    Pp = estfun.eval_P(ctx, h.p, t)
    Phip = sl(h.Phi(h.p))
    return {
        "w-V": RateTable("w-V/Qp", t, hk_norm_array(params, w - sl(pipe.V), k), Qp, t_hi),
        "w-Wp": RateTable("w-Wp/Qp", t, hk_norm_array(params, w - sl(h.W(h.p)), k), Qp, t_hi),
        "phi-Phip-chi": RateTable("phi-Phip-chi/Pp", t, yl_norm_array(params, phi - Phip - sl(pipe.chi), ell), Pp, t_hi),
        "phi-Phip-psi+": RateTable("phi-Phip-psi+/Pp", t,
                                   yl_norm_array(params, phi - Phip - pipe.psi_plus.values, ell), Pp, t_hi),
    }


# ---------------------------------------------------------------------------
# asymptotic-state extraction


@dataclass
class Extraction:
    w_plus: ProfileField
    psi_plus: PhaseField | None
    tables: list
    growth: float
    nonconvergent: bool


def _growth_metric(t: np.ndarray, D: np.ndarray, params: ModelParams, t_a: float = 100.0, t_b: float = 1000.0):
    i0, ia, ib = (nearest_index(t, x) for x in (t_a / 10.0, t_a, t_b))
    near = float(l2_norm_array(params, D[ia] - D[i0]))
    far = float(l2_norm_array(params, D[ib] - D[i0]))
    if near == 0.0:
        return 1.0 if far == 0.0 else math.inf
    return far / near


def extract_asymptotics(traj: AuxTrajectory, p: int, h: Hierarchy, growth_window=(100.0, 1000.0)) -> Extraction:
    """Asymptotic state read off at ``t_max`` plus the convergence rate tables."""
    params, tg = h.params, h.tg
    if traj.i_hi != tg.size - 1:
        raise ValueError("trajectory must reach t_max")
    if h.p < p:
        raise ValueError("hierarchy order below the requested p")
    ctx = estfun.EstContext(params.gamma)
    t = traj.t
    tables = []
    for m in range(p + 1):
        Wm = traj.hierarchy_slice(h.W(m))
        Phim = traj.hierarchy_slice(h.Phi(m))
        kw = max(0, min(params.k + p - m - 1, params.max_order))
        tables.append(RateTable(f"w-W{m}/Q{m}", t, hk_norm_array(params, traj.w - Wm, kw),
                                estfun.eval_Q(ctx, m, t), tg.t_max / 10.0))
        lp = capped_ell(params, params.ell + p - m - 1)
        tables.append(RateTable(f"phi-Phi{m}/N{m + 1}", t, yl_norm_array(params, traj.phi - Phim, lp),
                                estfun.eval_N(ctx, m + 1, t), tg.t_max / 10.0))
    D = traj.phi - traj.hierarchy_slice(h.Phi(p))
    growth = _growth_metric(t, D, params, *growth_window)
    flag = growth > 2.0
    psi_est = None
    if (p + 2) * params.gamma > 1.0:
        psi_est = PhaseField(params, D[-1])
        flag = flag or _envelope_violation(t, D, params, p)
    return Extraction(ProfileField(params, traj.w[-1]), psi_est, tables, growth, flag)


def _envelope_violation(t, D, params, p) -> bool:
    """Last-decade variation of D over P_p exceeding the previous decade's by x10."""
    ctx = estfun.EstContext(params.gamma)
    i_end = len(t) - 1
    i_mid = nearest_index(t, t[-1] / 10.0)
    i_start = nearest_index(t, t[-1] / 100.0)
    if i_start == i_mid:
        return False

    def tv(a, b):
        return sum(float(l2_norm_array(params, D[i + 1] - D[i])) for i in range(a, b))

    prev = tv(i_start, i_mid) / float(estfun.eval_P(ctx, p, t[i_start]))
    last = tv(i_mid, i_end) / float(estfun.eval_P(ctx, p, t[i_mid]))
    return prev > 0 and last > 10.0 * prev
