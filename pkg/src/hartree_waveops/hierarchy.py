"""Asymptotic amplitude/phase hierarchy by successive integrations in log-time.

Given an asymptotic amplitude ``w_plus`` the hierarchy solves, for
``m = -1, 0, ..., p``,

    d/dt w_{m+1}   = (2t^2)^-1 sum_{j<=m} B(phi_j) w_{m-j},         w_{m+1}(inf) = 0
    d/dt phi_{m+1} = (2t^2)^-1 sum_{j<=m} grad phi_j . grad phi_{m-j}
                     + t^-gamma sum_{j<=m+1} g0(w_j, w_{m+1-j}),     phi_{m+1}(1) = 0

with ``B(phi) = 2 grad phi . grad + lap phi`` and ``w_0 = w_plus``.  The
amplitude integrals run to infinity: quadrature to ``t_max`` plus a tail
that extrapolates the integrand's power law fitted on the final decade.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import estfun
from .grid import (GridError, ModelParams, PhaseField, ProfileField, g0_array, grad_dot,
                   hk_norm_array, transport_generator, yl_norm_array)
from .rates import RateTable


class TailFitError(RuntimeError):
    """The integrand does not decay fast enough on the final decade to extrapolate."""


@dataclass(frozen=True)
class TimeGrid:
    """Log-spaced nodes ``t_j = t_min 10^(j / steps_per_decade)``."""

    t_min: float = 1.0
    t_max: float = 1e4
    steps_per_decade: int = 64

    def __post_init__(self):
        if not self.t_min >= 1.0:
            raise ValueError("t_min must be at least 1")
        if not self.t_max > self.t_min:
            raise ValueError("t_max must exceed t_min")
        if self.steps_per_decade < 2:
            raise ValueError("steps_per_decade must be at least 2")
        steps = self.steps_per_decade * math.log10(self.t_max / self.t_min)
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError("t_max / t_min must be a whole number of steps")
        if round(steps) < 3:
            raise ValueError("need at least 4 nodes")

    @property
    def size(self) -> int:
        return int(round(self.steps_per_decade * math.log10(self.t_max / self.t_min))) + 1

    @property
    def dtau(self) -> float:
        return math.log(10.0) / self.steps_per_decade

    @cached_property
    def tau(self) -> np.ndarray:
        return math.log(self.t_min) + self.dtau * np.arange(self.size)

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.t_min * 10.0 ** (np.arange(self.size) / self.steps_per_decade)
        t[-1] = self.t_max
        return t

    def index(self, t: float) -> int:
        i = int(round(math.log(t / self.t_min) / self.dtau))
        if not (0 <= i < self.size) or abs(self.nodes[i] - t) > 1e-9 * t:
            raise ValueError(f"t={t:g} is not a node of the time grid")
        return i

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_min, self.t_max, self.steps_per_decade * factor)


# ---------------------------------------------------------------------------
# quadrature in tau


def cumulative_integral(values: np.ndarray, dtau: float) -> np.ndarray:
    """Running integral along axis 0 with F[0] = 0.

    Each interval uses the cubic through four neighbouring nodes (one-sided
    at the ends), so the running sum is fourth order in ``dtau``.
    """
    f = np.asarray(values)
    n = f.shape[0]
    if n < 4:
        raise ValueError("need at least 4 nodes")
    c = dtau / 24.0
    piece = np.empty((n - 1,) + f.shape[1:], dtype=f.dtype)
    piece[0] = c * (9 * f[0] + 19 * f[1] - 5 * f[2] + f[3])
    piece[1:-1] = c * (-f[:-3] + 13 * f[1:-2] + 13 * f[2:-1] - f[3:])
    piece[-1] = c * (f[-4] - 5 * f[-3] + 19 * f[-2] + 9 * f[-1])
    out = np.zeros_like(f)
    np.cumsum(piece, axis=0, out=out[1:])
    return out


def interp_tau(traj: np.ndarray, tg: TimeGrid, tau: float) -> np.ndarray:
    """Cubic Lagrange interpolation of a node trajectory at ``tau``."""
    s = (tau - tg.tau[0]) / tg.dtau
    i = int(math.floor(s))
    if abs(s - round(s)) < 1e-12:
        return traj[int(round(s))]
    i0 = min(max(i - 1, 0), tg.size - 4)
    x = s - i0
    out = 0.0
    for a in range(4):
        wt = 1.0
        for b in range(4):
            if b != a:
                wt *= (x - b) / (a - b)
        out = out + wt * traj[i0 + a]
    return out


def power_law_tail(tg: TimeGrid, integrand_tau: np.ndarray, norms: np.ndarray):
    """Integral over ``[t_max, inf)`` in t of a source whose tau-integrand is given.

    ``integrand_tau = t * source``.  The source is modelled as ``S(T) (t/T)^-beta``
    with ``beta`` from the norm ratio over the last decade.  Returns
    ``(tail, beta)``.
    """
    last = tg.size - 1
    first = last - tg.steps_per_decade
    if first < 0:
        raise TailFitError("time grid shorter than one decade")
    T = tg.nodes[last]
    # norms are of t*source, so the source ratio carries one extra decade factor
    n_hi, n_lo = norms[last], norms[first]
    if n_hi == 0.0:
        return np.zeros_like(integrand_tau[last]), math.inf
    if n_lo == 0.0:
        raise TailFitError("source vanishes at the start of the last decade but not at its end")
    beta = 1.0 - math.log10(n_hi / n_lo)
    if not beta > 1.0:
        raise TailFitError(f"fitted source exponent {beta:.3f} <= 1: integral to infinity diverges")
    source_T = integrand_tau[last] / T
    return source_T * T / (beta - 1.0), beta


# ---------------------------------------------------------------------------
# hierarchy


@dataclass
class Hierarchy:
    p: int
    params: ModelParams
    tg: TimeGrid
    w: list                     # w_0 .. w_p, arrays (nodes, *grid)
    phi: list                   # phi_0 .. phi_p
    w_next: np.ndarray          # w_{p+1}, needed for the phase remainder source
    tail_exponents: dict = field(default_factory=dict)
    psi_tail: np.ndarray | None = None

    @property
    def gamma(self) -> float:
        return self.params.gamma

    def W(self, m: int) -> np.ndarray:
        return self._partial("W", m, self.w)

    def Phi(self, m: int) -> np.ndarray:
        if m < 0:
            return np.zeros((self.tg.size,) + self.params.shape)
        return self._partial("Phi", m, self.phi)

    def _partial(self, key: str, m: int, terms: list) -> np.ndarray:
        cache = self.__dict__.setdefault("_sums", {})
        if (key, m) not in cache:
            total = np.zeros((self.tg.size,) + self.params.shape, dtype=terms[0].dtype)
            for j in range(m + 1):
                total = total + terms[j]
            total.setflags(write=False)
            cache[(key, m)] = total
        return cache[(key, m)]

    def phase_field(self, m: int, i: int) -> PhaseField:
        return PhaseField(self.params, self.phi[m][i])

    def amplitude_field(self, m: int, i: int) -> ProfileField:
        return ProfileField(self.params, self.w[m][i])


def _check_budget(params: ModelParams, p: int):
    if params.k + p + 1 > params.max_order:
        raise GridError(
            f"p={p} needs k+p+1 = {params.k + p + 1} resolved derivatives; N={params.N} resolves {params.max_order}")


def _amplitude_source(params, tg, phi: list, w: list, m: int) -> np.ndarray:
    """tau-integrand ``t * source`` of w_{m+1}: ``(2t)^-1 sum B(phi_j) w_{m-j}``."""
    total = 0.0
    for j in range(m + 1):
        total = total + transport_generator(params, phi[j], w[m - j])
    return total / (2.0 * tg.nodes.reshape((-1,) + (1,) * params.n))


def _phase_source(params, tg, phi: list, w: list, m: int) -> np.ndarray:
    """tau-integrand of phi_{m+1}."""
    t = tg.nodes.reshape((-1,) + (1,) * params.n)
    grad_part = 0.0
    for j in range(m + 1):
        grad_part = grad_part + grad_dot(params, phi[j], phi[m - j])
    g_part = 0.0
    for j in range(m + 2):
        g_part = g_part + g0_array(params, w[j], w[m + 1 - j])
    return grad_part / (2.0 * t) + t ** (1.0 - params.gamma) * g_part


def _integrate_from_infinity(params, tg, integrand: np.ndarray):
    running = cumulative_integral(integrand, tg.dtau)
    norms = np.sqrt(np.sum(np.abs(integrand) ** 2, axis=params.axes))
    tail, beta = power_law_tail(tg, integrand, norms)
    return -(running[-1] - running) - tail, beta


def solve_hierarchy(w_plus: ProfileField, p: int, tg: TimeGrid, params: ModelParams | None = None) -> Hierarchy:
    params = w_plus.grid if params is None else params
    if p < 0:
        raise ValueError("p must be nonnegative")
    if tg.t_min != 1.0:
        raise ValueError("the hierarchy phases start at t = 1; use a TimeGrid with t_min = 1")
    _check_budget(params, p)
    shape = (tg.size,) + params.shape
    w = [np.broadcast_to(w_plus.values, shape)]
    phi = []
    exps = {}
    # m = -1: phi_0 from g0(w_+, w_+) alone
    phi.append(cumulative_integral(_phase_source(params, tg, [], w, -1), tg.dtau))
    for m in range(p + 1):
        w_new, beta = _integrate_from_infinity(params, tg, _amplitude_source(params, tg, phi, w, m))
        exps[f"w{m + 1}"] = beta
        w.append(w_new)
        if m < p:
            phi.append(cumulative_integral(_phase_source(params, tg, phi, w, m), tg.dtau))
    h = Hierarchy(p=p, params=params, tg=tg, w=w[:p + 1], phi=phi, w_next=w[p + 1], tail_exponents=exps)
    if (p + 2) * params.gamma > 1.0:
        h.psi_tail = solve_psi_tail(h)
    return h


def solve_psi_tail(h: Hierarchy) -> np.ndarray:
    """Phase remainder ``phi_{p+1}`` with zero data at infinity."""
    params, tg, p = h.params, h.tg, h.p
    if not (p + 2) * params.gamma > 1.0:
        raise estfun.DomainError(f"(p+2) gamma = {(p + 2) * params.gamma:g} <= 1: phase remainder has no limit")
    if h.psi_tail is not None:
        return h.psi_tail
    ws = list(h.w) + [h.w_next]
    out, beta = _integrate_from_infinity(params, tg, _phase_source(params, tg, h.phi, ws, p))
    h.tail_exponents[f"phi{p + 1}"] = beta
    return out.real


# ---------------------------------------------------------------------------
# reports


def capped_ell(params: ModelParams, ell: int) -> int:
    """Largest Y index not above ``ell`` whose norm is resolvable."""
    return min(ell, params.max_order - 2)


def hierarchy_decay_report(h: Hierarchy, k: int | None = None, ell: int | None = None,
                           t_hi: float | None = None) -> list:
    """Ratios ``|w_{m+1}|_{k+p-m-1} / Q_m`` and ``|phi_m|_{ell+p-m} / N_m`` for each m.

    Starts at the second node (``N_m(1) = 0``).  Phase norms whose index
    would exceed the resolvable order are evaluated at the capped index.
    """
    params, tg, p = h.params, h.tg, h.p
    k = params.k if k is None else k
    ell = params.ell if ell is None else ell
    t_hi = tg.t_max / 10.0 if t_hi is None else t_hi
    ctx = estfun.EstContext(params.gamma)
    t = tg.nodes[1:]
    tables = []
    ws = list(h.w) + [h.w_next]
    for m in range(p + 1):
        kw = min(k + p - m - 1, params.max_order)
        num = hk_norm_array(params, ws[m + 1][1:], kw)
        tables.append(RateTable(f"w{m + 1}/Q{m}", t, num, estfun.eval_Q(ctx, m, t), t_hi))
        lp = capped_ell(params, ell + p - m)
        num = yl_norm_array(params, h.phi[m][1:], lp)
        tables.append(RateTable(f"phi{m}/N{m}", t, num, estfun.eval_N(ctx, m, t), t_hi))
    return tables


def psi_tail_report(h: Hierarchy, ell: int | None = None, t_hi: float | None = None) -> RateTable:
    params, tg = h.params, h.tg
    ell = params.ell if ell is None else ell
    tail = solve_psi_tail(h)
    ctx = estfun.EstContext(params.gamma)
    t = tg.nodes
    num = yl_norm_array(params, tail, capped_ell(params, ell - 1))
    return RateTable(f"phi{h.p + 1}/P{h.p}", t, num, estfun.eval_P(ctx, h.p, t),
                     tg.t_max / 10.0 if t_hi is None else t_hi)


def hierarchy_gauge_check(w_plus: ProfileField, sigma: PhaseField, p: int, tg: TimeGrid,
                          params: ModelParams | None = None, ell: int | None = None) -> float:
    """Max over m and t of ``|phi_m - phi'_m|_{ell-1}`` for ``w_plus`` versus ``w_plus e^{i sigma}``."""
    params = w_plus.grid if params is None else params
    ell = params.ell if ell is None else ell
    a = solve_hierarchy(w_plus, p, tg, params)
    b = solve_hierarchy(ProfileField(params, w_plus.values * np.exp(1j * sigma.values)), p, tg, params)
    pairs = list(zip(a.phi, b.phi))
    if a.psi_tail is not None:
        pairs.append((a.psi_tail, b.psi_tail))
    idx = capped_ell(params, ell - 1)
    return max(float(np.max(yl_norm_array(params, x - y, idx))) for x, y in pairs)
