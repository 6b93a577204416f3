"""Estimating functions of time for the long-range Hartree hierarchy.

Overview
--------
All functions here depend on a single exponent ``gamma`` in (0, 1] and are
evaluated for ``t >= 1``:

* ``h0(t)  = int_1^t s^-gamma ds``
* ``h(t)   = int_1^inf s^-gamma / max(t, s) ds``
* ``N_m(t) = int_1^t s^-gamma h(s)^m ds``
* ``Q_m(t) = int_1^inf s^-gamma h(s)^m / max(t, s) ds``
* ``P_m(t) = int_1^inf s^-gamma h(max(t, s)) h(s)^m ds``   (needs (m+2) gamma > 1)
* ``R_m(t) = int_t^inf s^-2 P_m(s) ds``

``h0`` and ``h`` have closed forms.  The others are computed by adaptive
Gauss-Kronrod quadrature in ``tau = log s`` up to a cut ``t_cut`` plus an
exact tail: beyond the cut every integrand is a finite sum of terms
``c s^-p (log s)^q`` that integrates in closed form.

``verify_identities`` checks the relations between these functions with a
separate quadrature route (``scipy.integrate.quad``, no tails, no shared
code with the evaluators) so that a bug in one route cannot hide in the other.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

LOG_BRANCH_EPS = 1e-12
# Below this distance from gamma = 1 the binomial tail expansion cancels
# badly, so the tail beyond t_cut is integrated numerically instead.
_SERIES_CANCEL_EPS = 1e-2


class DomainError(ValueError):
    """Argument outside the domain where the requested function is finite."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class EstContext:
    """Exponent ``gamma`` plus the quadrature policy used by the evaluators."""

    gamma: float
    quad_rel_tol: float = 1e-10
    t_cut: float = 1e8
    tail_terms: int = 2

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0) or not math.isfinite(self.gamma):
            raise DomainError("gamma must lie in (0,1]")
        if not self.quad_rel_tol > 0.0:
            raise DomainError("quad_rel_tol must be positive")
        if not self.t_cut > 1.0:
            raise DomainError("t_cut must exceed 1")
        if self.tail_terms < 1:
            raise DomainError("tail_terms must be at least 1")

    @property
    def log_branch(self) -> bool:
        return abs(1.0 - self.gamma) < LOG_BRANCH_EPS


# ---------------------------------------------------------------------------
# closed forms, written in tau = log t to stay accurate near gamma = 1


def _check_t(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 1.0) or np.any(~np.isfinite(arr)):
        raise DomainError("estimating functions are defined for finite t >= 1")
    return arr


def _h0_tau(gamma: float, tau):
    c = 1.0 - gamma
    if abs(c) < LOG_BRANCH_EPS:
        return np.asarray(tau, dtype=float) * 1.0
    return np.expm1(c * np.asarray(tau, dtype=float)) / c


def _h_tau(gamma: float, tau):
    # t h(t) = (1 + h0(t)) / gamma, which avoids the (1-gamma)^-1 cancellation
    tau = np.asarray(tau, dtype=float)
    return (1.0 + _h0_tau(gamma, tau)) * np.exp(-tau) / gamma


def h0_closed(gamma: float, t):
    """``h0`` for any ``gamma > 0`` (also used with (m+1) gamma > 1 in bounds)."""
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    out = _h0_tau(gamma, np.log(_check_t(t)))
    return float(out) if np.ndim(out) == 0 else out


def h_closed(gamma: float, t):
    """``h`` for any ``gamma > 0``."""
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    out = _h_tau(gamma, np.log(_check_t(t)))
    return float(out) if np.ndim(out) == 0 else out


def eval_h0(ctx: EstContext, t):
    return h0_closed(ctx.gamma, t)


def eval_h(ctx: EstContext, t):
    return h_closed(ctx.gamma, t)


def p0_closed(ctx: EstContext, t):
    """Closed form of ``P_0``; see the decisions ledger for the printed typo."""
    g = ctx.gamma
    if not 2.0 * g > 1.0:
        raise DomainError("P_0 needs 2 gamma > 1")
    t = _check_t(t)
    h0 = h0_closed(g, t)
    out = h0 * (h_closed(g, t) + t**-g / g) + 2.0 / (g * (2.0 * g - 1.0)) * t ** (1.0 - 2.0 * g)
    return float(out) if np.ndim(out) == 0 else out


def c_const(ctx: EstContext, m: int) -> float:
    """Constant in ``R_m <= C_m h Q_m``."""
    g = ctx.gamma
    return (2 * m + 3) * g / ((m + 2) * g - 1.0)


# ---------------------------------------------------------------------------
# vectorised adaptive Gauss-Kronrod (7/15)

_XK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_WK_FULL = np.concatenate([_WK[:-1], _WK[::-1]])
_WG_FULL = np.zeros(15)
# Gauss nodes sit at the odd Kronrod positions 1, 3, 5, 7 of the half rule
_WG_FULL[[1, 3, 5]] = _WG[:3]
_WG_FULL[7] = _WG[3]
_WG_FULL[[9, 11, 13]] = _WG[2::-1]


def _gk_batch(f, lo: np.ndarray, hi: np.ndarray):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    k = half * (fx @ _WK_FULL)
    g = half * (fx @ _WG_FULL)
    return k, np.abs(k - g)


def adaptive_quad(f: Callable, a: float, b: float, rel_tol: float,
                  abs_tol: float = 0.0, max_intervals: int = 5000):
    """Integrate a vectorised ``f`` over ``[a, b]`` (``b`` may be ``inf``).

    Intervals whose error estimate exceeds their share of the tolerance are
    bisected together, so each sweep costs one vectorised call of ``f``.
    Returns ``(value, error_estimate)``.
    """
    if b == a:
        return 0.0, 0.0
    if math.isinf(b):
        g = f

        def f(s, g=g, a=a):  # noqa: E306 - map [0, 1) onto [a, inf)
            s = np.asarray(s)
            one_minus = 1.0 - s
            return g(a + s / one_minus) / one_minus**2

        a, b = 0.0, 1.0
    lo = np.linspace(a, b, 5)[:-1]
    hi = np.linspace(a, b, 5)[1:]
    val, err = _gk_batch(f, lo, hi)
    while True:
        total = float(val.sum())
        tol = max(abs_tol, rel_tol * abs(total), 50 * np.finfo(float).eps * float(np.abs(val).sum()))
        toterr = float(err.sum())
        if toterr <= tol:
            return total, toterr
        if lo.size > max_intervals:
            raise QuadratureError("adaptive quadrature did not converge", toterr)
        split = err > tol / lo.size
        if not np.any(split):
            split = err >= err.max()
        mids = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mids])
        new_hi = np.concatenate([mids, hi[split]])
        v, e = _gk_batch(f, new_lo, new_hi)
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        val = np.concatenate([val[keep], v])
        err = np.concatenate([err[keep], e])


# ---------------------------------------------------------------------------
# exact tails: sums of c * t^-p * (log t)^q


class _PowerLog:
    """A finite sum ``sum c t^-p (log t)^q`` stored as {(p, q): c}."""

    def __init__(self, terms=None):
        self.terms = dict(terms or {})

    @classmethod
    def mono(cls, coef: float, p: float, q: int = 0):
        return cls({(p, q): coef})

    def __add__(self, other):
        out = defaultdict(float, self.terms)
        for key, c in other.terms.items():
            out[key] += c
        return _PowerLog(out)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return _PowerLog({k: c * other for k, c in self.terms.items()})
        out = defaultdict(float)
        for (p1, q1), c1 in self.terms.items():
            for (p2, q2), c2 in other.terms.items():
                out[(p1 + p2, q1 + q2)] += c1 * c2
        return _PowerLog(out)

    __rmul__ = __mul__

    def __pow__(self, m: int):
        out = _PowerLog.mono(1.0, 0.0)
        for _ in range(m):
            out = out * self
        return out

    def tail_integral(self, T: float) -> float:
        """``int_T^inf`` of the sum; each term needs ``p > 1``."""
        logT = math.log(T)
        total = 0.0
        for (p, q), c in self.terms.items():
            if c == 0.0:
                continue
            if p <= 1.0:
                raise DomainError("tail integral diverges")
            s = p - 1.0
            # int_T^inf t^-p (log t)^q dt = T^-s sum_i q!/(q-i)! (log T)^(q-i) / s^(i+1)
            acc = 0.0
            for i in range(q + 1):
                acc += math.factorial(q) / math.factorial(q - i) * logT ** (q - i) / s ** (i + 1)
            total += c * T**-s * acc
        return total


def _h0_series(gamma: float) -> _PowerLog:
    c = 1.0 - gamma
    if abs(c) < LOG_BRANCH_EPS:
        return _PowerLog.mono(1.0, 0.0, 1)
    return _PowerLog({(-c, 0): 1.0 / c, (0.0, 0): -1.0 / c})


def _h_series(gamma: float, tail_terms: int) -> _PowerLog:
    c = 1.0 - gamma
    if abs(c) < LOG_BRANCH_EPS:
        ordered = [((1.0, 1), 1.0), ((1.0, 0), 1.0)]
    else:
        ordered = [((gamma, 0), 1.0 / (gamma * c)), ((1.0, 0), -1.0 / c)]
    return _PowerLog(dict(ordered[:tail_terms]))


def _H2_series(gamma: float) -> _PowerLog:
    # int_t^inf s^-2 h(s) ds = gamma^-1 t^-2 (1/2 + (h0 + 1/2)/(1 + gamma))
    inner = _PowerLog.mono(0.5 + 0.5 / (1.0 + gamma), 0.0) + _h0_series(gamma) * (1.0 / (1.0 + gamma))
    return _PowerLog.mono(1.0 / gamma, 2.0) * inner


def _H2_tau(gamma: float, tau):
    tau = np.asarray(tau, dtype=float)
    return np.exp(-2.0 * tau) / gamma * (0.5 + (_h0_tau(gamma, tau) + 0.5) / (1.0 + gamma))


# ---------------------------------------------------------------------------
# evaluators


def _scalar_or_map(fn, t):
    if np.ndim(t) == 0:
        return fn(float(t))
    arr = np.asarray(t, dtype=float)
    return np.array([fn(float(x)) for x in arr.ravel()]).reshape(arr.shape)


def _improper(ctx: EstContext, integrand_tau, series: _PowerLog, t: float) -> float:
    """``int_t^inf`` of an integrand given in tau form with its tail series."""
    L = math.log(t)
    Lc = math.log(ctx.t_cut)
    finite = 0.0
    if L < Lc:
        finite, _ = adaptive_quad(integrand_tau, L, Lc, ctx.quad_rel_tol)
        start = Lc
    else:
        start = L
    c = 1.0 - ctx.gamma
    if LOG_BRANCH_EPS <= abs(c) < _SERIES_CANCEL_EPS:
        tail, _ = adaptive_quad(integrand_tau, start, math.inf, ctx.quad_rel_tol)
    else:
        tail = series.tail_integral(math.exp(start))
    return finite + tail


def _N_scalar(ctx: EstContext, m: int, t: float) -> float:
    if t == 1.0:
        return 0.0
    g = ctx.gamma

    def f(tau):
        return np.exp((1.0 - g) * tau) * _h_tau(g, tau) ** m

    val, _ = adaptive_quad(f, 0.0, math.log(t), ctx.quad_rel_tol)
    return val


def _Qplus_scalar(ctx: EstContext, m: int, t: float) -> float:
    g = ctx.gamma

    def f(tau):
        return np.exp(-g * tau) * _h_tau(g, tau) ** m

    series = _PowerLog.mono(1.0, 1.0 + g) * _h_series(g, ctx.tail_terms) ** m
    return _improper(ctx, f, series, t)


def _Pplus_scalar(ctx: EstContext, m: int, t: float) -> float:
    g = ctx.gamma

    def f(tau):
        return np.exp((1.0 - g) * tau) * _h_tau(g, tau) ** (m + 1)

    series = _PowerLog.mono(1.0, g) * _h_series(g, ctx.tail_terms) ** (m + 1)
    return _improper(ctx, f, series, t)


def _check_m(m: int):
    if int(m) != m or m < 0:
        raise DomainError("m must be a nonnegative integer")


def _check_p_domain(ctx: EstContext, m: int):
    if not (m + 2) * ctx.gamma > 1.0:
        raise DomainError(f"(m+2) gamma = {(m + 2) * ctx.gamma:g} <= 1: the integral diverges")


def eval_N(ctx: EstContext, m: int, t):
    _check_m(m)
    _check_t(t)
    return _scalar_or_map(lambda x: _N_scalar(ctx, m, x), t)


def eval_Q(ctx: EstContext, m: int, t):
    _check_m(m)
    _check_t(t)
    return _scalar_or_map(lambda x: _N_scalar(ctx, m, x) / x + _Qplus_scalar(ctx, m, x), t)


def eval_P(ctx: EstContext, m: int, t):
    _check_m(m)
    _check_p_domain(ctx, m)
    _check_t(t)

    def one(x):
        val = float(h_closed(ctx.gamma, x)) * _N_scalar(ctx, m, x) + _Pplus_scalar(ctx, m, x)
        if m == 0:
            ref = p0_closed(ctx, x)
            if abs(val - ref) > 10 * ctx.quad_rel_tol * abs(ref):
                raise QuadratureError("P_0 quadrature disagrees with its closed form", abs(val - ref) / abs(ref))
        return val

    return _scalar_or_map(one, t)


def eval_R(ctx: EstContext, m: int, t):
    """``R_m`` through Fubini: the s-integral of ``h(max(s, t1))`` is done exactly.

    ``R_m(t) = H2(t) N_m(t) + int_t^inf t1^-gamma h^m(t1) [h(t1)(1/t - 1/t1) + H2(t1)] dt1``
    with ``H2(t) = int_t^inf s^-2 h(s) ds`` in closed form.
    """
    _check_m(m)
    _check_p_domain(ctx, m)
    _check_t(t)
    g = ctx.gamma
    cm = c_const(ctx, m)

    def one(x):
        inv_t = 1.0 / x

        def f(tau):
            hh = _h_tau(g, tau)
            return np.exp((1.0 - g) * tau) * hh**m * (hh * (inv_t - np.exp(-tau)) + _H2_tau(g, tau))

        hs = _h_series(g, ctx.tail_terms)
        bracket = hs * inv_t + hs * _PowerLog.mono(-1.0, 1.0) + _H2_series(g)
        series = _PowerLog.mono(1.0, g) * hs**m * bracket
        val = float(_H2_tau(g, math.log(x))) * _N_scalar(ctx, m, x) + _improper(ctx, f, series, x)
        bound = cm * float(h_closed(g, x)) * (_N_scalar(ctx, m, x) / x + _Qplus_scalar(ctx, m, x))
        if val > bound + 1e-9:
            raise QuadratureError(f"R_{m}({x:g}) = {val:.6e} exceeds C_m h Q_m = {bound:.6e}", val - bound)
        return val

    return _scalar_or_map(one, t)


# ---------------------------------------------------------------------------
# identity and inequality suite (independent scipy route)


@dataclass
class IdentityRow:
    identity_id: str
    gamma: float
    m: int
    t: float
    a: float
    b: float
    lhs: float
    rhs: float
    rel_error: float
    passed: bool
    kind: str = "eq"


@dataclass
class IdentityReport:
    checked: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [r for r in self.checked if not r.passed]

    def extend(self, rows: Iterable[IdentityRow]):
        self.checked.extend(rows)

    CSV_COLUMNS = ("identity_id", "gamma", "m", "t", "a", "b", "lhs", "rhs", "rel_error", "pass")

    def csv_rows(self):
        for r in self.checked:
            yield (r.identity_id, r.gamma, r.m, r.t, r.a, r.b, r.lhs, r.rhs, r.rel_error, int(r.passed))


EQ_TOL = 1e-8
INEQ_SLACK = 1e-12


class _Oracle:
    """Reference values by ``scipy.integrate.quad`` in tau, memoised per instance."""

    def __init__(self, gamma: float, epsrel: float = 1e-12):
        self.g = gamma
        self.c = 1.0 - gamma
        self.log_branch = abs(self.c) < LOG_BRANCH_EPS
        self.epsrel = epsrel
        self._cache: dict = {}

    # closed-form building blocks (definitions N_0 = h0, Q_0 = h)
    def h0(self, tau: float) -> float:
        if self.log_branch:
            return tau
        return math.expm1(self.c * tau) / self.c

    def h(self, tau: float) -> float:
        return (1.0 + self.h0(tau)) * math.exp(-tau) / self.g

    def log_one_plus_h0(self, tau: float) -> float:
        if self.log_branch:
            return math.log1p(tau)
        # 1 + h0 = (exp(c tau) - gamma) / c, kept finite for any tau
        c = self.c
        if c > 0 and c * tau > 30.0:
            return c * tau + math.log1p(-self.g * math.exp(-c * tau)) - math.log(c)
        return math.log1p(self.h0(tau))

    def weighted(self, a: float, k: int, tau: float) -> float:
        """``exp(a tau) h(tau)^k`` formed in log space; finite for any tau."""
        log_h = self.log_one_plus_h0(tau) - tau - math.log(self.g)
        return math.exp(a * tau + k * log_h)

    def quad(self, f, lo, hi, overflow_safe: bool = False) -> float:
        if hi == lo:
            return 0.0
        if math.isinf(hi) and overflow_safe:
            val, _ = integrate.quad(f, lo, hi, epsabs=1e-250, epsrel=self.epsrel, limit=400)
            return val
        if math.isinf(hi):
            # past tau = 700 every integrand here is below exp(-70) times its
            # scale, and the closed forms overflow soon after
            hi = max(700.0, lo + 1.0)
        points = [p for p in (lo + 10.0, lo + 40.0, lo + 150.0) if p < hi]
        val, _ = integrate.quad(f, lo, hi, epsabs=1e-250, epsrel=self.epsrel, limit=400, points=points or None)
        return val

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def N(self, m: int, tau: float) -> float:
        if m == 0:
            return self.h0(tau)
        c = self.c
        return self._memo(("N", m, tau), lambda: self.quad(
            lambda u: self.weighted(c, m, u), 0.0, tau))

    def Q(self, m: int, tau: float) -> float:
        if m == 0:
            return self.h(tau)
        g, c = self.g, self.c

        def compute():
            inner = self.quad(lambda u: self.weighted(c, m, u), 0.0, tau) * math.exp(-tau)
            outer = self.quad(lambda u: self.weighted(-g, m, u), tau, math.inf, overflow_safe=True)
            return inner + outer

        return self._memo(("Q", m, tau), compute)

    def P(self, m: int, tau: float) -> float:
        c = self.c

        def compute():
            head = self.h(tau) * self.quad(lambda u: self.weighted(c, m, u), 0.0, tau)
            return head + self.quad(lambda u: self.weighted(c, m + 1, u), tau, math.inf, overflow_safe=True)

        return self._memo(("P", m, tau), compute)

    def R(self, m: int, tau: float) -> float:
        return self._memo(("R", m, tau), lambda: self.quad(
            lambda u: math.exp(-u) * self.P(m, u), tau, math.inf))

    # definitions straight from the integral forms, for the closed-form check
    def h0_by_definition(self, t: float) -> float:
        return self.quad(lambda u: math.exp(self.c * u), 0.0, math.log(t))

    def h_by_definition(self, t: float) -> float:
        L = math.log(t)
        return (self.quad(lambda u: math.exp(self.c * u), 0.0, L) / t
                + self.quad(lambda u: math.exp(-self.g * u), L, math.inf, overflow_safe=True))

    def p0_by_definition(self, t: float) -> float:
        L = math.log(t)
        return (self.h(L) * self.quad(lambda u: math.exp(self.c * u), 0.0, L)
                + self.quad(lambda u: self.weighted(self.c, 1, u), L, math.inf, overflow_safe=True))


def _eq_row(ident, g, m, t, a, b, lhs, rhs) -> IdentityRow:
    diff = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs))
    rel = diff / scale if scale > 0 else 0.0
    return IdentityRow(ident, g, m, t, a, b, lhs, rhs, rel, rel <= EQ_TOL or diff <= 1e-14, "eq")


def _le_row(ident, g, m, t, a, b, lhs, rhs) -> IdentityRow:
    slack = lhs - rhs
    return IdentityRow(ident, g, m, t, a, b, lhs, rhs, slack, slack <= INEQ_SLACK, "le")


DEFAULT_PAIRS = ((1.0, 2.0), (2.0, 10.0), (10.0, 100.0), (1.0, 1000.0))


def verify_identities(ctx: EstContext, m_max: int, t_samples: Sequence[float],
                      a_b_pairs: Sequence[tuple] = DEFAULT_PAIRS,
                      include: str = "all") -> IdentityReport:
    """Check the identities and inequalities between the estimating functions.

    ``include`` is ``"all"``, ``"eq"`` (equalities only) or ``"ineq"``.
    Every (item, parameters) tuple appears exactly once in the report.
    """
    _check_m(m_max)
    _check_t(list(t_samples))
    for a, b in a_b_pairs:
        if not 1.0 <= a <= b:
            raise DomainError("pairs must satisfy 1 <= a <= b")
    g = ctx.gamma
    o = _Oracle(g)
    rep = IdentityReport()
    do_eq = include in ("all", "eq")
    do_le = include in ("all", "ineq")
    p_ok = lambda m: (m + 2) * g > 1.0  # noqa: E731
    lt = {t: math.log(t) for t in t_samples}

    for t in t_samples:
        L = lt[t]
        h0, h = o.h0(L), o.h(L)
        if do_eq:
            rep.extend([
                _eq_row("h-closed-form", g, 0, t, t, t, h, h0 / t + t**-g / g),
                _eq_row("h-from-h0", g, 0, t, t, t, o.quad(lambda u: math.exp(-u) * o.h0(u), L, math.inf), h),
            ])
            for m in range(m_max + 1):
                rep.checked.append(_eq_row(
                    "Q-from-N", g, m, t, t, t,
                    o.quad(lambda u, m=m: math.exp(-u) * o.N(m, u), L, math.inf), o.Q(m, L)))
                rep.checked.append(_eq_row(
                    "N-recursion", g, m, t, t, t,
                    o.quad(lambda u, m=m: math.exp(-u) * o.h0(u) * o.N(m, u), 0.0, L),
                    o.N(m + 1, L) - h * o.N(m, L)))
                if p_ok(m):
                    rep.checked.append(_eq_row(
                        "P-from-h0-N", g, m, t, t, t,
                        o.quad(lambda u, m=m: math.exp(-u) * o.h0(u) * o.N(m, u), L, math.inf), o.P(m, L)))
        if not do_le:
            continue
        rows = []
        rows.append(_le_row("h-lower", g, 0, t, t, t, max(t**-g, 1.0 / t) / g, h))
        if not o.log_branch:
            rows.append(_le_row("h-upper", g, 0, t, t, t, h, max(t**-g / g, 1.0 / t) / abs(1.0 - g)))
        for m in range(m_max + 1):
            for i in range(m + 1):
                j = m - i
                if j >= 1:
                    rows.append(_le_row(f"N-index-order[i={i},j={j}]", g, m, t, t, t, o.N(m, L), g**-j * o.N(i, L)))
                    rows.append(_le_row(f"Q-index-order[i={i},j={j}]", g, m, t, t, t, o.Q(m, L), g**-j * o.Q(i, L)))
                rows.append(_le_row(f"N-by-h0[i={i},j={j}]", g, m, t, t, t, g**-j * o.N(i, L), g**-m * h0))
                rows.append(_le_row(f"Q-by-h[i={i},j={j}]", g, m, t, t, t, g**-j * o.Q(i, L), g**-m * h))
            gm = (m + 1) * g
            rows.append(_le_row("N-scaled-lower", g, m, t, t, t, g**-m * h0_closed(gm, t), o.N(m, L)))
            rows.append(_le_row("Q-scaled-lower", g, m, t, t, t, g**-m * h_closed(gm, t), o.Q(m, L)))
            if m >= 1 and g <= 0.95:
                up = (1.0 - g) ** -m * g**-m
                rows.append(_le_row("N-scaled-upper", g, m, t, t, t, o.N(m, L), up * h0_closed(gm, t)))
                rows.append(_le_row("Q-scaled-upper", g, m, t, t, t, o.Q(m, L), up * h_closed(gm, t)))
            if p_ok(m):
                base = g ** -(m + 1) * (t**-g * h0_closed(gm, t) + t ** (1 - (m + 2) * g) / ((m + 2) * g - 1))
                rows.append(_le_row("P-lower", g, m, t, t, t, base, o.P(m, L)))
                if not o.log_branch:
                    rows.append(_le_row("P-upper", g, m, t, t, t, o.P(m, L), (1.0 - g) ** -(m + 1) * base))
                rows.append(_le_row("P-over-weighted-Q", g, m, t, t, t,
                                    o.quad(lambda u, m=m: math.exp((1 - g) * u) * o.Q(m, u), L, math.inf),
                                    o.P(m, L)))
                rows.append(_le_row("R-bound", g, m, t, t, t, o.R(m, L), c_const(ctx, m) * h * o.Q(m, L)))
                if m >= 1:
                    rows.append(_le_row(
                        "weighted-hQ-tail", g, m, t, t, t,
                        o.quad(lambda u, m=m: math.exp((1 - g) * u) * o.h(u) * o.Q(m - 1, u), L, math.inf),
                        o.quad(lambda u, m=m: math.exp((1 - g) * u) * o.Q(m, u), L, math.inf)))
            lhs36 = o.quad(lambda u, m=m: math.exp(-u) * o.h0(u) * o.N(m, u), 0.0, L)
            rows.append(_le_row("N-recursion-bound", g, m, t, t, t, lhs36, o.N(m + 1, L)))
            rows.append(_le_row("weighted-Q-head", g, m, t, t, t,
                                o.quad(lambda u, m=m: math.exp((1 - g) * u) * o.Q(m, u), 0.0, L),
                                o.N(m + 1, L)))
            if m >= 1:
                rows.append(_le_row("weighted-hQ-head", g, m, t, t, t,
                                    o.quad(lambda u, m=m: math.exp((1 - g) * u) * o.h(u) * o.Q(m - 1, u), 0.0, L),
                                    o.N(m + 1, L)))
                rows.append(_le_row("hQ-by-Q", g, m, t, t, t, h * o.Q(m - 1, L), 2.0 * o.Q(m, L)))
        rep.extend(rows)

    if do_le:
        for a, b in a_b_pairs:
            la, lb = math.log(a), math.log(b)
            rows = []
            for m in range(m_max + 1):
                for i in range(m + 1):
                    j = m - i
                    tag = f"[i={i},j={j}]"
                    rows.append(_le_row("NN-product" + tag, g, m, a, a, b,
                                        o.quad(lambda u, i=i, j=j: math.exp(-u) * o.N(i, u) * o.N(j, u), la, lb),
                                        o.quad(lambda u, m=m: math.exp(-u) * o.h0(u) * o.N(m, u), la, lb)))
                    mid39 = o.quad(lambda u, m=m: math.exp(-u) * o.h(u) * o.N(m, u), la, lb)
                    rows.append(_le_row("NQ-product" + tag, g, m, a, a, b,
                                        o.quad(lambda u, i=i, j=j: math.exp(-u) * o.N(i, u) * o.Q(j, u), la, lb),
                                        mid39))
                    rows.append(_le_row("hN-by-N" + tag, g, m, a, a, b, mid39,
                                        o.quad(lambda u, m=m: math.exp(-u) * o.N(m + 1, u), la, lb)))
                    rows.append(_le_row("QQ-product" + tag, g, m, a, a, b,
                                        o.quad(lambda u, i=i, j=j: math.exp((1 - g) * u) * o.Q(i, u) * o.Q(j, u),
                                               la, lb),
                                        o.quad(lambda u, m=m: math.exp((1 - g) * u) * o.h(u) * o.Q(m, u), la, lb)))
                dh0 = o.h0(lb) - o.h0(la)
                rows.append(_le_row("Q-interval", g, m, a, a, b,
                                    o.quad(lambda u, m=m: math.exp((1 - g) * u) * o.Q(m, u), la, lb),
                                    o.Q(m, la) * dh0))
                if m >= 1:
                    rows.append(_le_row("hQ-interval", g, m, a, a, b,
                                        o.quad(lambda u, m=m: math.exp((1 - g) * u) * o.h(u) * o.Q(m - 1, u),
                                               la, lb),
                                        2.0 * o.Q(m, la) * dh0))
            rep.extend(rows)
    return rep


@dataclass
class ClosedFormRow:
    name: str
    gamma: float
    t: float
    closed: float
    quadrature: float
    rel_error: float
    passed: bool


def closed_form_agreement(seed: int = 0, n_points: int = 20, tol: float = EQ_TOL) -> list:
    """Compare closed forms of h0, h, P_0 with quadrature of their definitions.

    Points are random: gamma uniform in (0, 1] (in (1/2, 1] for P_0 so that
    it converges) and t log-uniform in [1, 1e4].
    """
    rng = np.random.default_rng(seed)
    rows = []
    for name in ("h0", "h", "P0"):
        lo = 0.5 if name == "P0" else 0.0
        for _ in range(n_points):
            g = float(1.0 - (1.0 - lo) * rng.random())  # in (lo, 1]
            if name == "P0":
                g = max(g, 0.5 + 1e-3)
            t = float(10.0 ** (4.0 * rng.random()))
            o = _Oracle(g)
            if name == "h0":
                closed, quad = h0_closed(g, t), o.h0_by_definition(t)
            elif name == "h":
                closed, quad = h_closed(g, t), o.h_by_definition(t)
            else:
                closed, quad = p0_closed(EstContext(g), t), o.p0_by_definition(t)
            scale = max(abs(closed), abs(quad))
            rel = abs(closed - quad) / scale if scale > 0 else 0.0
            rows.append(ClosedFormRow(name, g, t, closed, quad, rel, rel <= tol or abs(closed - quad) <= 1e-14))
    return rows
