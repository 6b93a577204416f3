"""Periodic pseudospectral toolbox on the torus [0, L)^n.

Arrays carry the n spatial axes last, so a trajectory stored as
``(nodes, N, N, N)`` goes through the same helpers as a single field.
Transforms are unnormalised ``numpy.fft``; every pointwise product is
projected back onto the 2/3-rule band ``|xi_i| <= N // 3``.
"""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np


class GridError(ValueError):
    """Invalid grid parameters, mismatched grids or unresolvable derivative orders."""


def admissible(k: int, ell: int, n: int, mu: float) -> bool:
    """Whether the regularity pair ``(k, ell)`` closes the bilinear estimates."""
    if k < 0 or ell < 0:
        return False
    if not (k <= ell and ell > n / 2):
        return False
    lhs = ell + 2 + mu
    cap = min(n / 2 + 2 * k, n + k)
    if lhs > cap:
        return False
    if lhs == n + k and not k > n / 2:
        return False
    if n % 2 == 0 and not (n / 2 + 3 + mu < cap):
        return False
    return True


@dataclass(frozen=True)
class ModelParams:
    n: int = 3
    mu: float = 1.0
    gamma: float = 0.6
    lam: float = 1.0
    L: float = 2 * math.pi * 8
    N: int = 16
    k: int = 2
    ell: int = 2
    enforce_hypotheses: bool = True

    def __post_init__(self):
        if self.N <= 0 or self.N % 2:
            raise GridError("N must be a positive even integer")
        if not self.L > 0:
            raise GridError("L must be positive")
        if not (0.0 < self.gamma <= 1.0):
            raise GridError("gamma must lie in (0,1]")
        if self.enforce_hypotheses:
            if self.n < 3:
                raise GridError("enforce_hypotheses needs n >= 3 (set enforce_hypotheses=False for smoke tests)")
            if not (0.0 < self.mu <= self.n - 2):
                raise GridError("enforce_hypotheses needs 0 < mu <= n-2")
            if not admissible(self.k, self.ell, self.n, self.mu):
                raise GridError(f"(k, ell) = ({self.k}, {self.ell}) is not admissible for n={self.n}, mu={self.mu}")
        elif self.n < 1 or not self.mu > 0:
            raise GridError("need n >= 1 and mu > 0")

    # -- spectral metadata ----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.n, 0))

    @property
    def cell_volume(self) -> float:
        return (self.L / self.N) ** self.n

    @property
    def max_order(self) -> int:
        """Largest derivative order treated as resolved."""
        return self.N // 3

    @cached_property
    def modes(self) -> tuple:
        """Integer frequencies per axis, broadcast-shaped."""
        base = np.fft.fftfreq(self.N, d=1.0 / self.N)
        out = []
        for i in range(self.n):
            shape = [1] * self.n
            shape[i] = self.N
            out.append(base.reshape(shape))
        return tuple(out)

    @cached_property
    def wavenumbers(self) -> tuple:
        unit = 2 * math.pi / self.L
        return tuple(unit * m for m in self.modes)

    @cached_property
    def ik(self) -> tuple:
        """First-derivative symbols with the Nyquist entry zeroed."""
        out = []
        for m, kk in zip(self.modes, self.wavenumbers):
            sym = 1j * kk * (np.abs(m) != self.N // 2)
            out.append(sym)
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(kk**2 for kk in self.wavenumbers)

    @cached_property
    def dealias(self) -> np.ndarray:
        cut = self.N // 3
        mask = np.ones(self.shape, dtype=bool)
        for m in self.modes:
            mask = mask & (np.abs(m) <= cut)
        return mask

    def riesz_symbol(self, exponent: float) -> np.ndarray:
        return _riesz_symbol(self, exponent)

    def coords(self) -> tuple:
        x = np.arange(self.N) * (self.L / self.N)
        return tuple(np.meshgrid(*([x] * self.n), indexing="ij"))


@lru_cache(maxsize=32)
def _riesz_symbol(grid: ModelParams, exponent: float) -> np.ndarray:
    k2 = grid.k2
    sym = np.zeros_like(k2)
    nz = k2 > 0
    sym[nz] = k2[nz] ** (exponent / 2.0)
    sym.setflags(write=False)
    return sym


# ---------------------------------------------------------------------------
# field types


@dataclass(frozen=True)
class ProfileField:
    grid: ModelParams
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise GridError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("field values must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class PhaseField:
    grid: ModelParams
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            raise GridError("phase fields are real")
        v = v.astype(float)
        if v.shape != self.grid.shape:
            raise GridError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("field values must be finite")
        object.__setattr__(self, "values", v)


def _values(f):
    return f.values if isinstance(f, (ProfileField, PhaseField)) else np.asarray(f)


def _same_grid(*fields):
    grids = {f.grid for f in fields if isinstance(f, (ProfileField, PhaseField))}
    if len(grids) > 1:
        raise GridError("fields live on different grids")


# ---------------------------------------------------------------------------
# array-level kernels (batched over leading axes)


def fft(grid: ModelParams, a) -> np.ndarray:
    return np.fft.fftn(a, axes=grid.axes)


def ifft(grid: ModelParams, a) -> np.ndarray:
    return np.fft.ifftn(a, axes=grid.axes)


def project(grid: ModelParams, a) -> np.ndarray:
    """Keep only the dealiased band; real input stays real."""
    out = ifft(grid, fft(grid, a) * grid.dealias)
    return out.real if not np.iscomplexobj(a) else out


def gradient(grid: ModelParams, a) -> np.ndarray:
    """Spectral gradient, components stacked on a new leading axis."""
    ahat = fft(grid, a)
    comps = [ifft(grid, ahat * s) for s in grid.ik]
    out = np.stack(comps)
    return out.real if not np.iscomplexobj(a) else out


def laplacian(grid: ModelParams, a) -> np.ndarray:
    out = ifft(grid, -grid.k2 * fft(grid, a))
    return out.real if not np.iscomplexobj(a) else out


def transport_generator(grid: ModelParams, phi, w) -> np.ndarray:
    """Dealiased ``(2 grad phi . grad + lap phi) w``."""
    gphi = gradient(grid, phi)
    gw = gradient(grid, w)
    lap = laplacian(grid, phi)
    raw = 2.0 * np.sum(gphi * gw, axis=0) + lap * w
    return project(grid, raw)


def grad_dot(grid: ModelParams, phi, chi) -> np.ndarray:
    """Dealiased ``grad phi . grad chi``."""
    return project(grid, np.sum(gradient(grid, phi) * gradient(grid, chi), axis=0))


def riesz_array(grid: ModelParams, a, exponent: float | None = None) -> np.ndarray:
    if exponent is None:
        exponent = grid.mu - grid.n
    if not exponent < 0:
        raise GridError("Riesz exponent must be negative")
    out = ifft(grid, fft(grid, a) * grid.riesz_symbol(float(exponent)))
    return out.real if not np.iscomplexobj(a) else out


def g0_array(grid: ModelParams, w1, w2) -> np.ndarray:
    """``lam * riesz(Re(w1 conj w2))`` on the dealiased band; symmetric bit for bit."""
    w1 = np.asarray(w1)
    w2 = np.asarray(w2)
    density = w1.real * w2.real + w1.imag * w2.imag
    dhat = fft(grid, density) * grid.dealias
    return grid.lam * ifft(grid, dhat * grid.riesz_symbol(grid.mu - grid.n)).real


def g0_dropped_mean(grid: ModelParams, w1, w2) -> np.ndarray:
    """Spatial mean of ``lam Re(w1 conj w2)``: the zero-mode density that the torus convention drops."""
    density = np.asarray(w1).real * np.asarray(w2).real + np.asarray(w1).imag * np.asarray(w2).imag
    return grid.lam * density.mean(axis=grid.axes)


@lru_cache(maxsize=64)
def _multi_index_weights(grid: ModelParams, order: int) -> tuple:
    """|xi^alpha|^2 for every multi-index of the given order."""
    out = []
    for alpha in itertools.product(range(order + 1), repeat=grid.n):
        if sum(alpha) != order:
            continue
        wt = np.ones(grid.shape)
        for a_i, kk in zip(alpha, grid.wavenumbers):
            if a_i:
                wt = wt * np.abs(kk) ** (2 * a_i)
        out.append(wt)
    return tuple(out)


def _check_order(grid: ModelParams, order: int):
    if order < 0 or order > grid.max_order:
        raise GridError(f"derivative order {order} is not resolvable on N={grid.N} (max {grid.max_order})")


def seminorm2(grid: ModelParams, a, order: int) -> np.ndarray:
    """``sum_{|alpha| = order} ||d^alpha a||_2`` via Parseval, batched."""
    _check_order(grid, order)
    power = np.abs(fft(grid, a)) ** 2
    scale = grid.cell_volume / grid.N**grid.n
    total = 0.0
    for wt in _multi_index_weights(grid, order):
        total = total + np.sqrt(scale * np.sum(power * wt, axis=grid.axes))
    return total


def l2_norm_array(grid: ModelParams, a) -> np.ndarray:
    return np.sqrt(grid.cell_volume * np.sum(np.abs(a) ** 2, axis=grid.axes))


def hk_norm_array(grid: ModelParams, a, k: int) -> np.ndarray:
    _check_order(grid, k)
    power = np.abs(fft(grid, a)) ** 2
    scale = grid.cell_volume / grid.N**grid.n
    total = 0.0
    for j in range(k + 1):
        for wt in _multi_index_weights(grid, j):
            total = total + np.sqrt(scale * np.sum(power * wt, axis=grid.axes))
    return total


def _lr_norm(grid: ModelParams, a, r: float) -> np.ndarray:
    if math.isinf(r):
        return np.max(np.abs(a), axis=grid.axes)
    return (grid.cell_volume * np.sum(np.abs(a) ** r, axis=grid.axes)) ** (1.0 / r)


def yl_norm_array(grid: ModelParams, phi, ell: int) -> np.ndarray:
    n = grid.n
    ell0 = n // 2
    if ell < ell0 - 1:
        raise GridError(f"ell must be at least {ell0 - 1} for n={n}")
    _check_order(grid, ell + 2)
    r0 = 2 * n if n % 2 else math.inf
    grads = gradient(grid, phi)
    grad_term = sum(_lr_norm(grid, g, r0) for g in grads)
    return (_lr_norm(grid, phi, math.inf) + grad_term
            + seminorm2(grid, phi, ell0 + 1) + seminorm2(grid, phi, ell + 2))


# ---------------------------------------------------------------------------
# typed operations


def riesz_apply(f, exponent: float | None = None):
    vals = riesz_array(f.grid, f.values, exponent)
    return type(f)(f.grid, vals)


def g0(w1: ProfileField, w2: ProfileField) -> PhaseField:
    _same_grid(w1, w2)
    return PhaseField(w1.grid, g0_array(w1.grid, w1.values, w2.values))


def hk_norm(w, k: int) -> float:
    return float(hk_norm_array(w.grid, w.values, k))


def yl_norm(phi: PhaseField, ell: int) -> float:
    return float(yl_norm_array(phi.grid, phi.values, ell))


def l2_norm(w) -> float:
    return float(l2_norm_array(w.grid, w.values))


def random_band_limited(seed: int, radius_modes: int, target_hk: float, k: int,
                        grid: ModelParams, real: bool = False):
    """Seeded Gaussian spectrum on ``|xi|_inf <= radius_modes``, scaled to a target H^k norm.

    Returns a ``ProfileField``, or a ``PhaseField`` when ``real`` is set.
    """
    if radius_modes > grid.N // 3:
        raise GridError("radius_modes must not exceed N // 3")
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    mask = np.ones(grid.shape, dtype=bool)
    msq = np.zeros(grid.shape)
    for m in grid.modes:
        mask = mask & (np.abs(m) <= radius_modes)
        msq = msq + m**2
    radius = max(radius_modes, 1)
    coef = coef * mask * np.exp(-msq / radius**2)
    vals = ifft(grid, coef)
    if real:
        vals = vals.real
    cls = PhaseField if real else ProfileField
    if target_hk == 0:
        return cls(grid, np.zeros(grid.shape))
    norm = float(hk_norm_array(grid, vals, k))
    return cls(grid, vals * (target_hk / norm))


# ---------------------------------------------------------------------------
# snapshot files

SNAPSHOT_MAGIC = b"HSL1"


def save_snapshot(path, field) -> None:
    g = field.grid
    vals = np.asarray(field.values, dtype=complex)
    inter = np.empty(vals.size * 2, dtype="<f8")
    inter[0::2] = vals.ravel().real
    inter[1::2] = vals.ravel().imag
    with open(Path(path), "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<qqd", g.n, g.N, g.L))
        fh.write(inter.tobytes())


def load_snapshot(path, grid: ModelParams, phase: bool = False):
    data = Path(path).read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise GridError(f"{path}: not a snapshot file")
    n, N, L = struct.unpack("<qqd", data[4:28])
    if (n, N) != (grid.n, grid.N) or not math.isclose(L, grid.L):
        raise GridError(f"{path}: snapshot grid (n={n}, N={N}, L={L}) does not match")
    raw = np.frombuffer(data[28:], dtype="<f8")
    if raw.size != 2 * N**n:
        raise GridError(f"{path}: truncated snapshot")
    vals = (raw[0::2] + 1j * raw[1::2]).reshape(grid.shape)
    if phase:
        return PhaseField(grid, vals.real.copy())
    return ProfileField(grid, vals)
