"""Rate tables: a numerator trajectory over an envelope, with sup and drift."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def node_index(times: np.ndarray, t: float, rel: float = 1e-9) -> int:
    i = int(np.argmin(np.abs(np.log(times) - np.log(t))))
    if abs(times[i] - t) > rel * t:
        raise ValueError(f"t={t:g} is not a grid node")
    return i


def nearest_index(times: np.ndarray, t: float) -> int:
    return int(np.argmin(np.abs(np.log(times) - np.log(t))))


def drift_factor(times: np.ndarray, ratio: np.ndarray, t_hi: float) -> float:
    """``ratio(t_hi) / ratio(t_hi / 10)`` at the nearest nodes."""
    hi = nearest_index(times, t_hi)
    lo = nearest_index(times, t_hi / 10.0)
    if ratio[lo] == 0.0:
        return 1.0 if ratio[hi] == 0.0 else float("inf")
    return float(ratio[hi] / ratio[lo])


@dataclass
class RateTable:
    name: str
    t: np.ndarray
    numerator: np.ndarray
    envelope: np.ndarray
    t_hi: float

    @property
    def ratio(self) -> np.ndarray:
        env = np.asarray(self.envelope, dtype=float)
        num = np.asarray(self.numerator, dtype=float)
        out = np.zeros_like(num)
        nz = env > 0
        out[nz] = num[nz] / env[nz]
        return out

    def window(self, t_lo: float | None = None, t_hi: float | None = None) -> np.ndarray:
        t_hi = self.t_hi if t_hi is None else t_hi
        lo = self.t[0] if t_lo is None else t_lo
        return (self.t >= lo * (1 - 1e-12)) & (self.t <= t_hi * (1 + 1e-12))

    @property
    def sup(self) -> float:
        r = self.ratio[self.window()]
        return float(r.max()) if r.size else 0.0

    @property
    def drift(self) -> float:
        return drift_factor(self.t, self.ratio, self.t_hi)

    def rows(self):
        for t, a, b, r in zip(self.t, self.numerator, self.envelope, self.ratio):
            yield float(t), float(a), float(b), float(r)
