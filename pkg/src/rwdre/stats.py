"""Monte Carlo estimates and small numerical helpers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with standard error and replica count."""

    mean: float
    se: float
    n: int
    seed: int | None = None

    def within(self, target: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - target) <= k * self.se + slack

    def z(self, target: float) -> float:
        if self.se == 0:
            return 0.0 if self.mean == target else math.copysign(math.inf, self.mean - target)
        return (self.mean - target) / self.se

    def __sub__(self, other: "Estimate") -> "Estimate":
        return Estimate(self.mean - other.mean, math.hypot(self.se, other.se), min(self.n, other.n))

    def scaled(self, a: float) -> "Estimate":
        return Estimate(a * self.mean, abs(a) * self.se, self.n, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def __str__(self):
        return f"{self.mean:.6g} ± {self.se:.3g} (n={self.n})"


def exact(value: float) -> Estimate:
    return Estimate(float(value), 0.0, 0)


def estimate(samples: Iterable[float], seed: int | None = None) -> Estimate:
    x = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
    n = x.size
    if n == 0:
        return Estimate(math.nan, math.nan, 0, seed)
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return Estimate(float(np.mean(x)), se, n, seed)


def joint_se(*ests: Estimate) -> float:
    return math.sqrt(sum(e.se**2 for e in ests))


def agree(a: Estimate, b: Estimate, k: float = 3.0) -> bool:
    return abs(a.mean - b.mean) <= k * joint_se(a, b)


def batch_means(series: Sequence[float], n_batches: int = 20) -> Estimate:
    """Mean with non-overlapping batch-means standard error."""
    x = np.asarray(series, dtype=float)
    if x.size < n_batches:
        raise ValueError(f"need at least {n_batches} observations for batch means")
    m = x.size // n_batches
    b = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return Estimate(float(x.mean()), float(b.std(ddof=1) / math.sqrt(n_batches)), int(x.size))


class Welford:
    """Streaming mean/variance with an exact pairwise merge."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def merge(self, other: "Welford") -> "Welford":
        out = Welford()
        out.n = self.n + other.n
        if out.n == 0:
            return out
        d = other.mean - self.mean
        out.mean = self.mean + d * other.n / out.n
        out.m2 = self.m2 + other.m2 + d * d * self.n * other.n / out.n
        return out

    @property
    def var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else math.nan

    def estimate(self) -> Estimate:
        return Estimate(self.mean, math.sqrt(self.var / self.n) if self.n > 1 else math.inf, self.n)


def trapezoid(y: Sequence[float], t: Sequence[float]) -> float:
    return float(np.trapezoid(y, t)) if hasattr(np, "trapezoid") else float(np.trapz(y, t))


def cumulative_trapezoid(y: Sequence[float], t: Sequence[float]) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def trapezoid_se(se: Sequence[float], t: Sequence[float]) -> float:
    """Standard error of a trapezoid integral of independent pointwise errors
    (conservative upper bound under positive correlation is the plain sum)."""
    se = np.asarray(se, dtype=float)
    t = np.asarray(t, dtype=float)
    w = np.zeros_like(se)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return float(np.sum(w * se))


@dataclass(frozen=True)
class ExpFit:
    rate: float
    amplitude: float
    residual: float

    def tail_integral(self, t0: float, power: int = 0, growth: float = 0.0) -> float:
        """int_{t0}^inf t^power * e^{growth t} * A e^{-rate t} dt (inf if not decaying)."""
        k = self.rate - growth
        if k <= 0 or not math.isfinite(k):
            return math.inf
        # int_{t0}^inf t^n e^{-k t} dt = e^{-k t0} sum_j n!/(n-j)! t0^{n-j} / k^{j+1}
        s = sum(math.perm(power, j) * t0 ** (power - j) / k ** (j + 1) for j in range(power + 1))
        return self.amplitude * math.exp(-k * t0) * s


def fit_exponential_tail(t: Sequence[float], y: Sequence[float], fraction: float = 1 / 3) -> ExpFit:
    """Least-squares fit of log y = log A - rate t on the last part of the grid."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    start = int(len(t) * (1 - fraction))
    tt, yy = t[start:], y[start:]
    mask = yy > 0
    if mask.sum() < 2:
        return ExpFit(math.inf, 0.0, 0.0)
    tt, ly = tt[mask], np.log(yy[mask])
    slope, intercept = np.polyfit(tt, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * tt + intercept)) ** 2)))
    return ExpFit(float(-slope), float(math.exp(intercept)), resid)
