"""The environment seen from the walker.

Ergodic averages of the environment process, integrals of semigroup
differences started from two configurations, their exponentially or
polynomially weighted versions, and the rate-continuity comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coupling import Walker, decoupling_lower_bound, simulate_walk
from .environments import EnvironmentModel, decay_integral, origin_overrides, phi_weight
from .errors import ConfigError
from .lattice import LocalFunction, RateFamily, rate_difference_norm, triple_norm
from .rng import RandomStream, run_replicas
from .stats import Estimate, cumulative_trapezoid, estimate, fit_exponential_tail, trapezoid


@dataclass(frozen=True)
class ErgodicAverage:
    observable: str
    burn_in: float
    horizon: float
    value: Estimate
    epoch_value: Estimate
    n_batches: int
    replicas: int


def _init_arg(init, model):
    if init is None or (isinstance(init, str) and init == "stationary"):
        return None
    if isinstance(init, str):
        v = {"ones": 1.0, "zeros": 0.0}[init]
        return np.full(model.geometry.n_sites, v)
    return np.asarray(getattr(init, "values", init), dtype=float)


def estimate_mu_ep(model: EnvironmentModel, alpha: RateFamily, f: LocalFunction, burn_in: float, horizon: float,
                   replicas: int, seed: int, init=None, n_batches: int = 20, threads: int = 1,
                   tag: str = "mu_ep") -> ErgodicAverage:
    """Time average of f(theta_{-X_t} eta_t) over [burn_in, horizon].

    The standard error comes from non-overlapping batch means (``n_batches``
    per replica).  A second estimator averages f at the walker-clock epochs,
    which are Poisson times independent of the path and so sample the same
    time average.
    """
    if horizon <= burn_in:
        raise ConfigError("horizon must exceed burn_in")
    if n_batches < 20:
        raise ConfigError("batch means need at least 20 batches")
    cps = np.linspace(burn_in, horizon, n_batches + 1)
    init_arr = _init_arg(init, model)
    o = (0,) * model.d

    def task(i):
        stream = RandomStream.from_seed(seed, tag, i)
        res = simulate_walk(model, [Walker(alpha, 0, o)], horizon, stream, init=init_arr,
                            integrands=[(0, f)], observe_times=cps, integrate_from=burn_in)
        run = [ob[3][0] for ob in res.observations]
        batches = np.diff(run) / np.diff(cps)
        return batches, res.epoch_means[0]

    out = run_replicas(task, replicas, threads)
    batches = np.concatenate([b for b, _ in out])
    per_rep = np.array([b.mean() for b, _ in out])
    bse = float(np.std(batches, ddof=1) / math.sqrt(batches.size)) if batches.size > 1 else math.inf
    if replicas > 1:
        bse = max(bse, float(np.std(per_rep, ddof=1) / math.sqrt(replicas)))
    value = Estimate(float(batches.mean()), bse, replicas, seed)
    eps = np.array([e for _, e in out if math.isfinite(e)])
    epoch = estimate(eps, seed) if eps.size else Estimate(math.nan, math.nan, 0, seed)
    return ErgodicAverage(getattr(f, "name", "f"), burn_in, horizon, value, epoch, n_batches, replicas)


def default_grid(horizon: float, n: int = 64, first: float | None = None) -> np.ndarray:
    first = horizon / 2000 if first is None else first
    return np.concatenate([[0.0], np.geomspace(first, horizon, n - 1)])


@dataclass(frozen=True)
class SemigroupDifference:
    t: tuple
    mean_diff: tuple            # |E f(start 1) - E f(start 2)| at each t (coupled)
    signed: tuple
    se: tuple
    weight: tuple
    partial_integral: tuple
    integral: Estimate
    independent: Estimate       # same integral from uncoupled runs
    tail: float
    flag: str
    bound: float | None
    decay_rate: float

    def rows(self) -> list[dict]:
        return [{"t": t, "mean_diff": m, "se": s, "weight": w, "partial_integral": p}
                for t, m, s, w, p in zip(self.t, self.mean_diff, self.se, self.weight, self.partial_integral)]

    @property
    def within_bound(self) -> bool | None:
        if self.bound is None:
            return None
        return self.integral.mean <= self.bound + 3 * self.integral.se


def _pair_setup(model, pair):
    if pair is None:
        return None, origin_overrides(model, (1.0, 0.0))
    if isinstance(pair, dict):
        return None, pair
    a, b = pair
    a = np.asarray(getattr(a, "values", a), dtype=float)
    b = np.asarray(getattr(b, "values", b), dtype=float)
    return [a, b], None


def _integral_se(rows: np.ndarray, t: np.ndarray) -> float:
    if rows.shape[0] < 2:
        return 0.0
    per = np.trapezoid(rows, t, axis=1) if hasattr(np, "trapezoid") else np.trapz(rows, t, axis=1)
    return float(np.std(per, ddof=1) / math.sqrt(rows.shape[0]))


def ca_certificate(model: EnvironmentModel, alpha: RateFamily) -> tuple[float, bool]:
    """C_a = C(alpha) / p(alpha) with the analytic decoupling lower bound for p."""
    p, _, cert_p = decoupling_lower_bound(model, alpha)
    if alpha.is_env_independent:
        # no spread factor and p = 1
        return decay_integral(model, 0.0)
    C, cert = decay_integral(model, alpha.gamma_spread)
    return C / p, cert and cert_p


def semigroup_difference_integral(model: EnvironmentModel, alpha: RateFamily, f: LocalFunction, pair=None,
                                  horizon: float = 10.0, replicas: int = 2000, seed: int = 0,
                                  grid: Sequence[float] | None = None, phi: tuple | None = None, K: float = 1.0,
                                  threads: int = 1, tag: str = "semigroup_integral") -> SemigroupDifference:
    """int_0^T phi(t/K) |S_t f(eta) - S_t f(xi)| dt for the environment process.

    Both starts share clocks and uniforms (two walkers on coupled copies);
    an uncoupled estimate from independent streams is reported alongside.
    """
    t = default_grid(horizon) if grid is None else np.asarray(grid, dtype=float)
    init, overrides = _pair_setup(model, pair)
    o = (0,) * model.d
    walkers = [Walker(alpha, 0, o), Walker(alpha, 1, o)]

    def coupled(i):
        stream = RandomStream.from_seed(seed, tag, i)
        res = simulate_walk(model, walkers, horizon, stream, init=init, overrides=overrides,
                            probes=[(0, f), (1, f)], observe_times=t)
        return [ob[2][0] - ob[2][1] for ob in res.observations]

    def single(copy):
        def task(i):
            stream = RandomStream.from_seed(seed, f"{tag}/independent/{copy}", i)
            res = simulate_walk(model, [Walker(alpha, copy, o)], horizon, stream, init=init,
                                overrides=overrides, probes=[(0, f)], observe_times=t, n_copies=2)
            return [ob[2][0] for ob in res.observations]
        return task

    D = np.array(run_replicas(coupled, replicas, threads))
    m = D.mean(axis=0)
    se = D.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros_like(m)
    A = np.array(run_replicas(single(0), replicas, threads))
    B = np.array(run_replicas(single(1), replicas, threads))
    mi = np.abs(A.mean(axis=0) - B.mean(axis=0))

    absm = np.abs(m)
    w = np.ones_like(t) if phi is None else np.array([phi_weight(phi, K)(s) for s in t])
    partial = cumulative_trapezoid(w * absm, t)
    head = float(partial[-1])
    # time points are strongly correlated within a replica, so the error is
    # taken from the spread of per-replica integrals
    head_se = _integral_se(w * D, t)
    ind = trapezoid(w * mi, t)
    ind_se = math.hypot(_integral_se(w * A, t), _integral_se(w * B, t))

    # decay of the difference, fitted where it clears the noise
    signif = absm > 3 * np.maximum(se, 1e-300)
    signif[0] = signif[0] and absm[0] > 0
    rate = math.inf
    if signif.sum() >= 4:
        tt, yy = t[signif], absm[signif]
        slope, _ = np.polyfit(tt, np.log(yy), 1)
        rate = float(-slope)
    growth = 0.0 if phi is None or phi[0] != "exp" else phi[1] / K
    flag = ""
    tail = 0.0
    if phi is not None and phi[0] == "exp" and growth >= rate:
        flag = "divergent"
        tail = math.inf
    elif signif.any() and absm[-1] > 3 * se[-1] and math.isfinite(rate) and rate > growth:
        fit = fit_exponential_tail(t, absm)
        tail = fit.tail_integral(t[-1], 0, growth)
    if not flag and head > 0 and head_se > 0.25 * head:
        flag = "inconclusive"
    bound = None
    ca, cert = ca_certificate(model, alpha)
    if phi is None and cert:
        bound = ca * triple_norm(f, alpha.space)
    integral = Estimate(head + (tail if math.isfinite(tail) else 0.0), head_se, replicas, seed)
    return SemigroupDifference(tuple(t), tuple(absm), tuple(m), tuple(se), tuple(w), tuple(partial), integral,
                               Estimate(ind, ind_se, replicas, seed), tail, flag, bound, rate)


def phi_weighted_integral(model: EnvironmentModel, alpha: RateFamily, f: LocalFunction, phi: tuple, K: float,
                          pair=None, horizon: float = 10.0, replicas: int = 2000, seed: int = 0,
                          threads: int = 1) -> SemigroupDifference:
    """Weighted version with phi(t/K); phi is ("exp", lam) or ("poly", lam)."""
    if K <= 0:
        raise ConfigError("K must be positive")
    return semigroup_difference_integral(model, alpha, f, pair, horizon, replicas, seed, phi=phi, K=K,
                                         threads=threads, tag="phi_integral")


@dataclass(frozen=True)
class ContinuityCheck:
    lhs: Estimate
    rhs: float
    mu_alpha: Estimate
    mu_alpha_prime: Estimate
    p_alpha: float
    C_alpha: float
    rate_distance: float
    label: str

    @property
    def holds(self) -> bool:
        return self.lhs.mean <= self.rhs + 3 * self.lhs.se


def continuity_bound_check(model: EnvironmentModel, alpha: RateFamily, alpha_prime: RateFamily, f: LocalFunction,
                           burn_in: float = 20.0, horizon: float = 400.0, replicas: int = 64, seed: int = 0,
                           threads: int = 1) -> ContinuityCheck:
    """|mu_alpha(f) - mu_alpha'(f)| against C(alpha)/p(alpha) ||alpha - alpha'||_0 |||f|||.

    Both walkers run on one environment with shared clocks, so the per-replica
    difference of time averages carries the standard error.
    """
    o = (0,) * model.d

    def task(i):
        stream = RandomStream.from_seed(seed, "continuity", i)
        res = simulate_walk(model, [Walker(alpha, 0, o), Walker(alpha_prime, 0, o)], horizon, stream,
                            integrands=[(0, f), (1, f)], integrate_from=burn_in)
        span = horizon - burn_in
        return res.integrals[0] / span, res.integrals[1] / span

    out = np.array(run_replicas(task, replicas, threads))
    a, b = estimate(out[:, 0], seed), estimate(out[:, 1], seed)
    diff = estimate(out[:, 0] - out[:, 1], seed)
    lhs = Estimate(abs(diff.mean), diff.se, replicas, seed)
    dist = rate_difference_norm(alpha, alpha_prime)
    tf = triple_norm(f, alpha.space)
    if alpha.is_env_independent:
        p = 1.0
        rate = model.decay_rate()
        C, cert = (1.0 / rate, True) if rate else (math.inf, False)
    else:
        p, _, cert_p = decoupling_lower_bound(model, alpha)
        C, cert = decay_integral(model, alpha.gamma_spread)
        cert = cert and cert_p
    rhs = C / p * dist * tf
    return ContinuityCheck(lhs, rhs, a, b, p, C, dist, "certified" if cert else "uncertified")
