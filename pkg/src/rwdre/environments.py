"""Environment dynamics on the torus and their shared-randomness couplings.

Three translation-invariant models are provided:

* ``independent_refresh``: every site rings at rate r and is redrawn from nu.
* ``weak_glauber``: binary spins with nearest-neighbour heat-bath updates.
* ``deterministic_relaxation``: every site relaxes to a* at rate kappa.

Samplers hold one or more copies of the environment driven by the same
random clocks, which is the basic Markovian coupling.  A refresh sets all
copies to the same nu-draw; a Glauber update uses one uniform for all
copies; the deterministic flow needs no randomness.

The refresh sampler is lazy: a site is only simulated when it is read.  On
first contact at time t the site keeps its initial value with probability
e^{-rt} and otherwise carries a fresh draw, after which its ring times
continue as a Poisson process.  This is exact in law and lets walkers run
on very large tori at the cost of the sites they actually visit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ModelError
from .lattice import BINARY, UNIT, Configuration, SiteSpace, TorusGeometry, origin
from .rng import RandomStream, run_replicas
from .stats import ExpFit, fit_exponential_tail, trapezoid

KINDS = ("independent_refresh", "weak_glauber", "deterministic_relaxation")


@dataclass(frozen=True)
class EnvironmentModel:
    kind: str
    geometry: TorusGeometry
    r: float = 1.0
    nu_p: float = 0.5
    beta_int: float = 0.0
    kappa: float = 1.0
    a_star: float = 0.0
    space: SiteSpace = BINARY
    glauber_burn_in: float = 10.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown environment kind {self.kind!r}")
        if self.kind in ("independent_refresh", "weak_glauber") and not self.r > 0:
            raise ModelError(f"rate r must be positive, got {self.r}")
        if self.kind == "deterministic_relaxation":
            if not self.kappa > 0:
                raise ModelError(f"kappa must be positive, got {self.kappa}")
            if not 0.0 <= self.a_star <= 1.0:
                raise ModelError("a_star must lie in [0, 1]")
            if self.space.kind != "unit":
                object.__setattr__(self, "space", UNIT)
        if self.kind == "weak_glauber":
            if self.beta_int < 0:
                raise ModelError("beta_int must be nonnegative")
            if self.space.kind != "binary":
                raise ModelError("weak_glauber needs binary sites")
        if not 0.0 <= self.nu_p <= 1.0:
            raise ModelError("nu_p must lie in [0, 1]")

    @property
    def d(self) -> int:
        return self.geometry.d

    @property
    def L(self) -> int:
        return self.geometry.L

    @property
    def glauber_rate(self) -> float:
        """Uniformization rate per site, 2 r cosh(2 d beta)."""
        return 2.0 * self.r * math.cosh(2 * self.d * self.beta_int)

    def nu_mean(self) -> float:
        if self.kind == "deterministic_relaxation":
            return self.a_star
        if self.kind == "weak_glauber":
            return 0.5
        return self.nu_p if self.space.kind == "binary" else 0.5

    def with_speed(self, lam: float) -> "EnvironmentModel":
        """Same dynamics run lam times faster."""
        if self.kind == "deterministic_relaxation":
            return replace(self, kappa=self.kappa * lam)
        return replace(self, r=self.r * lam)

    def with_geometry(self, L: int | None = None, d: int | None = None) -> "EnvironmentModel":
        return replace(self, geometry=TorusGeometry(d or self.d, L or self.L))

    def closed_form_decay(self) -> Callable[[float], float] | None:
        """Single-site discrepancy decay when it is known in closed form."""
        if self.kind == "independent_refresh":
            return lambda t: math.exp(-self.r * t)
        if self.kind == "deterministic_relaxation":
            return lambda t: math.exp(-self.kappa * t)
        if self.kind == "weak_glauber" and self.beta_int == 0.0:
            return lambda t: math.exp(-2.0 * self.r * t)
        return None

    def decay_rate(self) -> float | None:
        if self.kind == "independent_refresh":
            return self.r
        if self.kind == "deterministic_relaxation":
            return self.kappa
        if self.kind == "weak_glauber" and self.beta_int == 0.0:
            return 2.0 * self.r
        return None

    def r_env_certificate(self) -> float | None:
        """Closed-form R^E when available (None means it has to be estimated)."""
        if self.kind == "independent_refresh":
            return self.r
        if self.kind == "deterministic_relaxation":
            return 0.0
        return None


def independent_refresh(r: float = 1.0, nu_p: float = 0.5, L: int = 64, d: int = 1,
                        space: SiteSpace = BINARY) -> EnvironmentModel:
    return EnvironmentModel("independent_refresh", TorusGeometry(d, L), r=r, nu_p=nu_p, space=space)


def weak_glauber(r: float = 1.0, beta_int: float = 0.0, L: int = 64, d: int = 1) -> EnvironmentModel:
    return EnvironmentModel("weak_glauber", TorusGeometry(d, L), r=r, beta_int=beta_int)


def deterministic_relaxation(kappa: float = 1.0, a_star: float = 0.0, L: int = 64, d: int = 1) -> EnvironmentModel:
    return EnvironmentModel("deterministic_relaxation", TorusGeometry(d, L), kappa=kappa, a_star=a_star, space=UNIT)


@lru_cache(maxsize=32)
def _neighbors(d: int, L: int) -> tuple:
    g = TorusGeometry(d, L)
    return tuple(tuple(g.neighbors(i)) for i in range(g.n_sites))


# ---------------------------------------------------------------------------
# samplers


class Sampler:
    """Common interface of the coupled environment samplers.

    ``init`` is None (stationary background shared by all copies), one array
    (used for every copy) or a list of arrays (one per copy).  ``overrides``
    maps a flat site index to a tuple of per-copy values.
    """

    continuous = False

    def __init__(self, model: EnvironmentModel, n_copies: int, stream: RandomStream,
                 init=None, overrides: dict | None = None, log: bool = False):
        self.model = model
        self.n_copies = n_copies
        self.stream = stream
        self.t = 0.0
        self.n_sites = model.geometry.n_sites
        self.log = [] if log else None
        self._rho = model.space.rho

    def _initial_arrays(self, init, overrides):
        n = self.n_sites
        if init is None:
            vals = None
        elif isinstance(init, (list, tuple)) and len(init) == self.n_copies and np.ndim(init[0]) == 1:
            vals = [list(map(float, a)) for a in init]
        else:
            a = np.asarray(init, dtype=float)
            if a.shape != (n,):
                raise ModelError(f"initial configuration has shape {a.shape}, torus has {n} sites")
            vals = [a.tolist() for _ in range(self.n_copies)]
        if vals is not None:
            for v in vals:
                if len(v) != n:
                    raise ModelError("initial configurations must match the torus geometry")
        return vals

    def discrepancy_sum(self, c1: int = 0, c2: int = 1) -> float:
        raise NotImplementedError

    def restart_at(self, t: float):
        """Treat the initial arrays as the state at time t (coupling restarts)."""
        self.t = t

    def snapshot(self, c: int = 0) -> np.ndarray:
        return np.array([self.read(c, i) for i in range(self.n_sites)])


class RefreshSampler(Sampler):
    """Lazy graphical construction of the independent-refresh dynamics."""

    def __init__(self, model, n_copies, stream, init=None, overrides=None, log=False):
        super().__init__(model, n_copies, stream, init, overrides, log)
        n = self.n_sites
        vals = self._initial_arrays(init, overrides)
        self.vals = vals if vals is not None else [[None] * n for _ in range(n_copies)]
        self.next_ring = [None] * n
        self.t0 = 0.0
        self.rate = model.r
        self.binary = model.space.kind == "binary"
        self.p = model.nu_p
        self.discrepant = set()
        if overrides:
            for idx, vs in overrides.items():
                for c in range(n_copies):
                    self.vals[c][idx] = float(vs[c])
        if n_copies > 1:
            if vals is not None:
                for i in range(n):
                    v0 = self.vals[0][i]
                    if any(self.vals[c][i] != v0 for c in range(1, n_copies)):
                        self.discrepant.add(i)
            elif overrides:
                self.discrepant.update(i for i, vs in overrides.items() if len(set(vs)) > 1)

    def _draw(self) -> float:
        u = self.stream.u()
        if self.binary:
            return 1.0 if u < self.p else 0.0
        return u

    def _set_all(self, idx: int, v: float, t: float):
        for c in range(self.n_copies):
            self.vals[c][idx] = v
        if self.log is not None:
            self.log.append((t, idx, v))

    def _roll(self, idx: int):
        t = self.t
        nr = self.next_ring[idx]
        if nr is None:
            if self.vals[0][idx] is None:
                v = self._draw()
                for c in range(self.n_copies):
                    self.vals[c][idx] = v
            if t > self.t0 and self.stream.u() >= math.exp(-self.rate * (t - self.t0)):
                self._set_all(idx, self._draw(), t)
            nr = t + self.stream.exp(self.rate)
        while nr <= t:
            self._set_all(idx, self._draw(), nr)
            nr += self.stream.exp(self.rate)
        self.next_ring[idx] = nr

    def restart_at(self, t: float):
        self.t = self.t0 = t

    def advance(self, t: float):
        if t < self.t:
            raise ValueError("samplers only move forward in time")
        self.t = t

    def read(self, c: int, idx: int) -> float:
        nr = self.next_ring[idx]
        if nr is None or nr <= self.t:
            self._roll(idx)
        return self.vals[c][idx]

    def next_change(self, idxs) -> float:
        best = math.inf
        for i in idxs:
            nr = self.next_ring[i]
            if nr is None or nr <= self.t:
                self._roll(i)
                nr = self.next_ring[i]
            if nr < best:
                best = nr
        return best

    def discrepancy_sum(self, c1: int = 0, c2: int = 1) -> float:
        total = 0.0
        for i in list(self.discrepant):
            a, b = self.read(c1, i), self.read(c2, i)
            if a == b:
                self.discrepant.discard(i)
            else:
                total += self._rho(a, b)
        return total

    def discrepancy_at(self, idx: int, c1: int = 0, c2: int = 1) -> float:
        return self._rho(self.read(c1, idx), self.read(c2, idx))


class GlauberSampler(Sampler):
    """Heat-bath spin dynamics on a global uniformized clock.

    At rate ``n_sites * R`` a uniformly chosen site x and one uniform U are
    drawn; with S = sum_{y~x} (2 eta(y) - 1) every copy sets its spin to 1 if
    U < r e^{beta S} / R and to 0 if U > 1 - r e^{-beta S} / R.
    """

    def __init__(self, model, n_copies, stream, init=None, overrides=None, log=False):
        super().__init__(model, n_copies, stream, init, overrides, log)
        n = self.n_sites
        self.R = model.glauber_rate
        self.total_rate = n * self.R
        self.nb = _neighbors(model.d, model.L)
        self.r = model.r
        self.beta = model.beta_int
        vals = self._initial_arrays(init, overrides)
        if vals is None:
            base = self._stationary_background()
            vals = [list(base) for _ in range(n_copies)]
        self.vals = vals
        if overrides:
            for idx, vs in overrides.items():
                for c in range(n_copies):
                    self.vals[c][idx] = float(vs[c])
        self.discrepant = set()
        if n_copies > 1:
            for i in range(n):
                if any(self.vals[c][i] != self.vals[0][i] for c in range(1, n_copies)):
                    self.discrepant.add(i)
        self.next_event = self.stream.exp(self.total_rate)
        # exp(beta S) for S in -2d..2d
        d2 = 2 * model.d
        self._up = {s: self.r * math.exp(self.beta * s) / self.R for s in range(-d2, d2 + 1)}
        self._down = {s: 1.0 - self.r * math.exp(-self.beta * s) / self.R for s in range(-d2, d2 + 1)}

    def _stationary_background(self) -> list:
        """Approximate equilibrium: Bernoulli(1/2) start run for a burn-in period."""
        n = self.n_sites
        vals = [1.0 if self.stream.u() < 0.5 else 0.0 for _ in range(n)]
        if self.beta == 0.0:
            return vals
        t = 0.0
        T = self.model.glauber_burn_in / self.model.r
        R = self.model.glauber_rate
        up = lambda s: self.model.r * math.exp(self.beta * s) / R
        down = lambda s: 1.0 - self.model.r * math.exp(-self.beta * s) / R
        nb = _neighbors(self.model.d, self.model.L)
        while True:
            t += self.stream.exp(n * R)
            if t > T:
                return vals
            i = min(int(self.stream.u() * n), n - 1)
            U = self.stream.u()
            S = sum(2.0 * vals[j] - 1.0 for j in nb[i])
            if U < up(S):
                vals[i] = 1.0
            elif U > down(S):
                vals[i] = 0.0

    def restart_at(self, t: float):
        self.t = t
        self.next_event = t + self.stream.exp(self.total_rate)

    def _event(self, t: float):
        n = self.n_sites
        i = min(int(self.stream.u() * n), n - 1)
        U = self.stream.u()
        nb = self.nb[i]
        changed = False
        for c in range(self.n_copies):
            v = self.vals[c]
            S = int(sum(2.0 * v[j] - 1.0 for j in nb))
            if U < self._up[S]:
                new = 1.0
            elif U > self._down[S]:
                new = 0.0
            else:
                continue
            if v[i] != new:
                v[i] = new
                changed = True
        if self.n_copies > 1:
            if all(self.vals[c][i] == self.vals[0][i] for c in range(1, self.n_copies)):
                self.discrepant.discard(i)
            else:
                self.discrepant.add(i)
        if self.log is not None:
            self.log.append((t, i, U, changed))

    def advance(self, t: float):
        if t < self.t:
            raise ValueError("samplers only move forward in time")
        while self.next_event <= t:
            self._event(self.next_event)
            self.next_event += self.stream.exp(self.total_rate)
        self.t = t

    def read(self, c: int, idx: int) -> float:
        return self.vals[c][idx]

    def next_change(self, idxs) -> float:
        return self.next_event

    def discrepancy_sum(self, c1: int = 0, c2: int = 1) -> float:
        return float(sum(self._rho(self.vals[c1][i], self.vals[c2][i]) for i in self.discrepant))

    def discrepancy_at(self, idx: int, c1: int = 0, c2: int = 1) -> float:
        return self._rho(self.vals[c1][idx], self.vals[c2][idx])


class RelaxationSampler(Sampler):
    """Closed-form flow eta_t(x) = a* + e^{-kappa t} (eta_0(x) - a*)."""

    continuous = True

    def __init__(self, model, n_copies, stream, init=None, overrides=None, log=False):
        super().__init__(model, n_copies, stream, init, overrides, log)
        vals = self._initial_arrays(init, overrides)
        if vals is None:
            vals = [[model.a_star] * self.n_sites for _ in range(n_copies)]
        if overrides:
            for idx, vs in overrides.items():
                for c in range(n_copies):
                    vals[c][idx] = float(vs[c])
        self.v0 = vals
        self.a = model.a_star
        self.kappa = model.kappa
        self._factor = 1.0
        self.discrepant = set()
        if n_copies > 1:
            self.discrepant = {i for i in range(self.n_sites)
                               if any(vals[c][i] != vals[0][i] for c in range(1, n_copies))}

    def advance(self, t: float):
        if t < self.t:
            raise ValueError("samplers only move forward in time")
        self.t = t
        self._factor = math.exp(-self.kappa * t)

    def read(self, c: int, idx: int) -> float:
        return self.a + self._factor * (self.v0[c][idx] - self.a)

    def restart_at(self, t: float):
        k = math.exp(self.kappa * t)
        self.v0 = [[self.a + (v - self.a) * k for v in row] for row in self.v0]
        self.advance(t)

    def value_at(self, c: int, idx: int, s: float) -> float:
        return self.a + math.exp(-self.kappa * s) * (self.v0[c][idx] - self.a)

    def next_change(self, idxs) -> float:
        return self.t  # changes continuously

    def discrepancy_sum(self, c1: int = 0, c2: int = 1) -> float:
        return float(sum(self._rho(self.read(c1, i), self.read(c2, i)) for i in self.discrepant))

    def discrepancy_at(self, idx: int, c1: int = 0, c2: int = 1) -> float:
        return self._rho(self.read(c1, idx), self.read(c2, idx))


_SAMPLERS = {
    "independent_refresh": RefreshSampler,
    "weak_glauber": GlauberSampler,
    "deterministic_relaxation": RelaxationSampler,
}


def make_sampler(model: EnvironmentModel, n_copies: int, stream: RandomStream, init=None,
                 overrides: dict | None = None, log: bool = False) -> Sampler:
    return _SAMPLERS[model.kind](model, n_copies, stream, init, overrides, log)


def stationary_sample(model: EnvironmentModel, stream: RandomStream) -> np.ndarray:
    """One configuration from the (approximate, for Glauber) stationary law."""
    return make_sampler(model, 1, stream).snapshot(0)


# ---------------------------------------------------------------------------
# trajectories with deterministic replay


class EnvTrajectory:
    """Environment path determined by (model, init, seed).

    Queries at increasing times advance the sampler; a query earlier than
    the last one replays the stream from the seed, so any t <= T can be
    asked for in any order with identical answers.
    """

    def __init__(self, model: EnvironmentModel, init, T: float, seed: int, n_copies: int = 1,
                 overrides: dict | None = None, tag: str = "env", replica: int = 0):
        if T < 0:
            raise ValueError("horizon must be nonnegative")
        if n_copies > 1 and isinstance(init, (list, tuple)):
            sizes = {len(np.asarray(a)) for a in init}
            if len(sizes) != 1:
                raise ModelError("coupled initial configurations live on different geometries")
        self.model, self.init, self.T, self.seed = model, init, T, seed
        self.n_copies, self.overrides, self.tag, self.replica = n_copies, overrides, tag, replica
        self._reset()

    def _reset(self):
        stream = RandomStream.from_seed(self.seed, self.tag, self.replica)
        self.sampler = make_sampler(self.model, self.n_copies, stream, self.init, self.overrides, log=True)

    def _goto(self, t: float):
        if t > self.T + 1e-12:
            raise ValueError(f"time {t} beyond horizon {self.T}")
        if t < self.sampler.t:
            self._reset()
        self.sampler.advance(t)

    def at(self, t: float, copy: int = 0) -> Configuration:
        self._goto(t)
        return Configuration(self.model.geometry, self.sampler.snapshot(copy))

    def pair_at(self, t: float) -> tuple[Configuration, Configuration]:
        self._goto(t)
        g = self.model.geometry
        return Configuration(g, self.sampler.snapshot(0)), Configuration(g, self.sampler.snapshot(1))

    def discrepancy(self, t: float) -> np.ndarray:
        """Per-site rho between copy 0 and copy 1 at time t."""
        a, b = self.pair_at(t)
        rho = self.model.space.rho
        return np.array([rho(x, y) for x, y in zip(a.values, b.values)])

    @property
    def event_log(self) -> list:
        return list(self.sampler.log)


def simulate_env(model: EnvironmentModel, init, T: float, seed: int, replica: int = 0) -> EnvTrajectory:
    return EnvTrajectory(model, init, T, seed, 1, replica=replica)


def simulate_env_coupled(model: EnvironmentModel, init_pair, T: float, seed: int, replica: int = 0) -> EnvTrajectory:
    eta, xi = init_pair
    a, b = np.asarray(getattr(eta, "values", eta), dtype=float), np.asarray(getattr(xi, "values", xi), dtype=float)
    if a.shape != b.shape or a.shape != (model.geometry.n_sites,):
        raise ModelError("coupled initial configurations must share the model geometry")
    return EnvTrajectory(model, [a, b], T, seed, 2, replica=replica)


# ---------------------------------------------------------------------------
# coupling decay


def worst_pairs(model: EnvironmentModel) -> list[tuple[float, float]]:
    """Origin values of the single-site discrepancy pairs whose sup is taken."""
    return [(1.0, 0.0), (0.0, 1.0)]


def origin_overrides(model: EnvironmentModel, pair) -> dict:
    return {model.geometry.index(origin(model.d)): pair}


def default_decay_grid(model: EnvironmentModel, n: int = 64) -> np.ndarray:
    rate = model.decay_rate() or 1.0
    t_end = 4.5 / rate
    return np.concatenate([[0.0], np.geomspace(0.02 * t_end / 4.5, t_end, n - 1)])


@dataclass(frozen=True)
class DecayCurve:
    t: tuple
    mean: tuple
    se: tuple
    per_pair: tuple
    integral_td: float
    integral_td_se: float
    weighted_integral: float | None
    fit: ExpFit
    tail: float
    certified: bool
    replicas: int
    seed: int
    flag: str = ""


def _decay_replica(model, t_grid, seed):
    pairs = worst_pairs(model)

    def task(i):
        out = []
        for p, pair in enumerate(pairs):
            stream = RandomStream.from_seed(seed, "coupling_decay", i * len(pairs) + p)
            s = make_sampler(model, 2, stream, None, origin_overrides(model, pair))
            rho0 = model.space.rho(*pair)
            row = []
            for t in t_grid:
                s.advance(t)
                row.append(s.discrepancy_sum() / rho0)
            out.append(row)
        return out

    return task


def measure_coupling_decay(model: EnvironmentModel, t_grid: Sequence[float] | None = None, replicas: int = 10_000,
                           seed: int = 0, phi: tuple | None = None, K: float = 1.0, threads: int = 1) -> DecayCurve:
    """sup over worst single-site pairs of sum_x E rho(eta1_t(x), eta2_t(x)) / rho(eta(0), xi(0)).

    ``phi`` is ("exp", lam) for e^{lam t} or ("poly", lam) for (1+t)^lam; the
    weighted integral is int phi(t/K) t^d decay(t) dt.
    """
    t_grid = default_decay_grid(model) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing")
    if model.kind == "deterministic_relaxation":
        replicas = 1  # zero variance
    rows = run_replicas(_decay_replica(model, t_grid, seed), replicas, threads)
    data = np.array(rows)  # replicas x pairs x t
    means = data.mean(axis=0)
    ses = data.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros_like(means)
    d = model.d
    td = t_grid**d
    # one worst pair for the whole curve (by its t^d-weighted integral); a pointwise
    # max over pairs would bias noisy curves upwards
    w = int(np.argmax([trapezoid(td * means[p], t_grid) for p in range(means.shape[0])]))
    mean = means[w]
    se = ses[w]
    fit = fit_exponential_tail(t_grid, mean)
    head = trapezoid(td * mean, t_grid)
    tail = fit.tail_integral(t_grid[-1], d)
    # per-replica integrals along the worst pair: time points within a replica are correlated
    if replicas > 1:
        per_rep = data[:, w, :] * td
        ints = np.trapezoid(per_rep, t_grid, axis=1) if hasattr(np, "trapezoid") else np.trapz(per_rep, t_grid, axis=1)
        head_se = float(np.std(ints, ddof=1) / math.sqrt(replicas))
    else:
        head_se = 0.0
    n3 = len(t_grid) // 3
    decreasing = mean[-1] <= mean[-n3] + 3 * max(se[-1], se[-n3])
    certified = bool(fit.rate > 0 and decreasing and math.isfinite(tail))
    weighted = None
    if phi is not None:
        weight = phi_weight(phi, K)
        growth = phi[1] / K if phi[0] == "exp" else 0.0
        y = np.array([weight(s) for s in t_grid]) * td * mean
        wt = fit.tail_integral(t_grid[-1], d + (int(math.ceil(phi[1])) if phi[0] == "poly" else 0), growth)
        weighted = trapezoid(y, t_grid) + (wt * (1 if phi[0] == "exp" else (1 + 1 / K) ** phi[1]))
    return DecayCurve(tuple(t_grid), tuple(mean), tuple(se), tuple(map(tuple, means)), float(head + tail),
                      head_se, weighted, fit, float(tail), certified, replicas, seed,
                      "" if certified else "integrability not certified")


def phi_weight(phi: tuple, K: float = 1.0) -> Callable[[float], float]:
    kind, lam = phi
    if kind == "exp":
        return lambda t: math.exp(lam * t / K)
    if kind == "poly":
        return lambda t: (1.0 + t / K) ** lam
    raise ValueError(f"unknown weight family {kind!r}")


def decay_integral(model: EnvironmentModel, spread: float, curve: DecayCurve | None = None) -> tuple[float, bool]:
    """C = int_0^inf (spread t + 1)^d decay(t) dt, closed form when available."""
    d = model.d
    rate = model.decay_rate()
    if rate is not None:
        # int (a t + 1)^d e^{-k t} dt = sum_j C(d, j) a^j j! / k^{j+1}
        return sum(math.comb(d, j) * spread**j * math.factorial(j) / rate ** (j + 1) for j in range(d + 1)), True
    if curve is None:
        return math.inf, False
    t = np.asarray(curve.t)
    y = (spread * t + 1) ** d * np.asarray(curve.mean)
    head = trapezoid(y, t)
    tail = sum(math.comb(d, j) * spread**j * curve.fit.tail_integral(t[-1], j) for j in range(d + 1))
    return float(head + tail), curve.certified
