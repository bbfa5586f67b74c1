"""Walkers driven by shared clocks on coupled environments.

One aggregate walker clock of rate ``sum_z lam_z`` rings; the jump z is
picked proportionally to lam_z and a single uniform U is shared by every
walker: walker i moves by z iff ``U * lam_z < alpha_i(theta_{-X_i} eta^i, z)``.
The sandwich walkers Y+ / Y- move by max(z, 0) / min(z, 0) on every ring.
The decoupling time tau is the first ring at which the walkers disagree.

``lam_z`` is the envelope taken over all walkers' rate families, so the same
engine runs two walkers with different rates (continuity and Einstein
relation checks) as well as the symmetric coupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .environments import (EnvironmentModel, decay_integral, make_sampler, measure_coupling_decay, origin_overrides,
                           worst_pairs)
from .errors import ModelError
from .lattice import Affine, Constant, LocalFunction, Projection, RateFamily
from .rng import RandomStream, run_replicas
from .stats import Estimate, estimate

# 8-point Gauss-Legendre nodes/weights on [0, 1] for continuous environments
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = ((_GL_X + 1) / 2).tolist()
_GL_W = (_GL_W / 2).tolist()


@dataclass(frozen=True)
class Walker:
    rates: RateFamily
    copy: int = 0
    start: tuple | None = None


def _compile(f: LocalFunction):
    """(offsets, base, slopes, generic evaluator or None)."""
    if isinstance(f, Constant):
        return (), f.c, (), None
    if isinstance(f, Affine):
        return f.window, f.base, f.slopes, None
    if isinstance(f, Projection):
        return f.window, 0.0, (1.0,), None
    return f.window, 0.0, (), f.evaluate


def _indexer(geometry):
    L = geometry.L
    if geometry.d == 1:
        return lambda pos, off: (pos[0] + off[0]) % L
    strides = [L**k for k in range(geometry.d)]

    def index(pos, off):
        return sum(((p + o) % L) * s for p, o, s in zip(pos, off, strides))

    return index


class _Local:
    """A compiled local function read at a walker's position."""

    __slots__ = ("offsets", "base", "slopes", "fn", "const")

    def __init__(self, f: LocalFunction):
        self.offsets, self.base, self.slopes, self.fn = _compile(f)
        self.const = not self.offsets

    def value(self, read, c, pos, index) -> float:
        if self.const:
            return self.base if self.fn is None else self.fn(())
        if self.fn is None:
            v = self.base
            for o, s in zip(self.offsets, self.slopes):
                v += s * read(c, index(pos, o))
            return v
        vals = [read(c, index(pos, o)) for o in self.offsets]
        out = self.fn(vals)
        if not math.isfinite(out):
            from .errors import EvaluationError
            raise EvaluationError(f"non-finite local value {out!r}")
        return out

    def value_at(self, sampler, c, pos, index, s) -> float:
        if self.const:
            return self.base if self.fn is None else self.fn(())
        vals = [sampler.value_at(c, index(pos, o), s) for o in self.offsets]
        if self.fn is None:
            return self.base + sum(sl * v for sl, v in zip(self.slopes, vals))
        return self.fn(vals)

    def sites(self, pos, index):
        return [index(pos, o) for o in self.offsets]


@dataclass
class WalkResult:
    T: float
    positions: list              # final displacement X_i(T) - X_i(0), per walker
    Y_plus: list
    Y_minus: list
    tau: float
    decouple_count: int
    integrals: list              # int_0^T f(theta_{-X} eta_t) dt per integrand
    epoch_means: list            # mean of f at walker-clock epochs, per integrand
    observations: list           # (t, positions, probe values) at observe_times
    log: list | None
    sandwich_violations: int
    rings: int
    env_at_walker: list          # eta_T(X_T) per walker
    env_final: list | None = None


def simulate_walk(model: EnvironmentModel, walkers: Sequence[Walker], T: float, stream: RandomStream,
                  init=None, overrides: dict | None = None, integrands: Sequence = (),
                  probes: Sequence = (), observe_times: Sequence[float] = (), log: bool = False,
                  restart_mode: str = "none", stop_on_decouple: bool = False, keep_env: bool = False,
                  n_copies: int | None = None, integrate_from: float = 0.0) -> WalkResult:
    """Run walkers on (possibly coupled) environment copies up to time T.

    ``integrands`` and ``probes`` are lists of (walker index, LocalFunction):
    integrands are integrated exactly in time along the environment seen
    from that walker (from ``integrate_from`` on), probes are evaluated at
    ``observe_times``.  Each observation also carries the running integrals.
    """
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    if restart_mode not in ("none", "recouple_on_decouple"):
        raise ModelError(f"unknown restart mode {restart_mode!r}")
    geo = model.geometry
    d = geo.d
    n_w = len(walkers)
    n_copies = n_copies or (max(w.copy for w in walkers) + 1)
    sampler = make_sampler(model, n_copies, stream, init, overrides)
    index = _indexer(geo)

    # union envelopes over walkers
    jumps: list = []
    for w in walkers:
        if w.rates.d != d:
            raise ModelError("rate family and torus dimensions differ")
        for z in w.rates.jumps:
            if z not in jumps:
                jumps.append(z)
    lam = []
    comp = []  # comp[i][j] compiled alpha_i(., z_j) or None
    for z in jumps:
        lam.append(max((w.rates.lam[w.rates.jumps.index(z)] if z in w.rates.jumps else 0.0) for w in walkers))
    for w in walkers:
        row = []
        for j, z in enumerate(jumps):
            if z in w.rates.jumps:
                k = w.rates.jumps.index(z)
                row.append(_Local(w.rates.rates[k]))
            else:
                row.append(None)
        comp.append(row)
    for j, z in enumerate(jumps):
        if lam[j] == 0.0 and any(c[j] is not None and not c[j].const for c in comp):
            raise ModelError(f"zero envelope for jump {z} with a non-trivial rate")
    lam_tot = sum(lam)
    cum = np.cumsum(lam).tolist()
    zplus = [tuple(max(c, 0) for c in z) for z in jumps]
    zminus = [tuple(min(c, 0) for c in z) for z in jumps]

    pos = [list(w.start) if w.start is not None else [0] * d for w in walkers]
    shift = [[0] * d for _ in walkers]     # absolute offset accumulated by restarts
    copies = [w.copy for w in walkers]
    start = [tuple(p) for p in pos]
    Yp = [0] * d
    Ym = [0] * d
    tau = math.inf
    n_dec = 0
    rings = 0
    n_ep = 0
    violations = 0
    ev_log = [] if log else None

    ints = [(i, _Local(f)) for i, f in integrands]
    int_vals = [0.0] * len(ints)
    ep_sums = [0.0] * len(ints)
    prb = [(i, _Local(f)) for i, f in probes]
    obs = []
    obs_times = sorted(observe_times)
    oi = 0
    read = sampler.read
    continuous = sampler.continuous

    def integrate_to(t0, t1):
        t0 = max(t0, integrate_from)
        if not ints or t1 <= t0:
            return
        if continuous:
            h = t1 - t0
            for k, (i, f) in enumerate(ints):
                int_vals[k] += h * sum(wg * f.value_at(sampler, copies[i], pos[i], index, t0 + h * x)
                                       for x, wg in zip(_GL_X, _GL_W))
            return
        t = t0
        while True:
            watch = []
            for i, f in ints:
                watch.extend(f.sites(pos[i], index))
            t_chg = sampler.next_change(watch)
            seg_end = min(t_chg, t1)
            for k, (i, f) in enumerate(ints):
                int_vals[k] += (seg_end - t) * f.value(read, copies[i], pos[i], index)
            if t_chg >= t1:
                return
            t = t_chg
            sampler.advance(t)

    def observe(t_obs):
        sampler.advance(t_obs)
        vals = tuple(f.value(read, copies[i], pos[i], index) for i, f in prb)
        disp = tuple(tuple(shift[i][k] + pos[i][k] - start[i][k] for k in range(d)) for i in range(n_w))
        obs.append((t_obs, disp, vals, tuple(int_vals)))

    t = 0.0
    while True:
        t_next = t + stream.exp(lam_tot) if lam_tot > 0 else math.inf
        t_stop = min(t_next, T)
        while oi < len(obs_times) and obs_times[oi] <= t_stop:
            integrate_to(t, obs_times[oi])
            t = max(t, obs_times[oi])
            observe(obs_times[oi])
            oi += 1
        integrate_to(t, t_stop)
        if t_next > T:
            break
        t = t_next
        sampler.advance(t)
        rings += 1
        u = stream.u() * lam_tot
        j = 0
        while j < len(cum) - 1 and u >= cum[j]:
            j += 1
        U = stream.u()
        thr = U * lam[j]
        acc = []
        for i in range(n_w):
            c = comp[i][j]
            a = c.value(read, copies[i], pos[i], index) if c is not None else 0.0
            acc.append(thr < a)
        if t >= integrate_from:
            n_ep += 1
            for k, (i, f) in enumerate(ints):
                ep_sums[k] += f.value(read, copies[i], pos[i], index)
        z = jumps[j]
        for k in range(d):
            Yp[k] += zplus[j][k]
            Ym[k] += zminus[j][k]
        discordant = n_w > 1 and any(a != acc[0] for a in acc)
        for i in range(n_w):
            if acc[i]:
                p = pos[i]
                for k in range(d):
                    p[k] += z[k]
        for i in range(n_w):
            for k in range(d):
                x = shift[i][k] + pos[i][k] - start[i][k]
                if x > Yp[k] or x < Ym[k]:
                    violations += 1
        if ev_log is not None:
            ev_log.append((t, z, U, tuple(acc),
                           tuple(tuple(shift[i][k] + pos[i][k] - start[i][k] for k in range(d)) for i in range(n_w)),
                           tuple(Yp), tuple(Ym)))
        if discordant:
            n_dec += 1
            if tau == math.inf:
                tau = t
                if stop_on_decouple:
                    break
            if restart_mode == "recouple_on_decouple":
                sampler, pos, shift = _restart(model, sampler, stream, pos, shift, copies, n_copies, d)
                read = sampler.read
    env_final = [sampler.snapshot(c) for c in range(n_copies)] if keep_env else None
    if not stop_on_decouple or tau == math.inf:
        sampler.advance(max(sampler.t, T))
    at_walker = []
    for i in range(n_w):
        at_walker.append(read(copies[i], index(pos[i], (0,) * d)))
    disp = [[shift[i][k] + pos[i][k] - start[i][k] for k in range(d)] for i in range(n_w)]
    return WalkResult(T, disp, Yp, Ym, tau, n_dec, int_vals,
                      [s / n_ep if n_ep else math.nan for s in ep_sums], obs, ev_log,
                      violations, rings, at_walker, env_final)


def _restart(model, sampler, stream, pos, shift, copies, n_copies, d):
    """Restart the environment coupling from the configurations seen by each walker."""
    geo = model.geometry
    n = geo.n_sites
    inits = []
    for i, c in enumerate(copies):
        snap = sampler.snapshot(c)
        perm = np.array([geo.index(tuple(geo.coords(y)[k] + pos[i][k] for k in range(d))) for y in range(n)])
        inits.append(snap[perm])
    per_copy = [None] * n_copies
    for i, c in enumerate(copies):
        if per_copy[c] is None:
            per_copy[c] = inits[i]
    for c in range(n_copies):
        if per_copy[c] is None:
            per_copy[c] = sampler.snapshot(c)
    new = make_sampler(model, n_copies, stream, per_copy)
    new.restart_at(sampler.t)
    shift = [[shift[i][k] + pos[i][k] for k in range(d)] for i in range(len(pos))]
    pos = [[0] * d for _ in pos]
    return new, pos, shift


def tau_from_log(log: Sequence) -> float:
    """First time two walkers disagreed, recomputed from the event log."""
    for t, z, U, acc, *_ in log:
        if any(a != acc[0] for a in acc):
            return t
    return math.inf


def sandwich_ok(log: Sequence, d: int, n_walkers: int) -> bool:
    """Check every logged event: Y- <= X_i <= Y+ coordinatewise on the recorded
    states, Y+/Y- moved by the positive/negative part of the clock's jump, and
    each walker moved by the jump exactly when it accepted."""
    prev_x = [(0,) * d for _ in range(n_walkers)]
    prev_p, prev_m = (0,) * d, (0,) * d
    for t, z, U, acc, xs, yp, ym in log:
        for k in range(d):
            if yp[k] - prev_p[k] != max(z[k], 0) or ym[k] - prev_m[k] != min(z[k], 0):
                return False
        for i in range(n_walkers):
            step = tuple(a - b for a, b in zip(xs[i], prev_x[i]))
            if step != (tuple(z) if acc[i] else (0,) * d):
                return False
            if any(not ym[k] <= xs[i][k] <= yp[k] for k in range(d)):
                return False
        prev_x, prev_p, prev_m = list(xs), yp, ym
    return True


# ---------------------------------------------------------------------------
# coupled paths


@dataclass
class CoupledPath:
    """Outcome of one run of the two-walker coupling."""

    X1: list
    X2: list
    Y_plus: list
    Y_minus: list
    tau: float
    decouple_count: int
    log: list | None
    sandwich_violations: int
    env_at_walker: list


def simulate_coupled_walk(model: EnvironmentModel, alpha: RateFamily, inits, T: float, seed: int,
                          restart_mode: str = "none", replica: int = 0, log: bool = True,
                          alpha2: RateFamily | None = None) -> CoupledPath:
    """Two walkers on two coupled environments.

    ``inits`` is ((eta, x), (xi, y)) with configurations given as arrays or
    None for the shared stationary background, or a dict of origin overrides
    under the key "overrides".
    """
    (eta, x), (xi, y) = inits
    init = None
    overrides = None
    if isinstance(eta, dict):
        overrides = eta
    elif eta is not None or xi is not None:
        a = np.asarray(getattr(eta, "values", eta), dtype=float)
        b = np.asarray(getattr(xi, "values", xi), dtype=float)
        if a.shape != b.shape:
            raise ModelError("initial configurations live on different geometries")
        init = [a, b]
    stream = RandomStream.from_seed(seed, "coupled_walk", replica)
    res = simulate_walk(model, [Walker(alpha, 0, tuple(x)), Walker(alpha2 or alpha, 1, tuple(y))], T, stream,
                        init=init, overrides=overrides, log=log, restart_mode=restart_mode)
    return CoupledPath(res.positions[0], res.positions[1], res.Y_plus, res.Y_minus, res.tau,
                       res.decouple_count, res.log, res.sandwich_violations, res.env_at_walker)


@dataclass(frozen=True)
class DecouplingReport:
    p_stay_coupled: Estimate
    per_pair: tuple
    lower_bound: float
    certified: bool
    decay_integral: float
    triple_alpha: float
    spread: float
    T: float

    @property
    def holds(self) -> bool:
        return self.p_stay_coupled.mean >= self.lower_bound - 3 * self.p_stay_coupled.se

    @property
    def label(self) -> str:
        return "certified" if self.certified else "uncertified"


def decoupling_lower_bound(model: EnvironmentModel, alpha: RateFamily, curve=None) -> tuple[float, float, bool]:
    """exp(-|||alpha||| int (||gamma+ - gamma-||_inf t + 1)^d decay(t) dt)."""
    norms = alpha.norms()
    if norms.triple_alpha == 0:
        return 1.0, 0.0, True
    C, certified = decay_integral(model, alpha.gamma_spread, curve)
    return math.exp(-norms.triple_alpha * C), C, certified


def estimate_decoupling(model: EnvironmentModel, alpha: RateFamily, T: float, replicas: int, seed: int,
                        threads: int = 1, decay_replicas: int = 2000) -> DecouplingReport:
    """P(tau > T) for both walkers at the origin on worst single-site pairs.

    The environment pairs differ only at the origin on a shared stationary
    background; the reported probability is the smaller of the orientations.
    """
    curve = None
    if model.decay_rate() is None:
        curve = measure_coupling_decay(model, replicas=decay_replicas, seed=seed)
    bound, C, certified = decoupling_lower_bound(model, alpha, curve)
    pairs = worst_pairs(model)
    o = (0,) * model.d

    def task(i):
        out = []
        for p, pair in enumerate(pairs):
            stream = RandomStream.from_seed(seed, "decoupling", i * len(pairs) + p)
            res = simulate_walk(model, [Walker(alpha, 0, o), Walker(alpha, 1, o)], T, stream,
                                overrides=origin_overrides(model, pair), stop_on_decouple=True)
            out.append(1.0 if res.tau > T else 0.0)
        return out

    data = np.array(run_replicas(task, replicas, threads))
    ests = tuple(estimate(data[:, p], seed) for p in range(len(pairs)))
    worst = min(ests, key=lambda e: e.mean)
    return DecouplingReport(worst, ests, bound, certified, C, alpha.norms().triple_alpha, alpha.gamma_spread, T)
