"""Backwards martingales and the concentration bounds built on them.

For a Markov process (Y_t) with semigroup P_t and an observable f, the
backwards martingale is ``M(t) = P_{T-t} f(Y_t) - P_T f(Y_0)``.  Its
predictable quadratic variation, the exponential super/submartingales and
the resulting tail and moment bounds are computed here against a
*provider*: either an exact finite chain or a Monte Carlo sampler.

Upper and lower generators are short-time difference quotients evaluated
on the ladder eps = t_scale * 2^-j, j = 3..14, with two-point Richardson
extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import ctmc
from .ctmc import FiniteChain
from .errors import RefusedError
from .rng import RandomStream
from .stats import Estimate, estimate

LADDER = tuple(2.0**-j for j in range(3, 15))
K_MAX = 20


class ChainProvider:
    """Exact provider backed by a finite chain."""

    exact = True

    def __init__(self, chain: FiniteChain):
        self.chain = chain
        self.states = range(chain.n)

    def semigroup(self, t: float, f) -> np.ndarray:
        return ctmc.semigroup(self.chain, t, f)

    def evaluate(self, t: float, f, x: int) -> float:
        return float(ctmc.distribution(self.chain, t, x) @ np.asarray(f, dtype=float))

    def generator_power(self, f, x: int, k: int) -> float:
        return self.chain.generator_power(f, x, k)


def _default_eval(f, state):
    return f(state) if callable(f) else float(np.asarray(f)[state])


class MonteCarloProvider:
    """Provider for a process that can only be sampled.

    ``sample(x, t, stream)`` returns the state at time t started from x.
    Semigroup evaluations are replica means carrying a standard error.
    ``f_eval(f, state)`` reads an observable at a state; by default callables
    are called and arrays are indexed.
    """

    exact = False

    def __init__(self, sample: Callable, f_eval: Callable | None = None, replicas: int = 4000, seed: int = 0):
        self.sample = sample
        self.f_eval = f_eval or _default_eval
        self.replicas = replicas
        self.seed = seed

    def evaluate_estimate(self, t: float, f: Callable, x) -> Estimate:
        stream = RandomStream.from_seed(self.seed, "provider", int(round(t * 1e9)) & 0xFFFFFFFF)
        return estimate([self.f_eval(f, self.sample(x, t, stream)) for _ in range(self.replicas)], self.seed)

    def evaluate(self, t: float, f: Callable, x) -> float:
        return self.evaluate_estimate(t, f, x).mean


def as_provider(p) -> ChainProvider | MonteCarloProvider:
    return ChainProvider(p) if isinstance(p, FiniteChain) else p


# ---------------------------------------------------------------------------
# upper / lower generators


@dataclass(frozen=True)
class GeneratorLimit:
    upper: float
    lower: float
    converged: bool
    quotients: tuple
    extrapolated: tuple

    @property
    def flag(self) -> str:
        return "ok" if self.converged else "no-limit"

    @property
    def value(self) -> float:
        return 0.5 * (self.upper + self.lower)


def upper_lower_generator(provider, g, x, k: int = 1, t_scale: float = 1.0, tol: float = 1e-6) -> GeneratorLimit:
    """limsup / liminf of P_eps(g^k)(x) / eps for g with g(x) = 0."""
    provider = as_provider(provider)
    if callable(g) and not isinstance(g, np.ndarray):
        gx = g(x)
        h = (lambda y: g(y) ** k)
    else:
        g = np.asarray(g, dtype=float)
        gx = g[x]
        h = g**k
    if abs(gx) > 1e-12:
        raise ValueError("g must vanish at the base point")
    eps = [t_scale * e for e in LADDER]
    q = [provider.evaluate(e, h, x) / e for e in eps]
    rich = [2 * q[i + 1] - q[i] for i in range(len(q) - 1)]
    tail = rich[-3:]
    scale = max(1.0, max(abs(v) for v in tail))
    converged = (max(tail) - min(tail)) <= tol * scale
    if converged:
        up, lo = max(tail), min(tail)
    else:
        up, lo = max(q[-4:]), min(q[-4:])
    return GeneratorLimit(up, lo, converged, tuple(q), tuple(rich))


def generator_k(provider, f, x: int, k: int) -> float:
    """A[(f - f(x))^k](x); exact on chains, extrapolated otherwise."""
    provider = as_provider(provider)
    if isinstance(provider, ChainProvider):
        return provider.generator_power(f, x, k)
    f = np.asarray(f, dtype=float)
    return upper_lower_generator(provider, f - f[x], x, k).upper


# ---------------------------------------------------------------------------
# paths and the backwards martingale


@dataclass(frozen=True)
class Path:
    """Piecewise-constant path: ``states[i]`` holds on [times[i], times[i+1])."""

    times: tuple
    states: tuple
    T: float

    def state_at(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[max(i, 0)]

    def segments(self, t_end: float | None = None):
        t_end = self.T if t_end is None else t_end
        for i, (a, y) in enumerate(zip(self.times, self.states)):
            b = self.times[i + 1] if i + 1 < len(self.times) else self.T
            if a >= t_end:
                break
            yield a, min(b, t_end), y


def sample_path(chain: FiniteChain, start: int, T: float, stream: RandomStream) -> Path:
    """Gillespie path of a finite chain."""
    t, x = 0.0, start
    times, states = [0.0], [start]
    while True:
        q = chain.holding_rate(x)
        t += stream.exp(q)
        if t >= T:
            break
        row = chain.Q[x].copy()
        row[x] = 0.0
        u = stream.u() * q
        c = np.cumsum(row)
        x = int(min(np.searchsorted(c, u, side="right"), chain.n - 1))
        times.append(t)
        states.append(x)
    return Path(tuple(times), tuple(states), T)


def backwards_martingale(provider, f, path: Path, t: float) -> float:
    """M(t) = P_{T-t} f(Y_t) - P_T f(Y_0)."""
    provider = as_provider(provider)
    T = path.T
    return float(provider.semigroup(T - t, f)[path.state_at(t)] - provider.semigroup(T, f)[path.states[0]])


def martingale_increment_mean(chain: FiniteChain, f, T: float, t: float, s: float, y: int, n_max: int = 40) -> ctmc.Bounded:
    """E[M(t+s) - M(t) | Y_t = y] by path enumeration (zero for a martingale)."""
    g = ctmc.semigroup(chain, T - t - s, f)
    target = ctmc.semigroup(chain, T - t, f)[y]
    e = ctmc.enumerate_paths(chain, y, s, n_max).expect(g)
    return ctmc.Bounded(e.value - target, e.lower - target, e.upper - target)


def _qv_density(provider: ChainProvider, f, T: float):
    chain = provider.chain

    def phi(s: float) -> np.ndarray:
        h = provider.semigroup(T - s, f)
        d = h[None, :] - h[:, None]
        return np.einsum("xy,xy->x", chain.Q, d * d)

    return phi


def qv_precondition(provider, f, T: float, tol: float = 1e-6) -> dict:
    """Ladder of E_x(P_{t-eps} f(Y_eps) - P_t f(Y_eps))^2 / eps at t in {T/4, T/2, T}."""
    provider = as_provider(provider)
    if not isinstance(provider, ChainProvider):
        return {"checked": False, "ok": True, "values": ()}
    chain = provider.chain
    vals = []
    for t in (T / 4, T / 2, T):
        if t <= 0:
            continue
        row = []
        for e in LADDER:
            if e >= t:
                continue
            d = provider.semigroup(t - e, f) - provider.semigroup(t, f)
            P = np.array([ctmc.distribution(chain, e, x) for x in range(chain.n)])
            row.append(float(np.max(P @ (d * d)) / e))
        vals.append(tuple(row))
    ok = all(not r or r[-1] <= tol * max(1.0, r[0]) or r[-1] < r[0] / 100 for r in vals)
    return {"checked": True, "ok": ok, "values": tuple(vals)}


@dataclass
class QuadraticVariation:
    """t -> <M>_t along one path, plus its expectation from the path's start."""

    path: Path
    T: float
    phi: Callable = field(repr=False)
    _cum: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        acc = 0.0
        self._cum = []
        for a, b, y in self.path.segments():
            self._cum.append((a, b, y, acc))
            acc += integrate.quad(lambda s: self.phi(s)[y], a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        self.total = acc

    def __call__(self, t: float) -> float:
        for a, b, y, acc in self._cum:
            if t <= b:
                if t <= a:
                    return acc
                return acc + integrate.quad(lambda s: self.phi(s)[y], a, t, epsabs=1e-13, epsrel=1e-12)[0]
        return self.total


def predictable_qv(provider, f, path: Path, T: float | None = None, check: bool = True) -> QuadraticVariation:
    """<M>_t = int_0^t A(P_{T-s} f - P_{T-s} f(Y_s))^2(Y_s) ds along ``path``."""
    provider = as_provider(provider)
    if not isinstance(provider, ChainProvider):
        raise RefusedError("path quadrature of the quadratic variation needs an exact provider")
    T = path.T if T is None else T
    if check:
        pre = qv_precondition(provider, f, T)
        if not pre["ok"]:
            raise RefusedError(f"quadratic-variation precondition ladder does not vanish: {pre['values']}")
    return QuadraticVariation(path, T, _qv_density(provider, f, T))


def expected_qv(provider, f, x: int, T: float, t: float | None = None) -> float:
    """E_x <M>_t = int_0^t sum_y P_s(x, y) phi_s(y) ds."""
    provider = as_provider(provider)
    t = T if t is None else t
    phi = _qv_density(provider, f, T)
    chain = provider.chain
    val, _ = integrate.quad(lambda s: float(ctmc.distribution(chain, s, x) @ phi(s)), 0.0, t,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def endpoint_variance(provider, f, x: int, T: float) -> float:
    provider = as_provider(provider)
    f = np.asarray(f, dtype=float)
    p = ctmc.distribution(provider.chain, T, x)
    m = p @ f
    return float(p @ (f - m) ** 2)


# ---------------------------------------------------------------------------
# exponential super/submartingales


def series_remainder(osc: float, second: float, k_max: int) -> float:
    """Bound on sum_{k > k_max} A[(g)^k]/k! from A[g^k] <= osc^{k-2} A[g^2]."""
    if second == 0:
        return 0.0
    if osc >= k_max + 2:
        return math.inf
    lead = second * osc ** (k_max - 1) / math.factorial(k_max + 1)
    return lead / (1.0 - osc / (k_max + 2))


@dataclass(frozen=True)
class ExponentialReport:
    times: tuple
    upper_path: tuple
    lower_path: tuple
    expected_upper: tuple
    k_max: int
    remainder: float


class ExponentialMartingale:
    """N(t) = exp(M(t) - int_0^t psi(s, Y_s) ds) with
    psi(s, y) = sum_{k>=2} A[(P_{T-s}f - P_{T-s}f(y))^k](y) / k!."""

    def __init__(self, provider, f, T: float, k_max: int = K_MAX, tol: float = 1e-12):
        provider = as_provider(provider)
        if not isinstance(provider, ChainProvider):
            raise RefusedError("exponential martingale evaluation needs an exact provider")
        self.provider = provider
        self.chain = provider.chain
        self.f = np.asarray(f, dtype=float)
        self.T = T
        self.k_max = k_max
        # certify truncation on a time grid, growing k_max if needed
        worst = 0.0
        for s in np.linspace(0, T, 9):
            h = provider.semigroup(T - s, self.f)
            osc = float(h.max() - h.min())
            for y in range(self.chain.n):
                second = self.chain.generator_power(h, y, 2)
                rem = series_remainder(osc, second, self.k_max)
                while rem > tol and self.k_max < 80:
                    self.k_max += 10
                    rem = series_remainder(osc, second, self.k_max)
                if rem > tol:
                    raise RefusedError(f"series truncation remainder {rem:g} above tolerance")
                worst = max(worst, rem)
        self.remainder = worst

    def psi(self, s: float, truncated: bool = True) -> np.ndarray:
        h = self.provider.semigroup(self.T - s, self.f)
        d = h[None, :] - h[:, None]
        if not truncated:
            return np.einsum("xy,xy->x", self.chain.Q, np.expm1(d) - d)
        out = np.zeros(self.chain.n)
        fact = 1.0
        for k in range(2, self.k_max + 1):
            fact *= k
            out += np.einsum("xy,xy->x", self.chain.Q, d**k) / fact
        return out

    def along(self, path: Path, times: Sequence[float]) -> tuple[list, list]:
        """(upper, lower) processes sampled at ``times``; equal on a finite chain."""
        out = []
        for t in times:
            m = backwards_martingale(self.provider, self.f, path, t)
            integral = 0.0
            for a, b, y in path.segments(t):
                integral += integrate.quad(lambda s: self.psi(s)[y], a, b, epsabs=1e-13, epsrel=1e-12)[0]
            out.append(math.exp(m - integral))
        return out, list(out)

    def expected(self, x: int, t: float, rtol: float = 1e-12) -> float:
        """E_x N(t) by the Feynman-Kac forward equation
        dw/ds = w Q - w * psi(s), N = exp(P_{T-t}f(Y_t) - P_T f(x)) * weight."""
        Q = self.chain.Q
        w0 = np.zeros(self.chain.n)
        w0[x] = 1.0
        if t == 0:
            return 1.0
        sol = integrate.solve_ivp(lambda s, w: w @ Q - w * self.psi(s), (0.0, t), w0,
                                  method="DOP853", rtol=rtol, atol=1e-14)
        w = sol.y[:, -1]
        h_t = self.provider.semigroup(self.T - t, self.f)
        h_0 = self.provider.semigroup(self.T, self.f)[x]
        return float(w @ np.exp(h_t - h_0))

    def report(self, x: int, times: Sequence[float], path: Path | None = None) -> ExponentialReport:
        up = lo = ()
        if path is not None:
            u, l = self.along(path, times)
            up, lo = tuple(u), tuple(l)
        return ExponentialReport(tuple(times), up, lo, tuple(self.expected(x, t) for t in times),
                                 self.k_max, self.remainder)


def exponential_supermartingale(provider, f, T: float, times: Sequence[float], x: int = 0,
                                path: Path | None = None, k_max: int = K_MAX) -> ExponentialReport:
    return ExponentialMartingale(provider, f, T, k_max).report(x, times, path)


# ---------------------------------------------------------------------------
# tail and moment bounds


def bernstein_exponent(r: float, T: float, c1: float, c2: float) -> float:
    if r <= 0:
        return 0.0
    return -0.5 * (r / c2) ** 2 / (T * c1 + r / (3 * c2))


@dataclass(frozen=True)
class TailBound:
    bound: float
    offset: float
    c1: float
    c2: float
    certified: bool
    label: str = "certified"


def certify_constants(provider, f, T: float, k_max: int = K_MAX, n_t: int = 33) -> tuple[float, float]:
    """(c1, c2) with A(P_t f - P_t f(x))^k(x) <= c1 c2^k on a t-grid, all states, k <= k_max.

    c2 is the largest jump of P_t f and c1 the largest total jump rate,
    which dominates every k since each term is a rate times a jump^k.
    """
    provider = as_provider(provider)
    chain = provider.chain
    c2 = 0.0
    for t in np.linspace(0, T, n_t):
        h = provider.semigroup(t, f)
        d = np.abs(h[None, :] - h[:, None])
        d[chain.Q <= 0] = 0.0
        c2 = max(c2, float(d.max()))
    c1 = float(max(chain.holding_rate(x) for x in range(chain.n)))
    for t in np.linspace(0, T, n_t):
        h = provider.semigroup(t, f)
        for x in range(chain.n):
            for k in range(2, k_max + 1):
                if provider.generator_power(h, x, k) > c1 * c2**k * (1 + 1e-9) + 1e-15:
                    raise RefusedError("certification scan failed")
    return c1, c2


def tail_bound(provider, f, T: float, r: float, c1: float | None = None, c2: float | None = None,
               two_measure: bool = False) -> TailBound:
    """exp(-(r/c2)^2 / 2 / (T c1 + r / (3 c2))) for P(f(Y_T) - E f(Y_T) > r [+ osc P_T f])."""
    certified = True
    if c1 is None or c2 is None:
        c1, c2 = certify_constants(provider, f, T)
    offset = 0.0
    if two_measure:
        h = as_provider(provider).semigroup(T, f)
        offset = float(h.max() - h.min())
    if c2 == 0:
        return TailBound(0.0 if r > 0 else 1.0, offset, c1, c2, certified)
    return TailBound(math.exp(bernstein_exponent(r, T, c1, c2)), offset, c1, c2, certified)


def exact_tail(chain: FiniteChain, f, x: int, T: float, r: float) -> float:
    """P_x(f(Y_T) - E_x f(Y_T) > r).

    The comparison carries a 1e-9 guard so that an integer-valued f does not
    cross an integer threshold through rounding of the mean."""
    f = np.asarray(f, dtype=float)
    p = ctmc.distribution(chain, T, x)
    m = p @ f
    return float(p[f - m > r + 1e-9].sum())


@dataclass(frozen=True)
class AdditiveBound:
    bound: float
    threshold: float
    c1: float
    c2: float


def _integrated_semigroup(provider: ChainProvider, f, T: float) -> np.ndarray:
    return integrate.quad_vec(lambda t: provider.semigroup(t, f), 0.0, T, epsabs=1e-13, epsrel=1e-12)[0]


def certify_additive(provider, f, T: float, n_t: int = 33) -> tuple[float, float]:
    """c1 = sup_{x,y,T'<=T} int_0^T' P_t f(x) - P_t f(y) dt;
    c2 = sup_{x,T'} A(int_0^T' P_t f - P_t f(x) dt)^2(x) / c1^2."""
    provider = as_provider(provider)
    c1, num = 0.0, 0.0
    for Tp in np.linspace(0, T, n_t)[1:]:
        G = _integrated_semigroup(provider, f, Tp)
        c1 = max(c1, float(G.max() - G.min()))
        num = max(num, max(provider.generator_power(G, x, 2) for x in range(provider.chain.n)))
    c2 = num / c1**2 if c1 > 0 else 0.0
    return c1, c2


def additive_functional_bound(provider, f, T: float, r: float, c1: float | None = None,
                              c2: float | None = None, x: int | None = 0) -> AdditiveBound:
    """Bound on P(int_0^T f(Y_t) dt > c1 (r + 1) + int_0^T P_t f dt).

    With a fixed start ``x`` (equal Dirac measures) the threshold is c1 r.
    """
    provider = as_provider(provider)
    if c1 is None or c2 is None:
        c1, c2 = certify_additive(provider, f, T)
    mean = float(_integrated_semigroup(provider, f, T)[x]) if x is not None else math.nan
    threshold = c1 * (r if x is not None else r + 1) + mean
    if r <= 0:
        b = 1.0
    elif c1 == 0:
        b = 0.0  # the integral is deterministic
    else:
        b = math.exp(-0.5 * r**2 / (T * c2 + r / 3))
    return AdditiveBound(b, threshold, c1, c2)


def exact_additive_tail(chain: FiniteChain, f, x: int, T: float, threshold: float, n_max: int = 80) -> ctmc.Bounded:
    """P_x(int_0^T f(Y_t) dt > threshold) for a two-valued f, by enumeration."""
    f = np.asarray(f, dtype=float)
    vals = np.unique(f)
    if len(vals) == 1:
        v = 1.0 if vals[0] * T > threshold else 0.0
        return ctmc.Bounded(v, v, v)
    if len(vals) != 2:
        raise RefusedError("exact occupation law is available for two-valued observables only")
    lo, hi = vals
    marked = [i for i in range(chain.n) if f[i] == hi]
    ps = ctmc.enumerate_paths(chain, x, T, n_max, marked=marked)
    c = (threshold - lo * T) / (hi - lo)
    return ps.occupation_tail(c)


@dataclass(frozen=True)
class MomentBound:
    bound: float
    terms: tuple
    exact_moment: float
    c_p: float
    label: str

    @property
    def holds(self) -> bool:
        return self.exact_moment <= self.bound * (1 + 1e-12)


def moment_bound(provider, f, T: float, p: float, c_p: float | None = None,
                 nu1: Sequence[float] | int = 0, nu2: Sequence[float] | int = 0) -> MomentBound:
    """C_p [ (E (int QV density)^{p/2})^{1/p} + (E sup|jump|^p)^{1/p} ] + (int |P_T f - nu2(P_T f)|^p dnu1)^{1/p}.

    The first term is exact for p = 2 (the quadratic-variation identity);
    for other p it, like the jump term, is replaced by its deterministic
    supremum over states, which can only enlarge the bound.  The returned
    ``exact_moment`` is the p-th root of E_{nu1}|f(Y_T) - E_{nu2} f(Y_T)|^p.
    """
    provider = as_provider(provider)
    chain = provider.chain
    f = np.asarray(f, dtype=float)
    c_p = 4.0**p if c_p is None else c_p

    def law(nu):
        if isinstance(nu, (int, np.integer)):
            e = np.zeros(chain.n)
            e[nu] = 1.0
            return e
        return np.asarray(nu, dtype=float)

    m1, m2 = law(nu1), law(nu2)
    phi = _qv_density(provider, f, T)
    if p == 2:
        t1 = math.sqrt(integrate.quad(lambda s: float((m1 @ np.array([ctmc.distribution(chain, s, x) for x in range(chain.n)])) @ phi(s)),
                                      0.0, T, epsabs=1e-13, epsrel=1e-12, limit=200)[0])
    else:
        t1 = integrate.quad(lambda s: float(phi(s).max()), 0.0, T, limit=200)[0] ** 0.5
    jump = 0.0
    for s in np.linspace(0, T, 65):
        h = provider.semigroup(T - s, f)
        d = np.abs(h[None, :] - h[:, None])
        d[chain.Q <= 0] = 0.0
        jump = max(jump, float(d.max()))
    hT = provider.semigroup(T, f)
    t3 = float(m1 @ np.abs(hT - m2 @ hT) ** p) ** (1 / p)
    bound = c_p * (t1 + jump) + t3
    pT = m1 @ np.array([ctmc.distribution(chain, T, x) for x in range(chain.n)])
    target = m2 @ hT
    exact = float(pT @ np.abs(f - target) ** p) ** (1 / p)
    return MomentBound(bound, (t1, jump, t3), exact, c_p, "shape check only")
