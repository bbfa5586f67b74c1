"""Exact finite-state continuous-time Markov chains.

The semigroup is evaluated by uniformization: with ``lam = max_i |Q_ii|``
and ``P = I + Q/lam``,

    P_t f = sum_n Poisson(n; lam t) P^n f,

truncated once the remaining Poisson mass drops below ``tol``.

Path enumeration runs on the same uniformized skeleton.  Jump sequences are
aggregated by dynamic programming over (real jumps so far, current state,
segments spent in a marked set), which keeps every probability exact while
the explicit sequence count would explode.  Occupation times of a marked set
are exact because, given n uniformized steps, the n+1 holding segments are
Dirichlet(1, ..., 1) distributed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats as sps

from .errors import ModelError, RefusedError

TOL = 1e-12


class FiniteChain:
    """A CTMC on states 0..n-1 given by its rate matrix."""

    def __init__(self, Q, observables: dict | None = None):
        Q = np.array(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ModelError("rate matrix must be square")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0):
            raise ModelError("off-diagonal rates must be nonnegative")
        if np.any(np.abs(Q.sum(axis=1)) > 1e-12 * max(1.0, np.abs(Q).max())):
            raise ModelError("rows of the rate matrix must sum to zero")
        Q.setflags(write=False)
        self.Q = Q
        self.n = Q.shape[0]
        self.lam = float(np.max(-np.diag(Q))) if self.n else 0.0
        P = np.eye(self.n) + (Q / self.lam if self.lam > 0 else 0.0)
        P.setflags(write=False)
        self.P = P
        self.observables = {k: np.asarray(v, dtype=float) for k, v in (observables or {}).items()}

    @classmethod
    def two_state(cls, a: float = 1.0, b: float = 1.0) -> "FiniteChain":
        return cls([[-a, a], [b, -b]], {"indicator": [0.0, 1.0]})

    @classmethod
    def birth(cls, n_states: int, rate: float = 1.0) -> "FiniteChain":
        """Pure birth chain 0 -> 1 -> ... -> n-1 (absorbing top state)."""
        Q = np.zeros((n_states, n_states))
        for i in range(n_states - 1):
            Q[i, i + 1] = rate
            Q[i, i] = -rate
        return cls(Q, {"index": np.arange(n_states, dtype=float)})

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, max_rate: float = 1.0, density: float = 1.0) -> "FiniteChain":
        Q = rng.uniform(0, max_rate, size=(n, n)) * (rng.uniform(size=(n, n)) < density)
        np.fill_diagonal(Q, 0.0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return cls(Q)

    def generator(self, f: Sequence[float]) -> np.ndarray:
        """(A f)(x) = sum_y Q(x, y) f(y)."""
        return self.Q @ np.asarray(f, dtype=float)

    def generator_power(self, f: Sequence[float], x: int, k: int) -> float:
        """A[(f - f(x))^k](x), exact."""
        f = np.asarray(f, dtype=float)
        return float(self.Q[x] @ (f - f[x]) ** k)

    def holding_rate(self, x: int) -> float:
        return float(-self.Q[x, x])


def poisson_cutoff(mean: float, tol: float = TOL) -> int:
    """Smallest N with P(Poisson(mean) > N) < tol."""
    if mean <= 0:
        return 0
    n = int(sps.poisson.isf(tol, mean)) + 1
    while sps.poisson.sf(n, mean) >= tol:
        n += 1
    return n


def poisson_weights(mean: float, n: int) -> np.ndarray:
    """Poisson(mean) probabilities for 0..n, computed in log space."""
    k = np.arange(n + 1)
    if mean == 0:
        w = np.zeros(n + 1)
        w[0] = 1.0
        return w
    return np.exp(k * math.log(mean) - mean - np.array([math.lgamma(i + 1) for i in k]))


def semigroup(chain: FiniteChain, t: float, f: Sequence[float], tol: float = TOL) -> np.ndarray:
    """P_t f by uniformization."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    f = np.asarray(f, dtype=float)
    if t == 0 or chain.lam == 0:
        return f.copy()
    mean = chain.lam * t
    N = poisson_cutoff(mean, tol)
    w = poisson_weights(mean, N)
    out = w[0] * f
    v = f
    for n in range(1, N + 1):
        v = chain.P @ v
        out = out + w[n] * v
    return out


def distribution(chain: FiniteChain, t: float, start, tol: float = TOL) -> np.ndarray:
    """Row vector of the law of Y_t given Y_0 ~ start (index or vector)."""
    mu = np.zeros(chain.n)
    if isinstance(start, (int, np.integer)):
        mu[start] = 1.0
    else:
        mu = np.asarray(start, dtype=float)
    if t == 0 or chain.lam == 0:
        return mu
    mean = chain.lam * t
    N = poisson_cutoff(mean, tol)
    w = poisson_weights(mean, N)
    out = w[0] * mu
    v = mu
    for n in range(1, N + 1):
        v = v @ chain.P
        out = out + w[n] * v
    return out


# ---------------------------------------------------------------------------
# path enumeration


@dataclass(frozen=True)
class Bounded:
    """Enumerated value with a rigorous two-sided error interval."""

    value: float
    lower: float
    upper: float

    @property
    def error(self) -> float:
        return max(self.upper - self.value, self.value - self.lower)


class PathSet:
    """All jump sequences with at most ``n_max`` real jumps from ``start`` over [0, T].

    Weights are aggregated by (real jumps, final state, uniformized segments in
    ``marked``).  ``tail_mass`` is the probability of the paths left out.
    """

    def __init__(self, chain: FiniteChain, start: int, T: float, n_max: int,
                 marked: Iterable[int] = (), tol: float = 1e-15):
        if n_max < 0:
            raise ValueError("n_max must be nonnegative")
        if T < 0:
            raise ValueError("horizon must be nonnegative")
        self.chain, self.start, self.T, self.n_max = chain, start, T, n_max
        self.marked = frozenset(marked)
        lam = chain.lam
        mean = lam * T
        m_max = max(poisson_cutoff(mean, tol), n_max) if lam > 0 else 0
        self.m_max = m_max
        pw = poisson_weights(mean, m_max)
        n, P = chain.n, chain.P
        in_mark = np.array([i in self.marked for i in range(n)])
        # cur[j, x, k]: uniformized-path weight with j real jumps, at x, k marked segments
        cur = np.zeros((n_max + 1, n, m_max + 2))
        cur[0, start, 1 if in_mark[start] else 0] = 1.0
        acc = np.zeros_like(cur)
        # acc_m[m] needs separate k-distribution per m for Beta occupation; keep a list
        self._by_m = []
        for m in range(m_max + 1):
            self._by_m.append((pw[m], cur))
            acc += pw[m] * cur
            if m == m_max:
                break
            nxt = np.zeros_like(cur)
            diag = np.diag(P)
            # self steps: stay, no real jump, one more segment in the same state
            for x in range(n):
                shift = 1 if in_mark[x] else 0
                if diag[x] > 0:
                    if shift:
                        nxt[:, x, 1:] += diag[x] * cur[:, x, :-1]
                    else:
                        nxt[:, x, :] += diag[x] * cur[:, x, :]
            for x in range(n):
                for y in range(n):
                    if x == y or P[x, y] == 0:
                        continue
                    if in_mark[y]:
                        nxt[1:, y, 1:] += P[x, y] * cur[:-1, x, :-1]
                    else:
                        nxt[1:, y, :] += P[x, y] * cur[:-1, x, :]
            cur = nxt
        self.weights = acc
        self.mass = float(acc.sum())
        self.tail_mass = max(0.0, 1.0 - self.mass)

    def endpoint_law(self) -> np.ndarray:
        return self.weights.sum(axis=(0, 2))

    def jump_count_law(self) -> np.ndarray:
        return self.weights.sum(axis=(1, 2))

    def expect(self, g: Sequence[float]) -> Bounded:
        """E g(Y_T) with the rigorous error from the left-out mass."""
        g = np.asarray(g, dtype=float)
        v = float(self.endpoint_law() @ g)
        return Bounded(v, v + self.tail_mass * min(g.min(), 0.0), v + self.tail_mass * max(g.max(), 0.0))

    def probability(self, event: Sequence[bool]) -> Bounded:
        e = np.asarray(event, dtype=float)
        v = float(self.endpoint_law() @ e)
        return Bounded(v, v, v + self.tail_mass)

    def expect_path(self, functional: Callable[[int, int], float], bound: tuple[float, float]) -> Bounded:
        """E F where F depends on (real jump count, final state) only."""
        lo, hi = bound
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise RefusedError("functional unbounded on the left-out paths; no rigorous tail control")
        law = self.weights.sum(axis=2)
        v = sum(law[j, x] * functional(j, x) for j in range(law.shape[0]) for x in range(law.shape[1]) if law[j, x] > 0)
        return Bounded(v, v + self.tail_mass * min(lo, 0.0), v + self.tail_mass * max(hi, 0.0))

    def occupation_tail(self, c: float) -> Bounded:
        """P(time spent in ``marked`` during [0, T] > c)."""
        if not self.marked:
            raise RefusedError("occupation functional needs a marked set")
        T = self.T
        total = 0.0
        for m, (pw, cur) in enumerate(self._by_m):
            if pw == 0:
                continue
            ks = cur.sum(axis=(0, 1))
            for k in range(m + 2):
                wk = ks[k]
                if wk == 0:
                    continue
                if k == 0:
                    p = 0.0 if c >= 0 else 1.0
                elif k == m + 1:
                    p = 1.0 if c < T else 0.0
                else:
                    p = float(sps.beta.sf(c / T, k, m + 1 - k)) if T > 0 else 0.0
                total += pw * wk * p
        return Bounded(total, total, total + self.tail_mass)

    def sequences(self) -> list:
        """Explicit (state sequence, probability) list; only for small chains."""
        if self.chain.n ** self.n_max > 200_000:
            raise RefusedError("too many sequences to list explicitly")
        out = []
        for j in range(self.n_max + 1):
            for tail in itertools.product(range(self.chain.n), repeat=j):
                seq = (self.start,) + tail
                if any(a == b for a, b in zip(seq, seq[1:])):
                    continue
                p = sequence_probability(self.chain, seq, self.T)
                if p > 0:
                    out.append((seq, p))
        return out


def enumerate_paths(chain: FiniteChain, start: int, T: float, n_max: int, marked: Iterable[int] = ()) -> PathSet:
    return PathSet(chain, start, T, n_max, marked)


def sequence_probability(chain: FiniteChain, seq: Sequence[int], T: float, tol: float = 1e-15) -> float:
    """Probability that the chain performs exactly the jumps ``seq`` during [0, T].

    Product of embedded jump rates times the holding-time convolution, which
    is evaluated by uniformizing the bidiagonal phase-type generator; the
    recursion has only nonnegative terms and is stable for large rate*T.
    """
    n = len(seq) - 1
    q = np.array([chain.holding_rate(s) for s in seq])
    rate_prod = 1.0
    for a, b in zip(seq, seq[1:]):
        rate_prod *= chain.Q[a, b]
    if rate_prod == 0:
        return 0.0
    lam = float(q.max())
    if lam == 0:
        return 1.0 if n == 0 else 0.0
    mean = lam * T
    N = poisson_cutoff(mean, tol)
    w = poisson_weights(mean, N)
    # phases 0..n, transition i -> i+1 at rate 1 (rates folded into rate_prod)
    # per-step matrix: stay with 1 - q_i/lam, advance with 1/lam
    v = np.zeros(n + 1)
    v[0] = 1.0
    conv = w[0] * v[n]
    stay = 1.0 - q / lam
    for m in range(1, N + 1):
        nv = stay * v
        nv[1:] += v[:-1] / lam
        v = nv
        conv += w[m] * v[n]
    return float(rate_prod * conv)
