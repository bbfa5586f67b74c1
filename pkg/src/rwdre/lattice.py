"""Torus geometry, configurations, local functions and their seminorms.

Sites of the d-dimensional torus Z_L^d are stored as flat integer indices;
walker positions are kept unwrapped (tuples of ints on Z^d) and reduced
modulo L only when the environment is read.

Local functions depend on a finite window of offsets.  Their single-site
Lipschitz constants, the triple norm (sum of those constants) and the
oscillation are computed by exhaustive evaluation over the window: exact
for binary sites, on a uniform grid (default step 1/64) for unit-interval
sites.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import EvaluationError, ModelError

Site = tuple  # tuple[int, ...]

MAX_GRID_CONFIGS = 2_000_000


def _as_site(x, d: int) -> Site:
    if isinstance(x, (int, np.integer)):
        x = (int(x),)
    x = tuple(int(v) for v in x)
    if len(x) != d:
        raise ModelError(f"site {x} does not have dimension {d}")
    return x


def origin(d: int) -> Site:
    return (0,) * d


def unit_vector(d: int, k: int, sign: int = 1) -> Site:
    return tuple(sign if j == k else 0 for j in range(d))


def add(a: Site, b: Site) -> Site:
    return tuple(x + y for x, y in zip(a, b))


def sub(a: Site, b: Site) -> Site:
    return tuple(x - y for x, y in zip(a, b))


@dataclass(frozen=True)
class TorusGeometry:
    """The torus Z_L^d with periodic shifts."""

    d: int
    L: int
    _strides: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1 or self.L < 1:
            raise ModelError(f"invalid torus d={self.d}, L={self.L}")
        object.__setattr__(self, "_strides", tuple(self.L**k for k in range(self.d)))

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    def index(self, pos: Sequence[int]) -> int:
        L = self.L
        if self.d == 1:
            return pos[0] % L
        return sum((p % L) * s for p, s in zip(pos, self._strides))

    def coords(self, idx: int) -> Site:
        out = []
        for _ in range(self.d):
            idx, r = divmod(idx, self.L)
            out.append(r)
        return tuple(out)

    def all_sites(self) -> list[Site]:
        return [self.coords(i) for i in range(self.n_sites)]

    def shift_perm(self, x: Sequence[int]) -> np.ndarray:
        """Index array ``p`` with ``shifted = values[p]`` for the shift by x,
        i.e. ``shifted(y) = values(y - x)``."""
        x = _as_site(x, self.d)
        return np.array(
            [self.index(sub(self.coords(i), x)) for i in range(self.n_sites)], dtype=np.int64
        )

    def neighbors(self, idx: int) -> list[int]:
        c = self.coords(idx)
        out = []
        for k in range(self.d):
            for s in (1, -1):
                out.append(self.index(add(c, unit_vector(self.d, k, s))))
        return out

    def neighbor_table(self) -> np.ndarray:
        return np.array([self.neighbors(i) for i in range(self.n_sites)], dtype=np.int64)


@dataclass(frozen=True)
class SiteSpace:
    """Single-site space E with its metric rho (bounded by 1)."""

    kind: str = "binary"
    grid_step: float = 1.0 / 64.0

    def __post_init__(self):
        if self.kind not in ("binary", "unit"):
            raise ModelError(f"unknown site space {self.kind!r}")

    def rho(self, a: float, b: float) -> float:
        if self.kind == "binary":
            return 0.0 if a == b else 1.0
        return min(1.0, abs(a - b))

    def grid(self) -> np.ndarray:
        if self.kind == "binary":
            return np.array([0.0, 1.0])
        n = int(round(1.0 / self.grid_step))
        return np.linspace(0.0, 1.0, n + 1)

    def rho_matrix(self) -> np.ndarray:
        g = self.grid()
        if self.kind == "binary":
            return (g[:, None] != g[None, :]).astype(float)
        return np.minimum(1.0, np.abs(g[:, None] - g[None, :]))


BINARY = SiteSpace("binary")
UNIT = SiteSpace("unit")


@dataclass(frozen=True)
class Configuration:
    """Assignment of a site value to every torus site."""

    geometry: TorusGeometry
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.geometry.n_sites,):
            raise ModelError(
                f"configuration has {v.shape} values, torus has {self.geometry.n_sites} sites"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, geometry: TorusGeometry, value: float) -> "Configuration":
        return cls(geometry, np.full(geometry.n_sites, float(value)))

    def __getitem__(self, pos) -> float:
        return float(self.values[self.geometry.index(_as_site(pos, self.geometry.d))])

    def shift(self, x: Sequence[int]) -> "Configuration":
        """theta_x: shifted(y) = original(y - x)."""
        return Configuration(self.geometry, self.values[self.geometry.shift_perm(x)])

    def with_value(self, pos, value: float) -> "Configuration":
        v = self.values.copy()
        v[self.geometry.index(_as_site(pos, self.geometry.d))] = value
        return Configuration(self.geometry, v)


# ---------------------------------------------------------------------------
# local functions


class LocalFunction:
    """A real function of a configuration that only reads a finite window.

    ``window`` is a tuple of offsets; ``evaluate(values)`` receives the site
    values at those offsets (in window order).  Calling the function on a
    :class:`Configuration` evaluates it on ``theta_{-at} config``, that is on
    the configuration as seen from site ``at``.
    """

    window: tuple = ()
    name: str = "local"

    def evaluate(self, values: Sequence[float]) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def d(self) -> int:
        return len(self.window[0]) if self.window else self._d

    _d = 1

    def __call__(self, config: Configuration, at: Sequence[int] | None = None) -> float:
        geo = config.geometry
        at = origin(geo.d) if at is None else _as_site(at, geo.d)
        vals = [config.values[geo.index(add(at, o))] for o in self.window]
        return checked(self.evaluate(vals))

    def __add__(self, other: "LocalFunction") -> "LocalFunction":
        return Sum((self, other))

    def __mul__(self, a: float) -> "LocalFunction":
        return Scaled(self, float(a))

    __rmul__ = __mul__

    def __repr__(self):
        return f"<{self.name}>"


def checked(v: float) -> float:
    if not math.isfinite(v):
        raise EvaluationError(f"local function returned non-finite value {v!r}")
    return v


class Constant(LocalFunction):
    def __init__(self, c: float, d: int = 1):
        self.c = float(c)
        self.window = ()
        self._d = d
        self.name = f"constant({self.c:g})"

    def evaluate(self, values):
        return self.c


class Projection(LocalFunction):
    """f(eta) = eta(site)."""

    def __init__(self, site):
        site = tuple(site) if not isinstance(site, int) else (site,)
        self.window = (site,)
        self.name = f"projection({site})"

    def evaluate(self, values):
        return values[0]


class Product(LocalFunction):
    """f(eta) = prod_k eta(site_k)."""

    def __init__(self, sites):
        self.window = tuple(tuple(s) if not isinstance(s, int) else (s,) for s in sites)
        if len(set(self.window)) != len(self.window):
            raise ModelError("product sites must be distinct")
        self.name = f"product{self.window}"

    def evaluate(self, values):
        out = 1.0
        for v in values:
            out *= v
        return out


class Affine(LocalFunction):
    """f(eta) = base + sum_k slope_k * eta(site_k)."""

    def __init__(self, base: float, coeffs: Mapping, d: int | None = None):
        self.base = float(base)
        items = [((k,) if isinstance(k, int) else tuple(k), float(v)) for k, v in coeffs.items()]
        self.window = tuple(k for k, _ in items)
        self.slopes = tuple(v for _, v in items)
        if d is not None:
            self._d = d
        self.name = f"affine({self.base:g}; {dict(items)})"

    def evaluate(self, values):
        out = self.base
        for s, v in zip(self.slopes, values):
            out += s * v
        return out


class Generic(LocalFunction):
    """Wrap an arbitrary callable of the window values."""

    def __init__(self, window, fn: Callable[[Sequence[float]], float], name: str = "generic"):
        self.window = tuple(tuple(s) for s in window)
        self.fn = fn
        self.name = name

    def evaluate(self, values):
        return self.fn(values)


class _Composite(LocalFunction):
    def __init__(self, parts: Iterable[LocalFunction]):
        self.parts = tuple(parts)
        window: list = []
        for p in self.parts:
            for o in p.window:
                if o not in window:
                    window.append(o)
        self.window = tuple(window)
        pos = {o: i for i, o in enumerate(self.window)}
        self._maps = tuple(tuple(pos[o] for o in p.window) for p in self.parts)
        if not self.window and self.parts:
            self._d = self.parts[0].d


class Sum(_Composite):
    def __init__(self, parts):
        super().__init__(parts)
        self.name = " + ".join(p.name for p in self.parts)

    def evaluate(self, values):
        return sum(p.evaluate([values[i] for i in m]) for p, m in zip(self.parts, self._maps))


class Scaled(_Composite):
    def __init__(self, f: LocalFunction, a: float):
        super().__init__((f,))
        self.a = a
        self.name = f"{a:g}*({f.name})"

    def evaluate(self, values):
        return self.a * self.parts[0].evaluate(values)


def projection(site) -> Projection:
    return Projection(site)


def product(*sites) -> Product:
    return Product(sites)


# ---------------------------------------------------------------------------
# seminorms


def window_table(f: LocalFunction, space: SiteSpace) -> np.ndarray:
    """f evaluated on every window configuration over the site grid.

    Axis k of the result corresponds to ``f.window[k]``.
    """
    grid = space.grid()
    m = len(f.window)
    if len(grid) ** m > MAX_GRID_CONFIGS:
        raise ModelError(
            f"window of {m} sites too large for exhaustive evaluation on {len(grid)} grid values"
        )
    if m == 0:
        return np.array(checked(float(f.evaluate(()))))
    out = np.empty((len(grid),) * m)
    for ix in itertools.product(range(len(grid)), repeat=m):
        out[ix] = f.evaluate([grid[i] for i in ix])
    if not np.all(np.isfinite(out)):
        raise EvaluationError(f"{f.name} returned non-finite values on the window grid")
    return out


def lipschitz_constant(f: LocalFunction, x, space: SiteSpace = BINARY) -> float:
    """delta_f(x): sup of |f(eta)-f(xi)| / rho(eta(x), xi(x)) over pairs that
    differ only at site x."""
    d = f.d
    x = _as_site(x, d)
    if x not in f.window:
        return 0.0
    k = f.window.index(x)
    table = np.moveaxis(window_table(f, space), k, -1)
    G = table.shape[-1]
    flat = table.reshape(-1, G)
    rho = space.rho_matrix()
    off = ~np.eye(G, dtype=bool)
    diffs = np.abs(flat[:, :, None] - flat[:, None, :])[:, off]
    return float(np.max(diffs / rho[off][None, :]))


def lipschitz_table(f: LocalFunction, space: SiteSpace = BINARY) -> dict:
    return {x: lipschitz_constant(f, x, space) for x in f.window}


def triple_norm(f: LocalFunction, space: SiteSpace = BINARY) -> float:
    """|||f||| = sum over sites of delta_f."""
    return float(sum(lipschitz_table(f, space).values()))


def osc_norm(f: LocalFunction, space: SiteSpace = BINARY) -> float:
    table = window_table(f, space)
    return float(np.max(table) - np.min(table))


def sup_norm(f: LocalFunction, space: SiteSpace = BINARY) -> tuple[float, float]:
    """(inf f, sup f) over the window grid."""
    table = window_table(f, space)
    return float(np.min(table)), float(np.max(table))


# ---------------------------------------------------------------------------
# rate families


@dataclass(frozen=True)
class RateNorms:
    p: float
    alpha_p: float
    triple_alpha: float
    triple_alpha_1: float
    alpha_0: float
    grid_step: float | None


class RateFamily:
    """Jump rates alpha(., z) of the walker, one local function per jump z.

    The envelopes ``lam[z] = sup_eta alpha(eta, z)`` are computed on the
    window grid at construction; negative rates raise :class:`ModelError`.
    """

    def __init__(self, jumps: Mapping, space: SiteSpace = BINARY):
        if not jumps:
            raise ModelError("rate family needs at least one jump (use a zero rate for a frozen walker)")
        self.space = space
        self.jumps = tuple(tuple(int(c) for c in z) for z in jumps)
        self.rates = tuple(jumps.values())
        ds = {len(z) for z in self.jumps}
        if len(ds) != 1:
            raise ModelError("jumps have inconsistent dimensions")
        self.d = ds.pop()
        lam = []
        for z, a in zip(self.jumps, self.rates):
            lo, hi = sup_norm(a, space)
            if lo < 0:
                raise ModelError(f"negative rate {lo} for jump {z}")
            lam.append(hi)
        self.lam = tuple(lam)
        self.lambda_total = float(sum(lam))

    @classmethod
    def affine(cls, specs: Iterable[Mapping], space: SiteSpace = BINARY, eps: float = 1.0):
        """Build from ``{z, base, slope, site}`` records; the slope is scaled by eps."""
        jumps = {}
        for s in specs:
            z = tuple(s["z"]) if not isinstance(s["z"], int) else (s["z"],)
            site = s.get("site", (0,) * len(z))
            site = (site,) if isinstance(site, int) else tuple(site)
            slope = float(s.get("slope", 0.0)) * eps
            f = Affine(s["base"], {site: slope} if slope != 0.0 else {}, d=len(z))
            if z in jumps:
                jumps[z] = jumps[z] + f
            else:
                jumps[z] = f
        return cls(jumps, space)

    @classmethod
    def constant(cls, rates: Mapping, space: SiteSpace = BINARY):
        jumps = {}
        for z, r in rates.items():
            z = (z,) if isinstance(z, int) else tuple(z)
            jumps[z] = Constant(r, d=len(z))
        return cls(jumps, space)

    def __len__(self):
        return len(self.jumps)

    def triple_norms(self) -> list[float]:
        return [triple_norm(a, self.space) for a in self.rates]

    @property
    def is_env_independent(self) -> bool:
        return all(t == 0.0 for t in self.triple_norms())

    @property
    def gamma_plus(self) -> np.ndarray:
        return sum(
            (lam * np.maximum(np.array(z), 0) for z, lam in zip(self.jumps, self.lam)),
            np.zeros(self.d),
        )

    @property
    def gamma_minus(self) -> np.ndarray:
        return sum(
            (lam * np.minimum(np.array(z), 0) for z, lam in zip(self.jumps, self.lam)),
            np.zeros(self.d),
        )

    @property
    def gamma_spread(self) -> float:
        """||gamma+ - gamma-||_inf."""
        return float(np.max(np.abs(self.gamma_plus - self.gamma_minus)))

    @property
    def max_jump(self) -> float:
        return max(math.hypot(*z) for z, lam in zip(self.jumps, self.lam) if lam > 0) if self.lambda_total else 0.0

    def drift(self, u: Sequence[float] | None = None) -> LocalFunction:
        """g(eta) = sum_z <z, u> alpha(eta, z); u defaults to e_1."""
        u = np.eye(self.d)[0] if u is None else np.asarray(u, dtype=float)
        parts = [Scaled(a, float(np.dot(z, u))) for z, a in zip(self.jumps, self.rates) if np.dot(z, u) != 0]
        if not parts:
            return Constant(0.0, self.d)
        return Sum(parts)

    def drift_vector(self) -> list[LocalFunction]:
        return [self.drift(np.eye(self.d)[k]) for k in range(self.d)]

    def variance_density(self, u: Sequence[float] | None = None) -> LocalFunction:
        """sum_z <z, u>^2 alpha(eta, z)."""
        u = np.eye(self.d)[0] if u is None else np.asarray(u, dtype=float)
        parts = [Scaled(a, float(np.dot(z, u)) ** 2) for z, a in zip(self.jumps, self.rates) if np.dot(z, u) != 0]
        return Sum(parts) if parts else Constant(0.0, self.d)

    def norms(self, p: float = 1.0) -> RateNorms:
        return rate_norms(self, p)


def rate_norms(alpha: RateFamily, p: float = 1.0) -> RateNorms:
    """||alpha||_p, |||alpha|||, |||alpha|||_1 and ||alpha||_0 (Euclidean ||z||)."""
    if p < 1:
        raise ModelError("p must be >= 1")
    tn = alpha.triple_norms()
    zn = [math.sqrt(sum(c * c for c in z)) for z in alpha.jumps]
    alpha_p = sum(n**p * lam for n, lam in zip(zn, alpha.lam)) ** (1.0 / p)
    return RateNorms(
        p=p,
        alpha_p=float(alpha_p),
        triple_alpha=float(sum(tn)),
        triple_alpha_1=float(sum(n * t for n, t in zip(zn, tn))),
        alpha_0=float(sum(alpha.lam)),
        grid_step=None if alpha.space.kind == "binary" else alpha.space.grid_step,
    )


def rate_difference_norm(a: RateFamily, b: RateFamily) -> float:
    """||alpha - alpha'||_0 = sum_z sup_eta |alpha(eta,z) - alpha'(eta,z)|."""
    total = 0.0
    for z in set(a.jumps) | set(b.jumps):
        fa = a.rates[a.jumps.index(z)] if z in a.jumps else Constant(0.0, a.d)
        fb = b.rates[b.jumps.index(z)] if z in b.jumps else Constant(0.0, b.d)
        lo, hi = sup_norm(fa + Scaled(fb, -1.0), a.space)
        total += max(abs(lo), abs(hi))
    return float(total)
