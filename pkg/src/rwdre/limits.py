"""Long-time behaviour of the walker.

Speed estimates, the linear-response (Einstein) check, the diffusion
constant from replicas and from its corrector formula, concentration tails
against assembled bounds, and a transience/recurrence diagnostic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .coupling import Walker, decoupling_lower_bound, simulate_walk
from .env_process import estimate_mu_ep
from .environments import DecayCurve, EnvironmentModel, decay_integral, stationary_sample
from .errors import ModelError
from .lattice import LocalFunction, RateFamily, rate_norms
from .martingale import bernstein_exponent
from .rng import RandomStream, run_replicas
from .stats import Estimate, agree, estimate, exact, joint_se


# ---------------------------------------------------------------------------
# shared helpers


def _site_law(model: EnvironmentModel):
    """(values, weights) of the product stationary law, or None if not a product."""
    if model.kind == "independent_refresh":
        if model.space.kind == "binary":
            return np.array([0.0, 1.0]), np.array([1.0 - model.nu_p, model.nu_p])
        g = model.space.grid()
        return g, np.full(g.size, 1.0 / g.size)
    if model.kind == "deterministic_relaxation":
        return np.array([model.a_star]), np.array([1.0])
    if model.kind == "weak_glauber" and model.beta_int == 0.0:
        return np.array([0.0, 1.0]), np.array([0.5, 0.5])
    return None


def stationary_expectation(model: EnvironmentModel, f: LocalFunction, samples: int = 4000, seed: int = 0) -> Estimate:
    """Integral of f against the environment's stationary law.

    Exact enumeration for product laws, otherwise a sample mean over
    independent stationary configurations.
    """
    law = _site_law(model)
    if law is not None:
        vals, wts = law
        m = len(f.window)
        if m == 0:
            return exact(float(f.evaluate(())))
        total = 0.0
        for ix in itertools.product(range(len(vals)), repeat=m):
            w = float(np.prod(wts[list(ix)]))
            if w:
                total += w * f.evaluate([vals[i] for i in ix])
        return exact(total)
    geo = model.geometry
    sites = [geo.index(x) for x in f.window]

    def task(i):
        cfg = stationary_sample(model, RandomStream.from_seed(seed, "stationary", i))
        return f.evaluate([cfg[s] for s in sites])

    return estimate(run_replicas(task, samples, 1), seed)


def _displacements(model, alpha, T, replicas, seed, tag, observe_times=(), threads=1, log=False):
    o = (0,) * model.d

    def task(i):
        stream = RandomStream.from_seed(seed, tag, i)
        res = simulate_walk(model, [Walker(alpha, 0, o)], T, stream, observe_times=observe_times, log=log)
        obs = [ob[1][0] for ob in res.observations]
        return res.positions[0], obs, (res.log if log else None)

    return run_replicas(task, replicas, threads)


def _moment_se_of_variance(x: np.ndarray) -> float:
    n = x.size
    c = x - x.mean()
    m2, m4 = np.mean(c**2), np.mean(c**4)
    return float(math.sqrt(max(m4 - m2**2, 0.0) / n))


# ---------------------------------------------------------------------------
# speed


@dataclass(frozen=True)
class SpeedReport:
    v_hat: tuple            # Estimate per coordinate
    horizon: float
    replicas: int
    formula_speed: tuple    # Estimate per coordinate, or () if not computed

    @property
    def consistent(self) -> bool:
        if not self.formula_speed:
            return True
        return all(agree(a, b) for a, b in zip(self.v_hat, self.formula_speed))


def estimate_speed(model: EnvironmentModel, alpha: RateFamily, horizon: float, replicas: int, seed: int,
                   formula: bool = True, burn_in: float | None = None, formula_replicas: int | None = None,
                   threads: int = 1) -> SpeedReport:
    """X_T / T over independent replicas, next to the ergodic average of the drift."""
    out = _displacements(model, alpha, horizon, replicas, seed, "lln", threads=threads)
    X = np.array([p for p, _, _ in out], dtype=float) / horizon
    v_hat = tuple(estimate(X[:, k], seed) for k in range(model.d))
    fs: tuple = ()
    if formula:
        if alpha.is_env_independent:
            fs = tuple(exact(float(sum(z[k] * lam for z, lam in zip(alpha.jumps, alpha.lam))))
                       for k in range(model.d))
        else:
            b = horizon / 10 if burn_in is None else burn_in
            n = formula_replicas or max(20, replicas // 10)
            fs = tuple(estimate_mu_ep(model, alpha, g, b, b + horizon, n, seed, tag=f"lln/formula/{k}",
                                      threads=threads).value
                       for k, g in enumerate(alpha.drift_vector()))
    return SpeedReport(v_hat, horizon, replicas, fs)


# ---------------------------------------------------------------------------
# linear response


@dataclass(frozen=True)
class EinsteinReport:
    derivative: Estimate
    per_eps: tuple                  # (eps, Estimate)
    rhs_condition: float
    sigma0_sq: float
    derivative_matches_rhs: bool
    relation_holds: bool
    second_order: float             # fitted coefficient c in d(eps) ~ d0 + c eps^2
    flag: str

    @property
    def label(self) -> str:
        return "ER holds" if self.relation_holds else "ER fails"


def einstein_relation_check(model: EnvironmentModel, family: Callable[[float], RateFamily], eps_grid: Sequence[float],
                            horizon: float = 200.0, replicas: int = 2000, seed: int = 0, h: float = 1e-3,
                            threads: int = 1) -> EinsteinReport:
    """Central difference of the speed in eps at eps = 0, against sum_z z int d/deps alpha dmu^E.

    For each eps two walkers with rates alpha_{+eps} and alpha_{-eps} run on
    one environment with shared clocks; the derivative estimate is the mean
    of (X+ - X-) / (2 eps T).
    """
    base = family(0.0)
    if not base.is_env_independent:
        raise ModelError("the unperturbed rates must not depend on the environment")
    if model.d != 1:
        raise ModelError("the linear-response check is implemented for d = 1")
    eps_grid = sorted(abs(float(e)) for e in eps_grid if e != 0)
    if not eps_grid:
        raise ModelError("eps grid needs a nonzero value")
    o = (0,)
    per = []
    for e in eps_grid:
        ap, am = family(e), family(-e)

        def task(i, ap=ap, am=am, e=e):
            stream = RandomStream.from_seed(seed, f"einstein/{e!r}", i)
            res = simulate_walk(model, [Walker(ap, 0, o), Walker(am, 0, o)], horizon, stream)
            return (res.positions[0][0] - res.positions[1][0]) / (2 * e * horizon)

        per.append((e, estimate(run_replicas(task, replicas, threads), seed)))

    # rhs: sum_z z int alpha'_0(eta, z) mu^E(d eta)
    ap, am = family(h), family(-h)
    rhs = 0.0
    for z in sorted(set(ap.jumps) | set(am.jumps)):
        if z[0] == 0:
            continue
        fp = ap.rates[ap.jumps.index(z)] if z in ap.jumps else None
        fm = am.rates[am.jumps.index(z)] if z in am.jumps else None
        mp = stationary_expectation(model, fp, seed=seed).mean if fp is not None else 0.0
        mm = stationary_expectation(model, fm, seed=seed).mean if fm is not None else 0.0
        rhs += z[0] * (mp - mm) / (2 * h)
    sigma0 = float(sum(z[0] ** 2 * lam for z, lam in zip(base.jumps, base.lam)))

    headline = per[0][1]
    coef = 0.0
    flag = ""
    if len(per) >= 2:
        e2 = np.array([e * e for e, _ in per])
        y = np.array([est.mean for _, est in per])
        w = np.array([1.0 / max(est.se, 1e-12) ** 2 for _, est in per])
        A = np.vstack([np.ones_like(e2), e2]).T * np.sqrt(w)[:, None]
        coef = float(np.linalg.lstsq(A, y * np.sqrt(w), rcond=None)[0][1])
        if abs(coef) * eps_grid[0] ** 2 > headline.se:
            flag = f"eps grid too coarse: second-order term {abs(coef) * eps_grid[0] ** 2:.3g} exceeds SE"
    matches = headline.within(rhs, 3.0)
    holds = math.isclose(rhs, sigma0, rel_tol=1e-6, abs_tol=1e-9)
    return EinsteinReport(headline, tuple(per), float(rhs), sigma0, matches, holds, coef, flag)


# ---------------------------------------------------------------------------
# constants for the concentration bounds


@dataclass(frozen=True)
class WalkerConstants:
    C_a: float
    C_b: float
    R_env: float
    R_ep: float
    p_alpha: float
    decay_C: float
    certified: bool
    notes: str = ""


def walker_constants(model: EnvironmentModel, alpha: RateFamily, curve: DecayCurve | None = None,
                     R_env: float | None = None) -> WalkerConstants:
    """C_a, C_b and R^EP assembled from the decay integral and the decoupling bound."""
    norms = rate_norms(alpha, 1.0)
    R_e = model.r_env_certificate() if R_env is None else R_env
    notes = []
    if R_e is None:
        R_e = math.inf
        notes.append("no R^E certificate")
    if alpha.is_env_independent:
        C, cert = decay_integral(model, 0.0, curve)
        p = 1.0
        C_a = C
        K1 = C
    else:
        p, _, cert_p = decoupling_lower_bound(model, alpha, curve)
        C, cert = decay_integral(model, alpha.gamma_spread, curve)
        cert = cert and cert_p
        C_a = C / p if p > 0 else math.inf
        # per-coordinate sandwich widths
        dg = np.abs(alpha.gamma_plus - alpha.gamma_minus)
        rate = model.decay_rate()
        if rate is not None:
            coeffs = np.poly1d([1.0])
            for g in dg:
                coeffs = coeffs * np.poly1d([g, 1.0])
            K1 = float(sum(c * math.factorial(j) / rate ** (j + 1) for j, c in enumerate(coeffs.coeffs[::-1])))
        else:
            K1 = C
    C_b = K1 * (1.0 + C_a * norms.triple_alpha)
    R_ep = R_e + norms.triple_alpha + 2.0 * norms.alpha_0
    certified = bool(cert and math.isfinite(R_ep) and math.isfinite(C_a))
    return WalkerConstants(C_a, C_b, R_e, R_ep, p, C, certified, "; ".join(notes))


@dataclass(frozen=True)
class ConcentrationRow:
    r: float
    threshold: float
    empirical_tail: Estimate
    bound: float
    label: str
    kind: str           # "assembled", "bennett" or "moment"

    @property
    def dominated(self) -> bool:
        return self.empirical_tail.mean <= self.bound


@dataclass(frozen=True)
class ConcentrationReport:
    rows: tuple
    c1: float
    c2: float
    offset: float
    constants: WalkerConstants
    moment: dict = field(default_factory=dict)

    @property
    def all_dominated(self) -> bool:
        return all(row.dominated for row in self.rows if row.label != "reference only")


def assembled_constants(model: EnvironmentModel, alpha: RateFamily, consts: WalkerConstants) -> tuple[float, float, float]:
    """(c1, c2, offset) for P(|X_T - E X_T| > c1 r + offset) <= 2d exp(-r^2/2/(T c2 + r/3))."""
    n1 = rate_norms(alpha, 1.0)
    d = model.d
    a = consts.C_a * n1.triple_alpha_1
    zmax = alpha.max_jump
    scale = max(2.0 * a, 2.0 * zmax)
    ratio = consts.C_b**2 / consts.C_a**2 if consts.C_a > 0 else 0.0
    weight = consts.R_ep * ratio + alpha.lambda_total
    return 2 * d * scale, weight, 2 * d * a


def moment_constant(alpha: RateFamily, consts: WalkerConstants, p: float) -> tuple[float, dict]:
    """c with c^p = max(A1, A2 + A3), the three terms of the p-th moment estimate."""
    n1 = rate_norms(alpha, 1.0).triple_alpha_1
    a2 = rate_norms(alpha, 2.0).alpha_p
    ap = rate_norms(alpha, p).alpha_p
    A1 = 2 ** (p / 2) * ((consts.C_b * n1 * consts.R_ep) ** p + a2**p)
    A2 = 2**p * (consts.C_b**p * n1**p + ap**p)
    A3 = (consts.C_a * n1) ** p
    return max(A1, A2 + A3) ** (1 / p), {"A1": A1, "A2": A2, "A3": A3}


def concentration_tail_check(model: EnvironmentModel, alpha: RateFamily, r_grid: Sequence[float], horizon: float,
                             replicas: int, seed: int, p: float = 2.0, c_p: float | None = None,
                             curve: DecayCurve | None = None, threads: int = 1) -> ConcentrationReport:
    """Empirical tails of |X_T - E X_T| against the assembled exponential and moment bounds."""
    consts = walker_constants(model, alpha, curve)
    c1, c2, offset = assembled_constants(model, alpha, consts)
    label = "certified" if consts.certified else "reference only"
    out = _displacements(model, alpha, horizon, replicas, seed, "concentration", threads=threads)
    X = np.array([p_ for p_, _, _ in out], dtype=float)
    dev = np.linalg.norm(X - X.mean(axis=0), axis=1)
    d = model.d
    rows = []
    for r in r_grid:
        thr = c1 * r + offset
        emp = estimate((dev > thr).astype(float), seed)
        bound = min(1.0, 2 * d * math.exp(bernstein_exponent(r, horizon, 1.0, c2))) if r > 0 else 1.0
        if r <= 0:
            bound = max(bound, 1.0)
        rows.append(ConcentrationRow(float(r), thr, emp, bound, label, "assembled"))
    # Bennett-type comparison for walkers that only jump +1 at constant rate
    if alpha.is_env_independent and len(alpha.jumps) == 1 and alpha.jumps[0] == (1,) + (0,) * (d - 1):
        lam = alpha.lam[0]
        for r in r_grid:
            emp = estimate((X[:, 0] - lam * horizon > r).astype(float), seed)
            bound = math.exp(-0.5 * r * r / (lam * horizon + r / 3)) if r > 0 else 1.0
            rows.append(ConcentrationRow(float(r), float(r), emp, bound, "certified", "bennett"))
    c_p_val = 4.0**p if c_p is None else c_p
    c, terms = moment_constant(alpha, consts, p)
    for r in r_grid:
        if r <= 0:
            continue
        emp = estimate((dev > r).astype(float), seed)
        bound = min(1.0, c_p_val * c**p * (horizon ** (p / 2) + 1) / r**p)
        rows.append(ConcentrationRow(float(r), float(r), emp, bound, "shape check only", "moment"))
    moment = {"p": p, "c_p": c_p_val, "c": c, **terms}
    return ConcentrationReport(tuple(rows), c1, c2, offset, consts, moment)


# ---------------------------------------------------------------------------
# diffusivity


@dataclass(frozen=True)
class CltReport:
    direction: tuple
    sigma2_empirical: Estimate
    sigma2_formula: Estimate | None
    ks_pvalue: float
    increment_pvalues: tuple
    speed_empirical: Estimate
    speed_formula: float | None
    max_jump: float
    truncation_time: float
    radius: int
    flag: str = ""

    @property
    def agree(self) -> bool | None:
        if self.sigma2_formula is None:
            return None
        return agree(self.sigma2_empirical, self.sigma2_formula)


def _ks_normal(x: np.ndarray) -> float:
    s = np.std(x, ddof=1)
    if s == 0:
        return 0.0
    return float(sps.kstest((x - x.mean()) / s, "norm").pvalue)


def _shift_to_walker(model, values, pos):
    perm = model.geometry.shift_perm(tuple(-c for c in pos))
    return np.asarray(values)[perm]


def _integrated_difference(model, alpha, g, init, starts, T_A, stream):
    """int_0^T_A g(seen from walker 1) - g(seen from walker 0) dt under shared randomness."""
    walkers = [Walker(alpha, c, s) for c, s in starts]
    res = simulate_walk(model, walkers, T_A, stream, init=init, integrands=[(0, g), (1, g)])
    return res.integrals[1] - res.integrals[0]


def corrector_variance(model: EnvironmentModel, alpha: RateFamily, u: Sequence[float] | None = None,
                       outer: int = 100, inner: int = 32, T_A: float = 8.0, radius: int = 4, burn_in: float = 20.0,
                       seed: int = 0, threads: int = 1) -> Estimate:
    """Diffusion constant from its corrector representation.

    For each stationary sample of the environment seen from the walker,
    the corrector increments (integrated drift differences from two starts)
    are estimated under shared randomness; squares are made unbiased by
    multiplying means over two independent halves of the inner replicas.
    The environment part is exact for binary refresh dynamics and vanishes
    for deterministic relaxation.
    """
    d = model.d
    u = np.eye(d)[0] if u is None else np.asarray(u, dtype=float)
    zs = [(z, float(np.dot(z, u))) for z in alpha.jumps]
    if alpha.is_env_independent:
        return exact(float(sum(c * c * lam for (_, c), lam in zip(zs, alpha.lam))))
    if model.kind == "independent_refresh" and model.space.kind != "binary":
        raise ModelError("environment part implemented for binary refresh only")
    if model.kind == "weak_glauber":
        raise ModelError("environment part not implemented for Glauber dynamics")
    g = alpha.drift(u)
    geo = model.geometry
    o = (0,) * d
    half = inner // 2
    if half < 1:
        raise ModelError("inner replicas must be at least 2")
    sites = [x for x in itertools.product(range(-radius, radius + 1), repeat=d)] if model.kind == "independent_refresh" else []

    def task(j):
        stream = RandomStream.from_seed(seed, "clt/outer", j)
        res = simulate_walk(model, [Walker(alpha, 0, o)], burn_in, stream, keep_env=True)
        eta = _shift_to_walker(model, res.env_final[0], res.positions[0])
        total = 0.0
        for (z, c), rate in zip(zs, alpha.rates):
            a = rate.evaluate([eta[geo.index(x)] for x in rate.window])
            if a == 0.0:
                continue
            vals = [_integrated_difference(model, alpha, g, [eta], [(0, o), (0, z)], T_A,
                                           RandomStream.from_seed(seed, f"clt/jump/{j}/{z}", k))
                    for k in range(2 * half)]
            m1, m2 = np.mean(vals[:half]), np.mean(vals[half:])
            total += a * (c * c + c * (m1 + m2) + m1 * m2)
        for x in sites:
            ix = geo.index(x)
            p_new = model.nu_p if eta[ix] == 0.0 else 1.0 - model.nu_p
            if p_new == 0.0:
                continue
            flipped = eta.copy()
            flipped[ix] = 1.0 - eta[ix]
            vals = [_integrated_difference(model, alpha, g, [eta, flipped], [(0, o), (1, o)], T_A,
                                           RandomStream.from_seed(seed, f"clt/env/{j}/{x}", k))
                    for k in range(2 * half)]
            total += model.r * p_new * np.mean(vals[:half]) * np.mean(vals[half:])
        return total

    return estimate(run_replicas(task, outer, threads), seed)


def clt_report(model: EnvironmentModel, alpha: RateFamily, direction: Sequence[float] | None = None,
               horizon: float = 200.0, replicas: int = 2000, seed: int = 0, formula: bool = True,
               formula_options: dict | None = None, threads: int = 1) -> CltReport:
    """Var(<X_T, u>) / T from replicas with a normality test, next to the corrector formula."""
    n2 = rate_norms(alpha, 2.0).alpha_p
    if not math.isfinite(n2):
        raise ModelError("second jump moment must be finite")
    d = model.d
    u = np.eye(d)[0] if direction is None else np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    times = [horizon / 2**k for k in (2, 1, 0)]
    out = _displacements(model, alpha, horizon, replicas, seed, "clt", observe_times=times, threads=threads)
    proj = np.array([np.dot(p_, u) for p_, _, _ in out], dtype=float)
    path = np.array([[np.dot(o, u) for o in obs] for _, obs, _ in out], dtype=float)
    s2 = float(np.var(proj, ddof=1) / horizon)
    emp = Estimate(s2, _moment_se_of_variance(proj) / horizon, replicas, seed)
    rng = RandomStream.from_seed(seed, "clt/jitter").gen
    jitter = rng.uniform(-0.5, 0.5, size=proj.size)
    p_end = _ks_normal(proj + jitter)
    inc = []
    prev = np.zeros(replicas)
    for k in range(path.shape[1]):
        step = path[:, k] - prev
        inc.append(_ks_normal(step + rng.uniform(-0.5, 0.5, size=step.size)))
        prev = path[:, k]
    v_emp = estimate(proj / horizon, seed)
    v_form = float(sum(np.dot(z, u) * lam for z, lam in zip(alpha.jumps, alpha.lam))) if alpha.is_env_independent else None
    opts = dict(formula_options or {})
    sf = None
    flag = ""
    if formula:
        try:
            sf = corrector_variance(model, alpha, u, seed=seed, threads=threads, **opts)
        except ModelError as exc:
            flag = f"formula unavailable: {exc}"
        if sf is not None and sf.se > 0.25 * abs(sf.mean):
            flag = "formula variance large; no assertion"
    return CltReport(tuple(float(c) for c in u), emp, sf, p_end, tuple(inc), v_emp, v_form, alpha.max_jump,
                     float(opts.get("T_A", 8.0)), int(opts.get("radius", 4)), flag)


def fast_environment_trend(model: EnvironmentModel, alpha: RateFamily, speeds: Sequence[float] = (1, 4, 16),
                           horizon: float = 200.0, replicas: int = 1000, seed: int = 0, threads: int = 1) -> dict:
    """Diffusivity as the environment is sped up, against the averaged-rate variance."""
    target = stationary_expectation(model, alpha.variance_density(), seed=seed).mean
    vals = []
    for lam in speeds:
        rep = clt_report(model.with_speed(lam), alpha, horizon=horizon, replicas=replicas, seed=seed,
                         formula=False, threads=threads)
        vals.append(rep.sigma2_empirical)
    gaps = [abs(v.mean - target) for v in vals]
    monotone = all(gaps[i + 1] <= gaps[i] + 3 * joint_se(vals[i], vals[i + 1]) for i in range(len(gaps) - 1))
    return {"speeds": tuple(speeds), "sigma2": tuple(vals), "target": target, "monotone": monotone}


# ---------------------------------------------------------------------------
# transience / recurrence


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    speed: Estimate
    horizons: tuple
    mean_returns: tuple         # Estimate per horizon
    mean_last_return: Estimate
    nearest_neighbour: bool


def transience_recurrence_diagnostic(model: EnvironmentModel, alpha: RateFamily, horizons: Sequence[float],
                                     replicas: int = 500, seed: int = 0, threads: int = 1) -> RegimeReport:
    """Return counts to the origin over a horizon grid, and the regime suggested by the speed."""
    horizons = sorted(float(h) for h in horizons)
    T = horizons[-1]
    o = (0,) * model.d

    def task(i):
        stream = RandomStream.from_seed(seed, "transience", i)
        res = simulate_walk(model, [Walker(alpha, 0, o)], T, stream, log=True)
        returns = []
        last = 0.0
        for t, z, _, acc, xs, *_ in res.log:
            if acc[0] and not any(xs[0]):
                returns.append(t)
                last = t
        counts = [sum(1 for s in returns if s <= h) for h in horizons]
        return res.positions[0][0] / T, counts, last

    out = run_replicas(task, replicas, threads)
    speed = estimate([v for v, _, _ in out], seed)
    counts = np.array([c for _, c, _ in out], dtype=float)
    mean_returns = tuple(estimate(counts[:, k], seed) for k in range(len(horizons)))
    last = estimate([l for _, _, l in out], seed)
    nn = all(sum(abs(c) for c in z) == 1 for z, lam in zip(alpha.jumps, alpha.lam) if lam > 0)
    if abs(speed.mean) > 3 * speed.se and speed.se > 0 or (speed.se == 0 and speed.mean != 0):
        regime = "transient"
    elif nn and model.d == 1:
        regime = "recurrent"
    else:
        regime = "undetermined"
    return RegimeReport(regime, speed, tuple(horizons), mean_returns, last, nn)
