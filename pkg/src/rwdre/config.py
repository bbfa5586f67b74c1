"""Experiment configuration: YAML tree, strict validation, model builders."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .ctmc import FiniteChain
from .environments import EnvironmentModel, deterministic_relaxation, independent_refresh, weak_glauber
from .errors import ConfigError, ModelError
from .lattice import BINARY, UNIT, Constant, LocalFunction, Product, Projection, RateFamily

KINDS = ("coupling_decay", "decoupling", "mu_ep", "semigroup_integral", "continuity", "lln", "einstein", "clt",
         "concentration", "transience", "appendix_suite")

# blocks each kind needs beyond the top-level scalars
REQUIRED = {
    "coupling_decay": ("environment",),
    "decoupling": ("environment", "walker"),
    "mu_ep": ("environment", "walker", "observable"),
    "semigroup_integral": ("environment", "walker", "observable"),
    "continuity": ("environment", "walker", "walker_prime", "observable"),
    "lln": ("environment", "walker"),
    "einstein": ("environment", "walker"),
    "clt": ("environment", "walker"),
    "concentration": ("environment", "walker"),
    "transience": ("environment", "walker"),
    "appendix_suite": (),
}

TOP_KEYS = {"kind", "seed", "replicas", "threads", "environment", "walker", "walker_prime", "observable", "grids",
            "horizon", "burn_in", "phi", "pair", "output", "tolerances", "expect", "options", "name", "coupling",
            "chain"}
ENV_KEYS = {"kind", "r", "nu_p", "L", "d", "beta_int", "kappa", "a_star", "space", "glauber_burn_in"}
WALKER_KEYS = {"jumps", "rates", "eps"}
RATE_KEYS = {"z", "base", "slope", "site"}
OBS_KEYS = {"kind", "site", "sites", "value"}
GRID_KEYS = {"t", "r", "eps", "T"}
PHI_KEYS = {"family", "lam", "K"}
PAIR_KEYS = {"site", "values"}
COUPLING_KEYS = {"restart_mode"}
CHAIN_KEYS = {"Q", "f", "T", "start", "r"}
OUTPUT_KEYS = {"dir", "format"}
TOL_KEYS = {"k_se", "slack", "exact", "ks_alpha"}
EXPECT_KEYS = {"value", "speed", "sigma2", "derivative", "relation", "regime", "integral", "flag", "decay",
               "integral_td"}
OPTION_KEYS = {"n_chains", "k_max", "outer", "inner", "T_A", "radius", "p", "c_p", "formula", "decay_replicas",
               "formula_replicas", "h", "n_batches", "init", "alt_init", "independent"}


def _check_keys(block: Any, allowed: set, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    replicas: int
    threads: int = 1
    raw: dict = field(default_factory=dict)

    def block(self, name: str, default=None):
        return self.raw.get(name, default)

    @property
    def grids(self) -> dict:
        return self.raw.get("grids", {}) or {}

    @property
    def tolerances(self) -> dict:
        tol = {"k_se": 3.0, "slack": 0.0, "exact": 1e-9, "ks_alpha": 0.01}
        tol.update(self.raw.get("tolerances", {}) or {})
        return tol

    @property
    def expect(self) -> dict:
        return self.raw.get("expect", {}) or {}

    @property
    def options(self) -> dict:
        return self.raw.get("options", {}) or {}

    @property
    def output(self) -> dict:
        out = {"dir": "out", "format": "both"}
        out.update(self.raw.get("output", {}) or {})
        return out


def validate(raw: dict) -> ExperimentConfig:
    """Check keys and required blocks; returns the typed config."""
    _check_keys(raw, TOP_KEYS, "config")
    if "kind" not in raw:
        raise ConfigError("missing key: kind")
    kind = raw["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    for name in REQUIRED[kind]:
        if name not in raw:
            raise ConfigError(f"missing key: {name} (required for kind={kind})")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    replicas = raw.get("replicas", 1000)
    if not isinstance(replicas, int) or isinstance(replicas, bool) or replicas < 1:
        raise ConfigError("replicas must be an integer >= 1")
    threads = raw.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        raise ConfigError("threads must be an integer >= 1")
    if "environment" in raw:
        _check_keys(raw["environment"], ENV_KEYS, "environment")
        if "kind" not in raw["environment"]:
            raise ConfigError("missing key: environment.kind")
    for wname in ("walker", "walker_prime"):
        if wname in raw:
            w = raw[wname]
            _check_keys(w, WALKER_KEYS, wname)
            if "jumps" in w and "rates" in w:
                raise ConfigError(f"{wname}: give either jumps or rates, not both")
            key = "jumps" if "jumps" in w else "rates"
            if key not in w:
                raise ConfigError(f"missing key: {wname}.jumps")
            if not isinstance(w[key], list) or not w[key]:
                raise ConfigError(f"{wname}.{key} must be a non-empty list")
            for i, r in enumerate(w[key]):
                _check_keys(r, RATE_KEYS, f"{wname}.{key}[{i}]")
                for k in ("z", "base"):
                    if k not in r:
                        raise ConfigError(f"missing key: {wname}.{key}[{i}].{k}")
    if "observable" in raw:
        _check_keys(raw["observable"], OBS_KEYS, "observable")
    if "grids" in raw:
        _check_keys(raw["grids"], GRID_KEYS, "grids")
        for k, v in raw["grids"].items():
            if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) for x in v):
                raise ConfigError(f"grids.{k} must be a non-empty list of numbers")
            if k in ("t", "T") and any(b <= a for a, b in zip(v, v[1:])):
                raise ConfigError(f"grids.{k} must be increasing")
    for name, keys in (("phi", PHI_KEYS), ("pair", PAIR_KEYS), ("output", OUTPUT_KEYS), ("tolerances", TOL_KEYS),
                       ("expect", EXPECT_KEYS), ("options", OPTION_KEYS), ("coupling", COUPLING_KEYS),
                       ("chain", CHAIN_KEYS)):
        if name in raw:
            _check_keys(raw[name], keys, name)
    if raw.get("coupling", {}).get("restart_mode", "none") not in ("none", "recouple_on_decouple"):
        raise ConfigError("coupling.restart_mode must be none or recouple_on_decouple")
    if raw.get("phi", {}).get("family", "exp") not in ("exp", "poly"):
        raise ConfigError("phi.family must be exp or poly")
    if "chain" in raw:
        build_chain(raw["chain"])
    if "output" in raw and raw["output"].get("format", "both") not in ("csv", "json", "both"):
        raise ConfigError("output.format must be csv, json or both")
    for key in ("horizon", "burn_in"):
        if key in raw and not (isinstance(raw[key], (int, float)) and raw[key] >= 0):
            raise ConfigError(f"{key} must be a nonnegative number")
    return ExperimentConfig(kind, seed, replicas, threads, copy.deepcopy(raw))


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if raw is None:
        raise ConfigError("config is empty")
    return validate(raw)


# ---------------------------------------------------------------------------
# builders


def build_environment(block: dict) -> EnvironmentModel:
    b = dict(block)
    kind = b.pop("kind")
    space = b.pop("space", "binary")
    if space not in ("binary", "unit"):
        raise ConfigError("environment.space must be binary or unit")
    try:
        if kind == "independent_refresh":
            return independent_refresh(b.pop("r", 1.0), b.pop("nu_p", 0.5), L=b.pop("L", 1024), d=b.pop("d", 1),
                                       space=UNIT if space == "unit" else BINARY)
        if kind == "weak_glauber":
            return weak_glauber(b.pop("r", 1.0), b.pop("beta_int", 0.0), L=b.pop("L", 1024), d=b.pop("d", 1))
        if kind == "deterministic_relaxation":
            return deterministic_relaxation(b.pop("kappa", 1.0), b.pop("a_star", 0.0), L=b.pop("L", 1024),
                                            d=b.pop("d", 1))
    except ModelError as exc:
        raise ConfigError(f"invalid environment: {exc}") from exc
    raise ConfigError(f"unknown environment kind {kind!r}")


def build_chain(block: dict):
    """Explicit finite chain from a row-list rate matrix, with its observable."""
    if "Q" not in block:
        raise ConfigError("missing key: chain.Q")
    try:
        chain = FiniteChain(np.asarray(block["Q"], dtype=float))
    except (ValueError, TypeError, ModelError) as exc:
        raise ConfigError(f"invalid chain.Q: {exc}") from exc
    f = np.asarray(block.get("f", range(chain.n)), dtype=float)
    if f.shape != (chain.n,):
        raise ConfigError(f"chain.f needs {chain.n} values")
    start = block.get("start", 0)
    if not isinstance(start, int) or not 0 <= start < chain.n:
        raise ConfigError("chain.start must be a state index")
    return chain, f


def build_rates(block: dict, d: int, eps: float | None = None) -> RateFamily:
    specs = []
    for r in block.get("jumps", block.get("rates")):
        z = r["z"]
        z = [z] if isinstance(z, int) else list(z)
        if len(z) != d:
            raise ConfigError(f"jump {r['z']} does not match dimension {d}")
        site = r.get("site", [0] * d)
        site = [site] if isinstance(site, int) else list(site)
        specs.append({"z": z, "base": float(r["base"]), "slope": float(r.get("slope", 0.0)), "site": site})
    scale = block.get("eps", 1.0) if eps is None else eps
    try:
        return RateFamily.affine(specs, BINARY, scale)
    except ModelError as exc:
        raise ConfigError(f"invalid walker rates: {exc}") from exc


def rate_family_builder(block: dict, d: int):
    """eps -> rates with every slope multiplied by eps."""
    return lambda eps: build_rates(block, d, eps)


def build_observable(block: dict, d: int) -> LocalFunction:
    kind = block.get("kind", "projection")
    if kind == "constant":
        return Constant(float(block.get("value", 1.0)), d)
    if kind == "projection":
        site = block.get("site", [0] * d)
        return Projection(tuple([site] if isinstance(site, int) else site))
    if kind == "product":
        sites = [tuple([s] if isinstance(s, int) else s) for s in block.get("sites", [])]
        if not sites:
            raise ConfigError("observable.sites must list at least one site")
        return Product(sites)
    raise ConfigError(f"unknown observable kind {kind!r}")
