"""Experiment configuration: one INI file, strict validation, exact round-trip.

Floats are serialized with repr() so a config written by save_config parses
back to bit-identical values.  Environment variables BFMCMC_SEED and
BFMCMC_OUT override the seed and output directory only; command-line flags
beat both.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace

from .factories import MAX_LOOPS_DEFAULT

ENV_SEED = "BFMCMC_SEED"
ENV_OUT = "BFMCMC_OUT"

MODELS = ("weibull", "correlation")
WEIBULL_KERNELS = ("two_coin", "portkey")
CORRELATION_KERNELS = ("flipped_portkey", "flipped_two_coin")


class ConfigError(ValueError):
    """Bad configuration; the message names the offending field."""


@dataclass(frozen=True)
class WeibullParams:
    shape: float = 10.0
    gamma_shape: float = 10.0
    gamma_rate: float = 100.0
    proposal_sd: float = 2.0
    initial_theta: float = 0.1


@dataclass(frozen=True)
class CorrelationParams:
    data: str = ""
    tau2: float = 1.0
    a0: float = 3.0
    b0: float = 0.5
    proposal_sd_r: float = 0.02
    proposal_sd_mu: float = 0.25
    proposal_sd_sigma2: float = 0.04
    initial_mu: float = 0.0
    initial_sigma2: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "weibull"
    kernel: str = "portkey"
    betas: tuple = (1.0, 0.99, 0.9, 0.75)
    n_steps: int = 100_000
    n_replications: int = 50
    seed: int = 20260825
    max_loops: int = MAX_LOOPS_DEFAULT
    out: str = "runs"
    trace_thin: int = 1
    threads: int = 1
    weibull: WeibullParams = field(default_factory=WeibullParams)
    correlation: CorrelationParams = field(default_factory=CorrelationParams)


def validate_config(cfg: ExperimentConfig) -> None:
    def bad(name, why):
        raise ConfigError(f"{name}: {why}")

    if cfg.model not in MODELS:
        bad("experiment.model", f"must be one of {MODELS}, got {cfg.model!r}")
    allowed = WEIBULL_KERNELS if cfg.model == "weibull" else CORRELATION_KERNELS
    if cfg.kernel not in allowed:
        bad("experiment.kernel",
            f"must be one of {allowed} for model {cfg.model!r}, got {cfg.kernel!r}")
    if not cfg.betas:
        bad("experiment.betas", "must be a nonempty list")
    for b in cfg.betas:
        if not 0.0 < b <= 1.0:
            bad("experiment.betas", f"every value must be in (0, 1], got {b!r}")
        if b < 1.0 and cfg.kernel in ("two_coin", "flipped_two_coin"):
            bad("experiment.betas",
                f"kernel {cfg.kernel!r} has no gate; all betas must be 1, got {b!r}")
    if cfg.n_steps < 1:
        bad("experiment.n_steps", f"must be >= 1, got {cfg.n_steps}")
    if cfg.n_replications < 1:
        bad("experiment.n_replications", f"must be >= 1, got {cfg.n_replications}")
    if not 0 <= cfg.seed < 2 ** 64:
        bad("experiment.seed", f"must fit in an unsigned 64-bit int, got {cfg.seed}")
    if cfg.max_loops < 1:
        bad("experiment.max_loops", f"must be >= 1, got {cfg.max_loops}")
    if cfg.trace_thin < 0:
        bad("experiment.trace_thin",
            f"must be >= 0 (0 disables trace files), got {cfg.trace_thin}")
    if cfg.threads < 1:
        bad("experiment.threads", f"must be >= 1, got {cfg.threads}")

    w = cfg.weibull
    for name in ("shape", "gamma_shape", "gamma_rate", "proposal_sd", "initial_theta"):
        if getattr(w, name) <= 0.0:
            bad(f"weibull.{name}", f"must be positive, got {getattr(w, name)!r}")
    c = cfg.correlation
    for name in ("tau2", "a0", "b0", "proposal_sd_r", "proposal_sd_mu",
                 "proposal_sd_sigma2", "initial_sigma2"):
        if getattr(c, name) <= 0.0:
            bad(f"correlation.{name}", f"must be positive, got {getattr(c, name)!r}")
    if cfg.model == "correlation" and not c.data:
        bad("correlation.data", "a data CSV path is required for the correlation model")


# ----------------------------------------------------------------------
# parsing
# ----------------------------------------------------------------------

def _coerce(section: str, key: str, raw: str, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: expected {kind.__name__}, got {raw!r}") from None


def _parse_betas(raw: str) -> tuple:
    parts = [s.strip() for s in raw.split(",") if s.strip()]
    if not parts:
        raise ConfigError("experiment.betas: must be a nonempty list")
    return tuple(_coerce("experiment", "betas", s, float) for s in parts)


_EXPERIMENT_KEYS = {
    "model": str, "kernel": str, "betas": None, "n_steps": int,
    "n_replications": int, "seed": int, "max_loops": int, "out": str,
    "trace_thin": int, "threads": int,
}


def load_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path!r}: {exc}") from exc

    known = {"experiment", "weibull", "correlation"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"{section}: unknown section")

    kw = {}
    if parser.has_section("experiment"):
        for key, raw in parser.items("experiment"):
            if key not in _EXPERIMENT_KEYS:
                raise ConfigError(f"experiment.{key}: unknown key")
            kw[key] = _parse_betas(raw) if key == "betas" else _coerce(
                "experiment", key, raw, _EXPERIMENT_KEYS[key])

    for section, cls in (("weibull", WeibullParams), ("correlation", CorrelationParams)):
        if not parser.has_section(section):
            continue
        names = {f.name: f.type for f in fields(cls)}
        sub = {}
        for key, raw in parser.items(section):
            if key not in names:
                raise ConfigError(f"{section}.{key}: unknown key")
            kind = str if key == "data" else float
            sub[key] = _coerce(section, key, raw, kind)
        kw[section] = cls(**sub)

    cfg = ExperimentConfig(**kw)
    validate_config(cfg)
    return cfg


def save_config(cfg: ExperimentConfig, path: str) -> None:
    def fmt(v):
        return repr(v) if isinstance(v, float) else str(v)

    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "model": cfg.model,
        "kernel": cfg.kernel,
        "betas": ", ".join(repr(b) for b in cfg.betas),
        "n_steps": str(cfg.n_steps),
        "n_replications": str(cfg.n_replications),
        "seed": str(cfg.seed),
        "max_loops": str(cfg.max_loops),
        "out": cfg.out,
        "trace_thin": str(cfg.trace_thin),
        "threads": str(cfg.threads),
    }
    parser["weibull"] = {f.name: fmt(getattr(cfg.weibull, f.name))
                         for f in fields(WeibullParams)}
    parser["correlation"] = {f.name: fmt(getattr(cfg.correlation, f.name))
                             for f in fields(CorrelationParams)}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        parser.write(fh)


def resolve_config(path: str | None = None, *, seed: int | None = None,
                   out: str | None = None, threads: int | None = None,
                   env=None) -> ExperimentConfig:
    """File -> environment -> explicit flags, later wins; then validate."""
    env = os.environ if env is None else env
    cfg = load_config(path) if path else ExperimentConfig()
    if ENV_SEED in env:
        cfg = replace(cfg, seed=_coerce("env", ENV_SEED, env[ENV_SEED], int))
    if ENV_OUT in env:
        cfg = replace(cfg, out=env[ENV_OUT])
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out is not None:
        cfg = replace(cfg, out=out)
    if threads is not None:
        cfg = replace(cfg, threads=threads)
    validate_config(cfg)
    return cfg
