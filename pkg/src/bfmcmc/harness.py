"""Replication sweeps: run chains over a beta list, write trace/summary CSVs.

Each replication owns an RNG stream spawned from (seed, beta index,
replication index), so results are independent of dispatch order and thread
count.  Workers return in-memory results; the parent process is the single
writer.  Timing wraps the sampling loop only; the BFMCMC_FIXED_CLOCK
environment variable (a float, seconds) replaces measured wall time so that
reruns with the same seed produce byte-identical files.
"""
from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, validate_config
from .diagnostics import RunSummary, ess, summarize
from .kernels import ChainTrace, run_chain
from .models.correlation import CorrelationModel, GibbsTrace, run_gibbs_chain
from .models.weibull import WeibullMixtureTarget

ENV_FIXED_CLOCK = "BFMCMC_FIXED_CLOCK"

SUMMARY_COLUMNS = ("beta", "replication", "ess", "ess_per_sec", "accept_rate",
                   "mean_loops", "max_loops", "wall_time_sec")

AGGREGATE_METRICS = ("ess", "ess_per_sec", "accept_rate", "mean_loops",
                     "wall_time_sec")


def replication_seed(seed: int, beta_index: int, replication: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed,
                                  spawn_key=(beta_index, replication))


def _wall_time(elapsed: float) -> float:
    fixed = os.environ.get(ENV_FIXED_CLOCK)
    return float(fixed) if fixed else elapsed


def _summarize_gibbs(trace: GibbsTrace, wall_time_sec: float) -> RunSummary:
    """mu is the column of record: it is the factory-driven update this
    experiment instruments.  Loop and acceptance stats for sigma2 and the
    r components stay on the in-memory GibbsTrace."""
    n = len(trace)
    e = min(float(ess(trace.mu)), float(n))
    return RunSummary(
        ess=e,
        ess_per_sec=e / wall_time_sec,
        accept_rate=float(trace.mu_accepted.mean()),
        mean_loops=float(trace.mu_loops.mean()),
        max_loops=int(trace.mu_loops.max()),
        wall_time_sec=wall_time_sec,
    )


@dataclass
class ReplicationResult:
    beta_index: int
    beta: float
    replication: int
    summary: RunSummary
    trace: object  # ChainTrace or GibbsTrace


def run_replication(cfg: ExperimentConfig, beta_index: int, replication: int,
                    data=None) -> ReplicationResult:
    beta = cfg.betas[beta_index]
    seed_seq = replication_seed(cfg.seed, beta_index, replication)
    if cfg.model == "weibull":
        w = cfg.weibull
        model = WeibullMixtureTarget(
            k=w.shape, gamma_shape=w.gamma_shape, gamma_rate=w.gamma_rate,
            proposal_sd=w.proposal_sd, initial_theta=w.initial_theta)
        start = time.perf_counter()
        trace = run_chain(model, cfg.kernel, beta, cfg.n_steps,
                          seed=seed_seq, max_loops=cfg.max_loops)
        wall = _wall_time(time.perf_counter() - start)
        summary = summarize(trace, wall_time_sec=wall)
    else:
        if data is None:
            raise ValueError("correlation replications need the data matrix")
        c = cfg.correlation
        model = CorrelationModel(
            data, tau2=c.tau2, a0=c.a0, b0=c.b0,
            proposal_sd_r=c.proposal_sd_r, proposal_sd_mu=c.proposal_sd_mu,
            proposal_sd_sigma2=c.proposal_sd_sigma2,
            beta_mu=beta, beta_sigma2=beta, kernel=cfg.kernel,
            max_loops=cfg.max_loops, initial_mu=c.initial_mu,
            initial_sigma2=c.initial_sigma2)
        start = time.perf_counter()
        trace = run_gibbs_chain(model, cfg.n_steps, seed_seq)
        wall = _wall_time(time.perf_counter() - start)
        summary = _summarize_gibbs(trace, wall_time_sec=wall)
    return ReplicationResult(beta_index, beta, replication, summary, trace)


# ----------------------------------------------------------------------
# CSV serialization
# ----------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def trace_header(trace) -> list:
    if isinstance(trace, GibbsTrace):
        components = [f"r_{i + 1}_{j + 1}" for i, j in trace.pairs]
        components += ["mu", "sigma2"]
    else:
        components = ["theta"]
    return ["step"] + components + ["accepted", "loops"]


def _trace_rows(trace, thin: int):
    if isinstance(trace, GibbsTrace):
        for t in range(len(trace)):
            step = t + 1
            if step % thin:
                continue
            yield ([step] + [float(v) for v in trace.r[t]]
                   + [float(trace.mu[t]), float(trace.sigma2[t]),
                      bool(trace.mu_accepted[t]), int(trace.mu_loops[t])])
    else:
        states = np.atleast_2d(np.asarray(trace.states, dtype=float).T).T
        for t in range(len(trace.accepted)):
            step = t + 1
            if step % thin:
                continue
            yield ([step] + [float(v) for v in states[t]]
                   + [bool(trace.accepted[t]), int(trace.loops[t])])


def write_trace_csv(path: str, trace, thin: int = 1) -> None:
    """One row per retained step.  For the correlation model the accepted
    and loops columns report the mu update; see GibbsTrace for the rest."""
    if thin < 1:
        raise ValueError(f"thin must be >= 1, got {thin}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header(trace))
        for row in _trace_rows(trace, thin):
            writer.writerow([_fmt(v) for v in row])


def write_summary_csv(path: str, results: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for res in results:
            s = res.summary
            writer.writerow([_fmt(v) for v in (
                res.beta, res.replication, s.ess, s.ess_per_sec,
                s.accept_rate, s.mean_loops, s.max_loops, s.wall_time_sec)])


def aggregate_rows(results: list, betas) -> list:
    """One dict per beta: mean and standard error of each summary metric,
    computed from exactly the replications present (SE is nan for a single
    replication)."""
    rows = []
    for bi, beta in enumerate(betas):
        group = [r.summary for r in results if r.beta_index == bi]
        if not group:
            continue
        n = len(group)
        row = {"beta": beta, "n_replications": n}
        for metric in AGGREGATE_METRICS:
            vals = np.array([getattr(s, metric) for s in group], dtype=float)
            row[f"{metric}_mean"] = float(vals.mean())
            row[f"{metric}_se"] = (float(vals.std(ddof=1) / np.sqrt(n))
                                   if n > 1 else float("nan"))
        row["max_loops_max"] = max(s.max_loops for s in group)
        rows.append(row)
    return rows


def aggregate_columns() -> list:
    cols = ["beta", "n_replications"]
    for metric in AGGREGATE_METRICS:
        cols += [f"{metric}_mean", f"{metric}_se"]
    return cols + ["max_loops_max"]


def write_aggregate_csv(path: str, rows: list) -> None:
    cols = aggregate_columns()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in cols])


# ----------------------------------------------------------------------
# data ingestion
# ----------------------------------------------------------------------

def load_data_csv(path: str) -> np.ndarray:
    """n x p observation matrix from a headered CSV."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty data file") from None
        p = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != p:
                raise ValueError(f"{path}:{lineno}: expected {p} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    data = np.array(rows, dtype=float).reshape(len(rows), p)
    if p < 2:
        raise ValueError(f"{path}: need at least 2 columns, got {p}")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite values in data")
    return data


# ----------------------------------------------------------------------
# the sweep
# ----------------------------------------------------------------------

@dataclass
class RunProducts:
    out_dir: str
    summary_path: str
    aggregate_path: str
    trace_paths: list
    results: list
    aggregate: list


def _task(args):
    cfg, beta_index, replication, data = args
    return run_replication(cfg, beta_index, replication, data)


def run_sweep(cfg: ExperimentConfig, data=None) -> list:
    """All (beta, replication) runs, in deterministic order."""
    tasks = [(cfg, bi, r, data)
             for bi in range(len(cfg.betas))
             for r in range(cfg.n_replications)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(_task, tasks))
    return [_task(t) for t in tasks]


def cmd_run(cfg: ExperimentConfig) -> RunProducts:
    validate_config(cfg)
    data = load_data_csv(cfg.correlation.data) if cfg.model == "correlation" else None
    os.makedirs(cfg.out, exist_ok=True)

    from .config import save_config
    save_config(cfg, os.path.join(cfg.out, "config.ini"))

    results = run_sweep(cfg, data)

    trace_paths = []
    if cfg.trace_thin > 0:
        for res in results:
            name = f"trace_beta{res.beta_index}_{res.beta!r}_rep{res.replication:04d}.csv"
            path = os.path.join(cfg.out, name)
            write_trace_csv(path, res.trace, thin=cfg.trace_thin)
            trace_paths.append(path)

    summary_path = os.path.join(cfg.out, "summary.csv")
    write_summary_csv(summary_path, results)
    agg = aggregate_rows(results, cfg.betas)
    aggregate_path = os.path.join(cfg.out, "aggregate.csv")
    write_aggregate_csv(aggregate_path, agg)
    return RunProducts(cfg.out, summary_path, aggregate_path, trace_paths,
                       results, agg)


# ----------------------------------------------------------------------
# synthetic data generation
# ----------------------------------------------------------------------

def build_structure(p: int, structure: str, *, rho: float | None = None,
                    matrix_path: str | None = None) -> np.ndarray:
    if p < 2:
        raise ValueError(f"need p >= 2, got {p}")
    if structure == "identity":
        return np.eye(p)
    if structure == "equicorrelated":
        if rho is None:
            raise ValueError("equicorrelated structure needs rho")
        # PD iff rho in (-1/(p-1), 1)
        if not -1.0 / (p - 1) < rho < 1.0:
            raise ValueError(
                f"equicorrelated rho must be in (-1/(p-1), 1) = "
                f"({-1.0 / (p - 1):.4f}, 1), got {rho}")
        return np.full((p, p), float(rho)) + (1.0 - rho) * np.eye(p)
    if structure == "custom":
        if matrix_path is None:
            raise ValueError("custom structure needs a matrix CSV path")
        R = np.loadtxt(matrix_path, delimiter=",", dtype=float, ndmin=2)
        if R.shape != (p, p):
            raise ValueError(f"{matrix_path}: expected {p}x{p} matrix, got {R.shape}")
        if not np.allclose(R, R.T, atol=1e-12) or not np.allclose(np.diag(R), 1.0, atol=1e-12):
            raise ValueError(f"{matrix_path}: not a correlation matrix")
        from .models.correlation import is_pd
        if not is_pd(R):
            raise ValueError(f"{matrix_path}: matrix is not positive definite")
        return R
    raise ValueError(f"unknown structure {structure!r}")


def cmd_gen_data(n: int, p: int, structure: str, seed: int, out_path: str, *,
                 rho: float | None = None, matrix_path: str | None = None) -> str:
    from .models.correlation import synth_data
    R = build_structure(p, structure, rho=rho, matrix_path=matrix_path)
    rng = np.random.default_rng(seed)
    data = synth_data(n, p, R, rng)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"y{i + 1}" for i in range(p)])
        for row in data:
            writer.writerow([repr(float(v)) for v in row])
    return out_path
