"""Chain diagnostics: autocorrelation, batch-means ESS, run summaries.

The ESS estimator is non-overlapping batch means with batch size
floor(sqrt(n)).  Absolute ESS values depend on that choice; comparisons
across kernels on the same series do not, which is what the experiment
tables rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import ChainTrace

__all__ = [
    "DegenerateSeriesError",
    "acf",
    "ess",
    "batch_means_mcse",
    "RunSummary",
    "summarize",
]


class DegenerateSeriesError(ValueError):
    """The series has (numerically) zero variance; the estimate is undefined."""


def _as_series(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D series, got shape {x.shape}")
    return x


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 0..max_lag (lag 0 exactly 1)."""
    x = _as_series(series)
    n = x.size
    if not 1 <= max_lag < n:
        raise ValueError(f"need 1 <= max_lag < len(series), got {max_lag} vs {n}")
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom <= 0.0:
        raise DegenerateSeriesError("zero-variance series has no autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(xc[:-k] @ xc[k:]) / denom
    return out


def _batch_means_var(x: np.ndarray, batch_size: int | None):
    """Batch-means estimate of the long-run variance; returns (var, batches)."""
    n = x.size
    b = int(batch_size) if batch_size is not None else int(math.isqrt(n))
    if b < 1:
        raise ValueError(f"batch_size must be >= 1, got {b}")
    a = n // b
    if a < 2:
        raise ValueError(f"need at least 2 batches, got n={n}, batch_size={b}")
    tail = x[n - a * b:]  # drop the oldest remainder
    means = tail.reshape(a, b).mean(axis=1)
    sig2 = b * float(np.sum((means - tail.mean()) ** 2)) / (a - 1)
    return sig2, a


def ess(series, batch_size: int | None = None) -> float:
    """Effective sample size: n * sample_var / batch-means long-run var.

    Affine-invariant; batches of size floor(sqrt(n)) unless overridden.
    """
    x = _as_series(series)
    n = x.size
    if n < 100:
        raise ValueError(f"series too short for ESS, need >= 100, got {n}")
    s2 = float(x.var(ddof=1))
    if s2 <= 0.0:
        raise DegenerateSeriesError("zero-variance series has no ESS")
    sig2, _ = _batch_means_var(x, batch_size)
    if sig2 <= 0.0:
        raise DegenerateSeriesError("batch means are exactly constant")
    return n * s2 / sig2


def batch_means_mcse(series, batch_size: int | None = None) -> float:
    """Monte Carlo standard error of the series mean, sqrt(sig2_bm / n)."""
    x = _as_series(series)
    sig2, _ = _batch_means_var(x, batch_size)
    return math.sqrt(sig2 / x.size)


@dataclass(frozen=True)
class RunSummary:
    ess: float
    ess_per_sec: float
    accept_rate: float
    mean_loops: float
    max_loops: int
    wall_time_sec: float


def summarize(trace: ChainTrace,
              g: Callable[[np.ndarray], np.ndarray] | None = None, *,
              wall_time_sec: float) -> RunSummary:
    """Assemble a RunSummary from a trace and its sampling-loop wall time.

    g maps the (n, ...) state array to the scalar series the ESS is taken
    over; None reads the first state component.  Loop statistics cover
    factory calls only (loops > 0); short-circuited rejections and explicit
    kernels contribute nothing to them.  ESS is capped at n: batch-means
    estimates can exceed n on negatively correlated series, but a run
    summary's ESS is a sample-size equivalent.
    """
    n = len(trace)
    if n == 0:
        raise ValueError("empty trace")
    if wall_time_sec <= 0.0:
        raise ValueError(f"wall_time_sec must be positive, got {wall_time_sec!r}")
    states = np.asarray(trace.states, dtype=float)
    series = states.reshape(n, -1)[:, 0] if g is None else np.asarray(g(states), dtype=float)
    e = min(float(ess(series)), float(n))
    ran_factory = trace.loops > 0
    if ran_factory.any():
        mean_loops = float(trace.loops[ran_factory].mean())
        max_loops = int(trace.loops.max())
    else:
        mean_loops = 0.0
        max_loops = 0
    return RunSummary(
        ess=e,
        ess_per_sec=e / wall_time_sec,
        accept_rate=float(np.mean(trace.accepted)),
        mean_loops=mean_loops,
        max_loops=max_loops,
        wall_time_sec=float(wall_time_sec),
    )
