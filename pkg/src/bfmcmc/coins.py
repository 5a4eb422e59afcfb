"""Coins: the randomness primitives the factories consume.

A p-coin is anything that can produce independent Bernoulli(p) events; the
probability p itself may be unknown numerically (that is the whole point).
A WeightedCoin pairs a p-coin with the local bound c of the decomposition
c * p, carried in log scale because only ratios of c's are ever used and
the correlation model's bounds overflow doubles.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "ModelContractError",
    "PCoin",
    "BernoulliCoin",
    "WeightedCoin",
]


class ModelContractError(ValueError):
    """A model handed the kernel something that violates its contract,
    e.g. a coin whose nominal probability is outside [0, 1] (the local
    bound c was not actually an upper bound)."""


class PCoin:
    """Source of iid Bernoulli(p) events.

    Subclasses implement ``sample_batch``; ``sample`` is derived from it so
    scalar and batched callers share one code path.  ``known_p`` is set only
    on validation coins whose probability is numerically known.
    """

    known_p: float | None = None

    def sample(self, rng: np.random.Generator) -> bool:
        return bool(self.sample_batch(rng, 1)[0])

    def sample_batch(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Return a boolean array of n independent flips."""
        raise NotImplementedError


class BernoulliCoin(PCoin):
    """Validation coin with numerically known probability."""

    __slots__ = ("known_p",)

    def __init__(self, p: float):
        p = float(p)
        if not 0.0 <= p <= 1.0:
            raise ModelContractError(f"coin probability outside [0, 1]: {p!r}")
        self.known_p = p

    def sample_batch(self, rng, n):
        return rng.random(n) < self.known_p

    def __repr__(self):
        return f"BernoulliCoin({self.known_p!r})"


class WeightedCoin:
    """The pair (c, coin) representing the product c * p.

    c must be a strictly positive local bound.  Only ratios of c's are ever
    consumed downstream, so it is stored as log_c; pass ``log_c=`` directly
    when the bound is computed in log scale.
    """

    __slots__ = ("log_c", "coin")

    def __init__(self, c: float | None = None, coin: PCoin | None = None, *,
                 log_c: float | None = None):
        if coin is None:
            raise TypeError("WeightedCoin requires a coin")
        if (c is None) == (log_c is None):
            raise TypeError("pass exactly one of c or log_c")
        if c is not None:
            c = float(c)
            if not c > 0.0 or not math.isfinite(c):
                raise ModelContractError(f"bound c must be positive and finite: {c!r}")
            log_c = math.log(c)
        log_c = float(log_c)
        if math.isnan(log_c) or log_c == math.inf:
            raise ModelContractError(f"log_c must be finite or -inf-free: {log_c!r}")
        if log_c == -math.inf:
            raise ModelContractError("bound c underflowed to zero")
        kp = coin.known_p
        if kp is not None and not -1e-12 <= kp <= 1.0 + 1e-12:
            raise ModelContractError(
                f"known_p={kp!r} outside [0, 1]: the bound c is not an upper bound")
        self.log_c = log_c
        self.coin = coin

    @property
    def c(self) -> float:
        try:
            return math.exp(self.log_c)
        except OverflowError:
            return math.inf

    def __repr__(self):
        return f"WeightedCoin(log_c={self.log_c!r}, coin={self.coin!r})"
