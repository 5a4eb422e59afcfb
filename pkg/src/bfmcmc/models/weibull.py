"""Gamma mixture of Weibulls: a target whose density is an intractable
integral but whose p-coin is a one-liner.

pi(theta) = E_nu[ Weibull(theta; scale=lambda, shape=k) ] with
lambda ~ Gamma(shape=a, rate=b).  Writing u = (theta/lambda)^k, the
Weibull density is (k/theta) u e^{-u} <= k/(e theta) for every lambda
(u e^{-u} peaks at u = 1), which is the local bound c_theta.  The p-coin
draws lambda from the mixing measure and accepts with probability
e u e^{-u}, so its success probability is exactly pi(theta)/c_theta, and
the mixture's moments are available in closed form for validation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..coins import PCoin, WeightedCoin
from ..kernels import TargetModel

__all__ = [
    "weibull_envelope",
    "WeibullPCoin",
    "weibull_p_coin",
    "Moments",
    "mixture_moments",
    "WeibullMixtureTarget",
]


def weibull_envelope(theta: float, k: float) -> float:
    """The local bound c_theta = k/(e*theta), valid for every scale."""
    if theta <= 0.0:
        raise ValueError(f"theta must be positive, got {theta!r}")
    if k <= 0.0:
        raise ValueError(f"shape k must be positive, got {k!r}")
    return k / (math.e * theta)


class WeibullPCoin(PCoin):
    """Heads with probability pi(theta)/c_theta; no density ever evaluated.

    Draw order per flip batch: the lambda block, then the uniform block.
    """

    __slots__ = ("theta", "k", "gamma_shape", "gamma_scale")

    def __init__(self, theta: float, k: float, gamma_shape: float, gamma_rate: float):
        if theta <= 0.0:
            raise ValueError(f"theta must be positive, got {theta!r}")
        self.theta = float(theta)
        self.k = float(k)
        self.gamma_shape = float(gamma_shape)
        self.gamma_scale = 1.0 / float(gamma_rate)

    def sample_batch(self, rng, n):
        lam = rng.gamma(self.gamma_shape, self.gamma_scale, size=n)
        u = (self.theta / lam) ** self.k
        # e*u*exp(-u) is in [0, 1] with max 1 at u=1; underflows to 0 for
        # large u, which is the right answer
        return rng.random(n) < math.e * u * np.exp(-u)


def weibull_p_coin(theta: float, model: "WeibullMixtureTarget", rng) -> bool:
    """One flip of the envelope coin at theta under the model's mixing measure."""
    return WeibullPCoin(theta, model.k, model.gamma_shape, model.gamma_rate).sample(rng)


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float


def mixture_moments(model: "WeibullMixtureTarget") -> Moments:
    """Closed-form mean/variance of the mixture.

    E[theta] = Gamma(1+1/k) E[lambda], E[theta^2] = Gamma(1+2/k) E[lambda^2]
    with Gamma(a, rate b) moments a/b and a(a+1)/b^2.
    """
    a, b, k = model.gamma_shape, model.gamma_rate, model.k
    e_lam = a / b
    e_lam2 = a * (a + 1.0) / b**2
    mean = math.gamma(1.0 + 1.0 / k) * e_lam
    var = e_lam2 * math.gamma(1.0 + 2.0 / k) - mean**2
    return Moments(mean=mean, variance=var)


class WeibullMixtureTarget(TargetModel):
    """Random-walk target for the mixture; support is theta > 0.

    The proposal is N(current, proposal_sd^2); negative proposals are
    rejected before any factory call.  The proposal is symmetric, so the
    coin decomposition carries no q factor.
    """

    flipped = False

    def __init__(self, k: float = 10.0, gamma_shape: float = 10.0,
                 gamma_rate: float = 100.0, proposal_sd: float = 2.0,
                 initial_theta: float = 0.1):
        if min(k, gamma_shape, gamma_rate, proposal_sd, initial_theta) <= 0.0:
            raise ValueError("all WeibullMixtureTarget parameters must be positive")
        self.k = float(k)
        self.gamma_shape = float(gamma_shape)
        self.gamma_rate = float(gamma_rate)
        self.proposal_sd = float(proposal_sd)
        self.initial_theta = float(initial_theta)

    def initial_state(self):
        return self.initial_theta

    def propose(self, state, rng):
        return float(state + rng.normal(0.0, self.proposal_sd))

    def in_support(self, state) -> bool:
        return state > 0.0

    def weighted_coin_at(self, state_from, state_to) -> WeightedCoin:
        return WeightedCoin(
            weibull_envelope(state_from, self.k),
            WeibullPCoin(state_from, self.k, self.gamma_shape, self.gamma_rate),
        )
