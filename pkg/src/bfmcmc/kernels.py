"""Markov kernels driven by factory accept events.

A TargetModel supplies proposals and WeightedCoin decompositions; the
kernel never sees a density unless it is one of the explicit baselines
(barker_explicit, mh_explicit), which exist for validation against targets
whose density actually is computable.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .coins import BernoulliCoin, WeightedCoin
from .factories import (
    MAX_LOOPS_DEFAULT,
    FactoryOutcome,
    PortkeyBeta,
    flipped_portkey_two_coin,
    portkey_two_coin,
    two_coin,
)

__all__ = [
    "KERNEL_KINDS",
    "FACTORY_KINDS",
    "TargetModel",
    "ChainState",
    "StepResult",
    "ChainTrace",
    "step",
    "run_chain",
    "finite_state_transition_matrix",
    "DiscreteTarget",
]

KERNEL_KINDS = ("barker_explicit", "two_coin", "portkey", "flipped_portkey",
                "mh_explicit")
FACTORY_KINDS = frozenset({"two_coin", "portkey", "flipped_portkey"})


class TargetModel(abc.ABC):
    """What a kernel needs from a target distribution.

    ``flipped`` declares whether weighted_coin_at decomposes pi*q or its
    reciprocal.  ``log_proposal_density`` returning None declares the
    proposal symmetric; explicit kernels then drop the q terms.
    """

    flipped: bool = False

    @abc.abstractmethod
    def initial_state(self):
        ...

    @abc.abstractmethod
    def propose(self, state, rng):
        """Draw y ~ q(state, .)."""

    @abc.abstractmethod
    def weighted_coin_at(self, state_from, state_to) -> WeightedCoin:
        """The c*p decomposition of pi(state_from) q(state_from, state_to),
        or of its reciprocal in flipped mode."""

    def in_support(self, state) -> bool:
        return True

    def exact_log_density(self, state) -> float:
        """Unnormalized log target; only validation targets implement it."""
        raise NotImplementedError(
            f"{type(self).__name__} has no computable density")

    def log_proposal_density(self, state_from, state_to) -> float | None:
        return None  # symmetric by default

    def _has_exact_density(self) -> bool:
        return type(self).exact_log_density is not TargetModel.exact_log_density


@dataclass(frozen=True)
class ChainState:
    value: Any
    step_index: int = 0


@dataclass(frozen=True)
class StepResult:
    next: ChainState
    outcome: FactoryOutcome | None  # None when no factory ran
    accepted: bool


@dataclass
class ChainTrace:
    states: np.ndarray
    accepted: np.ndarray
    loops: np.ndarray
    seed: Any
    kernel_kind: str
    beta: float = 1.0

    def __post_init__(self):
        n = len(self.states)
        if not (len(self.accepted) == len(self.loops) == n):
            raise ValueError("trace sequences must have equal length")

    def __len__(self):
        return len(self.states)


def _check_kind(model: TargetModel, kernel_kind: str) -> None:
    if kernel_kind not in KERNEL_KINDS:
        raise ValueError(f"unknown kernel_kind {kernel_kind!r}")
    if kernel_kind == "flipped_portkey":
        if not model.flipped:
            raise ValueError("flipped_portkey kernel requires a flipped model")
    elif kernel_kind in FACTORY_KINDS:
        if model.flipped:
            raise ValueError(
                f"{kernel_kind} kernel requires a direct (non-flipped) model")
    elif not model._has_exact_density():
        raise ValueError(
            f"{kernel_kind} kernel needs exact_log_density on the model")


def _log_ratio(model, x_val, y_val) -> float:
    """log [pi(y)q(y,x)] - log [pi(x)q(x,y)], q terms dropped if symmetric."""
    d = model.exact_log_density(y_val) - model.exact_log_density(x_val)
    q_xy = model.log_proposal_density(x_val, y_val)
    if q_xy is not None:
        d += model.log_proposal_density(y_val, x_val) - q_xy
    return d


def step(model: TargetModel, x: ChainState, kernel_kind: str, beta, rng,
         max_loops: int = MAX_LOOPS_DEFAULT) -> StepResult:
    """One kernel transition from x.

    Proposals outside the support are rejected before any factory call.
    """
    _check_kind(model, kernel_kind)
    y_val = model.propose(x.value, rng)
    if not model.in_support(y_val):
        return StepResult(ChainState(x.value, x.step_index + 1), None, False)

    outcome: FactoryOutcome | None = None
    if kernel_kind in FACTORY_KINDS:
        c_from = model.weighted_coin_at(x.value, y_val)
        c_to = model.weighted_coin_at(y_val, x.value)
        if kernel_kind == "two_coin":
            outcome = two_coin(c_from, c_to, rng, max_loops)
        elif kernel_kind == "portkey":
            outcome = portkey_two_coin(c_from, c_to, beta, rng, max_loops)
        else:
            outcome = flipped_portkey_two_coin(c_from, c_to, beta, rng, max_loops)
        accepted = outcome.accepted
    else:
        d = _log_ratio(model, x.value, y_val)
        u = rng.random()
        if kernel_kind == "barker_explicit":
            # accept iff u < 1/(1+exp(-d)), i.e. logit(u) < d; exact and
            # overflow-free for any d
            accepted = True if u <= 0.0 else (math.log(u) - math.log1p(-u) < d)
        else:  # mh_explicit
            accepted = d >= 0.0 or u <= 0.0 or math.log(u) < d

    next_val = y_val if accepted else x.value
    return StepResult(ChainState(next_val, x.step_index + 1), outcome, accepted)


def run_chain(model: TargetModel, kernel_kind: str, beta, n_steps: int, seed,
              max_loops: int = MAX_LOOPS_DEFAULT) -> ChainTrace:
    """Iterate step() n_steps times from the model's initial state.

    Deterministic given seed.  Step errors propagate with the failing step
    index attached as exc.step_index.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if kernel_kind in ("portkey", "flipped_portkey"):
        beta = float(PortkeyBeta(beta))
    else:
        beta = float(beta)
    rng = np.random.default_rng(seed)
    state = ChainState(model.initial_state(), 0)
    if not model.in_support(state.value):
        raise ValueError(f"initial state {state.value!r} outside model support")

    values = []
    accepted = np.zeros(n_steps, dtype=bool)
    loops = np.zeros(n_steps, dtype=np.int64)
    for i in range(n_steps):
        try:
            res = step(model, state, kernel_kind, beta, rng, max_loops)
        except Exception as exc:
            exc.step_index = i
            raise
        accepted[i] = res.accepted
        if res.outcome is not None:
            loops[i] = res.outcome.loops
        state = res.next
        values.append(state.value)
    return ChainTrace(states=np.asarray(values), accepted=accepted, loops=loops,
                      seed=seed, kernel_kind=kernel_kind, beta=beta)


# ----------------------------------------------------------------------
# finite-state machinery (reversibility oracle + validation target)
# ----------------------------------------------------------------------

def finite_state_transition_matrix(pi, q, beta, d_mode: str = "portkey", *,
                                   p_slack=None, d=None) -> np.ndarray:
    """Exact transition matrix of the gated Barker kernel on a finite target.

    Off-diagonals are q(x,y) * alpha(x,y) with
    alpha(x,y) = piq_yx / (piq_xy + piq_yx + d(x,y)) and the d term chosen
    by d_mode:

    - "portkey": d = (1-beta)/beta * (piq_xy/pk_xy + piq_yx/pk_yx), the
      bound sum when the coins have probability pk = p_slack.
    - "flipped": the reciprocal-decomposition analogue; with slack coins
      the indices cross, d = (1-beta)/beta * (piq_yx/pk_xy + piq_xy/pk_yx).
    - "custom": d is the supplied matrix; asymmetric entries are allowed so
      the only-if direction of reversibility can be exercised.

    A common constant on all the bounds cancels out of alpha (and of the
    loop law), so no such scale appears here; DiscreteTarget.c_scale exists
    to verify that invariance against simulation.

    The diagonal absorbs the rejection mass.  Pairs with zero flow in
    either direction get alpha = 0.
    """
    pi = np.asarray(pi, dtype=float)
    q = np.asarray(q, dtype=float)
    k = pi.shape[0]
    if pi.ndim != 1 or q.shape != (k, k):
        raise ValueError(f"dimension mismatch: pi {pi.shape}, q {q.shape}")
    if k > 50:
        raise ValueError("finite-state oracle is meant for small spaces (<= 50)")
    if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-8:
        raise ValueError("pi must be a strictly positive probability vector")
    if np.any(q < 0) or np.max(np.abs(q.sum(axis=1) - 1.0)) > 1e-8:
        raise ValueError("q rows must be probability vectors")
    beta = PortkeyBeta(beta)
    if p_slack is None:
        p_slack = np.ones((k, k))
    else:
        p_slack = np.asarray(p_slack, dtype=float)
        if p_slack.shape != (k, k):
            raise ValueError(f"dimension mismatch: p_slack {p_slack.shape}")

    piq = pi[:, None] * q
    flow = piq * piq.T  # zero where either direction is blocked
    with np.errstate(divide="ignore", invalid="ignore"):
        if d_mode == "portkey":
            c = piq / p_slack
            dmat = (1.0 - beta) / beta * (c + c.T)
        elif d_mode == "flipped":
            c_recip = 1.0 / (piq * p_slack)
            dmat = (1.0 - beta) / beta * (c_recip + c_recip.T) * flow
        elif d_mode == "custom":
            if d is None:
                raise ValueError("custom d_mode requires a d matrix")
            dmat = np.asarray(d, dtype=float)
            if dmat.shape != (k, k):
                raise ValueError(f"dimension mismatch: d {dmat.shape}")
        else:
            raise ValueError(f"unknown d_mode {d_mode!r}")
        alpha = np.where(flow > 0.0, piq.T / (piq + piq.T + dmat), 0.0)

    P = q * alpha
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


class DiscreteTarget(TargetModel):
    """Finite validation target: densities known, coins known-p Bernoullis.

    The coin decomposition uses c = c_scale * pi(x)q(x,y) / p_slack[x,y]
    (reciprocal analogue in flipped mode), so the realized acceptance is
    exactly what finite_state_transition_matrix predicts for the same
    p_slack.  p_slack < 1 loosens the bounds, which lowers gated acceptance
    and lengthens loops; c_scale multiplies every bound by a common
    constant, which must change nothing (the factories only consume bound
    ratios).
    """

    def __init__(self, pi, q, *, p_slack=None, c_scale: float = 1.0,
                 flipped: bool = False, initial: int = 0):
        self.pi = np.asarray(pi, dtype=float)
        self.q = np.asarray(q, dtype=float)
        k = self.pi.shape[0]
        if self.q.shape != (k, k):
            raise ValueError("pi/q dimension mismatch")
        self._cum_q = np.cumsum(self.q, axis=1)
        self.p_slack = (np.ones((k, k)) if p_slack is None
                        else np.asarray(p_slack, dtype=float))
        self.c_scale = float(c_scale)
        self.flipped = bool(flipped)
        self.initial = int(initial)
        self._symmetric_q = bool(np.allclose(self.q, self.q.T))

    def initial_state(self):
        return self.initial

    def propose(self, state, rng):
        return int(np.searchsorted(self._cum_q[state], rng.random(), side="right"))

    def weighted_coin_at(self, state_from, state_to) -> WeightedCoin:
        piq = self.pi[state_from] * self.q[state_from, state_to]
        pk = self.p_slack[state_from, state_to]
        if self.flipped:
            c = 1.0 / (self.c_scale * piq * pk)
        else:
            c = self.c_scale * piq / pk
        return WeightedCoin(c, BernoulliCoin(pk))

    def in_support(self, state) -> bool:
        return 0 <= state < self.pi.shape[0]

    def exact_log_density(self, state) -> float:
        return math.log(self.pi[state])

    def log_proposal_density(self, state_from, state_to):
        if self._symmetric_q:
            return None
        return math.log(self.q[state_from, state_to])

    def transition_matrix(self, kernel_kind: str, beta=1.0) -> np.ndarray:
        """Analytic matrix matching run_chain on this target."""
        if kernel_kind in ("two_coin", "barker_explicit"):
            return finite_state_transition_matrix(
                self.pi, self.q, 1.0, "portkey", p_slack=self.p_slack)
        if kernel_kind == "portkey":
            return finite_state_transition_matrix(
                self.pi, self.q, beta, "portkey", p_slack=self.p_slack)
        if kernel_kind == "flipped_portkey":
            return finite_state_transition_matrix(
                self.pi, self.q, beta, "flipped", p_slack=self.p_slack)
        if kernel_kind == "mh_explicit":
            piq = self.pi[:, None] * self.q
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha = np.where(piq * piq.T > 0, np.minimum(1.0, piq.T / piq), 0.0)
            P = self.q * alpha
            np.fill_diagonal(P, 0.0)
            np.fill_diagonal(P, 1.0 - P.sum(axis=1))
            return P
        raise ValueError(f"unknown kernel_kind {kernel_kind!r}")
