"""The three Bernoulli factories and their analytic oracles.

Each factory turns a pair of WeightedCoins into a single accept/reject
event without ever evaluating the underlying probabilities.  The direct
two-coin factory realises the Barker acceptance odds c_y*p_y against
c_x*p_x; the portkey variant prepends a Bernoulli(beta) gate to every pass,
trading acceptance rate for a loop count bounded in expectation by
1/(1-beta); the flipped variant runs on coins that decompose reciprocals,
with the branch polarity swapped.

Implementation note: one "loop" of the algorithms needs at most four
scalar draws (gate, branch pick, one coin flip).  Rather than looping in
Python, each scan draws a doubling-size batch of all four streams and
terminates at the first deciding pass.  Every pass's decision depends only
on that pass's draws and all draws are iid, so the joint law of
(accepted, loops) is exactly that of the sequential algorithm; unit tests
cross-check the two formulations.  The draw order within a scan is fixed
(gate block if beta < 1, then pick block, then accept-coin block, then
reject-coin block) so runs are reproducible given the rng.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coins import PCoin, WeightedCoin

__all__ = [
    "MAX_LOOPS_DEFAULT",
    "LoopBudgetExceeded",
    "PortkeyBeta",
    "FactoryOutcome",
    "two_coin",
    "portkey_two_coin",
    "flipped_two_coin",
    "flipped_portkey_two_coin",
    "analytic_alpha_barker",
    "analytic_alpha_portkey",
    "analytic_alpha_flipped",
    "success_rate",
    "expected_loops",
    "OrderingCheck",
    "ordering_check",
    "simulate_outcomes",
]

# Default loop budget: far above the ~1.3e6 loops seen in practice on the
# heavy-tailed targets, but finite so a broken bound fails loudly.
MAX_LOOPS_DEFAULT = 10**8

_SCAN_START = 16
_SCAN_CAP = 1 << 16


class LoopBudgetExceeded(RuntimeError):
    """The factory would exceed its loop budget.

    Signals an unusably loose bound (tiny p's) rather than a bug.
    """

    def __init__(self, max_loops: int):
        super().__init__(f"factory exceeded max_loops={max_loops}")
        self.max_loops = max_loops


class PortkeyBeta(float):
    """Gate retention probability, in (0, 1]; beta = 1 disables the gate."""

    def __new__(cls, value):
        b = float(value)
        if not 0.0 < b <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {value!r}")
        return super().__new__(cls, b)


@dataclass(frozen=True)
class FactoryOutcome:
    accepted: bool
    loops: int  # passes through the outer loop; a gate rejection on entry counts as 1

    def __post_init__(self):
        if self.loops < 1:
            raise ValueError(f"loops must be >= 1, got {self.loops}")


def _share(log_c_num: float, log_c_den_other: float) -> float:
    """c_num / (c_num + c_other) from log bounds, saturating cleanly."""
    d = log_c_den_other - log_c_num
    if d > 745.0:
        return 0.0
    if d < -745.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(d))


def _run_factory(pick_accept: float, accept_coin: PCoin, reject_coin: PCoin,
                 beta: float, rng: np.random.Generator,
                 max_loops: int) -> FactoryOutcome:
    """Shared core: scan passes in doubling batches until one decides.

    pick_accept is the probability that a pass selects the branch whose
    coin success means output 1.  With beta = 1 the gate block is skipped
    entirely, which is what makes the beta=1 reduction bit-exact.
    """
    if max_loops < 1:
        raise ValueError(f"max_loops must be >= 1, got {max_loops}")
    done = 0
    scan = _SCAN_START
    while done < max_loops:
        m = min(scan, max_loops - done)
        gate_reject = None
        if beta < 1.0:
            gate_reject = rng.random(m) >= beta
        pick = rng.random(m) < pick_accept
        acc_flip = accept_coin.sample_batch(rng, m)
        rej_flip = reject_coin.sample_batch(rng, m)
        win = pick & acc_flip
        stop = win | (~pick & rej_flip)
        if gate_reject is not None:
            win &= ~gate_reject
            stop |= gate_reject
        if stop.any():
            i = int(np.argmax(stop))
            return FactoryOutcome(accepted=bool(win[i]), loops=done + i + 1)
        done += m
        scan = min(scan * 2, _SCAN_CAP)
    raise LoopBudgetExceeded(max_loops)


# ----------------------------------------------------------------------
# the factories
# ----------------------------------------------------------------------

def two_coin(x: WeightedCoin, y: WeightedCoin, rng,
             max_loops: int = MAX_LOOPS_DEFAULT) -> FactoryOutcome:
    """Barker accept event from the decompositions of pi(x)q(x,y), pi(y)q(y,x).

    Returns accepted=True with probability c_y p_y / (c_x p_x + c_y p_y);
    the loop count is Geometric((c_x p_x + c_y p_y)/(c_x + c_y)).
    """
    return _run_factory(_share(y.log_c, x.log_c), y.coin, x.coin,
                        1.0, rng, max_loops)


def portkey_two_coin(x: WeightedCoin, y: WeightedCoin, beta, rng,
                     max_loops: int = MAX_LOOPS_DEFAULT) -> FactoryOutcome:
    """Gated variant: each pass first survives a Bernoulli(beta) gate.

    Accepts with probability c_y p_y / (c_x p_x + c_y p_y +
    (1-beta)/beta * (c_x + c_y)); mean loops at most 1/(1-beta) for beta<1.
    At beta=1 this is bit-identical to two_coin on a shared rng stream.
    """
    beta = PortkeyBeta(beta)
    return _run_factory(_share(y.log_c, x.log_c), y.coin, x.coin,
                        float(beta), rng, max_loops)


def flipped_two_coin(x_recip: WeightedCoin, y_recip: WeightedCoin, rng,
                     max_loops: int = MAX_LOOPS_DEFAULT) -> FactoryOutcome:
    """Reciprocal-decomposition Barker event (branch polarity swapped).

    The coins decompose 1/(pi(x)q(x,y)) = c~_x p~_x and likewise for y;
    success on the x-side branch outputs 1.
    """
    return _run_factory(_share(x_recip.log_c, y_recip.log_c),
                        x_recip.coin, y_recip.coin, 1.0, rng, max_loops)


def flipped_portkey_two_coin(x_recip: WeightedCoin, y_recip: WeightedCoin,
                             beta, rng,
                             max_loops: int = MAX_LOOPS_DEFAULT) -> FactoryOutcome:
    """Gated reciprocal variant; beta=1 reduces to flipped_two_coin."""
    beta = PortkeyBeta(beta)
    return _run_factory(_share(x_recip.log_c, y_recip.log_c),
                        x_recip.coin, y_recip.coin, float(beta), rng, max_loops)


# ----------------------------------------------------------------------
# analytic oracles (validation path: all probabilities numerically known)
# ----------------------------------------------------------------------

def analytic_alpha_barker(c_x, p_x, c_y, p_y) -> float:
    return c_y * p_y / (c_x * p_x + c_y * p_y)


def analytic_alpha_portkey(c_x, p_x, c_y, p_y, beta) -> float:
    """Acceptance probability realised by portkey_two_coin."""
    beta = PortkeyBeta(beta)
    return c_y * p_y / (c_x * p_x + c_y * p_y + (1.0 - beta) / beta * (c_x + c_y))


def analytic_alpha_flipped(c_x_recip, p_x_recip, c_y_recip, p_y_recip, beta) -> float:
    """Acceptance probability realised by flipped_portkey_two_coin."""
    beta = PortkeyBeta(beta)
    num = c_x_recip * p_x_recip
    return num / (num + c_y_recip * p_y_recip
                  + (1.0 - beta) / beta * (c_x_recip + c_y_recip))


def success_rate(c_x, p_x, c_y, p_y, beta) -> float:
    """Probability that one pass of the outer loop resolves."""
    beta = PortkeyBeta(beta)
    return (1.0 - beta) + beta * (c_x * p_x + c_y * p_y) / (c_x + c_y)


def expected_loops(c_x, p_x, c_y, p_y, beta) -> float:
    """Mean loop count, the reciprocal of success_rate.

    At beta=1 this is (c_x+c_y)/(c_x p_x + c_y p_y); for beta<1 it is
    bounded by 1/(1-beta) whatever the coins.
    """
    s = success_rate(c_x, p_x, c_y, p_y, beta)
    if s == 0.0:
        raise ZeroDivisionError(
            "both coins are almost-surely tails at beta=1; loop count is infinite")
    return 1.0 / s


@dataclass(frozen=True)
class OrderingCheck:
    lhs_ok: bool
    rhs_ok: bool


def ordering_check(c_x, p_x, c_y, p_y, beta, delta) -> OrderingCheck:
    """Peskun-style sandwich between the gated and plain Barker acceptances.

    lhs_ok: alpha_gated <= beta * alpha_barker.
    rhs_ok: alpha_barker <= (1 + (1-beta)/(delta*beta)) * alpha_gated,
    meaningful when both coin probabilities are at least delta.

    Both the direct and flipped families are checked on the given tuple
    (read as plain or reciprocal decompositions respectively); the returned
    bits are the conjunctions.
    """
    beta = PortkeyBeta(beta)
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must be in (0, 1], got {delta!r}")
    tol = 1e-12
    blow = 1.0 + (1.0 - beta) / (delta * beta)

    a_b = analytic_alpha_barker(c_x, p_x, c_y, p_y)
    a_pk = analytic_alpha_portkey(c_x, p_x, c_y, p_y, beta)
    a_bf = c_x * p_x / (c_x * p_x + c_y * p_y)  # Barker in reciprocal coordinates
    a_fl = analytic_alpha_flipped(c_x, p_x, c_y, p_y, beta)

    lhs = (a_pk <= beta * a_b + tol) and (a_fl <= beta * a_bf + tol)
    rhs = (a_b <= blow * a_pk + tol) and (a_bf <= blow * a_fl + tol)
    return OrderingCheck(lhs_ok=lhs, rhs_ok=rhs)


# ----------------------------------------------------------------------
# vectorized Monte Carlo runner (validation only: known-p coins)
# ----------------------------------------------------------------------

def simulate_outcomes(kind: str, c_x, p_x, c_y, p_y, beta, n: int, rng,
                      max_loops: int = MAX_LOOPS_DEFAULT):
    """Run n independent factory trials vectorized across trials.

    kind is "two_coin", "portkey" or "flipped"; p_x/p_y are numerically
    known coin probabilities (for "flipped", the inputs are read as the
    reciprocal-decomposition quantities).  Per trial, the law of
    (accepted, loops) is identical to the scalar factories'; this runner
    exists because the validation grids need 10^5 trials per cell and a
    Python-level loop around the scalar factories is orders of magnitude
    too slow.  Returns (accepted bool array, loops int array).
    """
    if kind == "two_coin":
        beta = 1.0
        pick_accept, p_acc, p_rej = c_y / (c_x + c_y), p_y, p_x
    elif kind == "portkey":
        beta = float(PortkeyBeta(beta))
        pick_accept, p_acc, p_rej = c_y / (c_x + c_y), p_y, p_x
    elif kind == "flipped":
        beta = float(PortkeyBeta(beta))
        pick_accept, p_acc, p_rej = c_x / (c_x + c_y), p_x, p_y
    else:
        raise ValueError(f"unknown factory kind {kind!r}")

    accepted = np.zeros(n, dtype=bool)
    loops = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)
    it = 0
    while alive.size:
        it += 1
        if it > max_loops:
            raise LoopBudgetExceeded(max_loops)
        m = alive.size
        if beta < 1.0:
            gate_reject = rng.random(m) >= beta
        else:
            gate_reject = np.zeros(m, dtype=bool)
        pick = rng.random(m) < pick_accept
        acc_flip = rng.random(m) < p_acc
        rej_flip = rng.random(m) < p_rej
        win = ~gate_reject & pick & acc_flip
        stop = gate_reject | (pick & acc_flip) | (~pick & rej_flip)
        if stop.any():
            decided = alive[stop]
            loops[decided] = it
            accepted[alive[win]] = True
            alive = alive[~stop]
    return accepted, loops
