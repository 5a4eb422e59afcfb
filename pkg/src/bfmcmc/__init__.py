"""Bernoulli-factory MCMC: exact kernels for targets you can only flip coins at.

The factory routines turn an event of unknown probability (a "p-coin") plus
a computable bound into an accept/reject decision whose law is exactly the
Barker rule, or its gated portkey variant that trades a little acceptance
for a hard cap on the expected number of coin flips.
"""
from .coins import BernoulliCoin, ModelContractError, PCoin, WeightedCoin
from .diagnostics import (
    DegenerateSeriesError,
    RunSummary,
    acf,
    batch_means_mcse,
    ess,
    summarize,
)
from .factories import (
    MAX_LOOPS_DEFAULT,
    FactoryOutcome,
    LoopBudgetExceeded,
    OrderingCheck,
    PortkeyBeta,
    analytic_alpha_barker,
    analytic_alpha_flipped,
    analytic_alpha_portkey,
    expected_loops,
    flipped_portkey_two_coin,
    flipped_two_coin,
    ordering_check,
    portkey_two_coin,
    simulate_outcomes,
    success_rate,
    two_coin,
)
from .kernels import (
    FACTORY_KINDS,
    KERNEL_KINDS,
    ChainState,
    ChainTrace,
    DiscreteTarget,
    StepResult,
    TargetModel,
    finite_state_transition_matrix,
    run_chain,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "BernoulliCoin",
    "ModelContractError",
    "PCoin",
    "WeightedCoin",
    "DegenerateSeriesError",
    "RunSummary",
    "acf",
    "batch_means_mcse",
    "ess",
    "summarize",
    "MAX_LOOPS_DEFAULT",
    "FactoryOutcome",
    "LoopBudgetExceeded",
    "OrderingCheck",
    "PortkeyBeta",
    "analytic_alpha_barker",
    "analytic_alpha_flipped",
    "analytic_alpha_portkey",
    "expected_loops",
    "flipped_portkey_two_coin",
    "flipped_two_coin",
    "ordering_check",
    "portkey_two_coin",
    "simulate_outcomes",
    "success_rate",
    "two_coin",
    "FACTORY_KINDS",
    "KERNEL_KINDS",
    "ChainState",
    "ChainTrace",
    "DiscreteTarget",
    "StepResult",
    "TargetModel",
    "finite_state_transition_matrix",
    "run_chain",
    "step",
    "__version__",
]
