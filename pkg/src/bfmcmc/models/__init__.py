from .weibull import (
    Moments,
    WeibullMixtureTarget,
    WeibullPCoin,
    mixture_moments,
    weibull_envelope,
    weibull_p_coin,
)
from .correlation import (
    CorrelationModel,
    CorrelationState,
    GibbsTrace,
    NumericalDegeneracy,
    PDCoin,
    RBounds,
    SweepStats,
    gibbs_sweep,
    is_pd,
    mu_tilde_bound,
    mu_update,
    pd_coin,
    pd_pivots,
    r_bounds,
    r_update,
    run_gibbs_chain,
    sigma2_tilde_bound,
    sigma2_update,
    synth_data,
)

__all__ = [
    "Moments",
    "WeibullMixtureTarget",
    "WeibullPCoin",
    "mixture_moments",
    "weibull_envelope",
    "weibull_p_coin",
    "CorrelationModel",
    "CorrelationState",
    "GibbsTrace",
    "NumericalDegeneracy",
    "PDCoin",
    "RBounds",
    "SweepStats",
    "gibbs_sweep",
    "is_pd",
    "mu_tilde_bound",
    "mu_update",
    "pd_coin",
    "pd_pivots",
    "r_bounds",
    "r_update",
    "run_gibbs_chain",
    "sigma2_tilde_bound",
    "sigma2_update",
    "synth_data",
]
