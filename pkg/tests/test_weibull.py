import math

import numpy as np
import pytest
from scipy.stats import weibull_min

from bfmcmc.kernels import run_chain
from bfmcmc.models.weibull import (
    WeibullMixtureTarget,
    WeibullPCoin,
    mixture_moments,
    weibull_envelope,
    weibull_p_coin,
)

# Success probabilities of the envelope coin at the default mixing measure
# (shape k=10, lambda ~ Gamma(shape 10, rate 100)), computed once by adaptive
# quadrature of E_lambda[e u exp(-u)], u = (theta/lambda)^k, and frozen.
COIN_PROB = {
    0.05: 0.07330616691177692,
    0.1: 0.31187501277780816,
    0.2: 0.014654461890032238,
    0.3: 7.002896082644174e-05,
}

# Closed-form moments of the default mixture, frozen from quadrature of
# theta^m against the mixture density.
MIX_MEAN = 0.09513507698668729
MIX_VAR = 0.001049173293134446


# ----------------------------------------------------------------------
# envelope
# ----------------------------------------------------------------------

def test_envelope_hand_values():
    assert weibull_envelope(1.0, math.e) == pytest.approx(1.0)
    assert weibull_envelope(0.1, 10.0) == pytest.approx(36.78794411714423)


def test_envelope_dominates_the_density_and_is_tight():
    rng = np.random.default_rng(20)
    for _ in range(40):
        theta = float(rng.uniform(0.02, 3.0))
        k = float(rng.uniform(0.5, 12.0))
        bound = weibull_envelope(theta, k)
        lam = np.geomspace(theta / 50.0, theta * 50.0, 2001)
        dens = weibull_min.pdf(theta, k, scale=lam)
        assert dens.max() <= bound * (1.0 + 1e-12)
        # the bound is attained at lambda = theta, where u = 1
        at_theta = float(weibull_min.pdf(theta, k, scale=theta))
        assert at_theta == pytest.approx(bound, rel=1e-12)


def test_envelope_rejects_bad_arguments():
    with pytest.raises(ValueError):
        weibull_envelope(0.0, 10.0)
    with pytest.raises(ValueError):
        weibull_envelope(0.1, -1.0)


# ----------------------------------------------------------------------
# p-coin
# ----------------------------------------------------------------------

@pytest.mark.parametrize("theta", [0.05, 0.1, 0.2])
def test_p_coin_frequency_matches_quadrature(theta):
    coin = WeibullPCoin(theta, 10.0, 10.0, 100.0)
    n = 400_000
    freq = coin.sample_batch(np.random.default_rng(21), n).mean()
    p = COIN_PROB[theta]
    assert abs(freq - p) < 4.0 * math.sqrt(p * (1.0 - p) / n)


def test_p_coin_rare_heads_in_the_tail():
    coin = WeibullPCoin(0.3, 10.0, 10.0, 100.0)
    n = 4_000_000
    freq = coin.sample_batch(np.random.default_rng(22), n).mean()
    p = COIN_PROB[0.3]
    assert abs(freq - p) < 4.0 * math.sqrt(p / n)


def test_p_coin_underflows_to_tails_for_far_out_theta():
    coin = WeibullPCoin(5.0, 10.0, 10.0, 100.0)
    assert not coin.sample_batch(np.random.default_rng(23), 10_000).any()


def test_p_coin_rejects_nonpositive_theta():
    with pytest.raises(ValueError):
        WeibullPCoin(-0.1, 10.0, 10.0, 100.0)


def test_p_coin_helper_matches_class():
    model = WeibullMixtureTarget()
    a = weibull_p_coin(0.1, model, np.random.default_rng(24))
    b = WeibullPCoin(0.1, 10.0, 10.0, 100.0).sample(np.random.default_rng(24))
    assert a == b


# ----------------------------------------------------------------------
# moments
# ----------------------------------------------------------------------

def test_mixture_moments_frozen_defaults():
    m = mixture_moments(WeibullMixtureTarget())
    assert m.mean == pytest.approx(MIX_MEAN, rel=1e-12)
    assert m.variance == pytest.approx(MIX_VAR, rel=1e-12)
    assert m.mean == pytest.approx(math.gamma(1.1) * 0.1, rel=1e-12)


def test_mixture_moments_hand_case():
    # k=1 collapses to Exponential(scale lambda): mean a/b, var 2 E[lam^2] - mean^2
    m = mixture_moments(WeibullMixtureTarget(k=1.0, gamma_shape=1.0,
                                             gamma_rate=10.0))
    assert m.mean == pytest.approx(0.1)
    assert m.variance == pytest.approx(2.0 * 2.0 / 100.0 - 0.01)


def test_mixture_moments_against_direct_simulation():
    rng = np.random.default_rng(25)
    model = WeibullMixtureTarget()
    lam = rng.gamma(10.0, 1.0 / 100.0, size=2_000_000)
    theta = lam * rng.weibull(10.0, size=lam.size)
    m = mixture_moments(model)
    assert abs(theta.mean() - m.mean) < 4.0 * theta.std() / math.sqrt(theta.size)
    assert m.variance == pytest.approx(theta.var(), rel=0.01)


# ----------------------------------------------------------------------
# target model wiring
# ----------------------------------------------------------------------

def test_target_model_contracts():
    model = WeibullMixtureTarget()
    assert model.initial_state() == 0.1
    assert model.in_support(1e-9)
    assert not model.in_support(0.0)
    assert not model.in_support(-0.5)
    assert model.log_proposal_density(0.1, 0.2) is None  # symmetric
    coin = model.weighted_coin_at(0.2, 0.1)
    assert coin.c == pytest.approx(weibull_envelope(0.2, 10.0))
    assert isinstance(coin.coin, WeibullPCoin)
    assert coin.coin.theta == 0.2
    with pytest.raises(ValueError):
        WeibullMixtureTarget(proposal_sd=0.0)
    with pytest.raises(ValueError):
        WeibullMixtureTarget(initial_theta=-0.1)


def test_proposal_is_a_gaussian_step():
    model = WeibullMixtureTarget(proposal_sd=2.0)
    rng = np.random.default_rng(26)
    z = np.random.default_rng(26).normal(0.0, 2.0)
    assert model.propose(0.1, rng) == pytest.approx(0.1 + z)


def test_short_chain_stays_in_support():
    model = WeibullMixtureTarget()
    trace = run_chain(model, "two_coin", 1.0, 2000, seed=27)
    assert np.all(trace.states > 0.0)
    assert (trace.loops > 0).any()  # some proposals land in support
    assert (trace.loops == 0).any()  # sd=2 walks negative often
