"""Release acceptance suite: eight criteria, one test each, in order.

Every tolerance is written out next to its assertion and is fixed; the
random seeds below are frozen so each criterion is a deterministic
pass/fail.  Assertion messages carry the measured quantities so a failing
run reports what was seen, not just that it differed.
"""
import math
import time

import numpy as np
import pytest
from scipy.special import ndtr, roots_legendre
from scipy.stats import kstest

from bfmcmc.config import ExperimentConfig
from bfmcmc.factories import ordering_check
from bfmcmc.harness import run_replication
from bfmcmc.kernels import run_chain
from bfmcmc.models.correlation import (
    CorrelationModel,
    mu_update,
    run_gibbs_chain,
    synth_data,
)
from bfmcmc.models.weibull import WeibullMixtureTarget, mixture_moments
from bfmcmc.validate import (
    GRID_SEED,
    detailed_balance_check,
    factory_grid_report,
    grid_checks,
)

ORDERING_SEED = 20250814
WEIBULL_SWEEP_SEED = 401
CORR_DATA_SEED = 601
CORR_CHAIN_SEED = 602
KS_CHAIN_SEED = 701
REDUCTION_SEEDS = (801, 802, 803)


@pytest.fixture(scope="module")
def grid_run():
    start = time.perf_counter()
    cells = factory_grid_report(GRID_SEED, n_trials=100_000)
    return cells, time.perf_counter() - start


def test_criterion_1_factory_frequencies_match_analytic_acceptance(grid_run):
    """Every factory cell within 4 binomial sigma at 10^5 trials, < 5 min."""
    cells, elapsed = grid_run
    freq, _ = grid_checks(cells)
    assert freq.passed, freq.detail
    assert elapsed < 300.0, f"grid took {elapsed:.0f}s, budget is 300s"


def test_criterion_2_portkey_loop_counts_follow_the_geometric_law(grid_run):
    """Per-cell mean loops within 3 SE of the analytic expectation; beta<1
    max under 50/(1-beta)."""
    cells, _ = grid_run
    _, loops = grid_checks(cells)
    assert loops.passed, loops.detail


def test_criterion_3_detailed_balance_of_analytic_transition_matrices():
    """pi(x)P(x,y) symmetric to 1e-12 on 100 random targets, both direct
    and flipped modes; an asymmetric custom d must violate it."""
    res = detailed_balance_check()
    assert res.passed, res.detail


def test_criterion_4_acceptance_ordering_inequalities():
    """Gated acceptance sandwiched between beta * Barker and Barker /
    (1 + (1-beta)/(delta beta)) over 10^4 random tuples meeting the
    delta floor."""
    rng = np.random.default_rng(ORDERING_SEED)
    for trial in range(10_000):
        delta = rng.uniform(0.05, 0.9)
        c_x, c_y = rng.uniform(0.1, 10.0, 2)
        p_x, p_y = rng.uniform(delta, 1.0, 2)
        beta = rng.uniform(0.01, 1.0)
        res = ordering_check(c_x, p_x, c_y, p_y, beta, delta)
        assert res.lhs_ok and res.rhs_ok, (
            f"tuple {trial}: c=({c_x:.3f},{c_y:.3f}) p=({p_x:.3f},{p_y:.3f}) "
            f"beta={beta:.3f} delta={delta:.3f} -> {res}")


def test_criterion_5_weibull_mixture_experiment():
    """50 replications x 10^5 steps per beta.  (a) mean loops within 25% of
    32 / 7.63 / 3.97 / 2.55, or the documented fallback: mean_loops(1) at
    least twice mean_loops(0.99), strictly decreasing below 1, and every
    beta<1 mean under 1/(1-beta).  (b) mean ESS strictly decreasing in
    decreasing beta.  (c) each posterior mean of theta within 3 MCSE of the
    closed-form mixture mean, MCSE = sd of replication means / sqrt(50).

    The ungated kernel's loop count has no finite expectation here (the
    bound constant blows up as theta -> 0), so its empirical mean grows
    with the total number of factory calls; at this scale it sits well
    under the reference value, which was produced with 20x more calls.
    The fallback asks that the ungated mean still exceed the beta=0.99
    mean by more than the ratio between any two adjacent gated levels
    (those are at most 1.9x), hence the factor of two."""
    betas = (1.0, 0.99, 0.9, 0.75)
    loop_targets = {1.0: 32.0, 0.99: 7.63, 0.9: 3.97, 0.75: 2.55}
    n_reps = 50
    cfg = ExperimentConfig(model="weibull", kernel="portkey", betas=betas,
                           n_steps=100_000, n_replications=n_reps,
                           seed=WEIBULL_SWEEP_SEED, trace_thin=0)
    target_mean = mixture_moments(WeibullMixtureTarget()).mean

    loops, esses, theta_means = {}, {}, {}
    for bi, beta in enumerate(betas):
        per_rep = [run_replication(cfg, bi, rep) for rep in range(n_reps)]
        loops[beta] = np.array([r.summary.mean_loops for r in per_rep])
        esses[beta] = np.array([r.summary.ess for r in per_rep])
        theta_means[beta] = np.array([float(np.mean(r.trace.states))
                                      for r in per_rep])

    # (a) loop-count calibration, primary then fallback
    ml = {b: float(loops[b].mean()) for b in betas}
    primary = all(abs(ml[b] - loop_targets[b]) <= 0.25 * loop_targets[b]
                  for b in betas)
    fallback = (ml[1.0] >= 2.0 * ml[0.99]
                and ml[0.99] > ml[0.9] > ml[0.75]
                and all(ml[b] <= 1.0 / (1.0 - b) for b in betas[1:]))
    assert primary or fallback, (
        f"mean loops {ml} match neither the 25% bands around {loop_targets} "
        f"nor the ordering-and-bound fallback")
    print(f"\ncriterion 5a: mean loops {ml} "
          f"({'primary' if primary else 'fallback'} leg)")

    # (b) ESS ordering
    ess_means = [float(esses[b].mean()) for b in betas]
    assert all(hi > lo for hi, lo in zip(ess_means, ess_means[1:])), (
        f"mean ESS not strictly decreasing in decreasing beta: {ess_means}")
    print(f"criterion 5b: mean ESS {[round(e) for e in ess_means]}")

    # (c) posterior mean recovery
    for beta in betas:
        tm = theta_means[beta]
        mcse = float(tm.std(ddof=1)) / math.sqrt(n_reps)
        err = abs(float(tm.mean()) - target_mean)
        assert err < 3.0 * mcse, (
            f"beta={beta}: |{tm.mean():.6f} - {target_mean:.6f}| = {err:.2e} "
            f">= 3 x MCSE {mcse:.2e}")
        print(f"criterion 5c: beta={beta} mean={tm.mean():.6f} "
              f"mcse={mcse:.2e}")


TRUE_R4 = np.array([
    [1.0, 0.5, 0.3, 0.2],
    [0.5, 1.0, 0.4, 0.25],
    [0.3, 0.4, 1.0, 0.35],
    [0.2, 0.25, 0.35, 1.0],
])


def test_criterion_6_correlation_experiment_on_synthetic_data():
    """p=4, n=1860 synthetic draws from a known correlation matrix.
    (a) posterior mean of every r_ij within 3 posterior sd of truth, for
    both beta=1 and beta=0.9 runs; (b) max mu-factory loops at beta=0.9 at
    least 10x smaller than at beta=1 over 10^4 sweeps; (c) beta=0.9 mean
    mu loops below 5."""
    data = synth_data(1860, 4, TRUE_R4, np.random.default_rng(CORR_DATA_SEED))
    truth = TRUE_R4[np.triu_indices(4, 1)]
    burn = 1000
    traces = {}
    for beta in (1.0, 0.9):
        model = CorrelationModel(data, beta_mu=beta, beta_sigma2=beta)
        traces[beta] = run_gibbs_chain(model, 10_000, seed=CORR_CHAIN_SEED)

    for beta, tr in traces.items():
        post_mean = tr.r[burn:].mean(axis=0)
        post_sd = tr.r[burn:].std(axis=0)
        z = np.abs(post_mean - truth) / post_sd
        assert z.max() < 3.0, (
            f"beta={beta}: r posterior means {np.round(post_mean, 4)} vs "
            f"truth {truth}, worst |z| = {z.max():.2f}")
        print(f"\ncriterion 6a: beta={beta} worst r |z| = {z.max():.2f}")

    max_1 = int(traces[1.0].mu_loops.max())
    max_09 = int(traces[0.9].mu_loops.max())
    assert max_1 >= 10 * max_09, (
        f"max mu loops: beta=1 {max_1} vs beta=0.9 {max_09}; "
        f"gate shrank the worst case only {max_1 / max_09:.1f}x, need 10x")
    print(f"criterion 6b: max mu loops {max_1} (beta=1) vs {max_09} "
          f"(beta=0.9), factor {max_1 / max_09:.0f}")

    mean_09 = float(traces[0.9].mu_loops.mean())
    assert mean_09 < 5.0, f"beta=0.9 mean mu loops {mean_09:.2f} >= 5"
    print(f"criterion 6c: beta=0.9 mean mu loops {mean_09:.2f}")


R_FIXED3 = np.array([[1.0, 0.2, 0.1], [0.2, 1.0, 0.3], [0.1, 0.3, 1.0]])


def pd_box_mass_by_quadrature(mu_grid, sigma2, n_nodes=96):
    """P under N(mu, sigma2)^3 of a positive-definite 3x3 correlation
    matrix with all entries inside (-1, 1): the admissible interval for
    the third entry given the first two is closed-form, the outer two
    dimensions use Gauss-Legendre on (-1, 1)^2."""
    sig = math.sqrt(sigma2)
    x, w = roots_legendre(n_nodes)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w).ravel()
    X, Y = X.ravel(), Y.ravel()
    spread = np.sqrt((1.0 - X**2) * (1.0 - Y**2))
    c_lo, c_hi = X * Y - spread, X * Y + spread
    out = np.empty(np.asarray(mu_grid).size)
    for i, mu in enumerate(mu_grid):
        pdf_xy = (np.exp(-0.5 * ((X - mu) ** 2 + (Y - mu) ** 2) / sigma2)
                  / (2.0 * math.pi * sigma2))
        inner = ndtr((c_hi - mu) / sig) - ndtr((c_lo - mu) / sig)
        out[i] = float(np.sum(W * pdf_xy * inner))
    return out


def test_criterion_7_mu_chain_matches_numerically_integrated_conditional():
    """p=3, R and sigma2 held fixed: the stationary law of the gated
    flipped-factory mu update is g(mu) / L(mu, sigma2) up to a constant,
    with L computed by quadrature.  KS test at level 0.001 on 2900
    thinned draws."""
    sigma2, tau2 = 0.09, 1.0
    r_off = R_FIXED3[np.triu_indices(3, 1)]

    grid = np.linspace(-0.8, 1.2, 601)
    mass = pd_box_mass_by_quadrature(grid, sigma2)
    log_g = (-0.5 * ((r_off[None, :] - grid[:, None]) ** 2).sum(axis=1) / sigma2
             - 0.5 * grid**2 / tau2)
    pdf = np.exp(log_g - log_g.max()) / mass
    cdf = np.concatenate(
        [[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(grid))])
    cdf /= cdf[-1]

    model = CorrelationModel(np.empty((0, 3)), initial_R=R_FIXED3,
                             initial_mu=0.2, initial_sigma2=sigma2,
                             beta_mu=0.9, beta_sigma2=0.9)
    rng = np.random.default_rng(KS_CHAIN_SEED)
    n_updates, thin, burn = 150_000, 50, 5_000
    draws = []
    for t in range(n_updates):
        mu_update(model, rng)
        if t >= burn and (t - burn) % thin == thin - 1:
            draws.append(model.state.mu)
    draws = np.array(draws)

    res = kstest(draws, lambda q: np.interp(q, grid, cdf))
    assert res.pvalue >= 0.001, (
        f"KS statistic {res.statistic:.4f}, p = {res.pvalue:.5f} < 0.001 "
        f"on {draws.size} thinned draws")
    print(f"\ncriterion 7: KS statistic {res.statistic:.4f}, "
          f"p = {res.pvalue:.3f}, {draws.size} draws")


def test_criterion_8_beta_one_reduces_to_the_ungated_factories():
    """With beta=1 the gate draw is skipped, so gated and ungated kernels
    consume identical random streams: traces over 10^3 steps must be
    bit-identical on both experiment models."""
    wseed, dseed, cseed = REDUCTION_SEEDS
    model = WeibullMixtureTarget()
    plain = run_chain(model, "two_coin", 1.0, 1000, seed=wseed)
    gated = run_chain(model, "portkey", 1.0, 1000, seed=wseed)
    assert np.array_equal(plain.states, gated.states)
    assert np.array_equal(plain.accepted, gated.accepted)
    assert np.array_equal(plain.loops, gated.loops)

    data = synth_data(50, 3, R_FIXED3, np.random.default_rng(dseed))
    plain = run_gibbs_chain(CorrelationModel(data, kernel="flipped_two_coin"),
                            1000, seed=cseed)
    gated = run_gibbs_chain(CorrelationModel(data, kernel="flipped_portkey"),
                            1000, seed=cseed)
    assert np.array_equal(plain.r, gated.r)
    assert np.array_equal(plain.mu, gated.mu)
    assert np.array_equal(plain.sigma2, gated.sigma2)
    assert np.array_equal(plain.mu_loops, gated.mu_loops)
    assert np.array_equal(plain.sigma2_loops, gated.sigma2_loops)
