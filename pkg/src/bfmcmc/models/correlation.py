"""Bayesian correlation matrix model with an intractable prior constant.

Rows of the data are iid N(0, R).  Each free correlation r_ij carries a
N(mu, sigma2) prior truncated to the positive-definite region, which makes
the joint prior's normalising constant an integral over that region; the
constant cancels in the r_ij full conditionals (plain MH there) but not in
the mu and sigma2 conditionals, which is where the flipped factory earns
its keep: 1/(conditional density) factors into a computable bound times a
coin that flips "is a random truncated-normal matrix positive definite".

Conventions: free correlations are indexed in row-major upper-triangle
order; positive definiteness everywhere means all pivots of the LDL^T
factorization exceed 1e-12.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from ..coins import PCoin, WeightedCoin
from ..factories import (
    MAX_LOOPS_DEFAULT,
    PortkeyBeta,
    flipped_portkey_two_coin,
    flipped_two_coin,
)
from ..kernels import TargetModel

__all__ = [
    "NumericalDegeneracy",
    "PIVOT_TOL",
    "pd_pivots",
    "is_pd",
    "RBounds",
    "r_bounds",
    "PDCoin",
    "pd_coin",
    "mu_tilde_bound",
    "sigma2_tilde_bound",
    "CorrelationState",
    "CorrelationModel",
    "r_update",
    "mu_update",
    "sigma2_update",
    "SweepStats",
    "gibbs_sweep",
    "GibbsTrace",
    "run_gibbs_chain",
    "synth_data",
]

PIVOT_TOL = 1e-12


class NumericalDegeneracy(RuntimeError):
    """The matrix is too close to singular for the requested operation."""


# ----------------------------------------------------------------------
# positive definiteness
# ----------------------------------------------------------------------

def pd_pivots(mats) -> np.ndarray:
    """LDL^T pivots (ratios of leading principal minors) of stacked matrices.

    Vectorized over any leading shape; a nonpositive upstream minor marks
    all following pivots as -inf.
    """
    m = np.asarray(mats, dtype=float)
    p = m.shape[-1]
    if m.shape[-2] != p:
        raise ValueError(f"expected square matrices, got shape {m.shape}")
    dets = np.stack([np.linalg.det(m[..., :k, :k]) for k in range(1, p + 1)],
                    axis=-1)
    prev = np.concatenate(
        [np.ones(m.shape[:-2] + (1,)), dets[..., :-1]], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(prev > 0.0, dets / prev, -np.inf)


def is_pd(mats, tol: float = PIVOT_TOL):
    """True where all pivots exceed tol; scalar for a single matrix."""
    ok = np.all(pd_pivots(mats) > tol, axis=-1)
    return bool(ok) if ok.ndim == 0 else ok


# ----------------------------------------------------------------------
# deterministic bounds for one correlation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RBounds:
    lower: float
    upper: float

    def __post_init__(self):
        if not (-1.0 <= self.lower < self.upper <= 1.0):
            raise ValueError(f"invalid bounds ({self.lower}, {self.upper})")

    def contains(self, r: float) -> bool:
        return self.lower < r < self.upper


def r_bounds(R, i: int, j: int) -> RBounds:
    """Interval of r_ij values keeping R positive definite, rest held fixed.

    det(R) is an exact quadratic in r_ij with negative leading coefficient,
    so it is fitted from determinants at r in {-1, 0, 1} and its roots are
    intersected with [-1, 1].
    """
    R = np.asarray(R, dtype=float)
    p = R.shape[0]
    if R.shape != (p, p) or not 0 <= i < p or not 0 <= j < p or i == j:
        raise ValueError(f"bad index pair ({i}, {j}) for shape {R.shape}")

    def det_at(r: float) -> float:
        M = R.copy()
        M[i, j] = M[j, i] = r
        return float(np.linalg.det(M))

    f_pos, f_zero, f_neg = det_at(1.0), det_at(0.0), det_at(-1.0)
    lead = 0.5 * (f_pos + f_neg) - f_zero
    lin = 0.5 * (f_pos - f_neg)
    const = f_zero
    if lead >= -1e-12:
        raise NumericalDegeneracy(
            f"leading coefficient {lead:.3e} >= -1e-12: R near singular in ({i},{j})")
    disc = lin * lin - 4.0 * lead * const
    if disc <= 0.0:
        raise NumericalDegeneracy(
            "det(R) is nowhere positive as a function of this entry")
    sq = math.sqrt(disc)
    # numerically stable quadratic roots
    qq = -0.5 * (lin + math.copysign(sq, lin if lin != 0.0 else 1.0))
    roots = sorted((qq / lead, const / qq))
    lo, hi = max(roots[0], -1.0), min(roots[1], 1.0)
    if not lo < hi:
        raise NumericalDegeneracy("positive-definite interval collapsed")
    return RBounds(lo, hi)


# ----------------------------------------------------------------------
# the flipped-factory coin and bounds for mu and sigma2
# ----------------------------------------------------------------------

def _log_norm_interval(lo: float, hi: float) -> float:
    """log P(lo < Z < hi), Z standard normal, stable in the far tails."""
    if not lo < hi:
        raise ValueError(f"empty interval ({lo}, {hi})")
    if lo > 0.0:  # reflect into the left tail
        lo, hi = -hi, -lo
    if hi <= 0.0:
        la, lb = log_ndtr(hi), log_ndtr(lo)
        return float(la + math.log1p(-math.exp(min(lb - la, -1e-17))))
    return math.log(float(ndtr(hi) - ndtr(lo)))


class PDCoin(PCoin):
    """Heads iff a symmetric unit-diagonal matrix with TN(-1,1,mu,sigma2)
    off-diagonals is positive definite.

    Sampling is inverse-CDF on the truncated interval; the uniform is
    clipped away from {0, 1} so the quantile stays finite.  Success
    probability is the conditional positive-definiteness probability
    p~(mu, sigma2) -- exactly the factor the tilde bounds cannot compute.
    """

    __slots__ = ("mu", "sigma2", "p", "_sig", "_u_lo", "_u_span", "_iu")

    def __init__(self, mu: float, sigma2: float, p: int):
        if sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be positive, got {sigma2!r}")
        if p < 2:
            raise ValueError(f"need p >= 2, got {p}")
        self.mu = float(mu)
        self.sigma2 = float(sigma2)
        self.p = int(p)
        self._sig = math.sqrt(self.sigma2)
        u_lo = float(ndtr((-1.0 - self.mu) / self._sig))
        u_hi = float(ndtr((1.0 - self.mu) / self._sig))
        self._u_lo = u_lo
        self._u_span = u_hi - u_lo
        self._iu = np.triu_indices(self.p, 1)

    def sample_batch(self, rng, n):
        l = self.p * (self.p - 1) // 2
        if self._u_span <= 0.0:
            # the truncation box carries no numerical mass; nothing sampled
            # there could be positive definite to double precision
            rng.random((n, l))
            return np.zeros(n, dtype=bool)
        u = self._u_lo + self._u_span * rng.random((n, l))
        z = self.mu + self._sig * ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))
        mats = np.broadcast_to(np.eye(self.p), (n, self.p, self.p)).copy()
        mats[:, self._iu[0], self._iu[1]] = z
        mats[:, self._iu[1], self._iu[0]] = z
        return is_pd(mats)


def pd_coin(mu: float, sigma2: float, p: int, rng) -> bool:
    """One flip of the positive-definiteness coin."""
    return PDCoin(mu, sigma2, p).sample(rng)


def _log_g_mu(mu: float, r_off: np.ndarray, sigma2: float, tau2: float) -> float:
    """Tractable part of the mu conditional: Gaussian factors times prior."""
    return (-0.5 * float(np.sum((r_off - mu) ** 2)) / sigma2
            - 0.5 * mu * mu / tau2)


def _log_g_sigma2(sigma2: float, r_off: np.ndarray, mu: float,
                  a0: float, b0: float, l: int) -> float:
    """Tractable part of the sigma2 conditional: Gaussian kernels folded
    with the inverse-gamma prior (exponent a0 + l/2 + 1)."""
    return (-0.5 * float(np.sum((r_off - mu) ** 2)) / sigma2
            - (a0 + 0.5 * l + 1.0) * math.log(sigma2)
            - b0 / sigma2)


def _log_phi_box(mu: float, sigma2: float, l: int) -> float:
    sig = math.sqrt(sigma2)
    return l * _log_norm_interval((-1.0 - mu) / sig, (1.0 - mu) / sig)


def mu_tilde_bound(mu: float, sigma2: float, R, l: int, tau2: float = 1.0) -> float:
    """Upper bound on 1/f(mu | R, sigma2): g^{-1} times the l-th power of
    the truncation-interval probability.

    Computed in log scale internally (the factory consumes the log value);
    the returned float may overflow to inf for extreme inputs.
    """
    r_off = _offdiag(np.asarray(R, dtype=float), l)
    log_c = -_log_g_mu(mu, r_off, sigma2, tau2) + _log_phi_box(mu, sigma2, l)
    try:
        return math.exp(log_c)
    except OverflowError:
        return math.inf


def sigma2_tilde_bound(mu: float, sigma2: float, R, l: int,
                       a0: float = 3.0, b0: float = 0.5) -> float:
    """Mirror of mu_tilde_bound for the sigma2 conditional."""
    if sigma2 <= 0.0:
        raise ValueError(f"sigma2 must be positive, got {sigma2!r}")
    r_off = _offdiag(np.asarray(R, dtype=float), l)
    log_c = (-_log_g_sigma2(sigma2, r_off, mu, a0, b0, l)
             + _log_phi_box(mu, sigma2, l))
    try:
        return math.exp(log_c)
    except OverflowError:
        return math.inf


def _offdiag(R: np.ndarray, l: int) -> np.ndarray:
    p = R.shape[0]
    if l != p * (p - 1) // 2:
        raise ValueError(f"l={l} inconsistent with p={p}")
    iu = np.triu_indices(p, 1)
    return R[iu]


# ----------------------------------------------------------------------
# the model
# ----------------------------------------------------------------------

@dataclass
class CorrelationState:
    R: np.ndarray
    mu: float
    sigma2: float

    def copy(self) -> "CorrelationState":
        return CorrelationState(self.R.copy(), self.mu, self.sigma2)


class CorrelationModel:
    """Owns the data sufficient statistics, priors, and the chain state.

    kernel selects the factory entry point for the mu/sigma2 updates:
    "flipped_portkey" (gated by beta_mu/beta_sigma2) or "flipped_two_coin"
    (ungated; requires both betas equal to 1).  The r_ij updates are plain
    MH on their tractable full conditionals.
    """

    KERNELS = ("flipped_portkey", "flipped_two_coin")

    def __init__(self, data, *, tau2: float = 1.0, a0: float = 3.0,
                 b0: float = 0.5, proposal_sd_r: float = 0.02,
                 proposal_sd_mu: float = 0.25, proposal_sd_sigma2: float = 0.04,
                 beta_mu=1.0, beta_sigma2=1.0, kernel: str = "flipped_portkey",
                 max_loops: int = MAX_LOOPS_DEFAULT, initial_R=None,
                 initial_mu: float = 0.0, initial_sigma2: float = 0.1):
        Y = np.asarray(data, dtype=float)
        if Y.ndim != 2 or Y.shape[1] < 2:
            raise ValueError(f"data must be n x p with p >= 2, got {Y.shape}")
        if min(tau2, a0, b0, proposal_sd_r, proposal_sd_mu,
               proposal_sd_sigma2, initial_sigma2) <= 0.0:
            raise ValueError("scale and prior parameters must be positive")
        if kernel not in self.KERNELS:
            raise ValueError(f"kernel must be one of {self.KERNELS}, got {kernel!r}")
        self.n_obs, self.p = Y.shape
        self.l = self.p * (self.p - 1) // 2
        self.S = Y.T @ Y
        self.tau2 = float(tau2)
        self.a0 = float(a0)
        self.b0 = float(b0)
        self.proposal_sd_r = float(proposal_sd_r)
        self.proposal_sd_mu = float(proposal_sd_mu)
        self.proposal_sd_sigma2 = float(proposal_sd_sigma2)
        self.beta_mu = float(PortkeyBeta(beta_mu))
        self.beta_sigma2 = float(PortkeyBeta(beta_sigma2))
        if kernel == "flipped_two_coin" and (self.beta_mu < 1.0 or self.beta_sigma2 < 1.0):
            raise ValueError("flipped_two_coin kernel has no gate; betas must be 1")
        self.kernel = kernel
        self.max_loops = int(max_loops)
        self.pairs = list(zip(*np.triu_indices(self.p, 1)))
        self._iu = np.triu_indices(self.p, 1)

        R0 = np.eye(self.p) if initial_R is None else np.asarray(initial_R, dtype=float)
        if R0.shape != (self.p, self.p):
            raise ValueError(f"initial_R shape {R0.shape} != ({self.p}, {self.p})")
        if not is_pd(R0):
            raise ValueError("initial_R must be positive definite")
        self.state = CorrelationState(R0.copy(), float(initial_mu),
                                      float(initial_sigma2))

    # -- coin builders ---------------------------------------------------

    def r_offdiag(self) -> np.ndarray:
        return self.state.R[self._iu]

    def mu_coin(self, mu: float) -> WeightedCoin:
        st = self.state
        log_c = (-_log_g_mu(mu, self.r_offdiag(), st.sigma2, self.tau2)
                 + _log_phi_box(mu, st.sigma2, self.l))
        return WeightedCoin(log_c=log_c, coin=PDCoin(mu, st.sigma2, self.p))

    def sigma2_coin(self, sigma2: float) -> WeightedCoin:
        st = self.state
        log_c = (-_log_g_sigma2(sigma2, self.r_offdiag(), st.mu,
                                self.a0, self.b0, self.l)
                 + _log_phi_box(st.mu, sigma2, self.l))
        return WeightedCoin(log_c=log_c, coin=PDCoin(st.mu, sigma2, self.p))

    # -- conditional targets (TargetModel contract) -----------------------

    def mu_conditional(self) -> "TargetModel":
        return _MuConditional(self)

    def sigma2_conditional(self) -> "TargetModel":
        return _Sigma2Conditional(self)

    # -- tractable r part --------------------------------------------------

    def _r_log_conditional(self, i: int, j: int, r: float) -> float:
        st = self.state
        M = st.R.copy()
        M[i, j] = M[j, i] = r
        sign, logdet = np.linalg.slogdet(M)
        if sign <= 0.0:
            raise np.linalg.LinAlgError(
                f"R not positive definite at r_[{i},{j}] = {r!r}")
        out = -0.5 * self.n_obs * logdet
        if self.n_obs > 0:
            out -= 0.5 * float(np.trace(np.linalg.solve(M, self.S)))
        out -= 0.5 * (r - st.mu) ** 2 / st.sigma2
        return out

    def clone(self) -> "CorrelationModel":
        """Independent chain over the same data and settings."""
        twin = CorrelationModel.__new__(CorrelationModel)
        twin.__dict__.update(self.__dict__)
        twin.S = self.S.copy()
        twin.state = self.state.copy()
        return twin


class _MuConditional(TargetModel):
    """mu given (R, sigma2), as a flipped-factory target."""

    flipped = True

    def __init__(self, model: CorrelationModel):
        self.model = model

    def initial_state(self):
        return self.model.state.mu

    def propose(self, state, rng):
        return float(state + rng.normal(0.0, self.model.proposal_sd_mu))

    def weighted_coin_at(self, state_from, state_to) -> WeightedCoin:
        return self.model.mu_coin(state_from)


class _Sigma2Conditional(TargetModel):
    """sigma2 given (R, mu), as a flipped-factory target on (0, inf)."""

    flipped = True

    def __init__(self, model: CorrelationModel):
        self.model = model

    def initial_state(self):
        return self.model.state.sigma2

    def propose(self, state, rng):
        return float(state + rng.normal(0.0, self.model.proposal_sd_sigma2))

    def in_support(self, state) -> bool:
        return state > 0.0

    def weighted_coin_at(self, state_from, state_to) -> WeightedCoin:
        return self.model.sigma2_coin(state_from)


# ----------------------------------------------------------------------
# component updates
# ----------------------------------------------------------------------

def r_update(model: CorrelationModel, i: int, j: int, rng):
    """One MH step on r_ij; proposals outside the PD interval short-circuit.

    Returns (state, accepted).
    """
    st = model.state
    window = r_bounds(st.R, i, j)
    current = float(st.R[i, j])
    prop = current + rng.normal(0.0, model.proposal_sd_r)
    if not window.contains(prop):
        return st, False
    log_ratio = (model._r_log_conditional(i, j, prop)
                 - model._r_log_conditional(i, j, current))
    u = rng.random()
    accepted = log_ratio >= 0.0 or u <= 0.0 or math.log(u) < log_ratio
    if accepted:
        st.R[i, j] = st.R[j, i] = prop
    return st, bool(accepted)


def _flipped_factory_step(model: CorrelationModel, current: float,
                          proposal_sd: float, make_coin, beta: float, rng,
                          support=None):
    prop = float(current + rng.normal(0.0, proposal_sd))
    if support is not None and not support(prop):
        return current, None
    c_current = make_coin(current)
    c_prop = make_coin(prop)
    if model.kernel == "flipped_two_coin":
        out = flipped_two_coin(c_current, c_prop, rng, model.max_loops)
    else:
        out = flipped_portkey_two_coin(c_current, c_prop, beta, rng,
                                       model.max_loops)
    return (prop if out.accepted else current), out


def mu_update(model: CorrelationModel, rng):
    """One flipped-factory step on mu.  Returns (state, outcome)."""
    new, out = _flipped_factory_step(
        model, model.state.mu, model.proposal_sd_mu, model.mu_coin,
        model.beta_mu, rng)
    model.state.mu = new
    return model.state, out


def sigma2_update(model: CorrelationModel, rng):
    """One flipped-factory step on sigma2; proposals <= 0 short-circuit.

    Returns (state, outcome); outcome is None when no factory ran.
    """
    new, out = _flipped_factory_step(
        model, model.state.sigma2, model.proposal_sd_sigma2,
        model.sigma2_coin, model.beta_sigma2, rng,
        support=lambda s2: s2 > 0.0)
    model.state.sigma2 = new
    return model.state, out


@dataclass(frozen=True)
class SweepStats:
    r_accepted: int
    r_proposals: int
    mu_accepted: bool
    mu_loops: int  # 0 if no factory ran
    sigma2_accepted: bool
    sigma2_loops: int


def gibbs_sweep(model: CorrelationModel, rng):
    """All r_ij in upper-triangle order, then mu, then sigma2.

    Returns (state, SweepStats).
    """
    n_acc = 0
    for i, j in model.pairs:
        _, acc = r_update(model, i, j, rng)
        n_acc += acc
    _, mu_out = mu_update(model, rng)
    _, s2_out = sigma2_update(model, rng)
    stats = SweepStats(
        r_accepted=n_acc,
        r_proposals=len(model.pairs),
        mu_accepted=bool(mu_out.accepted) if mu_out is not None else False,
        mu_loops=mu_out.loops if mu_out is not None else 0,
        sigma2_accepted=bool(s2_out.accepted) if s2_out is not None else False,
        sigma2_loops=s2_out.loops if s2_out is not None else 0,
    )
    return model.state, stats


@dataclass
class GibbsTrace:
    r: np.ndarray        # (n_sweeps, l), upper-triangle order
    mu: np.ndarray
    sigma2: np.ndarray
    r_accepted: np.ndarray
    mu_accepted: np.ndarray
    mu_loops: np.ndarray
    sigma2_accepted: np.ndarray
    sigma2_loops: np.ndarray
    pairs: list
    seed: object
    beta_mu: float
    beta_sigma2: float

    def __len__(self):
        return len(self.mu)


def run_gibbs_chain(model: CorrelationModel, n_sweeps: int, seed) -> GibbsTrace:
    """Iterate gibbs_sweep n_sweeps times; deterministic given seed.

    Component errors propagate with exc.step_index set to the sweep index.
    """
    if n_sweeps < 1:
        raise ValueError(f"n_sweeps must be >= 1, got {n_sweeps}")
    rng = np.random.default_rng(seed)
    l = model.l
    r = np.empty((n_sweeps, l))
    mu = np.empty(n_sweeps)
    sigma2 = np.empty(n_sweeps)
    r_acc = np.zeros(n_sweeps, dtype=np.int64)
    mu_acc = np.zeros(n_sweeps, dtype=bool)
    mu_loops = np.zeros(n_sweeps, dtype=np.int64)
    s2_acc = np.zeros(n_sweeps, dtype=bool)
    s2_loops = np.zeros(n_sweeps, dtype=np.int64)
    for t in range(n_sweeps):
        try:
            state, stats = gibbs_sweep(model, rng)
        except Exception as exc:
            exc.step_index = t
            raise
        r[t] = model.r_offdiag()
        mu[t] = state.mu
        sigma2[t] = state.sigma2
        r_acc[t] = stats.r_accepted
        mu_acc[t] = stats.mu_accepted
        mu_loops[t] = stats.mu_loops
        s2_acc[t] = stats.sigma2_accepted
        s2_loops[t] = stats.sigma2_loops
    return GibbsTrace(r=r, mu=mu, sigma2=sigma2, r_accepted=r_acc,
                      mu_accepted=mu_acc, mu_loops=mu_loops,
                      sigma2_accepted=s2_acc, sigma2_loops=s2_loops,
                      pairs=list(model.pairs), seed=seed,
                      beta_mu=model.beta_mu, beta_sigma2=model.beta_sigma2)


def synth_data(n: int, p: int, true_R, rng) -> np.ndarray:
    """n iid N_p(0, true_R) rows via Cholesky."""
    if p < 2:
        raise ValueError(f"need p >= 2 for correlations to exist, got {p}")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    R = np.asarray(true_R, dtype=float)
    if R.shape != (p, p):
        raise ValueError(f"true_R shape {R.shape} != ({p}, {p})")
    try:
        L = np.linalg.cholesky(R)
    except np.linalg.LinAlgError as exc:
        raise ValueError("true_R must be positive definite") from exc
    return rng.standard_normal((n, p)) @ L.T
