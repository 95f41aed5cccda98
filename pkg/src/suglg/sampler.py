"""Data-augmentation MCMC for the skewed log-Gaussian-mixture spatial model.

The chain alternates through the full conditionals of the completed data:
censored observations, the positive latent field U, the log-Gaussian mixing
field lambda, and the parameters (beta, alpha, sigma2, omega2, nu, theta_w,
theta_lambda).  Conjugate blocks are drawn exactly; the rest use random-walk
Metropolis on log scale with optional Robbins-Monro scale adaptation during
burn-in.

One deliberate modelling note: the density of U is used without its
truncation normalizing constant (an n-dimensional Gaussian orthant
probability that depends on theta_w).  Every conditional here is coherent
with the joint law in which the theta_w prior is tilted by exactly that
orthant probability, so the sampler targets that joint; geweke_joint_test
draws theta_w from the tilted prior by rejection so the two simulation
paths agree.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.blas import daxpy, dger

from .distributions import GigParams, gig_logpdf, gig_sample, tn1_sample, trunc_norm_interval_sample
from .model import Hyperparams, ModelKind, ModelParams, SpatialDataset
from .spatial import (build_b_matrix, chol_inverse, distance_matrix, exp_correlation,
                      jittered_cholesky, median_distance)

DEFAULT_PROPOSAL_SCALES = {
    "sigma2": 0.5,
    "omega2": 0.5,
    "nu": 0.5,
    "lambda": 0.5,
    "theta_w": 0.5,
    "theta_lambda": 0.5,
}

MH_TARGET_RATE = 0.44


@dataclass
class McmcState:
    """Current completed-data state: y holds imputations in censored slots."""

    y: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    params: ModelParams

    def copy(self) -> "McmcState":
        return McmcState(self.y.copy(), self.u.copy(), self.lam.copy(), self.params)


@dataclass(frozen=True)
class ChainConfig:
    length: int
    burn_in: int
    thin: int
    seed: int
    kind: ModelKind
    hyper: Hyperparams = field(default_factory=Hyperparams)
    proposal_scales: dict | None = None
    adapt: bool = True
    sigma2_mode: str = "gibbs"
    omega2_mode: str = "mh"
    u_sweeps: int = 1

    def __post_init__(self):
        if self.length <= 0 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need length > 0, burn_in >= 0, thin >= 1")
        if self.burn_in >= self.length:
            raise ValueError("burn_in must be smaller than length")
        if self.sigma2_mode not in ("gibbs", "mh"):
            raise ValueError(f"unknown sigma2_mode {self.sigma2_mode!r}")
        if self.omega2_mode not in ("mh", "gig"):
            raise ValueError(f"unknown omega2_mode {self.omega2_mode!r}")
        if self.u_sweeps < 1:
            raise ValueError("u_sweeps must be >= 1")

    @property
    def retained(self) -> int:
        return (self.length - self.burn_in) // self.thin

    def scales(self) -> dict:
        out = dict(DEFAULT_PROPOSAL_SCALES)
        if self.proposal_scales:
            unknown = set(self.proposal_scales) - set(DEFAULT_PROPOSAL_SCALES)
            if unknown:
                raise ValueError(f"unknown proposal scale keys: {sorted(unknown)}")
            out.update(self.proposal_scales)
        for name, val in out.items():
            if not val > 0:
                raise ValueError(f"proposal scale {name} must be positive")
        return out


@dataclass
class ChainOutput:
    """Retained draws plus bookkeeping.

    params rows follow param_names ordering; lam/u draws are stored for all
    kinds (identically 1 / 0 where the block is inactive) so downstream
    prediction code has a uniform interface.
    """

    kind: ModelKind
    param_names: list
    params: np.ndarray
    lam_draws: np.ndarray
    u_draws: np.ndarray
    y_imputed: np.ndarray
    censored_idx: np.ndarray
    log_conditional: np.ndarray
    acceptance_rates: dict
    config: ChainConfig
    med_d: float

    @property
    def n_draws(self) -> int:
        return self.params.shape[0]

    def params_at(self, row: int, k: int) -> ModelParams:
        return row_to_params(self.params[row], self.kind, k)


def params_to_row(params: ModelParams, kind: ModelKind) -> np.ndarray:
    vals = list(params.beta)
    if kind.has_skew:
        vals.append(params.alpha)
    vals += [params.sigma2, params.omega2]
    if kind.has_mixture:
        vals.append(params.nu)
    vals.append(params.theta_w)
    if kind.has_mixture:
        vals.append(params.theta_lambda)
    return np.asarray(vals, dtype=float)


def row_to_params(row: np.ndarray, kind: ModelKind, k: int) -> ModelParams:
    row = np.asarray(row, dtype=float)
    pos = k
    beta = row[:k]
    alpha = 0.0
    if kind.has_skew:
        alpha = row[pos]
        pos += 1
    sigma2 = row[pos]
    omega2 = row[pos + 1]
    pos += 2
    nu = 1.0
    if kind.has_mixture:
        nu = row[pos]
        pos += 1
    theta_w = row[pos]
    pos += 1
    theta_lambda = 1.0
    if kind.has_mixture:
        theta_lambda = row[pos]
    return ModelParams(beta=beta, alpha=alpha, sigma2=sigma2, omega2=omega2,
                       nu=nu, theta_w=theta_w, theta_lambda=theta_lambda)


# ---------------------------------------------------------------------------
# shared linear-algebra helpers


def _pack_corr(dist: np.ndarray, theta: float):
    """Correlation matrix with cholesky, inverse and log determinant."""
    corr = exp_correlation(dist, theta)
    chol = jittered_cholesky(corr)
    prec = chol_inverse(chol)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return corr, chol, prec, logdet


def _pack_b(corr_w: np.ndarray, lam: np.ndarray, omega2: float):
    bmat = build_b_matrix(corr_w, lam, omega2)
    chol = jittered_cholesky(bmat)
    prec = chol_inverse(chol)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return chol, prec, logdet


def _quad_form(prec: np.ndarray, vec: np.ndarray) -> float:
    return float(vec @ (prec @ vec))


# ---------------------------------------------------------------------------
# block kernels: operate on explicit arrays, mutate in place where noted


def _impute_censored_inplace(rng, y, mean, b_prec, sigma2, cens_idx, intervals):
    # univariate conditionals of N(mean, sigma2 * B); sigma2 cancels in the mean
    r = y - mean
    for i, iv in zip(cens_idx, intervals):
        ti = float(b_prec[i] @ r)
        pii = float(b_prec[i, i])
        cond_mean = y[i] - ti / pii
        cond_var = sigma2 / pii
        new = trunc_norm_interval_sample(rng, iv.lo, iv.hi, cond_mean, cond_var)
        r[i] += new - y[i]
        y[i] = new


def _u_sweep_inplace(rng, u, h_mat, m_vec):
    # one componentwise Gibbs pass over TN_n(0; m, H^{-1}), warm start u;
    # t = H (u - m) is carried along by column updates as sites change
    n = u.size
    t_vec = h_mat @ (u - m_vec)
    for i in range(n):
        hii = float(h_mat[i, i])
        mi = float(m_vec[i])
        ui = float(u[i])
        cond_mean = mi - (float(t_vec[i]) - hii * (ui - mi)) / hii
        new = tn1_sample(rng, 0.0, cond_mean, 1.0 / hii)
        delta = new - ui
        if delta != 0.0:
            daxpy(h_mat[:, i], t_vec, a=delta)
            u[i] = new


def _draw_beta(rng, x_mat, b_prec, sigma2, target, c0):
    k = x_mat.shape[1]
    xp = x_mat.T @ b_prec
    h_mat = xp @ x_mat / sigma2 + np.eye(k) / c0
    rhs = xp @ target / sigma2
    chol = np.linalg.cholesky(h_mat)
    mean = cho_solve((chol, True), rhs, check_finite=False)
    z = rng.standard_normal(k)
    return mean + solve_triangular(chol.T, z, lower=False, check_finite=False)


def _draw_alpha(rng, b_prec, sigma2, d, u, z_vec, c1):
    w = d * u
    pw = b_prec @ w
    h = float(w @ pw) / sigma2 + 1.0 / c1
    mean = float(pw @ z_vec) / (sigma2 * h)
    return mean + rng.standard_normal() / math.sqrt(h)


def _sigma2_log_target(t, n, q, hyper):
    # t = ln sigma2; inverse-square-scale Gamma prior plus Gaussian likelihood
    return -(hyper.c2 + 0.5 * n) * t - (hyper.c3 + 0.5 * q) * math.exp(-t)


def _draw_sigma2_gibbs(rng, n, q, hyper):
    shape = hyper.c2 + 0.5 * n
    rate = hyper.c3 + 0.5 * q
    return 1.0 / rng.gamma(shape, 1.0 / rate)


def _omega2_log_target(omega2, logdet_b, q, sigma2, hyper):
    val = -0.5 * logdet_b - 0.5 * q / sigma2
    val += gig_logpdf(omega2, GigParams(0.0, hyper.c4, hyper.c5))
    return val + math.log(omega2)


def _nu_log_target(t, n, s0, s1, s2, hyper):
    # t = ln nu; quadratic pieces of a'Q a precomputed as s0 + nu*s1 + nu^2*s2/4
    nu = math.exp(t)
    quad = s0 + nu * s1 + 0.25 * nu * nu * s2
    return -0.5 * n * t - 0.5 * (hyper.c6 ** 2 / nu + hyper.c7 ** 2 * nu) - 0.5 * quad / nu


def _theta_w_log_target(theta, dist, lam, omega2, sigma2, resid, u, rate, include_u):
    corr = exp_correlation(dist, theta)
    chol_b = jittered_cholesky(build_b_matrix(corr, lam, omega2))
    half = solve_triangular(chol_b, resid, lower=True)
    val = -float(np.sum(np.log(np.diag(chol_b)))) - 0.5 * float(half @ half) / sigma2
    if include_u:
        chol_c = jittered_cholesky(corr)
        half_u = solve_triangular(chol_c, u, lower=True)
        val += -float(np.sum(np.log(np.diag(chol_c)))) - 0.5 * float(half_u @ half_u)
    return val - rate * theta + math.log(theta)


def _theta_lambda_log_target(theta, dist, psi, nu, rate):
    corr = exp_correlation(dist, theta)
    chol = jittered_cholesky(corr)
    a = psi + 0.5 * nu
    half = solve_triangular(chol, a, lower=True)
    val = -float(np.sum(np.log(np.diag(chol)))) - 0.5 * float(half @ half) / nu
    return val - rate * theta + math.log(theta)


class _BState:
    """B^{-1} and ln|B| maintained across the lambda sweep by rank updates."""

    __slots__ = ("prec", "logdet")

    def __init__(self, prec, logdet):
        self.prec = prec
        self.logdet = logdet


def _lambda_sweep_inplace(rng, bstate, corr_w, q_lam, y, xb, u, alpha,
                          lam, d, psi, nu, sigma2, omega2, scales):
    """Componentwise MH over psi = ln lambda against the exact conditionals.

    Each site costs O(n^2) through partitioned-inverse identities; accepted
    moves update B^{-1} by two symmetric rank-one corrections plus a column
    rewrite instead of a refactorization.
    """
    n = y.size
    # fortran order so the rank-one corrections run in place through BLAS
    p = np.asfortranarray(bstate.prec)
    bstate.prec = p
    mu = xb + alpha * d * u
    r = y - mu
    v = p @ r
    qa = q_lam @ (psi + 0.5 * nu)
    accept = np.zeros(n, dtype=bool)
    for i in range(n):
        g = corr_w[:, i] * d
        g[i] = 0.0
        t1 = p @ g
        pii = float(p[i, i])
        g_mg = float(g @ t1) - t1[i] ** 2 / pii
        vi_hat = v[i] - pii * r[i]
        g_mr = float(g @ v) - t1[i] * r[i] - t1[i] * vi_hat / pii
        one_less = 1.0 - g_mg

        qii = float(q_lam[i, i])
        a_i = psi[i] + 0.5 * nu
        prior_mean = -0.5 * nu - (qa[i] - qii * a_i) / qii
        prior_prec = qii / nu

        psi_new = psi[i] + scales[i] * rng.standard_normal()
        d_new = math.exp(-0.5 * psi_new)
        s_cur = d[i] ** 2 * one_less + omega2
        s_new = d_new ** 2 * one_less + omega2
        if s_new <= 0.0 or s_cur <= 0.0:
            continue
        mean_cur = xb[i] + d[i] * (alpha * u[i] + g_mr)
        mean_new = xb[i] + d_new * (alpha * u[i] + g_mr)
        log_cur = -0.5 * math.log(sigma2 * s_cur) - (y[i] - mean_cur) ** 2 / (2.0 * sigma2 * s_cur)
        log_new = -0.5 * math.log(sigma2 * s_new) - (y[i] - mean_new) ** 2 / (2.0 * sigma2 * s_new)
        log_cur += -0.5 * prior_prec * (psi[i] - prior_mean) ** 2
        log_new += -0.5 * prior_prec * (psi_new - prior_mean) ** 2
        if math.log(rng.random()) >= log_new - log_cur:
            continue

        hcol = p[:, i].copy()
        mg = t1 - hcol * (t1[i] / pii)
        mg[i] = 0.0
        dger(-1.0 / pii, hcol, hcol, a=p, overwrite_a=1)
        dger(d_new ** 2 / s_new, mg, mg, a=p, overwrite_a=1)
        col = -(d_new / s_new) * mg
        p[:, i] = col
        p[i, :] = col
        p[i, i] = 1.0 / s_new
        bstate.logdet += math.log(s_new) - math.log(s_cur)

        qa += q_lam[:, i] * (psi_new - psi[i])
        psi[i] = psi_new
        lam[i] = math.exp(psi_new)
        d[i] = d_new
        r[i] = y[i] - (xb[i] + alpha * d_new * u[i])
        v = p @ r
        accept[i] = True
    return accept


# ---------------------------------------------------------------------------
# public step functions: self-contained, used directly by tests and by the
# joint-distribution check; run_chain uses the same kernels with caching


def _bump(stats, name, accepted, total=1):
    if stats is None:
        return
    stats[name + "_accept"] = stats.get(name + "_accept", 0) + accepted
    stats[name + "_total"] = stats.get(name + "_total", 0) + total


def step_censored(rng, state: McmcState, ds: SpatialDataset, corr_w: np.ndarray) -> McmcState:
    cens_idx = ds.censored_idx
    if cens_idx.size == 0:
        return state
    p = state.params
    d = 1.0 / np.sqrt(state.lam)
    _, b_prec, _ = _pack_b(corr_w, state.lam, p.omega2)
    mean = ds.design @ p.beta + p.alpha * d * state.u
    intervals = [ds.censored[int(i)] for i in cens_idx]
    _impute_censored_inplace(rng, state.y, mean, b_prec, p.sigma2, cens_idx, intervals)
    return state


def step_u(rng, state: McmcState, ds: SpatialDataset, corr_w: np.ndarray, sweeps: int = 1) -> McmcState:
    p = state.params
    d = 1.0 / np.sqrt(state.lam)
    chol_c = jittered_cholesky(corr_w)
    prec_c = chol_inverse(chol_c)
    _, b_prec, _ = _pack_b(corr_w, state.lam, p.omega2)
    z_vec = state.y - ds.design @ p.beta
    h_mat = prec_c + (p.alpha ** 2 / p.sigma2) * (b_prec * np.outer(d, d))
    c_vec = (p.alpha / p.sigma2) * d * (b_prec @ z_vec)
    chol_h = jittered_cholesky(h_mat)
    m_vec = cho_solve((chol_h, True), c_vec)
    h_mat = np.asfortranarray(h_mat)
    for _ in range(sweeps):
        _u_sweep_inplace(rng, state.u, h_mat, m_vec)
    return state


def step_beta(rng, state: McmcState, ds: SpatialDataset, corr_w: np.ndarray,
              hyper: Hyperparams) -> McmcState:
    p = state.params
    d = 1.0 / np.sqrt(state.lam)
    _, b_prec, _ = _pack_b(corr_w, state.lam, p.omega2)
    target = state.y - p.alpha * d * state.u
    beta = _draw_beta(rng, ds.design, b_prec, p.sigma2, target, hyper.c0)
    state.params = dataclasses.replace(p, beta=beta)
    return state


def step_alpha(rng, state: McmcState, ds: SpatialDataset, corr_w: np.ndarray,
               hyper: Hyperparams) -> McmcState:
    p = state.params
    d = 1.0 / np.sqrt(state.lam)
    _, b_prec, _ = _pack_b(corr_w, state.lam, p.omega2)
    z_vec = state.y - ds.design @ p.beta
    alpha = _draw_alpha(rng, b_prec, p.sigma2, d, state.u, z_vec, hyper.c1)
    state.params = dataclasses.replace(p, alpha=alpha)
    return state


def step_sigma2(rng, state: McmcState, ds: SpatialDataset, corr_w: np.ndarray,
                hyper: Hyperparams, mode: str = "gibbs", scale: float = 0.5,
                stats=None) -> McmcState:
    p = state.params
    d = 1.0 / np.sqrt(state.lam)
    _, b_prec, _ = _pack_b(corr_w, state.lam, p.omega2)
    resid = state.y - ds.design @ p.beta - p.alpha * d * state.u
    q = _quad_form(b_prec, resid)
    n = state.y.size
    if mode == "gibbs":
        new = _draw_sigma2_gibbs(rng, n, q, hyper)
        _bump(stats, "sigma2", 1)
    elif mode == "mh":
        t_cur = math.log(p.sigma2)
        t_new = t_cur + scale * rng.standard_normal()
        logr = _sigma2_log_target(t_new, n, q, hyper) - _sigma2_log_target(t_cur, n, q, hyper)
        if math.log(rng.random()) < logr:
            new = math.exp(t_new)
            _bump(stats, "sigma2", 1)
        else:
            new = p.sigma2
            _bump(stats, "sigma2", 0)
    else:
        raise ValueError(f"unknown sigma2 mode {mode!r}")
    state.params = dataclasses.replace(p, sigma2=new)
    return state


def step_omega2(rng, state: McmcState, ds: SpatialDataset, corr_w: np.ndarray,
                hyper: Hyperparams, mode: str = "mh", scale: float = 0.5,
                stats=None) -> McmcState:
    p = state.params
    d = 1.0 / np.sqrt(state.lam)
    resid = state.y - ds.design @ p.beta - p.alpha * d * state.u
    n = state.y.size
    if mode == "mh":
        _, b_prec, logdet_b = _pack_b(corr_w, state.lam, p.omega2)
        q = _quad_form(b_prec, resid)
        cur = _omega2_log_target(p.omega2, logdet_b, q, p.sigma2, hyper)
        t_new = math.log(p.omega2) + scale * rng.standard_normal()
        w_new = math.exp(t_new)
        chol_new = jittered_cholesky(build_b_matrix(corr_w, state.lam, w_new))
        half = solve_triangular(chol_new, resid, lower=True)
        logdet_new = 2.0 * float(np.sum(np.log(np.diag(chol_new))))
        prop = _omega2_log_target(w_new, logdet_new, float(half @ half), p.sigma2, hyper)
        if math.log(rng.random()) < prop - cur:
            state.params = dataclasses.replace(p, omega2=w_new)
            _bump(stats, "omega2", 1)
        else:
            _bump(stats, "omega2", 0)
    elif mode == "gig":
        # approximate conditional that ignores omega2 inside B's inverse
        _, b_prec, _ = _pack_b(corr_w, state.lam, p.omega2)
        q = _quad_form(b_prec, resid)
        a_new = math.sqrt(hyper.c4 ** 2 + q / p.sigma2)
        w_new = gig_sample(rng, GigParams(-0.5 * n, a_new, hyper.c5))
        state.params = dataclasses.replace(p, omega2=w_new)
        _bump(stats, "omega2", 1)
    else:
        raise ValueError(f"unknown omega2 mode {mode!r}")
    return state


def step_nu(rng, state: McmcState, corr_lambda: np.ndarray, hyper: Hyperparams,
            scale: float = 0.5, stats=None) -> McmcState:
    p = state.params
    psi = np.log(state.lam)
    chol = jittered_cholesky(corr_lambda)
    prec = cho_solve((chol, True), np.eye(corr_lambda.shape[0]))
    ones = np.ones(psi.size)
    s0 = float(psi @ (prec @ psi))
    s1 = float(ones @ (prec @ psi))
    s2 = float(ones @ (prec @ ones))
    n = psi.size
    t_cur = math.log(p.nu)
    t_new = t_cur + scale * rng.standard_normal()
    logr = _nu_log_target(t_new, n, s0, s1, s2, hyper) - _nu_log_target(t_cur, n, s0, s1, s2, hyper)
    if math.log(rng.random()) < logr:
        state.params = dataclasses.replace(p, nu=math.exp(t_new))
        _bump(stats, "nu", 1)
    else:
        _bump(stats, "nu", 0)
    return state


def step_lambda(rng, state: McmcState, ds: SpatialDataset, corr_w: np.ndarray,
                corr_lambda: np.ndarray, scales=None, stats=None) -> McmcState:
    p = state.params
    n = state.y.size
    if scales is None:
        scales = np.full(n, DEFAULT_PROPOSAL_SCALES["lambda"])
    d = 1.0 / np.sqrt(state.lam)
    psi = np.log(state.lam)
    _, b_prec, logdet_b = _pack_b(corr_w, state.lam, p.omega2)
    chol_l = jittered_cholesky(corr_lambda)
    q_lam = chol_inverse(chol_l)
    bstate = _BState(b_prec, logdet_b)
    xb = ds.design @ p.beta
    accept = _lambda_sweep_inplace(rng, bstate, corr_w, q_lam, state.y, xb,
                                   state.u, p.alpha, state.lam, d, psi,
                                   p.nu, p.sigma2, p.omega2, scales)
    _bump(stats, "lambda", int(accept.sum()), n)
    return state


def step_theta(rng, state: McmcState, ds: SpatialDataset, which: str,
               hyper: Hyperparams, med_d: float, kind: ModelKind,
               scale: float = 0.5, stats=None) -> McmcState:
    p = state.params
    dist = distance_matrix(ds.locations)
    if which == "w":
        rate = hyper.c8 / med_d
        resid = state.y - ds.design @ p.beta - p.alpha * (state.u / np.sqrt(state.lam))
        cur = _theta_w_log_target(p.theta_w, dist, state.lam, p.omega2, p.sigma2,
                                  resid, state.u, rate, kind.has_skew)
        t_new = math.log(p.theta_w) + scale * rng.standard_normal()
        theta_new = math.exp(t_new)
        prop = _theta_w_log_target(theta_new, dist, state.lam, p.omega2, p.sigma2,
                                   resid, state.u, rate, kind.has_skew)
        if math.log(rng.random()) < prop - cur:
            state.params = dataclasses.replace(p, theta_w=theta_new)
            _bump(stats, "theta_w", 1)
        else:
            _bump(stats, "theta_w", 0)
    elif which == "lambda":
        rate = hyper.c9 / med_d
        psi = np.log(state.lam)
        cur = _theta_lambda_log_target(p.theta_lambda, dist, psi, p.nu, rate)
        t_new = math.log(p.theta_lambda) + scale * rng.standard_normal()
        theta_new = math.exp(t_new)
        prop = _theta_lambda_log_target(theta_new, dist, psi, p.nu, rate)
        if math.log(rng.random()) < prop - cur:
            state.params = dataclasses.replace(p, theta_lambda=theta_new)
            _bump(stats, "theta_lambda", 1)
        else:
            _bump(stats, "theta_lambda", 0)
    else:
        raise ValueError(f"which must be 'w' or 'lambda', got {which!r}")
    return state


# ---------------------------------------------------------------------------
# chain driver


def initial_state(rng, ds: SpatialDataset, cfg: ChainConfig, med_d: float) -> McmcState:
    """Deterministic-ish starting point: OLS on the exact sites, latents at
    mild values, censored slots at interval midpoints or one SD inside the
    finite limit."""
    kind = cfg.kind
    n, k = ds.n, ds.k
    exact_idx = ds.exact_idx
    x_ex = ds.design[exact_idx]
    y_ex = ds.exact_values
    beta, *_ = np.linalg.lstsq(x_ex, y_ex, rcond=None)
    resid = y_ex - x_ex @ beta
    dof = max(exact_idx.size - k, 1)
    sigma2 = max(float(resid @ resid) / dof, 1e-8)
    sd = math.sqrt(sigma2)

    u = np.zeros(n)
    if kind.has_skew:
        u = np.abs(rng.standard_normal(n))
    lam = np.ones(n)

    y = np.empty(n)
    y[exact_idx] = y_ex
    xb = ds.design @ beta
    for i in ds.censored_idx:
        iv = ds.censored[int(i)]
        if iv.is_finite:
            y[i] = 0.5 * (iv.lo + iv.hi)
        elif math.isfinite(iv.hi):
            y[i] = iv.hi - sd
        elif math.isfinite(iv.lo):
            y[i] = iv.lo + sd
        else:
            y[i] = xb[i]

    params = ModelParams(
        beta=beta,
        alpha=0.1 if kind.has_skew else 0.0,
        sigma2=sigma2,
        omega2=0.5,
        nu=0.5 if kind.has_mixture else 1.0,
        theta_w=med_d,
        theta_lambda=med_d if kind.has_mixture else 1.0,
    )
    return McmcState(y=y, u=u, lam=lam, params=params)


def _exact_block_loglik(state: McmcState, ds: SpatialDataset, corr_w: np.ndarray) -> float:
    p = state.params
    idx = ds.exact_idx
    d = 1.0 / np.sqrt(state.lam)
    mean = ds.design @ p.beta + p.alpha * d * state.u
    sub = build_b_matrix(corr_w, state.lam, p.omega2)[np.ix_(idx, idx)]
    chol = jittered_cholesky(sub)
    dev = solve_triangular(chol, state.y[idx] - mean[idx], lower=True)
    m = idx.size
    return (-0.5 * m * (math.log(2.0 * math.pi) + math.log(p.sigma2))
            - float(np.sum(np.log(np.diag(chol))))
            - 0.5 * float(dev @ dev) / p.sigma2)


def run_chain(rng, ds: SpatialDataset, cfg: ChainConfig) -> ChainOutput:
    """Run the full data-augmentation chain.

    Sweep order: censored y, U, lambda, beta, alpha, sigma2, omega2, nu,
    theta_w, theta_lambda; blocks inactive under cfg.kind are skipped.
    Proposal scales adapt toward a 0.44 acceptance rate during burn-in and
    are frozen afterwards.  Factorization failures carry the sweep index.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    kind = cfg.kind
    hyper = cfg.hyper
    n, k = ds.n, ds.k
    x_mat = ds.design
    dist = distance_matrix(ds.locations)
    med_d = median_distance(ds.locations)
    cens_idx = ds.censored_idx
    intervals = [ds.censored[int(i)] for i in cens_idx]

    scales = cfg.scales()
    log_scales = {name: math.log(val) for name, val in scales.items() if name != "lambda"}
    lam_log_scales = np.full(n, math.log(scales["lambda"]))

    state = initial_state(rng, ds, cfg, med_d)
    names = kind.param_names(k)

    corr_w, chol_cw, prec_cw, _ = _pack_corr(dist, state.params.theta_w)
    if kind.has_mixture:
        corr_l, _, prec_cl, logdet_cl = _pack_corr(dist, state.params.theta_lambda)
    else:
        corr_l = prec_cl = None
        logdet_cl = 0.0

    n_keep = cfg.retained
    rows = np.empty((n_keep, len(names)))
    lam_rows = np.empty((n_keep, n))
    u_rows = np.empty((n_keep, n))
    yimp_rows = np.empty((n_keep, cens_idx.size))
    logcond = np.empty(n_keep)
    kept = 0

    post_stats: dict = {}
    ones = np.ones(n)
    mh_blocks = ["sigma2", "omega2", "nu", "theta_w", "theta_lambda"]

    for t in range(1, cfg.length + 1):
        try:
            p = state.params
            d = 1.0 / np.sqrt(state.lam)
            chol_b = jittered_cholesky(build_b_matrix(corr_w, state.lam, p.omega2))
            b_prec = chol_inverse(chol_b)
            logdet_b = 2.0 * float(np.sum(np.log(np.diag(chol_b))))
            in_tail = t > cfg.burn_in
            stats = post_stats if in_tail else {}
            accepted_now = {}

            if cens_idx.size:
                mean = x_mat @ p.beta + p.alpha * d * state.u
                _impute_censored_inplace(rng, state.y, mean, b_prec, p.sigma2,
                                         cens_idx, intervals)

            if kind.has_skew:
                z_vec = state.y - x_mat @ p.beta
                h_mat = prec_cw + (p.alpha ** 2 / p.sigma2) * (b_prec * np.outer(d, d))
                c_vec = (p.alpha / p.sigma2) * d * (b_prec @ z_vec)
                chol_h = jittered_cholesky(h_mat)
                m_vec = cho_solve((chol_h, True), c_vec, check_finite=False)
                h_mat = np.asfortranarray(h_mat)
                for _ in range(cfg.u_sweeps):
                    _u_sweep_inplace(rng, state.u, h_mat, m_vec)

            if kind.has_mixture:
                psi = np.log(state.lam)
                bstate = _BState(b_prec, logdet_b)
                xb = x_mat @ p.beta
                lam_accept = _lambda_sweep_inplace(
                    rng, bstate, corr_w, prec_cl, state.y, xb, state.u, p.alpha,
                    state.lam, d, psi, p.nu, p.sigma2, p.omega2,
                    np.exp(lam_log_scales))
                b_prec = bstate.prec
                logdet_b = bstate.logdet
                _bump(stats, "lambda", int(lam_accept.sum()), n)
            else:
                lam_accept = None

            target = state.y - p.alpha * d * state.u
            beta = _draw_beta(rng, x_mat, b_prec, p.sigma2, target, hyper.c0)
            state.params = p = dataclasses.replace(p, beta=beta)

            if kind.has_skew:
                z_vec = state.y - x_mat @ p.beta
                alpha = _draw_alpha(rng, b_prec, p.sigma2, d, state.u, z_vec, hyper.c1)
                state.params = p = dataclasses.replace(p, alpha=alpha)

            resid = state.y - x_mat @ p.beta - p.alpha * d * state.u
            q = _quad_form(b_prec, resid)

            if cfg.sigma2_mode == "gibbs":
                sigma2 = _draw_sigma2_gibbs(rng, n, q, hyper)
                state.params = p = dataclasses.replace(p, sigma2=sigma2)
                _bump(stats, "sigma2", 1)
            else:
                t_cur = math.log(p.sigma2)
                t_new = t_cur + math.exp(log_scales["sigma2"]) * rng.standard_normal()
                logr = (_sigma2_log_target(t_new, n, q, hyper)
                        - _sigma2_log_target(t_cur, n, q, hyper))
                acc = math.log(rng.random()) < logr
                if acc:
                    state.params = p = dataclasses.replace(p, sigma2=math.exp(t_new))
                accepted_now["sigma2"] = acc
                _bump(stats, "sigma2", int(acc))

            if cfg.omega2_mode == "mh":
                cur = _omega2_log_target(p.omega2, logdet_b, q, p.sigma2, hyper)
                t_new = math.log(p.omega2) + math.exp(log_scales["omega2"]) * rng.standard_normal()
                w_new = math.exp(t_new)
                chol_new = jittered_cholesky(build_b_matrix(corr_w, state.lam, w_new))
                half = solve_triangular(chol_new, resid, lower=True, check_finite=False)
                logdet_new = 2.0 * float(np.sum(np.log(np.diag(chol_new))))
                prop = _omega2_log_target(w_new, logdet_new, float(half @ half), p.sigma2, hyper)
                acc = math.log(rng.random()) < prop - cur
                if acc:
                    state.params = p = dataclasses.replace(p, omega2=w_new)
                    b_prec = chol_inverse(chol_new)
                    logdet_b = logdet_new
                    q = float(half @ half)
                accepted_now["omega2"] = acc
                _bump(stats, "omega2", int(acc))
            else:
                a_new = math.sqrt(hyper.c4 ** 2 + q / p.sigma2)
                w_new = gig_sample(rng, GigParams(-0.5 * n, a_new, hyper.c5))
                state.params = p = dataclasses.replace(p, omega2=w_new)
                chol_b = jittered_cholesky(build_b_matrix(corr_w, state.lam, w_new))
                b_prec = chol_inverse(chol_b)
                logdet_b = 2.0 * float(np.sum(np.log(np.diag(chol_b))))
                q = _quad_form(b_prec, resid)
                _bump(stats, "omega2", 1)

            if kind.has_mixture:
                psi = np.log(state.lam)
                s0 = float(psi @ (prec_cl @ psi))
                s1 = float(ones @ (prec_cl @ psi))
                s2 = float(ones @ (prec_cl @ ones))
                t_cur = math.log(p.nu)
                t_new = t_cur + math.exp(log_scales["nu"]) * rng.standard_normal()
                logr = (_nu_log_target(t_new, n, s0, s1, s2, hyper)
                        - _nu_log_target(t_cur, n, s0, s1, s2, hyper))
                acc = math.log(rng.random()) < logr
                if acc:
                    state.params = p = dataclasses.replace(p, nu=math.exp(t_new))
                accepted_now["nu"] = acc
                _bump(stats, "nu", int(acc))

            rate_w = hyper.c8 / med_d
            cur = (-0.5 * logdet_b - 0.5 * q / p.sigma2 - rate_w * p.theta_w
                   + math.log(p.theta_w))
            if kind.has_skew:
                half_u = solve_triangular(chol_cw, state.u, lower=True, check_finite=False)
                cur += (-float(np.sum(np.log(np.diag(chol_cw))))
                        - 0.5 * float(half_u @ half_u))
            t_new = math.log(p.theta_w) + math.exp(log_scales["theta_w"]) * rng.standard_normal()
            theta_new = math.exp(t_new)
            corr_new = exp_correlation(dist, theta_new)
            chol_bn = jittered_cholesky(build_b_matrix(corr_new, state.lam, p.omega2))
            half = solve_triangular(chol_bn, resid, lower=True, check_finite=False)
            prop = (-float(np.sum(np.log(np.diag(chol_bn)))) - 0.5 * float(half @ half) / p.sigma2
                    - rate_w * theta_new + t_new)
            if kind.has_skew:
                chol_cn = jittered_cholesky(corr_new)
                half_u = solve_triangular(chol_cn, state.u, lower=True, check_finite=False)
                prop += (-float(np.sum(np.log(np.diag(chol_cn))))
                         - 0.5 * float(half_u @ half_u))
            acc = math.log(rng.random()) < prop - cur
            if acc:
                state.params = p = dataclasses.replace(p, theta_w=theta_new)
                corr_w = corr_new
                if kind.has_skew:
                    chol_cw = chol_cn
                    prec_cw = chol_inverse(chol_cn)
                b_prec = chol_inverse(chol_bn)
                logdet_b = 2.0 * float(np.sum(np.log(np.diag(chol_bn))))
            accepted_now["theta_w"] = acc
            _bump(stats, "theta_w", int(acc))

            if kind.has_mixture:
                rate_l = hyper.c9 / med_d
                psi = np.log(state.lam)
                a_vec = psi + 0.5 * p.nu
                cur = (-0.5 * logdet_cl - 0.5 * float(a_vec @ (prec_cl @ a_vec)) / p.nu
                       - rate_l * p.theta_lambda + math.log(p.theta_lambda))
                t_new = (math.log(p.theta_lambda)
                         + math.exp(log_scales["theta_lambda"]) * rng.standard_normal())
                theta_new = math.exp(t_new)
                corr_ln = exp_correlation(dist, theta_new)
                chol_ln = jittered_cholesky(corr_ln)
                half = solve_triangular(chol_ln, a_vec, lower=True, check_finite=False)
                prop = (-float(np.sum(np.log(np.diag(chol_ln)))) - 0.5 * float(half @ half) / p.nu
                        - rate_l * theta_new + t_new)
                acc = math.log(rng.random()) < prop - cur
                if acc:
                    state.params = p = dataclasses.replace(p, theta_lambda=theta_new)
                    corr_l = corr_ln
                    prec_cl = chol_inverse(chol_ln)
                    logdet_cl = 2.0 * float(np.sum(np.log(np.diag(chol_ln))))
                accepted_now["theta_lambda"] = acc
                _bump(stats, "theta_lambda", int(acc))

            if cfg.adapt and not in_tail:
                gamma = (t + 1.0) ** -0.6
                for name in mh_blocks:
                    if name in accepted_now:
                        log_scales[name] += gamma * (float(accepted_now[name]) - MH_TARGET_RATE)
                if lam_accept is not None:
                    lam_log_scales += gamma * (lam_accept.astype(float) - MH_TARGET_RATE)

            if in_tail and (t - cfg.burn_in) % cfg.thin == 0 and kept < n_keep:
                rows[kept] = params_to_row(state.params, kind)
                lam_rows[kept] = state.lam
                u_rows[kept] = state.u
                yimp_rows[kept] = state.y[cens_idx]
                logcond[kept] = _exact_block_loglik(state, ds, corr_w)
                kept += 1
        except np.linalg.LinAlgError as err:
            raise np.linalg.LinAlgError(f"factorization failed at sweep {t}: {err}") from err

    rates = {}
    for name in mh_blocks + ["lambda"]:
        tot = post_stats.get(name + "_total", 0)
        if tot:
            rates[name] = post_stats.get(name + "_accept", 0) / tot
    return ChainOutput(
        kind=kind, param_names=names, params=rows[:kept],
        lam_draws=lam_rows[:kept], u_draws=u_rows[:kept],
        y_imputed=yimp_rows[:kept], censored_idx=cens_idx,
        log_conditional=logcond[:kept], acceptance_rates=rates,
        config=cfg, med_d=med_d)


# ---------------------------------------------------------------------------
# joint-distribution check


def sample_tilted_theta_w(rng, dist: np.ndarray, rate: float, count: int,
                          batch: int = 20000) -> np.ndarray:
    """Draw theta from Exp(rate) tilted by the positive-orthant probability
    of N(0, C_theta), by exact rejection: keep theta iff a fresh Gaussian
    field at that theta lands componentwise positive."""
    n = dist.shape[0]
    eye = np.eye(n)
    out = np.empty(count)
    filled = 0
    while filled < count:
        th = rng.exponential(1.0 / rate, size=batch)
        c = np.exp(-dist[None, :, :] / th[:, None, None]) + 1e-10 * eye
        chol = np.linalg.cholesky(c)
        z = rng.standard_normal((batch, n, 1))
        g = (chol @ z)[:, :, 0]
        ok = np.all(g > 0.0, axis=1)
        took = th[ok]
        take = min(took.size, count - filled)
        out[filled:filled + take] = took[:take]
        filled += take
    return out


def _prior_param_draws(rng, kind: ModelKind, hyper: Hyperparams, med_d: float,
                       dist: np.ndarray, size: int) -> dict:
    draws = {"beta0": rng.standard_normal(size) * math.sqrt(hyper.c0)}
    if kind.has_skew:
        draws["alpha"] = rng.standard_normal(size) * math.sqrt(hyper.c1)
    draws["sigma2"] = 1.0 / rng.gamma(hyper.c2, 1.0 / hyper.c3, size=size)
    draws["omega2"] = gig_sample(rng, GigParams(0.0, hyper.c4, hyper.c5), size=size)
    if kind.has_mixture:
        draws["nu"] = gig_sample(rng, GigParams(0.0, hyper.c6, hyper.c7), size=size)
    if kind.has_skew:
        draws["theta_w"] = sample_tilted_theta_w(rng, dist, hyper.c8 / med_d, size)
    else:
        draws["theta_w"] = rng.exponential(med_d / hyper.c8, size=size)
    if kind.has_mixture:
        draws["theta_lambda"] = rng.exponential(med_d / hyper.c9, size=size)
    return draws


def _batch_mean_se(series: np.ndarray, n_batch: int = 100):
    usable = (series.size // n_batch) * n_batch
    batches = series[:usable].reshape(n_batch, -1).mean(axis=1)
    return float(series.mean()), float(batches.std(ddof=1) / math.sqrt(n_batch))


def geweke_joint_test(rng, locs, cfg: ChainConfig, iterations: int,
                      step_overrides: dict | None = None,
                      prior_draws: int | None = None) -> dict:
    """Two-path simulator consistency check.

    Path A draws parameters from their priors (theta_w from the orthant-
    tilted prior when the kind has a skew field).  Path B runs the
    successive-conditional simulator: one full parameter sweep given the
    current synthetic data, then a fresh y drawn from the observation law.
    Returns per-parameter z-scores for first and second moments; honest
    implementations stay within a few units.

    step_overrides maps block names ("beta", "u", ...) to replacement
    callables f(rng, state, ds, corr_w, corr_lambda, hyper) used in path B,
    which is how deliberate corruption is injected to validate the test's
    power.
    """
    kind = cfg.kind
    hyper = cfg.hyper
    overrides = step_overrides or {}
    n = len(locs)
    if n > 15:
        raise ValueError("joint check is meant for small n")
    dist = distance_matrix(locs)
    med_d = median_distance(locs)
    design = np.ones((n, 1))
    if prior_draws is None:
        prior_draws = max(iterations // 2, 2000)

    path_a = _prior_param_draws(rng, kind, hyper, med_d, dist, prior_draws)

    # path B init from one prior draw
    init = _prior_param_draws(rng, kind, hyper, med_d, dist, 1)
    params = ModelParams(
        beta=np.array([init["beta0"][0]]),
        alpha=float(init["alpha"][0]) if kind.has_skew else 0.0,
        sigma2=float(init["sigma2"][0]),
        omega2=float(init["omega2"][0]),
        nu=float(init["nu"][0]) if kind.has_mixture else 1.0,
        theta_w=float(init["theta_w"][0]),
        theta_lambda=float(init["theta_lambda"][0]) if kind.has_mixture else 1.0,
    )
    lam = np.ones(n)
    if kind.has_mixture:
        chol_l = jittered_cholesky(exp_correlation(dist, params.theta_lambda))
        psi0 = -0.5 * params.nu + math.sqrt(params.nu) * (chol_l @ rng.standard_normal(n))
        lam = np.exp(psi0)
    u = np.zeros(n)
    if kind.has_skew:
        from .distributions import tmvn_sample
        corr0 = exp_correlation(dist, params.theta_w)
        u = tmvn_sample(rng, np.zeros(n), np.zeros(n), corr0, sweeps=50)
    state = McmcState(y=np.zeros(n), u=u, lam=lam, params=params)
    ds = SpatialDataset(locations=locs, design=design,
                        exact={i: 0.0 for i in range(n)})

    def redraw_y():
        p = state.params
        d = 1.0 / np.sqrt(state.lam)
        corr = exp_correlation(dist, p.theta_w)
        chol = jittered_cholesky(build_b_matrix(corr, state.lam, p.omega2))
        mean = design @ p.beta + p.alpha * d * state.u
        state.y = mean + math.sqrt(p.sigma2) * (chol @ rng.standard_normal(n))

    redraw_y()
    scales = cfg.scales()
    lam_scales = np.full(n, scales["lambda"])
    names = list(path_a.keys())
    path_b = {name: np.empty(iterations) for name in names}

    def run_block(name, default):
        fn = overrides.get(name)
        if fn is None:
            default()
        else:
            corr_l = exp_correlation(dist, state.params.theta_lambda) if kind.has_mixture else None
            fn(rng, state, ds, exp_correlation(dist, state.params.theta_w), corr_l, hyper)

    for it in range(iterations):
        corr_w = exp_correlation(dist, state.params.theta_w)
        corr_l = exp_correlation(dist, state.params.theta_lambda) if kind.has_mixture else None
        if kind.has_skew:
            run_block("u", lambda: step_u(rng, state, ds, corr_w, sweeps=cfg.u_sweeps))
        if kind.has_mixture:
            run_block("lambda", lambda: step_lambda(rng, state, ds, corr_w, corr_l,
                                                    scales=lam_scales))
        run_block("beta", lambda: step_beta(rng, state, ds, corr_w, hyper))
        if kind.has_skew:
            run_block("alpha", lambda: step_alpha(rng, state, ds, corr_w, hyper))
        run_block("sigma2", lambda: step_sigma2(rng, state, ds, corr_w, hyper,
                                                mode=cfg.sigma2_mode,
                                                scale=scales["sigma2"]))
        run_block("omega2", lambda: step_omega2(rng, state, ds, corr_w, hyper,
                                                mode=cfg.omega2_mode,
                                                scale=scales["omega2"]))
        if kind.has_mixture:
            run_block("nu", lambda: step_nu(rng, state, corr_l, hyper,
                                            scale=scales["nu"]))
        run_block("theta_w", lambda: step_theta(rng, state, ds, "w", hyper, med_d,
                                                kind, scale=scales["theta_w"]))
        if kind.has_mixture:
            run_block("theta_lambda", lambda: step_theta(rng, state, ds, "lambda",
                                                         hyper, med_d, kind,
                                                         scale=scales["theta_lambda"]))
        redraw_y()
        p = state.params
        current = {"beta0": p.beta[0], "alpha": p.alpha, "sigma2": p.sigma2,
                   "omega2": p.omega2, "nu": p.nu, "theta_w": p.theta_w,
                   "theta_lambda": p.theta_lambda}
        for name in names:
            path_b[name][it] = current[name]

    report = {}
    for name in names:
        a = path_a[name]
        b = path_b[name]
        entry = {}
        for tag, fa, fb in (("mean", a, b), ("second", a ** 2, b ** 2)):
            ma = float(fa.mean())
            se_a = float(fa.std(ddof=1) / math.sqrt(fa.size))
            mb, se_b = _batch_mean_se(fb)
            entry["z_" + tag] = (ma - mb) / math.sqrt(se_a ** 2 + se_b ** 2)
        report[name] = entry
    return report
