"""Posterior prediction, model-comparison scores, prior sensitivity, and
outlier flagging on top of a fitted chain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .distributions import tn1_sample
from .model import SpatialDataset, exact_conditional_loglik
from .sampler import ChainOutput, row_to_params
from .spatial import LocationSet, build_b_matrix, distance_matrix, jittered_cholesky

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PredictionResult:
    """Predictive summary at a single new location."""

    location: tuple
    draws: np.ndarray
    mean: float
    sd: float
    quantiles: tuple  # (2.5%, 50%, 97.5%)


@dataclass(frozen=True)
class ComparisonReport:
    """Per-model scores keyed by model kind name."""

    dic: dict
    lpml: dict
    rmse: dict | None = None


def _complete_y(ds: SpatialDataset, imputed_row: np.ndarray) -> np.ndarray:
    y = np.empty(ds.n)
    y[ds.exact_idx] = ds.exact_values
    if ds.censored_idx.size:
        y[ds.censored_idx] = imputed_row
    return y


def _check_chain_matches(chain: ChainOutput, ds: SpatialDataset) -> None:
    if chain.lam_draws.shape[1] != ds.n:
        raise ValueError("chain was not produced from a dataset of this size")
    if not np.array_equal(chain.censored_idx, ds.censored_idx):
        raise ValueError("chain censoring layout does not match the dataset")


def predict(rng, chain: ChainOutput, ds: SpatialDataset,
            new_locs: LocationSet) -> list:
    """Monte Carlo predictive draws at each new location, one per retained
    posterior draw.

    Per draw: the log-mixing field and the positive field are extended to
    the new site through their Gaussian (respectively truncated-Gaussian)
    conditionals, then the observation is drawn from the normal implied by
    conditioning the completed data vector.
    """
    _check_chain_matches(chain, ds)
    if chain.n_draws == 0:
        raise ValueError("chain holds no retained draws")
    kind = chain.kind
    k = ds.k
    obs_xy = ds.locations.coords
    new_xy = new_locs.coords
    cross = cdist(obs_xy, new_xy)
    if cross.min() < 1e-9:
        pair = np.unravel_index(np.argmin(cross), cross.shape)
        raise ValueError(
            f"new location {pair[1]} coincides with observed site {pair[0]}")
    dist = distance_matrix(ds.locations)
    n0 = len(new_locs)
    n_draws = chain.n_draws
    if ds.design.shape[1] > 1:
        raise ValueError(
            "prediction needs covariate values at new sites; only the "
            "constant-mean design is supported")
    x0 = np.ones((n0, 1))

    out = np.empty((n_draws, n0))
    for l in range(n_draws):
        p = row_to_params(chain.params[l], kind, k)
        lam = chain.lam_draws[l]
        u = chain.u_draws[l]
        y = _complete_y(ds, chain.y_imputed[l])
        d = 1.0 / np.sqrt(lam)

        if kind.has_mixture:
            corr_l = np.exp(-dist / p.theta_lambda)
            c0_l = np.exp(-cross / p.theta_lambda)
            chol_l = jittered_cholesky(corr_l)
            a_mat = cho_solve((chol_l, True), c0_l)
            psi = np.log(lam)
            mean_psi = -0.5 * p.nu + a_mat.T @ (psi + 0.5 * p.nu)
            var_psi = p.nu * np.maximum(1.0 - np.sum(c0_l * a_mat, axis=0), 0.0)
            psi0 = mean_psi + np.sqrt(var_psi) * rng.standard_normal(n0)
            lam0 = np.exp(psi0)
        else:
            lam0 = np.ones(n0)

        corr_w = np.exp(-dist / p.theta_w)
        c0_w = np.exp(-cross / p.theta_w)

        if kind.has_skew:
            chol_c = jittered_cholesky(corr_w)
            aw = cho_solve((chol_c, True), c0_w)
            mean_u0 = aw.T @ u
            var_u0 = np.maximum(1.0 - np.sum(c0_w * aw, axis=0), 1e-12)
            u0 = tn1_sample(rng, 0.0, mean_u0, var_u0, size=n0)
        else:
            u0 = np.zeros(n0)

        chol_b = jittered_cholesky(build_b_matrix(corr_w, lam, p.omega2))
        g_mat = c0_w * d[:, None]
        s_mat = cho_solve((chol_b, True), g_mat)
        resid = y - ds.design @ p.beta - p.alpha * d * u
        mean0 = (x0 @ p.beta
                 + (p.alpha * u0 + s_mat.T @ resid) / np.sqrt(lam0))
        var0 = (p.sigma2 / lam0) * np.maximum(1.0 - np.sum(g_mat * s_mat, axis=0), 0.0)
        var0 = var0 + p.tau2
        out[l] = mean0 + np.sqrt(var0) * rng.standard_normal(n0)

    results = []
    for j in range(n0):
        draws = out[:, j]
        q = np.quantile(draws, [0.025, 0.5, 0.975])
        results.append(PredictionResult(
            location=(float(new_xy[j, 0]), float(new_xy[j, 1])),
            draws=draws,
            mean=float(draws.mean()),
            sd=float(draws.std(ddof=1)) if draws.size > 1 else 0.0,
            quantiles=(float(q[0]), float(q[1]), float(q[2])),
        ))
    return results


def rmse(predictions, holdout: dict) -> float:
    """Root mean squared error of predictive means against a map from
    location (x, y) to the held-out value."""
    if not holdout:
        raise ValueError("holdout map is empty")
    errs = []
    for loc, truth in holdout.items():
        match = None
        for pred in predictions:
            if (abs(pred.location[0] - loc[0]) < 1e-9
                    and abs(pred.location[1] - loc[1]) < 1e-9):
                match = pred
                break
        if match is None:
            raise ValueError(f"no prediction for holdout site {loc}")
        errs.append(match.mean - truth)
    errs = np.asarray(errs)
    return float(np.sqrt(np.mean(errs ** 2)))


def _require_draws(chain: ChainOutput) -> None:
    if chain.n_draws < 10:
        raise ValueError(
            f"need at least 10 retained draws, chain has {chain.n_draws}")


def dic(chain: ChainOutput, ds: SpatialDataset) -> float:
    """Deviance information criterion with the deviance taken as -2 times
    the conditional log-likelihood of the exactly observed block."""
    _check_chain_matches(chain, ds)
    _require_draws(chain)
    dbar = float(np.mean(-2.0 * chain.log_conditional))
    params_hat = row_to_params(chain.params.mean(axis=0), chain.kind, ds.k)
    lam_hat = chain.lam_draws.mean(axis=0)
    u_hat = chain.u_draws.mean(axis=0)
    y_hat = _complete_y(ds, chain.y_imputed.mean(axis=0)
                        if chain.y_imputed.size else np.empty(0))
    d_hat = -2.0 * exact_conditional_loglik(y_hat, u_hat, lam_hat, params_hat, ds)
    p_d = dbar - d_hat
    return dbar + p_d


def lpml(chain: ChainOutput, ds: SpatialDataset) -> float:
    """Log pseudo marginal likelihood: sum over exact sites of the log
    conditional predictive ordinate, the harmonic mean over draws of each
    site's univariate conditional density."""
    _check_chain_matches(chain, ds)
    _require_draws(chain)
    obs = ds.exact_idx
    dist = distance_matrix(ds.locations)
    n = ds.n
    n_draws = chain.n_draws
    logdens = np.empty((n_draws, obs.size))
    for l in range(n_draws):
        p = row_to_params(chain.params[l], chain.kind, ds.k)
        lam = chain.lam_draws[l]
        u = chain.u_draws[l]
        y = _complete_y(ds, chain.y_imputed[l])
        d = 1.0 / np.sqrt(lam)
        corr_w = np.exp(-dist / p.theta_w)
        chol_b = jittered_cholesky(build_b_matrix(corr_w, lam, p.omega2))
        prec = cho_solve((chol_b, True), np.eye(n))
        r = y - ds.design @ p.beta - p.alpha * d * u
        pr = prec @ r
        pii = np.diag(prec)
        ld = 0.5 * np.log(pii / (2.0 * math.pi * p.sigma2)) - pr ** 2 / (2.0 * pii * p.sigma2)
        logdens[l] = ld[obs]
    if not np.isfinite(logdens).all():
        bad = np.argwhere(~np.isfinite(logdens))
        raise RuntimeError(
            f"conditional density underflow at (draw, site) {tuple(bad[0])}; "
            "LPML undefined")
    log_cpo = math.log(n_draws) - logsumexp(-logdens, axis=0)
    return float(log_cpo.sum())


def sensitivity(benchmark: ChainOutput, alternates) -> dict:
    """Per-parameter max relative change of the posterior mean across
    alternate-prior chains, in units of the benchmark posterior sd."""
    names = list(benchmark.param_names)
    mean_b = benchmark.params.mean(axis=0)
    sd_b = benchmark.params.std(axis=0, ddof=1)
    zero = np.flatnonzero(sd_b == 0.0)
    if zero.size:
        raise ValueError(
            f"benchmark posterior sd of {names[zero[0]]} is zero; "
            "relative change undefined")
    out = {name: 0.0 for name in names}
    for alt in alternates:
        if list(alt.param_names) != names:
            raise ValueError("alternate chain has different parameters")
        mean_a = alt.params.mean(axis=0)
        rel = np.abs(mean_a - mean_b) / sd_b
        for j, name in enumerate(names):
            out[name] = max(out[name], float(rel[j]))
    return out


def outlier_scores(chain: ChainOutput) -> dict:
    """Posterior mean of each site's mixing value; small means flag
    candidate outliers."""
    if not chain.kind.has_mixture:
        raise ValueError(
            f"outlier scores need a mixture kind, chain is {chain.kind.name}")
    means = chain.lam_draws.mean(axis=0)
    return {int(i): float(means[i]) for i in range(means.size)}
