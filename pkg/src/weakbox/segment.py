"""Heatmap -> mask -> box: two-component GMM threshold with fallback.

A heatmap is modeled as a mix of a background and an object normal
distribution. When the two components are well separated, the threshold is
the density crossover between the means; otherwise (typically small objects,
where the object component is barely estimable) the threshold degrades to
mean + gamma * std of the heatmap.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from .core import patch_index_to_rc, patch_to_pixel_box
from .errors import CrossoverMissError, DataError, DegenerateDataError


@dataclass(frozen=True)
class GmmParams:
    """Two-component 1-D mixture estimate, ordered so mu_b <= mu_o."""

    w_b: float
    w_o: float
    mu_b: float
    mu_o: float
    sigma_b: float
    sigma_o: float
    log_likelihoods: tuple = ()


@dataclass(frozen=True)
class ThresholdResult:
    t: float
    source: str  # "crossover" | "fallback"
    params: GmmParams | None = None
    mu: float | None = None
    sigma: float | None = None


@dataclass(frozen=True)
class Mask:
    bits: np.ndarray  # bool, length N_P


def _log_density(x, mu, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mu) ** 2 / var)


def fit_gmm_1d(values, cfg):
    """Fit a 2-component GMM by EM with deterministic percentile init.

    Means start at the 25th/75th percentiles, both sigmas at the overall
    std, weights at 0.5/0.5. Components are relabeled so mu_b <= mu_o.
    """
    x = np.asarray(values, dtype=np.float64)
    if not np.isfinite(x).all():
        raise DataError("non-finite values in GMM input")
    if x.size < 4:
        raise DataError(f"need at least 4 values, got {x.size}")
    if x.var() <= cfg.var_floor:
        raise DegenerateDataError("values have no usable spread")

    mu = np.percentile(x, [25.0, 75.0]).astype(np.float64)
    var = np.full(2, max(x.var(), cfg.var_floor))
    w = np.array([0.5, 0.5])

    lls = []
    prev_ll = -np.inf
    for _ in range(cfg.max_iters):
        # E-step in log space
        log_joint = np.log(w)[:, None] + _log_density(x[None, :], mu[:, None], var[:, None])
        log_norm = logsumexp(log_joint, axis=0)
        resp = np.exp(log_joint - log_norm[None, :])

        ll = float(log_norm.sum())
        lls.append(ll)
        if ll - prev_ll < cfg.tol and np.isfinite(prev_ll):
            break
        prev_ll = ll

        # M-step
        nk = resp.sum(axis=1)
        nk = np.maximum(nk, 1e-300)
        mu = (resp @ x) / nk
        var = ((resp * (x[None, :] - mu[:, None]) ** 2).sum(axis=1)) / nk
        var = np.maximum(var, cfg.var_floor)
        w = nk / x.size

    order = np.argsort(mu)
    b, o = int(order[0]), int(order[1])
    return GmmParams(
        w_b=float(w[b]), w_o=float(w[o]),
        mu_b=float(mu[b]), mu_o=float(mu[o]),
        sigma_b=float(np.sqrt(var[b])), sigma_o=float(np.sqrt(var[o])),
        log_likelihoods=tuple(lls),
    )


def separation_test(params, sep_factor=1.5):
    """True when the components are far enough apart to trust the crossover."""
    return params.mu_b + sep_factor * params.sigma_b < params.mu_o - sep_factor * params.sigma_o


def solve_crossover(params, weighted=False):
    """Point between the means where the two component densities are equal.

    Equal sigmas give the exact midpoint; otherwise the log-density
    difference is quadratic in t and the root inside (mu_b, mu_o) is taken.
    """
    mu_b, mu_o = params.mu_b, params.mu_o
    vb, vo = params.sigma_b ** 2, params.sigma_o ** 2
    log_wb = np.log(params.w_b) if weighted else 0.0
    log_wo = np.log(params.w_o) if weighted else 0.0

    if abs(params.sigma_b - params.sigma_o) < 1e-12 and not weighted:
        t = 0.5 * (mu_b + mu_o)
        if not mu_b < t < mu_o:
            raise CrossoverMissError("component means coincide")
        return t

    # log N(mu_b, vb)(t) + log_wb = log N(mu_o, vo)(t) + log_wo
    a = 1.0 / vo - 1.0 / vb
    b = 2.0 * (mu_b / vb - mu_o / vo)
    c = mu_o ** 2 / vo - mu_b ** 2 / vb + np.log(vo / vb) + 2.0 * (log_wb - log_wo)
    if abs(a) < 1e-300:
        if abs(b) < 1e-300:
            raise CrossoverMissError("degenerate crossover equation")
        roots = [-c / b]
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            raise CrossoverMissError("no real crossover")
        sq = np.sqrt(disc)
        # numerically stable quadratic roots
        q = -0.5 * (b + np.copysign(sq, b))
        roots = [q / a]
        if q != 0.0:
            roots.append(c / q)

    inside = [r for r in roots if mu_b < r < mu_o]
    if not inside:
        raise CrossoverMissError(f"no crossover in ({mu_b}, {mu_o})")
    t = float(inside[0])

    # Newton polish on the log-density difference
    for _ in range(3):
        f = (_log_density(t, mu_b, vb) + log_wb) - (_log_density(t, mu_o, vo) + log_wo)
        df = -(t - mu_b) / vb + (t - mu_o) / vo
        if df == 0.0:
            break
        t_new = t - f / df
        if mu_b < t_new < mu_o:
            t = t_new
    return t


def fallback_threshold(values, gamma):
    """mean + gamma * population std of the heatmap values."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0 or not np.isfinite(x).all():
        raise DataError("fallback threshold needs non-empty finite values")
    return float(x.mean() + gamma * x.std())


def compute_threshold(heatmap, cfg):
    """GMM crossover threshold when separable, mean + gamma*std otherwise."""
    values = np.asarray(heatmap.values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise DataError("non-finite heatmap")
    try:
        params = fit_gmm_1d(values, cfg.em)
        if separation_test(params, cfg.sep_factor):
            t = solve_crossover(params, weighted=cfg.weighted_crossover)
            return ThresholdResult(t=t, source="crossover", params=params)
    except (DegenerateDataError, CrossoverMissError):
        params = None
    t = fallback_threshold(values, cfg.gamma)
    return ThresholdResult(
        t=t, source="fallback", params=params,
        mu=float(values.mean()), sigma=float(values.std()),
    )


def threshold_heatmap(heatmap, t):
    return Mask(bits=np.asarray(heatmap.values) >= t)


def extract_box(mask, initial_seed, g):
    """Pixel box enclosing the 4-connected mask segment holding the seed.

    The seed cell is forced on, so the segment is never empty.
    """
    bits = np.asarray(mask.bits, dtype=bool).reshape(g.grid_h, g.grid_w).copy()
    row, col = patch_index_to_rc(initial_seed.patch_index, g)
    bits[row, col] = True
    labels, _ = ndimage.label(bits)  # default structure is 4-connectivity
    component = labels == labels[row, col]
    rows, cols = np.nonzero(component)
    return patch_to_pixel_box(int(rows.min()), int(cols.min()),
                              int(rows.max()), int(cols.max()), g)
