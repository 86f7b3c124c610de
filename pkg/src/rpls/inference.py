"""Variable importance in projection with permutation p-values and FDR control."""

import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .exceptions import DegenerateModel, InvalidInput, RplsError
from .model import linearise, tnipals_fit
from .nipals import nipals_fit

logger = logging.getLogger(__name__)

DEFAULT_PERMUTATIONS = 200
DEFAULT_ALPHA = 0.05


@dataclass
class VipReport:
    vip: np.ndarray
    p_values: np.ndarray
    q_values: np.ndarray
    significant: np.ndarray
    n_permutations: int
    alpha: float
    diagonal_mask: np.ndarray
    n_valid: np.ndarray
    labels: list = None

    @property
    def n_significant(self):
        return int(self.significant.sum())


def _cor2(a, b):
    a = a - a.mean()
    b = b - b.mean()
    denom = (a @ a) * (b @ b)
    if denom <= 0:
        return None
    return (a @ b) ** 2 / denom


def redundancy(Y, t):
    """Mean squared correlation between the columns of ``Y`` and the score ``t``.

    A zero-variance column (or score) contributes a correlation of zero.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    t = np.asarray(t, dtype=float)
    if Y.shape[0] != t.shape[0]:
        raise InvalidInput(f"Y has {Y.shape[0]} rows, score has {t.shape[0]}")
    total = 0.0
    for i in range(Y.shape[1]):
        r2 = _cor2(Y[:, i], t)
        if r2 is None:
            logger.debug("zero variance in redundancy; correlation of column %d set to 0", i)
            continue
        total += r2
    return total / Y.shape[1]


def vip_scores(fit, Y):
    """VIP statistic of every predictor of a fitted PLS model.

    Parameters
    ----------
    fit : PlsFit
    Y : array_like, shape (n, q)
        The responses the model was fitted to.

    Returns
    -------
    ndarray, shape (p,)
        Non-negative scores whose squares sum to ``p``.
    """
    rd = np.array([redundancy(Y, fit.T[:, k]) for k in range(fit.n_components)])
    total = rd.sum()
    if total <= 0:
        raise DegenerateModel("scores explain none of the response variance")
    p = fit.W.shape[0]
    return np.sqrt(p / total * (fit.W**2 @ rd))


def fdr_adjust(p_values):
    """Benjamini-Hochberg step-up adjusted p-values."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise InvalidInput("p-values must be one-dimensional")
    if not np.all(np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise InvalidInput("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


def _null_vips(X, Y, j, n_components, n_permutations, seed, tol, max_iter):
    n = X.shape[0]
    out = np.full(n_permutations, np.nan)
    Xp = X.copy()
    for h in range(n_permutations):
        rng = np.random.default_rng([seed, j, h])
        Xp[:, j] = X[rng.permutation(n), j]
        try:
            fit = nipals_fit(Xp, Y, n_components, tol=tol, max_iter=max_iter)
            out[h] = vip_scores(fit, Y)[j]
        except RplsError as exc:
            logger.warning("permutation %d of predictor %d failed: %s", h, j, exc)
    return out


def permutation_pvalues(observed, null, smoothed=False):
    """P-values from observed VIPs and a (p, H) array of permuted VIPs.

    Failed permutations (NaN) are dropped from both count and denominator.
    """
    observed = np.asarray(observed, dtype=float)
    null = np.atleast_2d(np.asarray(null, dtype=float))
    valid = np.isfinite(null)
    exceed = np.sum(valid & (null > observed[:, None]), axis=1)
    n_valid = valid.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        if smoothed:
            p = (exceed + 1) / (n_valid + 1)
        else:
            p = exceed / n_valid
    p = np.where(n_valid > 0, p, 1.0)
    return p, n_valid


def permutation_test(X, Y, n_components, n_permutations=DEFAULT_PERMUTATIONS, seed=0,
                     diagonal_mask=None, smoothed=False, n_jobs=1, tol=1e-10,
                     max_iter=500, return_null=False):
    """Permutation p-values for the VIP of every predictor coordinate.

    For each predictor ``j`` the column ``X[:, j]`` is permuted
    ``n_permutations`` times, the PLS model refitted, and the permuted
    ``VIP_j`` compared with the observed one.  Permutation ``h`` of
    predictor ``j`` draws from a generator seeded by ``(seed, j, h)``, so
    the result does not depend on ``n_jobs``.

    Parameters
    ----------
    X : ndarray, shape (n, p)
        Linearised predictor coordinates.
    Y : ndarray, shape (n, q)
        Response coordinates, as used for the reference fit.
    diagonal_mask : ndarray of bool, shape (p,), optional
        Coordinates known a priori to be uninformative; they are not
        permuted and get p-value 1.
    smoothed : bool
        Report ``(count + 1) / (H + 1)`` instead of ``count / H``.

    Returns
    -------
    p_values : ndarray, shape (p,)
    observed : ndarray, shape (p,)
    n_valid : ndarray, shape (p,)
        Number of successful refits per predictor.
    null : ndarray, shape (p, H)
        Only when ``return_null`` is True.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if int(n_permutations) < 1:
        raise InvalidInput("need at least one permutation")
    H = int(n_permutations)
    p = X.shape[1]
    mask = np.zeros(p, dtype=bool) if diagonal_mask is None else np.asarray(diagonal_mask, bool)
    if mask.shape != (p,):
        raise InvalidInput(f"diagonal mask has shape {mask.shape}, expected ({p},)")

    fit = nipals_fit(X, Y, n_components, tol=tol, max_iter=max_iter)
    observed = vip_scores(fit, Y)

    # the refits expect the same (centered) blocks as the reference fit
    Xc = X - fit.x_means
    Yc = Y - fit.y_means
    cols = [j for j in range(p) if not mask[j]]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_null_vips)(Xc, Yc, j, n_components, H, seed, tol, max_iter) for j in cols
    )
    null = np.full((p, H), np.nan)
    for j, row in zip(cols, results):
        null[j] = row
    p_values, n_valid = permutation_pvalues(observed, null, smoothed=smoothed)
    p_values[mask] = 1.0
    out = (p_values, observed, n_valid)
    return out + (null,) if return_null else out


def vip_report(p_values, vip, alpha=DEFAULT_ALPHA, n_permutations=DEFAULT_PERMUTATIONS,
               diagonal_mask=None, n_valid=None, labels=None):
    """Assemble a :class:`VipReport` from raw permutation p-values."""
    p_values = np.asarray(p_values, dtype=float)
    mask = np.zeros(p_values.size, bool) if diagonal_mask is None else np.asarray(diagonal_mask, bool)
    p_values = np.where(mask, 1.0, p_values)
    q = fdr_adjust(p_values)
    n_valid = np.full(p_values.size, n_permutations) if n_valid is None else np.asarray(n_valid)
    return VipReport(
        vip=np.asarray(vip, float), p_values=p_values, q_values=q,
        significant=(q <= alpha) & ~mask, n_permutations=int(n_permutations),
        alpha=float(alpha), diagonal_mask=mask, n_valid=n_valid, labels=labels,
    )


def vip_inference(X, Y, n_components, n_permutations=DEFAULT_PERMUTATIONS, alpha=DEFAULT_ALPHA,
                  seed=0, x_manifold=None, y_manifold=None, frechet_cfg=None, scale_y=True,
                  mask_diagonal=True, smoothed=False, n_jobs=1, tol=1e-10, max_iter=500):
    """Fit Riemannian PLS and test every predictor coordinate's VIP.

    Fréchet means and linearisation are computed once on the full data;
    the permutations act on the linearised coordinates.  For SPD predictors
    the diagonal coordinates are masked when ``mask_diagonal`` is set.

    Returns
    -------
    report : VipReport
    model : RplsModel
    """
    model = tnipals_fit(X, Y, n_components, x_manifold=x_manifold, y_manifold=y_manifold,
                        frechet_cfg=frechet_cfg, tol=tol, max_iter=max_iter, scale_y=scale_y)
    Xc = linearise(model.x_manifold, X, model.mu_x)
    Yc = linearise(model.y_manifold, Y, model.mu_y) / model.beta.y_scales
    mask = model.x_manifold.diagonal_mask() if mask_diagonal else None
    p_values, observed, n_valid = permutation_test(
        Xc, Yc, n_components, n_permutations=n_permutations, seed=seed,
        diagonal_mask=mask, smoothed=smoothed, n_jobs=n_jobs, tol=tol, max_iter=max_iter,
    )
    report = vip_report(p_values, observed, alpha=alpha, n_permutations=n_permutations,
                        diagonal_mask=mask, n_valid=n_valid,
                        labels=model.x_manifold.coordinate_labels())
    return report, model
