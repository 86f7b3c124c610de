"""K-fold cross-validation and one-standard-error choice of the component count."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .exceptions import DegenerateResponse, InvalidInput, RplsError
from .model import _prepare, assemble, needs_centering, rpls_predict_coords, standardize_scales
from .nipals import nipals_fit

logger = logging.getLogger(__name__)

METRICS = ("rmse", "r2", "accuracy", "sensitivity", "specificity")


def kfold_split(n, folds, seed=0, stratify=None):
    """Shuffled k-fold partition of ``range(n)``.

    With ``stratify`` the indices of each label are dealt round-robin over
    the folds, continuing the deal across labels, so fold sizes still differ
    by at most one.

    Returns
    -------
    list of (train, test) index arrays
    """
    n, folds = int(n), int(folds)
    if folds < 2 or folds > n:
        raise InvalidInput(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    rng = np.random.default_rng(seed)
    if stratify is None:
        order = rng.permutation(n)
    else:
        labels = np.asarray(stratify)
        if labels.shape != (n,):
            raise InvalidInput("stratify must have one label per sample")
        order = np.concatenate(
            [rng.permutation(np.flatnonzero(labels == lab)) for lab in np.unique(labels)]
        )
    assignment = np.empty(n, dtype=int)
    assignment[order] = np.arange(n) % folds
    idx = np.arange(n)
    return [(idx[assignment != f], idx[assignment == f]) for f in range(folds)]


def _pair(Y_true, Y_pred):
    Y_true = np.asarray(Y_true, dtype=float)
    Y_pred = np.asarray(Y_pred, dtype=float)
    if Y_true.shape != Y_pred.shape:
        raise InvalidInput(f"shape mismatch: {Y_true.shape} vs {Y_pred.shape}")
    return Y_true, Y_pred


def rmse(Y_true, Y_pred):
    """Root mean squared error pooled over all entries."""
    Y_true, Y_pred = _pair(Y_true, Y_pred)
    return float(np.sqrt(np.mean((Y_true - Y_pred) ** 2)))


def r_squared(Y_true, Y_pred, train_means):
    """Pooled ``1 - SSE/SST`` with SST taken about the training means."""
    Y_true, Y_pred = _pair(Y_true, Y_pred)
    sst = np.sum((Y_true - np.asarray(train_means, dtype=float)) ** 2)
    if sst <= 0:
        raise DegenerateResponse("test responses equal the training means; R^2 undefined")
    return float(1.0 - np.sum((Y_true - Y_pred) ** 2) / sst)


@dataclass
class ClassificationMetrics:
    accuracy: float
    sensitivity: float
    specificity: float
    undefined: tuple = ()


def classification_metrics(true_labels, scores, threshold=0.5):
    """Accuracy, sensitivity and specificity with label 1 as the positive class.

    A rate whose denominator is empty is NaN and named in ``undefined``.
    """
    y = np.asarray(true_labels)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise InvalidInput(f"shape mismatch: {y.shape} vs {s.shape}")
    if not np.all(np.isin(y, (0, 1))):
        raise InvalidInput("labels must be 0/1")
    pred = s >= threshold
    pos = y == 1
    tp = np.sum(pred & pos)
    tn = np.sum(~pred & ~pos)
    undefined = []
    sens = spec = math.nan
    if pos.any():
        sens = tp / pos.sum()
    else:
        undefined.append("sensitivity")
    if (~pos).any():
        spec = tn / (~pos).sum()
    else:
        undefined.append("specificity")
    acc = (tp + tn) / y.size if y.size else math.nan
    return ClassificationMetrics(float(acc), float(sens), float(spec), tuple(undefined))


@dataclass
class CvResult:
    """Cross-validated metrics per candidate component count.

    ``per_k`` maps ``K`` to a dict with ``<metric>_mean`` and ``<metric>_se``
    for every metric in :data:`METRICS` plus ``n_folds_ok``.  Error metrics
    are computed on the per-fold standardized response scale.
    """

    per_k: dict
    chosen_k: int
    folds: int
    seed: int
    excluded: list = field(default_factory=list)
    threshold: float = math.nan
    best_k: int = None
    method: str = None
    scale: str = "standardized"


def _fold_models(X, Y, train, ks, x_manifold, y_manifold, frechet_cfg, tol, max_iter):
    """Fit on the training rows only; one model per candidate K (None on failure)."""
    (xm, ym, mu_x, mu_y, fx, fy, Xc, Yc) = _prepare(
        X[train], Y[train], x_manifold, y_manifold, frechet_cfg
    )
    scales = standardize_scales(Yc)
    Yc = Yc / scales
    center = needs_centering(xm, ym)
    models = {}
    try:
        full = nipals_fit(Xc, Yc, max(ks), tol=tol, max_iter=max_iter, center=center)
        fits = {k: full.truncate(k) for k in ks}
    except RplsError as exc:
        logger.warning("fit with %d components failed (%s); refitting per K", max(ks), exc)
        fits = {}
        for k in ks:
            try:
                fits[k] = nipals_fit(Xc, Yc, k, tol=tol, max_iter=max_iter, center=center)
            except RplsError as inner:
                logger.warning("fold fit with K=%d failed: %s", k, inner)
    for k in ks:
        models[k] = None
        if k in fits:
            try:
                models[k] = assemble(xm, ym, mu_x, mu_y, fits[k], scales, fx, fy)
            except RplsError as exc:
                logger.warning("K=%d: %s", k, exc)
    return models


def fit_fold(X, Y, train, k, x_manifold=None, y_manifold=None, frechet_cfg=None,
             tol=1e-10, max_iter=500):
    """The model cross-validation fits on one fold's training rows."""
    return _fold_models(np.asarray(X, float), np.asarray(Y, float), np.asarray(train), [k],
                        x_manifold, y_manifold, frechet_cfg, tol, max_iter)[k]


def _evaluate_fold(X, Y, train, test, ks, group_column, threshold, x_manifold, y_manifold,
                   frechet_cfg, tol, max_iter):
    try:
        models = _fold_models(X, Y, train, ks, x_manifold, y_manifold, frechet_cfg, tol, max_iter)
    except RplsError as exc:
        logger.warning("fold preparation failed: %s", exc)
        return {k: None for k in ks}
    out = {}
    for k, model in models.items():
        if model is None:
            out[k] = None
            continue
        pred = rpls_predict_coords(model, X[test])
        truth = model.y_manifold.linearise(Y[test], model.mu_y)
        scales = model.beta.y_scales
        pred_std = pred / scales
        truth_std = truth / scales
        row = {"rmse": rmse(truth_std, pred_std)}
        try:
            row["r2"] = r_squared(truth_std, pred_std, np.zeros(truth_std.shape[1]))
        except DegenerateResponse:
            row["r2"] = math.nan
        if group_column is not None:
            labels = Y[test][:, group_column]
            cm = classification_metrics(labels, pred[:, group_column] + model.mu_y[group_column],
                                        threshold)
            row.update(accuracy=cm.accuracy, sensitivity=cm.sensitivity,
                       specificity=cm.specificity)
        else:
            row.update(accuracy=math.nan, sensitivity=math.nan, specificity=math.nan)
        out[k] = row
    return out


def _mean_se(values):
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
    return float(v.mean()), float(se)


def one_se_rule(per_k):
    """Smallest K whose mean RMSE is within one SE of the minimum.

    Returns ``(chosen_k, best_k, threshold)``.
    """
    ks = sorted(per_k)
    best = min(ks, key=lambda k: (per_k[k]["rmse_mean"], k))
    threshold = per_k[best]["rmse_mean"] + per_k[best]["rmse_se"]
    chosen = next(k for k in ks if per_k[k]["rmse_mean"] <= threshold)
    return chosen, best, threshold


def cross_validate(X, Y, candidate_ks=range(1, 11), folds=10, seed=0, group_column=None,
                   threshold=0.5, x_manifold=None, y_manifold=None, frechet_cfg=None,
                   tol=1e-10, max_iter=500, n_jobs=1, splits=None, method=None):
    """Cross-validate Riemannian PLS over candidate component counts.

    Every fold recomputes means, response standardization and the fit from
    its training rows.  Responses must be Euclidean.  When ``group_column``
    names a 0/1 response, folds are stratified by it and classification
    rates are reported for it.

    Returns
    -------
    CvResult
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2:
        raise InvalidInput("cross-validation supports Euclidean responses only")
    n = X.shape[0]
    ks = sorted({int(k) for k in candidate_ks})
    if not ks or ks[0] < 1:
        raise InvalidInput("candidate component counts must be positive and non-empty")
    if splits is None:
        stratify = Y[:, group_column] if group_column is not None else None
        splits = kfold_split(n, folds, seed, stratify=stratify)
    folds = len(splits)
    coord_dim = (x_manifold.coord_dim if x_manifold is not None
                 else (X.shape[-1] * (X.shape[-1] + 1) // 2 if X.ndim == 3 else X.shape[1]))
    smallest_train = min(len(tr) for tr, _ in splits)
    if ks[-1] > min(coord_dim, smallest_train):
        raise InvalidInput(
            f"largest K={ks[-1]} exceeds min(coordinate dim {coord_dim}, "
            f"smallest training fold {smallest_train})"
        )

    fold_rows = Parallel(n_jobs=n_jobs)(
        delayed(_evaluate_fold)(X, Y, tr, te, ks, group_column, threshold, x_manifold,
                                y_manifold, frechet_cfg, tol, max_iter)
        for tr, te in splits
    )
    per_k, excluded = {}, []
    for k in ks:
        rows = [fr[k] for fr in fold_rows if fr[k] is not None]
        if len(rows) * 2 < folds:
            logger.warning("K=%d excluded: only %d of %d folds succeeded", k, len(rows), folds)
            excluded.append(k)
            continue
        entry = {"n_folds_ok": len(rows)}
        for m in METRICS:
            entry[f"{m}_mean"], entry[f"{m}_se"] = _mean_se([r[m] for r in rows])
        per_k[k] = entry
    if not per_k:
        raise RplsError("every candidate K failed in more than half the folds")
    chosen, best, thr = one_se_rule(per_k)
    return CvResult(per_k=per_k, chosen_k=chosen, folds=folds, seed=seed, excluded=excluded,
                    threshold=thr, best_k=best, method=method)
