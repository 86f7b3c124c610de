"""scikit-learn compatible estimators."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data_io import method_features
from .frechet import FrechetConfig
from .manifolds import infer_manifold
from .model import rpls_predict, rpls_transform, tnipals_fit


class RiemannianPLS(RegressorMixin, TransformerMixin, BaseEstimator):
    """Partial least squares with SPD-matrix or Euclidean predictors and responses.

    Predictors of shape ``(n, R, R)`` are treated as SPD matrices under the
    affine-invariant metric, 2D arrays as Euclidean.  The same holds for the
    responses.  Both blocks are linearised at their Fréchet means and fitted
    with NIPALS.

    Parameters
    ----------
    n_components : int, default=2
    x_geometry, y_geometry : {'auto', 'spd', 'euclidean'}, default='auto'
    scale_y : bool, default=False
        Standardize Euclidean response columns before fitting.
    frechet_tol, frechet_step, frechet_max_iter
        Fréchet-mean gradient descent settings.
    tol, max_iter
        NIPALS inner-loop settings.

    Attributes
    ----------
    model_ : RplsModel
    coef_ : ndarray, shape (D_x, D_y)
        Coefficients in the flat coordinates at the means.
    x_weights_, x_loadings_, x_scores_, y_scores_ : ndarray
    mean_x_, mean_y_ : ndarray
        Fréchet means of the training blocks.
    """

    def __init__(self, n_components=2, x_geometry="auto", y_geometry="auto", scale_y=False,
                 frechet_tol=1e-6, frechet_step=1.0, frechet_max_iter=200, tol=1e-10,
                 max_iter=500):
        self.n_components = n_components
        self.x_geometry = x_geometry
        self.y_geometry = y_geometry
        self.scale_y = scale_y
        self.frechet_tol = frechet_tol
        self.frechet_step = frechet_step
        self.frechet_max_iter = frechet_max_iter
        self.tol = tol
        self.max_iter = max_iter

    def _manifold(self, data, geometry):
        return infer_manifold(data, None if geometry == "auto" else geometry)

    def fit(self, X, y):
        X = check_array(X, allow_nd=True, ensure_2d=False)
        y = check_array(y, allow_nd=True, ensure_2d=False)
        self._y_is_1d = y.ndim == 1
        if self._y_is_1d:
            y = y[:, None]
        cfg = FrechetConfig(self.frechet_tol, self.frechet_step, self.frechet_max_iter)
        self.model_ = tnipals_fit(
            X, y, self.n_components,
            x_manifold=self._manifold(X, self.x_geometry),
            y_manifold=self._manifold(y, self.y_geometry),
            frechet_cfg=cfg, tol=self.tol, max_iter=self.max_iter, scale_y=self.scale_y,
        )
        pls = self.model_.pls
        self.coef_ = self.model_.beta.coef
        self.x_weights_, self.x_loadings_ = pls.W, pls.P
        self.y_weights_, self.y_loadings_ = pls.C, pls.Q
        self.x_scores_, self.y_scores_ = pls.T, pls.U
        self.mean_x_, self.mean_y_ = self.model_.mu_x, self.model_.mu_y
        self.n_features_in_ = self.model_.x_manifold.coord_dim
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, allow_nd=True, ensure_2d=False)
        pred = rpls_predict(self.model_, X)
        return pred[:, 0] if self._y_is_1d else pred

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, allow_nd=True, ensure_2d=False)
        return rpls_transform(self.model_, X)


class ConnectivityFeatures(TransformerMixin, BaseEstimator):
    """Stateless conversion of correlation matrices into model predictors.

    ``method='riemannian'`` returns the matrices (``F + I`` when
    ``regularize`` is set); ``'raw'`` and ``'fisher'`` return upper-triangle
    vectors of the correlations or of their Fisher transform.
    """

    def __init__(self, method="riemannian", regularize=True):
        self.method = method
        self.regularize = regularize

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return method_features(np.asarray(X, dtype=float), self.method, self.regularize)
