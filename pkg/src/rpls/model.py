"""Riemannian PLS fitted by tangent-space NIPALS, plus a generative simulator."""

from dataclasses import dataclass

import numpy as np

from . import spd
from .exceptions import DegenerateResponse, InvalidComponents, InvalidInput
from .frechet import FrechetConfig
from .manifolds import EuclideanManifold, SPDManifold, infer_manifold
from .nipals import BetaPls, nipals_fit, pls_predict, x_rotations


@dataclass
class RplsModel:
    """A fitted Riemannian PLS model.

    ``pls`` and ``beta`` live in the flat coordinates obtained by
    linearising at ``mu_x`` and ``mu_y``; ``x_loadings``, ``x_weights`` and
    ``y_weights`` are the same vectors mapped back to tangent vectors (one
    per component along the first axis).
    """

    x_manifold: object
    y_manifold: object
    mu_x: np.ndarray
    mu_y: np.ndarray
    pls: object
    beta: BetaPls
    x_loadings: np.ndarray
    x_weights: np.ndarray
    y_weights: np.ndarray
    frechet_x: object = None
    frechet_y: object = None

    @property
    def n_components(self):
        return self.pls.n_components

    @property
    def converged(self):
        return all(r is None or r.converged for r in (self.frechet_x, self.frechet_y))


def linearise(manifold, samples, mu):
    """Rows of flat coordinates ``Vec_mu(Log_mu(X_i))`` (``X_i - mu`` if flat)."""
    return manifold.linearise(samples, mu)


def _prepare(X, Y, x_manifold, y_manifold, frechet_cfg):
    x_manifold = x_manifold or infer_manifold(X)
    y_manifold = y_manifold or infer_manifold(Y)
    X = x_manifold.check(X)
    Y = y_manifold.check(Y)
    if X.shape[0] != Y.shape[0]:
        raise InvalidInput(f"{X.shape[0]} predictor samples but {Y.shape[0]} responses")
    if X.shape[0] < 2:
        raise InvalidInput("need at least two samples")
    mu_x, fx = x_manifold.mean(X, frechet_cfg)
    mu_y, fy = y_manifold.mean(Y, frechet_cfg)
    return (x_manifold, y_manifold, mu_x, mu_y, fx, fy,
            linearise(x_manifold, X, mu_x), linearise(y_manifold, Y, mu_y))


def needs_centering(x_manifold, y_manifold):
    """Whether NIPALS should re-center the linearised blocks.

    Flat blocks are linearised at their arithmetic means, which is exactly
    the centering NIPALS would apply; repeating it only adds rounding.  SPD
    coordinates are centered only up to the Fréchet-mean tolerance.
    """
    return not (isinstance(x_manifold, EuclideanManifold)
                and isinstance(y_manifold, EuclideanManifold))


def standardize_scales(coords):
    """Column standard deviations (ddof=1) used to put responses on unit scale."""
    scales = coords.std(axis=0, ddof=1)
    if np.any(scales <= np.finfo(float).eps * max(np.abs(coords).max(), 1.0)):
        raise DegenerateResponse("a response column has zero variance")
    return scales


def assemble(x_manifold, y_manifold, mu_x, mu_y, pls, y_scales=None, frechet_x=None, frechet_y=None):
    """Build an :class:`RplsModel` around an existing coordinate-space fit."""
    rot = x_rotations(pls)
    scales = np.ones(pls.C.shape[0]) if y_scales is None else np.asarray(y_scales, float)
    beta = BetaPls(
        coef=rot @ pls.B @ pls.C.T,
        x_means=pls.x_means,
        y_means=pls.y_means * scales,
        y_scales=scales,
    )
    return RplsModel(
        x_manifold=x_manifold, y_manifold=y_manifold, mu_x=mu_x, mu_y=mu_y,
        pls=pls, beta=beta,
        x_loadings=x_manifold.tangent(mu_x, pls.P),
        x_weights=x_manifold.tangent(mu_x, pls.W),
        y_weights=y_manifold.tangent(mu_y, pls.C * scales[:, None]),
        frechet_x=frechet_x, frechet_y=frechet_y,
    )


def tnipals_fit(X, Y, n_components, x_manifold=None, y_manifold=None,
                frechet_cfg=None, tol=1e-10, max_iter=500, scale_y=False):
    """Fit Riemannian PLS with tangent-space NIPALS.

    Both blocks are averaged (Fréchet mean on SPD, arithmetic mean on flat
    spaces), linearised at their means, and Euclidean NIPALS is run on the
    coordinates.  With ``scale_y`` the response coordinates are divided by
    their standard deviations before NIPALS and the scales are folded back
    into the coefficients.

    Parameters
    ----------
    X : array_like, shape (n, R, R) or (n, p)
    Y : array_like, shape (n, R', R'), (n, q) or (n,)
    n_components : int
    x_manifold, y_manifold : SPDManifold or EuclideanManifold, optional
        Inferred from array shape when omitted.
    frechet_cfg : FrechetConfig, optional

    Returns
    -------
    RplsModel
        Non-convergence of a Fréchet mean is reported through
        ``model.converged``, not raised.
    """
    (x_manifold, y_manifold, mu_x, mu_y, fx, fy, Xc, Yc) = _prepare(
        X, Y, x_manifold, y_manifold, frechet_cfg
    )
    K = int(n_components)
    if not 1 <= K <= min(x_manifold.coord_dim, Xc.shape[0]):
        raise InvalidComponents(
            f"n_components={K} must lie in [1, {min(x_manifold.coord_dim, Xc.shape[0])}]"
        )
    scales = None
    if scale_y:
        scales = standardize_scales(Yc)
        Yc = Yc / scales
    pls = nipals_fit(Xc, Yc, K, tol=tol, max_iter=max_iter,
                     center=needs_centering(x_manifold, y_manifold))
    return assemble(x_manifold, y_manifold, mu_x, mu_y, pls, scales, fx, fy)


def rpls_transform(model, X_new):
    """Latent scores of new predictor samples."""
    coords = linearise(model.x_manifold, model.x_manifold.check(X_new), model.mu_x)
    return (coords - model.pls.x_means) @ x_rotations(model.pls)


def rpls_predict_coords(model, X_new):
    coords = linearise(model.x_manifold, model.x_manifold.check(X_new), model.mu_x)
    return pls_predict(model.beta, coords)


def rpls_predict(model, X_new):
    """Predict responses on the response manifold.

    Predictors are linearised at ``mu_x``, mapped through the coefficient
    matrix, and the resulting tangent coordinates at ``mu_y`` are pushed
    onto the response manifold with its exponential map.
    """
    return model.y_manifold.exp_coords(model.mu_y, rpls_predict_coords(model, X_new))


@dataclass
class SyntheticTruth:
    """Parameters used by :func:`generate_synthetic`.

    Loadings are stored as flat coordinates (columns) at ``mu_x``/``mu_y``.
    """

    mu_x: np.ndarray
    mu_y: np.ndarray
    x_loadings: np.ndarray
    y_loadings: np.ndarray
    x_scores: np.ndarray
    y_scores: np.ndarray
    inner_coef: np.ndarray


def _directions(rng, D, L):
    G = rng.standard_normal((D, L))
    if L <= D:
        Q, _ = np.linalg.qr(G)
        return Q
    return G / np.linalg.norm(G, axis=0)


def _base_point(manifold, rng):
    if isinstance(manifold, SPDManifold):
        return spd.random_spd(manifold.dim, rng, condition=4.0)
    return rng.standard_normal(manifold.dim)


def _add_noise(manifold, points, noise_scale, rng):
    E = noise_scale * rng.standard_normal((points.shape[0], manifold.coord_dim))
    if noise_scale == 0:
        return points
    if isinstance(manifold, EuclideanManifold):
        return points + E
    return np.stack([spd.exp_coords(P, e)[0] for P, e in zip(points, E)])


def generate_synthetic(x_manifold, y_manifold, n, n_latent, loading_scale=1.0,
                       noise_scale=0.0, seed=0):
    """Draw a dataset from the Riemannian PLS generative model.

    Scores of component ``l`` are Gaussian with standard deviation
    ``loading_scale / l`` and loadings are orthonormal in flat coordinates,
    so components are ordered by the covariance they carry.  Response
    scores follow the inner relation ``u_l = beta_l * t_l`` without
    intercept.  Noise is isotropic Gaussian in the isometric coordinates of
    the tangent space at each noiseless point, pushed through ``Exp``.

    Returns
    -------
    X : ndarray, shape (n, R, R) or (n, p)
    Y : ndarray, shape (n, R', R') or (n, q)
    truth : SyntheticTruth
    """
    L = int(n_latent)
    if int(n) < 1 or L < 1 or L > x_manifold.coord_dim:
        raise InvalidInput(f"need n >= 1 and 1 <= n_latent <= {x_manifold.coord_dim}")
    if loading_scale < 0 or noise_scale < 0:
        raise InvalidInput("scales must be non-negative")
    rng = np.random.default_rng(seed)
    mu_x = _base_point(x_manifold, rng)
    mu_y = _base_point(y_manifold, rng)
    Px = _directions(rng, x_manifold.coord_dim, L)
    Qy = _directions(rng, y_manifold.coord_dim, L)
    inner = rng.uniform(0.5, 1.5, L) * rng.choice([-1.0, 1.0], L)
    sds = loading_scale / np.arange(1, L + 1)
    T = rng.standard_normal((int(n), L)) * sds
    U = T * inner
    X = x_manifold.exp_coords(mu_x, T @ Px.T)
    Y = y_manifold.exp_coords(mu_y, U @ Qy.T)
    X = _add_noise(x_manifold, X, noise_scale, rng)
    Y = _add_noise(y_manifold, Y, noise_scale, rng)
    return X, Y, SyntheticTruth(mu_x, mu_y, Px, Qy, T, U, inner)
