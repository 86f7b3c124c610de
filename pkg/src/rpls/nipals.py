"""Euclidean partial least squares by NIPALS."""

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    DegenerateResponse,
    InvalidComponents,
    InvalidInput,
    NonConvergence,
    RankDeficiency,
)


@dataclass
class PlsFit:
    """Output of :func:`nipals_fit`.

    Columns of ``W, C, T, U, P, Q`` index components; ``B`` is the diagonal
    inner-relation matrix.  ``E`` and ``F`` are the deflated predictor and
    response blocks after the last component.  The inner-relation residual
    is not stored; it is ``U - T @ B``.
    """

    W: np.ndarray
    C: np.ndarray
    T: np.ndarray
    U: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    x_means: np.ndarray
    y_means: np.ndarray
    E: np.ndarray
    F: np.ndarray
    init_columns: list = field(default_factory=list)
    n_iter: list = field(default_factory=list)

    @property
    def n_components(self):
        return self.W.shape[1]

    def truncate(self, k):
        """The fit restricted to its first ``k`` components.

        NIPALS extracts components sequentially, so this equals a fresh
        ``k``-component fit on the same data.
        """
        if not 1 <= k <= self.n_components:
            raise InvalidComponents(f"cannot truncate {self.n_components} components to {k}")
        E = self.E + self.T[:, k:] @ self.P[:, k:].T
        F = self.F + (self.T[:, k:] * np.diag(self.B)[k:]) @ self.C[:, k:].T
        return replace(
            self,
            W=self.W[:, :k], C=self.C[:, :k], T=self.T[:, :k], U=self.U[:, :k],
            P=self.P[:, :k], Q=self.Q[:, :k], B=self.B[:k, :k], E=E, F=F,
            init_columns=self.init_columns[:k], n_iter=self.n_iter[:k],
        )


@dataclass
class BetaPls:
    """Regression coefficients with the centering needed to predict.

    ``y_scales`` multiplies centered predictions before the response means
    are added back; it is all ones unless the responses were standardized.
    """

    coef: np.ndarray
    x_means: np.ndarray
    y_means: np.ndarray
    y_scales: np.ndarray = None

    def __post_init__(self):
        if self.y_scales is None:
            self.y_scales = np.ones_like(self.y_means)


def _as_2d(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise InvalidInput(f"{name} must be a 2D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInput(f"{name} contains non-finite values")
    return M


def center_columns(M):
    """Subtract column means; returns ``(centered, means)``."""
    M = _as_2d(M, "M")
    if M.shape[0] < 1:
        raise InvalidInput("need at least one row")
    means = M.mean(axis=0)
    return M - means, means


def nipals_fit(X, Y, n_components, tol=1e-10, max_iter=500, center=True):
    """Fit a ``K``-component PLS model with the NIPALS algorithm.

    Parameters
    ----------
    X : array_like, shape (n, p)
    Y : array_like, shape (n, q) or (n,)
    n_components : int
        Number of latent components ``K``, ``1 <= K <= min(n, p)``.
    tol : float
        Inner loop stops when the relative change of the score vector drops
        below ``tol``.
    max_iter : int
        Inner-loop iteration cap per component.
    center : bool
        Column-center both blocks first and record the means.

    Returns
    -------
    PlsFit

    Raises
    ------
    InvalidComponents
        ``n_components`` out of range.
    DegenerateResponse
        A block is numerically zero when a component is extracted.
    NonConvergence
        The inner loop hit ``max_iter``; ``component`` holds the index.
    """
    X = _as_2d(X, "X")
    Y = _as_2d(Y, "Y")
    n, p = X.shape
    q = Y.shape[1]
    if Y.shape[0] != n:
        raise InvalidInput(f"X has {n} rows but Y has {Y.shape[0]}")
    K = int(n_components)
    if not 1 <= K <= min(n, p):
        raise InvalidComponents(f"n_components={K} must lie in [1, min(n, p)={min(n, p)}]")

    if center:
        Xk, x_means = center_columns(X)
        Yk, y_means = center_columns(Y)
    else:
        Xk, x_means = X.copy(), np.zeros(p)
        Yk, y_means = Y.copy(), np.zeros(q)

    eps = np.finfo(float).eps
    x_floor = eps * max(np.linalg.norm(Xk), 1.0) * 10
    y_floor = eps * max(np.linalg.norm(Yk), 1.0) * 10
    if np.linalg.norm(Yk) <= eps * 10:
        raise DegenerateResponse("response block has zero variance")

    W, C, P = np.zeros((p, K)), np.zeros((q, K)), np.zeros((p, K))
    T, U, Q = np.zeros((n, K)), np.zeros((n, K)), np.zeros((q, K))
    b = np.zeros(K)
    init_columns, n_iter = [], []

    for k in range(K):
        if np.linalg.norm(Xk) <= x_floor:
            raise DegenerateResponse(f"predictor block is exhausted at component {k + 1}")
        if np.linalg.norm(Yk) <= y_floor:
            raise DegenerateResponse(f"response block is exhausted at component {k + 1}")

        col = 0
        if np.linalg.norm(Yk[:, 0]) <= y_floor:
            col = int(np.argmax(Yk.var(axis=0)))
        init_columns.append(col)
        u = Yk[:, col].copy()

        t_old = None
        for it in range(1, max_iter + 1):
            w = Xk.T @ u / (u @ u)
            w_norm = np.linalg.norm(w)
            if w_norm <= eps:
                raise DegenerateResponse(f"predictor weights vanish at component {k + 1}")
            w /= w_norm
            t = Xk @ w
            tt = t @ t
            if tt <= x_floor**2:
                raise DegenerateResponse(f"predictor scores vanish at component {k + 1}")
            c = Yk.T @ t / tt
            c_norm = np.linalg.norm(c)
            if c_norm <= eps:
                raise DegenerateResponse(f"response weights vanish at component {k + 1}")
            c /= c_norm
            u = Yk @ c
            if t_old is not None and np.linalg.norm(t - t_old) < tol * np.linalg.norm(t_old):
                break
            t_old = t
        else:
            raise NonConvergence(
                f"inner loop did not converge within {max_iter} iterations "
                f"at component {k + 1}",
                component=k,
            )
        n_iter.append(it)

        # deterministic sign: largest-magnitude weight entry positive
        if w[np.argmax(np.abs(w))] < 0:
            w, t, c, u = -w, -t, -c, -u

        tt = t @ t
        P[:, k] = Xk.T @ t / tt
        Q[:, k] = Yk.T @ u / (u @ u)
        b[k] = (u @ t) / tt
        Xk = Xk - np.outer(t, P[:, k])
        Yk = Yk - b[k] * np.outer(t, c)
        W[:, k], C[:, k], T[:, k], U[:, k] = w, c, t, u

    return PlsFit(
        W=W, C=C, T=T, U=U, P=P, Q=Q, B=np.diag(b),
        x_means=x_means, y_means=y_means, E=Xk, F=Yk,
        init_columns=init_columns, n_iter=n_iter,
    )


def x_rotations(fit):
    """``W (P^T W)^{-1}``: maps centered predictors straight to scores."""
    PtW = fit.P.T @ fit.W
    if np.linalg.cond(PtW) > 1.0 / np.finfo(float).eps:
        raise RankDeficiency("P^T W is singular")
    return fit.W @ np.linalg.inv(PtW)


def beta_pls(fit, y_scales=None):
    """Regression coefficients ``W (P^T W)^{-1} B C^T`` of a NIPALS fit."""
    coef = x_rotations(fit) @ fit.B @ fit.C.T
    return BetaPls(coef=coef, x_means=fit.x_means, y_means=fit.y_means, y_scales=y_scales)


def pls_predict(beta, X_new):
    """Predict responses for new predictor rows."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    X_new = _as_2d(X_new, "X_new")
    if X_new.shape[1] != beta.coef.shape[0]:
        raise InvalidInput(
            f"X_new has {X_new.shape[1]} columns, model expects {beta.coef.shape[0]}"
        )
    return (X_new - beta.x_means) @ beta.coef * beta.y_scales + beta.y_means
