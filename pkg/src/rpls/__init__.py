"""Riemannian partial least squares for SPD-matrix predictors."""

from .estimator import ConnectivityFeatures, RiemannianPLS
from .exceptions import (
    BaseMismatch,
    DegenerateModel,
    DegenerateResponse,
    EmptyInput,
    InvalidComponents,
    InvalidInput,
    NonConvergence,
    NotPositiveDefinite,
    RplsError,
)
from .frechet import FrechetConfig, FrechetResult, frechet_mean, frechet_variance
from .inference import VipReport, fdr_adjust, permutation_test, vip_inference, vip_scores
from .manifolds import EuclideanManifold, SPDManifold
from .model import RplsModel, generate_synthetic, rpls_predict, tnipals_fit
from .model_selection import CvResult, cross_validate, kfold_split
from .nipals import BetaPls, PlsFit, beta_pls, nipals_fit, pls_predict

__version__ = "0.1.0"
