"""Manifolds supported as predictor or response spaces.

Each manifold knows how to average samples, linearise them into flat
coordinates at a base point, and map coordinates back onto the manifold.
"""

import numpy as np

from . import spd
from .exceptions import InvalidInput
from .frechet import FrechetConfig, frechet_mean


class SPDManifold:
    """``R x R`` SPD matrices with the affine-invariant metric."""

    kind = "spd"

    def __init__(self, dim):
        if int(dim) < 1:
            raise InvalidInput("SPD dimension must be positive")
        self.dim = int(dim)

    @property
    def coord_dim(self):
        return spd.vec_dim(self.dim)

    def __eq__(self, other):
        return type(other) is type(self) and other.dim == self.dim

    def __repr__(self):
        return f"SPDManifold({self.dim})"

    def check(self, samples):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 2:
            samples = samples[None]
        if samples.ndim != 3 or samples.shape[1:] != (self.dim, self.dim):
            raise InvalidInput(
                f"expected samples of shape (n, {self.dim}, {self.dim}), got {samples.shape}"
            )
        return samples

    def mean(self, samples, cfg=None):
        res = frechet_mean(list(self.check(samples)), cfg or FrechetConfig())
        return res.mean, res

    def linearise(self, samples, base):
        return spd.log_coords(base, self.check(samples))

    def exp_coords(self, base, coords):
        return spd.exp_coords(base, coords)

    def tangent(self, base, coords):
        """Tangent matrices at ``base`` for each column of ``coords``."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        return np.stack([spd.unvec_at(base, c).matrix for c in coords.T])

    def coordinate_labels(self):
        return spd.coordinate_pairs(self.dim)

    def diagonal_mask(self):
        return np.arange(self.coord_dim) < self.dim


class EuclideanManifold:
    """Flat ``R^p``; the exponential map is vector addition."""

    kind = "euclidean"

    def __init__(self, dim):
        if int(dim) < 1:
            raise InvalidInput("Euclidean dimension must be positive")
        self.dim = int(dim)

    @property
    def coord_dim(self):
        return self.dim

    def __eq__(self, other):
        return type(other) is type(self) and other.dim == self.dim

    def __repr__(self):
        return f"EuclideanManifold({self.dim})"

    def check(self, samples):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None] if self.dim == 1 else samples[None]
        if samples.ndim != 2 or samples.shape[1] != self.dim:
            raise InvalidInput(f"expected samples of shape (n, {self.dim}), got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInput("samples contain non-finite values")
        return samples

    def mean(self, samples, cfg=None):
        return self.check(samples).mean(axis=0), None

    def linearise(self, samples, base):
        return self.check(samples) - base

    def exp_coords(self, base, coords):
        return base + np.atleast_2d(coords)

    def tangent(self, base, coords):
        return np.atleast_2d(np.asarray(coords, dtype=float)).T

    def coordinate_labels(self):
        return [(j,) for j in range(self.dim)]

    def diagonal_mask(self):
        return np.zeros(self.dim, dtype=bool)


def make_manifold(kind, dim):
    if kind == "spd":
        return SPDManifold(dim)
    if kind == "euclidean":
        return EuclideanManifold(dim)
    raise InvalidInput(f"unknown manifold kind {kind!r}")


def infer_manifold(samples, kind=None):
    """Pick a manifold from array shape: 3D stacks are SPD, 2D tables Euclidean."""
    samples = np.asarray(samples, dtype=float)
    if kind is None:
        kind = "spd" if samples.ndim == 3 else "euclidean"
    if kind == "spd":
        if samples.ndim != 3:
            raise InvalidInput(f"SPD samples must have shape (n, R, R), got {samples.shape}")
        return SPDManifold(samples.shape[-1])
    if samples.ndim == 1:
        return EuclideanManifold(1)
    if samples.ndim != 2:
        raise InvalidInput(f"Euclidean samples must have shape (n, p), got {samples.shape}")
    return make_manifold(kind, samples.shape[1])
