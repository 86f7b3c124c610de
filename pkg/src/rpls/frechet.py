"""Fréchet (Karcher) mean of SPD matrices by Riemannian gradient descent."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import spd
from .exceptions import EmptyInput, InvalidInput


@dataclass(frozen=True)
class FrechetConfig:
    """Stopping rule and step size for :func:`frechet_mean`.

    ``tolerance`` bounds the Riemannian norm of the mean logarithm at the
    returned point; ``step`` is the initial step size, halved whenever a
    proposed step is longer than the previously accepted one.
    """

    tolerance: float = 1e-6
    step: float = 1.0
    max_iterations: int = 200

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InvalidInput("tolerance must be positive")
        if not 0 < self.step <= 2:
            raise InvalidInput("step must lie in (0, 2]")
        if self.max_iterations < 1:
            raise InvalidInput("max_iterations must be at least 1")


@dataclass
class FrechetResult:
    mean: np.ndarray
    final_gradient_norm: float
    iterations: int
    converged: bool
    objective_history: list = field(default_factory=list)


def _stack(samples):
    if len(samples) == 0:
        raise EmptyInput("cannot average an empty sample")
    mats = [spd.check_spd(S, f"sample {i}") for i, S in enumerate(samples)]
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise InvalidInput(f"samples have differing shapes {sorted(shapes)}")
    return np.stack(mats)


def _whitened_logs(mu, Y):
    sq, isq = spd._roots(mu)
    return sq, spd.mat_fn(isq @ Y @ isq, "log")


def frechet_mean(samples, cfg=None):
    """Fréchet mean of SPD matrices under the affine-invariant metric.

    Gradient descent started at the first sample.  Each iteration proposes
    the step ``v = (step / n) * sum_i Log_mu(y_i)``.  A proposal whose norm
    exceeds the previously accepted step norm is rejected and the step size
    halved; otherwise ``mu <- Exp_mu(v)``.  Iteration stops once the norm of
    the mean logarithm (half the Riemannian gradient of the mean squared
    distance) is at most ``cfg.tolerance``.

    Parameters
    ----------
    samples : sequence of ndarray, shape (R, R)
        SPD matrices.
    cfg : FrechetConfig, optional

    Returns
    -------
    FrechetResult
        ``converged`` is False when ``max_iterations`` ran out; the last
        iterate is still returned.
    """
    cfg = cfg or FrechetConfig()
    Y = _stack(samples)
    mu = Y[0]
    tau = cfg.step
    last_step = math.inf
    iterations = 0

    sq, logs = _whitened_logs(mu, Y)
    history = [float(np.mean(np.sum(logs**2, axis=(-2, -1))))]
    while True:
        g = logs.mean(axis=0)
        # in whitened coordinates the metric at mu is the Frobenius inner product
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.tolerance:
            return FrechetResult(mu, gnorm, iterations, True, history)
        if iterations >= cfg.max_iterations:
            return FrechetResult(mu, gnorm, iterations, False, history)
        iterations += 1
        step_norm = tau * gnorm
        if step_norm > last_step:
            tau /= 2
            continue
        mu = spd.symmetrize(sq @ spd.mat_fn(tau * g, "exp") @ sq)
        last_step = step_norm
        sq, logs = _whitened_logs(mu, Y)
        history.append(float(np.mean(np.sum(logs**2, axis=(-2, -1)))))


def frechet_variance(samples, mean):
    """Mean squared Riemannian distance from ``samples`` to ``mean``."""
    Y = _stack(samples)
    mean = spd.check_spd(mean, "mean")
    if mean.shape != Y.shape[1:]:
        raise InvalidInput(f"mean shape {mean.shape} does not match samples {Y.shape[1:]}")
    return float(np.mean([spd.distance(mean, y) ** 2 for y in Y]))


def mean_log_norm(samples, mean):
    """Riemannian norm at ``mean`` of ``(1/n) sum_i Log_mean(y_i)``."""
    Y = _stack(samples)
    _, logs = _whitened_logs(spd.check_spd(mean, "mean"), Y)
    return float(np.linalg.norm(logs.mean(axis=0)))
