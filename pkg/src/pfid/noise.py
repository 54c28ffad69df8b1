"""Noise laws for the observation channel.

Only the Gaussian law ships. The model is symmetric and zero-mean, so
``cdf(-x) == 1 - cdf(x)`` and ``pdf`` is even; unimodality is what lets
:meth:`NoiseModel.pdf_min_on_interval` look only at the interval endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DomainError

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

KINDS = ("gaussian",)


def _check_finite(x) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError(f"argument must be finite, got {x!r}")


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean symmetric noise with standard deviation ``sigma``.

    Immutable, so one instance can be shared by any number of concurrent runs.
    """

    sigma: float = 1.0
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unsupported noise kind {self.kind!r}; expected one of {KINDS}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    # Unchecked evaluations used inside the estimator kernels. Arguments there
    # are already clipped to [C - M, C + M] or are allowed to propagate NaN.
    def _cdf(self, x):
        return ndtr(np.divide(x, self.sigma))

    def _pdf(self, x):
        u = np.divide(x, self.sigma)
        return np.exp(-0.5 * u * u) * (_INV_SQRT_2PI / self.sigma)

    def cdf(self, x):
        """Distribution function F(x); accepts scalars or arrays."""
        _check_finite(x)
        out = self._cdf(x)
        return float(out) if np.ndim(out) == 0 else out

    def pdf(self, x):
        """Density f(x); accepts scalars or arrays."""
        _check_finite(x)
        out = self._pdf(x)
        return float(out) if np.ndim(out) == 0 else out

    def pdf_min_on_interval(self, a: float, b: float) -> float:
        """Minimum of the density over ``[a, b]``.

        For a unimodal law centred at zero the minimum sits at whichever
        endpoint is farther from the origin.
        """
        _check_finite(a)
        _check_finite(b)
        if a > b:
            raise ValueError(f"empty interval: a={a} > b={b}")
        return min(self.pdf(a), self.pdf(b))

    def sample(self, rng: np.random.Generator, size=None):
        """Draw i.i.d. noise values from ``rng``.

        Drawing ``size=k`` consumes the stream exactly like ``k`` scalar draws,
        so block generation and step-by-step generation agree.
        """
        draws = rng.standard_normal(size)
        return self.sigma * draws


def cdf(model: NoiseModel, x):
    return model.cdf(x)


def pdf(model: NoiseModel, x):
    return model.pdf(x)


def pdf_min_on_interval(model: NoiseModel, a: float, b: float) -> float:
    return model.pdf_min_on_interval(a, b)


def sample(model: NoiseModel, rng: np.random.Generator, size=None):
    return model.sample(rng, size)
