"""Recursive identification from binary observations.

Three estimators share the same one-step shape ``(state, phi, s) -> state``:

* RPFI: scalar-gain recursion with a cut-off coefficient ``z`` and an
  accelerated coefficient ``gamma`` instead of a projection.
* IMPF: the same cut-off/acceleration with adaptive weights and a matrix gain
  ``P`` updated by a rank-one downdate; asymptotically efficient.
* Projection baseline: the classical scalar-gain recursion followed by a
  projection onto the prior ball.

The ``*_kernel`` functions hold the arithmetic. They broadcast over any
leading batch axes of ``theta_hat`` (and ``p_hat``), so the Monte-Carlo
harness advances many independent runs with exactly the same floating-point
operations as the single-run API below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .errors import InfeasibleRateError, StateCorruptionError
from .noise import NoiseModel
from .system import FirConfig

Schedule = Union[float, Callable[[int], float]]

DEFAULT_EPS = 1e-12


def cutoff(v, m: float):
    """Saturate ``v`` into ``[-m, m]``."""
    out = np.clip(v, -m, m)
    return float(out) if np.ndim(out) == 0 else out


def accel(v, m: float):
    """1 inside the band ``|v| <= m``, ``|v|`` outside it."""
    a = np.abs(v)
    out = np.where(a <= m, 1.0, a)
    return float(out) if np.ndim(out) == 0 else out


def project_ball(theta, radius: float):
    """Euclidean projection onto the ball of the given radius (row-wise)."""
    theta = np.asarray(theta, dtype=float)
    norm = np.sqrt(np.sum(theta * theta, axis=-1))
    scale = np.where(norm > radius, radius / np.where(norm > 0, norm, 1.0), 1.0)
    return theta * scale[..., None]


# --------------------------------------------------------------------------
# array kernels
# --------------------------------------------------------------------------


def rpfi_kernel(theta_hat, r_prev, phi, s, alpha, beta, m, c, noise: NoiseModel):
    """One RPFI update. Returns ``(theta_hat, r, z, gamma, innovation)``."""
    r = r_prev + beta * float(np.dot(phi, phi))
    v = np.sum(theta_hat * phi, axis=-1)
    z = np.clip(v, -m, m)
    a = np.abs(v)
    gamma = np.where(a <= m, 1.0, a)
    innov = noise._cdf(c - z) - s
    gain = gamma * alpha / r * innov
    return theta_hat + gain[..., None] * phi, r, z, gamma, innov


def baseline_kernel(theta_hat, r_prev, phi, s, alpha, beta, radius, c, noise: NoiseModel):
    """Unclamped scalar-gain update followed by projection onto the prior ball."""
    r = r_prev + beta * float(np.dot(phi, phi))
    v = np.sum(theta_hat * phi, axis=-1)
    innov = noise._cdf(c - v) - s
    gain = alpha / r * innov
    return project_ball(theta_hat + gain[..., None] * phi, radius), r


def impf_kernel(theta_hat, p_hat, phi, s, m, c, noise: NoiseModel, eps=DEFAULT_EPS):
    """One IMPF update.

    ``P`` is downdated first because the estimate update consumes the new
    ``P``. Returns ``(theta_hat, p_hat, z, gamma, innovation, alpha_hat,
    beta_hat)``.
    """
    v = np.sum(theta_hat * phi, axis=-1)
    z = np.clip(v, -m, m)
    a = np.abs(v)
    gamma = np.where(a <= m, 1.0, a)
    x = c - z
    big_f = np.clip(noise._cdf(x), eps, 1.0 - eps)
    small_f = noise._pdf(x)
    w = big_f * (1.0 - big_f)
    alpha_hat = small_f / w
    beta_hat = small_f * small_f / w

    p_phi = np.sum(p_hat * phi, axis=-1)
    denom = 1.0 + beta_hat * np.sum(phi * p_phi, axis=-1)
    p_new = p_hat - (beta_hat / denom)[..., None, None] * (p_phi[..., :, None] * p_phi[..., None, :])
    p_new = 0.5 * (p_new + np.swapaxes(p_new, -1, -2))

    innov = big_f - s
    step = gamma * alpha_hat * innov
    theta_new = theta_hat + np.sum(p_new * phi, axis=-1) * step[..., None]
    return theta_new, p_new, z, gamma, innov, alpha_hat, beta_hat


# --------------------------------------------------------------------------
# single-run state machines
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    z: float
    gamma: float
    innovation: float
    estimate_after: np.ndarray


def _value(schedule: Schedule, k: int) -> float:
    return float(schedule(k)) if callable(schedule) else float(schedule)


def _as_vector(x) -> np.ndarray:
    return np.atleast_1d(np.array(x, dtype=float))


def _check_step_args(theta_hat: np.ndarray, phi, s) -> np.ndarray:
    phi = np.asarray(phi, dtype=float).reshape(-1) if np.ndim(phi) == 0 else np.asarray(phi, dtype=float)
    if phi.shape != theta_hat.shape:
        raise ValueError(f"phi must have shape {theta_hat.shape}, got {phi.shape}")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"observation must lie in [0, 1], got {s}")
    return phi


@dataclass(frozen=True)
class RpfiState:
    """RPFI estimate, gain accumulator ``r`` and step schedules.

    ``alpha`` and ``beta`` are constants or callables of the step index
    ``k >= 1``. ``r`` starts at 1 and accumulates ``beta_k * ||phi_k||^2``.
    """

    theta_hat: np.ndarray
    r: float = 1.0
    k: int = 0
    alpha: Schedule = 1.0
    beta: Schedule = 1.0
    cutoff_m: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "theta_hat", _as_vector(self.theta_hat))
        if not self.r >= 1.0:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if not self.cutoff_m > 0:
            raise ValueError("cutoff_m must be positive")


def rpfi_step(state: RpfiState, phi, s: float, noise: NoiseModel, c: float) -> tuple[RpfiState, StepRecord]:
    """Advance RPFI by one observation.

    ``r`` is updated first, ``z`` and ``gamma`` come from the previous
    estimate, then ``theta_hat += gamma * alpha / r * phi * (F(C - z) - s)``.
    """
    phi = _check_step_args(state.theta_hat, phi, s)
    k = state.k + 1
    theta, r, z, gamma, innov = rpfi_kernel(
        state.theta_hat, state.r, phi, s, _value(state.alpha, k), _value(state.beta, k),
        state.cutoff_m, c, noise,
    )
    new = replace(state, theta_hat=theta, r=r, k=k)
    return new, StepRecord(float(z), float(gamma), float(innov), theta)


def projection_baseline_step(state: RpfiState, phi, s: float, noise: NoiseModel, c: float, radius: float) -> RpfiState:
    """Classical projected recursion: no cut-off, no acceleration, then ball projection."""
    phi = _check_step_args(state.theta_hat, phi, s)
    if not radius > 0:
        raise ValueError("radius must be positive")
    k = state.k + 1
    theta, r = baseline_kernel(
        state.theta_hat, state.r, phi, s, _value(state.alpha, k), _value(state.beta, k), radius, c, noise
    )
    return replace(state, theta_hat=theta, r=r, k=k)


@dataclass(frozen=True)
class ImpfState:
    """IMPF estimate and matrix gain ``p_hat`` (symmetric positive definite)."""

    theta_hat: np.ndarray
    p_hat: np.ndarray
    k: int = 0
    cutoff_m: float = math.inf
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        theta = _as_vector(self.theta_hat)
        p = np.array(self.p_hat, dtype=float)
        if p.ndim == 0:
            p = p * np.eye(theta.size)
        if p.shape != (theta.size, theta.size):
            raise ValueError(f"p_hat must be {theta.size}x{theta.size}, got {p.shape}")
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "p_hat", p)
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 0.5)")

    @classmethod
    def initial(cls, theta0, p0=1.0, cutoff_m: float = math.inf, eps: float = DEFAULT_EPS) -> "ImpfState":
        theta0 = _as_vector(theta0)
        p = np.array(p0, dtype=float)
        if p.ndim == 0:
            p = float(p0) * np.eye(theta0.size)
        return cls(theta0, p, 0, cutoff_m, eps)


def check_positive_definite(p_hat: np.ndarray) -> None:
    if not np.all(np.isfinite(p_hat)):
        raise StateCorruptionError("P contains non-finite entries")
    try:
        np.linalg.cholesky(p_hat)
    except np.linalg.LinAlgError:
        raise StateCorruptionError("P is not positive definite") from None


def impf_step(state: ImpfState, phi, s: float, noise: NoiseModel, c: float, check: bool = True) -> tuple[ImpfState, StepRecord]:
    """Advance IMPF by one observation.

    With ``check=True`` the incoming ``P`` is verified positive definite by a
    Cholesky factorisation (O(n^3)); pass ``check=False`` in timing loops.
    """
    phi = _check_step_args(state.theta_hat, phi, s)
    if check:
        check_positive_definite(state.p_hat)
    theta, p, z, gamma, innov, _, _ = impf_kernel(
        state.theta_hat, state.p_hat, phi, s, state.cutoff_m, c, noise, state.eps
    )
    new = replace(state, theta_hat=theta, p_hat=p, k=state.k + 1)
    return new, StepRecord(float(z), float(gamma), float(innov), theta)


def suggest_alpha_for_rate(
    config: FirConfig,
    noise: NoiseModel,
    delta_sq: float,
    beta_bar: float,
    margin: float = 0.05,
    alpha_min: float = 1e-8,
) -> float:
    """Smallest constant alpha meeting the sufficient O(1/k) condition, plus a margin.

    The condition is ``2 * alpha * f_min * delta_sq / (1 + beta_bar * phi_bar^2) > 1``
    with ``f_min`` the least noise density on ``[C - M, C + M]``. Because
    ``f_min`` is a worst case over the whole band it is usually tiny, and the
    returned alpha can be far too large for practical use; see the README.
    """
    if not delta_sq > 0:
        raise ValueError("delta_sq must be positive")
    if not beta_bar > 0:
        raise ValueError("beta_bar must be positive")
    m = config.cutoff_m
    c = config.threshold_c
    f_min = noise.pdf_min_on_interval(c - m, c + m)
    if not f_min > 0:
        raise InfeasibleRateError(
            f"noise density underflows on [C - M, C + M] = [{c - m:.6g}, {c + m:.6g}] "
            f"(M = {m:.6g}, sigma = {noise.sigma:.6g}); M is too large relative to sigma"
        )
    alpha = (1.0 + margin) * (1.0 + beta_bar * config.phi_bar**2) / (2.0 * f_min * delta_sq)
    if not math.isfinite(alpha):
        raise InfeasibleRateError(f"required alpha overflows (f_min = {f_min:.3g})")
    return max(alpha, alpha_min)


# --------------------------------------------------------------------------
# checkpoint format
# --------------------------------------------------------------------------


def _num_or_none(x: float):
    return None if math.isinf(x) else float(x)


def state_to_json(state: RpfiState | ImpfState) -> dict:
    """Serialise a state to a JSON-compatible dict (``P`` row-major, inf as null)."""
    if isinstance(state, RpfiState):
        if callable(state.alpha) or callable(state.beta):
            raise TypeError("only constant step schedules can be serialised")
        return {
            "estimator": "rpfi",
            "k": state.k,
            "theta_hat": [float(v) for v in state.theta_hat],
            "r": float(state.r),
            "alpha": float(state.alpha),
            "beta": float(state.beta),
            "cutoff_m": _num_or_none(state.cutoff_m),
        }
    if isinstance(state, ImpfState):
        return {
            "estimator": "impf",
            "k": state.k,
            "theta_hat": [float(v) for v in state.theta_hat],
            "p_hat": [float(v) for v in state.p_hat.ravel()],
            "cutoff_m": _num_or_none(state.cutoff_m),
            "eps": state.eps,
        }
    raise TypeError(f"cannot serialise {type(state).__name__}")


def state_from_json(obj: dict) -> RpfiState | ImpfState:
    m = obj.get("cutoff_m")
    m = math.inf if m is None else float(m)
    theta = np.array(obj["theta_hat"], dtype=float)
    if obj["estimator"] == "rpfi":
        return RpfiState(theta, float(obj["r"]), int(obj["k"]), float(obj["alpha"]), float(obj["beta"]), m)
    if obj["estimator"] == "impf":
        n = theta.size
        p = np.array(obj["p_hat"], dtype=float).reshape(n, n)
        return ImpfState(theta, p, int(obj["k"]), m, float(obj.get("eps", DEFAULT_EPS)))
    raise ValueError(f"unknown estimator {obj['estimator']!r}")
