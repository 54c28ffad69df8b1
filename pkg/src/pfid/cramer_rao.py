"""Cramér-Rao lower bound for binary threshold observations.

A single observation ``s = 1{phi @ theta + d <= C}`` is Bernoulli with
``p = F(C - phi @ theta)``; its Fisher information about ``theta`` is
``f^2 / (F (1 - F)) * phi phi^T``. Accumulating it over the input sequence
and inverting gives the bound ``Delta_k``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateInformationError, ExcitationError
from .noise import NoiseModel
from .system import FirConfig

# Smallest eigenvalue / largest below which the information is treated as singular.
SINGULAR_RTOL = 1e-12
RESIDUAL_TOL = 1e-10


def _info_weight(x, noise: NoiseModel):
    big_f = noise._cdf(x)
    small_f = noise._pdf(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return big_f, small_f * small_f / (big_f * (1.0 - big_f))


def fisher_info_sample(config: FirConfig, phi, noise: NoiseModel) -> np.ndarray:
    """Fisher information of one observation taken with regressor ``phi``."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    x = config.threshold_c - float(np.dot(phi, config.theta))
    big_f, w = _info_weight(x, noise)
    if not 0.0 < big_f < 1.0:
        raise DegenerateInformationError(f"F(C - phi'theta) = {big_f!r} at argument {x:.6g}")
    return w * np.outer(phi, phi)


def fisher_oracle_bruteforce(config: FirConfig, phi, noise: NoiseModel, h: float = 1e-5) -> np.ndarray:
    """Fisher information by enumerating both outcomes and differencing numerically.

    ``I = sum_s grad(p_s) grad(p_s)^T / p_s`` where ``p_1 = F(C - phi'theta)``,
    ``p_0 = 1 - p_1`` and each gradient is a central difference in ``theta``.
    Independent of :func:`fisher_info_sample`: no closed-form derivative is used.
    """
    if not 1e-6 <= h <= 1e-4:
        raise ValueError("h must lie in [1e-6, 1e-4]")
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    theta = config.theta
    c = config.threshold_c

    def probs(t):
        p1 = noise.cdf(c - float(np.dot(phi, t)))
        return (1.0 - p1, p1)

    p_at = probs(theta)
    if not 0.0 < p_at[1] < 1.0:
        raise DegenerateInformationError(f"outcome probability {p_at[1]!r} is degenerate")
    n = theta.size
    grads = np.zeros((2, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        up, down = probs(theta + e), probs(theta - e)
        for outcome in (0, 1):
            grads[outcome, j] = (up[outcome] - down[outcome]) / (2.0 * h)
    info = np.zeros((n, n))
    for outcome in (0, 1):
        g = grads[outcome]
        info += np.outer(g, g) / p_at[outcome]
    return info


@dataclass
class CrBoundSeq:
    """Bound matrices at selected step indices.

    ``deltas[i]`` is ``Delta_{ks[i]}`` or all-NaN where the accumulated
    information is still singular (``invertible[i]`` is False). ``k0`` is the
    first step at which the information became invertible.
    """

    ks: np.ndarray
    deltas: np.ndarray
    invertible: np.ndarray
    info_accum: np.ndarray
    k0: int

    @property
    def traces(self) -> np.ndarray:
        return np.trace(self.deltas, axis1=-2, axis2=-1)

    def to_csv(self, path: str | Path) -> None:
        """Write ``k, trace_delta, delta_11, delta_12, ...`` rows (row-major)."""
        n = self.info_accum.shape[0]
        cols = [f"delta_{i + 1}{j + 1}" if n < 10 else f"delta_{i + 1}_{j + 1}" for i in range(n) for j in range(n)]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "trace_delta", *cols])
            for k, d in zip(self.ks, self.deltas):
                w.writerow([int(k), repr(float(np.trace(d))), *(repr(float(v)) for v in d.ravel())])


def _invert_spd(a: np.ndarray) -> np.ndarray | None:
    eig = np.linalg.eigvalsh(a)
    if not eig[-1] > 0 or eig[0] <= SINGULAR_RTOL * eig[-1]:
        return None
    n = a.shape[0]
    inv = cho_solve(cho_factor(a, lower=True), np.eye(n))
    inv = 0.5 * (inv + inv.T)
    residual = np.max(np.abs(a @ inv - np.eye(n)))
    if residual > RESIDUAL_TOL * max(1.0, float(np.max(np.abs(a)) * np.max(np.abs(inv)))):
        return None
    return inv


def cr_bound_sequence(
    config: FirConfig,
    inputs,
    noise: NoiseModel,
    ks: Iterable[int] | None = None,
    chunk: int = 8192,
) -> CrBoundSeq:
    """Cramér-Rao bounds along an input sequence, evaluated at the true ``theta``.

    ``ks`` selects the 1-based step indices to report (default: every step).
    Raises :class:`ExcitationError` if the information never becomes invertible.
    """
    phis = np.asarray(inputs, dtype=float)
    if phis.ndim == 1:
        phis = phis.reshape(-1, 1)
    total, n = phis.shape
    if n != config.n:
        raise ValueError(f"inputs have dimension {n}, config has {config.n}")
    ks = np.arange(1, total + 1) if ks is None else np.asarray(sorted(set(int(k) for k in ks)))
    if ks.size and (ks[0] < 1 or ks[-1] > total):
        raise ValueError(f"requested steps must lie in [1, {total}]")

    wanted = np.zeros(total + 1, dtype=bool)
    wanted[ks] = True
    deltas = np.full((ks.size, n, n), np.nan)
    invertible = np.zeros(ks.size, dtype=bool)
    acc = np.zeros((n, n))
    k0 = 0
    out = 0
    for start in range(0, total, chunk):
        block = phis[start:start + chunk]
        x = config.threshold_c - block @ config.theta
        big_f, w = _info_weight(x, noise)
        if np.any(~((big_f > 0) & (big_f < 1))):
            raise DegenerateInformationError("an observation probability is numerically 0 or 1")
        terms = w[:, None, None] * (block[:, :, None] * block[:, None, :])
        running = acc + np.cumsum(terms, axis=0)
        for i in range(block.shape[0]):
            k = start + i + 1
            if not wanted[k] and k0:
                continue
            inv = _invert_spd(running[i])
            if inv is not None and not k0:
                k0 = k
            if wanted[k]:
                if inv is not None:
                    deltas[out] = inv
                    invertible[out] = True
                out += 1
        acc = running[-1]
    if not k0:
        raise ExcitationError("accumulated Fisher information never became invertible; inputs lack excitation")
    return CrBoundSeq(ks, deltas, invertible, acc, k0)
