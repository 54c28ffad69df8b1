"""FIR plant with a binary threshold sensor, plus regressor generation.

The plant is ``y = phi @ theta + d`` and the sensor reports only
``s = 1 if y <= C else 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AssumptionError, SequenceExhaustedError

# Relative tolerance below which the smallest Gram eigenvalue counts as zero.
PE_RTOL = 1e-10


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == ndim - 1 and ndim == 2:
        arr = arr.reshape(-1, 1)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FirConfig:
    """True plant and prior bounds.

    ``theta_bar`` is the radius of a Euclidean ball containing ``theta``; a box
    prior such as ``[-1, 1]^3`` should be passed as its enclosing-ball radius.
    """

    theta: np.ndarray
    threshold_c: float
    theta_bar: float
    phi_bar: float

    def __post_init__(self):
        theta = np.atleast_1d(np.array(self.theta, dtype=float))
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError(f"theta must be a non-empty vector, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        for name in ("threshold_c", "theta_bar", "phi_bar"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.theta_bar <= 0 or self.phi_bar <= 0:
            raise ValueError("theta_bar and phi_bar must be positive")
        norm = float(np.linalg.norm(theta))
        if norm > self.theta_bar:
            raise AssumptionError(
                "parameter-bound",
                f"||theta|| = {norm:.6g} exceeds the prior bound theta_bar = {self.theta_bar:.6g}",
            )

    @property
    def n(self) -> int:
        return self.theta.size

    @property
    def cutoff_m(self) -> float:
        """Saturation level ``phi_bar * theta_bar + 2`` used by the cut-off coefficient."""
        return self.phi_bar * self.theta_bar + 2.0


def observe(config: FirConfig, phi, noise_draw: float) -> tuple[float, int]:
    """Plant output and its binary observation for one regressor.

    Ties ``y == C`` report ``s = 1``.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (config.n,):
        raise ValueError(f"phi must have shape ({config.n},), got {phi.shape}")
    y = float(np.dot(phi, config.theta)) + noise_draw
    return y, int(y <= config.threshold_c)


@dataclass(frozen=True)
class InputGenerator:
    """Source of regressors ``phi_k``.

    Build one with :meth:`periodic`, :meth:`iid_uniform` or :meth:`explicit`.
    Every vector it can emit satisfies ``||phi|| <= phi_bar``.
    """

    mode: str
    vectors: np.ndarray | None = None
    lo: float = 0.0
    hi: float = 0.0
    n: int = 0
    phi_bar: float = field(default=0.0)

    @classmethod
    def periodic(cls, vectors, phi_bar: float | None = None) -> "InputGenerator":
        vecs = _frozen_array(vectors, 2, "vectors")
        return cls._with_bound("periodic", vecs, phi_bar)

    @classmethod
    def explicit(cls, sequence, phi_bar: float | None = None) -> "InputGenerator":
        vecs = _frozen_array(sequence, 2, "sequence")
        return cls._with_bound("explicit", vecs, phi_bar)

    @classmethod
    def iid_uniform(cls, lo: float, hi: float, n: int, phi_bar: float | None = None) -> "InputGenerator":
        if not lo < hi:
            raise ValueError(f"need lo < hi, got ({lo}, {hi})")
        if n < 1:
            raise ValueError("n must be >= 1")
        sup = math.sqrt(n) * max(abs(lo), abs(hi))
        if phi_bar is None:
            phi_bar = sup
        elif sup > phi_bar * (1 + 1e-12):
            raise AssumptionError(
                "input-bound", f"uniform box ({lo}, {hi})^{n} reaches norm {sup:.6g} > phi_bar = {phi_bar:.6g}"
            )
        return cls("iid_uniform", None, float(lo), float(hi), int(n), float(phi_bar))

    @classmethod
    def _with_bound(cls, mode, vecs, phi_bar):
        if vecs.shape[0] < 1:
            raise ValueError("need at least one regressor")
        largest = float(np.max(np.linalg.norm(vecs, axis=1)))
        if phi_bar is None:
            phi_bar = largest
        elif largest > phi_bar * (1 + 1e-12):
            raise AssumptionError(
                "input-bound", f"regressor norm {largest:.6g} exceeds phi_bar = {phi_bar:.6g}"
            )
        return cls(mode, vecs, n=vecs.shape[1], phi_bar=float(phi_bar))

    @property
    def dim(self) -> int:
        return self.n

    def generate(self, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Return the first ``count`` regressors as a ``(count, n)`` array."""
        if count < 1:
            raise ValueError("count must be >= 1")
        if self.mode == "periodic":
            idx = np.arange(count) % self.vectors.shape[0]
            return self.vectors[idx]
        if self.mode == "explicit":
            if count > self.vectors.shape[0]:
                raise SequenceExhaustedError(
                    f"explicit sequence holds {self.vectors.shape[0]} regressors, {count} requested"
                )
            return np.array(self.vectors[:count])
        if self.mode == "iid_uniform":
            if rng is None:
                raise ValueError("iid_uniform inputs need an rng")
            out = rng.uniform(self.lo, self.hi, size=(count, self.n))
            # open interval: redraw the (probability-zero) left endpoint
            bad = out == self.lo
            while np.any(bad):
                out[bad] = rng.uniform(self.lo, self.hi, size=int(bad.sum()))
                bad = out == self.lo
            return out
        raise ValueError(f"unknown input mode {self.mode!r}")


def generate_inputs(gen: InputGenerator, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
    return gen.generate(count, rng)


def check_persistent_excitation(inputs, window_n: int) -> float:
    """Excitation level delta^2 of a regressor sequence.

    Returns the smallest eigenvalue of ``(1/N) * sum(phi_i phi_i^T)`` over every
    window of ``N`` consecutive regressors. A positive value certifies
    persistent excitation with that ``delta^2``; values below ``PE_RTOL``
    relative to the largest eigenvalue are reported as 0.
    """
    phis = np.asarray(inputs, dtype=float)
    if phis.ndim == 1:
        phis = phis.reshape(-1, 1)
    if window_n < 1:
        raise ValueError("window_n must be >= 1")
    if window_n > phis.shape[0]:
        raise ValueError(f"window {window_n} longer than the sequence ({phis.shape[0]})")
    windows = np.lib.stride_tricks.sliding_window_view(phis, window_n, axis=0)  # (W, n, N)
    grams = windows @ np.swapaxes(windows, -1, -2) / window_n
    eig = np.linalg.eigvalsh(grams)
    lo, hi = eig[:, 0], eig[:, -1]
    lo = np.where(lo <= PE_RTOL * np.maximum(hi, 0.0), 0.0, lo)
    return float(lo.min())


def load_inputs_csv(path: str | Path) -> np.ndarray:
    """Read regressors from a CSV with header ``phi_1,...,phi_n``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        expected = [f"phi_{i}" for i in range(1, len(header) + 1)]
        if [h.strip() for h in header] != expected:
            raise ValueError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            rows.append([float(v) for v in row])
    if not rows:
        raise ValueError(f"{path}: no regressors")
    return np.array(rows)


def write_inputs_csv(path: str | Path, inputs: Sequence) -> None:
    phis = np.asarray(inputs, dtype=float)
    if phis.ndim == 1:
        phis = phis.reshape(-1, 1)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"phi_{i}" for i in range(1, phis.shape[1] + 1)])
        for row in phis:
            w.writerow([repr(float(v)) for v in row])
