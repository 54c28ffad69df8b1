"""Monte-Carlo experiment engine.

Runs are independent: run ``i`` draws its noise from a generator seeded with
``derive_seed(base_seed, i)``, and all runs share one input sequence drawn from
the stream ``derive_seed(base_seed, INPUT_STREAM)``. A batch of runs is
advanced together by the broadcasting kernels in :mod:`pfid.estimators`, and
every floating-point operation is row-wise, so a run's trajectory does not
depend on which batch or worker process it lands in. Aggregation uses
``math.fsum`` (exactly rounded), so summaries are identical for any worker
count.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .cramer_rao import cr_bound_sequence
from .errors import RateFitError, StateCorruptionError
from .estimators import (
    DEFAULT_EPS,
    ImpfState,
    RpfiState,
    baseline_kernel,
    impf_kernel,
    impf_step,
    projection_baseline_step,
    rpfi_kernel,
    rpfi_step,
    suggest_alpha_for_rate,
)
from .noise import NoiseModel
from .system import FirConfig, InputGenerator, check_persistent_excitation

ESTIMATORS = ("rpfi", "impf", "projection_baseline")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
INPUT_STREAM = -1
NOISE_BLOCK = 4096
MAX_BATCH = 1024


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, run_index: int) -> int:
    """64-bit seed for stream ``run_index`` of experiment ``base``.

    SplitMix64 finaliser applied to ``mix(base) + (run_index + 1) * golden``
    (mod 2**64). The finaliser is a bijection and the golden ratio constant is
    odd, so the map is injective in ``run_index`` for a fixed base. Index -1 is
    reserved for the shared input stream.
    """
    return _mix64((_mix64(base & _MASK64) + ((run_index + 1) * _GOLDEN)) & _MASK64)


@dataclass(frozen=True)
class EstimatorSettings:
    """Which estimator to run and its tuning.

    ``alpha``/``beta`` are the constant step coefficients of RPFI and of the
    projection baseline. ``alpha=None`` for RPFI means "use
    :func:`suggest_alpha_for_rate`". ``p0`` scales the identity used as the
    initial IMPF gain.
    """

    kind: str
    theta0: tuple
    alpha: float | None = None
    beta: float = 1.0
    r0: float = 1.0
    p0: float = 1.0
    eps: float = DEFAULT_EPS
    radius: float | None = None
    cutoff_m: float | None = None

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.kind!r}; expected one of {ESTIMATORS}")
        object.__setattr__(self, "theta0", tuple(float(v) for v in np.atleast_1d(self.theta0)))
        if self.kind == "projection_baseline" and self.alpha is None:
            raise ValueError("projection_baseline needs an explicit alpha")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta > 0 or not self.r0 >= 1 or not self.p0 > 0:
            raise ValueError("need beta > 0, r0 >= 1, p0 > 0")


@dataclass(frozen=True)
class ExperimentSpec:
    system: FirConfig
    inputs: InputGenerator
    estimator: EstimatorSettings
    noise: NoiseModel = NoiseModel()
    horizon: int = 1000
    runs: int = 1
    base_seed: int = 0
    record_stride: int = 1
    pe_window: int | None = None

    def __post_init__(self):
        if self.horizon < 1 or self.runs < 1 or self.record_stride < 1:
            raise ValueError("horizon, runs and record_stride must all be >= 1")
        if self.inputs.dim != self.system.n:
            raise ValueError(f"inputs have dimension {self.inputs.dim}, system has {self.system.n}")
        if len(self.estimator.theta0) != self.system.n:
            raise ValueError("initial estimate has the wrong dimension")

    @property
    def cutoff_m(self) -> float:
        m = self.estimator.cutoff_m
        return self.system.cutoff_m if m is None else m

    @property
    def radius(self) -> float:
        r = self.estimator.radius
        return self.system.theta_bar if r is None else r

    def input_sequence(self) -> np.ndarray:
        rng = np.random.default_rng(derive_seed(self.base_seed, INPUT_STREAM))
        return self.inputs.generate(self.horizon, rng)

    def record_steps(self) -> np.ndarray:
        ks = np.arange(self.record_stride, self.horizon + 1, self.record_stride)
        if ks.size == 0 or ks[-1] != self.horizon:
            ks = np.append(ks, self.horizon)
        return ks

    def excitation_window(self) -> int:
        if self.pe_window is not None:
            return self.pe_window
        if self.inputs.mode == "periodic":
            return self.inputs.vectors.shape[0]
        return 10 * self.system.n

    def resolved_alpha(self) -> float:
        """Constant alpha actually used by RPFI / the baseline."""
        est = self.estimator
        if est.alpha is not None:
            return float(est.alpha)
        window = self.excitation_window()
        prefix = self.input_sequence()[: max(window, min(self.horizon, 20 * window))]
        delta_sq = check_persistent_excitation(prefix, window)
        return suggest_alpha_for_rate(self.system, self.noise, delta_sq, est.beta)


@dataclass
class _Batch:
    err: np.ndarray
    failed: np.ndarray
    fail_step: np.ndarray
    final: np.ndarray
    estimates: np.ndarray | None
    seconds: float


def _observations(spec: ExperimentSpec, phi_theta: np.ndarray, rngs, start: int, count: int) -> np.ndarray:
    draws = np.stack([spec.noise.sample(rng, count) for rng in rngs])
    y = phi_theta[start:start + count] + draws
    return (y <= spec.system.threshold_c).astype(float)


def _run_batch(spec: ExperimentSpec, run_indices: Sequence[int], keep_estimates: bool = False) -> _Batch:
    t0 = time.perf_counter()
    phis = spec.input_sequence()
    theta_true = spec.system.theta
    phi_theta = np.array([float(np.dot(phi, theta_true)) for phi in phis])
    ks = spec.record_steps()
    record_at = np.full(spec.horizon + 1, -1)
    record_at[ks] = np.arange(ks.size)

    b, n = len(run_indices), spec.system.n
    rngs = [np.random.default_rng(derive_seed(spec.base_seed, i)) for i in run_indices]
    est = spec.estimator
    kind = est.kind
    c = spec.system.threshold_c
    m = spec.cutoff_m
    noise = spec.noise
    theta = np.tile(np.array(est.theta0), (b, 1))
    r = est.r0
    p = np.tile(est.p0 * np.eye(n), (b, 1, 1)) if kind == "impf" else None
    alpha = spec.resolved_alpha() if kind != "impf" else None
    beta, radius, eps = est.beta, spec.radius, est.eps

    err = np.empty((b, ks.size))
    estimates = np.empty((b, ks.size, n)) if keep_estimates else None
    failed = np.zeros(b, dtype=bool)
    fail_step = np.zeros(b, dtype=int)

    with np.errstate(all="ignore"):
        for start in range(0, spec.horizon, NOISE_BLOCK):
            count = min(NOISE_BLOCK, spec.horizon - start)
            obs = _observations(spec, phi_theta, rngs, start, count)
            for j in range(count):
                k = start + j + 1
                phi = phis[k - 1]
                s = obs[:, j]
                if kind == "rpfi":
                    theta, r, _, _, _ = rpfi_kernel(theta, r, phi, s, alpha, beta, m, c, noise)
                elif kind == "impf":
                    theta, p, _, _, _, _, _ = impf_kernel(theta, p, phi, s, m, c, noise, eps)
                else:
                    theta, r = baseline_kernel(theta, r, phi, s, alpha, beta, radius, c, noise)
                slot = record_at[k]
                if slot >= 0:
                    diff = theta - theta_true
                    e = np.sum(diff * diff, axis=-1)
                    err[:, slot] = e
                    if keep_estimates:
                        estimates[:, slot] = theta
                    bad = ~np.isfinite(e)
                    if p is not None:
                        diag = np.diagonal(p, axis1=-2, axis2=-1)
                        bad |= ~np.all(np.isfinite(p), axis=(-2, -1)) | np.any(diag <= 0, axis=-1)
                    new = bad & ~failed
                    fail_step[new] = k
                    failed |= bad
    if p is not None:
        for i in np.flatnonzero(~failed):
            try:
                np.linalg.cholesky(p[i])
            except np.linalg.LinAlgError:
                failed[i] = True
                fail_step[i] = spec.horizon
    return _Batch(err, failed, fail_step, theta, estimates, time.perf_counter() - t0)


@dataclass
class Trajectory:
    run_index: int
    seed: int
    ks: np.ndarray
    err_sq: np.ndarray
    estimates: np.ndarray | None = None

    def to_csv(self, path: str | Path) -> None:
        n = 0 if self.estimates is None else self.estimates.shape[1]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "err_sq", *(f"theta_hat_{i + 1}" for i in range(n))])
            for j, k in enumerate(self.ks):
                row = [int(k), repr(float(self.err_sq[j]))]
                if n:
                    row += [repr(float(v)) for v in self.estimates[j]]
                w.writerow(row)


def run_trajectory(spec: ExperimentSpec, run_index: int, keep_estimates: bool = False) -> Trajectory:
    """Simulate one sample path and record ``||theta_hat_k - theta||^2`` at the stride.

    Raises :class:`StateCorruptionError` if the estimate stops being finite
    (or, for IMPF, ``P`` stops being positive definite).
    """
    if not 0 <= run_index < spec.runs:
        raise ValueError(f"run_index must lie in [0, {spec.runs})")
    batch = _run_batch(spec, [run_index], keep_estimates)
    if batch.failed[0]:
        raise StateCorruptionError(
            f"run {run_index} ({spec.estimator.kind}) diverged by step {batch.fail_step[0]}: "
            f"final estimate {batch.final[0].tolist()}"
        )
    est = None if batch.estimates is None else batch.estimates[0]
    return Trajectory(run_index, derive_seed(spec.base_seed, run_index), spec.record_steps(), batch.err[0], est)


def _worker(args):
    spec, indices = args
    out = []
    for start in range(0, len(indices), MAX_BATCH):
        out.append(_run_batch(spec, indices[start:start + MAX_BATCH]))
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class McSummary:
    """Per-step Monte-Carlo statistics on the recorded step indices."""

    ks: np.ndarray
    mse: np.ndarray
    stderr: np.ndarray
    cr_trace: np.ndarray
    efficiency_ratio: np.ndarray
    runs: int
    failed_runs: list = field(default_factory=list)
    run_meta: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failed_runs)

    def at(self, k: int) -> int:
        idx = np.flatnonzero(self.ks == k)
        if idx.size == 0:
            raise KeyError(f"step {k} was not recorded")
        return int(idx[0])

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "mse", "stderr", "cr_trace", "efficiency_ratio"])
            for row in zip(self.ks, self.mse, self.stderr, self.cr_trace, self.efficiency_ratio):
                w.writerow([int(row[0]), *(_fmt(v) for v in row[1:])])

    def write_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            for meta in self.run_meta:
                fh.write(json.dumps(meta, sort_keys=True) + "\n")


def _column_stats(err: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    count, cols = err.shape
    mse = np.full(cols, np.nan)
    stderr = np.full(cols, np.nan)
    if count == 0:
        return mse, stderr
    for j in range(cols):
        col = err[:, j].tolist()
        mean = math.fsum(col) / count
        mse[j] = mean
        if count > 1:
            var = math.fsum((v - mean) ** 2 for v in col) / (count - 1)
            stderr[j] = math.sqrt(var / count)
        else:
            stderr[j] = 0.0
    return mse, stderr


def monte_carlo(spec: ExperimentSpec, workers: int = 1) -> McSummary:
    """Run ``spec.runs`` independent trajectories and aggregate them.

    Runs that diverge are excluded from the statistics and listed in
    ``failed_runs``; the summary is then ``partial``.
    """
    indices = list(range(spec.runs))
    workers = max(1, min(int(workers), spec.runs))
    if workers == 1:
        batches = _worker((spec, indices))
    else:
        bounds = np.linspace(0, spec.runs, workers + 1).astype(int)
        jobs = [(spec, indices[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = [b for chunk in pool.map(_worker, jobs) for b in chunk]

    err = np.concatenate([b.err for b in batches])
    failed = np.concatenate([b.failed for b in batches])
    fail_step = np.concatenate([b.fail_step for b in batches])
    final = np.concatenate([b.final for b in batches])
    seconds = np.concatenate([np.full(len(b.failed), b.seconds / len(b.failed)) for b in batches])

    mse, stderr = _column_stats(err[~failed])
    ks = spec.record_steps()
    try:
        cr = cr_bound_sequence(spec.system, spec.input_sequence(), spec.noise, ks).traces
    except Exception as exc:  # bound unavailable (e.g. unexcited inputs): keep the MSE
        warnings.warn(f"Cramér-Rao bound unavailable: {exc}")
        cr = np.full(ks.size, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = (mse - cr) / cr

    alpha = spec.resolved_alpha() if spec.estimator.kind != "impf" else None
    meta = []
    for i in indices:
        final_err = float(err[i, -1])
        meta.append({
            "run": i,
            "seed": derive_seed(spec.base_seed, i),
            "horizon": spec.horizon,
            "estimator": spec.estimator.kind,
            "alpha": alpha,
            "final_error_sq": final_err if math.isfinite(final_err) else None,
            "failed": bool(failed[i]),
            "fail_step": int(fail_step[i]) if failed[i] else None,
            "wall_time_s": float(seconds[i]),
        })
    return McSummary(ks, mse, stderr, cr, ratio, spec.runs, [int(i) for i in np.flatnonzero(failed)], meta)


def rate_fit(trajectory, k_lo: float, k_hi: float, min_points: int = 10) -> float:
    """Least-squares slope of ``log(mse)`` against ``log(k)`` on ``[k_lo, k_hi]``.

    ``trajectory`` is a :class:`McSummary` or a ``(ks, mse)`` pair.
    Non-positive (or non-finite) MSE values are dropped with a warning.
    """
    if isinstance(trajectory, McSummary):
        ks, mse = trajectory.ks, trajectory.mse
    else:
        ks, mse = trajectory
    ks = np.asarray(ks, dtype=float)
    mse = np.asarray(mse, dtype=float)
    window = (ks >= k_lo) & (ks <= k_hi)
    usable = window & np.isfinite(mse) & (mse > 0)
    dropped = int(np.sum(window & ~usable))
    if dropped:
        warnings.warn(f"rate_fit: excluded {dropped} non-positive or non-finite MSE points")
    if usable.sum() < min_points:
        raise RateFitError(f"only {int(usable.sum())} usable points in [{k_lo}, {k_hi}], need {min_points}")
    slope, _ = np.polyfit(np.log(ks[usable]), np.log(mse[usable]), 1)
    return float(slope)


def kmse_spread(summary: McSummary, k_lo: float, k_hi: float) -> float:
    """max/min of ``k * mse`` over the window; bounded when the MSE is O(1/k)."""
    window = (summary.ks >= k_lo) & (summary.ks <= k_hi)
    km = summary.ks[window] * summary.mse[window]
    if km.size == 0 or not np.all(np.isfinite(km)) or np.min(km) <= 0:
        return math.inf
    return float(np.max(km) / np.min(km))


# --------------------------------------------------------------------------
# timing
# --------------------------------------------------------------------------


@dataclass
class TimingRow:
    estimator: str
    times: list
    steps_to_threshold: int | None

    @property
    def finished(self) -> bool:
        return self.steps_to_threshold is not None

    @property
    def average(self) -> float:
        return float(np.mean(self.times)) if self.finished else math.nan


def _single_run_loop(spec: ExperimentSpec, phis: np.ndarray, obs: np.ndarray, steps: int) -> float:
    est = spec.estimator
    c, noise = spec.system.threshold_c, spec.noise
    if est.kind == "impf":
        state = ImpfState.initial(est.theta0, est.p0, spec.cutoff_m, est.eps)
        t0 = time.perf_counter()
        for k in range(steps):
            state, _ = impf_step(state, phis[k], obs[k], noise, c, check=False)
        return time.perf_counter() - t0
    alpha = spec.resolved_alpha()
    state = RpfiState(np.array(est.theta0), est.r0, 0, alpha, est.beta, spec.cutoff_m)
    if est.kind == "rpfi":
        t0 = time.perf_counter()
        for k in range(steps):
            state, _ = rpfi_step(state, phis[k], obs[k], noise, c)
        return time.perf_counter() - t0
    radius = spec.radius
    t0 = time.perf_counter()
    for k in range(steps):
        state = projection_baseline_step(state, phis[k], obs[k], noise, c, radius)
    return time.perf_counter() - t0


def steps_to_threshold(summary: McSummary, threshold: float) -> int | None:
    below = np.flatnonzero(summary.mse < threshold)
    return int(summary.ks[below[0]]) if below.size else None


def timing_benchmark(
    specs: Sequence[ExperimentSpec],
    mse_threshold: float = 1e-4,
    repeats: int = 3,
    pilot_runs: int = 100,
    workers: int = 1,
) -> list[TimingRow]:
    """Wall time each estimator needs to reach ``E||theta_hat - theta||^2 < threshold``.

    The step count is read off a pilot Monte-Carlo MSE curve (``pilot_runs``
    runs up to ``spec.horizon``, which acts as the step cap). Each repeat then
    times one fresh single-run trajectory of exactly that many steps through
    the public step functions; observations are simulated beforehand so only
    estimator work is timed. An estimator that never crosses the threshold is
    reported with ``steps_to_threshold=None`` (did not finish).
    """
    if not mse_threshold > 0:
        raise ValueError("mse_threshold must be positive")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows = []
    for spec in specs:
        pilot = monte_carlo(replace(spec, runs=pilot_runs), workers=workers)
        steps = steps_to_threshold(pilot, mse_threshold)
        if steps is None:
            rows.append(TimingRow(spec.estimator.kind, [], None))
            continue
        phis = spec.input_sequence()[:steps]
        phi_theta = np.array([float(np.dot(phi, spec.system.theta)) for phi in phis])
        times = []
        for rep in range(repeats):
            rng = np.random.default_rng(derive_seed(spec.base_seed, rep))
            y = phi_theta + spec.noise.sample(rng, steps)
            obs = (y <= spec.system.threshold_c).astype(float)
            times.append(_single_run_loop(spec, phis, obs, steps))
        rows.append(TimingRow(spec.estimator.kind, times, steps))
    return rows


def write_timing_csv(rows: Sequence[TimingRow], path: str | Path, repeats: int | None = None) -> None:
    """Table with columns ``estimator, repeat_1..repeat_R, average`` (seconds, DNF if unfinished)."""
    repeats = repeats or max((len(r.times) for r in rows), default=0)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", *(f"repeat_{i + 1}" for i in range(repeats)), "average"])
        for row in rows:
            if row.finished:
                w.writerow([row.estimator, *(f"{t:.6f}" for t in row.times), f"{row.average:.6f}"])
            else:
                w.writerow([row.estimator, *(["DNF"] * repeats), "DNF"])


def _random_problem(n: int, rng: np.random.Generator):
    theta = rng.uniform(-1, 1, n) / math.sqrt(n)
    phi = rng.uniform(-1, 1, n)
    return theta, phi


def step_cost_scaling(
    ns: Sequence[int] = (4, 8, 16, 32),
    batch: int = 1024,
    steps: int = 200,
    repeats: int = 5,
    seed: int = 0,
) -> dict:
    """Per-step cost of the RPFI and IMPF updates as a function of ``n``.

    Each measurement advances ``batch`` independent estimates through
    ``steps`` updates with the shared kernels, and the per-step cost is the
    best-of-``repeats`` wall time divided by ``batch * steps``; batching
    amortises interpreter dispatch so the arithmetic is what gets timed.
    Returns ``{"n": [...], "rpfi": [...], "impf": [...], "rpfi_exponent": e,
    "impf_exponent": e}`` with exponents from a log-log least-squares fit.
    """
    rng = np.random.default_rng(seed)
    noise = NoiseModel()
    out = {"n": list(ns), "rpfi": [], "impf": []}
    for n in ns:
        theta_true, phi = _random_problem(n, rng)
        phis = rng.uniform(-1, 1, (steps, n))
        s = (rng.random((steps, batch)) < 0.5).astype(float)
        m = math.sqrt(n) * 1.0 + 2.0
        best_r = best_i = math.inf
        for _ in range(repeats):
            theta = np.zeros((batch, n))
            r = 1.0
            t0 = time.perf_counter()
            for k in range(steps):
                theta, r, _, _, _ = rpfi_kernel(theta, r, phis[k], s[k], 1.0, 1.0, m, 0.0, noise)
            best_r = min(best_r, time.perf_counter() - t0)

            theta = np.zeros((batch, n))
            p = np.tile(np.eye(n), (batch, 1, 1))
            t0 = time.perf_counter()
            for k in range(steps):
                theta, p, _, _, _, _, _ = impf_kernel(theta, p, phis[k], s[k], m, 0.0, noise)
            best_i = min(best_i, time.perf_counter() - t0)
        out["rpfi"].append(best_r / (batch * steps))
        out["impf"].append(best_i / (batch * steps))
    logn = np.log(np.asarray(ns, dtype=float))
    out["rpfi_exponent"] = float(np.polyfit(logn, np.log(out["rpfi"]), 1)[0])
    out["impf_exponent"] = float(np.polyfit(logn, np.log(out["impf"]), 1)[0])
    return out
