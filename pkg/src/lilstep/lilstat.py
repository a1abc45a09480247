"""Time-average accumulation and estimators of the fluctuation constant.

The central object normalizes a weighted running sum
``S(t) = sum_k tau_k (f(Y_k) - mu)`` by ``sqrt(2 t log log t)``.  The
normalization is only defined for ``t > e``; below that threshold
checkpoints carry a null statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError, UsageError

# smallest time at which log log t is safely positive
STAT_MIN_TIME = math.e + 1e-9

__all__ = [
    "STAT_MIN_TIME",
    "LilAccumulator",
    "LilCheckpoint",
    "NormalityReport",
    "VEstimate",
    "checkpoint_indices",
    "lil_statistic",
    "normality_check",
    "time_average_update",
    "v_batch_means",
    "v_ensemble",
    "v_exact_linear",
]


def lil_statistic(S: float, t: float) -> float:
    """Return ``S / sqrt(2 t log log t)``.

    Raises DomainError for ``t <= e + 1e-9``, where the normalization is
    zero or undefined.
    """
    if not math.isfinite(t) or t <= STAT_MIN_TIME:
        raise DomainError(
            f"lil_statistic needs t > e + 1e-9 (log log positivity); got t = {t!r}"
        )
    return S / math.sqrt(2.0 * t * math.log(math.log(t)))


@dataclass(frozen=True)
class LilCheckpoint:
    """One logged point of a path's running sum.

    ``stat``, ``run_max`` and ``run_min`` are None while ``t <= e``.
    """

    t: float
    S: float
    stat: float | None
    run_max: float | None
    run_min: float | None


def checkpoint_indices(times: np.ndarray, ratio: float = 1.2) -> np.ndarray:
    """Step indices logged under geometric-in-time checkpointing.

    A step is logged when its time has grown by ``ratio`` over the last
    logged time; the first and last steps are always logged.  The rule is
    causal, so a streaming accumulator reproduces it exactly.
    """
    if ratio <= 1.0:
        raise ConfigurationError(f"checkpoint ratio must be > 1; got {ratio!r}")
    n_max = len(times) - 1
    if n_max < 1:
        return np.zeros(0, dtype=np.int64)
    out = []
    threshold = 0.0
    for n in range(1, n_max + 1):
        if times[n] >= threshold:
            out.append(n)
            threshold = times[n] * ratio
    if out[-1] != n_max:
        out.append(n_max)
    return np.asarray(out, dtype=np.int64)


class LilAccumulator:
    """Streaming weighted sum with checkpoint log and running extrema.

    Single-writer, sequential per path: absorb steps in order via
    ``update``.  Extrema of the normalized statistic are tracked at every
    absorbed step once ``t > e``, so any checkpoint's running max/min
    bracket its statistic.

    ``center_with_running_mean`` replaces the supplied mean by the
    path's own time average at ``finalize``.  This biases downstream
    variance estimates downward (the recentered sum is orthogonal to its
    own mean), so it is off by default; extrema are then recomputed at
    checkpoint resolution only.
    """

    def __init__(
        self,
        mu_f: float = 0.0,
        *,
        checkpoint_ratio: float = 1.2,
        center_with_running_mean: bool = False,
    ) -> None:
        if not math.isfinite(mu_f):
            raise ConfigurationError(f"mu_f must be finite; got {mu_f!r}")
        if checkpoint_ratio <= 1.0:
            raise ConfigurationError(
                f"checkpoint ratio must be > 1; got {checkpoint_ratio!r}"
            )
        if center_with_running_mean and mu_f != 0.0:
            raise ConfigurationError(
                "center_with_running_mean replaces mu_f; pass mu_f = 0"
            )
        self.mu_f = float(mu_f)
        self.ratio = float(checkpoint_ratio)
        self.self_centering = bool(center_with_running_mean)
        self.t = 0.0
        self.S = 0.0
        self._weighted_f = 0.0  # sum tau_k f_k, for the running mean
        self._threshold = 0.0
        self._run_max: float | None = None
        self._run_min: float | None = None
        self._log: list[LilCheckpoint] = []

    @property
    def checkpoints(self) -> list[LilCheckpoint]:
        return list(self._log)

    def update(self, tau: float, f_val: float) -> None:
        """Absorb one step of length ``tau`` with observed value ``f_val``."""
        tau = float(tau)
        f_val = float(f_val)
        if not math.isfinite(tau) or tau <= 0.0:
            raise ConfigurationError(f"step length must be > 0; got {tau!r}")
        if not math.isfinite(f_val):
            raise DomainError(f"non-finite observable value: {f_val!r}")
        self.t += tau
        self.S += tau * (f_val - self.mu_f)
        self._weighted_f += tau * f_val
        stat: float | None = None
        if self.t > STAT_MIN_TIME:
            stat = lil_statistic(self.S, self.t)
            if self._run_max is None or stat > self._run_max:
                self._run_max = stat
            if self._run_min is None or stat < self._run_min:
                self._run_min = stat
        if self.t >= self._threshold:
            self._log.append(
                LilCheckpoint(self.t, self.S, stat, self._run_max, self._run_min)
            )
            self._threshold = self.t * self.ratio

    def merge(self, other: "LilAccumulator") -> None:
        raise UsageError(
            "accumulators are sequential per path and cannot be merged; "
            "combine per-path summaries with the ensemble estimators instead"
        )

    def finalize(self) -> list[LilCheckpoint]:
        """Close the log and return all checkpoints.

        Appends the last absorbed step if it did not fire a checkpoint.
        With self-centering, rewrites the log against the path's own time
        average.
        """
        if self.t == 0.0:
            raise UsageError("finalize called before any update")
        if not self._log or self._log[-1].t != self.t:
            stat = lil_statistic(self.S, self.t) if self.t > STAT_MIN_TIME else None
            self._log.append(
                LilCheckpoint(self.t, self.S, stat, self._run_max, self._run_min)
            )
            self._threshold = self.t * self.ratio
        if not self.self_centering:
            return list(self._log)
        fbar = self._weighted_f / self.t
        out: list[LilCheckpoint] = []
        run_max: float | None = None
        run_min: float | None = None
        for cp in self._log:
            S = cp.S - cp.t * fbar
            stat: float | None = None
            if cp.t > STAT_MIN_TIME:
                stat = lil_statistic(S, cp.t)
                run_max = stat if run_max is None else max(run_max, stat)
                run_min = stat if run_min is None else min(run_min, stat)
            out.append(LilCheckpoint(cp.t, S, stat, run_max, run_min))
        return out


def time_average_update(
    acc: LilAccumulator, tau: float, f_val: float
) -> LilAccumulator:
    """Absorb one step into ``acc`` and return it (fluent form)."""
    acc.update(tau, f_val)
    return acc


@dataclass(frozen=True)
class VEstimate:
    """Point estimate of the squared fluctuation constant v^2."""

    v2: float
    stderr: float
    method: str
    n_blocks: int | None = None
    n_paths: int | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.v2) or self.v2 < 0.0:
            raise ConfigurationError(f"v2 must be finite and >= 0; got {self.v2!r}")
        if not math.isfinite(self.stderr) or self.stderr < 0.0:
            raise ConfigurationError(
                f"stderr must be finite and >= 0; got {self.stderr!r}"
            )

    @property
    def v(self) -> float:
        return math.sqrt(self.v2)


def v_exact_linear(a: float, sigma: float) -> VEstimate:
    """Exact constant for the scalar linear model with identity observable.

    The stationary law is Normal(0, sigma^2/(2a)) and the semigroup acts
    by e^{-at}, so v^2 = 2 (sigma^2/2a) (1/a) = sigma^2/a^2, i.e.
    v = sigma/a with no sampling error.
    """
    if not (math.isfinite(a) and a > 0.0):
        raise ConfigurationError(f"drift rate a must be > 0; got {a!r}")
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise ConfigurationError(f"noise level sigma must be > 0; got {sigma!r}")
    return VEstimate(v2=(sigma / a) ** 2, stderr=0.0, method="exact_linear")


def v_batch_means(
    increments,
    block_length: float | None = None,
    mu_f: float = 0.0,
) -> VEstimate:
    """Batch-means estimate of v^2 from one path's weighted increments.

    ``increments`` is a sequence of ``(tau_k, f_val)`` pairs in path
    order.  Elapsed time is cut into contiguous blocks of ``block_length``
    (default sqrt(T), the usual bias/variance compromise); the trailing
    partial block is dropped.  The estimate is the sample variance of the
    block sums divided by the block length; its standard error uses the
    chi-square approximation sqrt(2/(n_blocks - 1)) * estimate.
    """
    if not isinstance(increments, np.ndarray):
        increments = list(increments)
    pairs = np.asarray(increments, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
        raise ConfigurationError("increments must be nonempty (tau, f_val) pairs")
    taus = pairs[:, 0]
    vals = pairs[:, 1]
    if np.any(taus <= 0.0) or not np.all(np.isfinite(pairs)):
        raise ConfigurationError("increments must have finite values and tau > 0")
    if not math.isfinite(mu_f):
        raise ConfigurationError(f"mu_f must be finite; got {mu_f!r}")
    times = np.cumsum(taus)
    total = float(times[-1])
    if block_length is None:
        block_length = math.sqrt(total)
    L = float(block_length)
    if not (math.isfinite(L) and L > 0.0):
        raise ConfigurationError(f"block length must be > 0; got {block_length!r}")
    n_blocks = int(math.floor(total / L + 1e-12))
    if n_blocks < 2:
        raise DomainError(
            f"need at least 2 complete blocks of length {L}; "
            f"total time {total} gives {n_blocks}"
        )
    # block i covers times in (iL, (i+1)L]; a step belongs to the block
    # its right endpoint lands in
    idx = np.ceil(times / L - 1e-12).astype(np.int64) - 1
    np.clip(idx, 0, None, out=idx)
    keep = idx < n_blocks
    sums = np.bincount(
        idx[keep], weights=taus[keep] * (vals[keep] - mu_f), minlength=n_blocks
    )
    v2 = float(np.var(sums, ddof=1) / L)
    stderr = math.sqrt(2.0 / (n_blocks - 1)) * v2
    return VEstimate(v2=v2, stderr=stderr, method="batch_means", n_blocks=n_blocks)


def v_ensemble(finals) -> VEstimate:
    """Ensemble estimate of v^2 from per-path terminal sums.

    ``finals`` is a sequence of ``(S_T, T)`` pairs over independent paths
    sharing one horizon; returns sample variance of S_T divided by T.
    """
    pairs = np.asarray(list(finals), dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ConfigurationError("finals must be (S_T, T) pairs")
    if pairs.shape[0] < 2:
        raise DomainError(f"need at least 2 paths; got {pairs.shape[0]}")
    if not np.all(np.isfinite(pairs)):
        raise ConfigurationError("finals must be finite")
    horizons = pairs[:, 1]
    T = float(horizons[0])
    if T <= 0.0:
        raise ConfigurationError(f"horizon must be > 0; got {T!r}")
    if np.any(horizons != T):
        raise DomainError(
            "paths have mixed horizons; the ensemble estimator needs a common T"
        )
    n = pairs.shape[0]
    v2 = float(np.var(pairs[:, 0], ddof=1) / T)
    stderr = math.sqrt(2.0 / (n - 1)) * v2
    return VEstimate(v2=v2, stderr=stderr, method="ensemble", n_paths=n)


@dataclass(frozen=True)
class NormalityReport:
    statistic: float
    pvalue: float
    passed: bool


def normality_check(
    samples, *, v: float = 1.0, horizon: float = 1.0
) -> NormalityReport:
    """Kolmogorov-Smirnov test of standardized samples against Normal(0,1).

    Samples are divided by ``v * sqrt(horizon)`` first, so terminal sums
    S_T can be passed directly.  Passes at the 1% level when the p-value
    exceeds 0.01.
    """
    z = np.asarray(samples, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 50:
        raise DomainError(
            f"need at least 50 one-dimensional samples; got shape {z.shape}"
        )
    if not np.all(np.isfinite(z)):
        raise ConfigurationError("samples must be finite")
    if not (math.isfinite(v) and v > 0.0):
        raise ConfigurationError(f"v must be > 0; got {v!r}")
    if not (math.isfinite(horizon) and horizon > 0.0):
        raise ConfigurationError(f"horizon must be > 0; got {horizon!r}")
    z = z / (v * math.sqrt(horizon))
    if float(np.std(z)) == 0.0:
        raise DomainError("degenerate sample: zero variance")
    res = stats.kstest(z, "norm")
    return NormalityReport(
        statistic=float(res.statistic),
        pvalue=float(res.pvalue),
        passed=bool(res.pvalue > 0.01),
    )
