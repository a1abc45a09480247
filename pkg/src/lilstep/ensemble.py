"""Vectorized multi-path driver with reproducible, mergeable summaries.

Determinism contract
--------------------
A summary is a pure function of ``(EnsembleConfig, seed)``.  Three choices
make that hold no matter how the work is scheduled:

* every normal draw has an absolute address ``(seed, path, counter)``
  (see :mod:`.mc`), so a path's noise does not depend on its neighbours;
* paths are processed in fixed blocks of :data:`PATH_BLOCK`, a module
  constant rather than a tunable, so the vectorized arithmetic (and hence
  every float) is identical whether one worker runs all blocks or eight
  workers run one each;
* records are sorted by path id before aggregation, so reductions see one
  canonical order.

``workers`` and ``fail_fast`` are therefore arguments of
:func:`run_ensemble`, not config fields: they choose how to execute, never
what is computed, and do not enter the config fingerprint.

Memory is O(checkpoints) per path, not O(steps): the per-step state of a
block is a handful of length-``B`` accumulators, and only geometrically
thinned checkpoints are kept.

Failure policy
--------------
A path that cannot be advanced (implicit solve failure, non-finite state)
becomes a :class:`PathError` in the summary; the remaining paths are
unaffected.  With ``fail_fast=True`` the first such error aborts the run by
raising instead.  Config ``fail_paths`` injects a deterministic mid-run
failure on chosen paths, which exercises exactly the same bookkeeping.
"""

from __future__ import annotations

import functools
import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, is_dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, StepSolveError
from .grid import StepSpec, build_grid, quasi_uniform_index
from .integrate import SchemeSpec, step_state
from .lilstat import (
    STAT_MIN_TIME,
    LilCheckpoint,
    VEstimate,
    checkpoint_indices,
    v_ensemble,
    v_exact_linear,
)
from .martingale import _tail_coefficients
from .mc import block_normals
from .models import SodeModel, SpectralSpdeModel, TestFunction, coordinate_function

__all__ = [
    "PATH_BLOCK",
    "EnsembleConfig",
    "PathRecord",
    "PathError",
    "EnsembleSummary",
    "config_fingerprint",
    "run_ensemble",
    "merge_summaries",
]

# Paths per work item.  Fixed on purpose: block size shapes the float
# arithmetic of nothing (each path's accumulators are independent), but a
# fixed partition means worker count cannot change which paths share a batch
# of bookkeeping, keeping summaries bit-identical across schedules.
PATH_BLOCK = 256

# Target floats per noise slab drawn at once (block paths x steps x dim).
_NOISE_CHUNK = 2_000_000


# ---------------------------------------------------------------------------
# configuration and fingerprint
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything that determines an ensemble run's results.

    ``paths`` and ``first_path`` are sharding fields: they say which slice of
    the path space this run covers, and are excluded from the fingerprint so
    slices of one experiment can be merged.  ``fail_paths`` lists absolute
    path ids that must fail deterministically halfway through the run (a
    testing hook for the error plumbing).

    ``qv_blocks`` switches on the closed-form quadratic-variation average
    over that many unit integer-clock blocks; it is only defined for the
    scalar linear model under the drift-implicit scheme.  ``batch_block``
    is the batch-means block length ``L`` (no default is imposed here; the
    caller resolves one so the fingerprint stays explicit).  ``stat_window``
    asks for extrema of the normalized statistic over a clock interval
    ``(t_lo, t_hi)``.
    """

    model: SodeModel | SpectralSpdeModel
    scheme: SchemeSpec
    step_spec: StepSpec
    n_steps: int
    paths: int
    seed: int
    first_path: int = 0
    f: TestFunction | None = None
    mu_f: float = 0.0
    x0: float | Sequence[float] = 0.0
    checkpoint_ratio: float = 1.2
    qv_blocks: int | None = None
    batch_block: float | None = None
    stat_window: tuple[float, float] | None = None
    fail_paths: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.model, (SodeModel, SpectralSpdeModel)):
            raise ConfigurationError(
                f"model must be a SodeModel or SpectralSpdeModel, got {self.model!r}"
            )
        if not isinstance(self.scheme, SchemeSpec):
            raise ConfigurationError(f"scheme must be a SchemeSpec, got {self.scheme!r}")
        spde = isinstance(self.model, SpectralSpdeModel)
        if spde != (self.scheme.kind == "exp_euler"):
            raise ConfigurationError(
                "spectral models pair with the 'exp_euler' scheme and sode "
                f"models with the others; got {type(self.model).__name__} "
                f"with scheme {self.scheme.kind!r}"
            )
        if not isinstance(self.step_spec, StepSpec):
            raise ConfigurationError(
                f"step_spec must be a StepSpec, got {self.step_spec!r}"
            )
        _require_int(self, "n_steps", low=1)
        _require_int(self, "paths", low=0)
        _require_int(self, "first_path", low=0)
        _require_int(self, "seed", low=0)
        if self.f is None:
            object.__setattr__(self, "f", coordinate_function())
        elif not isinstance(self.f, TestFunction):
            raise ConfigurationError(f"f must be a TestFunction, got {self.f!r}")
        if not math.isfinite(self.mu_f):
            raise ConfigurationError(f"mu_f must be finite, got {self.mu_f!r}")
        object.__setattr__(self, "mu_f", float(self.mu_f))

        x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
        if x0.shape == (1,) and self.model.dim > 1:
            x0 = np.repeat(x0, self.model.dim)
        if x0.shape != (self.model.dim,):
            raise ConfigurationError(
                f"x0 must be a scalar or length-{self.model.dim} vector, "
                f"got shape {x0.shape}"
            )
        if not np.all(np.isfinite(x0)):
            raise ConfigurationError("x0 must be finite")
        object.__setattr__(self, "x0", tuple(float(v) for v in x0))

        if not (math.isfinite(self.checkpoint_ratio) and self.checkpoint_ratio > 1.0):
            raise ConfigurationError(
                f"checkpoint_ratio must be > 1, got {self.checkpoint_ratio!r}"
            )

        if self.qv_blocks is not None:
            _require_int(self, "qv_blocks", low=1)
            m = self.model
            linear_scalar = (
                isinstance(m, SodeModel) and m.linear is not None and m.dim == 1
            )
            if not (linear_scalar and self.scheme.kind == "bem"):
                raise ConfigurationError(
                    "qv_blocks needs the scalar linear model under the 'bem' "
                    "scheme; the closed-form block increments exist only there"
                )
        if self.batch_block is not None:
            if not (math.isfinite(self.batch_block) and self.batch_block > 0.0):
                raise ConfigurationError(
                    f"batch_block must be > 0, got {self.batch_block!r}"
                )
            object.__setattr__(self, "batch_block", float(self.batch_block))
        if self.stat_window is not None:
            win = tuple(float(v) for v in self.stat_window)
            if len(win) != 2 or not all(math.isfinite(v) for v in win):
                raise ConfigurationError(
                    f"stat_window must be a finite (t_lo, t_hi) pair, "
                    f"got {self.stat_window!r}"
                )
            if not (0.0 <= win[0] < win[1]):
                raise ConfigurationError(
                    f"stat_window needs 0 <= t_lo < t_hi, got {win!r}"
                )
            object.__setattr__(self, "stat_window", win)

        fail = tuple(sorted(int(p) for p in self.fail_paths))
        if len(set(fail)) != len(fail):
            raise ConfigurationError(f"fail_paths has duplicates: {self.fail_paths!r}")
        lo, hi = self.first_path, self.first_path + self.paths
        bad = [p for p in fail if not lo <= p < hi]
        if bad:
            raise ConfigurationError(
                f"fail_paths {bad} fall outside the path range [{lo}, {hi})"
            )
        object.__setattr__(self, "fail_paths", fail)

    @property
    def dim(self) -> int:
        return self.model.dim


def _require_int(cfg: EnsembleConfig, name: str, low: int | None) -> None:
    v = getattr(cfg, name)
    if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
        raise ConfigurationError(f"{name} must be an integer, got {v!r}")
    if low is not None and v < low:
        raise ConfigurationError(f"{name} must be >= {low}, got {v}")
    object.__setattr__(cfg, name, int(v))


def _canon(obj: object) -> str:
    """Canonical string of a config/summary value; stable across processes.

    Callables are encoded by module-qualified name (partials by their inner
    function plus bound arguments), floats by 17 significant digits, arrays
    elementwise.  Anything without a stable encoding is rejected rather than
    silently hashed by repr.
    """
    if obj is None:
        return "~"
    if isinstance(obj, bool):
        return "b1" if obj else "b0"
    if isinstance(obj, (int, np.integer)):
        return f"i{int(obj)}"
    if isinstance(obj, (float, np.floating)):
        return "f" + format(float(obj), ".17g")
    if isinstance(obj, str):
        return "s" + repr(obj)
    if isinstance(obj, np.ndarray):
        body = ",".join(format(v, ".17g") for v in np.asarray(obj, dtype=np.float64).ravel())
        shape = "x".join(str(d) for d in obj.shape)
        return f"a[{shape}]({body})"
    if isinstance(obj, functools.partial):
        args = ",".join(_canon(a) for a in obj.args)
        kws = ",".join(f"{k}={_canon(v)}" for k, v in sorted(obj.keywords.items()))
        return f"p({_canon(obj.func)};{args};{kws})"
    if is_dataclass(obj) and not isinstance(obj, type):
        body = ",".join(f"{f.name}={_canon(getattr(obj, f.name))}" for f in fields(obj))
        return f"d{type(obj).__name__}({body})"
    if isinstance(obj, (tuple, list)):
        return "t(" + ",".join(_canon(v) for v in obj) + ")"
    if isinstance(obj, dict):
        body = ",".join(f"{_canon(k)}:{_canon(v)}" for k, v in sorted(obj.items()))
        return "m{" + body + "}"
    if callable(obj):
        mod = getattr(obj, "__module__", "")
        qual = getattr(obj, "__qualname__", "")
        if not mod or not qual or "<locals>" in qual:
            raise ConfigurationError(
                f"cannot fingerprint local or anonymous callable {obj!r}; "
                "use a module-level function"
            )
        return f"c{mod}.{qual}"
    raise ConfigurationError(f"cannot fingerprint a value of type {type(obj).__name__}")


# Sharding fields say which slice of the path space a run covers, not what
# the experiment is; excluding them lets slices share a fingerprint and merge.
# fail_paths is slice-scoped for the same reason: a slice can only be asked
# to fail paths it actually owns.
_SHARD_FIELDS = frozenset({"paths", "first_path", "fail_paths"})


def config_fingerprint(config: EnsembleConfig) -> str:
    """SHA-256 of the semantic config fields (sharding fields excluded)."""
    if not isinstance(config, EnsembleConfig):
        raise ConfigurationError(f"expected an EnsembleConfig, got {config!r}")
    parts = [
        f"{f.name}={_canon(getattr(config, f.name))}"
        for f in fields(config)
        if f.name not in _SHARD_FIELDS
    ]
    return hashlib.sha256(";".join(parts).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathRecord:
    """Everything retained from one successful path.

    ``checkpoints`` are geometrically thinned in time (first and last steps
    always present).  ``runtime`` is wall-clock seconds apportioned to this
    path; it is diagnostic only and excluded from hashes and artifacts,
    since identical results must hash identically on machines of different
    speed.
    """

    path_id: int
    checkpoints: tuple[LilCheckpoint, ...]
    final_s: float
    final_time: float
    final_state: tuple[float, ...]
    qv_average: float | None
    batch_sums: tuple[float, ...]
    window_max: float | None
    window_min: float | None
    runtime: float


@dataclass(frozen=True)
class PathError:
    """A path the run could not carry to the horizon."""

    path_id: int
    step: int
    message: str


@dataclass(frozen=True)
class EnsembleSummary:
    """Sorted per-path results plus aggregate estimates for one config slice.

    Invariant: every configured path appears exactly once, as a record or an
    error.  ``content_hash`` covers results and aggregates but not runtimes,
    so equal work gives equal hashes regardless of scheduling or hardware.
    """

    config: EnsembleConfig
    fingerprint: str
    records: tuple[PathRecord, ...]
    errors: tuple[PathError, ...]
    v_estimates: tuple[VEstimate, ...]

    def __post_init__(self) -> None:
        ids = [r.path_id for r in self.records]
        eids = [e.path_id for e in self.errors]
        if ids != sorted(ids) or eids != sorted(eids):
            raise ConfigurationError("summary entries must be sorted by path id")
        seen = set(ids) | set(eids)
        if len(seen) != len(ids) + len(eids):
            raise ConfigurationError("summary entries must have unique path ids")
        if len(seen) != self.config.paths:
            raise ConfigurationError(
                f"summary covers {len(seen)} paths but the config declares "
                f"{self.config.paths}"
            )

    def content_hash(self) -> str:
        """SHA-256 of fingerprint, results and aggregates; runtimes excluded."""
        recs = tuple(
            (
                r.path_id,
                r.checkpoints,
                r.final_s,
                r.final_time,
                r.final_state,
                r.qv_average,
                r.batch_sums,
                r.window_max,
                r.window_min,
            )
            for r in self.records
        )
        errs = tuple((e.path_id, e.step, e.message) for e in self.errors)
        payload = (self.fingerprint, recs, errs, self.v_estimates)
        return hashlib.sha256(_canon(payload).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# shared per-run tables
# ---------------------------------------------------------------------------


class _Tables:
    """Per-step arrays shared by every path of a run (built once per process)."""

    def __init__(self, config: EnsembleConfig) -> None:
        grid = build_grid(config.step_spec, config.n_steps)
        n = grid.n_max
        times = grid.times
        self.grid = grid
        self.taus = grid.steps
        self.times = times

        live = times > STAT_MIN_TIME
        denom = np.ones(n + 1)
        tl = times[live]
        denom[live] = np.sqrt(2.0 * tl * np.log(np.log(tl)))
        self.stat_live = live
        self.stat_denom = denom

        cp_mask = np.zeros(n + 1, dtype=bool)
        cp_mask[checkpoint_indices(times, config.checkpoint_ratio)] = True
        self.cp_mask = cp_mask

        if config.stat_window is not None:
            lo, hi = config.stat_window
            self.window_mask = live & (times >= lo) & (times <= hi)
        else:
            self.window_mask = None

        if config.qv_blocks is not None:
            qindex = quasi_uniform_index(grid, config.qv_blocks)
            edges = np.asarray(qindex.n_of[: config.qv_blocks + 1], dtype=np.int64)
            if np.any(np.diff(edges) < 1):
                raise DomainError(
                    "integer-clock blocks are empty on this grid; lower "
                    "qv_blocks or the step cap"
                )
            model = config.model
            assert isinstance(model, SodeModel) and model.linear is not None
            a, sigma = model.linear.a, model.linear.sigma
            _, tail = _tail_coefficients(grid, a, grid.n_max)
            self.qv_last = int(edges[-1])
            zw = np.zeros(n + 1)
            ks = np.arange(1, self.qv_last + 1)
            zw[ks] = sigma * tail[ks - 1] * np.sqrt(self.taus[ks])
            self.qv_weight = zw
            edge_at = np.zeros(n + 1, dtype=bool)
            edge_at[edges[1:]] = True
            self.qv_edge = edge_at
            self.qv_span = float(qindex.tilde_times[config.qv_blocks])
        else:
            self.qv_last = 0
            self.qv_weight = None
            self.qv_edge = None
            self.qv_span = 0.0

        if config.batch_block is not None:
            L = config.batch_block
            total = float(times[n])
            n_blocks = int(math.floor(total / L + 1e-12))
            # A step belongs to the block its right endpoint lands in; steps
            # past the last complete block are dropped.  Mirrors the batch
            # means estimator in .lilstat so the two agree term by term.
            idx = np.ceil(times / L - 1e-12).astype(np.int64) - 1
            np.clip(idx, 0, None, out=idx)
            contrib = np.zeros(n + 1, dtype=bool)
            contrib[1:] = idx[1:] < n_blocks
            self.batch_idx = idx
            self.batch_contrib = contrib
            self.n_batch_blocks = n_blocks
        else:
            self.batch_idx = None
            self.batch_contrib = None
            self.n_batch_blocks = 0

        # Injected failures trip halfway through so both earlier and later
        # bookkeeping paths get exercised.
        self.inj_step = (config.n_steps + 1) // 2


class _BlockStepFailure(Exception):
    """Internal: a vectorized step failed somewhere in a multi-path block."""

    def __init__(self, step: int, message: str) -> None:
        super().__init__(message)
        self.step = step
        self.message = message


# ---------------------------------------------------------------------------
# the block runner
# ---------------------------------------------------------------------------


def _simulate(
    config: EnsembleConfig, tables: _Tables, p_lo: int, B: int
) -> tuple[list[PathRecord], list[PathError]]:
    """Advance paths ``p_lo .. p_lo+B-1`` to the horizon in one vector walk."""
    start = time.perf_counter()
    model, scheme, f = config.model, config.scheme, config.f
    assert f is not None
    mu = config.mu_f
    dim = config.dim
    n_steps = config.n_steps
    taus = tables.taus
    live = tables.stat_live
    denom = tables.stat_denom
    cp_mask = tables.cp_mask
    win_mask = tables.window_mask
    qv_on = tables.qv_weight is not None
    batch_on = tables.batch_idx is not None

    states = np.tile(np.asarray(config.x0, dtype=np.float64), (B, 1))
    S = np.zeros(B)
    run_max = np.full(B, -np.inf)
    run_min = np.full(B, np.inf)
    win_max = np.full(B, -np.inf)
    win_min = np.full(B, np.inf)
    active = np.ones(B, dtype=bool)
    errors: list[PathError] = []
    cp_rows: list[tuple[float, np.ndarray, np.ndarray | None, np.ndarray, np.ndarray]] = []

    if qv_on:
        z_acc = np.zeros(B)
        qv_sum = np.zeros(B)
        qv_weight = tables.qv_weight
        qv_edge = tables.qv_edge
        qv_last = tables.qv_last
    if batch_on:
        batch_sums = np.zeros((tables.n_batch_blocks, B))
        batch_idx = tables.batch_idx
        batch_contrib = tables.batch_contrib

    x0_row = np.asarray(config.x0, dtype=np.float64)
    inj_rel = np.array(
        [p - p_lo for p in config.fail_paths if p_lo <= p < p_lo + B], dtype=np.int64
    )
    chunk = max(1, _NOISE_CHUNK // max(B * dim, 1))

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        n = 1
        while n <= n_steps:
            hi = min(n_steps, n + chunk - 1)
            xi = block_normals(config.seed, p_lo, B, n, hi + 1, draws_per_step=dim)
            for j in range(n, hi + 1):
                if inj_rel.size and j == tables.inj_step:
                    for rel in inj_rel:
                        errors.append(
                            PathError(
                                path_id=p_lo + int(rel),
                                step=j,
                                message="injected step failure",
                            )
                        )
                    active[inj_rel] = False
                    # Park failed paths at the start state so the solver
                    # keeps converging; their results are discarded.
                    states[inj_rel] = x0_row
                tau_j = float(taus[j])
                x_j = xi[:, j - n]
                try:
                    states = step_state(model, scheme, states, tau_j, x_j)
                except StepSolveError as exc:
                    raise _BlockStepFailure(j, str(exc)) from exc
                w = (f(states) - mu) * tau_j
                S += w
                if live[j]:
                    stat = S / denom[j]
                    np.maximum(run_max, stat, out=run_max)
                    np.minimum(run_min, stat, out=run_min)
                    if win_mask is not None and win_mask[j]:
                        np.maximum(win_max, stat, out=win_max)
                        np.minimum(win_min, stat, out=win_min)
                else:
                    stat = None
                if qv_on and j <= qv_last:
                    z_acc += qv_weight[j] * x_j[:, 0]
                    if qv_edge[j]:
                        qv_sum += z_acc * z_acc
                        z_acc[:] = 0.0
                if batch_on and batch_contrib[j]:
                    batch_sums[batch_idx[j]] += w
                if cp_mask[j]:
                    ok = np.isfinite(S) & np.all(np.isfinite(states), axis=1)
                    broke = active & ~ok
                    if np.any(broke):
                        for rel in np.flatnonzero(broke):
                            errors.append(
                                PathError(
                                    path_id=p_lo + int(rel),
                                    step=j,
                                    message="state or running sum became non-finite",
                                )
                            )
                        active &= ok
                        states[broke] = x0_row
                        S[broke] = 0.0
                    cp_rows.append(
                        (
                            float(tables.times[j]),
                            S.copy(),
                            None if stat is None else stat.copy(),
                            run_max.copy(),
                            run_min.copy(),
                        )
                    )
            n = hi + 1

    per_path = (time.perf_counter() - start) / max(B, 1)
    final_time = float(tables.times[n_steps])
    records: list[PathRecord] = []
    for i in np.flatnonzero(active):
        i = int(i)
        cps = []
        for t, s_col, stat_col, rmax_col, rmin_col in cp_rows:
            if stat_col is None:
                cps.append(LilCheckpoint(t=t, S=float(s_col[i]), stat=None, run_max=None, run_min=None))
            else:
                rm, rn = rmax_col[i], rmin_col[i]
                cps.append(
                    LilCheckpoint(
                        t=t,
                        S=float(s_col[i]),
                        stat=float(stat_col[i]),
                        run_max=None if rm == -np.inf else float(rm),
                        run_min=None if rn == np.inf else float(rn),
                    )
                )
        records.append(
            PathRecord(
                path_id=p_lo + i,
                checkpoints=tuple(cps),
                final_s=float(S[i]),
                final_time=final_time,
                final_state=tuple(float(v) for v in states[i]),
                qv_average=float(qv_sum[i] / tables.qv_span) if qv_on else None,
                batch_sums=tuple(float(v) for v in batch_sums[:, i]) if batch_on else (),
                window_max=None if win_max[i] == -np.inf else float(win_max[i]),
                window_min=None if win_min[i] == np.inf else float(win_min[i]),
                runtime=per_path,
            )
        )
    return records, errors


def _run_block(
    config: EnsembleConfig, tables: _Tables, p_lo: int, count: int
) -> tuple[list[PathRecord], list[PathError]]:
    """Run one block; on a vectorized step failure, isolate paths one by one.

    Noise addressing is absolute, so the single-path reruns reproduce the
    block run exactly and only the genuinely failing paths turn into errors.
    """
    try:
        return _simulate(config, tables, p_lo, count)
    except _BlockStepFailure as fail:
        if count == 1:
            return [], [PathError(path_id=p_lo, step=fail.step, message=fail.message)]
        records: list[PathRecord] = []
        errors: list[PathError] = []
        for p in range(p_lo, p_lo + count):
            r, e = _run_block(config, tables, p, 1)
            records.extend(r)
            errors.extend(e)
        return records, errors


def _block_task(
    item: tuple[EnsembleConfig, int, int],
) -> tuple[list[PathRecord], list[PathError]]:
    config, p_lo, count = item
    return _run_block(config, _Tables(config), p_lo, count)


# ---------------------------------------------------------------------------
# driver, aggregation, merging
# ---------------------------------------------------------------------------


def _aggregate(config: EnsembleConfig, records: Sequence[PathRecord]) -> tuple[VEstimate, ...]:
    """Every estimate of the fluctuation constant the run's data supports."""
    out: list[VEstimate] = []
    m = config.model
    assert config.f is not None
    if (
        isinstance(m, SodeModel)
        and m.linear is not None
        and m.dim == 1
        and m.linear.sigma > 0.0
        and config.f.name == "coordinate[0]"
        and config.mu_f == 0.0
    ):
        out.append(v_exact_linear(m.linear.a, m.linear.sigma))
    if len(records) >= 2:
        out.append(v_ensemble((r.final_s, r.final_time) for r in records))
    if config.batch_block is not None:
        pool = np.array([b for r in records for b in r.batch_sums])
        if pool.size >= 2:
            v2 = float(np.var(pool, ddof=1) / config.batch_block)
            stderr = math.sqrt(2.0 / (pool.size - 1)) * v2
            out.append(
                VEstimate(v2=v2, stderr=stderr, method="batch_means", n_blocks=int(pool.size))
            )
    return tuple(out)


def run_ensemble(
    config: EnsembleConfig, *, workers: int = 1, fail_fast: bool = False
) -> EnsembleSummary:
    """Simulate every configured path and summarize.

    ``workers`` distributes fixed-size path blocks over processes; the
    summary is identical for any worker count, down to the content hash.
    ``fail_fast=True`` turns the first per-path failure into a raised
    :class:`StepSolveError` instead of an error record.
    """
    if not isinstance(config, EnsembleConfig):
        raise ConfigurationError(f"expected an EnsembleConfig, got {config!r}")
    if not isinstance(workers, (int, np.integer)) or isinstance(workers, bool) or workers < 1:
        raise ConfigurationError(f"workers must be an integer >= 1, got {workers!r}")

    blocks = []
    lo, end = config.first_path, config.first_path + config.paths
    while lo < end:
        blocks.append((lo, min(PATH_BLOCK, end - lo)))
        lo += PATH_BLOCK

    records: list[PathRecord] = []
    errors: list[PathError] = []

    def absorb(r: list[PathRecord], e: list[PathError]) -> None:
        records.extend(r)
        errors.extend(e)
        if e and fail_fast:
            first = e[0]
            raise StepSolveError(
                f"path {first.path_id} failed at step {first.step}: {first.message}"
            )

    if int(workers) == 1 or len(blocks) <= 1:
        tables = _Tables(config)
        for b_lo, b_count in blocks:
            absorb(*_run_block(config, tables, b_lo, b_count))
    else:
        _Tables(config)  # validate grid-dependent settings before forking
        items = [(config, b_lo, b_count) for b_lo, b_count in blocks]
        with ProcessPoolExecutor(max_workers=min(int(workers), len(blocks))) as pool:
            for r, e in pool.map(_block_task, items):
                absorb(r, e)

    records.sort(key=lambda r: r.path_id)
    errors.sort(key=lambda e: e.path_id)
    return EnsembleSummary(
        config=config,
        fingerprint=config_fingerprint(config),
        records=tuple(records),
        errors=tuple(errors),
        v_estimates=_aggregate(config, records),
    )


def merge_summaries(a: EnsembleSummary, b: EnsembleSummary) -> EnsembleSummary:
    """Combine two slices of one experiment into a single summary.

    Requires equal config fingerprints and disjoint path ids; aggregates are
    recomputed from the union, so merging is commutative and associative and
    an empty slice is an identity.
    """
    for s in (a, b):
        if not isinstance(s, EnsembleSummary):
            raise ConfigurationError(f"expected an EnsembleSummary, got {s!r}")
    if a.fingerprint != b.fingerprint:
        raise ConfigurationError(
            "cannot merge summaries of different experiments: fingerprints "
            f"{a.fingerprint[:12]}... and {b.fingerprint[:12]}... differ"
        )
    ids_a = {r.path_id for r in a.records} | {e.path_id for e in a.errors}
    ids_b = {r.path_id for r in b.records} | {e.path_id for e in b.errors}
    overlap = sorted(ids_a & ids_b)
    if overlap:
        shown = ", ".join(str(p) for p in overlap[:5])
        more = "" if len(overlap) <= 5 else f" (+{len(overlap) - 5} more)"
        raise ConfigurationError(f"summaries overlap on path ids {shown}{more}")

    if b.config.paths == 0:
        cfg = a.config
    elif a.config.paths == 0:
        cfg = b.config
    else:
        cfg = replace(
            a.config,
            paths=a.config.paths + b.config.paths,
            first_path=min(a.config.first_path, b.config.first_path),
            fail_paths=tuple(sorted(a.config.fail_paths + b.config.fail_paths)),
        )
    records = tuple(sorted(a.records + b.records, key=lambda r: r.path_id))
    errors = tuple(sorted(a.errors + b.errors, key=lambda e: e.path_id))
    return EnsembleSummary(
        config=cfg,
        fingerprint=a.fingerprint,
        records=records,
        errors=errors,
        v_estimates=_aggregate(cfg, records),
    )
