"""Decreasing-step time grids and their integer-clock subsequence.

A simulation grid is the cumulative clock ``t_n = sum_{k<=n} tau_k`` of a
deterministic step sequence ``tau_k``.  Three step laws are supported:

* ``harmonic``   : ``tau_k = c / k`` (the classic choice),
* ``power``      : ``tau_k = c * k**(-theta)`` with ``theta in (0, 1]``,
* ``constant``   : ``tau_k = c``; kept as a baseline that deliberately does
  not satisfy the vanishing-step requirements of the fluctuation theory.

All laws are clipped from above by a cap ``tau_bar``, so ``tau_k =
min(law(k), tau_bar)``.  Index 0 is a sentinel: ``tau_0 = 0`` and ``t_0 = 0``;
step ``k >= 1`` advances the clock from ``t_{k-1}`` to ``t_k``.

The integer-clock subsequence picks, for every integer ``k``, the last grid
index whose time has not yet passed ``k``:

    ``n_(k) = max{n : t_n <= k}``,   so   ``t_n(k) <= k < t_n(k)+1``.

Its times ``tilde_t_k = t_{n_(k)}`` form an almost-unit-spaced clock
(``k - tau_bar <= tilde_t_k <= k``) on which block statistics such as
quadratic variation are naturally aggregated.  ``n_(0) = 0`` by the sentinel
convention (``t_0 = 0 <= 0 < t_1`` whenever ``t_1 > 0``).

Times are accumulated with compensated (blockwise `math.fsum`) summation so
that the error of ``t_n`` stays at a few ulps even for millions of steps; a
plain running float sum would drift linearly with ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import numpy.typing as npt

from .errors import ConfigurationError, HorizonError

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

StepKind = Literal["harmonic", "power", "constant"]

_VALID_KINDS = ("harmonic", "power", "constant")

# Blocks for compensated accumulation.  Within a block a plain float64 cumsum
# is fine (error ~ block_len * eps relative to the block sum); across blocks
# the offsets are carried by math.fsum, which is exactly rounded.
_CUMSUM_BLOCK = 8192


@dataclass(frozen=True)
class StepSpec:
    """Declares a step law ``tau_k = min(law(k), cap)`` for ``k >= 1``.

    ``theta`` is only meaningful for the ``power`` kind; it defaults to 1.0
    and is ignored otherwise.  ``scale`` is the constant ``c`` of the law.
    """

    kind: StepKind
    scale: float = 1.0
    theta: float = 1.0
    cap: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in _VALID_KINDS:
            raise ConfigurationError(
                f"grid.kind must be one of {_VALID_KINDS}, got {self.kind!r}"
            )
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise ConfigurationError(
                f"grid.scale must be a positive finite real, got {self.scale!r}"
            )
        if not (math.isfinite(self.cap) and self.cap > 0.0):
            raise ConfigurationError(
                f"grid.cap must be a positive finite real, got {self.cap!r}"
            )
        if self.kind == "power" and not (0.0 < self.theta <= 1.0):
            raise ConfigurationError(
                f"grid.theta must lie in (0, 1] for power grids, got {self.theta!r}"
            )

    def step_sizes(self, k: IntArray) -> FloatArray:
        """Vectorized ``tau_k`` for an array of indices ``k >= 1``."""
        k = np.asarray(k, dtype=np.float64)
        if self.kind == "harmonic":
            raw = self.scale / k
        elif self.kind == "power":
            raw = self.scale * k ** (-self.theta)
        else:
            raw = np.full_like(k, self.scale)
        return np.minimum(raw, self.cap)

    @property
    def decay_exponent(self) -> float:
        """Exponent ``theta`` such that ``tau_k ~ k**(-theta)`` eventually.

        Harmonic grids decay like 1/k, constant grids do not decay at all.
        Used by the symbolic step-condition checks.
        """
        if self.kind == "harmonic":
            return 1.0
        if self.kind == "power":
            return self.theta
        return 0.0

    @property
    def vanishing(self) -> bool:
        """Whether ``tau_k -> 0``; constant grids are flagged non-vanishing."""
        return self.kind != "constant"


def _compensated_cumsum(values: FloatArray) -> FloatArray:
    """Cumulative sum whose per-element error stays at the few-ulp level.

    Block offsets are accumulated with Kahan compensation on exact
    `math.fsum` block totals; inside each block a short float64 cumsum
    cannot drift.
    """
    out = np.empty_like(values)
    offset = 0.0
    comp = 0.0  # Kahan carry for the running offset
    n = values.shape[0]
    for start in range(0, n, _CUMSUM_BLOCK):
        chunk = values[start : start + _CUMSUM_BLOCK]
        np.cumsum(chunk, out=out[start : start + chunk.shape[0]])
        if offset != 0.0:
            out[start : start + chunk.shape[0]] += offset
        total = math.fsum(chunk.tolist())
        y = total - comp
        t = offset + y
        comp = (t - offset) - y
        offset = t
    return out


@dataclass(frozen=True)
class TimeGrid:
    """A realized grid: step sizes and their compensated cumulative clock.

    ``steps[0] == 0`` is the sentinel; ``times[0] == 0``.  Arrays are marked
    read-only so a grid can be shared across threads and processes.
    """

    spec: StepSpec
    steps: FloatArray
    times: FloatArray
    n_max: int

    @property
    def tau_bar(self) -> float:
        """Supremum of the step sequence (attained at k=1 for decaying laws)."""
        return float(self.steps[1]) if self.n_max >= 1 else 0.0

    @property
    def horizon(self) -> float:
        """Final clock time ``t_{n_max}``."""
        return float(self.times[self.n_max])


def build_grid(spec: StepSpec, n_steps: int) -> TimeGrid:
    """Materialize ``n_steps`` steps of a step law.

    Returns arrays of length ``n_steps + 1`` including the index-0 sentinel.
    Raises :class:`ConfigurationError` for a nonpositive step count or a step
    law whose parameters are out of range (validated by ``StepSpec``).
    """
    if not isinstance(n_steps, (int, np.integer)) or isinstance(n_steps, bool):
        raise ConfigurationError(f"grid.n_steps must be an integer, got {n_steps!r}")
    if n_steps < 1:
        raise ConfigurationError(f"grid.n_steps must be >= 1, got {n_steps}")
    n_steps = int(n_steps)

    steps = np.empty(n_steps + 1, dtype=np.float64)
    steps[0] = 0.0
    steps[1:] = spec.step_sizes(np.arange(1, n_steps + 1, dtype=np.int64))
    times = _compensated_cumsum(steps)

    # Strict monotonicity can only fail if a step underflows the clock's ulp;
    # that is out of supported range rather than something to paper over.
    if not np.all(np.diff(times) > 0.0):
        raise ConfigurationError(
            "grid times are not strictly increasing; the requested horizon "
            "exceeds float64 resolution for this step law"
        )

    steps.setflags(write=False)
    times.setflags(write=False)
    return TimeGrid(spec=spec, steps=steps, times=times, n_max=n_steps)


@dataclass(frozen=True)
class QuasiUniformIndex:
    """Integer-clock subsequence of a grid.

    ``n_of[k]`` is the grid index ``n_(k)``; ``tilde_times[k] = t_{n_(k)}``
    and ``tilde_steps[k] = tilde_t_k - tilde_t_{k-1}`` (index 0 is again a
    zero sentinel).  Bounds guaranteed by construction, with ``tau_bar`` the
    grid's largest step:

    * ``k - tau_bar <= tilde_times[k] <= k``
    * ``tilde_steps[k] <= 1 + 2 * tau_bar``
    """

    k_max: int
    n_of: IntArray
    tilde_times: FloatArray
    tilde_steps: FloatArray
    tau_bar: float = field(repr=False, default=0.0)


def quasi_uniform_index(grid: TimeGrid, k_max: int) -> QuasiUniformIndex:
    """Locate ``n_(k) = max{n : t_n <= k}`` for ``k = 0 .. k_max``.

    Every integer ``k`` must be bracketed, i.e. some ``t_{n+1}`` beyond it
    must exist on the grid; otherwise a :class:`HorizonError` names the first
    integer the grid cannot reach.
    """
    if not isinstance(k_max, (int, np.integer)) or isinstance(k_max, bool):
        raise ConfigurationError(f"k_max must be an integer, got {k_max!r}")
    if k_max < 0:
        raise ConfigurationError(f"k_max must be >= 0, got {k_max}")
    k_max = int(k_max)

    times = grid.times
    # Bracketing requires k < t_{n_max} strictly: the successor time t_{n+1}
    # certifies t_n <= k < t_{n+1}.
    if k_max >= times[grid.n_max]:
        first_bad = int(math.ceil(times[grid.n_max]))
        raise HorizonError(
            f"grid horizon t_{grid.n_max} = {times[grid.n_max]:.6g} cannot "
            f"bracket the integer clock at k = {first_bad}; extend the grid"
        )

    ks = np.arange(k_max + 1, dtype=np.float64)
    n_of = np.searchsorted(times, ks, side="right").astype(np.int64) - 1
    tilde_times = times[n_of]
    tilde_steps = np.empty_like(tilde_times)
    tilde_steps[0] = 0.0
    np.subtract(tilde_times[1:], tilde_times[:-1], out=tilde_steps[1:])

    tau_bar = grid.tau_bar
    # Defensive: these hold by construction, so a violation is a logic bug.
    if k_max >= 1:
        slack = 1e-9 * (1.0 + tau_bar)
        if not (
            np.all(tilde_times <= ks + slack)
            and np.all(tilde_times >= ks - tau_bar - slack)
            and np.all(tilde_steps[1:] <= 1.0 + 2.0 * tau_bar + slack)
        ):
            raise AssertionError("integer-clock subsequence bounds violated")

    for arr in (n_of, tilde_times, tilde_steps):
        arr.setflags(write=False)
    return QuasiUniformIndex(
        k_max=k_max,
        n_of=n_of,
        tilde_times=tilde_times,
        tilde_steps=tilde_steps,
        tau_bar=tau_bar,
    )


def tilde_of(index: QuasiUniformIndex, grid: TimeGrid, n: int) -> int:
    """Block locator: the ``k`` with ``tilde_t_k <= t_n < tilde_t_{k+1}``.

    Fixed point at subsequence members: ``tilde_of(n_(k)) == k``.  Raises
    :class:`HorizonError` when ``t_n`` lies at or beyond the last subsequence
    time, where no upper bracket exists.
    """
    if not (0 <= n <= grid.n_max):
        raise ConfigurationError(f"n must lie in [0, {grid.n_max}], got {n}")
    t_n = grid.times[n]
    k = int(np.searchsorted(index.tilde_times, t_n, side="right")) - 1
    if k >= index.k_max:
        raise HorizonError(
            f"t_{n} = {t_n:.6g} is not below tilde_t_{index.k_max} = "
            f"{index.tilde_times[index.k_max]:.6g}; increase k_max"
        )
    return k
