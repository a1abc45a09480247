"""One-step schemes and the single-path reference driver.

Four schemes are provided:

``bem``          drift-implicit (backward) Euler, the workhorse: solves
                 ``y' = y + b(y') tau + diffusion(y) dW`` each step, which
                 inherits the drift's one-sided contraction for every step
                 size.  Linear models use the closed-form solve.
``exp_euler``    exponential Euler for spectral models: the semigroup factor
                 ``exp(-lambda_j tau)`` is applied exactly, reaction and
                 noise are frozen over the step.
``exact_ou``     the exact transition of the scalar linear model; reference
                 and coupling partner for convergence studies.
``em_baseline``  explicit Euler.  Deliberately included as the negative
                 control: with decreasing-but-capped steps it can lose moment
                 bounds that the implicit scheme keeps.

The driver walks a path over a :class:`~lilstep.grid.TimeGrid`, drawing the
step noise from a :class:`~lilstep.mc.PathStream`, so a path is reproducible
bit-for-bit from ``(seed, path id)`` alone.  Clock values are taken from the
grid's compensated times, never re-accumulated.

Noise convention: ``dw`` arguments to ``bem_step`` / ``em_baseline_step`` are
Brownian increments (variance ``tau``); ``exp_euler_step`` takes mode
increments with variance ``q_j tau``; ``exact_ou_step`` takes a standard
normal.  The driver applies these scalings before calling the steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Protocol, Sequence

import numpy as np
import numpy.typing as npt

from .errors import ConfigurationError, StepSolveError
from .grid import TimeGrid
from .mc import PathStream
from .models import SodeModel, SpectralSpdeModel, apply_reaction

FloatArray = npt.NDArray[np.float64]

SchemeKind = Literal["bem", "exp_euler", "exact_ou", "em_baseline"]
_VALID_SCHEMES = ("bem", "exp_euler", "exact_ou", "em_baseline")
_SODE_SCHEMES = ("bem", "exact_ou", "em_baseline")


@dataclass(frozen=True)
class SchemeSpec:
    """Scheme selection plus implicit-solve controls (used by ``bem`` only)."""

    kind: SchemeKind
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    def __post_init__(self) -> None:
        if self.kind not in _VALID_SCHEMES:
            raise ConfigurationError(
                f"scheme.kind must be one of {_VALID_SCHEMES}, got {self.kind!r}"
            )
        if not (math.isfinite(self.newton_tol) and self.newton_tol > 0.0):
            raise ConfigurationError(
                f"scheme.newton_tol must be > 0, got {self.newton_tol!r}"
            )
        if self.newton_max_iter < 1:
            raise ConfigurationError(
                f"scheme.newton_max_iter must be >= 1, got {self.newton_max_iter!r}"
            )


@dataclass
class PathState:
    """Where a walk currently stands: step index, clock time, state vector."""

    n: int
    t: float
    y: FloatArray


def _drift_derivative(model: SodeModel, z: FloatArray) -> FloatArray:
    """Elementwise finite-difference d b / d y for diagonal Newton steps."""
    h = (np.finfo(np.float64).eps ** (1.0 / 3.0)) * (1.0 + np.abs(z))
    return (np.asarray(model.drift(z + h)) - np.asarray(model.drift(z - h))) / (2.0 * h)


def _bem_solve_elementwise(
    model: SodeModel, spec: SchemeSpec, rhs: FloatArray, tau: float
) -> FloatArray:
    """Solve ``z - tau b(z) = rhs`` componentwise by damped Newton.

    Falls back to a few fixed-point sweeps when a Newton step stalls; if the
    residual still exceeds tolerance afterwards, raises
    :class:`StepSolveError` carrying the worst residual.  For non-monotone
    drifts the returned root is the one the damped iteration reached from
    ``rhs``; no global uniqueness is claimed (see the scheme notes).
    """
    z = rhs.copy()
    scale = 1.0 + np.abs(rhs)
    residual = z - tau * np.asarray(model.drift(z)) - rhs
    for _ in range(spec.newton_max_iter):
        bad = np.abs(residual) > spec.newton_tol * scale
        if not np.any(bad):
            return z
        deriv = 1.0 - tau * _drift_derivative(model, z)
        # Guard singular linearizations; the damping loop handles the rest.
        deriv = np.where(np.abs(deriv) < 1e-12, np.copysign(1e-12, deriv), deriv)
        step = residual / deriv
        lam = 1.0
        for _ in range(8):
            trial = z - lam * step * bad
            trial_res = trial - tau * np.asarray(model.drift(trial)) - rhs
            improved = np.abs(trial_res) <= np.abs(residual)
            if np.all(improved | ~bad):
                z, residual = trial, trial_res
                break
            lam *= 0.5
        else:
            # Fixed-point sweep as a last resort for this iteration.
            z = rhs + tau * np.asarray(model.drift(z))
            residual = z - tau * np.asarray(model.drift(z)) - rhs
    worst = float(np.max(np.abs(residual)))
    if np.any(np.abs(residual) > spec.newton_tol * scale):
        raise StepSolveError(
            f"implicit step failed to converge: residual {worst:.3e} after "
            f"{spec.newton_max_iter} iterations (tau = {tau:.3e})",
            residual=worst,
        )
    return z


def bem_step(
    model: SodeModel,
    spec: SchemeSpec,
    y: FloatArray,
    tau: float,
    dw: FloatArray,
) -> FloatArray:
    """One drift-implicit Euler step from ``y`` with Brownian increment ``dw``.

    Shapes: ``y`` and ``dw`` may be a single state ``(dim,)`` or a batch of
    scalar states ``(m,)`` when ``dim == 1``; the implicit solve is diagonal
    in both cases.
    """
    if tau < 0.0:
        raise ConfigurationError(f"tau must be >= 0, got {tau}")
    y = np.asarray(y, dtype=np.float64)
    dw = np.asarray(dw, dtype=np.float64)
    amp = model.diffusion_at(y)
    rhs = y + amp * dw
    if model.linear is not None:
        return rhs / (1.0 + model.linear.a * tau)
    return _bem_solve_elementwise(model, spec, rhs, tau)


def em_baseline_step(
    model: SodeModel, y: FloatArray, tau: float, dw: FloatArray
) -> FloatArray:
    """One explicit Euler step (negative-control scheme)."""
    y = np.asarray(y, dtype=np.float64)
    return y + tau * np.asarray(model.drift(y)) + model.diffusion_at(y) * np.asarray(dw)


def exp_euler_step(
    model: SpectralSpdeModel, y: FloatArray, tau: float, dw: FloatArray
) -> FloatArray:
    """One exponential Euler step on mode coefficients.

    ``dw`` carries the mode increments (variance ``q_j tau``); with
    ``tau == 0`` and zero noise this is the identity.
    """
    if tau < 0.0:
        raise ConfigurationError(f"tau must be >= 0, got {tau}")
    y = np.asarray(y, dtype=np.float64)
    decay = np.exp(-model.eigenvalues * tau)
    return decay * (y + apply_reaction(model, y) * tau + np.asarray(dw))


def exact_ou_step(
    model: SodeModel, y: FloatArray, tau: float, xi: FloatArray
) -> FloatArray:
    """Exact linear-model transition driven by a standard normal ``xi``."""
    if model.linear is None:
        raise ConfigurationError("exact_ou requires a linear model")
    if tau < 0.0:
        raise ConfigurationError(f"tau must be >= 0, got {tau}")
    a, sigma = model.linear.a, model.linear.sigma
    decay = math.exp(-a * tau)
    sd = sigma * math.sqrt((1.0 - decay * decay) / (2.0 * a))
    return np.asarray(y, dtype=np.float64) * decay + sd * np.asarray(xi)


class Observer(Protocol):
    """Anything that wants state snapshots at chosen step indices."""

    checkpoints: Sequence[int]

    def record(self, n: int, t: float, y: FloatArray) -> None: ...


def _noise_dim(model: SodeModel | SpectralSpdeModel) -> int:
    return model.modes if isinstance(model, SpectralSpdeModel) else model.dim


def step_state(
    model: SodeModel | SpectralSpdeModel,
    scheme: SchemeSpec,
    y: FloatArray,
    tau: float,
    xi: FloatArray,
) -> FloatArray:
    """Advance one step from raw standard normals ``xi``.

    Owns the per-scheme noise scaling (Brownian sqrt(tau) for the Euler
    family, mode weights for spectral models, none for the exact
    transition), so every caller steps identically.
    """
    if scheme.kind == "bem":
        return bem_step(model, scheme, y, tau, math.sqrt(tau) * xi)
    if scheme.kind == "em_baseline":
        return em_baseline_step(model, y, tau, math.sqrt(tau) * xi)
    if scheme.kind == "exact_ou":
        return exact_ou_step(model, y, tau, xi)
    return exp_euler_step(model, y, tau, np.sqrt(model.q_weights * tau) * xi)


def simulate_path(
    model: SodeModel | SpectralSpdeModel,
    scheme: SchemeSpec,
    grid: TimeGrid,
    x0: FloatArray | float,
    stream: PathStream,
    observers: Sequence[Observer] = (),
) -> PathState:
    """Walk one path over the full grid, notifying observers along the way.

    Observers declare strictly increasing checkpoint indices in
    ``[0, n_max]``; each is called exactly once per checkpoint, in step
    order.  Returns the final :class:`PathState`; observers keep whatever
    they recorded.  Reruns with the same stream are bit-identical.
    """
    spde = isinstance(model, SpectralSpdeModel)
    if spde and scheme.kind != "exp_euler":
        raise ConfigurationError(
            f"spectral models require scheme.kind = 'exp_euler', got {scheme.kind!r}"
        )
    if not spde and scheme.kind not in _SODE_SCHEMES:
        raise ConfigurationError(
            f"scheme.kind {scheme.kind!r} applies to spectral models only"
        )
    dim = _noise_dim(model)
    if stream.draws_per_step != dim:
        raise ConfigurationError(
            f"stream supplies {stream.draws_per_step} draws/step, model needs {dim}"
        )

    y = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    if y.shape != (dim,):
        raise ConfigurationError(f"x0 must have shape ({dim},), got {y.shape}")

    pending: list[tuple[int, Observer]] = []
    for obs in observers:
        cps = list(obs.checkpoints)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigurationError("observer checkpoints must be strictly increasing")
        if cps and (cps[0] < 0 or cps[-1] > grid.n_max):
            raise ConfigurationError(
                f"observer checkpoints must lie in [0, {grid.n_max}]"
            )
        for c in cps:
            pending.append((c, obs))
    pending.sort(key=lambda item: item[0])
    next_cp = 0

    while next_cp < len(pending) and pending[next_cp][0] == 0:
        pending[next_cp][1].record(0, 0.0, y)
        next_cp += 1

    steps = grid.steps
    times = grid.times
    for n in range(1, grid.n_max + 1):
        y = step_state(model, scheme, y, steps[n], stream.step_normals(n))
        t = float(times[n])
        while next_cp < len(pending) and pending[next_cp][0] == n:
            pending[next_cp][1].record(n, t, y)
            next_cp += 1
    return PathState(n=grid.n_max, t=float(times[grid.n_max]), y=y)


@dataclass
class PathRecorder:
    """Observer that keeps a dense (or strided) trace of the walk."""

    checkpoints: Sequence[int]

    def __post_init__(self) -> None:
        self.indices: list[int] = []
        self.times: list[float] = []
        self.states: list[FloatArray] = []

    def record(self, n: int, t: float, y: FloatArray) -> None:
        self.indices.append(n)
        self.times.append(t)
        self.states.append(y.copy())
