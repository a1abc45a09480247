"""Counter-based random streams addressed by (seed, path, counter).

Randomness contract
-------------------
Every standard-normal draw is a pure function of a 192-bit address
``(seed, path, counter)``: the address keys a Philox-4x64 block cipher, the
resulting 64-bit word is mapped to a uniform in (0, 1) by
``u = ((word >> 11) + 0.5) * 2**-53``, and the normal is the inverse-CDF image
``ndtri(u)``.  Consequences the rest of the package relies on:

* reruns are bit-identical for a fixed (configuration, seed), no matter how
  paths are chunked or how many worker processes participate;
* disjoint addresses are independent, so per-path parallelism needs no
  coordination;
* any single draw can be reproduced in isolation (``gaussian_draw``).

Step ``n >= 1`` of a path consumes the ``draws_per_step`` counters starting
at ``(n - 1) * draws_per_step``; for spectral models, mode ``j`` (0-based)
sits at counter offset ``j`` inside that block.

The inverse-CDF map clips tails at ``|z| <= ndtri(2**-54) ~ 8.37``; mass
beyond that is ~1e-16 per draw, far below anything resolvable at the
ensemble sizes the engine targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.special import ndtri

from .errors import ConfigurationError

FloatArray = npt.NDArray[np.float64]

_MAX_U64 = 2**64
_U53_SCALE = 2.0**-53


def _check_u64(name: str, value: int) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if not (0 <= value < _MAX_U64):
        raise ConfigurationError(f"{name} must lie in [0, 2^64), got {value}")
    return int(value)


@dataclass(frozen=True)
class StreamKey:
    """Address of one standard-normal draw: (seed, path, counter), 64-bit each."""

    seed: int
    path: int
    counter: int

    def __post_init__(self) -> None:
        _check_u64("seed", self.seed)
        _check_u64("path", self.path)
        _check_u64("counter", self.counter)


def _raw_words(seed: int, path: int, start: int, count: int) -> npt.NDArray[np.uint64]:
    """Philox words at global indices [start, start + count)."""
    block = start >> 2
    offset = start & 3
    bg = np.random.Philox(
        key=np.array([seed, path], dtype=np.uint64),
        counter=np.array([block, 0, 0, 0], dtype=np.uint64),
    )
    nwords = offset + count
    nblocks = (nwords + 3) >> 2
    words = bg.random_raw(4 * nblocks)
    return words[offset : offset + count]


def _normals_from_words(words: npt.NDArray[np.uint64]) -> FloatArray:
    u = (words >> np.uint64(11)).astype(np.float64)
    u += 0.5
    u *= _U53_SCALE
    return ndtri(u, out=u)


def normal_stream(seed: int, path: int, start: int, count: int) -> FloatArray:
    """Standard normals at counters [start, start + count) of one path stream."""
    _check_u64("seed", seed)
    _check_u64("path", path)
    _check_u64("counter", start)
    if count < 0:
        raise ConfigurationError(f"count must be >= 0, got {count}")
    if count == 0:
        return np.empty(0)
    return _normals_from_words(_raw_words(seed, path, start, count))


def gaussian_draw(key: StreamKey) -> float:
    """The single standard normal addressed by ``key``."""
    return float(normal_stream(key.seed, key.path, key.counter, 1)[0])


@dataclass(frozen=True)
class PathStream:
    """Draw stream of one simulated path.

    ``draws_per_step`` is the model's noise dimension; step ``n`` (1-based)
    owns counters ``[(n-1)*dps, n*dps)``.
    """

    seed: int
    path: int
    draws_per_step: int = 1

    def __post_init__(self) -> None:
        _check_u64("seed", self.seed)
        _check_u64("path", self.path)
        if self.draws_per_step < 1:
            raise ConfigurationError(
                f"draws_per_step must be >= 1, got {self.draws_per_step}"
            )

    def step_normals(self, n: int) -> FloatArray:
        """The ``draws_per_step`` standard normals attached to step ``n >= 1``."""
        if n < 1:
            raise ConfigurationError(f"step index must be >= 1, got {n}")
        dps = self.draws_per_step
        return normal_stream(self.seed, self.path, (n - 1) * dps, dps)

    def range_normals(self, n0: int, n1: int) -> FloatArray:
        """Normals for steps ``n0 .. n1 - 1`` as an array of shape (n1-n0, dps)."""
        if not (1 <= n0 <= n1):
            raise ConfigurationError(f"need 1 <= n0 <= n1, got [{n0}, {n1})")
        dps = self.draws_per_step
        flat = normal_stream(self.seed, self.path, (n0 - 1) * dps, (n1 - n0) * dps)
        return flat.reshape(n1 - n0, dps)


def derive_seed(seed: int, path: int, tag: str, *indices: int) -> int:
    """A 64-bit sub-stream seed, hashed from a parent key plus a purpose tag.

    Hash separation keeps diagnostic sub-simulations (such as nested
    conditional-expectation runs) off the addresses used by the main paths:
    a Philox key collision between the parent (seed, path) space and a
    SHA-derived one would need a 128-bit coincidence.
    """
    import hashlib

    _check_u64("seed", seed)
    _check_u64("path", path)
    material = f"{seed}:{path}:{tag}:" + ":".join(str(int(i)) for i in indices)
    digest = hashlib.sha256(material.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


def block_normals(
    seed: int, first_path: int, n_paths: int, n0: int, n1: int, draws_per_step: int = 1
) -> FloatArray:
    """Per-step normals for a contiguous block of paths, shape (paths, steps, dps).

    Row ``p`` holds exactly what ``PathStream(seed, first_path + p,
    draws_per_step).range_normals(n0, n1)`` returns, so ensemble code that
    walks paths in blocks draws the same noise regardless of how the blocks
    are cut.
    """
    if n_paths < 1:
        raise ConfigurationError(f"n_paths must be >= 1, got {n_paths}")
    out = np.empty((n_paths, n1 - n0, draws_per_step))
    for p in range(n_paths):
        stream = PathStream(seed, first_path + p, draws_per_step=draws_per_step)
        out[p] = stream.range_normals(n0, n1)
    return out
