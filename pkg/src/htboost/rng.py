"""Reproducible random streams and uniform random rotations.

Every random draw in htboost goes through :class:`RngStream`, a value
object naming a Philox (counter-based) key.  Substreams for repetitions,
grid candidates and ensemble members are derived with
:meth:`RngStream.child`, so parallel workers reproduce the exact numbers
a sequential run would produce.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import DegenerateMatrixError, InvalidParameterError, RngDegeneracyError

__all__ = [
    "RngStream",
    "as_generator",
    "gaussian_matrix",
    "householder_qr",
    "sample_rotation",
]

_U64 = (1 << 64) - 1
MAX_ROTATION_RETRIES = 16


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream_id) pair naming an independent Philox stream.

    Streams are immutable.  ``generator()`` always starts the stream from
    its first counter value, so two calls hand out identical sequences.
    """

    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= int(value) <= _U64:
                raise InvalidParameterError(f"{name} must be a 64-bit unsigned integer, got {value}")
            object.__setattr__(self, name, int(value))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed | (self.stream_id << 64)))

    def child(self, *ids: int) -> "RngStream":
        """Derive a substream keyed by a path of nonnegative integers."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *map(int, ids)))
        return RngStream(self.seed, int(seq.generate_state(1, np.uint64)[0]))


RngLike = Union[RngStream, np.random.Generator, int]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Turn a stream, seed or live generator into a numpy Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def _check_dim(d) -> int:
    if int(d) != d or d < 1:
        raise InvalidParameterError(f"dimension must be a positive integer, got {d}")
    return int(d)


def gaussian_matrix(d: int, rng: RngLike) -> np.ndarray:
    """Draw a ``d x d`` matrix of i.i.d. standard normal entries."""
    d = _check_dim(d)
    return as_generator(rng).standard_normal((d, d))


def householder_qr(m) -> tuple[np.ndarray, np.ndarray]:
    """Householder QR factorisation ``m = Q @ W`` of a square matrix.

    The triangular factor is sign-normalised so that its diagonal is
    positive, which makes the factorisation unique and ``Q`` Haar
    distributed when ``m`` has i.i.d. Gaussian entries.

    Parameters
    ----------
    m : array_like, shape (d, d)
        Finite square matrix.

    Returns
    -------
    Q : ndarray, shape (d, d)
        Orthogonal factor.
    W : ndarray, shape (d, d)
        Upper-triangular factor with positive diagonal.

    Raises
    ------
    DegenerateMatrixError
        If a column is linearly dependent on the previous ones.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameterError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameterError("matrix has non-finite entries")
    d = a.shape[0]
    scale = np.max(np.abs(a)) if a.size else 0.0
    tol = max(d, 1) * np.finfo(float).eps * scale
    q = np.eye(d)
    for k in range(d):
        x = a[k:, k]
        norm = np.linalg.norm(x)
        if norm <= tol:
            raise DegenerateMatrixError(f"zero pivot in column {k}")
        if k == d - 1 or not np.any(x[1:]):
            continue
        alpha = -norm if x[0] >= 0 else norm
        v = x.copy()
        v[0] -= alpha
        v /= np.linalg.norm(v)
        a[k:, k:] -= 2.0 * np.outer(v, v @ a[k:, k:])
        q[:, k:] -= 2.0 * np.outer(q[:, k:] @ v, v)
        a[k + 1:, k] = 0.0
    signs = np.where(np.diag(a) < 0, -1.0, 1.0)
    return q * signs, np.triu(a * signs[:, None])


def sample_rotation(d: int, rng: RngLike) -> np.ndarray:
    """Sample a uniformly distributed proper rotation (det = +1).

    A Gaussian matrix is QR factorised; if the orthogonal factor is a
    reflection its first column is negated.
    """
    d = _check_dim(d)
    gen = as_generator(rng)
    for _ in range(MAX_ROTATION_RETRIES):
        g = gaussian_matrix(d, gen)
        if d == 1:
            # the only proper rotation of the line
            if g[0, 0] == 0:
                continue
            return np.ones((1, 1))
        try:
            q, _ = householder_qr(g)
        except DegenerateMatrixError:
            continue
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        return q
    raise RngDegeneracyError(f"{MAX_ROTATION_RETRIES} consecutive degenerate Gaussian matrices")
