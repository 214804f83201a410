"""Histogram transforms ``H(x) = s R x + b`` and the bins they induce.

A point's bin is identified by ``floor(H(x))`` taken componentwise.  The
floor is a true floor, so coordinates of ``H(x)`` that fall below zero
land in negative bins, and a coordinate that is exactly integral belongs
to the bin above it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError
from .rng import RngLike, as_generator, sample_rotation

__all__ = ["HistogramTransform", "sample_transform", "apply", "bin_key", "as_rows"]

# keys are packed into one int64 when the mixed radix fits below this
_MAX_CODE = 1 << 62


def as_rows(xs, dim: int) -> np.ndarray:
    """Coerce a point or a batch of points into an ``(n, dim)`` matrix.

    A 1-D input is a batch of scalars when ``dim == 1`` and a single
    point otherwise.
    """
    x = np.asarray(xs, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(-1, 1) if dim == 1 else x.reshape(1, -1)
    return x


def is_single_point(xs, dim: int) -> bool:
    x = np.asarray(xs)
    return x.ndim == 0 or (x.ndim == 1 and (dim > 1 or x.size == 1))


@dataclass(frozen=True, eq=False)
class HistogramTransform:
    """Random rotation, isotropic stretch and translation of ``[0, 1]^d``.

    Attributes
    ----------
    rotation : ndarray, shape (d, d)
    bin_width : float
        Side length ``h`` of a cell in input space; ``stretch`` is ``1/h``.
    translation : ndarray, shape (d,)
        Offset ``b`` with entries in ``[0, 1)``.
    """

    rotation: np.ndarray
    bin_width: float
    translation: np.ndarray = field(default=None)

    def __post_init__(self):
        rot = np.atleast_2d(np.asarray(self.rotation, dtype=float))
        if rot.shape[0] != rot.shape[1]:
            raise InvalidParameterError(f"rotation must be square, got {rot.shape}")
        if not self.bin_width > 0:
            raise InvalidParameterError(f"bin_width must be positive, got {self.bin_width}")
        b = np.zeros(rot.shape[0]) if self.translation is None else np.asarray(self.translation, dtype=float).reshape(-1)
        if b.shape != (rot.shape[0],):
            raise InvalidParameterError("translation length does not match rotation")
        if np.any(b < 0) or np.any(b >= 1):
            raise InvalidParameterError("translation entries must lie in [0, 1)")
        rot.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", b)
        object.__setattr__(self, "bin_width", float(self.bin_width))

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    @property
    def stretch(self) -> float:
        return 1.0 / self.bin_width

    def apply(self, xs) -> np.ndarray:
        """Map points through ``H``; a single point maps to a vector."""
        x = as_rows(xs, self.dim)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise InvalidInputError(f"expected {self.dim} features, got shape {np.shape(xs)}")
        out = self.stretch * (x @ self.rotation.T) + self.translation
        return out[0] if is_single_point(xs, self.dim) else out

    def bin_keys(self, xs) -> np.ndarray:
        """Integer bin indices ``floor(H(x))``, shape ``(n, d)``."""
        return np.floor(self.apply(as_rows(xs, self.dim))).astype(np.int64)

    @cached_property
    def _radix(self):
        # key range reachable from [0, 1]^d, padded by one bin on each side
        lo = self.stretch * np.minimum(self.rotation, 0).sum(axis=1) + self.translation
        hi = self.stretch * np.maximum(self.rotation, 0).sum(axis=1) + self.translation
        lo = np.floor(lo).astype(np.int64) - 1
        sizes = np.floor(hi).astype(np.int64) + 2 - lo
        total = 1
        for s in sizes:
            total *= int(s)
        if total >= _MAX_CODE:
            return None
        mult = np.cumprod(np.concatenate([[1], sizes[:-1]])).astype(np.int64)
        return lo, sizes, mult

    @property
    def packable(self) -> bool:
        """Whether every key reachable from the unit cube packs into an int64."""
        return self._radix is not None

    def codes(self, xs) -> np.ndarray:
        """One int64 code per row; equal codes mean equal bins.

        Rows whose key falls outside the packable range get code ``-1``.
        """
        radix = self._radix
        if radix is None:
            raise InvalidParameterError("bin keys of this transform do not pack into int64")
        lo, sizes, mult = radix
        x = as_rows(xs, self.dim)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise InvalidInputError(f"expected {self.dim} features, got shape {np.shape(xs)}")
        # same arithmetic as apply(), so codes agree with bin_keys() exactly
        rel = np.floor(self.stretch * (x @ self.rotation.T) + self.translation).astype(np.int64) - lo
        ok = np.all((rel >= 0) & (rel < sizes), axis=1)
        out = np.full(rel.shape[0], -1, dtype=np.int64)
        out[ok] = rel[ok] @ mult
        return out

    def decode(self, codes) -> np.ndarray:
        """Inverse of :meth:`codes` for valid codes."""
        lo, sizes, mult = self._radix
        c = np.asarray(codes, dtype=np.int64)[:, None]
        return (c // mult) % sizes + lo


def sample_transform(bin_width: float, d: int, rng: RngLike) -> HistogramTransform:
    """Draw a random transform: Haar rotation and ``b ~ U[0, 1)^d``."""
    if not bin_width > 0:
        raise InvalidParameterError(f"bin_width must be positive, got {bin_width}")
    gen = as_generator(rng)
    rotation = sample_rotation(d, gen)
    return HistogramTransform(rotation, bin_width, gen.random(d))


def apply(t: HistogramTransform, x) -> np.ndarray:
    return t.apply(x)


def bin_key(t: HistogramTransform, x) -> tuple[int, ...]:
    """Bin index of a single point as a hashable tuple."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return tuple(int(k) for k in t.bin_keys(x)[0])
