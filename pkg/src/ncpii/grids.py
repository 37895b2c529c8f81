"""Sampled matrix-valued functions on uniform z-grids with derivative estimates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# 4th-order one-sided first-derivative stencils (5 points)
_D1_FWD0 = np.array([-25, 48, -36, 16, -3]) / 12.0
_D1_FWD1 = np.array([-3, -10, 18, -6, 1]) / 12.0
# 4th-order one-sided second-derivative stencils (6 points)
_D2_FWD0 = np.array([45 / 4, -77 / 2, 107 / 2, -39, 61 / 4, -5 / 2]) / 3.0
_D2_FWD1 = np.array([5 / 6, -5 / 4, -1 / 3, 7 / 6, -1 / 2, 1 / 12])


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridFunction:
    """Uniformly sampled d x d matrix function of z.

    ``values`` has shape (count, d, d); ``mask`` flags points excluded from
    norms (poles of Darboux-transformed solutions and their neighbours).
    """

    start: float
    step: float
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, np.newaxis, np.newaxis]
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise GridError(f"values must have shape (n, d, d); got {v.shape}")
        if v.shape[0] < 5:
            raise GridError("grid too short: need at least 5 points")
        if self.step <= 0:
            raise GridError("grid step must be positive")
        object.__setattr__(self, "values", v)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != (v.shape[0],):
                raise GridError("mask length must match the grid")
            object.__setattr__(self, "mask", m)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def zs(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    def with_values(self, values: np.ndarray, mask=None) -> "GridFunction":
        return GridFunction(self.start, self.step, values,
                            self.mask if mask is None else mask)

    def same_grid(self, other: "GridFunction") -> bool:
        return (
            self.count == other.count
            and abs(self.start - other.start) < 1e-12
            and abs(self.step - other.step) < 1e-12
        )

    @staticmethod
    def sample(fn: Callable[[float], complex | np.ndarray],
               start: float, stop: float, step: float, dim: int = 1) -> "GridFunction":
        count = int(round((stop - start) / step)) + 1
        eye = np.eye(dim, dtype=complex)
        vals = np.empty((count, dim, dim), dtype=complex)
        for k in range(count):
            v = fn(start + k * step)
            vals[k] = v if isinstance(v, np.ndarray) and v.ndim == 2 else complex(v) * eye
        return GridFunction(start, step, vals)


def merge_masks(*gfs: GridFunction) -> np.ndarray | None:
    mask = None
    for g in gfs:
        if g.mask is not None:
            mask = g.mask.copy() if mask is None else (mask | g.mask)
    return mask


def fd1(gf: GridFunction) -> GridFunction:
    """First derivative, 4th-order central inside, one-sided at the two boundary points."""
    v, h, n = gf.values, gf.step, gf.count
    out = np.empty_like(v)
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    # stencils are written relative to the grid start; mirror (with sign flip)
    # for the two points at the far end
    for k, coeffs in ((0, _D1_FWD0), (1, _D1_FWD1)):
        out[k] = sum(c * v[idx] for idx, c in enumerate(coeffs)) / h
        out[n - 1 - k] = -sum(c * v[n - 1 - idx] for idx, c in enumerate(coeffs)) / h
    return gf.with_values(out)


def fd2(gf: GridFunction) -> GridFunction:
    """Second derivative, 4th-order central inside, one-sided at the boundaries."""
    v, h, n = gf.values, gf.step, gf.count
    if n < 6:
        raise GridError("grid too short for a 4th-order second derivative")
    out = np.empty_like(v)
    out[2:-2] = (-v[:-4] + 16 * v[1:-3] - 30 * v[2:-2] + 16 * v[3:-1] - v[4:]) / (
        12 * h * h
    )
    for k, coeffs in ((0, _D2_FWD0), (1, _D2_FWD1)):
        out[k] = sum(c * v[idx] for idx, c in enumerate(coeffs)) / (h * h)
        out[n - 1 - k] = sum(c * v[n - 1 - idx] for idx, c in enumerate(coeffs)) / (
            h * h
        )
    return gf.with_values(out)


def half_step_values(gf: GridFunction) -> np.ndarray:
    """Values at midpoints k + 1/2 by 4-point cubic interpolation (one-sided at ends)."""
    v = gf.values
    n = gf.count
    mid = np.empty((n - 1,) + v.shape[1:], dtype=complex)
    if n >= 4:
        mid[1:-1] = (-v[:-3] + 9 * v[1:-2] + 9 * v[2:-1] - v[3:]) / 16.0
        mid[0] = (5 * v[0] + 15 * v[1] - 5 * v[2] + v[3]) / 16.0
        mid[-1] = (v[-4] - 5 * v[-3] + 15 * v[-2] + 5 * v[-1]) / 16.0
    else:
        mid[:] = 0.5 * (v[:-1] + v[1:])
    return mid


def frobenius(values: np.ndarray) -> np.ndarray:
    """Per-point Frobenius norm of an (n, d, d) stack."""
    return np.sqrt(np.sum(np.abs(values) ** 2, axis=(1, 2)))


def widen_mask(mask: np.ndarray, radius: int = 3) -> np.ndarray:
    """Flag every point within `radius` of a flagged point."""
    out = mask.copy()
    for shift in range(1, radius + 1):
        out[shift:] |= mask[:-shift]
        out[:-shift] |= mask[shift:]
    return out


@dataclass
class ResidualReport:
    """Per-grid-point residual norms plus run metadata."""

    label: str
    zs: np.ndarray
    norms: np.ndarray
    mask: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.norms = np.asarray(self.norms, dtype=float)
        if (self.norms < 0).any():
            raise ValueError("residual norms must be nonnegative")

    @property
    def max_norm(self) -> float:
        if self.mask is not None and self.mask.any():
            good = ~self.mask
            if not good.any():
                return float("nan")
            return float(self.norms[good].max())
        return float(self.norms.max())

    def to_dict(self) -> dict:
        mask = self.mask if self.mask is not None else np.zeros(len(self.norms), bool)
        return {
            "label": self.label,
            "max_residual": self.max_norm,
            "metadata": self.metadata,
            "per_point": [
                {"z": float(z), "norm": float(r), "masked": bool(m)}
                for z, r, m in zip(self.zs, self.norms, mask)
            ],
        }
