"""Heisenberg group H^n: group law, Koranyi gauge, gauge balls and parabolic cylinders.

Points are stored as ``(x_1, ..., x_2n, z)``. The group law

    a * b = (a_H + b_H, z_a + z_b + 1/2 sum_i (a_i b_{n+i} - a_{n+i} b_i))

is the one for which ``X_i = d_i - x_{n+i}/2 d_z`` and ``X_{n+i} = d_{n+i} + x_i/2 d_z``
are left invariant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Two points (or a point and a grid) live in different H^n."""


@dataclass(frozen=True)
class HeisenbergPoint:
    coords: tuple[float, ...]
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        coords = tuple(float(c) for c in self.coords)
        if len(coords) != 2 * self.n + 1:
            raise DimensionError(
                f"H^{self.n} point needs {2 * self.n + 1} coordinates, got {len(coords)}"
            )
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_array(cls, a) -> "HeisenbergPoint":
        a = np.asarray(a, dtype=float).ravel()
        if a.size % 2 != 1:
            raise DimensionError(f"coordinate count must be odd, got {a.size}")
        return cls(tuple(a), (a.size - 1) // 2)

    @classmethod
    def identity(cls, n: int) -> "HeisenbergPoint":
        return cls((0.0,) * (2 * n + 1), n)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    @property
    def horizontal(self) -> np.ndarray:
        return np.asarray(self.coords[:-1])

    @property
    def z(self) -> float:
        return self.coords[-1]


def _as_coords(a) -> np.ndarray:
    if isinstance(a, HeisenbergPoint):
        return np.asarray(a.coords)
    a = np.asarray(a, dtype=float)
    if a.shape[-1] % 2 != 1:
        raise DimensionError(f"last axis must have odd length 2n+1, got {a.shape[-1]}")
    return a


def _symplectic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = (a.shape[-1] - 1) // 2
    return 0.5 * np.sum(a[..., :n] * b[..., n:2 * n] - a[..., n:2 * n] * b[..., :n], axis=-1)


def _wrap(result: np.ndarray, like):
    if isinstance(like, HeisenbergPoint):
        return HeisenbergPoint.from_array(result)
    return result


def group_mul(a, b):
    """Group product ``a * b``. Accepts points or arrays with coordinates on the last axis."""
    ca, cb = _as_coords(a), _as_coords(b)
    if ca.shape[-1] != cb.shape[-1]:
        raise DimensionError(f"cannot multiply points of length {ca.shape[-1]} and {cb.shape[-1]}")
    out = np.array(ca + cb, dtype=float)
    out[..., -1] += _symplectic(ca, cb)
    return _wrap(out, a)


def group_inv(a):
    """Inverse element; for H^n this is plain negation."""
    return _wrap(-_as_coords(a), a)


def koranyi_gauge(a):
    """Homogeneous norm ``((sum x_i^2)^2 + 16 z^2)^(1/4)``."""
    c = _as_coords(a)
    r2 = np.sum(c[..., :-1] ** 2, axis=-1)
    val = (r2 * r2 + 16.0 * c[..., -1] ** 2) ** 0.25
    return float(val) if np.ndim(val) == 0 else val


def gauge_distance(x, y):
    """Left-invariant distance ``||y^{-1} x||``."""
    cx, cy = _as_coords(x), _as_coords(y)
    if cx.shape[-1] != cy.shape[-1]:
        raise DimensionError(f"cannot compare points of length {cx.shape[-1]} and {cy.shape[-1]}")
    return koranyi_gauge(group_mul(-cy, cx))


def dilate(a, lam: float):
    """Anisotropic dilation ``(lam x_H, lam^2 z)``; the gauge is 1-homogeneous for it."""
    c = np.array(_as_coords(a), dtype=float)
    c[..., :-1] *= lam
    c[..., -1] *= lam * lam
    return _wrap(c, a)


def homogeneous_dimension(n: int) -> int:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 2 * n + 2


@dataclass(frozen=True)
class CylinderSpec:
    """Parabolic cylinder ``B(center, r) x (t0 - mu r^2, t0]`` in the gauge metric."""

    center: HeisenbergPoint
    t0: float
    r: float
    mu: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"cylinder radius must be positive, got {self.r}")
        if not self.mu > 0:
            raise ValueError(f"cylinder time scaling mu must be positive, got {self.mu}")
        if not isinstance(self.center, HeisenbergPoint):
            object.__setattr__(self, "center", HeisenbergPoint.from_array(self.center))

    @property
    def n(self) -> int:
        return self.center.n

    @property
    def duration(self) -> float:
        return self.mu * self.r ** 2

    @property
    def t_start(self) -> float:
        return self.t0 - self.duration

    def with_radius(self, r: float) -> "CylinderSpec":
        return CylinderSpec(self.center, self.t0, r, self.mu)

    def nominal_volume_scale(self) -> float:
        """``mu r^(N+2)``, the normalisation used by the Moser quantities."""
        return self.mu * self.r ** (homogeneous_dimension(self.n) + 2)

    def to_dict(self) -> dict:
        return {"center": list(self.center.coords), "t0": self.t0, "r": self.r, "mu": self.mu}


def cylinder_contains(c: CylinderSpec, x, t):
    """Membership test; vectorised over ``x`` (coords on the last axis) and ``t``."""
    inside_ball = np.asarray(gauge_distance(x, c.center)) < c.r
    t = np.asarray(t, dtype=float)
    inside_time = (t > c.t_start) & (t <= c.t0)
    out = inside_ball & inside_time
    return bool(out) if out.ndim == 0 else out
