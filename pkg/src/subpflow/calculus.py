"""Discrete sub-Riemannian calculus on a uniform Cartesian lattice.

Fields are plain numpy arrays whose trailing ``2n+1`` axes are the spatial
lattice of a :class:`GridSpec`; a spacetime field carries one extra leading
time axis. All first derivatives use centered second-order differences in the
interior and second-order one-sided stencils on the box faces.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import CylinderSpec, DimensionError, cylinder_contains


class GridError(ValueError):
    pass


class SupportError(ValueError):
    """A field that must vanish near the boundary does not."""


@dataclass(frozen=True)
class GridSpec:
    n: int
    box_lo: tuple[float, ...]
    box_hi: tuple[float, ...]
    m: tuple[int, ...]
    t0: float = 0.0
    t1: float = 1.0
    nt: int = 1

    def __post_init__(self):
        d = 2 * self.n + 1
        lo = tuple(float(v) for v in np.broadcast_to(np.asarray(self.box_lo, float), (d,)))
        hi = tuple(float(v) for v in np.broadcast_to(np.asarray(self.box_hi, float), (d,)))
        m = tuple(int(v) for v in np.broadcast_to(np.asarray(self.m), (d,)))
        object.__setattr__(self, "box_lo", lo)
        object.__setattr__(self, "box_hi", hi)
        object.__setattr__(self, "m", m)
        if self.n < 1:
            raise GridError(f"n must be >= 1, got {self.n}")
        if any(h <= l for l, h in zip(lo, hi)):
            raise GridError(f"box_hi must exceed box_lo componentwise: {lo} vs {hi}")
        if any(k < 3 for k in m):
            raise GridError(f"every axis needs at least 3 nodes, got m={m}")
        if self.nt < 1:
            raise GridError(f"nt must be >= 1, got {self.nt}")
        if not self.t1 > self.t0:
            raise GridError(f"t1 must exceed t0, got [{self.t0}, {self.t1}]")

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.m

    @property
    def spacetime_shape(self) -> tuple[int, ...]:
        return (self.nt + 1,) + self.m

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple((h - l) / (k - 1) for l, h, k in zip(self.box_lo, self.box_hi, self.m))

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.nt

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(l, h, k) for l, h, k in zip(self.box_lo, self.box_hi, self.m))

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.nt + 1)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis (sparse meshgrid)."""
        return tuple(np.meshgrid(*self.axes, indexing="ij", sparse=True))

    @cached_property
    def points(self) -> np.ndarray:
        """Dense array of node coordinates with shape ``m + (2n+1,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @cached_property
    def space_weights(self) -> np.ndarray:
        w = np.ones(())
        for ax, h in zip(self.axes, self.spacing):
            wk = np.full(ax.size, h)
            wk[[0, -1]] *= 0.5
            w = np.multiply.outer(w, wk)
        return w

    def time_weights(self, times=None) -> np.ndarray:
        t = self.times if times is None else np.asarray(times, float)
        if t.size == 1:
            return np.ones(1)
        dt = np.diff(t)
        w = np.zeros(t.size)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        return w

    def refine(self, factor: int = 2, time_factor: int | None = None) -> "GridSpec":
        """Grid with spacing divided by ``factor`` (same box); time steps scale by ``time_factor``."""
        tf = factor if time_factor is None else time_factor
        m = tuple((k - 1) * factor + 1 for k in self.m)
        return GridSpec(self.n, self.box_lo, self.box_hi, m, self.t0, self.t1, self.nt * tf)

    def with_times(self, t0: float, t1: float, nt: int) -> "GridSpec":
        return GridSpec(self.n, self.box_lo, self.box_hi, self.m, t0, t1, nt)

    def interior_mask(self, width: int = 1) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        if all(k > 2 * width for k in self.m):
            mask[tuple(slice(width, k - width) for k in self.m)] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "box_lo": list(self.box_lo),
            "box_hi": list(self.box_hi),
            "m": list(self.m),
            "t0": self.t0,
            "t1": self.t1,
            "nt": self.nt,
        }


def _check(grid: GridSpec, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-grid.dim:] != grid.shape:
        raise DimensionError(f"field trailing shape {f.shape[-grid.dim:]} does not match grid {grid.shape}")
    return f


def partial(grid: GridSpec, f, axis: int) -> np.ndarray:
    """Coordinate derivative along spatial ``axis`` (0-based)."""
    f = _check(grid, f)
    return np.gradient(f, grid.spacing[axis], axis=f.ndim - grid.dim + axis, edge_order=2)


def time_derivative(f, times) -> np.ndarray:
    """Centered difference along the leading (time) axis, second order at both ends.

    Uniform levels use the scalar spacing so that constants differentiate to exact zeros.
    """
    f = np.asarray(f, float)
    t = np.asarray(times, float)
    if t.size < 2:
        return np.zeros_like(f)
    edge = 2 if t.size >= 3 else 1
    dt = np.diff(t)
    if np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        return np.gradient(f, dt[0], axis=0, edge_order=edge)
    return np.gradient(f, t, axis=0, edge_order=edge)


def apply_Z(grid: GridSpec, f) -> np.ndarray:
    return partial(grid, f, grid.dim - 1)


def frame_coefficient(grid: GridSpec, i: int) -> np.ndarray:
    """Coefficient ``c`` of ``d_z`` in ``X_i = d_i + c d_z`` (0-based ``i``)."""
    n = grid.n
    if not 0 <= i < 2 * n:
        raise IndexError(f"horizontal index must lie in [0, {2 * n}), got {i}")
    if i < n:
        return -0.5 * grid.coords[n + i]
    return 0.5 * grid.coords[i - n]


def apply_X(grid: GridSpec, f, i: int) -> np.ndarray:
    """Horizontal frame derivative ``X_i f`` (0-based ``i``)."""
    c = frame_coefficient(grid, i)
    return partial(grid, f, i) + c * apply_Z(grid, f)


def horizontal_gradient(grid: GridSpec, f) -> np.ndarray:
    """``(X_1 f, ..., X_2n f)`` stacked on a new leading axis."""
    f = _check(grid, f)
    zf = apply_Z(grid, f)
    return np.stack(
        [partial(grid, f, i) + frame_coefficient(grid, i) * zf for i in range(2 * grid.n)]
    )


def epsilon_gradient(grid: GridSpec, f, eps: float) -> np.ndarray:
    """Components of the gradient in the orthonormal frame ``X_1..X_2n, eps Z``."""
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    f = _check(grid, f)
    zf = apply_Z(grid, f)
    comps = [partial(grid, f, i) + frame_coefficient(grid, i) * zf for i in range(2 * grid.n)]
    comps.append(eps * zf)
    return np.stack(comps)


def horizontal_divergence(grid: GridSpec, F) -> np.ndarray:
    """``sum_i X_i F_i``; the frame is divergence free so ``-X_i`` is the adjoint of ``X_i``."""
    F = np.asarray(F, dtype=float)
    if F.shape[0] != 2 * grid.n:
        raise DimensionError(f"expected {2 * grid.n} components, got {F.shape[0]}")
    return sum(apply_X(grid, F[i], i) for i in range(2 * grid.n))


def epsilon_divergence(grid: GridSpec, F, eps: float) -> np.ndarray:
    """``sum_{i<=2n} X_i F_i + eps Z F_{2n+1}``."""
    F = np.asarray(F, dtype=float)
    if F.shape[0] != 2 * grid.n + 1:
        raise DimensionError(f"expected {2 * grid.n + 1} components, got {F.shape[0]}")
    return horizontal_divergence(grid, F[:-1]) + eps * apply_Z(grid, F[-1])


def second_horizontal(grid: GridSpec, f) -> np.ndarray:
    """Matrix of ``X_i X_j f`` with shape ``(2n, 2n) + f.shape``."""
    grad = horizontal_gradient(grid, f)
    k = 2 * grid.n
    return np.stack([np.stack([apply_X(grid, grad[j], i) for j in range(k)]) for i in range(k)])


def hessian_norm(grid: GridSpec, f) -> np.ndarray:
    """Frobenius norm ``|grad_0^2 f|`` of :func:`second_horizontal`."""
    H = second_horizontal(grid, f)
    return np.sqrt(np.sum(H * H, axis=(0, 1)))


def commutator_defect(grid: GridSpec, f, margin: int = 2) -> float:
    """``max_i || (X_i X_{n+i} - X_{n+i} X_i - Z) f ||_inf`` over nodes ``margin`` cells from the faces."""
    f = _check(grid, f)
    n = grid.n
    mask = grid.interior_mask(margin)
    zf = apply_Z(grid, f)
    worst = 0.0
    for i in range(n):
        a = apply_X(grid, apply_X(grid, f, n + i), i)
        b = apply_X(grid, apply_X(grid, f, i), n + i)
        d = np.abs(a - b - zf)[..., mask]
        if d.size:
            worst = max(worst, float(d.max()))
    return worst


def integrate_space(grid: GridSpec, f) -> np.ndarray | float:
    """Trapezoidal rule over the spatial box; leading axes are kept."""
    f = _check(grid, f)
    axes = tuple(range(f.ndim - grid.dim, f.ndim))
    out = np.sum(f * grid.space_weights, axis=axes)
    return float(out) if np.ndim(out) == 0 else out


def integrate_spacetime(grid: GridSpec, f, weight=None, times=None) -> float:
    """Tensor-product trapezoidal rule over the box times the time levels of ``f``."""
    f = _check(grid, f)
    if weight is not None:
        weight = _check(grid, weight)
        if weight.shape != f.shape:
            raise DimensionError(f"weight shape {weight.shape} does not match field {f.shape}")
        f = f * weight
    t = grid.times if times is None else np.asarray(times, float)
    if f.ndim != grid.dim + 1 or f.shape[0] != t.size:
        raise DimensionError(f"spacetime field needs shape {(t.size,) + grid.shape}, got {f.shape}")
    return float(np.dot(grid.time_weights(t), integrate_space(grid, f)))


def cylinder_mask(grid: GridSpec, c: CylinderSpec, times=None) -> np.ndarray:
    """Boolean spacetime mask of lattice nodes inside ``c``."""
    if c.n != grid.n:
        raise DimensionError(f"cylinder lives in H^{c.n}, grid in H^{grid.n}")
    t = grid.times if times is None else np.asarray(times, float)
    ball = np.asarray(cylinder_contains(c, grid.points, c.t0))
    tmask = (t > c.t_start) & (t <= c.t0)
    return tmask.reshape((t.size,) + (1,) * grid.dim) & ball[None]


def sup_over_cylinder(grid: GridSpec, f, c: CylinderSpec, times=None) -> float:
    f = _check(grid, f)
    mask = cylinder_mask(grid, c, times)
    if f.shape != mask.shape:
        raise DimensionError(f"spacetime field needs shape {mask.shape}, got {f.shape}")
    if not mask.any():
        raise GridError("cylinder contains no lattice node")
    return float(np.max(np.abs(f[mask])))


def check_compact_support(grid: GridSpec, f, layers: int = 2) -> None:
    f = _check(grid, f)
    inner = grid.interior_mask(layers)
    if np.any(f[..., ~inner] != 0):
        raise SupportError(f"field must vanish on the outer {layers} layers of every face")


def sbp_defect(grid: GridSpec, f, g, i: int) -> float:
    """Discrete integration-by-parts defect ``|<X_i f, g> + <f, X_i g>|`` times the cell volume."""
    check_compact_support(grid, f)
    check_compact_support(grid, g)
    f = np.asarray(f, float)
    g = np.asarray(g, float)
    s = np.sum(apply_X(grid, f, i) * g) + np.sum(f * apply_X(grid, g, i))
    return abs(float(s)) * grid.cell_volume
