"""Initial-data presets sampled on a grid."""
from __future__ import annotations

import numpy as np

from .calculus import GridSpec
from .profiles import smoothstep5


class UnknownPresetError(KeyError):
    pass


def zero(grid: GridSpec) -> np.ndarray:
    return np.zeros(grid.shape)


def linear_horizontal(grid: GridSpec, coeffs=(1.0,)) -> np.ndarray:
    """``sum_i a_i x_i`` over the horizontal coordinates; missing coefficients are zero."""
    a = np.zeros(2 * grid.n)
    c = np.asarray(coeffs, dtype=float).ravel()
    if c.size > a.size:
        raise ValueError(f"at most {a.size} coefficients, got {c.size}")
    a[: c.size] = c
    out = np.zeros(grid.shape)
    for ai, x in zip(a, grid.coords[:-1]):
        if ai:
            out = out + ai * x
    return out


def vertical(grid: GridSpec, coeff: float = 1.0) -> np.ndarray:
    return np.broadcast_to(coeff * grid.coords[-1], grid.shape).copy()


def bump(grid: GridSpec, center=None, width=0.5, amplitude: float = 1.0) -> np.ndarray:
    """``amplitude * (1 - smoothstep5(rho^2))`` with ``rho^2 = sum ((x_k - c_k) / w_k)^2``.

    Polynomial inside the unit ellipsoid (so smooth at the centre), C^2 across its edge.
    """
    d = grid.dim
    c = np.zeros(d) if center is None else np.broadcast_to(np.asarray(center, float), (d,))
    w = np.broadcast_to(np.asarray(width, float), (d,))
    if np.any(w <= 0):
        raise ValueError(f"bump widths must be positive, got {w}")
    rho2 = sum(((x - ck) / wk) ** 2 for x, ck, wk in zip(grid.coords, c, w))
    return amplitude * (1.0 - smoothstep5(np.broadcast_to(rho2, grid.shape)))


def trig(grid: GridSpec, waves=(1,), amplitude: float = 1.0) -> np.ndarray:
    """Product of ``sin(k pi (x - lo) / (hi - lo))`` over the axes; vanishes on every face."""
    k = np.ones(grid.dim, dtype=int)
    wv = np.asarray(waves, dtype=int).ravel()
    k[: wv.size] = wv
    out = np.full(grid.shape, float(amplitude))
    for x, kk, lo, hi in zip(grid.coords, k, grid.box_lo, grid.box_hi):
        out = out * np.sin(kk * np.pi * (x - lo) / (hi - lo))
    return out


PRESETS = {
    "zero": zero,
    "linear_horizontal": linear_horizontal,
    "vertical": vertical,
    "bump": bump,
    "trig": trig,
}


def preset(name: str, grid: GridSpec, **params) -> np.ndarray:
    try:
        fn = PRESETS[name]
    except KeyError:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return fn(grid, **params)
