"""Explicit time marching for ``d_t u = sum_i X_i A_i(x, grad_0 u)`` and its eps-lifted variant.

The two outermost lattice layers on every face carry Dirichlet data; only nodes at
least two cells inside the box are updated. With centered stencils this makes the
discrete operator an exact negative adjoint pairing, so ``sum u^2`` cannot grow
when the boundary data vanish.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import calculus as calc
from .calculus import GridSpec
from .flux import FluxModel, LiftedFluxModel

log = logging.getLogger(__name__)

BOUNDARY_LAYERS = 2
INSTABILITY_FACTOR = 10.0

Boundary = Union[str, Callable[[float], np.ndarray]]


class SolverError(RuntimeError):
    pass


class SolverInstabilityError(SolverError):
    """Raised when the iterate blows up; ``partial`` holds the slices computed so far."""

    def __init__(self, message, partial: Optional["Solution"] = None):
        super().__init__(message)
        self.partial = partial


@dataclass
class ProblemSpec:
    grid: GridSpec
    flux: Union[FluxModel, LiftedFluxModel]
    initial: np.ndarray
    boundary: Boundary = "frozen_initial"
    c_stab: float = 0.25

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        if self.initial.shape != self.grid.shape:
            raise ValueError(f"initial data shape {self.initial.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.initial)):
            raise ValueError("initial data contains non-finite values")
        if self.flux.n != self.grid.n:
            raise ValueError(f"flux lives in H^{self.flux.n}, grid in H^{self.grid.n}")
        if not (self.boundary == "frozen_initial" or callable(self.boundary)):
            raise ValueError(f"boundary must be 'frozen_initial' or a callable, got {self.boundary!r}")
        if callable(self.boundary):
            g0 = np.asarray(self.boundary(self.grid.t0), float)
            bmask = boundary_mask(self.grid)
            if not np.allclose(g0[bmask], self.initial[bmask], rtol=1e-12, atol=1e-12):
                raise ValueError("boundary data at t0 disagree with the initial data on the faces")

    @property
    def lifted(self) -> bool:
        return isinstance(self.flux, LiftedFluxModel)


@dataclass
class Solution:
    problem: ProblemSpec
    u: np.ndarray
    times: np.ndarray
    dt_history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self) -> GridSpec:
        return self.problem.grid

    @property
    def flux(self):
        return self.problem.flux

    def final(self) -> np.ndarray:
        return self.u[-1]


def boundary_mask(grid: GridSpec) -> np.ndarray:
    return ~grid.interior_mask(BOUNDARY_LAYERS)


def _boundary_values(spec: ProblemSpec, t: float) -> np.ndarray:
    if spec.boundary == "frozen_initial":
        return spec.initial
    return np.asarray(spec.boundary(t), dtype=float)


def frame_gradient(spec: ProblemSpec, u) -> np.ndarray:
    if spec.lifted:
        return calc.epsilon_gradient(spec.grid, u, spec.flux.eps)
    return calc.horizontal_gradient(spec.grid, u)


def operator(spec: ProblemSpec, u) -> np.ndarray:
    """Right-hand side ``sum X_i A_i(grad u)`` (plus ``eps Z A_{2n+1}`` when lifted) on the full lattice."""
    grid = spec.grid
    F = spec.flux(frame_gradient(spec, u), grid.coords)
    if spec.lifted:
        return calc.epsilon_divergence(grid, F, spec.flux.eps)
    return calc.horizontal_divergence(grid, F)


def _centered(f, axis: int, h: float) -> np.ndarray:
    """Centered difference on the nodes ``1..m-2`` of ``axis``, cropping one node off every other axis."""
    d = f.ndim
    hi = [slice(1, -1)] * d
    lo = [slice(1, -1)] * d
    hi[axis] = slice(2, None)
    lo[axis] = slice(None, -2)
    return (f[tuple(hi)] - f[tuple(lo)]) / (2.0 * h)


def _crop(c: np.ndarray, width: int) -> np.ndarray:
    """Crop a sparse coordinate array along its non-singleton axes."""
    return c[tuple(slice(width, -width) if k > 1 else slice(None) for k in c.shape)]


def _interior_update(spec: ProblemSpec, u):
    """Divergence term on the updated block ``[2, m-3]^d`` and ``max |grad u|^2`` over ``[1, m-2]^d``.

    Same interior stencils as :mod:`subpflow.calculus`, without the face stencils that the
    update never reads.
    """
    grid = spec.grid
    n, h = grid.n, grid.spacing
    zax = grid.dim - 1
    coef = [_crop(calc.frame_coefficient(grid, i), 1) for i in range(2 * n)]
    zu = _centered(u, zax, h[zax])
    comps = [_centered(u, i, h[i]) + coef[i] * zu for i in range(2 * n)]
    if spec.lifted:
        comps.append(spec.flux.eps * zu)
    grad = np.stack(comps)
    g2max = float(np.max(np.sum(grad * grad, axis=0)))
    F = spec.flux(grad, tuple(_crop(c, 1) for c in grid.coords))
    # c_i does not depend on z, so sum_i c_i Z F_i = Z (sum_i c_i F_i)
    vert = sum(c * Fi for c, Fi in zip(coef, F[: 2 * n]))
    if spec.lifted:
        vert = vert + spec.flux.eps * F[-1]
    div = _centered(vert, zax, h[zax])
    for i in range(2 * n):
        div += _centered(F[i], i, h[i])
    return div, g2max


def _frame_bound(spec: ProblemSpec) -> float:
    """``1 + B^2`` with ``B = max |x_H| / 2`` over the box (plus ``eps^2`` when lifted)."""
    g = spec.grid
    hmax = np.maximum(np.abs(g.box_lo[:-1]), np.abs(g.box_hi[:-1]))
    B = 0.5 * float(np.sqrt(np.sum(hmax ** 2)))
    extra = spec.flux.eps ** 2 if spec.lifted else 0.0
    return 1.0 + B * B + extra


def _dt_bound(spec: ProblemSpec, grad_sq_max: float) -> float:
    p = spec.flux.p
    weight = (spec.flux.delta + grad_sq_max) ** (0.5 * (p - 2.0))
    denom = spec.flux.stability_factor() * max(1.0, p - 1.0) * weight * _frame_bound(spec)
    if denom == 0:
        return np.inf
    return spec.c_stab * spec.grid.h_min ** 2 / denom


def stable_dt(spec: ProblemSpec, u) -> float:
    """``c h_min^2 / (Lambda_eff (p-1) (delta + M^2)^((p-2)/2) (1 + B^2))``, M = max |grad u|.

    Returns ``inf`` when the bound is vacuous (``p > 2``, ``delta = 0`` and a constant slice).
    """
    u = np.asarray(u, float)
    if not np.all(np.isfinite(u)):
        raise SolverError("slice contains non-finite values")
    return _dt_bound(spec, _interior_update(spec, u)[1])


def _advance(spec, u, div, dt, t_new, ref):
    new = u.copy()
    inner = (slice(BOUNDARY_LAYERS, -BOUNDARY_LAYERS),) * u.ndim
    new[inner] += dt * div
    if callable(spec.boundary):
        bmask = boundary_mask(spec.grid)
        new[bmask] = _boundary_values(spec, t_new)[bmask]
    top = float(np.max(np.abs(new)))
    if not np.isfinite(top) or top > INSTABILITY_FACTOR * ref:
        raise SolverInstabilityError(
            f"max |u| = {top:.6g} exceeds {INSTABILITY_FACTOR:g} x reference {ref:.6g} at t = {t_new:.6g}"
        )
    return new


def step(spec: ProblemSpec, u, dt: float, t_new: float | None = None, reference_max: float | None = None):
    """One explicit Euler step; boundary layers are overwritten from the boundary data."""
    u = np.asarray(u, float)
    div, _ = _interior_update(spec, u)
    t_new = spec.grid.t0 + dt if t_new is None else t_new
    ref = _reference_max(spec) if reference_max is None else reference_max
    return _advance(spec, u, div, dt, t_new, ref)


def _reference_max(spec: ProblemSpec) -> float:
    ref = float(np.max(np.abs(spec.initial)))
    if callable(spec.boundary):
        ref = max(ref, float(np.max(np.abs(spec.boundary(spec.grid.t1)))))
    return max(ref, np.finfo(float).tiny)


def solve(spec: ProblemSpec, max_steps: int = 1_000_000) -> Solution:
    """March from ``t0`` to ``t1`` with adaptive steps, landing on every output time of the grid."""
    grid = spec.grid
    times = grid.times
    u = spec.initial.copy()
    bmask = boundary_mask(grid)
    u[bmask] = _boundary_values(spec, grid.t0)[bmask]
    out = np.empty(grid.spacetime_shape)
    out[0] = u
    ref = _reference_max(spec)
    dts: list[float] = []
    diag = {
        "t": [grid.t0],
        "max_abs": [float(np.max(np.abs(u)))],
        "energy": [calc.integrate_space(grid, u * u)],
        "instability_threshold": INSTABILITY_FACTOR * ref,
    }
    t = grid.t0
    for k in range(1, times.size):
        t_next = times[k]
        while t < t_next:
            div, g2max = _interior_update(spec, u)
            dt = min(_dt_bound(spec, g2max), t_next - t)
            if t + dt >= t_next - 1e-12 * max(1.0, abs(t_next)):
                dt, t_new = t_next - t, t_next
            else:
                t_new = t + dt
            try:
                u = _advance(spec, u, div, dt, t_new, ref)
            except SolverInstabilityError as exc:
                partial = Solution(spec, out[:k].copy(), times[:k].copy(), dts, diag)
                raise SolverInstabilityError(str(exc), partial) from None
            t = t_new
            dts.append(dt)
            diag["t"].append(t)
            diag["max_abs"].append(float(np.max(np.abs(u))))
            diag["energy"].append(calc.integrate_space(grid, u * u))
            if len(dts) > max_steps:
                raise SolverError(f"step budget of {max_steps} exhausted at t = {t:.6g}")
        out[k] = u
    log.debug("solved %s in %d steps", grid.shape, len(dts))
    return Solution(spec, out, times.copy(), dts, diag)


def solve_lifted(spec: ProblemSpec, max_steps: int = 1_000_000) -> Solution:
    if not spec.lifted:
        raise ValueError("solve_lifted needs a LiftedFluxModel")
    return solve(spec, max_steps)


def _check_test_function(sol: Solution, phi) -> np.ndarray:
    phi = np.asarray(phi, float)
    if phi.shape != sol.u.shape:
        raise ValueError(f"test function shape {phi.shape} does not match solution {sol.u.shape}")
    if np.any(phi[0] != 0) or np.any(phi[-1] != 0):
        raise calc.SupportError("test function must vanish at the first and last time level")
    calc.check_compact_support(sol.grid, phi, BOUNDARY_LAYERS)
    return phi


def weak_residual(sol: Solution, phi) -> float:
    """``| int int u d_t phi - A(grad u) . grad phi |`` by trapezoidal quadrature."""
    phi = _check_test_function(sol, phi)
    grid, spec = sol.grid, sol.problem
    phi_t = calc.time_derivative(phi, sol.times)
    F = spec.flux(frame_gradient(spec, sol.u), grid.coords)
    pairing = np.sum(F * frame_gradient(spec, phi), axis=0)
    return abs(calc.integrate_spacetime(grid, sol.u * phi_t - pairing, times=sol.times))


@dataclass
class DerivedFields:
    grad: np.ndarray
    zu: np.ndarray
    grad_zu: np.ndarray
    hess_norm: np.ndarray
    ut: np.ndarray


def derived_fields(sol: Solution) -> DerivedFields:
    """Horizontal gradient, ``Zu``, ``grad_0 Zu``, ``|grad_0^2 u|`` and ``d_t u`` on every output slice."""
    grid, u = sol.grid, sol.u
    grad = calc.horizontal_gradient(grid, u)
    zu = calc.apply_Z(grid, u)
    grad_zu = calc.horizontal_gradient(grid, zu)
    k = 2 * grid.n
    hess2 = np.zeros_like(u)
    for i in range(k):
        for j in range(k):
            hess2 += calc.apply_X(grid, grad[j], i) ** 2
    ut = calc.time_derivative(u, sol.times)
    return DerivedFields(grad, zu, grad_zu, np.sqrt(hess2), ut)


def _horizontal_flux(sol: Solution) -> FluxModel:
    if sol.problem.lifted:
        raise ValueError("differentiated-equation residuals apply to horizontal solutions only")
    return sol.flux


def vertical_residual(sol: Solution, phi) -> float:
    """Weak residual of ``d_t Zu = sum_ij X_i (A_{i,xi_j}(grad u) X_j Zu)``."""
    flux = _horizontal_flux(sol)
    phi = _check_test_function(sol, phi)
    grid = sol.grid
    grad = calc.horizontal_gradient(grid, sol.u)
    zu = calc.apply_Z(grid, sol.u)
    J = flux.jac(grad, grid.coords)
    G = np.einsum("ij...,j...->i...", J, calc.horizontal_gradient(grid, zu))
    phi_t = calc.time_derivative(phi, sol.times)
    integrand = zu * phi_t - np.sum(G * calc.horizontal_gradient(grid, phi), axis=0)
    return abs(calc.integrate_spacetime(grid, integrand, times=sol.times))


def differentiated_residual(sol: Solution, phi, l: int) -> float:
    """Weak residual of the equation for ``v_l = X_l u`` (0-based ``l``):

    ``d_t v_l = sum_ij X_i(A_{i,xi_j} X_l X_j u) + s Z(A_k)`` with ``(s, k) = (+1, l+n)`` for
    ``l < n`` and ``(-1, l-n)`` otherwise, from ``[X_l, X_{l+n}] = Z``.
    """
    flux = _horizontal_flux(sol)
    phi = _check_test_function(sol, phi)
    grid = sol.grid
    n = grid.n
    grad = calc.horizontal_gradient(grid, sol.u)
    v = grad[l]
    XlXj = np.stack([calc.apply_X(grid, grad[j], l) for j in range(2 * n)])
    J = flux.jac(grad, grid.coords)
    G = np.einsum("ij...,j...->i...", J, XlXj)
    s, k = (1.0, l + n) if l < n else (-1.0, l - n)
    A_k = flux(grad, grid.coords)[k]
    phi_t = calc.time_derivative(phi, sol.times)
    integrand = (
        v * phi_t
        - np.sum(G * calc.horizontal_gradient(grid, phi), axis=0)
        - s * A_k * calc.apply_Z(grid, phi)
    )
    return abs(calc.integrate_spacetime(grid, integrand, times=sol.times))
