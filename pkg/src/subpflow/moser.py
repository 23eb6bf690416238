"""Moser iteration bookkeeping on nested parabolic cylinders and the direct Lipschitz check."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import calculus as calc
from .estimates import MarginError, check_margin
from .geometry import CylinderSpec, HeisenbergPoint, homogeneous_dimension
from .solver import Solution

P2_CUTOFF = 2.0 + 1e-6


class MoserError(ValueError):
    pass


def mbar_floor(p: float, mu: float) -> Optional[float]:
    """``mu^(1/(2-p))``, or ``None`` when the branch is disabled (``p < 2 + 1e-6``)."""
    if p < P2_CUTOFF:
        return None
    return mu ** (1.0 / (2.0 - p))


@dataclass
class MoserLevel:
    i: int
    r: float
    beta: float
    alpha: float
    M: Optional[float] = None
    Mbar: Optional[float] = None
    volume: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "i": self.i, "r": self.r, "beta": self.beta, "alpha": self.alpha,
            "M": self.M, "Mbar": self.Mbar, "volume": self.volume,
        }


@dataclass
class MoserLadder:
    p: float
    n: int
    N: int
    kappa: float
    mu: float
    base_cylinder: CylinderSpec
    levels: list
    delta: Optional[float] = None

    @property
    def level_count(self) -> int:
        return len(self.levels) - 1

    @property
    def measured(self) -> bool:
        return all(lv.M is not None for lv in self.levels)

    def cylinder(self, i: int) -> CylinderSpec:
        return self.base_cylinder.with_radius(self.levels[i].r)

    def to_dict(self) -> dict:
        return {
            "p": self.p, "n": self.n, "N": self.N, "kappa": self.kappa, "mu": self.mu,
            "delta": self.delta, "base_cylinder": self.base_cylinder.to_dict(),
            "levels": [lv.to_dict() for lv in self.levels],
        }


def kappa_of(n: int) -> float:
    N = homogeneous_dimension(n)
    return (N + 2) / N


def build_sequences(p: float, n: int, r: float, level_count: int = 6, mu: float = 1.0,
                    center=None, t0: float = 0.0) -> MoserLadder:
    """Radii ``(1 + 2^-i) r`` and exponents ``beta_i, alpha_i`` for ``i = 0..level_count``."""
    if level_count < 1:
        raise MoserError(f"level_count must be >= 1, got {level_count}")
    if p < 2:
        raise MoserError(f"the iteration needs p >= 2, got {p}")
    N = homogeneous_dimension(n)
    kappa = (N + 2) / N
    ctr = HeisenbergPoint.identity(n) if center is None else center
    base = CylinderSpec(ctr, t0, r, mu)
    levels = [
        MoserLevel(i, (1.0 + 2.0 ** -i) * r, 2.0 * (kappa ** i - 1.0), p - 2.0 + 2.0 * kappa ** i)
        for i in range(level_count + 1)
    ]
    return MoserLadder(float(p), n, N, kappa, float(mu), base, levels)


def _weight(sol: Solution, delta: float) -> np.ndarray:
    grad = calc.horizontal_gradient(sol.grid, sol.u)
    return delta + np.sum(grad * grad, axis=0)


def _check_cylinder(sol: Solution, c: CylinderSpec) -> None:
    try:
        check_margin(c, sol.grid, sol.times)
    except MarginError as exc:
        raise MoserError(f"cylinder escapes the solved domain: {exc}") from None


def measure_ladder(sol: Solution, ladder: MoserLadder, delta: Optional[float] = None,
                   mu: Optional[float] = None) -> MoserLadder:
    """Fill ``M_i`` and ``Mbar_i`` by cylinder-restricted trapezoidal quadrature."""
    delta = float(sol.flux.delta if delta is None else delta)
    if mu is not None and mu != ladder.mu:
        ladder = replace(ladder, mu=float(mu), base_cylinder=replace(ladder.base_cylinder, mu=float(mu)))
    _check_cylinder(sol, ladder.cylinder(0))
    W = _weight(sol, delta)
    scale = ladder.base_cylinder.nominal_volume_scale()
    floor = mbar_floor(ladder.p, ladder.mu)
    levels = []
    for lv in ladder.levels:
        mask = calc.cylinder_mask(sol.grid, ladder.cylinder(lv.i), sol.times).astype(float)
        vol = calc.integrate_spacetime(sol.grid, mask, times=sol.times)
        integral = calc.integrate_spacetime(sol.grid, W ** (lv.alpha / 2) * mask, times=sol.times)
        if not math.isfinite(integral):
            raise MoserError(f"non-finite integral at level {lv.i}")
        M = (integral / scale) ** (1.0 / lv.alpha)
        Mbar = M if floor is None else max(M, floor)
        levels.append(replace(lv, M=M, Mbar=Mbar, volume=vol))
    return replace(ladder, levels=levels, delta=delta)


@dataclass
class IterationReport:
    C: list
    max_C: Optional[float]
    degenerate: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.max_C is not None and math.isfinite(self.max_C)

    def to_dict(self) -> dict:
        return {"C": self.C, "max_C": self.max_C, "degenerate": self.degenerate, "valid": self.valid}


def check_iteration(ladder: MoserLadder) -> IterationReport:
    """Per-level ``C_i`` of the one-step recursion between ``Mbar_i`` and ``Mbar_{i+1}``."""
    if not ladder.measured:
        raise MoserError("ladder has no measured M_i; run measure_ladder first")
    N, kappa, mu = ladder.N, ladder.kappa, ladder.mu
    C, degenerate = [], []
    for i in range(ladder.level_count):
        a, b = ladder.levels[i], ladder.levels[i + 1]
        if a.Mbar == 0:
            C.append(None)
            degenerate.append(i)
            continue
        denom = mu ** (2.0 / (N + 2)) * 2.0 ** (2 * i) * a.alpha ** 7 * a.Mbar ** a.alpha
        C.append(b.Mbar ** (b.alpha / kappa) / denom)
    finite = [c for c in C if c is not None]
    return IterationReport(C, max(finite) if finite else None, degenerate)


@dataclass
class LipschitzReport:
    sup_grad: float
    bound_rhs: float
    empirical_C: float
    mean_energy: float
    volume_factor: float
    p: float
    delta: float
    mu: float
    r: float
    center: list
    t0: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def lipschitz_bound_report(sol: Solution, delta: Optional[float] = None, mu: float = 1.0, r: float = 0.25,
                           center=None, t0: Optional[float] = None) -> LipschitzReport:
    """``sup_{Q_{mu,r}} |grad_0 u|`` against ``mu^(1/2) max(mean_{Q_{mu,2r}} W^(p/2))^(1/2), mu^(p/(2(2-p))))``.

    The average is taken over the discrete cylinder volume, so a constant gradient gives
    exactly its own value; ``volume_factor`` records ``|Q_{mu,2r}| / (mu r^(N+2))``.
    """
    grid = sol.grid
    delta = float(sol.flux.delta if delta is None else delta)
    p = float(sol.flux.p)
    ctr = HeisenbergPoint.identity(grid.n) if center is None else center
    t0 = float(sol.times[-1] if t0 is None else t0)
    inner = CylinderSpec(ctr, t0, r, mu)
    outer = inner.with_radius(2 * r)
    _check_cylinder(sol, outer)
    grad = calc.horizontal_gradient(grid, sol.u)
    gnorm = np.sqrt(np.sum(grad * grad, axis=0))
    sup_grad = calc.sup_over_cylinder(grid, gnorm, inner, sol.times)
    mask = calc.cylinder_mask(grid, outer, sol.times).astype(float)
    vol = calc.integrate_spacetime(grid, mask, times=sol.times)
    if vol <= 0:
        raise MoserError("outer cylinder contains no lattice node")
    mean = calc.integrate_spacetime(grid, (delta + gnorm ** 2) ** (p / 2) * mask, times=sol.times) / vol
    branch = math.sqrt(mean)
    if p >= P2_CUTOFF:
        branch = max(branch, mu ** (p / (2 * (2 - p))))
    rhs = math.sqrt(mu) * branch
    emp = sup_grad / rhs if rhs > 0 else (0.0 if sup_grad == 0 else math.inf)
    return LipschitzReport(
        sup_grad=sup_grad, bound_rhs=rhs, empirical_C=emp, mean_energy=mean,
        volume_factor=vol / inner.nominal_volume_scale(),
        p=p, delta=delta, mu=mu, r=r, center=[float(v) for v in inner.center.coords], t0=t0,
    )


def ladder_rows(ladder: MoserLadder, report: Optional[IterationReport] = None) -> list[dict]:
    """One flat row per level, for CSV export."""
    rows = []
    for lv in ladder.levels:
        row = lv.to_dict()
        row["C"] = None
        if report is not None and lv.i < len(report.C):
            row["C"] = report.C[lv.i]
        rows.append(row)
    return rows
