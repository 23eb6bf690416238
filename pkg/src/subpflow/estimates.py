"""Cutoff functions and two-sided evaluation of the energy and interpolation inequalities
on a computed solution.

Each report integrates the left-hand side and every right-hand term by trapezoidal
quadrature and exposes ``empirical_C = lhs / sum(rhs_terms)``. Unknown constants are
never assumed; only the stability of ``empirical_C`` is meaningful.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import calculus as calc
from .calculus import GridSpec
from .geometry import CylinderSpec, gauge_distance
from .profiles import plateau
from .solver import DerivedFields, Solution, derived_fields

MARGIN_CELLS = 2


class EstimateError(ValueError):
    pass


class MarginError(EstimateError):
    pass


@dataclass
class CutoffSpec:
    cylinder: CylinderSpec
    eta: np.ndarray
    norms: dict
    support_volume: float
    times: np.ndarray
    profile: str = "quintic_smoothstep"


def cylinder_extent(c: CylinderSpec) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate bounding box of the gauge ball ``B(center, r)``."""
    ctr = np.asarray(c.center.coords)
    n = c.n
    half = np.empty(2 * n + 1)
    half[:-1] = c.r
    # z(y) = z_c + w_z + 1/2 sum(c_i w_{n+i} - c_{n+i} w_i) with |w_H| < r, |w_z| < r^2/4
    half[-1] = c.r ** 2 / 4.0 + 0.5 * float(np.linalg.norm(ctr[:-1])) * c.r
    return ctr - half, ctr + half


def check_margin(c: CylinderSpec, grid: GridSpec, times, cells: int = MARGIN_CELLS) -> None:
    lo, hi = cylinder_extent(c)
    h = np.asarray(grid.spacing)
    if np.any(lo < np.asarray(grid.box_lo) + cells * h) or np.any(hi > np.asarray(grid.box_hi) - cells * h):
        raise MarginError(
            f"cylinder r={c.r} around {c.center.coords} needs a {cells}-cell margin inside the box"
        )
    t = np.asarray(times)
    if c.t_start < t[0] - 1e-12 or c.t0 > t[-1] + 1e-12:
        raise MarginError(
            f"cylinder time span [{c.t_start:.6g}, {c.t0:.6g}] leaves the solved interval [{t[0]:.6g}, {t[-1]:.6g}]"
        )


def cutoff_profile(c: CylinderSpec, grid: GridSpec, times) -> np.ndarray:
    """``phi(d(x, center) / r) psi((t0 - t) / (mu r^2))``, zero after ``t0``."""
    t = np.asarray(times, float)
    space = plateau(np.asarray(gauge_distance(grid.points, c.center)) / c.r)
    s = (c.t0 - t) / c.duration
    tpart = np.where(t <= c.t0 + 1e-12 * max(1.0, abs(c.t0)), plateau(s), 0.0)
    return tpart.reshape((t.size,) + (1,) * grid.dim) * space[None]


def measure_cutoff_norms(grid: GridSpec, eta: np.ndarray, times) -> dict:
    grad = calc.horizontal_gradient(grid, eta)
    geta = np.sqrt(np.sum(grad * grad, axis=0))
    zeta = np.abs(calc.apply_Z(grid, eta))
    teta = np.abs(calc.time_derivative(eta, times))
    return {
        "grad0_eta": float(geta.max()),
        "z_eta": float(zeta.max()),
        "dt_eta": float(teta.max()),
        "eta_dt_eta": float((eta * teta).max()),
        "eta_z_eta": float((eta * zeta).max()),
    }


def make_cutoff(c: CylinderSpec, grid: GridSpec, times=None) -> CutoffSpec:
    """Admissible cutoff supported in ``c``, equal to 1 on the concentric half cylinder."""
    times = grid.times if times is None else np.asarray(times, float)
    check_margin(c, grid, times)
    eta = cutoff_profile(c, grid, times)
    norms = measure_cutoff_norms(grid, eta, times)
    support = calc.integrate_spacetime(grid, (eta > 0).astype(float), times=times)
    return CutoffSpec(c, eta, norms, support, times)


def zero_cutoff(c: CylinderSpec, grid: GridSpec, times=None) -> CutoffSpec:
    """Degenerate cutoff ``eta = 0`` (all reports must vanish identically)."""
    times = grid.times if times is None else np.asarray(times, float)
    eta = np.zeros((len(times),) + grid.shape)
    norms = dict.fromkeys(("grad0_eta", "z_eta", "dt_eta", "eta_dt_eta", "eta_z_eta"), 0.0)
    return CutoffSpec(c, eta, norms, 0.0, times)


@dataclass
class EstimateReport:
    name: str
    beta: float
    lhs: float
    rhs_terms: dict
    empirical_C: float
    params: dict
    prefactor: float = 1.0
    intermediates: dict = field(default_factory=dict)

    @property
    def rhs_total(self) -> float:
        return float(sum(self.rhs_terms.values()))

    @property
    def normalized_C(self) -> float:
        """``empirical_C`` divided by the explicit prefactor of the right-hand side."""
        return self.empirical_C / self.prefactor

    def holds_with(self, C: float) -> bool:
        return self.lhs <= C * self.prefactor * self.rhs_total


def empirical_constant(lhs: float, terms: dict) -> float:
    total = float(sum(terms.values()))
    if total > 0:
        return lhs / total
    return 0.0 if lhs == 0 else math.inf


def exponents(name: str, p: float, beta: float) -> dict:
    """Every exponent and explicit numeric factor used by the report ``name``."""
    b = beta
    table = {
        "z_caccioppoli": {
            "lhs_weight": (p - 2) / 2, "lhs_zu": b, "lhs_eta": 4 + b,
            "grad_weight": (p - 2) / 2, "grad_zu": b + 2, "grad_eta": 2 + b,
            "time_zu": b + 2, "time_eta": 3 + b,
        },
        "horizontal_caccioppoli": {
            "sup_weight": (b + 2) / 2, "sup_factor": 1 / (b + 2), "hess_weight": (p - 2 + b) / 2,
            "grad_weight": (p + b) / 2, "time_weight": (b + 2) / 2, "time_factor": 1 / (b + 2),
            "vertical_weight": (p - 2 + b) / 2, "vertical_factor": (b + 1) ** 4,
        },
        "interpolation": {
            "lhs": p + b, "R_weight": (p + b) / 2, "M_weight": (p - 2) / 2, "M_zu": b, "M_eta": 4 + b,
            "I2_R": 1 / (p + b), "I2_L": (p - 1 + b) / (p + b),
            "I1_M": 0.5, "I1_R": (4 - p) / (2 * (p + b)), "I1_L": (2 * p - 4 + b) / (2 * (p + b)),
            "prefactor": p + b,
        },
        "z_integrability": {
            "lhs_root": 1 / (p + b), "grad_R": 1 / (p + b), "time_norm": 0.5,
            "time_support": (p - 2) / (2 * (p + b)), "time_R": (4 - p) / (2 * (p + b)),
            "prefactor": p + b,
        },
        "main_caccioppoli": {
            "sup_weight": (b + 2) / 2, "hess_weight": (p - 2 + b) / 2, "R_weight": (p + b) / 2,
            "time_support": (p - 2) / (p + b), "time_R": (b + 2) / (p + b),
            "prefactor": (p + b) ** 7,
        },
        "time_derivative": {
            "lhs": b + 2, "grad_M": 2 * p - 2, "time_M": p, "outer": (b + 2) / 2,
        },
    }
    try:
        return table[name]
    except KeyError:
        raise EstimateError(f"unknown inequality {name!r}") from None


REPORT_NAMES = (
    "z_caccioppoli",
    "horizontal_caccioppoli",
    "interpolation",
    "z_integrability",
    "main_caccioppoli",
    "time_derivative",
)


class _Quantities:
    """Pointwise quantities of one solution, computed once and shared across reports."""

    def __init__(self, sol: Solution, derived: DerivedFields | None = None):
        self.sol = sol
        self.grid = sol.grid
        self.times = sol.times
        self.d = derived_fields(sol) if derived is None else derived
        flux = sol.flux
        self.p = float(flux.p)
        self.delta = float(flux.delta)
        self.grad_sq = np.sum(self.d.grad ** 2, axis=0)
        self.W = self.delta + self.grad_sq
        self.abs_zu = np.abs(self.d.zu)
        self.grad_zu_sq = np.sum(self.d.grad_zu ** 2, axis=0)

    def integrate(self, f) -> float:
        if not np.all(np.isfinite(f)):
            raise EstimateError("non-finite integrand")
        return calc.integrate_spacetime(self.grid, f, times=self.times)

    def space_integrals(self, f) -> np.ndarray:
        if not np.all(np.isfinite(f)):
            raise EstimateError("non-finite integrand")
        return np.atleast_1d(calc.integrate_space(self.grid, f))

    def weight(self, s: float) -> np.ndarray:
        return _pow(self.W, s)

    def R(self, beta: float, cutoff: CutoffSpec) -> float:
        spt = (cutoff.eta > 0).astype(float)
        return self.integrate(self.weight((self.p + beta) / 2) * spt)

    def params(self, cutoff: CutoffSpec) -> dict:
        return {
            "p": self.p,
            "delta": self.delta,
            "grid": self.grid.to_dict(),
            "cylinder": cutoff.cylinder.to_dict(),
        }


def _pow(x, s):
    """``x**s`` with the convention ``0**0 = 1``."""
    if s == 0:
        return np.ones_like(x)
    return np.power(x, s)


def _require_p_range(p: float, name: str) -> None:
    if not 2 <= p <= 4:
        raise EstimateError(f"{name} needs 2 <= p <= 4, got p={p}")


def _require_beta(beta: float) -> None:
    if beta < 0:
        raise EstimateError(f"beta must be non-negative, got {beta}")


def _quantities(sol, derived) -> _Quantities:
    if isinstance(derived, _Quantities):
        return derived
    return _Quantities(sol, derived)


def _report(name, beta, lhs, terms, q, cutoff, prefactor=1.0, intermediates=None) -> EstimateReport:
    terms = {k: float(v) for k, v in terms.items()}
    return EstimateReport(
        name=name,
        beta=float(beta),
        lhs=float(lhs),
        rhs_terms=terms,
        empirical_C=empirical_constant(float(lhs), terms),
        params=q.params(cutoff),
        prefactor=float(prefactor),
        intermediates=intermediates or {},
    )


def z_caccioppoli_report(sol: Solution, cutoff: CutoffSpec, beta: float, derived=None) -> EstimateReport:
    """Caccioppoli inequality for ``Zu``."""
    _require_beta(beta)
    q = _quantities(sol, derived)
    e = exponents("z_caccioppoli", q.p, beta)
    eta = cutoff.eta
    lhs = q.integrate(q.weight(e["lhs_weight"]) * _pow(q.abs_zu, e["lhs_zu"]) * q.grad_zu_sq * eta ** e["lhs_eta"])
    geta2 = np.sum(calc.horizontal_gradient(q.grid, eta) ** 2, axis=0)
    t1 = q.integrate(q.weight(e["grad_weight"]) * q.abs_zu ** e["grad_zu"] * geta2 * eta ** e["grad_eta"])
    teta = np.abs(calc.time_derivative(eta, q.times))
    t2 = q.integrate(q.abs_zu ** e["time_zu"] * teta * eta ** e["time_eta"])
    return _report("z_caccioppoli", beta, lhs, {"grad_eta": t1, "dt_eta": t2}, q, cutoff)


def _sup_energy(q: _Quantities, eta, weight_exp) -> float:
    return float(np.max(q.space_integrals(q.weight(weight_exp) * eta ** 2)))


def horizontal_caccioppoli_report(sol: Solution, cutoff: CutoffSpec, beta: float, derived=None) -> EstimateReport:
    """Caccioppoli inequality for the horizontal derivatives."""
    _require_beta(beta)
    q = _quantities(sol, derived)
    e = exponents("horizontal_caccioppoli", q.p, beta)
    eta = cutoff.eta
    sup_term = e["sup_factor"] * _sup_energy(q, eta, e["sup_weight"])
    hess_term = q.integrate(q.weight(e["hess_weight"]) * q.d.hess_norm ** 2 * eta ** 2)
    geta2 = np.sum(calc.horizontal_gradient(q.grid, eta) ** 2, axis=0)
    zeta = np.abs(calc.apply_Z(q.grid, eta))
    teta = np.abs(calc.time_derivative(eta, q.times))
    t1 = q.integrate(q.weight(e["grad_weight"]) * (geta2 + zeta * eta))
    t2 = e["time_factor"] * q.integrate(q.weight(e["time_weight"]) * teta * eta)
    t3 = e["vertical_factor"] * q.integrate(q.weight(e["vertical_weight"]) * q.abs_zu ** 2 * eta ** 2)
    return _report(
        "horizontal_caccioppoli",
        beta,
        sup_term + hess_term,
        {"cutoff_space": t1, "cutoff_time": t2, "vertical": t3},
        q,
        cutoff,
        intermediates={"sup_term": sup_term, "hessian_term": hess_term},
    )


def interpolation_quantities(q: _Quantities, cutoff: CutoffSpec, beta: float) -> dict:
    """``L, R, M, I_1, I_2`` of the interpolation argument and the Holder bounds on ``I_1, I_2``."""
    e = exponents("interpolation", q.p, beta)
    p, eta = q.p, cutoff.eta
    k = p + beta
    L = q.integrate(q.abs_zu ** e["lhs"] * eta ** e["lhs"])
    R = q.R(beta, cutoff)
    gnorm = np.sqrt(q.grad_sq)
    M = q.integrate(_pow(gnorm, p - 2) * _pow(q.abs_zu, e["M_zu"]) * q.grad_zu_sq * eta ** e["M_eta"])
    M_delta = q.integrate(q.weight(e["M_weight"]) * _pow(q.abs_zu, e["M_zu"]) * q.grad_zu_sq * eta ** e["M_eta"])
    geta = np.sqrt(np.sum(calc.horizontal_gradient(q.grid, eta) ** 2, axis=0))
    I1 = 2 * k * q.integrate(gnorm * _pow(q.abs_zu, k - 2) * np.sqrt(q.grad_zu_sq) * eta ** k)
    I2 = 2 * k * q.integrate(gnorm * _pow(q.abs_zu, k - 1) * geta * eta ** (k - 1))
    g_inf = cutoff.norms["grad0_eta"]
    I2_bound = 2 * k * g_inf * R ** e["I2_R"] * L ** e["I2_L"]
    I1_bound = 2 * k * M ** e["I1_M"] * R ** e["I1_R"] * L ** e["I1_L"]
    return {
        "L": L, "R": R, "M": M, "M_delta": M_delta,
        "I1": I1, "I2": I2, "I1_bound": I1_bound, "I2_bound": I2_bound,
    }


def interpolation_report(sol: Solution, cutoff: CutoffSpec, beta: float, derived=None) -> EstimateReport:
    """Poincare-type interpolation inequality for ``|Zu|^(p+beta)`` (needs ``2 <= p <= 4``)."""
    _require_beta(beta)
    q = _quantities(sol, derived)
    _require_p_range(q.p, "interpolation")
    iq = interpolation_quantities(q, cutoff, beta)
    e = exponents("interpolation", q.p, beta)
    terms = {"grad_eta_R": cutoff.norms["grad0_eta"] * iq["R"], "M": iq["M_delta"]}
    return _report("interpolation", beta, iq["L"], terms, q, cutoff, e["prefactor"], iq)


def z_integrability_report(sol: Solution, cutoff: CutoffSpec, beta: float, derived=None) -> EstimateReport:
    """``L^(p+beta)`` bound on ``Zu`` (needs ``2 <= p <= 4``)."""
    _require_beta(beta)
    q = _quantities(sol, derived)
    _require_p_range(q.p, "z_integrability")
    e = exponents("z_integrability", q.p, beta)
    eta = cutoff.eta
    k = q.p + beta
    L = q.integrate(q.abs_zu ** k * eta ** k)
    R = q.R(beta, cutoff)
    t1 = cutoff.norms["grad0_eta"] * R ** e["grad_R"]
    t2 = (
        cutoff.norms["eta_dt_eta"] ** e["time_norm"]
        * cutoff.support_volume ** e["time_support"]
        * R ** e["time_R"]
    )
    return _report(
        "z_integrability", beta, L ** e["lhs_root"], {"grad_eta": t1, "dt_eta": t2}, q, cutoff,
        e["prefactor"], {"L": L, "R": R, "support_volume": cutoff.support_volume},
    )


def main_caccioppoli_report(sol: Solution, cutoff: CutoffSpec, beta: float, derived=None) -> EstimateReport:
    """Main Caccioppoli inequality; the ``(p+beta)^7`` factor is kept in ``prefactor``."""
    _require_beta(beta)
    q = _quantities(sol, derived)
    _require_p_range(q.p, "main_caccioppoli")
    e = exponents("main_caccioppoli", q.p, beta)
    eta = cutoff.eta
    sup_term = _sup_energy(q, eta, e["sup_weight"])
    hess_term = q.integrate(q.weight(e["hess_weight"]) * q.d.hess_norm ** 2 * eta ** 2)
    R = q.R(beta, cutoff)
    nm = cutoff.norms
    t1 = (nm["grad0_eta"] ** 2 + nm["eta_z_eta"]) * R
    t2 = nm["eta_dt_eta"] * cutoff.support_volume ** e["time_support"] * R ** e["time_R"]
    return _report(
        "main_caccioppoli", beta, sup_term + hess_term, {"cutoff_space": t1, "cutoff_time": t2}, q, cutoff,
        e["prefactor"], {"sup_term": sup_term, "hessian_term": hess_term, "R": R},
    )


def time_derivative_report(sol: Solution, cutoff: CutoffSpec, beta: float, derived=None) -> EstimateReport:
    """``L^(beta+2)`` bound on ``d_t u`` in terms of ``M = sup_spt (delta + |grad u|^2)^(1/2)``."""
    _require_beta(beta)
    q = _quantities(sol, derived)
    e = exponents("time_derivative", q.p, beta)
    eta = cutoff.eta
    lhs = q.integrate(np.abs(q.d.ut) ** e["lhs"] * eta ** e["lhs"])
    spt = cutoff.eta > 0
    M = float(np.sqrt(q.W[spt].max())) if spt.any() else 0.0
    nm = cutoff.norms
    inner = M ** e["grad_M"] * nm["grad0_eta"] ** 2 + M ** e["time_M"] * nm["eta_dt_eta"]
    rhs = inner ** e["outer"] * cutoff.support_volume
    return _report(
        "time_derivative", beta, lhs, {"rhs": rhs}, q, cutoff,
        intermediates={"M": M, "support_volume": cutoff.support_volume},
    )


REPORTS = {
    "z_caccioppoli": z_caccioppoli_report,
    "horizontal_caccioppoli": horizontal_caccioppoli_report,
    "interpolation": interpolation_report,
    "z_integrability": z_integrability_report,
    "main_caccioppoli": main_caccioppoli_report,
    "time_derivative": time_derivative_report,
}


def run_reports(sol: Solution, cutoff: CutoffSpec, betas=(0.0,), names=REPORT_NAMES) -> list[EstimateReport]:
    """All requested reports on one solution, sharing the derived fields."""
    q = _Quantities(sol)
    out = []
    for name in names:
        if name not in REPORTS:
            raise EstimateError(f"unknown inequality {name!r}")
        for beta in betas:
            out.append(REPORTS[name](sol, cutoff, float(beta), derived=q))
    return out
