"""Flux fields ``A(x, xi)`` for the divergence-form equation, their regularisations and
sampled certification of the two-sided structure bounds.

Vectors carry their components on the *leading* axis, so a flux can be evaluated
directly on the ``(2n, ...)`` output of :func:`subpflow.calculus.horizontal_gradient`.
A spatial point ``x`` is any sequence of ``2n+1`` arrays broadcastable against the
components of ``xi`` (``GridSpec.coords`` is one), or ``None`` for x-independent fluxes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

Evaluator = Callable[[Optional[np.ndarray], np.ndarray], np.ndarray]


class FluxError(ValueError):
    pass


def _finite(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise FluxError("flux argument contains non-finite values")
    return xi


def _power(q, s: float):
    if s == 0.0:
        return np.ones_like(q)
    if s == 0.5:
        return np.sqrt(q)
    if s == 1.0:
        return q
    return q ** s


def _plap_flux(xi, delta, p):
    q = delta + np.sum(xi * xi, axis=0)
    return _power(q, 0.5 * (p - 2.0)) * xi


def _plap_jacobian(xi, delta, p):
    """``(delta+|xi|^2)^s [I + (p-2) xi xi^T / (delta+|xi|^2)]`` with ``s=(p-2)/2``."""
    d = xi.shape[0]
    s = 0.5 * (p - 2.0)
    q = delta + np.sum(xi * xi, axis=0)
    w = _power(q, s)
    eye = np.eye(d).reshape((d, d) + (1,) * (xi.ndim - 1))
    outer = xi[:, None] * xi[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        rank1 = np.where(q > 0, (p - 2.0) * w / q, 0.0)
    return w * eye + rank1 * outer


@dataclass(frozen=True)
class FluxModel:
    """Horizontal flux on ``R^{2n}``.

    ``kind="p_laplacian"`` is ``(delta + |xi|^2)^((p-2)/2) xi``; ``kind="custom"`` uses
    ``evaluator(x, xi)`` and the optional analytic ``jacobian(x, xi)`` (shape ``(2n, 2n, ...)``).
    """

    n: int
    p: float
    delta: float = 0.0
    kind: str = "p_laplacian"
    evaluator: Optional[Evaluator] = field(default=None, compare=False, repr=False)
    jacobian: Optional[Evaluator] = field(default=None, compare=False, repr=False)
    lambda_struct: Optional[float] = None
    Lambda_struct: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise FluxError(f"n must be >= 1, got {self.n}")
        if self.p < 2:
            raise FluxError(f"p must be >= 2, got {self.p}")
        if self.delta < 0:
            raise FluxError(f"delta must be >= 0, got {self.delta}")
        if self.kind not in ("p_laplacian", "custom"):
            raise FluxError(f"unknown flux kind {self.kind!r}")
        if self.kind == "custom" and self.evaluator is None:
            raise FluxError("custom flux needs an evaluator")
        lam = self.lambda_struct
        Lam = self.Lambda_struct
        if lam is None:
            lam = min(1.0, self.p - 1.0) if self.kind == "p_laplacian" else 1.0
        if Lam is None:
            Lam = max(1.0, self.p - 1.0) if self.kind == "p_laplacian" else lam
        if not 0 < lam <= Lam:
            raise FluxError(f"structure constants need 0 < lambda <= Lambda, got {lam}, {Lam}")
        object.__setattr__(self, "lambda_struct", float(lam))
        object.__setattr__(self, "Lambda_struct", float(Lam))

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def weight_exponent(self) -> float:
        return 0.5 * (self.p - 2.0)

    def __call__(self, xi, x=None) -> np.ndarray:
        xi = _finite(xi)
        if xi.shape[0] != self.dim:
            raise FluxError(f"expected {self.dim} components, got {xi.shape[0]}")
        if self.kind == "p_laplacian":
            return _plap_flux(xi, self.delta, self.p)
        return np.asarray(self.evaluator(x, xi), dtype=float)

    def jac(self, xi, x=None) -> np.ndarray:
        xi = _finite(xi)
        if self.kind == "p_laplacian":
            return _plap_jacobian(xi, self.delta, self.p)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x, xi), dtype=float)
        return finite_difference_jacobian(self, xi, x)

    def stability_factor(self) -> float:
        """``Lambda_eff`` of the time-step bound: Lambda relative to the p-Laplacian's ``p-1``."""
        return max(1.0, self.Lambda_struct / max(1.0, self.p - 1.0))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "delta": self.delta,
            "kind": self.kind,
            "lambda": self.lambda_struct,
            "Lambda": self.Lambda_struct,
        }


def p_laplacian(n: int, p: float, delta: float = 0.0) -> FluxModel:
    return FluxModel(n=n, p=p, delta=delta)


def eval_flux(m, x, xi) -> np.ndarray:
    return m(xi, x)


def flux_jacobian(m, x, xi) -> np.ndarray:
    return m.jac(xi, x)


def finite_difference_jacobian(m, xi, x=None) -> np.ndarray:
    """Central differences with step ``1e-6 (1 + |xi|)`` per sample."""
    xi = _finite(xi)
    d = xi.shape[0]
    step = 1e-6 * (1.0 + np.sqrt(np.sum(xi * xi, axis=0)))
    cols = []
    for j in range(d):
        e = np.zeros_like(xi)
        e[j] = step
        cols.append((m(xi + e, x) - m(xi - e, x)) / (2.0 * step))
    return np.stack(cols, axis=1)


def regularize(m: FluxModel, delta: float, lam: float | None = None) -> FluxModel:
    """``A_delta(x, xi) = A(x, xi) + lam delta^((p-2)/2) xi`` for ``0 < delta < 1``."""
    if m.delta != 0:
        raise FluxError(f"regularize expects an unregularised model (delta=0), got delta={m.delta}")
    if not 0 < delta < 1:
        raise FluxError(f"delta must lie in (0, 1), got {delta}")
    lam = m.lambda_struct if lam is None else float(lam)
    if lam <= 0:
        raise FluxError(f"lambda must be positive, got {lam}")
    s = m.weight_exponent
    coef = lam * delta ** s

    def evaluator(x, xi):
        return m(xi, x) + coef * xi

    def jacobian(x, xi):
        d = xi.shape[0]
        eye = np.eye(d).reshape((d, d) + (1,) * (xi.ndim - 1))
        return m.jac(xi, x) + coef * eye

    # (delta + |xi|^2)^s >= 2^(s-1) (delta^s + |xi|^(2s)) for 0 <= s <= 1
    upper = max(2.0 ** (1.0 - s) * max(m.Lambda_struct, lam), m.Lambda_struct + lam)
    return FluxModel(
        n=m.n,
        p=m.p,
        delta=delta,
        kind="custom",
        evaluator=evaluator,
        jacobian=jacobian,
        lambda_struct=min(m.lambda_struct, lam),
        Lambda_struct=upper,
    )


@dataclass(frozen=True)
class LiftedFluxModel:
    """Flux on ``R^{2n+1}``: ``(A(x, xi_H), 0) + lam (delta + |xi|^2)^((p-2)/2) xi``.

    It is meant to be evaluated on ``(X_1 u, ..., X_2n u, eps Z u)``.
    """

    base: FluxModel
    eps: float
    lam: float
    delta: float

    def __post_init__(self):
        if not self.eps > 0:
            raise FluxError(f"eps must be positive, got {self.eps}")
        if not self.lam > 0:
            raise FluxError(f"lambda must be positive, got {self.lam}")
        if self.delta < 0:
            raise FluxError(f"delta must be >= 0, got {self.delta}")

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def p(self) -> float:
        return self.base.p

    @property
    def dim(self) -> int:
        return 2 * self.base.n + 1

    @property
    def weight_exponent(self) -> float:
        return self.base.weight_exponent

    @property
    def lambda_struct(self) -> float:
        return self.lam

    @property
    def Lambda_struct(self) -> float:
        return self.base.Lambda_struct + self.lam * max(1.0, self.p - 1.0)

    def __call__(self, xi, x=None) -> np.ndarray:
        xi = _finite(xi)
        if xi.shape[0] != self.dim:
            raise FluxError(f"expected {self.dim} components, got {xi.shape[0]}")
        out = self.lam * _plap_flux(xi, self.delta, self.p)
        out[:-1] += self.base(xi[:-1], x)
        return out

    def jac(self, xi, x=None) -> np.ndarray:
        xi = _finite(xi)
        J = self.lam * _plap_jacobian(xi, self.delta, self.p)
        J[:-1, :-1] += self.base.jac(xi[:-1], x)
        return J

    def stability_factor(self) -> float:
        return max(1.0, self.Lambda_struct / max(1.0, self.p - 1.0))

    def horizontal_limit(self) -> FluxModel:
        """Flux on ``R^{2n}`` obtained as ``eps -> 0`` with the vertical slot scaled by ``eps``."""
        base, lam, delta, p = self.base, self.lam, self.delta, self.p

        def evaluator(x, xi):
            return base(xi, x) + lam * _plap_flux(xi, delta, p)

        def jacobian(x, xi):
            return base.jac(xi, x) + lam * _plap_jacobian(xi, delta, p)

        return FluxModel(
            n=base.n,
            p=p,
            delta=max(base.delta, delta),
            kind="custom",
            evaluator=evaluator,
            jacobian=jacobian,
            lambda_struct=lam,
            Lambda_struct=self.Lambda_struct,
        )

    def with_eps(self, eps: float) -> "LiftedFluxModel":
        return replace(self, eps=eps)

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "eps": self.eps, "lambda": self.lam, "delta": self.delta}


def lift(m: FluxModel, eps: float, lam: float | None = None, delta: float | None = None) -> LiftedFluxModel:
    lam = m.lambda_struct if lam is None else float(lam)
    return LiftedFluxModel(m, float(eps), lam, m.delta if delta is None else float(delta))


@dataclass
class StructureReport:
    lambda_emp: float
    Lambda_emp: float
    growth_max: float
    lambda_model: float
    Lambda_model: float
    quotient_ok: bool
    growth_ok: bool
    x_derivative_max: float = float("nan")
    samples: int = 0

    @property
    def ok(self) -> bool:
        return self.quotient_ok and self.growth_ok

    def to_dict(self) -> dict:
        return {
            "lambda_emp": self.lambda_emp,
            "Lambda_emp": self.Lambda_emp,
            "growth_max": self.growth_max,
            "lambda_model": self.lambda_model,
            "Lambda_model": self.Lambda_model,
            "quotient_ok": self.quotient_ok,
            "growth_ok": self.growth_ok,
            "x_derivative_max": self.x_derivative_max,
            "samples": self.samples,
        }


def sample_arguments(d: int, n: int, count: int, rng):
    """Points ``x`` in ``[-1,1]^(2n+1)``, ``xi`` log-uniform in ``[1e-3, 1e3]`` with uniform
    direction, and unit ``eta``; all with components on the leading axis."""
    rng = np.random.default_rng(rng)
    x = rng.uniform(-1.0, 1.0, size=(2 * n + 1, count))
    direction = rng.standard_normal((d, count))
    direction /= np.linalg.norm(direction, axis=0)
    radius = 10.0 ** rng.uniform(-3.0, 3.0, size=count)
    eta = rng.standard_normal((d, count))
    eta /= np.linalg.norm(eta, axis=0)
    return x, direction * radius, eta


def check_structure(m, sample_count: int = 10_000, rng_seed=0, slack: float = 1e-6) -> StructureReport:
    """Sampled Rayleigh quotients ``eta.DA.eta / ((delta+|xi|^2)^s |eta|^2)`` and growth ratios
    ``|A| / (delta+|xi|^2)^((p-1)/2)`` compared with the model's ``[lambda, Lambda]``."""
    if sample_count < 1:
        raise ValueError(f"sample_count must be >= 1, got {sample_count}")
    x, xi, eta = sample_arguments(m.dim, m.n, sample_count, rng_seed)
    delta = m.delta
    q = delta + np.sum(xi * xi, axis=0)
    s = m.weight_exponent
    J = m.jac(xi, x)
    quot = np.einsum("is,ijs,js->s", eta, J, eta) / (q ** s * np.sum(eta * eta, axis=0))
    growth = np.linalg.norm(m(xi, x), axis=0) / q ** (0.5 * (m.p - 1.0))

    xder = float("nan")
    if isinstance(m, FluxModel) and m.kind == "custom":
        # |d_x A| bound, sampled only; x-independent fluxes give zero
        step = 1e-6
        worst = np.zeros(sample_count)
        for k in range(x.shape[0]):
            e = np.zeros_like(x)
            e[k] = step
            dA = (m(xi, x + e) - m(xi, x - e)) / (2 * step)
            worst = np.maximum(worst, np.max(np.abs(dA), axis=0))
        xder = float(np.max(worst / q ** (0.5 * (m.p - 1.0))))

    lam, Lam = m.lambda_struct, m.Lambda_struct
    lo, hi = float(np.min(quot)), float(np.max(quot))
    gmax = float(np.max(growth))
    quotient_ok = lo >= lam * (1 - slack) and hi <= Lam * (1 + slack)
    growth_ok = gmax <= Lam * (1 + slack)
    if not np.isnan(xder):
        growth_ok = growth_ok and xder <= Lam * (1 + slack)
    return StructureReport(lo, hi, gmax, lam, Lam, quotient_ok, growth_ok, xder, sample_count)
