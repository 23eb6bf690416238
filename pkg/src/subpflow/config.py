"""Experiment configuration: JSON ingestion, validation and construction of solver inputs.

Layout (every section except ``problem`` is optional)::

    {
      "seed": 0,
      "problem": {"n": 1, "box_lo": [-1, -1, -0.5], "box_hi": [1, 1, 0.5], "m": 25,
                  "t0": 0.0, "t1": 0.05, "nt": 16, "p": 3, "delta": 0.5,
                  "eps": null, "lambda": null,
                  "initial": {"preset": "bump", "params": {"width": [0.8, 0.8, 0.25]}},
                  "boundary": "frozen_initial", "c_stab": 0.25},
      "verification": {"inequalities": ["all"], "betas": [0, 1],
                       "cylinders": [{"center": [0, 0, 0], "t0": null, "r": 0.8, "mu": 0.039}],
                       "moser": {"r": 0.4, "mu": 0.039, "level_count": 6},
                       "lipschitz": {"r": 0.4, "mu": 0.039}},
      "sweeps": {"h": [1, 2], "delta": [1, 0.5], "eps": [1, 0.5], "beta": [0, 1, 2]},
      "output": {"dir": "out", "formats": ["jsonl", "csv", "summary"]}
    }

A cylinder ``t0`` of ``null`` means the final time of the run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from . import flux as fx
from .calculus import GridSpec
from .estimates import REPORT_NAMES
from .geometry import CylinderSpec
from .presets import PRESETS, preset
from .solver import ProblemSpec

P_RANGE_REPORTS = {"interpolation", "z_integrability", "main_caccioppoli"}
FORMATS = {"jsonl", "csv", "summary", "npz"}


class ConfigError(ValueError):
    """Validation failure; ``where`` names the offending field or source position."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def _expect(cond: bool, where: str, message: str) -> None:
    if not cond:
        raise ConfigError(where, message)


def _keys(d: Any, where: str, allowed: set, required: set = frozenset()) -> dict:
    _expect(isinstance(d, dict), where, f"expected an object, got {type(d).__name__}")
    extra = sorted(set(d) - allowed)
    _expect(not extra, where, f"unknown field(s) {extra}")
    missing = sorted(required - set(d))
    _expect(not missing, where, f"missing field(s) {missing}")
    return d


def _num(v, where: str, lo: float | None = None, strict: bool = False) -> float:
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool), where, f"expected a number, got {v!r}")
    v = float(v)
    if lo is not None:
        ok = v > lo if strict else v >= lo
        _expect(ok, where, f"must be {'>' if strict else '>='} {lo}, got {v}")
    return v


def _int(v, where: str, lo: int) -> int:
    _expect(isinstance(v, int) and not isinstance(v, bool), where, f"expected an integer, got {v!r}")
    _expect(v >= lo, where, f"must be >= {lo}, got {v}")
    return int(v)


def _numlist(v, where: str, lo: float | None = None, strict: bool = False) -> list[float]:
    _expect(isinstance(v, list) and len(v) > 0, where, "expected a non-empty list")
    return [_num(x, f"{where}[{k}]", lo, strict) for k, x in enumerate(v)]


@dataclass(frozen=True)
class ProblemConfig:
    n: int
    box_lo: tuple
    box_hi: tuple
    m: tuple
    t0: float
    t1: float
    nt: int
    p: float
    delta: float
    eps: Optional[float]
    lam: Optional[float]
    initial: str
    initial_params: dict
    boundary: str
    c_stab: float

    def grid(self, refine: int = 1) -> GridSpec:
        g = GridSpec(self.n, self.box_lo, self.box_hi, self.m, self.t0, self.t1, self.nt)
        return g if refine == 1 else g.refine(refine, time_factor=1)

    def flux(self, delta: Optional[float] = None, eps: Optional[float] = None):
        d = self.delta if delta is None else delta
        base = fx.p_laplacian(self.n, self.p, d)
        e = self.eps if eps is None else eps
        if e is None:
            return base
        return fx.lift(base, e, lam=self.lam)

    def spec(self, refine: int = 1, delta: Optional[float] = None, eps: Optional[float] = None,
             flux=None) -> ProblemSpec:
        g = self.grid(refine)
        u0 = preset(self.initial, g, **self.initial_params)
        f = self.flux(delta, eps) if flux is None else flux
        return ProblemSpec(g, f, u0, boundary=self.boundary, c_stab=self.c_stab)


@dataclass(frozen=True)
class CylinderConfig:
    center: tuple
    t0: Optional[float]
    r: float
    mu: float

    def build(self, t_final: float) -> CylinderSpec:
        return CylinderSpec(self.center, t_final if self.t0 is None else self.t0, self.r, self.mu)


@dataclass(frozen=True)
class MoserConfig:
    r: float
    mu: float
    level_count: int = 6
    center: Optional[tuple] = None
    t0: Optional[float] = None


@dataclass(frozen=True)
class VerificationConfig:
    inequalities: tuple = ()
    betas: tuple = (0.0,)
    cylinders: tuple = ()
    moser: Optional[MoserConfig] = None
    lipschitz: Optional[MoserConfig] = None


@dataclass(frozen=True)
class SweepConfig:
    h: tuple = ()
    delta: tuple = ()
    eps: tuple = ()
    beta: tuple = ()


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    formats: tuple = ("jsonl", "csv", "summary")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    verification: VerificationConfig = field(default_factory=VerificationConfig)
    sweeps: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0


def _tuple(v, dim: int, where: str, lo=None, strict=False) -> tuple:
    if isinstance(v, list):
        _expect(len(v) == dim, where, f"expected {dim} entries, got {len(v)}")
        return tuple(_num(x, f"{where}[{k}]", lo, strict) for k, x in enumerate(v))
    return (_num(v, where, lo, strict),) * dim


def parse_problem(d) -> ProblemConfig:
    w = "problem"
    _keys(d, w, {"n", "box_lo", "box_hi", "m", "t0", "t1", "nt", "p", "delta", "eps", "lambda",
                 "initial", "boundary", "c_stab"}, {"p", "initial"})
    n = _int(d.get("n", 1), f"{w}.n", 1)
    dim = 2 * n + 1
    lo = _tuple(d.get("box_lo", -1.0), dim, f"{w}.box_lo")
    hi = _tuple(d.get("box_hi", 1.0), dim, f"{w}.box_hi")
    _expect(all(a < b for a, b in zip(lo, hi)), f"{w}.box_hi", "every upper bound must exceed the lower bound")
    m_raw = d.get("m", 17)
    if isinstance(m_raw, list):
        _expect(len(m_raw) == dim, f"{w}.m", f"expected {dim} entries")
        m = tuple(_int(k, f"{w}.m[{i}]", 5) for i, k in enumerate(m_raw))
    else:
        m = (_int(m_raw, f"{w}.m", 5),) * dim
    t0 = _num(d.get("t0", 0.0), f"{w}.t0")
    t1 = _num(d.get("t1", 0.05), f"{w}.t1")
    _expect(t1 > t0, f"{w}.t1", f"must exceed t0 = {t0}")
    nt = _int(d.get("nt", 8), f"{w}.nt", 1)
    p = _num(d["p"], f"{w}.p", 2.0)
    delta = _num(d.get("delta", 0.0), f"{w}.delta", 0.0)
    eps = d.get("eps")
    if eps is not None:
        eps = _num(eps, f"{w}.eps", 0.0, strict=True)
    lam = d.get("lambda")
    if lam is not None:
        lam = _num(lam, f"{w}.lambda", 0.0, strict=True)
    ini = _keys(d["initial"], f"{w}.initial", {"preset", "params"}, {"preset"})
    _expect(ini["preset"] in PRESETS, f"{w}.initial.preset",
            f"unknown preset {ini['preset']!r}; choose from {sorted(PRESETS)}")
    params = ini.get("params", {})
    _expect(isinstance(params, dict), f"{w}.initial.params", "expected an object")
    boundary = d.get("boundary", "frozen_initial")
    _expect(boundary == "frozen_initial", f"{w}.boundary", f"only 'frozen_initial' is configurable, got {boundary!r}")
    c_stab = _num(d.get("c_stab", 0.25), f"{w}.c_stab", 0.0, strict=True)
    return ProblemConfig(n, lo, hi, m, t0, t1, nt, p, delta, eps, lam, ini["preset"], dict(params), boundary, c_stab)


def _parse_moser(d, where: str, dim: int) -> MoserConfig:
    _keys(d, where, {"r", "mu", "level_count", "center", "t0"}, {"r"})
    center = d.get("center")
    if center is not None:
        center = _tuple(center, dim, f"{where}.center")
    t0 = d.get("t0")
    return MoserConfig(
        r=_num(d["r"], f"{where}.r", 0.0, strict=True),
        mu=_num(d.get("mu", 1.0), f"{where}.mu", 0.0, strict=True),
        level_count=_int(d.get("level_count", 6), f"{where}.level_count", 1),
        center=center,
        t0=None if t0 is None else _num(t0, f"{where}.t0"),
    )


def parse_verification(d, problem: ProblemConfig) -> VerificationConfig:
    w = "verification"
    _keys(d, w, {"inequalities", "betas", "cylinders", "moser", "lipschitz"})
    dim = 2 * problem.n + 1
    names = d.get("inequalities", [])
    _expect(isinstance(names, list), f"{w}.inequalities", "expected a list")
    if "all" in names:
        names = list(REPORT_NAMES)
    for k, nm in enumerate(names):
        _expect(nm in REPORT_NAMES, f"{w}.inequalities[{k}]", f"unknown inequality {nm!r}; choose from {list(REPORT_NAMES)}")
        if nm in P_RANGE_REPORTS:
            _expect(problem.p <= 4, f"{w}.inequalities[{k}]", f"{nm} needs p <= 4, problem has p = {problem.p}")
    betas = tuple(_numlist(d.get("betas", [0.0]), f"{w}.betas", 0.0))
    cyls = []
    raw = d.get("cylinders", [])
    _expect(isinstance(raw, list), f"{w}.cylinders", "expected a list")
    for k, c in enumerate(raw):
        cw = f"{w}.cylinders[{k}]"
        _keys(c, cw, {"center", "t0", "r", "mu"}, {"r"})
        t0 = c.get("t0")
        cyls.append(CylinderConfig(
            _tuple(c.get("center", 0.0), dim, f"{cw}.center"),
            None if t0 is None else _num(t0, f"{cw}.t0"),
            _num(c["r"], f"{cw}.r", 0.0, strict=True),
            _num(c.get("mu", 1.0), f"{cw}.mu", 0.0, strict=True),
        ))
    _expect(not names or cyls, f"{w}.cylinders", "inequalities were requested but no cylinder is given")
    moser = _parse_moser(d["moser"], f"{w}.moser", dim) if "moser" in d else None
    lip = _parse_moser(d["lipschitz"], f"{w}.lipschitz", dim) if "lipschitz" in d else None
    return VerificationConfig(tuple(names), betas, tuple(cyls), moser, lip)


def parse_sweeps(d) -> SweepConfig:
    w = "sweeps"
    _keys(d, w, {"h", "delta", "eps", "beta"})
    h = ()
    if "h" in d:
        h = tuple(_int(v, f"{w}.h[{k}]", 1) for k, v in enumerate(d["h"] if isinstance(d["h"], list) else [d["h"]]))
    return SweepConfig(
        h=h,
        delta=tuple(_numlist(d["delta"], f"{w}.delta", 0.0)) if "delta" in d else (),
        eps=tuple(_numlist(d["eps"], f"{w}.eps", 0.0, strict=True)) if "eps" in d else (),
        beta=tuple(_numlist(d["beta"], f"{w}.beta", 0.0)) if "beta" in d else (),
    )


def parse_output(d) -> OutputConfig:
    w = "output"
    _keys(d, w, {"dir", "formats"})
    out_dir = d.get("dir", "out")
    _expect(isinstance(out_dir, str) and out_dir, f"{w}.dir", "expected a non-empty string")
    formats = d.get("formats", ["jsonl", "csv", "summary"])
    _expect(isinstance(formats, list), f"{w}.formats", "expected a list")
    for k, f in enumerate(formats):
        _expect(f in FORMATS, f"{w}.formats[{k}]", f"unknown format {f!r}; choose from {sorted(FORMATS)}")
    return OutputConfig(out_dir, tuple(formats))


def parse_config(d) -> ExperimentConfig:
    _keys(d, "config", {"seed", "problem", "verification", "sweeps", "output"}, {"problem"})
    problem = parse_problem(d["problem"])
    return ExperimentConfig(
        problem=problem,
        verification=parse_verification(d.get("verification", {}), problem),
        sweeps=parse_sweeps(d.get("sweeps", {})),
        output=parse_output(d.get("output", {})),
        seed=_int(d.get("seed", 0), "seed", 0),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror or exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return parse_config(raw)
