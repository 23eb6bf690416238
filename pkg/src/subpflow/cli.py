"""Batch experiment runner.

Subcommands ``solve``, ``verify``, ``moser``, ``structure-check`` and ``sweep`` read one JSON
config and write JSON-lines, CSV and a plain-text summary into the output directory.

Exit codes: 0 success, 2 invalid config or inputs, 3 solver instability, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import estimates as est
from . import flux as fx
from . import moser as mo
from . import records as rec
from .calculus import GridError, SupportError
from .config import ConfigError, ExperimentConfig, load_config
from .geometry import DimensionError, HeisenbergPoint
from .presets import UnknownPresetError
from .solver import Solution, SolverError, SolverInstabilityError, solve

log = logging.getLogger("subpflow")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INSTABILITY = 3
EXIT_IO = 4

VALIDATION_ERRORS = (
    ConfigError, est.EstimateError, mo.MoserError, fx.FluxError, GridError, SupportError,
    DimensionError, UnknownPresetError, TypeError, ValueError,
)


class Runner:
    def __init__(self, cfg: ExperimentConfig, out_dir: Path, quiet: bool = False):
        self.cfg = cfg
        self.out = out_dir
        self.quiet = quiet
        self.summary: list[str] = []
        self.written: list[Path] = []

    # output helpers

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.output.formats

    def jsonl(self, name: str, records: list[dict]) -> None:
        if self.wants("jsonl"):
            self.written.append(rec.write_jsonl(self.out / name, records))

    def csv(self, name: str, rows: list[dict], fields=None) -> None:
        if self.wants("csv") and rows:
            self.written.append(rec.write_csv(self.out / name, rows, fields))

    def finish(self, title: str) -> None:
        text = "\n".join([title, "=" * len(title), *self.summary]) + "\n"
        if self.wants("summary"):
            path = self.out / "summary.txt"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            self.written.append(path)
        if not self.quiet:
            sys.stdout.write(text)

    # building blocks

    def run_solve(self, refine: int = 1, delta=None, eps=None, flux=None) -> Solution:
        spec = self.cfg.problem.spec(refine, delta=delta, eps=eps, flux=flux)
        log.info("solving on %s, p=%g", spec.grid.shape, spec.flux.p)
        return solve(spec)

    def reports(self, sol: Solution, betas=None) -> list:
        v = self.cfg.verification
        if not v.inequalities:
            return []
        betas = v.betas if betas is None else betas
        out = []
        q = est._Quantities(sol)
        for cyl in v.cylinders:
            cutoff = est.make_cutoff(cyl.build(float(sol.times[-1])), sol.grid, sol.times)
            for name in v.inequalities:
                for beta in betas:
                    out.append(est.REPORTS[name](sol, cutoff, float(beta), derived=q))
        return out

    def moser_records(self, sol: Solution, tag: dict | None = None) -> tuple[list[dict], list[dict]]:
        v = self.cfg.verification
        tag = tag or {}
        records, rows = [], []
        t_final = float(sol.times[-1])
        if v.moser is not None:
            mc = v.moser
            ladder = mo.build_sequences(
                self.cfg.problem.p, self.cfg.problem.n, mc.r, mc.level_count, mu=mc.mu,
                center=_center(mc.center, self.cfg.problem.n), t0=t_final if mc.t0 is None else mc.t0,
            )
            ladder = mo.measure_ladder(sol, ladder)
            it = mo.check_iteration(ladder)
            records.append(rec.record("moser_ladder", **tag, ladder=ladder.to_dict(), iteration=it.to_dict()))
            rows.extend({**tag, **row} for row in mo.ladder_rows(ladder, it))
            self.summary.append(f"moser{_fmt_tag(tag)}: max_C = {_g(it.max_C)}  levels = {ladder.level_count + 1}")
        if v.lipschitz is not None:
            lc = v.lipschitz
            lip = mo.lipschitz_bound_report(
                sol, mu=lc.mu, r=lc.r, center=_center(lc.center, self.cfg.problem.n),
                t0=t_final if lc.t0 is None else lc.t0,
            )
            records.append(rec.record("lipschitz", **tag, **lip.to_dict()))
            self.summary.append(
                f"lipschitz{_fmt_tag(tag)}: sup_grad = {_g(lip.sup_grad)}  bound = {_g(lip.bound_rhs)}"
                f"  empirical_C = {_g(lip.empirical_C)}"
            )
        return records, rows

    def summarize_reports(self, reports, tag: dict | None = None) -> None:
        for r in reports:
            self.summary.append(
                f"{r.name:24s} beta={r.beta:<4g} r={r.params['cylinder']['r']:<6g}{_fmt_tag(tag or {})}"
                f" lhs={_g(r.lhs):>12s}  rhs={_g(r.rhs_total):>12s}  empirical_C={_g(r.empirical_C)}"
            )

    # subcommands

    def cmd_solve(self) -> None:
        sol = self.run_solve()
        self.jsonl("solve.jsonl", [rec.solution_record(sol)])
        self.csv("diagnostics.csv", rec.diagnostics_rows(sol))
        if self.wants("npz"):
            path = self.out / "solution.npz"
            path.parent.mkdir(parents=True, exist_ok=True)
            np.savez(path, u=sol.u, times=sol.times)
            self.written.append(path)
        d = sol.diagnostics
        self.summary.append(f"steps = {len(sol.dt_history)}  t_final = {_g(sol.times[-1])}")
        self.summary.append(f"energy {_g(d['energy'][0])} -> {_g(d['energy'][-1])}")
        self.finish("solve")

    def cmd_verify(self) -> None:
        sol = self.run_solve()
        reports = self.reports(sol)
        self.jsonl("solve.jsonl", [rec.solution_record(sol)])
        self.jsonl("reports.jsonl", [rec.estimate_record(r) for r in reports])
        self.csv("reports.csv", [rec.estimate_row(r) for r in reports])
        self.summarize_reports(reports)
        self.finish("verify")

    def cmd_moser(self) -> None:
        v = self.cfg.verification
        if v.moser is None and v.lipschitz is None:
            raise ConfigError("verification", "moser needs a 'moser' or 'lipschitz' section")
        sol = self.run_solve()
        records, rows = self.moser_records(sol)
        self.jsonl("moser.jsonl", records)
        self.csv("moser.csv", rows)
        self.finish("moser")

    def cmd_structure(self) -> None:
        pc = self.cfg.problem
        models = [("p_laplacian", fx.p_laplacian(pc.n, pc.p, pc.delta))]
        if 0 < pc.delta < 1:
            models.append(("regularized", fx.regularize(fx.p_laplacian(pc.n, pc.p, 0.0), pc.delta, pc.lam)))
        if pc.eps is not None:
            models.append(("lifted", fx.lift(fx.p_laplacian(pc.n, pc.p, pc.delta), pc.eps, lam=pc.lam)))
        records = []
        for k, (label, model) in enumerate(models):
            report = fx.check_structure(model, rng_seed=self.cfg.seed + k)
            records.append(rec.record("structure", model=label, flux=model.to_dict(), seed=self.cfg.seed + k,
                                      ok=report.ok, **report.to_dict()))
            self.summary.append(
                f"{label:12s} lambda_emp={_g(report.lambda_emp)}  Lambda_emp={_g(report.Lambda_emp)}"
                f"  ok={report.ok}"
            )
        self.jsonl("structure.jsonl", records)
        self.finish("structure-check")

    def cmd_sweep(self) -> None:
        sw = self.cfg.sweeps
        if not (sw.h or sw.delta or sw.eps or sw.beta):
            raise ConfigError("sweeps", "no sweep is configured")
        records, rows = [], []
        if sw.h:
            for f in sw.h:
                sol = self.run_solve(refine=f)
                tag = {"sweep": "h", "factor": f}
                reports = self.reports(sol)
                records.append(rec.record("sweep_solve", **tag, **_strip(rec.solution_record(sol))))
                records.extend({**rec.estimate_record(r), **tag} for r in reports)
                rows.extend({**tag, **rec.estimate_row(r)} for r in reports)
                mrec, _ = self.moser_records(sol, tag)
                records.extend(mrec)
                self.summarize_reports(reports, tag)
        if sw.delta:
            prev = None
            for d in sw.delta:
                sol = self.run_solve(delta=d)
                diff = None if prev is None else float(np.max(np.abs(sol.u - prev[1])))
                row = {"sweep": "delta", "delta": d, "previous_delta": None if prev is None else prev[0],
                       "max_diff": diff, "max_abs_final": float(np.max(np.abs(sol.u[-1])))}
                records.append(rec.record("sweep_delta", **row))
                rows.append(row)
                self.summary.append(f"delta={d:<10g} diff to previous = {_g(diff)}")
                prev = (d, sol.u)
        if sw.eps:
            pc = self.cfg.problem
            ref_flux = fx.lift(fx.p_laplacian(pc.n, pc.p, pc.delta), 1.0, lam=pc.lam).horizontal_limit()
            ref = self.run_solve(flux=ref_flux)
            for e in sw.eps:
                sol = self.run_solve(eps=e)
                diff = float(np.max(np.abs(sol.u - ref.u)))
                row = {"sweep": "eps", "eps": e, "max_diff": diff}
                records.append(rec.record("sweep_eps", **row))
                rows.append(row)
                self.summary.append(f"eps={e:<10g} diff to horizontal limit = {_g(diff)}")
        if sw.beta:
            sol = self.run_solve()
            reports = self.reports(sol, betas=sw.beta)
            records.extend({**rec.estimate_record(r), "sweep": "beta"} for r in reports)
            rows.extend({"sweep": "beta", **rec.estimate_row(r)} for r in reports)
            self.summarize_reports(reports, {"sweep": "beta"})
        self.jsonl("sweep.jsonl", records)
        self.csv("sweep.csv", rows)
        self.finish("sweep")

    def write_partial(self, exc: SolverInstabilityError) -> None:
        if exc.partial is None:
            return
        self.jsonl("solve.jsonl", [rec.solution_record(exc.partial, status="unstable")])
        self.csv("diagnostics.csv", rec.diagnostics_rows(exc.partial))


def _strip(r: dict) -> dict:
    return {k: v for k, v in r.items() if k not in ("schema", "kind")}


def _center(c, n: int):
    return HeisenbergPoint.identity(n) if c is None else HeisenbergPoint.from_array(c)


def _g(x) -> str:
    return "-" if x is None else f"{x:.6g}"


def _fmt_tag(tag: dict) -> str:
    return "".join(f" {k}={v}" for k, v in tag.items())


COMMANDS = {
    "solve": Runner.cmd_solve,
    "verify": Runner.cmd_verify,
    "moser": Runner.cmd_moser,
    "structure-check": Runner.cmd_structure,
    "sweep": Runner.cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", type=Path, default=None, help="override the output directory")
    common.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    parser = argparse.ArgumentParser(
        prog="subpflow",
        description="Parabolic p-Laplacian on the Heisenberg group: solver and estimate verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "solve the configured problem",
        "verify": "solve and evaluate the configured inequalities",
        "moser": "solve and run the Moser ladder and Lipschitz check",
        "structure-check": "sample the structure conditions of the configured flux",
        "sweep": "run the configured h, delta, eps and beta ladders",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_VALIDATION
    out_dir = args.out if args.out is not None else Path(cfg.output.dir)
    runner = Runner(cfg, out_dir, quiet=args.quiet)
    try:
        COMMANDS[args.command](runner)
    except SolverInstabilityError as exc:
        log.error("solver instability: %s", exc)
        try:
            runner.write_partial(exc)
        except OSError as io_exc:
            log.error("could not write partial artifacts: %s", io_exc)
        return EXIT_INSTABILITY
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_INSTABILITY
    except VALIDATION_ERRORS as exc:
        log.error("invalid input: %s", exc)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
