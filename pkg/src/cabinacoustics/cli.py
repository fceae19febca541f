"""Command line entry point.

Exit status: 0 success, 1 configuration or usage error, 2 stage failure,
3 solver non-convergence.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .pipeline import ConfigError, StageError

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_NONCONVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cabinacoustics", description="Cavity acoustics chain and solver benchmark.",
                epilog=pipeline.config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("config", nargs="?", help="config file (omit for all defaults)")
        sp.add_argument("-o", "--output-dir", help="override output_dir")
        sp.add_argument("--sequential", action="store_true", help="force sequential reference kernels")
        return sp

    common(sub.add_parser("run", help="transport -> spectra -> Helmholtz -> solve -> profiles"))
    b = common(sub.add_parser("bench", help="sequential vs parallel kernel timings over an h ladder"))
    b.add_argument("--ladder", help="comma-separated grid spacings, strictly decreasing "
                                    f"(default {','.join(map(str, pipeline.BENCH_LADDER))})")
    b.add_argument("--solvers", default=",".join(pipeline.SOLVER_NAMES), help="solvers to bench")
    common(sub.add_parser("tune", help="sweep two-sided Robin parameters for the Schwarz method"))
    common(sub.add_parser("schemes", help="Gaussian-pulse amplitude retention of the five schemes"))
    return p


def _load(args) -> pipeline.PipelineConfig:
    cfg = pipeline.load_config(args.config) if args.config else pipeline.parse_config("")
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    if args.sequential:
        cfg = cfg.sequential()
    return cfg


def _run(cfg) -> int:
    res = pipeline.run_pipeline(cfg)
    for w in res.warnings:
        _err(f"warning: {w}")
    rep = res.report
    print(f"f_peak_hz={res.f_peak:.6g} solver={rep.solver} iterations={rep.iterations} "
          f"converged={rep.converged} true_relres={rep.true_relres:.3e}")
    print(f"artifacts in {res.output_dir}")
    if not res.converged:
        _err("solver did not converge")
        return EXIT_NONCONVERGED
    return EXIT_OK


def _bench(cfg, args) -> int:
    ladder = None
    if args.ladder:
        try:
            ladder = tuple(float(v) for v in args.ladder.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"--ladder: cannot parse {args.ladder!r}") from None
        if not ladder or any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError("--ladder: spacings must be strictly decreasing")
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    bad = [s for s in solvers if s not in pipeline.SOLVER_NAMES]
    if bad:
        raise ConfigError(f"--solvers: {', '.join(bad)} not one of {', '.join(pipeline.SOLVER_NAMES)}")
    for h in ladder or cfg.bench.ladder:
        try:
            cfg.cavity.grid(h)
        except ValueError as exc:
            raise ConfigError(f"--ladder: h={h}: {exc}") from None

    def show(r):
        print(f"{r.solver:<12} h={r.h:<9g} n={r.n:<7d} iter={r.iterations:<6d} conv={int(r.converged)} "
              f"seq={r.sequential_time_s:.4g}s par={r.parallel_time_s:.4g}s speedup={r.speedup:.3g}",
              flush=True)

    table = pipeline.bench_solvers(cfg, ladder, solvers, progress=show)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_bench_csv(out / "bench.csv", table)
    for m in table.mismatches:
        _err(f"iteration mismatch between kernel modes: {m}")
    if table.mismatches:
        return EXIT_STAGE
    if not all(r.converged for r in table.rows):
        _err("some benchmark solves did not converge")
        return EXIT_NONCONVERGED
    return EXIT_OK


def _tune(cfg) -> int:
    from .schwarz import TuningError

    try:
        best, table, reports = pipeline.run_tune(cfg)
    except TuningError as exc:
        _err(str(exc))
        return EXIT_NONCONVERGED
    tuned, base = reports
    print(f"best s_left={best.s_left:.6g} s_right={best.s_right:.6g} "
          f"outer={tuned.outer_iterations} (baseline ik: {base.outer_iterations}, "
          f"converged={base.converged}) over {len(table)} candidates")
    return EXIT_OK if tuned.converged else EXIT_NONCONVERGED


def _schemes(cfg) -> int:
    rows = pipeline.run_schemes(cfg)
    for r in rows:
        print(f"{r.scheme.value:<7} retention={r.retention:.4f} min={r.field_min:+.3e} "
              f"max={r.field_max:.6f} bounded={int(r.bounded)}")
        if r.warning:
            _err(f"warning: {r.warning}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "run":
            return _run(cfg)
        if args.command == "bench":
            return _bench(cfg, args)
        if args.command == "tune":
            return _tune(cfg)
        return _schemes(cfg)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except StageError as exc:
        _err(f"failed in {exc}")
        return EXIT_STAGE
    except (OSError, ValueError, RuntimeError) as exc:
        _err(f"failed: {exc}")
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
