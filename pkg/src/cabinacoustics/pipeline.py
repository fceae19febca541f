"""End-to-end chain, configuration format and solver benchmark.

Stages, in order: ``transport`` (surrogate probe histories and the
undisturbed baseline), ``spectra`` (fluctuation PSD per probe and the
dominant bin), ``helmholtz`` (cavity system driven by the roof Fourier
coefficients), ``solve`` and ``profiles``.

Configuration is a flat text file of ``section.key = value`` lines; ``#``
starts a comment. Every key and its default is listed in ``CONFIG_KEYS``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import fvschemes, helmholtz, krylov, schwarz, spectra
from .fvschemes import Scheme, TransportConfig
from .krylov import SolverOptions, SolveReport
from .numkit import spmv, write_matrix_market

__all__ = [
    "ConfigError",
    "StageError",
    "CavitySpec",
    "DdmSpec",
    "BenchSpec",
    "TuneSpec",
    "SchemesSpec",
    "PipelineConfig",
    "PipelineResult",
    "BenchRow",
    "BenchTable",
    "CONFIG_KEYS",
    "BENCH_LADDER",
    "parse_config",
    "load_config",
    "config_help",
    "run_pipeline",
    "bench_solvers",
    "write_bench_csv",
    "run_tune",
    "run_schemes",
    "ddm_benchmark_problem",
    "file_digests",
]

BENCH_LADDER = (0.133425, 0.066604, 0.033289, 0.016643)
SOLVER_NAMES = ("bicgstab", "bicgstab_l", "tfqmr")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class CavitySpec:
    width: float = 2.4
    height: float = 1.2
    h: float = 0.05
    roof_start: float = 0.4
    roof_end: float = 0.65
    wall_admittance: complex = 0j
    c: float = 340.0

    def grid(self, h: float | None = None) -> helmholtz.CavityGrid:
        return helmholtz.build_grid(self.width, self.height, self.h if h is None else h,
                                    self.roof_start, self.roof_end, self.wall_admittance)


@dataclass(frozen=True)
class DdmSpec:
    n_sub: int = 0  # 0 disables the domain decomposition
    s_left: complex = complex(2.0, 0.0)
    s_right: complex = complex(2.0, 0.0)
    tol: float = 1e-8
    max_outer: int = 200


@dataclass(frozen=True)
class BenchSpec:
    frequency: float = 13.0
    modulation: float = 1.0
    mode: tuple[int, int] = (1, 1)
    repeats: int = 3
    max_iter: int = 20000
    ladder: tuple[float, ...] = BENCH_LADDER


@dataclass(frozen=True)
class TuneSpec:
    n_sub: int = 4
    h: float = 0.1
    frequency: float = 13.0
    budget: int = 100
    tol: float = 1e-6
    points: int = 5
    span: float = 4.0


@dataclass(frozen=True)
class SchemesSpec:
    nx: int = 200
    ny: int = 3
    dx: float = 0.1
    u: float = 25.0
    diffusivity: float = 0.4
    dt: float = 1e-3
    steps: int = 500
    center: float = 40.0
    width: float = 6.0


def _default_lines(cav: CavitySpec) -> tuple[tuple[str, float], ...]:
    xr = 0.5 * (cav.roof_start + cav.roof_end) * cav.width
    return (("horizontal", 0.25 * cav.height), ("horizontal", 0.5 * cav.height),
            ("horizontal", 0.75 * cav.height), ("vertical", 0.25 * cav.width),
            ("vertical", xr), ("vertical", 0.75 * cav.width))


@dataclass(frozen=True)
class PipelineConfig:
    transport: TransportConfig = TransportConfig()
    scheme: Scheme = Scheme.QUICK
    fft_n: int = 512
    cavity: CavitySpec = CavitySpec()
    solver: str = "bicgstab"
    solver_opts: SolverOptions = SolverOptions(parallel=True, max_iter=5000)
    ddm: DdmSpec = DdmSpec()
    lines: Optional[tuple[tuple[str, float], ...]] = None
    output_dir: str = "out"
    bench: BenchSpec = BenchSpec()
    tune: TuneSpec = TuneSpec()
    schemes: SchemesSpec = SchemesSpec()

    def sampling_lines(self) -> tuple[tuple[str, float], ...]:
        return self.lines if self.lines is not None else _default_lines(self.cavity)

    def sequential(self) -> "PipelineConfig":
        return replace(self, solver_opts=replace(self.solver_opts, parallel=False))


# ---------------------------------------------------------------- parsing

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _complex(text: str) -> complex:
    return complex(text.replace(" ", "").replace("i", "j"))


def _int_pair(text: str) -> tuple[int, int]:
    parts = [p for p in text.replace(":", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError(f"expected two integers, got {text!r}")
    return int(parts[0]), int(parts[1])


def _opt_pair(text: str):
    return None if text.strip().lower() in ("", "none") else _int_pair(text)


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(p) for p in text.split(",") if p.strip())
    if not vals:
        raise ValueError("expected at least one number")
    return vals


def _probes(text: str) -> tuple[tuple[int, int], ...]:
    if text.strip().lower() in ("", "auto", "none"):
        return ()
    return tuple(_int_pair(p) for p in text.split(";") if p.strip())


def _lines(text: str):
    if text.strip().lower() in ("", "auto", "default"):
        return None
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        o, _, v = item.partition(":")
        o = o.strip().lower()
        if o not in ("h", "horizontal", "v", "vertical"):
            raise ValueError(f"line orientation must be h or v, got {o!r}")
        out.append(("horizontal" if o.startswith("h") else "vertical", float(v)))
    return tuple(out)


def _choice(options: Sequence[str]) -> Callable[[str], str]:
    def conv(text: str) -> str:
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"{text.strip()!r} is not one of: {', '.join(options)}")
        return t
    return conv


def _scheme(text: str) -> Scheme:
    try:
        return Scheme.parse(text.strip())
    except ValueError:
        raise ValueError(f"{text.strip()!r} is not one of: {', '.join(s.value for s in Scheme)}") from None


def _fmt(v) -> str:
    if isinstance(v, Scheme):
        return v.value
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, complex):
        return f"{v.real:g}{v.imag:+g}j"
    if v is None:
        return "none"
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "; ".join(",".join(str(a) for a in t) for t in v)
    if isinstance(v, tuple):
        return ",".join(str(a) for a in v)
    return str(v)


# key -> (section attribute or None for top level, field name, converter, help)
_KEYS: list[tuple[str, Optional[str], str, Callable[[str], Any], str]] = [
    ("scheme", None, "scheme", _scheme, "face scheme for the transport stage"),
    ("fft_n", None, "fft_n", int, "FFT length (power of two); the last fft_n samples are used"),
    ("solver", None, "solver", _choice(SOLVER_NAMES), "Krylov solver for the cavity system"),
    ("output_dir", None, "output_dir", str, "directory receiving the CSV artifacts"),
    ("lines", None, "lines", _lines, "sampling lines 'h:y, v:x, ...' or auto"),
    ("transport.nx", "transport", "nx", int, "cells along the flow"),
    ("transport.ny", "transport", "ny", int, "cells across the flow"),
    ("transport.dx", "transport", "dx", float, "cell width (m)"),
    ("transport.dy", "transport", "dy", float, "cell height (m)"),
    ("transport.u", "transport", "u", float, "horizontal velocity (m/s)"),
    ("transport.diffusivity", "transport", "diffusivity", float, "diffusivity (m^2/s)"),
    ("transport.dt", "transport", "dt", float, "time step (s)"),
    ("transport.steps", "transport", "steps", int, "number of time steps"),
    ("transport.w0", "transport", "w0", float, "disturbance amplitude"),
    ("transport.freq", "transport", "freq", float, "disturbance frequency (Hz)"),
    ("transport.background", "transport", "background", float, "undisturbed scalar level"),
    ("transport.probes", "transport", "probe_positions", _probes,
     "probe cells 'i,j; i,j' or auto (one per cavity roof node)"),
    ("transport.probe_row", "transport", "probe_row", int, "row of the automatic roof probes"),
    ("transport.roof_span", "transport", "roof_span", _int_pair, "roof column range 'a,b'"),
    ("transport.band", "transport", "band", _opt_pair, "disturbed inflow rows 'j0,j1' or none"),
    ("cavity.width", "cavity", "width", float, "cavity width (m)"),
    ("cavity.height", "cavity", "height", float, "cavity height (m)"),
    ("cavity.h", "cavity", "h", float, "grid spacing (m)"),
    ("cavity.roof_start", "cavity", "roof_start", float, "roof start as a fraction of the width"),
    ("cavity.roof_end", "cavity", "roof_end", float, "roof end as a fraction of the width"),
    ("cavity.wall_admittance", "cavity", "wall_admittance", _complex, "wall admittance (0 = rigid)"),
    ("cavity.c", "cavity", "c", float, "speed of sound (m/s)"),
    ("solver_opts.tol", "solver_opts", "tol", float, "relative residual target"),
    ("solver_opts.max_iter", "solver_opts", "max_iter", int, "iteration cap"),
    ("solver_opts.l", "solver_opts", "l", int, "degree of BiCGSTAB(l)"),
    ("solver_opts.record_history", "solver_opts", "record_history", _bool, "write history.csv"),
    ("solver_opts.parallel", "solver_opts", "parallel", _bool, "parallel kernels (--sequential overrides)"),
    ("ddm.n_sub", "ddm", "n_sub", int, "Schwarz strips for the run stage (0 = monodomain)"),
    ("ddm.s_left", "ddm", "s_left", _complex, "Robin coefficient left of each cut"),
    ("ddm.s_right", "ddm", "s_right", _complex, "Robin coefficient right of each cut"),
    ("ddm.tol", "ddm", "tol", float, "relative interface jump target"),
    ("ddm.max_outer", "ddm", "max_outer", int, "outer iteration cap"),
    ("bench.frequency", "bench", "frequency", float, "frequency of the benchmark system (Hz)"),
    ("bench.modulation", "bench", "modulation", float, "envelope exponent of the manufactured field"),
    ("bench.mode", "bench", "mode", _int_pair, "manufactured mode 'm,n'"),
    ("bench.repeats", "bench", "repeats", int, "timed repeats per cell (minimum kept)"),
    ("bench.max_iter", "bench", "max_iter", int, "iteration cap for the benchmark"),
    ("bench.ladder", "bench", "ladder", _floats, "grid spacings, strictly decreasing"),
    ("tune.n_sub", "tune", "n_sub", int, "strips for the tuning sweep"),
    ("tune.h", "tune", "h", float, "grid spacing of the tuning case"),
    ("tune.frequency", "tune", "frequency", float, "frequency of the tuning case (Hz)"),
    ("tune.budget", "tune", "budget", int, "outer iteration budget per candidate"),
    ("tune.tol", "tune", "tol", float, "interface jump target during the sweep"),
    ("tune.points", "tune", "points", int, "grid points per side"),
    ("tune.span", "tune", "span", float, "grid spans centre/span .. centre*span"),
    ("schemes.nx", "schemes", "nx", int, "cells of the pulse test"),
    ("schemes.ny", "schemes", "ny", int, "rows of the pulse test"),
    ("schemes.dx", "schemes", "dx", float, "cell width of the pulse test (m)"),
    ("schemes.u", "schemes", "u", float, "velocity of the pulse test (m/s)"),
    ("schemes.diffusivity", "schemes", "diffusivity", float, "diffusivity of the pulse test"),
    ("schemes.dt", "schemes", "dt", float, "time step of the pulse test (s)"),
    ("schemes.steps", "schemes", "steps", int, "steps of the pulse test"),
    ("schemes.center", "schemes", "center", float, "initial pulse centre (cells)"),
    ("schemes.width", "schemes", "width", float, "initial pulse width (cells)"),
]
CONFIG_KEYS = {k: (sec, name, conv, doc) for k, sec, name, conv, doc in _KEYS}


def _default_of(cfg: PipelineConfig, key: str):
    sec, name, _, _ = CONFIG_KEYS[key]
    obj = cfg if sec is None else getattr(cfg, sec)
    return getattr(obj, name)


def config_help() -> str:
    d = PipelineConfig()
    width = max(len(k) for k in CONFIG_KEYS)
    lines = ["configuration keys (section.key = value) and defaults:"]
    for key, (_, _, _, doc) in CONFIG_KEYS.items():
        if key == "lines":
            default = "auto"
        elif key == "transport.probes":
            default = "auto"
        else:
            default = _fmt(_default_of(d, key))
        lines.append(f"  {key:<{width}}  {default:<22} {doc}")
    return "\n".join(lines)


def _validate(cfg: PipelineConfig) -> None:
    def fail(path, msg):
        raise ConfigError(f"{path}: {msg}")

    try:
        cfg.transport.validate()
    except ValueError as exc:
        fail("transport", exc)
    if not spectra.is_power_of_two(cfg.fft_n):
        fail("fft_n", f"{cfg.fft_n} is not a power of two")
    if cfg.fft_n > cfg.transport.steps:
        fail("fft_n", f"{cfg.fft_n} exceeds transport.steps = {cfg.transport.steps}")
    try:
        grid = cfg.cavity.grid()
    except ValueError as exc:
        fail("cavity", exc)
    if cfg.cavity.c <= 0:
        fail("cavity.c", "must be positive")
    if cfg.ddm.n_sub < 0:
        fail("ddm.n_sub", "must be nonnegative")
    if cfg.ddm.n_sub:
        if 3 * cfg.ddm.n_sub > grid.nx:
            fail("ddm.n_sub", f"{cfg.ddm.n_sub} strips need {3 * cfg.ddm.n_sub} columns, grid has {grid.nx}")
        try:
            schwarz.TransmissionParams(cfg.ddm.s_left, cfg.ddm.s_right)
        except ValueError as exc:
            fail("ddm", exc)
    lad = cfg.bench.ladder
    if any(b >= a for a, b in zip(lad, lad[1:])):
        fail("bench.ladder", "spacings must be strictly decreasing")
    if cfg.bench.repeats < 1:
        fail("bench.repeats", "must be at least 1")
    if cfg.tune.points < 1 or cfg.tune.span < 1 or cfg.tune.budget < 1:
        fail("tune", "points and budget must be positive and span at least 1")
    try:
        sc = cfg.schemes
        TransportConfig(nx=sc.nx, ny=sc.ny, dx=sc.dx, dy=sc.dx, u=sc.u, diffusivity=sc.diffusivity,
                        dt=sc.dt, steps=sc.steps, roof_span=(0, sc.nx), probe_row=0).validate()
    except ValueError as exc:
        fail("schemes", exc)


def parse_config(text: str) -> PipelineConfig:
    """Parse the flat ``section.key = value`` format and validate the result."""
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        conv = CONFIG_KEYS[key][2]
        try:
            values[key] = conv(val.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    base = PipelineConfig()
    top, sections = {}, {}
    for key, v in values.items():
        sec, name, _, _ = CONFIG_KEYS[key]
        if sec is None:
            top[name] = v
        else:
            sections.setdefault(sec, {})[name] = v
    for sec, kw in sections.items():
        try:
            top[sec] = replace(getattr(base, sec), **kw)
        except ValueError as exc:
            raise ConfigError(f"{sec}: {exc}") from None
    cfg = replace(base, **top)
    _validate(cfg)
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


# ---------------------------------------------------------------- pipeline

@dataclass
class PipelineResult:
    output_dir: Path
    artifacts: list[Path] = field(default_factory=list)
    f_peak: float = math.nan
    peak_bin: int = -1
    report: Optional[SolveReport] = None
    ddm_report: Optional[schwarz.DdmReport] = None
    warnings: list[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        if self.ddm_report is not None:
            return self.ddm_report.converged
        return self.report is not None and self.report.converged


def _stage(name: str):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except StageError:
                raise
            except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
                raise StageError(name, str(exc)) from exc
        return inner
    return wrap


@_stage("transport")
def _transport(cfg: PipelineConfig, grid: helmholtz.CavityGrid, out: Path, res: PipelineResult):
    tcfg = cfg.transport
    if not tcfg.probe_positions:
        tcfg = replace(tcfg, probe_positions=tcfg.roof_probes(grid.roof_span[1] - grid.roof_span[0]))
    run = fvschemes.advect(tcfg, cfg.scheme)
    base = fvschemes.advect(replace(tcfg, w0=0.0), cfg.scheme)
    res.warnings += run.warnings
    for name, r in (("probes.csv", run), ("baseline.csv", base)):
        fvschemes.write_probes_csv(out / name, r.records)
        res.artifacts.append(out / name)
    return run.records, base.records


@_stage("spectra")
def _spectra(cfg: PipelineConfig, records, baseline, out: Path, res: PipelineResult):
    n = cfg.fft_n
    specs, rows, powers = [], [], []
    for rec, ref in zip(records, baseline):
        fl = spectra.extract_fluctuation(spectra.TimeSeries(rec.samples, rec.dt),
                                         spectra.TimeSeries(ref.samples, ref.dt)).tail(n)
        spec = spectra.fft(fl, n)
        power = spectra.psd(spec)
        path = out / f"psd_{rec.probe_id}.csv"
        spectra.write_psd_csv(path, power, spec.sample_rate)
        res.artifacts.append(path)
        specs.append(spec)
        powers.append(power)
        try:
            f, pw = spectra.dominant_frequency(power, spec.sample_rate)
        except spectra.NoDominantComponent as exc:
            raise StageError("spectra", f"probe {rec.probe_id}: {exc}") from None
        rows.append((rec.probe_id, f, pw))
    spectra.write_dominant_csv(out / "dominant.csv", rows)
    res.artifacts.append(out / "dominant.csv")
    mean = np.mean(powers, axis=0)
    k = spectra.dominant_bin(mean)
    res.peak_bin = k
    res.f_peak = k * specs[0].sample_rate / n
    return specs


@_stage("helmholtz")
def _helmholtz(cfg: PipelineConfig, grid, specs, out: Path, res: PipelineResult):
    g = helmholtz.dirichlet_from_spectrum(specs, res.peak_bin, grid)
    prob = helmholtz.assemble(grid, 2.0 * math.pi * res.f_peak, cfg.cavity.c, g)
    write_matrix_market(out / "system.mtx", prob.A)
    helmholtz.write_vector_csv(out / "rhs.csv", prob.b)
    res.artifacts += [out / "system.mtx", out / "rhs.csv"]
    return prob


@_stage("solve")
def _solve(cfg: PipelineConfig, prob, out: Path, res: PipelineResult):
    opts = cfg.solver_opts
    if cfg.ddm.n_sub:
        part = schwarz.partition(prob.grid, cfg.ddm.n_sub)
        tp = schwarz.TransmissionParams(cfg.ddm.s_left, cfg.ddm.s_right)
        inner = replace(opts, tol=min(opts.tol, 0.1 * cfg.ddm.tol), record_history=False)
        x, drep = schwarz.schwarz_solve(prob, part, tp, inner, cfg.ddm.tol, cfg.ddm.max_outer, cfg.solver)
        res.ddm_report = drep
        schwarz.write_ddm_csv(out / "ddm.csv", [drep])
        res.artifacts.append(out / "ddm.csv")
        # a monodomain-style report of the assembled iterate
        rep = SolveReport(f"schwarz_{cfg.solver}", prob.grid.n, drep.converged, drep.outer_iterations)
        r = prob.b - spmv(prob.A, x)
        bn = np.linalg.norm(prob.b)
        rep.true_relres = float(np.linalg.norm(r) / bn) if bn > 0 else 0.0
        rep.final_relres = drep.interface_residual_history[-1] if drep.interface_residual_history else math.nan
        rep.wall_time = sum(s.wall_time for s in drep.per_subdomain_solves)
    else:
        x, rep = krylov.solve(cfg.solver, prob.A, prob.b, krylov.jacobi(prob.A), opts)
        if opts.record_history:
            krylov.write_history_csv(out / "history.csv", rep)
            res.artifacts.append(out / "history.csv")
    res.report = rep
    helmholtz.write_vector_csv(out / "solution.csv", x)
    krylov.write_report_csv(out / "report.csv", [(rep, prob.grid.h)])
    res.artifacts += [out / "solution.csv", out / "report.csv"]
    return x


@_stage("profiles")
def _profiles(cfg: PipelineConfig, prob, x, out: Path, res: PipelineResult):
    profiles = helmholtz.sample_lines(prob, x, cfg.sampling_lines())
    helmholtz.write_profiles_csv(out / "profiles.csv", profiles)
    res.artifacts.append(out / "profiles.csv")
    return profiles


def run_pipeline(cfg: PipelineConfig, output_dir=None) -> PipelineResult:
    """Run all stages, writing artifacts as they are produced.

    Raises :class:`StageError` naming the failing stage; files written by
    earlier stages are left in place. Solver non-convergence is not an
    exception; check ``result.converged``.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StageError("setup", str(exc)) from exc
    res = PipelineResult(out)
    try:
        grid = cfg.cavity.grid()
    except ValueError as exc:
        raise StageError("helmholtz", str(exc)) from exc
    records, baseline = _transport(cfg, grid, out, res)
    specs = _spectra(cfg, records, baseline, out, res)
    prob = _helmholtz(cfg, grid, specs, out, res)
    x = _solve(cfg, prob, out, res)
    _profiles(cfg, prob, x, out, res)
    return res


def file_digests(paths: Sequence[Path], mask_timing: bool = True) -> dict[str, str]:
    """SHA-256 of each artifact; ``report.csv`` timing columns are blanked first."""
    out = {}
    for p in paths:
        p = Path(p)
        data = p.read_bytes()
        if mask_timing and p.name == "report.csv":
            lines = data.decode("ascii").splitlines()
            head = lines[0].split(",")
            col = head.index("wall_time_s")
            masked = [lines[0]] + [",".join("" if i == col else v for i, v in enumerate(l.split(",")))
                                   for l in lines[1:]]
            data = ("\n".join(masked) + "\n").encode("ascii")
        out[p.name] = hashlib.sha256(data).hexdigest()
    return out


# ---------------------------------------------------------------- bench

@dataclass(frozen=True)
class BenchRow:
    solver: str
    h: float
    n: int
    iterations: int
    converged: bool
    sequential_time_s: float
    parallel_time_s: float
    true_relres: float

    @property
    def speedup(self) -> float:
        return self.sequential_time_s / self.parallel_time_s if self.parallel_time_s > 0 else math.inf


@dataclass
class BenchTable:
    rows: list[BenchRow] = field(default_factory=list)
    mismatches: list[str] = field(default_factory=list)  # sequential vs parallel iteration disagreements

    def for_solver(self, solver: str) -> list[BenchRow]:
        return [r for r in self.rows if r.solver == solver]


def _timed(name, prob, M, opts, repeats):
    best, rep = math.inf, None
    for _ in range(repeats):
        _, rep = krylov.solve(name, prob.A, prob.b, M, opts)
        best = min(best, rep.wall_time)
    return rep, best


def bench_solvers(cfg: PipelineConfig, h_ladder: Sequence[float] | None = None,
                  solvers: Sequence[str] = SOLVER_NAMES, progress=None) -> BenchTable:
    """Solve the manufactured cavity system on each grid of the ladder.

    Each (solver, h) cell is solved with sequential kernels and with parallel
    kernels; the best of ``bench.repeats`` wall times is kept for each mode.
    """
    ladder = tuple(cfg.bench.ladder if h_ladder is None else h_ladder)
    if not ladder or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("h ladder must be nonempty and strictly decreasing")
    b = cfg.bench
    omega = 2.0 * math.pi * b.frequency
    base = replace(cfg.solver_opts, max_iter=b.max_iter, record_history=False)
    table = BenchTable()
    for h in ladder:
        grid = cfg.cavity.grid(h)
        prob, _ = helmholtz.manufactured_problem(grid, b.mode, omega, cfg.cavity.c, b.modulation)
        M = krylov.jacobi(prob.A)
        for name in solvers:
            seq, t_seq = _timed(name, prob, M, replace(base, parallel=False), b.repeats)
            par, t_par = _timed(name, prob, M, replace(base, parallel=True), b.repeats)
            if seq.iterations != par.iterations:
                table.mismatches.append(f"{name} h={h}: {seq.iterations} vs {par.iterations}")
            row = BenchRow(name, h, grid.n, seq.iterations, seq.converged, t_seq, t_par, seq.true_relres)
            table.rows.append(row)
            if progress is not None:
                progress(row)
    return table


BENCH_HEADER = "solver,h,n,iterations,converged,sequential_time_s,parallel_time_s,speedup"


def write_bench_csv(path, table: BenchTable) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(BENCH_HEADER + "\n")
        for r in table.rows:
            fh.write(f"{r.solver},{float(r.h)!r},{r.n},{r.iterations},{int(r.converged)},"
                     f"{r.sequential_time_s:.6g},{r.parallel_time_s:.6g},{r.speedup:.4g}\n")


# ---------------------------------------------------------------- tune / schemes

def ddm_benchmark_problem(cfg: PipelineConfig = PipelineConfig(), h: float | None = None,
                          frequency: float | None = None) -> helmholtz.HelmholtzProblem:
    """Cavity driven by unit roof data, used to compare transmission conditions."""
    grid = cfg.cavity.grid(cfg.tune.h if h is None else h)
    f = cfg.tune.frequency if frequency is None else frequency
    nroof = grid.roof_span[1] - grid.roof_span[0]
    return helmholtz.assemble(grid, 2.0 * math.pi * f, cfg.cavity.c, np.ones(nroof))


def run_tune(cfg: PipelineConfig, output_dir=None):
    """Sweep Robin pairs on the tuning case; writes tuning.csv and ddm.csv."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = cfg.tune
    prob = ddm_benchmark_problem(cfg)
    part = schwarz.partition(prob.grid, t.n_sub)
    inner = replace(cfg.solver_opts, tol=min(cfg.solver_opts.tol, 0.1 * t.tol), record_history=False)
    cands = schwarz.default_candidates(prob, t.points, t.span)
    try:
        best, table = schwarz.tune_parameters(prob, part, cands, inner, t.budget, t.tol, cfg.solver)
    except schwarz.TuningError as exc:
        schwarz.write_tuning_csv(out / "tuning.csv", exc.table)
        raise
    schwarz.write_tuning_csv(out / "tuning.csv", table)
    reports = []
    for tp in (best, schwarz.symmetric_baseline(prob)):
        _, rep = schwarz.schwarz_solve(prob, part, tp, inner, t.tol, t.budget, cfg.solver)
        reports.append(rep)
    schwarz.write_ddm_csv(out / "ddm.csv", reports)
    return best, table, reports


def run_schemes(cfg: PipelineConfig, output_dir=None) -> list[fvschemes.PulseRow]:
    """Gaussian-pulse comparison of all five schemes; writes retention.csv."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = cfg.schemes
    tcfg = TransportConfig(nx=s.nx, ny=s.ny, dx=s.dx, dy=s.dx, u=s.u, diffusivity=s.diffusivity,
                           dt=s.dt, steps=s.steps, w0=0.0, roof_span=(0, s.nx), probe_row=0)
    rows = fvschemes.pulse_comparison(tcfg, list(Scheme), s.center, s.width)
    fvschemes.write_retention_csv(out / "retention.csv", rows)
    return rows
