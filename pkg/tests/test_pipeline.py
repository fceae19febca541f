import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from cabinacoustics import cli
from cabinacoustics.fvschemes import Scheme, read_probes_csv
from cabinacoustics.helmholtz import read_vector_csv
from cabinacoustics.krylov import read_report_csv
from cabinacoustics.numkit import read_matrix_market
from cabinacoustics.pipeline import (
    BENCH_HEADER,
    BENCH_LADDER,
    ConfigError,
    PipelineConfig,
    StageError,
    bench_solvers,
    config_help,
    file_digests,
    load_config,
    parse_config,
    run_pipeline,
    run_schemes,
    write_bench_csv,
)
from cabinacoustics.spectra import read_psd_csv

GOLDEN = json.loads((Path(__file__).parent / "fixtures" / "golden_default.json").read_text())
EXPECTED = {"probes.csv", "baseline.csv", "dominant.csv", "system.mtx", "rhs.csv",
            "solution.csv", "profiles.csv", "report.csv"}


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default")
    return run_pipeline(parse_config("").sequential(), out)


# config

def test_empty_text_is_all_defaults():
    assert parse_config("") == PipelineConfig()
    assert parse_config("# only a comment\n\n") == PipelineConfig()


def test_single_override():
    cfg = parse_config("solver_opts.tol = 1e-6")
    assert cfg.solver_opts.tol == 1e-6
    assert replace(cfg, solver_opts=PipelineConfig().solver_opts) == PipelineConfig()


def test_documented_defaults():
    d = PipelineConfig()
    assert d.transport.dt == 1e-3 and d.fft_n == 512
    assert d.solver_opts.tol == 1e-9 and d.solver_opts.l == 8
    assert d.scheme is Scheme.QUICK


def test_enum_rejection_lists_values():
    with pytest.raises(ConfigError, match=r"line 1: solver: .*gmres.*bicgstab, bicgstab_l, tfqmr"):
        parse_config("solver = gmres")


def test_unknown_key_has_line_number():
    with pytest.raises(ConfigError, match=r"line 3: unknown key 'cavity.depth'"):
        parse_config("fft_n = 256\n\ncavity.depth = 2\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="line 2: duplicate"):
        parse_config("fft_n = 256\nfft_n = 128")


def test_missing_equals():
    with pytest.raises(ConfigError, match="line 1: expected"):
        parse_config("fft_n 256")


def test_bad_value_names_key():
    with pytest.raises(ConfigError, match="line 1: fft_n"):
        parse_config("fft_n = many")


def test_validation_reports_key_path():
    with pytest.raises(ConfigError, match=r"^fft_n: 300 is not a power of two"):
        parse_config("fft_n = 300")
    with pytest.raises(ConfigError, match=r"^fft_n: 2048 exceeds transport.steps"):
        parse_config("fft_n = 2048")
    with pytest.raises(ConfigError, match=r"^bench.ladder"):
        parse_config("bench.ladder = 0.05, 0.1")
    with pytest.raises(ConfigError, match=r"^ddm.n_sub"):
        parse_config("ddm.n_sub = 40")


def test_overrides_of_every_kind():
    cfg = parse_config("""
        scheme = smart
        cavity.wall_admittance = 0.2-0.1j
        solver_opts.record_history = true
        bench.ladder = 0.1, 0.05
        transport.probes = 10,1; 20,2
        lines = h:0.6, v:1.2
        ddm.n_sub = 2
    """)
    assert cfg.scheme is Scheme.SMART
    assert cfg.cavity.wall_admittance == 0.2 - 0.1j
    assert cfg.solver_opts.record_history
    assert cfg.bench.ladder == (0.1, 0.05)
    assert cfg.transport.probe_positions == ((10, 1), (20, 2))
    assert cfg.sampling_lines() == (("horizontal", 0.6), ("vertical", 1.2))
    assert cfg.ddm.n_sub == 2


def test_help_lists_every_key_with_default():
    text = config_help()
    assert "solver_opts.tol" in text and "1e-09" in text
    assert "bench.ladder" in text and "0.133425" in text


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def test_sequential_forces_reference_kernels():
    assert PipelineConfig().solver_opts.parallel
    assert not PipelineConfig().sequential().solver_opts.parallel


# run

def test_default_artifacts_present(default_run):
    names = {p.name for p in default_run.artifacts}
    assert EXPECTED <= names
    assert any(n.startswith("psd_") for n in names)
    for p in default_run.artifacts:
        assert p.exists() and p.stat().st_size > 0
    assert default_run.converged


def test_default_dominant_frequency(default_run):
    assert default_run.f_peak == GOLDEN["f_peak_hz"]
    assert default_run.peak_bin == GOLDEN["peak_bin"]
    assert default_run.f_peak == default_run.peak_bin * 1000.0 / 512


def test_golden_fixture(default_run):
    assert default_run.report.iterations == GOLDEN["iterations"]
    assert file_digests(sorted(default_run.artifacts)) == GOLDEN["digests"]


def test_rerun_byte_identical(default_run, tmp_path):
    again = run_pipeline(parse_config("").sequential(), tmp_path)
    a = file_digests(sorted(default_run.artifacts))
    b = file_digests(sorted(again.artifacts))
    assert a == b
    # everything except the timing column of report.csv matches byte for byte
    for p in default_run.artifacts:
        if p.name != "report.csv":
            assert p.read_bytes() == (tmp_path / p.name).read_bytes()


def test_parallel_kernels_same_artifacts(default_run, tmp_path):
    par = run_pipeline(parse_config(""), tmp_path)
    assert file_digests(sorted(par.artifacts)) == GOLDEN["digests"]


def test_artifacts_round_trip(default_run, tmp_path):
    out = default_run.output_dir
    rep = read_report_csv(out / "report.csv")[0][0]
    assert rep.converged and rep.true_relres <= 1e-8
    A = read_matrix_market(out / "system.mtx")
    x = read_vector_csv(out / "solution.csv")
    b = read_vector_csv(out / "rhs.csv")
    assert A.nrows == x.size == b.size
    from cabinacoustics.numkit import spmv
    assert np.linalg.norm(spmv(A, x) - b) <= 1e-8 * np.linalg.norm(b)
    probes = read_probes_csv(out / "probes.csv")
    assert len(probes) == sum(1 for p in default_run.artifacts if p.name.startswith("psd_"))
    freqs, vals = read_psd_csv(out / "psd_0.csv")
    assert vals.size == 257 and freqs[26] == default_run.f_peak
    dom = (out / "dominant.csv").read_text().splitlines()
    assert dom[0] == "probe_id,f_peak_hz,power"


def test_history_written_when_requested(tmp_path):
    res = run_pipeline(parse_config("solver_opts.record_history = true").sequential(), tmp_path)
    lines = (tmp_path / "history.csv").read_text().splitlines()
    assert lines[0] == "iter,relres" and len(lines) == 1 + res.report.iterations


def test_ddm_run_matches_monodomain(tmp_path):
    walls = "cavity.wall_admittance = 1\n"
    mono = run_pipeline(parse_config(walls).sequential(), tmp_path / "mono")
    res = run_pipeline(parse_config(walls + "ddm.n_sub = 2\n").sequential(), tmp_path / "ddm")
    assert mono.converged and res.ddm_report is not None and res.converged
    assert (tmp_path / "ddm" / "ddm.csv").exists()
    x = read_vector_csv(tmp_path / "ddm" / "solution.csv")
    ref = read_vector_csv(tmp_path / "mono" / "solution.csv")
    assert np.linalg.norm(x - ref) <= 1e-6 * np.linalg.norm(ref)


def test_ddm_divergence_reported_not_hidden(tmp_path):
    # the rigid default cavity at its dominant frequency defeats the Schwarz iteration
    res = run_pipeline(parse_config("ddm.n_sub = 2").sequential(), tmp_path)
    assert res.ddm_report.diverged and not res.converged
    assert res.report.solver == "schwarz_bicgstab" and not res.report.converged


def test_zero_disturbance_fails_in_spectra(tmp_path):
    with pytest.raises(StageError, match="no dominant component") as exc:
        run_pipeline(parse_config("transport.w0 = 0"), tmp_path)
    assert exc.value.stage == "spectra"
    assert (tmp_path / "probes.csv").exists()


@pytest.mark.parametrize("solver", ["bicgstab_l", "tfqmr"])
def test_other_solvers_agree(default_run, tmp_path, solver):
    res = run_pipeline(parse_config(f"solver = {solver}").sequential(), tmp_path)
    assert res.converged
    x = read_vector_csv(tmp_path / "solution.csv")
    ref = read_vector_csv(default_run.output_dir / "solution.csv")
    assert np.linalg.norm(x - ref) <= 1e-7 * np.linalg.norm(ref)


# bench

def test_bench_rows_and_trend():
    cfg = replace(PipelineConfig(), bench=replace(PipelineConfig().bench, repeats=1))
    table = bench_solvers(cfg, BENCH_LADDER[:3])
    assert not table.mismatches
    for name in ("bicgstab", "bicgstab_l", "tfqmr"):
        rows = table.for_solver(name)
        assert [r.h for r in rows] == list(BENCH_LADDER[:3])
        assert all(r.converged for r in rows)
        its = [r.iterations for r in rows]
        assert its == sorted(its)
    for r in table.rows:
        assert r.speedup == r.sequential_time_s / r.parallel_time_s


def test_bench_rejects_unsorted_ladder():
    with pytest.raises(ValueError, match="decreasing"):
        bench_solvers(PipelineConfig(), [0.05, 0.1])


def test_bench_csv(tmp_path):
    cfg = replace(PipelineConfig(), bench=replace(PipelineConfig().bench, repeats=1))
    table = bench_solvers(cfg, [0.133425], ["bicgstab"])
    path = tmp_path / "bench.csv"
    write_bench_csv(path, table)
    lines = path.read_text().splitlines()
    assert lines[0] == BENCH_HEADER
    f = lines[1].split(",")
    assert f[0] == "bicgstab" and float(f[1]) == 0.133425 and int(f[2]) == table.rows[0].n
    assert int(f[3]) == table.rows[0].iterations and f[4] == "1"
    assert math.isclose(float(f[7]), float(f[5]) / float(f[6]), rel_tol=1e-3)


# schemes

def test_schemes_table(tmp_path):
    rows = run_schemes(PipelineConfig(), tmp_path)
    lines = (tmp_path / "retention.csv").read_text().splitlines()
    assert lines[0] == "scheme,retention,field_min,field_max,bounded,peclet,warning"
    assert len(lines) == 6 and [r.scheme for r in rows] == list(Scheme)


# cli

def write(tmp_path, text):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    return str(p)


def test_cli_run_ok(tmp_path, capsys):
    assert cli.main(["run", "-o", str(tmp_path), "--sequential"]) == 0
    assert "f_peak_hz=50.7812" in capsys.readouterr().out
    assert (tmp_path / "profiles.csv").exists()


def test_cli_config_error(tmp_path, capsys):
    assert cli.main(["run", write(tmp_path, "solver = gmres\n"), "-o", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("config error: line 1: solver:") and "bicgstab_l" in err


def test_cli_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1


def test_cli_stage_failure(tmp_path, capsys):
    assert cli.main(["run", write(tmp_path, "transport.w0 = 0\n"), "-o", str(tmp_path / "o")]) == 2
    assert "spectra" in capsys.readouterr().err


def test_cli_nonconvergence(tmp_path):
    assert cli.main(["run", write(tmp_path, "solver_opts.max_iter = 3\n"), "-o", str(tmp_path / "o")]) == 3


def test_cli_ddm_divergence_exit_code(tmp_path):
    assert cli.main(["run", write(tmp_path, "ddm.n_sub = 2\n"), "-o", str(tmp_path / "o")]) == 3


def test_cli_bench_bad_ladder(tmp_path):
    assert cli.main(["bench", "-o", str(tmp_path), "--ladder", "0.05,0.1"]) == 1
    assert cli.main(["bench", "-o", str(tmp_path), "--solvers", "gmres"]) == 1


def test_cli_bench_small(tmp_path):
    cfg = write(tmp_path, "bench.repeats = 1\n")
    assert cli.main(["bench", cfg, "-o", str(tmp_path), "--ladder", "0.133425,0.066604"]) == 0
    assert len((tmp_path / "bench.csv").read_text().splitlines()) == 1 + 2 * 3


def test_cli_schemes(tmp_path, capsys):
    assert cli.main(["schemes", "-o", str(tmp_path)]) == 0
    captured = capsys.readouterr()
    assert "quick" in captured.out.lower() and "warning" in captured.err
