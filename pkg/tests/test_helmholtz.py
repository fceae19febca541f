import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from cabinacoustics.helmholtz import (
    assemble,
    build_grid,
    dirichlet_from_spectrum,
    manufactured_problem,
    read_vector_csv,
    relative_l2,
    sample_lines,
    write_profiles_csv,
    write_vector_csv,
)
from cabinacoustics.spectra import fft

C = 340.0


def to_scipy(A):
    return sp.csr_matrix((A.values, A.col_indices, A.row_offsets), shape=A.shape)


def direct(problem):
    return spla.spsolve(to_scipy(problem.A).tocsc(), problem.b)


def roof_count(grid):
    return grid.roof_span[1] - grid.roof_span[0]


# grid

def test_smallest_grid():
    g = build_grid(1.0, 1.0, 0.25)
    assert (g.nx, g.ny) == (3, 3)


def test_too_coarse_rejected():
    with pytest.raises(ValueError, match="too coarse"):
        build_grid(1.0, 1.0, 0.5)


def test_coarsest_ladder_grid():
    g = build_grid(2.4, 1.2, 0.133425)
    assert (g.nx, g.ny) == (round(2.4 / 0.133425) - 1, round(1.2 / 0.133425) - 1) == (17, 8)


def test_roof_span_length():
    g = build_grid(2.4, 1.2, 0.05)
    assert abs(g.roof_length - 0.6) <= 1e-12
    x = g.x()[g.roof_columns]
    assert x[0] >= 0.96 - 1e-9 and x[-1] <= 1.56 + 1e-9
    assert x[0] - g.hx < 0.96 and x[-1] + g.hx > 1.56


def test_bad_roof_fraction():
    with pytest.raises(ValueError):
        build_grid(2.4, 1.2, 0.1, 0.7, 0.5)


# assembly

def test_interior_row_stencil():
    g = build_grid(2.4, 1.2, 0.1)
    omega = 2 * math.pi * 20
    p = assemble(g, omega, C, np.zeros(roof_count(g)))
    A = to_scipy(p.A)
    k = g.index(5, 5)
    row = A.getrow(k)
    assert row.nnz == 5
    a = C**2 / g.hx**2
    assert row[0, k] == pytest.approx(4 * a - omega**2, rel=1e-14)
    for nb in (k - 1, k + 1, k - g.nx, k + g.nx):
        assert row[0, nb] == pytest.approx(-a, rel=1e-14)


def test_every_interior_row_has_five_entries():
    g = build_grid(2.4, 1.2, 0.1)
    p = assemble(g, 10.0, C, np.zeros(roof_count(g)))
    counts = np.diff(p.A.row_offsets).reshape(g.ny, g.nx)
    assert np.all(counts[1:-1, 1:-1] == 5)


def test_one_dimensional_stencil_by_hand():
    # a 3x3 grid with unit spacing: the centre row is the textbook stencil
    g = build_grid(4.0, 4.0, 1.0)
    p = assemble(g, 0.5, 1.0, np.zeros(roof_count(g)))
    D = p.A.to_dense()
    k = g.index(1, 1)
    assert D[k, k] == 2 * 1.0 * 2 - 0.25
    assert D[k, k - 1] == D[k, k + 1] == -1.0


def test_neumann_wall_row():
    g = build_grid(2.4, 1.2, 0.1)
    p = assemble(g, 0.0, 1.0, np.zeros(roof_count(g)))
    D = to_scipy(p.A)
    k = g.index(0, 5)  # left wall, mirror ghost folds into the diagonal
    a = 1.0 / g.hx**2
    assert D[k, k] == pytest.approx(4 * a - a)


def test_dirichlet_count_checked():
    g = build_grid(2.4, 1.2, 0.1)
    with pytest.raises(ValueError, match="Dirichlet"):
        assemble(g, 1.0, C, np.zeros(roof_count(g) + 1))


def test_homogeneous_data_gives_zero_solution():
    g = build_grid(2.4, 1.2, 0.1)
    p = assemble(g, 2 * math.pi * 13, C, np.zeros(roof_count(g)))
    assert np.all(p.b == 0)
    assert np.linalg.norm(direct(p)) <= 1e-12


def test_linearity_in_dirichlet_data():
    g = build_grid(2.4, 1.2, 0.1)
    rng = np.random.default_rng(0)
    d = rng.standard_normal(roof_count(g)) + 1j * rng.standard_normal(roof_count(g))
    alpha = 2.5 - 1.5j
    x1 = direct(assemble(g, 2 * math.pi * 13, C, d))
    x2 = direct(assemble(g, 2 * math.pi * 13, C, alpha * d))
    assert relative_l2(x2, alpha * x1) <= 1e-10


def test_real_data_real_solution():
    g = build_grid(2.4, 1.2, 0.1)
    x = direct(assemble(g, 2 * math.pi * 30, C, np.linspace(1, 2, roof_count(g))))
    assert np.linalg.norm(x.imag) <= 1e-10 * np.linalg.norm(x)


def test_wall_admittance_makes_operator_complex():
    g = build_grid(2.4, 1.2, 0.1, wall_admittance=0.3)
    p = assemble(g, 2 * math.pi * 30, C, np.ones(roof_count(g)))
    assert np.max(np.abs(p.A.values.imag)) > 0
    x = direct(p)
    assert np.linalg.norm(x.imag) > 1e-6 * np.linalg.norm(x)


# manufactured solutions

def dirichlet_eigenvalues(W, H, c, count=6):
    vals = sorted((c**2 * math.pi**2 * (m * m / W**2 + n * n / H**2), (m, n))
                  for m in range(1, count) for n in range(1, count))
    return vals


def refinement_errors(mode, omega, hs=(0.1, 0.05, 0.025)):
    errs = []
    for h in hs:
        g = build_grid(2.4, 1.2, h)
        p, exact = manufactured_problem(g, mode, omega, C)
        errs.append(relative_l2(direct(p), exact))
    return np.array(errs)


def test_exact_vanishes_on_walls():
    g = build_grid(2.4, 1.2, 0.1)
    _, exact = manufactured_problem(g, (1, 1), 0.0, C)
    E = exact.reshape(g.ny, g.nx)
    # the interior node next to each wall is O(h) while the centre is O(1)
    assert np.max(np.abs(E[:, 0])) < 0.2 and np.max(np.abs(E)) > 0.99


def test_resonant_omega_rejected():
    g = build_grid(2.4, 1.2, 0.1)
    lam = C**2 * math.pi**2 * (1 / 2.4**2 + 1 / 1.2**2)
    with pytest.raises(ValueError, match="resonant"):
        manufactured_problem(g, (1, 1), math.sqrt(lam), C)


def test_poisson_mode_order_two():
    e = refinement_errors((1, 1), 0.0)
    ratios = e[:-1] / e[1:]
    assert np.all((ratios >= 3.6) & (ratios <= 4.4))
    order = np.log2(ratios)
    assert np.all((order >= 1.8) & (order <= 2.2))


def test_helmholtz_mode_between_eigenvalues_order_two():
    eig = dirichlet_eigenvalues(2.4, 1.2, C)
    idx = [m for _, m in eig].index((2, 1))
    omega = math.sqrt(0.5 * (eig[idx][0] + eig[idx + 1][0]))
    e = refinement_errors((2, 1), omega)
    order = np.log2(e[:-1] / e[1:])
    assert np.all((order >= 1.8) & (order <= 2.2))


def test_modulated_field_order_two():
    errs = []
    for h in (0.1, 0.05, 0.025):
        g = build_grid(2.4, 1.2, h)
        p, exact = manufactured_problem(g, (1, 1), 2 * math.pi * 13, C, modulation=1.0)
        errs.append(relative_l2(direct(p), exact))
    order = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((order >= 1.8) & (order <= 2.2))


# Dirichlet data from spectra

def test_zero_spectra_zero_field():
    g = build_grid(2.4, 1.2, 0.1)
    specs = [fft(np.zeros(64), 64) for _ in range(roof_count(g))]
    d = dirichlet_from_spectrum(specs, 3, g)
    assert np.all(d == 0)
    assert np.all(direct(assemble(g, 50.0, C, d)) == 0)


def test_identical_cosines_constant_data():
    x = np.cos(2 * np.pi * 5 * np.arange(64) / 64)
    d = dirichlet_from_spectrum([fft(x, 64) for _ in range(4)], 5)
    assert np.allclose(d, d[0], rtol=0, atol=1e-12)
    assert abs(abs(d[0]) - 32) <= 1e-9


def test_phase_ramp_reproduced():
    n, k0 = 64, 4
    shifts = np.arange(5)
    specs = [fft(np.cos(2 * np.pi * k0 * (np.arange(n) - s) / n), n) for s in shifts]
    d = dirichlet_from_spectrum(specs, k0)
    phase = np.angle(d)
    expected = -2 * np.pi * k0 * shifts / n
    assert np.allclose(np.angle(np.exp(1j * (phase - expected))), 0, atol=1e-12)


def test_spectrum_count_checked():
    g = build_grid(2.4, 1.2, 0.1)
    with pytest.raises(ValueError, match="roof nodes"):
        dirichlet_from_spectrum([fft(np.zeros(8), 8)], 1, g)
    with pytest.raises(ValueError, match="bin"):
        dirichlet_from_spectrum([fft(np.zeros(8), 8)], 8)


# line sampling

def test_zero_field_profiles():
    g = build_grid(2.4, 1.2, 0.1)
    p = assemble(g, 1.0, C, np.zeros(roof_count(g)))
    for prof in sample_lines(p, np.zeros(g.n), [("h", 0.6), ("v", 1.2)]):
        assert np.all(prof.abs_psi == 0)
        assert np.all(np.diff(prof.positions) > 0)


def test_mode_midline_profile():
    g = build_grid(2.4, 1.2, 0.05)
    p, exact = manufactured_problem(g, (1, 1), 0.0, C)
    prof = sample_lines(p, exact, [("horizontal", 0.6)])[0]
    assert np.max(np.abs(prof.abs_psi - np.abs(np.sin(np.pi * prof.positions / 2.4)))) <= 1e-12
    assert abs(prof.positions[np.argmax(prof.abs_psi)] - 1.2) <= g.hx


def test_out_of_domain_line():
    g = build_grid(2.4, 1.2, 0.1)
    p = assemble(g, 1.0, C, np.zeros(roof_count(g)))
    with pytest.raises(ValueError, match="outside"):
        sample_lines(p, np.zeros(g.n), [("h", 1.5)])
    with pytest.raises(ValueError, match="orientation"):
        sample_lines(p, np.zeros(g.n), [("diagonal", 0.5)])


def vertical_profiles(path):
    rows = {}
    for line in path.read_text().splitlines()[1:]:
        o, coord, pos, mag = line.split(",")
        if o == "vertical":
            rows.setdefault(float(coord), []).append((float(pos), float(mag)))
    return {c: sorted(v) for c, v in rows.items()}


def test_vertical_profile_decays_away_from_roof(tmp_path):
    # the default chain end to end, every vertical line it samples
    from cabinacoustics.pipeline import parse_config, run_pipeline

    res = run_pipeline(parse_config(""), tmp_path)
    assert res.converged
    lines = vertical_profiles(tmp_path / "profiles.csv")
    assert len(lines) == 3
    for coord, prof in lines.items():
        deepest, near_roof = prof[0][1], prof[-1][1]
        assert deepest <= near_roof, f"x={coord}: floor {deepest:.4g} > below roof {near_roof:.4g}"


@pytest.mark.parametrize("freq", [50.78125, 90.0])
def test_absorbing_walls_profile_decays_away_from_roof(freq):
    g = build_grid(2.4, 1.2, 0.05, wall_admittance=1.0)
    xr = g.x()[g.roof_columns]
    d = np.exp(-2j * np.pi * freq / 25.0 * xr)
    p = assemble(g, 2 * math.pi * freq, C, d)
    prof = sample_lines(p, direct(p), [("v", xr.mean())])[0]
    assert prof.abs_psi[0] <= prof.abs_psi[-1]


def test_vector_and_profile_csv(tmp_path):
    v = np.array([1 + 2j, -0.5, 3j])
    path = tmp_path / "v.csv"
    write_vector_csv(path, v)
    assert path.read_text().splitlines()[0] == "index,re,im"
    assert np.array_equal(read_vector_csv(path), v)
    again = tmp_path / "v2.csv"
    write_vector_csv(again, read_vector_csv(path))
    assert again.read_bytes() == path.read_bytes()

    g = build_grid(2.4, 1.2, 0.1)
    p, exact = manufactured_problem(g, (1, 1), 0.0, C)
    prof = sample_lines(p, exact, [("h", 0.6), ("v", 1.2)])
    pp = tmp_path / "profiles.csv"
    write_profiles_csv(pp, prof)
    lines = pp.read_text().splitlines()
    assert lines[0] == "orientation,coordinate,position,abs_psi"
    assert len(lines) == 1 + g.nx + g.ny
