"""Finite-difference Helmholtz problem for the passenger cavity.

The cavity is a ``width x height`` rectangle discretised with nodes at
``(i * hx, j * hy)``. Unknowns live on interior nodes only and are numbered
row-major, ``k = j * nx + i`` with ``j = 0`` at the floor. The operator is

    -omega^2 psi - c^2 laplacian(psi)

with the standard 5-point Laplacian. The part of the top edge under the
sun-roof carries Dirichlet data; the other walls are rigid (mirror ghost
node) or, with a nonzero admittance ``beta``, impedance walls obeying
``d psi / dn = i k beta psi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .numkit import CsrMatrix, as_cvector, csr_from_arrays
from .spectra import Spectrum

__all__ = [
    "CavityGrid",
    "HelmholtzProblem",
    "LineProfile",
    "build_grid",
    "assemble",
    "manufactured_problem",
    "dirichlet_from_spectrum",
    "sample_lines",
    "relative_l2",
    "write_vector_csv",
    "read_vector_csv",
    "write_profiles_csv",
]

Walls = Literal["cavity", "dirichlet"]


@dataclass(frozen=True)
class CavityGrid:
    width: float
    height: float
    h: float
    nx: int
    ny: int
    roof_span: tuple[int, int]
    wall_admittance: complex = 0j
    roof_fraction: tuple[float, float] = (0.0, 1.0)

    @property
    def hx(self) -> float:
        return self.width / (self.nx + 1)

    @property
    def hy(self) -> float:
        return self.height / (self.ny + 1)

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @property
    def roof_columns(self) -> np.ndarray:
        return np.arange(*self.roof_span)

    @property
    def roof_length(self) -> float:
        a, b = self.roof_fraction
        return (b - a) * self.width

    def x(self) -> np.ndarray:
        """x coordinates of the interior columns."""
        return self.hx * np.arange(1, self.nx + 1)

    def y(self) -> np.ndarray:
        return self.hy * np.arange(1, self.ny + 1)

    def index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)


def build_grid(width: float, height: float, h: float, roof_start: float = 0.4,
               roof_end: float = 0.65, wall_admittance: complex = 0j) -> CavityGrid:
    """Uniform grid with ``round(extent / h)`` cells in each direction.

    When ``h`` does not divide an extent exactly the spacing along that axis
    is adjusted to ``extent / cells``.
    """
    if width <= 0 or height <= 0 or h <= 0:
        raise ValueError("width, height and h must be positive")
    if not 0.0 <= roof_start < roof_end <= 1.0:
        raise ValueError("roof fractions must satisfy 0 <= start < end <= 1")
    nx = int(round(width / h)) - 1
    ny = int(round(height / h)) - 1
    if nx < 3 or ny < 3:
        raise ValueError(f"grid too coarse: {nx} x {ny} interior nodes (need at least 3 x 3)")
    hx = width / (nx + 1)
    x = hx * np.arange(1, nx + 1)
    tol = 1e-9 * width
    cols = np.flatnonzero((x >= roof_start * width - tol) & (x <= roof_end * width + tol))
    if cols.size == 0:
        raise ValueError("sun-roof span contains no grid column")
    return CavityGrid(width, height, h, nx, ny, (int(cols[0]), int(cols[-1]) + 1),
                      complex(wall_admittance), (roof_start, roof_end))


@dataclass(frozen=True, eq=False)
class HelmholtzProblem:
    grid: CavityGrid
    omega: float
    c: float
    dirichlet: np.ndarray
    A: CsrMatrix
    b: np.ndarray
    walls: Walls = "cavity"

    @property
    def k(self) -> float:
        return self.omega / self.c


def _robin_factor(grid: CavityGrid, omega: float, c: float, spacing: float) -> complex:
    # ghost value = factor * adjacent interior value
    beta = grid.wall_admittance
    if beta == 0:
        return 1.0
    return 1.0 / (1.0 - 1j * (omega / c) * beta * spacing)


def _assemble(grid: CavityGrid, omega: float, c: float, top_values: np.ndarray, walls: Walls):
    nx, ny = grid.nx, grid.ny
    ax = c * c / grid.hx**2
    ay = c * c / grid.hy**2
    jj, ii = np.divmod(np.arange(nx * ny), nx)
    k = np.arange(nx * ny)
    diag = np.full(nx * ny, 2.0 * ax + 2.0 * ay - omega * omega, dtype=np.complex128)
    b = np.zeros(nx * ny, dtype=np.complex128)
    rows, cols, vals = [k], [k], [None]

    fx = _robin_factor(grid, omega, c, grid.hx)
    fy = _robin_factor(grid, omega, c, grid.hy)
    for di, dj, a, f in ((-1, 0, ax, fx), (1, 0, ax, fx), (0, -1, ay, fy), (0, 1, ay, fy)):
        ni, nj = ii + di, jj + dj
        inside = (ni >= 0) & (ni < nx) & (nj >= 0) & (nj < ny)
        rows.append(k[inside])
        cols.append(nj[inside] * nx + ni[inside])
        vals.append(np.full(int(inside.sum()), -a, dtype=np.complex128))
        edge = ~inside
        if walls == "dirichlet":
            continue  # homogeneous Dirichlet: nothing to add
        if dj == 1:
            roof = edge & (ii >= grid.roof_span[0]) & (ii < grid.roof_span[1])
            b[roof] += a * top_values[ii[roof] - grid.roof_span[0]]
            edge = edge & ~roof
        diag[edge] -= a * f
    vals[0] = diag
    A = csr_from_arrays(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), nx * ny, nx * ny)
    return A, b


def assemble(grid: CavityGrid, omega: float, c: float, dirichlet) -> HelmholtzProblem:
    """Assemble the cavity system with Dirichlet data on the sun-roof columns.

    Resonant frequencies are not screened here; a singular system shows up as
    solver stagnation.
    """
    g = as_cvector(dirichlet)
    nroof = grid.roof_span[1] - grid.roof_span[0]
    if g.size != nroof:
        raise ValueError(f"expected {nroof} Dirichlet values, got {g.size}")
    if c <= 0:
        raise ValueError("sound speed must be positive")
    A, b = _assemble(grid, float(omega), float(c), g, "cavity")
    return HelmholtzProblem(grid, float(omega), float(c), g, A, b, "cavity")


def manufactured_problem(grid: CavityGrid, mode: tuple[int, int], omega: float, c: float,
                         modulation: float = 0.0):
    """Problem with a known smooth solution and homogeneous Dirichlet walls.

    The exact field is ``sin(m pi x / W) sin(n pi y / H) * exp(a (x / W + y / H))``
    with ``a = modulation``; the forcing is the continuous operator applied to
    it. With ``a = 0`` the field is a pure sine mode, which is also an
    eigenvector of the discrete operator, so Krylov methods converge in a
    single step; a nonzero ``a`` spreads the forcing over the whole spectrum.

    Returns ``(problem, exact)`` where ``exact`` holds the nodal values.
    """
    m, n = mode
    W, H = grid.width, grid.height
    lam = c**2 * math.pi**2 * (m**2 / W**2 + n**2 / H**2)
    shift = lam - omega**2
    if modulation == 0.0 and abs(shift) <= 1e-12 * (omega**2 + lam):
        raise ValueError(f"omega={omega} is resonant with mode {mode}")
    X, Y = np.meshgrid(grid.x(), grid.y())
    kx, ky = m * math.pi / W, n * math.pi / H
    s = np.sin(kx * X) * np.sin(ky * Y)
    q = np.exp(modulation * (X / W + Y / H))
    exact = s * q
    if modulation == 0.0:
        forcing = shift * exact
    else:
        ax, ay = modulation / W, modulation / H
        grad = ax * kx * np.cos(kx * X) * np.sin(ky * Y) + ay * ky * np.sin(kx * X) * np.cos(ky * Y)
        lap = q * (-(kx**2 + ky**2) * s + 2.0 * grad + (ax**2 + ay**2) * s)
        forcing = -omega**2 * exact - c**2 * lap
    A, _ = _assemble(grid, float(omega), float(c), np.zeros(0), "dirichlet")
    zero = np.zeros(grid.roof_span[1] - grid.roof_span[0], dtype=np.complex128)
    prob = HelmholtzProblem(grid, float(omega), float(c), zero, A,
                            forcing.ravel().astype(np.complex128), "dirichlet")
    return prob, exact.ravel().astype(np.complex128)


def dirichlet_from_spectrum(roof_spectra: Sequence[Spectrum], bin: int, grid: CavityGrid | None = None) -> np.ndarray:
    """Complex Fourier coefficient ``X_bin`` of each roof node's spectrum."""
    if grid is not None:
        nroof = grid.roof_span[1] - grid.roof_span[0]
        if len(roof_spectra) != nroof:
            raise ValueError(f"{len(roof_spectra)} spectra for {nroof} roof nodes")
    out = np.empty(len(roof_spectra), dtype=np.complex128)
    for k, s in enumerate(roof_spectra):
        if not 0 <= bin < s.n:
            raise ValueError(f"bin {bin} outside spectrum of length {s.n}")
        out[k] = s.bins[bin]
    return out


@dataclass(frozen=True)
class LineProfile:
    orientation: str
    coordinate: float
    positions: np.ndarray
    abs_psi: np.ndarray


def _full_field(problem: HelmholtzProblem, psi: np.ndarray) -> np.ndarray:
    g = problem.grid
    F = np.zeros((g.ny + 2, g.nx + 2), dtype=np.complex128)
    F[1:-1, 1:-1] = psi.reshape(g.ny, g.nx)
    if problem.walls == "cavity":
        fx = _robin_factor(g, problem.omega, problem.c, g.hx)
        fy = _robin_factor(g, problem.omega, problem.c, g.hy)
        F[1:-1, 0] = fx * F[1:-1, 1]
        F[1:-1, -1] = fx * F[1:-1, -2]
        F[0, 1:-1] = fy * F[1, 1:-1]
        F[-1, 1:-1] = fy * F[-2, 1:-1]
        a, b = g.roof_span
        F[-1, 1 + a:1 + b] = problem.dirichlet
        for r, rn in ((0, 1), (-1, -2)):
            F[r, 0] = 0.5 * (F[r, 1] + F[rn, 0])
            F[r, -1] = 0.5 * (F[r, -2] + F[rn, -1])
    return F


def _interp(F: np.ndarray, hx: float, hy: float, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    fx = xs / hx
    fy = ys / hy
    i0 = np.clip(np.floor(fx).astype(int), 0, F.shape[1] - 2)
    j0 = np.clip(np.floor(fy).astype(int), 0, F.shape[0] - 2)
    tx = fx - i0
    ty = fy - j0
    return ((1 - tx) * (1 - ty) * F[j0, i0] + tx * (1 - ty) * F[j0, i0 + 1]
            + (1 - tx) * ty * F[j0 + 1, i0] + tx * ty * F[j0 + 1, i0 + 1])


def sample_lines(problem: HelmholtzProblem, solution, lines: Iterable[tuple[str, float]]) -> list[LineProfile]:
    """|psi| along horizontal (``y = coordinate``) or vertical (``x = coordinate``) lines.

    Stations are the interior grid columns (horizontal lines) or rows
    (vertical lines); values come from bilinear interpolation of the nodal
    field including boundary nodes.
    """
    g = problem.grid
    psi = as_cvector(solution)
    if psi.size != g.n:
        raise ValueError(f"solution has {psi.size} entries, grid has {g.n}")
    F = _full_field(problem, psi)
    out = []
    for orientation, coord in lines:
        orientation = orientation.lower()
        if orientation in ("h", "horizontal"):
            if not 0.0 < coord < g.height:
                raise ValueError(f"horizontal line y={coord} outside the cavity")
            pos = g.x()
            vals = _interp(F, g.hx, g.hy, pos, np.full(pos.size, coord))
            orientation = "horizontal"
        elif orientation in ("v", "vertical"):
            if not 0.0 < coord < g.width:
                raise ValueError(f"vertical line x={coord} outside the cavity")
            pos = g.y()
            vals = _interp(F, g.hx, g.hy, np.full(pos.size, coord), pos)
            orientation = "vertical"
        else:
            raise ValueError(f"unknown line orientation {orientation!r}")
        out.append(LineProfile(orientation, float(coord), pos, np.abs(vals)))
    return out


def relative_l2(x, ref) -> float:
    x = as_cvector(x)
    ref = as_cvector(ref)
    return float(np.linalg.norm(x - ref) / np.linalg.norm(ref))


def write_vector_csv(path, v) -> None:
    v = as_cvector(v)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("index,re,im\n")
        for k, z in enumerate(v):
            fh.write(f"{k},{float(z.real)!r},{float(z.imag)!r}\n")


def read_vector_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = np.zeros(int(data[:, 0].max()) + 1 if data.size else 0, dtype=np.complex128)
    out[data[:, 0].astype(int)] = data[:, 1] + 1j * data[:, 2]
    return out


def write_profiles_csv(path, profiles: Sequence[LineProfile]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("orientation,coordinate,position,abs_psi\n")
        for p in profiles:
            for x, a in zip(p.positions, p.abs_psi):
                fh.write(f"{p.orientation},{float(p.coordinate)!r},{float(x)!r},{float(a)!r}\n")
