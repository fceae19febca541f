"""Face-interpolation schemes and a 2D scalar-transport surrogate.

The surrogate advects and diffuses a scalar on a uniform cell-centred grid
with a uniform horizontal velocity. A sinusoidal disturbance
``W0 * sin(2*pi*a*t)`` enters through the inflow column, and the scalar is
recorded at a set of probe cells after every step. It stands in for the
pressure histories that a full compressible flow solver would produce.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Scheme",
    "Direction",
    "FaceStencil",
    "ratio_r",
    "limiter_b",
    "face_value",
    "face_values",
    "PecletDiagnostic",
    "peclet_check",
    "TransportConfig",
    "ProbeRecord",
    "TransportResult",
    "CflError",
    "advect",
    "gaussian_pulse",
    "peak_retention",
    "PulseRow",
    "pulse_comparison",
    "write_retention_csv",
    "write_probes_csv",
    "read_probes_csv",
    "with_probes",
]

# Below this magnitude (relative to the stencil scale) a gradient is treated as zero.
DEN_GUARD = 1e-300


class Scheme(enum.Enum):
    UDS = "UDS"
    CDS = "CDS"
    QUICK = "QUICK"
    SMART = "SMART"
    HQUICK = "HQUICK"

    @classmethod
    def parse(cls, name: str) -> "Scheme":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            allowed = ", ".join(s.name for s in cls)
            raise ValueError(f"unknown scheme {name!r}; allowed: {allowed}") from None


class Direction(enum.Enum):
    W_TO_P = "WtoP"
    P_TO_W = "PtoW"


@dataclass(frozen=True)
class FaceStencil:
    """Cell values around the west face ``w`` of cell P.

    Values are positional (WW, W, P and optionally E). For flow from P to W the
    stencil is mirrored: P becomes the upwind cell and E the far-upwind cell.
    """

    phi_ww: float
    phi_w: float
    phi_p: float
    direction: Direction = Direction.W_TO_P
    phi_e: Optional[float] = None

    def oriented(self) -> tuple[Optional[float], float, float]:
        """Return (far upwind, upwind, downwind) values."""
        if self.direction is Direction.W_TO_P:
            return self.phi_ww, self.phi_w, self.phi_p
        return self.phi_e, self.phi_p, self.phi_w


def _ratio(far, up, down):
    far, up, down = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (far, up, down)))
    num = down - up
    den = up - far
    scale = np.maximum(np.maximum(np.abs(far), np.abs(up)), np.maximum(np.abs(down), 1.0))
    small = np.abs(den) < DEN_GUARD * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / np.where(small, 1.0, den)
    sentinel = np.copysign(np.inf, num) * np.copysign(1.0, den)
    return np.where(small, sentinel, r)


def ratio_r(s: FaceStencil) -> float:
    """Gradient ratio ``(phi_P - phi_W) / (phi_W - phi_WW)`` on the oriented stencil.

    A vanishing denominator yields a signed infinity.
    """
    far, up, down = s.oriented()
    if far is None:
        raise ValueError("stencil has no far-upwind value")
    return float(_ratio(far, up, down))


def limiter_b(r):
    """SMART limiter ``max(0, min(2r, (3r+1)/4, 4))``; infinite r maps to 0 or 4."""
    r = np.asarray(r, dtype=float)
    with np.errstate(invalid="ignore"):
        b = np.maximum(0.0, np.minimum(np.minimum(2.0 * r, 0.25 * (3.0 * r + 1.0)), 4.0))
    b = np.where(np.isposinf(r), 4.0, np.where(np.isneginf(r), 0.0, b))
    return float(b) if b.ndim == 0 else b


def face_values(scheme: Scheme, far, up, down):
    """Vectorised face value given far-upwind, upwind and downwind cell values."""
    # written as upwind value plus a correction so that uniform data is reproduced exactly
    far, up, down = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (far, up, down)))
    if scheme is Scheme.UDS:
        return up.copy()
    if scheme is Scheme.CDS:
        return up + 0.5 * (down - up)
    if scheme is Scheme.QUICK:
        # 3/8 down + 3/4 up - 1/8 far
        return up + 0.125 * (3.0 * (down - up) + (up - far))
    r = _ratio(far, up, down)
    if scheme is Scheme.SMART:
        return up + 0.5 * limiter_b(r) * (up - far)
    if scheme is Scheme.HQUICK:
        den = down + 2.0 * up - 3.0 * far
        usable = (r > 0) & (den != 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = 2.0 * (down - up) * (up - far) / np.where(usable, den, 1.0)
        return np.where(usable, up + corr, up)
    raise ValueError(f"unsupported scheme {scheme!r}")


def face_value(scheme: Scheme, s: FaceStencil) -> float:
    far, up, down = s.oriented()
    if far is None:
        # no far-upwind cell (boundary face): fall back to upwind
        return float(up)
    return float(face_values(scheme, far, up, down))


@dataclass(frozen=True)
class PecletDiagnostic:
    ok: bool
    peclet: float

    def __str__(self):
        return "ok" if self.ok else f"warn(Pe={self.peclet:g})"


def peclet_check(u: float, diffusivity: float, dx: float) -> PecletDiagnostic:
    """Cell Peclet number ``|u| dx / diffusivity``; central differencing is at risk for Pe >= 2."""
    if dx <= 0:
        raise ValueError("dx must be positive")
    if diffusivity == 0:
        return PecletDiagnostic(False, math.inf)
    pe = abs(u) * dx / diffusivity
    return PecletDiagnostic(pe < 2.0, pe)


class CflError(ValueError):
    pass


@dataclass(frozen=True)
class TransportConfig:
    """Parameters of the transport surrogate.

    ``probe_positions`` are ``(i, j)`` cell indices (column, row). ``roof_span``
    is a half-open column range on ``probe_row`` marking the sun-roof.
    ``band`` restricts the inflow disturbance to rows ``[j0, j1)``; ``None``
    means the whole inflow column.
    """

    nx: int = 200
    ny: int = 20
    dx: float = 0.05
    dy: float = 0.05
    u: float = 25.0
    diffusivity: float = 0.3125
    dt: float = 1e-3
    steps: int = 1024
    w0: float = -1.2
    freq: float = 50.0
    background: float = 0.0
    probe_positions: tuple[tuple[int, int], ...] = ()
    probe_row: int = 10
    roof_span: tuple[int, int] = (120, 132)
    band: Optional[tuple[int, int]] = None

    @property
    def cfl(self) -> float:
        return abs(self.u) * self.dt / self.dx

    def validate(self) -> None:
        if self.nx < 3 or self.ny < 1:
            raise ValueError("grid needs nx >= 3 and ny >= 1")
        if self.dx <= 0 or self.dy <= 0 or self.dt <= 0:
            raise ValueError("dx, dy and dt must be positive")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.diffusivity < 0:
            raise ValueError("diffusivity must be nonnegative")
        if self.cfl > 0.9:
            raise CflError(f"CFL number {self.cfl:.4g} exceeds 0.9")
        d = self.diffusivity * self.dt * (1 / self.dx**2 + 1 / self.dy**2)
        if d > 0.5:
            raise CflError(f"diffusion number {d:.4g} exceeds 0.5")
        for i, j in self.probe_positions:
            if not (0 <= i < self.nx and 0 <= j < self.ny):
                raise ValueError(f"probe ({i}, {j}) outside the {self.nx}x{self.ny} grid")
        a, b = self.roof_span
        if not (0 <= a < b <= self.nx):
            raise ValueError(f"roof_span {self.roof_span} outside [0, {self.nx}]")
        if not 0 <= self.probe_row < self.ny:
            raise ValueError("probe_row outside the grid")
        if self.band is not None and not (0 <= self.band[0] < self.band[1] <= self.ny):
            raise ValueError("band outside the grid")

    def roof_probes(self, count: int) -> tuple[tuple[int, int], ...]:
        """``count`` probe cells spread evenly over the roof span on ``probe_row``."""
        a, b = self.roof_span
        cols = np.rint(np.linspace(a, b - 1, count)).astype(int)
        return tuple((int(i), self.probe_row) for i in cols)


@dataclass
class ProbeRecord:
    probe_id: int
    position: tuple[int, int]
    samples: np.ndarray
    dt: float

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.samples.size + 1)


@dataclass
class TransportResult:
    records: list[ProbeRecord]
    scheme: Scheme
    diagnostic: PecletDiagnostic
    field: np.ndarray = field(repr=False)
    extremes: tuple[float, float] = (math.nan, math.nan)  # field min / max over all steps

    @property
    def warnings(self) -> list[str]:
        if self.scheme is Scheme.CDS and not self.diagnostic.ok:
            return [f"CDS with cell Peclet number {self.diagnostic.peclet:g} >= 2 may be unstable"]
        return []


def gaussian_pulse(cfg: TransportConfig, center: float, width: float, amplitude: float = 1.0) -> np.ndarray:
    """Initial field with a Gaussian profile in x (cell units), uniform in y."""
    x = np.arange(cfg.nx, dtype=float)
    prof = amplitude * np.exp(-0.5 * ((x - center) / width) ** 2)
    return np.tile(prof, (cfg.ny, 1)) + cfg.background


def _x_fluxes(phi: np.ndarray, inflow: np.ndarray, scheme: Scheme) -> np.ndarray:
    """Face values on the nx+1 vertical faces for flow in +x."""
    ny, nx = phi.shape
    faces = np.empty((ny, nx + 1))
    faces[:, 0] = inflow  # no far-upwind cell: upwind
    faces[:, nx] = phi[:, nx - 1]  # outflow, zero gradient
    ext = np.concatenate([inflow[:, None], phi], axis=1)
    # interior face k (1..nx-1) sits between cells k-1 and k; far upwind is ext[:, k-1]
    faces[:, 1:nx] = face_values(scheme, ext[:, 0:nx - 1], ext[:, 1:nx], ext[:, 2:nx + 1])
    return faces


def advect(cfg: TransportConfig, scheme: Scheme, initial: Optional[np.ndarray] = None) -> TransportResult:
    """Explicit Euler integration of the transport surrogate.

    Returns one :class:`ProbeRecord` per probe with ``cfg.steps`` samples, the
    sample at index ``n`` taken at ``t = (n + 1) * dt``.
    """
    cfg.validate()
    diag = peclet_check(cfg.u, cfg.diffusivity, cfg.dx)
    phi = np.full((cfg.ny, cfg.nx), float(cfg.background))
    if initial is not None:
        initial = np.asarray(initial, dtype=float)
        if initial.shape != phi.shape:
            raise ValueError(f"initial field must have shape {phi.shape}")
        phi = initial.copy()
    mirrored = cfg.u < 0
    if mirrored:
        phi = phi[:, ::-1].copy()
    probes = [(cfg.nx - 1 - i if mirrored else i, j) for i, j in cfg.probe_positions]
    pi_ = np.array([p[0] for p in probes], dtype=int)
    pj = np.array([p[1] for p in probes], dtype=int)

    speed = abs(cfg.u)
    cx = speed * cfg.dt / cfg.dx
    gx = cfg.diffusivity * cfg.dt / cfg.dx**2
    gy = cfg.diffusivity * cfg.dt / cfg.dy**2
    rows = np.zeros(cfg.ny, dtype=bool)
    j0, j1 = cfg.band if cfg.band is not None else (0, cfg.ny)
    rows[j0:j1] = True

    samples = np.empty((len(probes), cfg.steps))
    lo, hi = float(phi.min()), float(phi.max())
    for n in range(cfg.steps):
        t = n * cfg.dt
        pulse = cfg.w0 * math.sin(2.0 * math.pi * cfg.freq * t) if cfg.w0 != 0.0 else 0.0
        inflow = np.where(rows, cfg.background + pulse, cfg.background)
        new = phi.copy()
        if speed > 0:
            f = _x_fluxes(phi, inflow, scheme)
            new -= cx * (f[:, 1:] - f[:, :-1])
        if cfg.diffusivity > 0:
            ext = np.concatenate([inflow[:, None], phi, phi[:, -1:]], axis=1)
            new += gx * (ext[:, 2:] - 2.0 * phi + ext[:, :-2])
            if cfg.ny > 1:
                up = np.vstack([phi[1:], phi[-1:]])
                dn = np.vstack([phi[:1], phi[:-1]])
                new += gy * (up - 2.0 * phi + dn)
        phi = new
        samples[:, n] = phi[pj, pi_]
        lo = min(lo, float(phi.min()))
        hi = max(hi, float(phi.max()))

    if mirrored:
        phi = phi[:, ::-1]
    records = [
        ProbeRecord(k, cfg.probe_positions[k], samples[k].copy(), cfg.dt)
        for k in range(len(probes))
    ]
    return TransportResult(records, scheme, diag, phi, (lo, hi))


def peak_retention(result: TransportResult, initial_peak: float) -> float:
    """Largest probe sample relative to ``initial_peak``."""
    peak = max(float(np.max(r.samples)) for r in result.records)
    return peak / initial_peak


@dataclass(frozen=True)
class PulseRow:
    scheme: Scheme
    retention: float
    field_min: float
    field_max: float
    bounded: bool
    peclet: float
    warning: str


def pulse_comparison(cfg: TransportConfig, schemes: Sequence[Scheme], center: float,
                     width: float, amplitude: float = 1.0) -> list[PulseRow]:
    """Advect a Gaussian pulse with each scheme and measure what survives.

    ``retention`` is the final field maximum above background divided by the
    initial pulse amplitude. ``bounded`` says whether the field stayed within
    the initial data range (widened by the disturbance amplitude) at every
    step, with a 1e-12 allowance.
    """
    init = gaussian_pulse(cfg, center, width, amplitude)
    lo0 = float(init.min()) - abs(cfg.w0)
    hi0 = float(init.max()) + abs(cfg.w0)
    rows = []
    for sch in schemes:
        res = advect(cfg, sch, init)
        lo, hi = res.extremes
        bounded = lo >= lo0 - 1e-12 and hi <= hi0 + 1e-12
        ret = (float(res.field.max()) - cfg.background) / amplitude
        rows.append(PulseRow(sch, ret, lo, hi, bounded, res.diagnostic.peclet, "; ".join(res.warnings)))
    return rows


def write_retention_csv(path, rows: Sequence[PulseRow]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("scheme,retention,field_min,field_max,bounded,peclet,warning\n")
        for r in rows:
            fh.write(f"{r.scheme.value},{float(r.retention)!r},{float(r.field_min)!r},{float(r.field_max)!r},"
                     f"{int(r.bounded)},{float(r.peclet)!r},{r.warning}\n")


def write_probes_csv(path, records: Sequence[ProbeRecord]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("probe_id,t,value\n")
        for rec in records:
            for t, v in zip(rec.times, rec.samples):
                fh.write(f"{rec.probe_id},{t:.9g},{float(v)!r}\n")


def read_probes_csv(path) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Parse a probe CSV into ``{probe_id: (times, values)}``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = {}
    for pid in np.unique(data[:, 0]).astype(int):
        sel = data[:, 0] == pid
        out[int(pid)] = (data[sel, 1], data[sel, 2])
    return out


def with_probes(cfg: TransportConfig, positions) -> TransportConfig:
    return replace(cfg, probe_positions=tuple((int(i), int(j)) for i, j in positions))
