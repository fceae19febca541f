"""Fluctuation extraction, radix-2 FFT, one-sided PSD and resonator estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "TimeSeries",
    "Spectrum",
    "ResonatorSpec",
    "NoDominantComponent",
    "extract_fluctuation",
    "fft",
    "ifft",
    "psd",
    "dominant_frequency",
    "resonator_frequency",
    "dominant_bin",
    "is_power_of_two",
    "write_psd_csv",
    "read_psd_csv",
    "write_dominant_csv",
]


class NoDominantComponent(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float).reshape(-1))
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    def tail(self, n: int) -> "TimeSeries":
        return TimeSeries(self.samples[-n:], self.dt)


@dataclass(frozen=True)
class Spectrum:
    bins: np.ndarray
    sample_rate: float

    @property
    def n(self) -> int:
        return self.bins.size

    def frequencies(self) -> np.ndarray:
        """Frequencies of the one-sided bins ``0..N/2``."""
        return np.arange(self.n // 2 + 1) * self.sample_rate / self.n


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


def extract_fluctuation(p: TimeSeries, p_bar: TimeSeries) -> TimeSeries:
    """Instantaneous minus background signal."""
    if len(p) != len(p_bar):
        raise ValueError(f"length mismatch: {len(p)} vs {len(p_bar)}")
    if not math.isclose(p.dt, p_bar.dt, rel_tol=1e-12):
        raise ValueError(f"sampling mismatch: dt {p.dt} vs {p_bar.dt}")
    return TimeSeries(p.samples - p_bar.samples, p.dt)


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _radix2(x: np.ndarray, sign: float) -> np.ndarray:
    n = x.size
    a = x[_bit_reverse(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(-1, size)
        even = blocks[:, :half].copy()
        odd = blocks[:, half:] * tw
        blocks[:, :half] = even + odd
        blocks[:, half:] = even - odd
        size *= 2
    return a


def _prepare(x, n: int) -> tuple[np.ndarray, float]:
    if not is_power_of_two(n):
        raise ValueError(f"FFT length {n} is not a power of two")
    rate = 1.0
    if isinstance(x, TimeSeries):
        rate = x.sample_rate
        x = x.samples
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    if x.size >= n:
        x = x[:n]
    else:
        x = np.concatenate([x, np.zeros(n - x.size, dtype=np.complex128)])
    return x, rate


def fft(x, n: int, sample_rate: float | None = None) -> Spectrum:
    """Forward DFT ``X_k = sum_n x_n exp(-2 pi i k n / N)``.

    Inputs longer than ``n`` are truncated to their first ``n`` samples;
    shorter inputs are zero-padded. No window is applied.
    """
    data, rate = _prepare(x, n)
    return Spectrum(_radix2(data, -1.0), sample_rate if sample_rate is not None else rate)


def ifft(s: Spectrum | np.ndarray) -> np.ndarray:
    bins = s.bins if isinstance(s, Spectrum) else np.asarray(s, dtype=np.complex128)
    n = bins.size
    if not is_power_of_two(n):
        raise ValueError(f"FFT length {n} is not a power of two")
    return _radix2(bins, 1.0) / n


def psd(s: Spectrum) -> np.ndarray:
    """One-sided power spectrum ``|X_k|^2 / N`` for ``k = 0..N/2``, interior bins doubled."""
    n = s.n
    p = np.abs(s.bins[: n // 2 + 1]) ** 2 / n
    p[1 : n // 2] *= 2.0
    return p


def dominant_frequency(power: Sequence[float], sample_rate: float) -> tuple[float, float]:
    """Peak frequency and power, ignoring the DC bin; ties go to the lower bin."""
    power = np.asarray(power, dtype=float)
    if power.size < 2:
        raise ValueError("PSD needs at least two bins")
    n = 2 * (power.size - 1)
    k = 1 + int(np.argmax(power[1:]))
    if not power[k] > 0:
        raise NoDominantComponent("no dominant component")
    return k * sample_rate / n, float(power[k])


def dominant_bin(power: Sequence[float]) -> int:
    power = np.asarray(power, dtype=float)
    k = 1 + int(np.argmax(power[1:]))
    if not power[k] > 0:
        raise NoDominantComponent("no dominant component")
    return k


@dataclass(frozen=True)
class ResonatorSpec:
    """Helmholtz resonator geometry.

    ``eta`` is the empirical end-correction coefficient multiplying the neck
    radius; the effective neck length is ``l + eta * r_neck``.
    """

    c: float
    A: float
    V: float
    l: float
    eta: float
    r_neck: float

    @property
    def l_eff(self) -> float:
        return self.l + self.eta * self.r_neck


def resonator_frequency(spec: ResonatorSpec) -> float:
    for name in ("c", "A", "V", "l", "eta", "r_neck"):
        if not getattr(spec, name) > 0:
            raise ValueError(f"resonator field {name} must be strictly positive")
    return spec.c / (2.0 * math.pi) * math.sqrt(spec.A / (spec.l_eff * spec.V))


def write_psd_csv(path, power: np.ndarray, sample_rate: float) -> None:
    n = 2 * (len(power) - 1)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("bin,freq_hz,psd\n")
        for k, p in enumerate(power):
            fh.write(f"{k},{float(k * sample_rate / n)!r},{float(p)!r}\n")


def read_psd_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1], data[:, 2]


def write_dominant_csv(path, rows: Sequence[tuple[int, float, float]]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("probe_id,f_peak_hz,power\n")
        for pid, f, p in rows:
            fh.write(f"{pid},{float(f)!r},{float(p)!r}\n")
