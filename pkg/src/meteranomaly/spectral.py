"""Spectra of real series and brick-wall low-pass smoothing.

Smoothing is the three-step composition ``inverse(lowpass(forward(x)))``
applied to the whole series at once. The cutoff ``k_c`` keeps every bin
whose folded index ``min(k, N - k)`` is at most ``k_c`` and zeroes the rest,
so conjugate symmetry survives by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import InputError, InvariantViolation
from .fft import dft, idft
from .series import MeterSeries, SeriesKey

IMAG_RESIDUE_TOL = 1e-9
SPECTRUM_HEADER = ("k", "frequency_cycles_per_day", "re", "im", "magnitude")


@dataclass(frozen=True, eq=False)
class Spectrum:
    bins: np.ndarray
    n: int
    hermitian: bool

    def __post_init__(self):
        bins = np.array(self.bins, dtype=np.complex128)
        if bins.ndim != 1 or bins.shape[0] != self.n or self.n < 1:
            raise InputError(f"spectrum of shape {bins.shape} does not match n={self.n}")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)

    def folded_index(self) -> np.ndarray:
        k = np.arange(self.n)
        return np.minimum(k, self.n - k)

    def is_conjugate_symmetric(self, rtol: float = 0.0) -> bool:
        mirrored = np.conj(self.bins[(-np.arange(self.n)) % self.n])
        scale = float(np.abs(self.bins).max()) if self.n else 0.0
        return bool(np.all(np.abs(self.bins - mirrored) <= rtol * scale))


def _symmetrize(bins: np.ndarray) -> np.ndarray:
    """Average each bin with the conjugate of its mirror; exact for real input up to rounding."""
    mirrored = np.conj(bins[(-np.arange(bins.shape[0])) % bins.shape[0]])
    return 0.5 * (bins + mirrored)


def forward(x) -> Spectrum:
    """DFT of a real vector. The result is made exactly conjugate-symmetric."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] == 0:
        raise InputError("forward transform needs a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise InputError("forward transform needs finite values")
    return Spectrum(_symmetrize(dft(v)), v.shape[0], True)


def inverse(spectrum: Spectrum) -> np.ndarray:
    """Real inverse DFT; raises if the imaginary residue is not negligible."""
    z = idft(spectrum.bins)
    re = z.real
    residue = float(np.abs(z.imag).max())
    scale = float(np.abs(re).max())
    if residue > IMAG_RESIDUE_TOL * scale and residue > 0.0:
        raise InvariantViolation(
            f"inverse transform has imaginary residue {residue:.3e} (real scale {scale:.3e}); "
            "spectrum is not conjugate-symmetric"
        )
    return np.ascontiguousarray(re)


# ----------------------------------------------------------------------------
# low-pass filtering

CUTOFF_MODES = ("cutoff_index", "cycles_per_day", "energy_retention")


@dataclass(frozen=True)
class LowPassSpec:
    """Cutoff rule for :func:`lowpass`; exactly the field named by ``mode`` is set.

    Use the ``by_index``, ``by_cycles_per_day`` and ``by_energy`` constructors.
    """

    mode: str = "cycles_per_day"
    cutoff_index: int | None = None
    cycles_per_day: float | None = 8.0
    energy_retention: float | None = None

    def __post_init__(self):
        if self.mode not in CUTOFF_MODES:
            raise InputError(f"unknown cutoff mode {self.mode!r}")
        active = {
            "cutoff_index": self.cutoff_index,
            "cycles_per_day": self.cycles_per_day,
            "energy_retention": self.energy_retention,
        }
        if active[self.mode] is None or any(v is not None for m, v in active.items() if m != self.mode):
            raise InputError(f"LowPassSpec(mode={self.mode!r}) must set exactly the {self.mode} field")
        if self.mode == "cutoff_index" and int(self.cutoff_index) < 0:
            raise InputError(f"cutoff_index must be >= 0, got {self.cutoff_index}")
        if self.mode == "cycles_per_day" and not self.cycles_per_day >= 0:
            raise InputError(f"cycles_per_day must be >= 0, got {self.cycles_per_day}")
        if self.mode == "energy_retention" and not 0.0 < self.energy_retention <= 1.0:
            raise InputError(f"energy_retention must lie in (0, 1], got {self.energy_retention}")

    @classmethod
    def by_index(cls, k: int) -> "LowPassSpec":
        return cls("cutoff_index", cutoff_index=int(k), cycles_per_day=None)

    @classmethod
    def by_cycles_per_day(cls, cycles: float = 8.0) -> "LowPassSpec":
        return cls("cycles_per_day", cycles_per_day=float(cycles))

    @classmethod
    def by_energy(cls, rho: float = 0.95) -> "LowPassSpec":
        return cls("energy_retention", cycles_per_day=None, energy_retention=float(rho))

    def describe(self) -> dict:
        return {"mode": self.mode, self.mode: getattr(self, self.mode)}


def retained_energy(spectrum: Spectrum) -> np.ndarray:
    """Cumulative ``sum |X[k]|^2`` over bins with folded index <= j, for j = 0..N//2."""
    power = np.abs(spectrum.bins) ** 2
    folded = spectrum.folded_index()
    per_level = np.bincount(folded, weights=power, minlength=spectrum.n // 2 + 1)
    return np.cumsum(per_level)


def resolve_cutoff(spectrum: Spectrum, spec: LowPassSpec, samples_per_day: float = 48.0) -> int:
    """Cutoff index ``k_c`` in ``[0, N//2]`` selected by ``spec``."""
    n = spectrum.n
    half = n // 2
    if spec.mode == "cutoff_index":
        kc = int(spec.cutoff_index)
    elif spec.mode == "cycles_per_day":
        # bin k sits at k * samples_per_day / N cycles per day
        kc = int(math.floor(spec.cycles_per_day * n / samples_per_day + 1e-9))
    else:
        energy = retained_energy(spectrum)
        total = energy[-1]
        if total == 0.0:
            return 0
        kc = int(np.searchsorted(energy, spec.energy_retention * total, side="left"))
        kc = min(kc, half)
    if not 0 <= kc <= half:
        raise InputError(f"cutoff index {kc} outside [0, {half}] for N={n}")
    return kc


def lowpass(spectrum: Spectrum, spec: LowPassSpec, samples_per_day: float = 48.0) -> Spectrum:
    kc = resolve_cutoff(spectrum, spec, samples_per_day)
    return lowpass_index(spectrum, kc)


def lowpass_index(spectrum: Spectrum, kc: int) -> Spectrum:
    if not 0 <= kc <= spectrum.n // 2:
        raise InputError(f"cutoff index {kc} outside [0, {spectrum.n // 2}] for N={spectrum.n}")
    bins = spectrum.bins.copy()
    bins[spectrum.folded_index() > kc] = 0.0
    return Spectrum(bins, spectrum.n, spectrum.hermitian)


def smooth(series: MeterSeries, spec: LowPassSpec) -> MeterSeries:
    return smooth_with_cutoff(series, spec)[0]


def smooth_with_cutoff(series: MeterSeries, spec: LowPassSpec) -> tuple[MeterSeries, int]:
    spectrum = forward(series.values)
    kc = resolve_cutoff(spectrum, spec, series.grid.samples_per_day)
    return series.with_values(inverse(lowpass_index(spectrum, kc))), kc


def smooth_set(
    series_set: Mapping[SeriesKey, MeterSeries], spec: LowPassSpec, channels=None
) -> tuple[dict[SeriesKey, MeterSeries], dict[SeriesKey, int]]:
    """Smooth every series (or those on ``channels``); returns series and cutoffs."""
    out: dict[SeriesKey, MeterSeries] = {}
    cutoffs: dict[SeriesKey, int] = {}
    for key, s in series_set.items():
        if channels is not None and s.channel not in channels:
            out[key] = s
            continue
        out[key], cutoffs[key] = smooth_with_cutoff(s, spec)
    return out, cutoffs


def spectrum_rows(spectrum: Spectrum, samples_per_day: float) -> list[tuple]:
    """Rows ``(k, cycles/day, re, im, |X|)`` for every bin."""
    k = np.arange(spectrum.n)
    freq = k * (samples_per_day / spectrum.n)
    b = spectrum.bins
    return list(zip(k.tolist(), freq.tolist(), b.real.tolist(), b.imag.tolist(), np.abs(b).tolist()))
