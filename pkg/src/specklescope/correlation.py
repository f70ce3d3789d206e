"""Analytic m-th order intensity correlations of thermal source arrays.

For N independent thermal (circular Gaussian) sources the joint intensity
moments follow from the mutual coherence matrix

    J[j, k] = sum_l w_l * exp(i * alpha_l * (delta_k - delta_j)),

and the normalized m-detector correlation is the permanent of J divided by
the product of its diagonal:

    g_m(delta_1, ..., delta_m) = perm(J) / prod_j J[j, j].

With the m-1 fixed detectors parked at the magic offsets
delta_j = 2*pi*(j-2)/(m-1), scanning delta_1 yields a cosine series in
which only source-pair frequencies divisible by m-1 survive.  That
filtering is what the rest of the package exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AliasingError,
    GeometryError,
    MatrixSizeError,
    OrderError,
)
from .geometry import SourceGeometry, distinct_frequencies, phase_prefactors

__all__ = [
    "MAX_PERMANENT_ORDER",
    "DetectorArray",
    "CorrelationCurve",
    "Harmonic",
    "ModulationSpectrum",
    "magic_positions",
    "coherence_matrix",
    "permanent",
    "g_m_analytic",
    "roots_of_unity_sum",
    "surviving_frequencies",
    "predicted_spectrum",
    "regular_array_reference",
]

# Ryser's formula walks 2^m subsets; past this order a single curve stops
# being interactive and the permanent should not be attempted blindly.
MAX_PERMANENT_ORDER = 12

# Analytic values may dip this far below zero from roundoff and are clamped.
_NEGATIVE_TOL = 1e-9


def magic_positions(m: int) -> tuple[float, ...]:
    """Fixed-detector offsets 2*pi*(j-2)/(m-1) for j = 2..m.

    Equally spaced over [0, 2*pi); their phase factors at frequency f sum
    to zero unless (m-1) divides f, which is the filtering mechanism.
    """
    if m < 2:
        raise OrderError(f"correlation order must be at least 2, got {m}")
    return tuple(2.0 * math.pi * j / (m - 1) for j in range(m - 1))


@dataclass(frozen=True, eq=False)
class DetectorArray:
    """One scanned detector plus m-1 fixed detectors, all in offset units.

    Offsets are the dimensionless phase variable delta = 2*pi*d*sin(theta)
    / lambda, so a full period of the lattice is [0, 2*pi).

    Parameters
    ----------
    m : int
        Correlation order; total number of detectors.
    fixed_deltas : tuple of float
        Offsets of the m-1 fixed detectors.
    scan : ndarray
        Strictly increasing offsets visited by the scanned detector.
    """

    m: int
    fixed_deltas: tuple[float, ...]
    scan: np.ndarray

    def __post_init__(self) -> None:
        if self.m < 2:
            raise OrderError(f"correlation order must be at least 2, got {self.m}")
        object.__setattr__(self, "fixed_deltas", tuple(float(v) for v in self.fixed_deltas))
        if len(self.fixed_deltas) != self.m - 1:
            raise ValueError(
                f"need {self.m - 1} fixed detectors for order {self.m}, "
                f"got {len(self.fixed_deltas)}"
            )
        scan = np.asarray(self.scan, dtype=float)
        if scan.ndim != 1 or scan.size == 0:
            raise ValueError("scan grid must be a non-empty 1-D array")
        if not np.all(np.isfinite(scan)):
            raise ValueError("scan grid contains non-finite offsets")
        if scan.size > 1 and not np.all(np.diff(scan) > 0):
            raise ValueError("scan grid must be strictly increasing")
        scan = scan.copy()
        scan.flags.writeable = False
        object.__setattr__(self, "scan", scan)

    @classmethod
    def magic_scan(
        cls, m: int, samples: int, lo: float = 0.0, hi: float = 2.0 * math.pi
    ) -> "DetectorArray":
        """Fixed detectors at the magic offsets, uniform scan over [lo, hi)."""
        if samples < 1:
            raise ValueError(f"need at least one scan sample, got {samples}")
        scan = np.linspace(lo, hi, samples, endpoint=False)
        return cls(m, magic_positions(m), scan)


@dataclass(frozen=True, eq=False)
class CorrelationCurve:
    """Correlation values g_m over a scan grid, optionally with errors.

    `replicas`, when present, holds resampled realizations of the whole
    curve (one row per resample).  Estimator noise is coherent across the
    scan, so fitters use these rows to propagate uncertainty into derived
    quantities instead of treating per-pixel sigmas as independent.
    """

    m: int
    delta1: np.ndarray
    values: np.ndarray
    sigma: np.ndarray | None = None
    replicas: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.m < 2:
            raise OrderError(f"correlation order must be at least 2, got {self.m}")
        delta1 = np.asarray(self.delta1, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if delta1.shape != values.shape or delta1.ndim != 1:
            raise ValueError("delta1 and values must be 1-D arrays of equal length")
        if not np.all(np.isfinite(delta1)) or not np.all(np.isfinite(values)):
            raise ValueError("curve contains non-finite entries")
        scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
        if np.any(values < -_NEGATIVE_TOL * scale):
            raise ValueError("correlation values must be non-negative")
        values = np.maximum(values, 0.0)
        sigma = self.sigma
        if sigma is not None:
            sigma = np.asarray(sigma, dtype=float)
            if sigma.shape != values.shape:
                raise ValueError("sigma must match the value array shape")
            if not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
                raise ValueError("sigma entries must be finite and non-negative")
            sigma = sigma.copy()
            sigma.flags.writeable = False
        replicas = self.replicas
        if replicas is not None:
            replicas = np.asarray(replicas, dtype=float)
            if replicas.ndim != 2 or replicas.shape[1] != values.size:
                raise ValueError("replicas must be 2-D with one column per sample")
            if not np.all(np.isfinite(replicas)):
                raise ValueError("replicas contain non-finite entries")
            replicas = replicas.copy()
            replicas.flags.writeable = False
        for name, arr in (("delta1", delta1), ("values", values)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "replicas", replicas)

    def __len__(self) -> int:
        return int(self.values.size)


# ---------------------------------------------------------------------------
# coherence matrix and permanents
# ---------------------------------------------------------------------------


def _weight_vector(geometry: SourceGeometry, weights) -> np.ndarray:
    n = geometry.n_sources
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"need {n} source weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("source weights must be finite and positive")
    return w


def coherence_matrix(
    geometry: SourceGeometry, deltas, weights=None
) -> np.ndarray:
    """Mutual coherence matrix J for detectors at the given offsets.

    J[j, k] = sum_l w_l exp(i alpha_l (delta_k - delta_j)); Hermitian with
    a constant diagonal sum(w), positive semidefinite by construction.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or deltas.size < 1:
        raise ValueError("deltas must be a non-empty 1-D sequence")
    w = _weight_vector(geometry, weights)
    alpha = np.asarray(phase_prefactors(geometry), dtype=float)
    diff = deltas[None, :] - deltas[:, None]
    phases = np.exp(1j * alpha[:, None, None] * diff[None, :, :])
    return np.einsum("l,ljk->jk", w, phases)


def permanent(matrix: np.ndarray, cap: int = MAX_PERMANENT_ORDER) -> complex:
    """Permanent of a square matrix by Ryser's formula with Gray-code updates.

    O(2^n * n) time, refusing n > cap.  The empty matrix has permanent 1.
    """
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"permanent needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n > cap:
        raise MatrixSizeError(f"matrix order {n} exceeds permanent cap {cap}")
    if n == 0:
        return complex(1.0)
    return complex(_ryser_batch(a[None, :, :].astype(complex))[0])


def _ryser_batch(mats: np.ndarray) -> np.ndarray:
    """Permanents of a (S, n, n) stack via one shared Gray-code walk."""
    s, n, _ = mats.shape
    row = np.zeros((s, n), dtype=complex)
    total = np.zeros(s, dtype=complex)
    gray_prev = 0
    for k in range(1, 1 << n):
        gray = k ^ (k >> 1)
        changed = gray ^ gray_prev
        j = changed.bit_length() - 1
        if gray & changed:
            row += mats[:, :, j]
        else:
            row -= mats[:, :, j]
        # Ryser: perm = (-1)^n * sum over column subsets S of
        #   (-1)^|S| * prod_i (row sums restricted to S)
        sign = 1.0 if gray.bit_count() % 2 == 0 else -1.0
        total += sign * np.prod(row, axis=1)
        gray_prev = gray
    if n % 2 == 1:
        total = -total
    return total


def g_m_analytic(
    geometry: SourceGeometry,
    detectors: DetectorArray,
    weights=None,
) -> CorrelationCurve:
    """Exact normalized correlation curve over the detector scan grid.

    Evaluates perm(J)/prod(diag J) for every scan sample, batching the
    Gray-code walk across the grid.  Values are real up to roundoff; the
    imaginary residue is checked and discarded.
    """
    m = detectors.m
    if m > MAX_PERMANENT_ORDER:
        raise MatrixSizeError(
            f"order {m} exceeds permanent cap {MAX_PERMANENT_ORDER}"
        )
    w = _weight_vector(geometry, weights)
    alpha = np.asarray(phase_prefactors(geometry), dtype=float)
    scan = detectors.scan
    s = scan.size

    deltas = np.empty((s, m))
    deltas[:, 0] = scan
    deltas[:, 1:] = detectors.fixed_deltas
    diff = deltas[:, None, :] - deltas[:, :, None]  # (s, m, m)
    mats = np.einsum(
        "l,lsjk->sjk", w.astype(complex), np.exp(1j * alpha[:, None, None, None] * diff[None])
    )

    perms = _ryser_batch(mats)
    norm = float(np.sum(w)) ** m
    values = perms.real / norm
    residue = np.max(np.abs(perms.imag)) / norm
    if residue > 1e-8 * max(1.0, float(np.max(np.abs(values)))):
        raise ArithmeticError(f"permanent imaginary residue too large: {residue:g}")
    return CorrelationCurve(m=m, delta1=scan, values=values)


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------


def roots_of_unity_sum(lam: int, m: int) -> complex:
    """sum_{j=2}^{m} exp(i * lam * delta_j) over the magic offsets.

    Equals m-1 when (m-1) divides lam and 0 otherwise; computed directly
    so tests can check that identity rather than assume it.
    """
    if m < 2:
        raise OrderError(f"correlation order must be at least 2, got {m}")
    deltas = np.asarray(magic_positions(m))
    return complex(np.sum(np.exp(1j * lam * deltas)))


def surviving_frequencies(geometry: SourceGeometry, m: int) -> tuple[int, ...]:
    """Pair distances of the array that remain visible at order m.

    With fixed detectors at the magic offsets the curve retains exactly
    the frequencies f with f mod (m-1) == 0; everything else averages out.
    """
    if m < 3:
        raise OrderError(f"filtering needs at least two fixed detectors (m >= 3), got m={m}")
    return tuple(f for f in distinct_frequencies(geometry) if f % (m - 1) == 0)


# ---------------------------------------------------------------------------
# modulation spectra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Harmonic:
    """One cosine component of a correlation curve.

    kappa counts multiples of the filter fundamental; f is the spatial
    frequency in lattice units (f = kappa*(m-1) for filtered curves,
    fitted freely otherwise).
    """

    kappa: int
    f: float
    amplitude: float
    sigma_a: float = 0.0
    sigma_f: float = 0.0

    def __post_init__(self) -> None:
        if self.kappa < 1:
            raise ValueError(f"harmonic index must be >= 1, got {self.kappa}")
        if not self.f > 0:
            raise ValueError(f"harmonic frequency must be positive, got {self.f}")
        if self.amplitude < 0 or self.sigma_a < 0 or self.sigma_f < 0:
            raise ValueError("amplitude and uncertainties must be non-negative")


@dataclass(frozen=True)
class ModulationSpectrum:
    """Offset plus cosine amplitudes describing one correlation curve.

    kind records how the numbers were obtained: "analytic" (exact DFT of
    a noiseless curve), "fixed" (least squares on the filtered comb),
    "free" (frequencies fitted as well), or "reference" (regular-array
    fixed-at-zero configuration, where f = kappa instead of kappa*(m-1)).
    """

    m: int
    a0: float
    harmonics: tuple[Harmonic, ...]
    sigma_a0: float = 0.0
    kind: str = "analytic"
    residual_rms: float = 0.0
    leakage: float | None = None

    def __post_init__(self) -> None:
        if self.m < 2:
            raise OrderError(f"correlation order must be at least 2, got {self.m}")
        if self.kind not in ("analytic", "fixed", "free", "reference"):
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        object.__setattr__(self, "harmonics", tuple(self.harmonics))
        if self.a0 < 0 or self.sigma_a0 < 0:
            raise ValueError("offset and its uncertainty must be non-negative")
        fundamental = self.m - 1
        for h in self.harmonics:
            if self.kind in ("analytic", "fixed") and h.f != h.kappa * fundamental:
                raise ValueError(
                    f"kind={self.kind!r} requires f = kappa*(m-1), "
                    f"got f={h.f} kappa={h.kappa} at m={self.m}"
                )

    @property
    def frequencies(self) -> tuple[float, ...]:
        return tuple(h.f for h in self.harmonics)

    def amplitude_at(self, f: float, tol: float = 1e-6) -> float:
        """Amplitude of the harmonic at frequency f, or 0.0 if absent."""
        for h in self.harmonics:
            if abs(h.f - f) <= tol:
                return h.amplitude
        return 0.0


def _dft_spectrum(
    curve: CorrelationCurve,
    keep: tuple[int, ...],
    kind: str,
    fundamental: int,
) -> ModulationSpectrum:
    """Exact single-bin DFT amplitudes of a uniformly sampled curve."""
    s = len(curve)
    coeff = np.fft.rfft(curve.values) / s
    a0 = float(coeff[0].real)
    harmonics = []
    for f in keep:
        kappa = f // fundamental
        harmonics.append(Harmonic(kappa=kappa, f=float(f), amplitude=float(2.0 * abs(coeff[f]))))
    keep_bins = {0, *keep}
    other = [2.0 * abs(coeff[q]) for q in range(1, coeff.size) if q not in keep_bins]
    leakage = float(max(other)) if other else 0.0
    model = np.full(s, a0)
    delta = curve.delta1
    for h in harmonics:
        bin_ = int(round(h.f))
        model += 2.0 * (coeff[bin_] * np.exp(1j * h.f * delta)).real
    residual_rms = float(np.sqrt(np.mean((curve.values - model) ** 2)))
    return ModulationSpectrum(
        m=curve.m,
        a0=a0,
        harmonics=tuple(harmonics),
        kind=kind,
        residual_rms=residual_rms,
        leakage=leakage,
    )


def _default_samples(span: int) -> int:
    return max(4 * (span + 1), 8)


def predicted_spectrum(
    geometry: SourceGeometry,
    m: int,
    samples: int | None = None,
    weights=None,
) -> ModulationSpectrum:
    """Exact filtered spectrum of a geometry at order m (magic positions).

    Samples the analytic curve on a uniform full-period grid and reads the
    surviving amplitudes off single DFT bins.  A single source has a flat
    curve at m!, reported as an offset with no harmonics.
    """
    if m < 3:
        raise OrderError(f"filtered spectra need m >= 3, got m={m}")
    span = geometry.span
    s = _default_samples(span) if samples is None else int(samples)
    if s < 2 * span + 1:
        raise AliasingError(
            f"{s} samples alias a span-{span} array; need at least {2 * span + 1}"
        )
    detectors = DetectorArray.magic_scan(m, s)
    curve = g_m_analytic(geometry, detectors, weights=weights)
    if geometry.n_sources == 1:
        return ModulationSpectrum(m=m, a0=float(np.mean(curve.values)), harmonics=())
    keep = surviving_frequencies(geometry, m)
    return _dft_spectrum(curve, keep, kind="analytic", fundamental=m - 1)


def regular_array_reference(
    n_sources: int, m: int, samples: int | None = None
) -> ModulationSpectrum:
    """Spectrum of an equally spaced N-source array, all fixed detectors at 0.

    In this configuration every pair distance l = 1..N-1 contributes and
    the amplitudes fall off linearly, A_l proportional to N - l; the
    returned spectrum uses f = kappa = l (kind "reference").
    """
    if n_sources < 2:
        raise GeometryError(f"reference array needs at least 2 sources, got {n_sources}")
    if m < 2:
        raise OrderError(f"correlation order must be at least 2, got {m}")
    if m > MAX_PERMANENT_ORDER:
        raise MatrixSizeError(f"order {m} exceeds permanent cap {MAX_PERMANENT_ORDER}")
    geometry = SourceGeometry((1,) * (n_sources - 1))
    span = geometry.span
    s = _default_samples(span) if samples is None else int(samples)
    if s < 2 * span + 1:
        raise AliasingError(
            f"{s} samples alias a span-{span} array; need at least {2 * span + 1}"
        )
    detectors = DetectorArray(m, (0.0,) * (m - 1), np.linspace(0, 2 * math.pi, s, endpoint=False))
    curve = g_m_analytic(geometry, detectors)
    keep = tuple(range(1, n_sources))
    return _dft_spectrum(curve, keep, kind="reference", fundamental=1)
