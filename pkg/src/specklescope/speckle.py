"""Monte Carlo thermal speckle frames and correlation estimation.

Each source emits a circular complex Gaussian amplitude per frame
(independent across sources and frames), so pixel p of frame r sees

    I[r, p] = | sum_l a[r, l] * exp(i * alpha_l * delta_p) |^2 .

Correlations are estimated as ratios of empirical moments over frames,
with a block bootstrap supplying per-pixel standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correlation import CorrelationCurve, magic_positions
from .errors import DegeneratePixelError, GridCoverageError, OrderError
from .geometry import SourceGeometry, phase_prefactors

__all__ = [
    "SpeckleRun",
    "FrameStack",
    "uniform_grid",
    "frame_amplitudes",
    "sample_frames",
    "quantize",
    "nearest_magic_pixels",
    "estimate_g_m",
]

_CHUNK_FRAMES = 8192


def uniform_grid(pixels: int, lo: float = 0.0, hi: float = 2.0 * math.pi) -> np.ndarray:
    """Uniform camera grid of the given size over [lo, hi), endpoint excluded."""
    if pixels < 1:
        raise ValueError(f"need at least one pixel, got {pixels}")
    return np.linspace(lo, hi, pixels, endpoint=False)


@dataclass(frozen=True, eq=False)
class SpeckleRun:
    """Immutable description of one simulated acquisition.

    Parameters
    ----------
    geometry : SourceGeometry
        Source array being imaged.
    frames : int
        Number of independent speckle frames R.
    seed : int
        Philox key; together with the frame index it pins every frame.
    delta_axis : ndarray
        Strictly increasing detector offsets of the camera pixels.
    weights : tuple of float, optional
        Relative source intensities; equal if omitted.
    quantization_bits : int, optional
        If set, frames are quantized to this ADC depth after sampling.
    """

    geometry: SourceGeometry
    frames: int
    seed: int
    delta_axis: np.ndarray
    weights: tuple[float, ...] | None = None
    quantization_bits: int | None = None

    def __post_init__(self) -> None:
        if self.frames < 1:
            raise ValueError(f"need at least one frame, got {self.frames}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        axis = np.asarray(self.delta_axis, dtype=float)
        if axis.ndim != 1 or axis.size == 0:
            raise ValueError("delta_axis must be a non-empty 1-D array")
        if axis.size > 1 and not np.all(np.diff(axis) > 0):
            raise ValueError("delta_axis must be strictly increasing")
        axis = axis.copy()
        axis.flags.writeable = False
        object.__setattr__(self, "delta_axis", axis)
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != self.geometry.n_sources:
                raise ValueError(
                    f"need {self.geometry.n_sources} weights, got {len(w)}"
                )
            if any(not math.isfinite(v) or v <= 0 for v in w):
                raise ValueError("weights must be finite and positive")
            object.__setattr__(self, "weights", w)
        bits = self.quantization_bits
        if bits is not None and not 1 <= bits <= 16:
            raise ValueError(f"quantization bits must be in 1..16, got {bits}")


@dataclass(frozen=True, eq=False)
class FrameStack:
    """Recorded intensities, frames x pixels, plus provenance."""

    intensities: np.ndarray
    delta_axis: np.ndarray
    n_sources: int
    seed: int
    bits: int | None = None

    def __post_init__(self) -> None:
        inten = np.asarray(self.intensities, dtype=float)
        axis = np.asarray(self.delta_axis, dtype=float)
        if inten.ndim != 2:
            raise ValueError("intensities must be a frames x pixels array")
        if axis.shape != (inten.shape[1],):
            raise ValueError("delta_axis length must match the pixel count")
        if not np.all(np.isfinite(inten)) or np.any(inten < 0):
            raise ValueError("intensities must be finite and non-negative")
        for name, arr in (("intensities", inten), ("delta_axis", axis)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_frames(self) -> int:
        return int(self.intensities.shape[0])

    @property
    def n_pixels(self) -> int:
        return int(self.intensities.shape[1])

    def clipped_fraction(self) -> float:
        """Fraction of samples pinned at zero or the top quantization level.

        Meaningful after quantization; large values mean the ADC depth is
        destroying the intensity statistics.
        """
        inten = self.intensities
        top = inten.max()
        if top == 0:
            return 1.0
        return float(np.mean((inten == 0) | (inten == top)))


def frame_amplitudes(run: SpeckleRun, frame: int) -> np.ndarray:
    """Complex source amplitudes of one frame, reproducible in isolation.

    Each frame owns a counter-partitioned Philox stream keyed by
    (run.seed, frame index), so frame 57 of a million-frame run can be
    regenerated without touching the other 999999.
    """
    if not 0 <= frame < run.frames:
        raise ValueError(f"frame index {frame} outside 0..{run.frames - 1}")
    n = run.geometry.n_sources
    w = np.ones(n) if run.weights is None else np.asarray(run.weights)
    rng = np.random.Generator(np.random.Philox(key=run.seed, counter=frame << 192))
    xi = rng.standard_normal((n, 2))
    return np.sqrt(w / 2.0) * (xi[:, 0] + 1j * xi[:, 1])


def sample_frames(run: SpeckleRun) -> FrameStack:
    """Simulate the whole acquisition described by `run`.

    Draws per-frame source amplitudes, propagates them to the camera
    grid, and applies quantization if the run requests it.
    """
    n = run.geometry.n_sources
    w = np.ones(n) if run.weights is None else np.asarray(run.weights)
    scale = np.sqrt(w / 2.0)

    amps = np.empty((run.frames, n), dtype=complex)
    for i in range(run.frames):
        rng = np.random.Generator(np.random.Philox(key=run.seed, counter=i << 192))
        xi = rng.standard_normal((n, 2))
        amps[i] = scale * (xi[:, 0] + 1j * xi[:, 1])

    alpha = np.asarray(phase_prefactors(run.geometry), dtype=float)
    field_matrix = np.exp(1j * alpha[:, None] * run.delta_axis[None, :])  # (n, P)

    intensities = np.empty((run.frames, run.delta_axis.size))
    for start in range(0, run.frames, _CHUNK_FRAMES):
        stop = min(start + _CHUNK_FRAMES, run.frames)
        fields = amps[start:stop] @ field_matrix
        intensities[start:stop] = fields.real**2 + fields.imag**2

    stack = FrameStack(
        intensities=intensities,
        delta_axis=run.delta_axis,
        n_sources=n,
        seed=run.seed,
    )
    if run.quantization_bits is not None:
        stack = quantize(stack, run.quantization_bits)
    return stack


def quantize(stack: FrameStack, bits: int) -> FrameStack:
    """Quantize intensities to ADC counts at the given bit depth.

    The stack maximum maps to the top level 2^bits - 1; values are stored
    as float counts.  Idempotent: quantizing an already quantized stack
    at the same depth returns identical counts.
    """
    if not 1 <= bits <= 16:
        raise ValueError(f"quantization bits must be in 1..16, got {bits}")
    top = float(stack.intensities.max())
    levels = float(2**bits - 1)
    if top == 0:
        counts = np.zeros_like(stack.intensities)
    else:
        counts = np.rint(stack.intensities * (levels / top))
    return FrameStack(
        intensities=counts,
        delta_axis=stack.delta_axis,
        n_sources=stack.n_sources,
        seed=stack.seed,
        bits=bits,
    )


def nearest_magic_pixels(
    delta_axis: np.ndarray, m: int
) -> tuple[tuple[int, ...], float]:
    """Grid pixels closest to the m-1 magic offsets, with placement error.

    Returns the pixel indices and the largest |delta_pixel - delta_magic|.
    Raises GridCoverageError when a magic offset falls more than half a
    local pixel pitch outside the grid, since the nearest pixel would then
    be a silent extrapolation.
    """
    axis = np.asarray(delta_axis, dtype=float)
    if axis.ndim != 1 or axis.size == 0:
        raise ValueError("delta_axis must be a non-empty 1-D array")
    if m < 2:
        raise OrderError(f"correlation order must be at least 2, got {m}")
    targets = magic_positions(m)
    if axis.size > 1:
        pitch_lo = axis[1] - axis[0]
        pitch_hi = axis[-1] - axis[-2]
    else:
        pitch_lo = pitch_hi = math.inf
    indices = []
    worst = 0.0
    for target in targets:
        if target < axis[0] - pitch_lo / 2 or target > axis[-1] + pitch_hi / 2:
            raise GridCoverageError(
                f"magic offset {target:.6f} lies outside the grid "
                f"[{axis[0]:.6f}, {axis[-1]:.6f}]"
            )
        idx = int(np.argmin(np.abs(axis - target)))
        indices.append(idx)
        worst = max(worst, abs(float(axis[idx]) - target))
    return tuple(indices), worst


def estimate_g_m(
    stack: FrameStack,
    fixed_pixels: tuple[int, ...],
    n_boot: int = 200,
    max_blocks: int = 256,
    boot_seed: int | None = None,
) -> CorrelationCurve:
    """Estimate the order-(len(fixed_pixels)+1) correlation curve.

    value[p] = mean(I_p * prod_j I_fj) / (mean(I_p) * prod_j mean(I_fj))

    over frames, for every pixel p, with the fixed detectors at the given
    pixel indices (repeats are allowed and mean coincident detectors).
    Standard errors come from a block bootstrap over frame blocks, and the
    resampled curves ride along as curve.replicas so fitters can propagate
    the (strongly pixel-correlated) estimator noise honestly.  With a
    single frame the estimate is defined but sigma and replicas are None.
    """
    inten = stack.intensities
    n_frames, n_pixels = inten.shape
    fixed = tuple(int(p) for p in fixed_pixels)
    if len(fixed) < 1:
        raise OrderError("need at least one fixed detector (order >= 2)")
    for p in fixed:
        if not 0 <= p < n_pixels:
            raise ValueError(f"fixed pixel {p} outside 0..{n_pixels - 1}")
    m = len(fixed) + 1

    fixed_idx = np.asarray(fixed, dtype=int)

    mean_i = inten.mean(axis=0)
    if np.any(mean_i == 0):
        bad = int(np.flatnonzero(mean_i == 0)[0])
        raise DegeneratePixelError(f"pixel {bad} has zero mean intensity")

    fixed_product = inten[:, fixed_idx].prod(axis=1)  # (R,)
    numerator = fixed_product @ inten / n_frames  # (P,)
    denominator = mean_i * float(np.prod(mean_i[fixed_idx]))
    values = numerator / denominator

    if n_frames < 2:
        return CorrelationCurve(m=m, delta1=stack.delta_axis, values=values)

    # --- block bootstrap ---------------------------------------------------
    n_blocks = min(max_blocks, n_frames)
    edges = np.array_split(np.arange(n_frames), n_blocks)
    block_num = np.empty((n_blocks, n_pixels))
    block_mean_i = np.empty((n_blocks, n_pixels))
    for b, idx in enumerate(edges):
        block_num[b] = fixed_product[idx] @ inten[idx] / idx.size
        block_mean_i[b] = inten[idx].mean(axis=0)

    if boot_seed is None:
        seed_seq = np.random.SeedSequence(entropy=(stack.seed, 0xB0075EED))
    else:
        seed_seq = np.random.SeedSequence(entropy=(boot_seed, 0xB0075EED))
    rng = np.random.Generator(np.random.Philox(seed_seq))
    counts = rng.multinomial(n_blocks, np.full(n_blocks, 1.0 / n_blocks), size=n_boot)

    boot_num = counts @ block_num / n_blocks  # (n_boot, P)
    boot_mean_i = counts @ block_mean_i / n_blocks
    boot_fixed = boot_mean_i[:, fixed_idx].prod(axis=1)  # (n_boot,)
    boot_den = boot_mean_i * boot_fixed[:, None]
    if np.any(boot_den == 0):
        raise DegeneratePixelError("bootstrap resample hit a zero-mean pixel")
    boot_values = boot_num / boot_den
    sigma = boot_values.std(axis=0, ddof=1)

    return CorrelationCurve(
        m=m,
        delta1=stack.delta_axis,
        values=values,
        sigma=sigma,
        replicas=boot_values,
    )
