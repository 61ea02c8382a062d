"""Iterative beam-damage simulation.

Each damage iteration applies two deformations to a volume:

1. elastic: draw a per-voxel mask uniform in [-1, 1], smooth it with a
   Gaussian filter, and apply ``V <- (1 + beta1 * M) * V`` (clamped to >= 0);
2. knock-on: for every nonzero voxel count the nonzero voxels NN in its
   3x3x3 neighborhood (including itself) and zero the voxel with probability
   ``beta2 ** (NN / 3)`` unless NN = 27 (fully interior voxels are safe).

Sparsely supported voxels (low NN) are the most likely to be knocked out, so
damage manifests as progressive surface erosion, while the elastic term adds
a slowly accumulating multiplicative modulation.

The number of iterations between consecutive projections comes from the
acquisition-time schedule: ``N_I = round(t / min(t))`` per entry, rounding
half away from zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError
from .phantom import VoxelVolume

# Named damage presets (beta1, beta2), from no damage (NC-1) to the most
# aggressive condition (NC-4).
DAMAGE_PRESETS = {
    "NC-1": (0.0, 0.0),
    "NC-2": (0.3, 0.03),
    "NC-3": (0.55, 0.055),
    "NC-4": (0.6, 0.06),
}


@dataclass(frozen=True)
class DamageParams:
    """Beam-damage parameters.

    ``gaussian_sigma`` is the smoothing scale (voxels) of the elastic mask;
    None selects the default ``10 * size / 256`` for the volume it is applied
    to, so the relative deformation wavelength is size-independent.
    """

    beta1: float = 0.0
    beta2: float = 0.0
    gaussian_sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.beta1 < 0:
            raise InvalidArgumentError(f"beta1 must be >= 0, got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise InvalidArgumentError(f"beta2 must be in [0, 1), got {self.beta2}")
        if self.gaussian_sigma is not None and self.gaussian_sigma <= 0:
            raise InvalidArgumentError(
                f"gaussian_sigma must be > 0, got {self.gaussian_sigma}"
            )


def damage_preset(name: str, gaussian_sigma: float | None = None, seed: int = 0) -> DamageParams:
    """Build DamageParams from a named preset (NC-1..NC-4)."""
    if name not in DAMAGE_PRESETS:
        raise InvalidArgumentError(
            f"unknown damage preset {name!r}; choose from {sorted(DAMAGE_PRESETS)}"
        )
    beta1, beta2 = DAMAGE_PRESETS[name]
    return DamageParams(beta1=beta1, beta2=beta2, gaussian_sigma=gaussian_sigma, seed=seed)


@dataclass(frozen=True)
class IterationSchedule:
    """Acquisition times and per-projection deformation iteration counts."""

    times: tuple
    iterations: tuple

    def __post_init__(self):
        if len(self.times) != len(self.iterations):
            raise InvalidArgumentError("times and iterations must have equal length")
        if any(t <= 0 for t in self.times):
            raise InvalidArgumentError("times must be positive")
        if any(int(n) != n or n < 1 for n in self.iterations):
            raise InvalidArgumentError("iteration counts must be positive integers")

    def __len__(self):
        return len(self.times)


def iteration_schedule(times) -> IterationSchedule:
    """Iterations between projections: round(t / min(t)), half away from zero.

    ``times`` are the (positive) acquisition intervals preceding each
    projection; equal intervals give exactly one iteration per projection.
    """
    times = tuple(float(t) for t in times)
    if not times:
        raise InvalidArgumentError("times must be non-empty")
    if any(t <= 0 for t in times):
        raise InvalidArgumentError("times must be positive")
    tmin = min(times)
    # floor(x + 0.5) rounds half away from zero for positive x (2.5 -> 3),
    # unlike banker's rounding
    iters = tuple(max(1, math.floor(t / tmin + 0.5)) for t in times)
    return IterationSchedule(times=times, iterations=iters)


def default_gaussian_sigma(shape) -> float:
    return 10.0 * max(shape) / 256.0


def _resolve_sigma(params: DamageParams, shape) -> float:
    if params.gaussian_sigma is not None:
        return params.gaussian_sigma
    return default_gaussian_sigma(shape)


def elastic_deform(v: VoxelVolume, params: DamageParams, rng=None) -> VoxelVolume:
    """One elastic deformation step: V <- (1 + beta1 * M) * V, clamped >= 0.

    M is a uniform [-1, 1] mask smoothed with a zero-padded Gaussian filter,
    so |M| <= 1 and every output voxel stays within
    [(1 - beta1) * v, (1 + beta1) * v] before clamping.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    if params.beta1 == 0.0:
        return VoxelVolume(v.data.copy(), v.voxel_size)
    sigma = _resolve_sigma(params, v.shape)
    mask = rng.uniform(-1.0, 1.0, size=v.shape)
    ndimage.gaussian_filter(mask, sigma=sigma, mode="constant", cval=0.0, output=mask)
    out = v.data * (1.0 + params.beta1 * mask)
    np.clip(out, 0.0, None, out=out)
    return VoxelVolume(out.astype(v.data.dtype, copy=False), v.voxel_size)


def neighbor_counts(data: np.ndarray) -> np.ndarray:
    """Count of nonzero voxels in each 3x3x3 neighborhood, including self."""
    nz = (data != 0).astype(np.float64)
    counts = ndimage.uniform_filter(nz, size=3, mode="constant", cval=0.0) * 27.0
    return np.rint(counts).astype(np.int64)


def knockon_deform(v: VoxelVolume, params: DamageParams, rng=None) -> VoxelVolume:
    """One knock-on step: zero voxels with probability beta2 ** (NN / 3).

    Fully interior voxels (NN = 27) are never removed; isolated or thinly
    supported voxels are most at risk, so removal erodes exposed surfaces.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    if params.beta2 == 0.0:
        return VoxelVolume(v.data.copy(), v.voxel_size)
    nn = neighbor_counts(v.data)
    nonzero = v.data != 0
    prob = np.zeros(v.shape, dtype=np.float64)
    at_risk = nonzero & (nn < 27)
    prob[at_risk] = params.beta2 ** (nn[at_risk] / 3.0)
    u = rng.random(size=v.shape)
    out = v.data.copy()
    out[u < prob] = 0
    return VoxelVolume(out, v.voxel_size)


def iter_damage_states(v0: VoxelVolume, params: DamageParams, schedule: IterationSchedule):
    """Yield the volume state at each projection time (lazy damage_sequence)."""
    rng = np.random.default_rng(params.seed)
    state = VoxelVolume(v0.data.copy(), v0.voxel_size)
    for n_iter in schedule.iterations:
        for _ in range(int(n_iter)):
            state = elastic_deform(state, params, rng)
            state = knockon_deform(state, params, rng)
        yield VoxelVolume(state.data.copy(), state.voxel_size)


def damage_sequence(v0: VoxelVolume, params: DamageParams, schedule: IterationSchedule):
    """Volume states observed by each projection of the schedule.

    Applies elastic then knock-on deformation per iteration and emits the
    state after the cumulative iteration count of each schedule entry.
    """
    return list(iter_damage_states(v0, params, schedule))
