"""Parallel-beam forward projection and acquisition simulation.

The tilt axis is the volume's y axis. A projection at angle theta samples the
volume along rays in the x-z plane; the detector coordinate of a point at
centered offsets (dx, dz) is ``u = dx*cos(theta) + dz*sin(theta)``, and
detector rows index y directly (one sinogram row per tilt-axis coordinate).

Projection and backprojection are implemented as exact transposes of each
other: per angle, the bilinear-interpolated line-integral sampling is built
once as a sparse matrix acting on x-z planes, and backprojection applies its
transpose. This keeps ``<FP(v), u> == <v, BP(u)>`` to rounding error, which
the iterative reconstruction relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .damage import DamageParams, iter_damage_states, iteration_schedule
from .errors import InvalidArgumentError
from .geometry import ProjectionGeometry, TiltScheme
from .phantom import VoxelVolume


@dataclass
class Projection:
    """One detector image: rows index y, columns index u (perpendicular to y)."""

    pixels: np.ndarray
    angle_deg: float
    chrono_index: int
    time: float = 0.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2:
            raise InvalidArgumentError(f"projection must be 2D, got {self.pixels.shape}")
        if self.chrono_index < 1:
            raise InvalidArgumentError("chrono_index is 1-based")
        if np.min(self.pixels) < 0:
            raise InvalidArgumentError("projection pixels must be non-negative")


@dataclass
class TiltSeries:
    """Chronologically ordered projections plus the scheme that produced them.

    The series may be a prefix of the scheme (a stopped acquisition), but
    chrono indices are always 1..N contiguous and all images share
    ``detector_shape``.
    """

    projections: list
    scheme: TiltScheme
    detector_shape: tuple = field(default=None)

    def __post_init__(self):
        if not self.projections:
            raise InvalidArgumentError("series has no projections")
        if len(self.projections) > len(self.scheme):
            raise InvalidArgumentError("more projections than scheme angles")
        if self.detector_shape is None:
            self.detector_shape = tuple(self.projections[0].pixels.shape)
        self.detector_shape = tuple(self.detector_shape)
        half = self.scheme.annular_range_deg / 2.0 + 1e-9
        for j, p in enumerate(self.projections):
            if p.chrono_index != j + 1:
                raise InvalidArgumentError(
                    f"chrono_index must be contiguous 1..N, got {p.chrono_index} at {j}"
                )
            if tuple(p.pixels.shape) != self.detector_shape:
                raise InvalidArgumentError("projections disagree on detector_shape")
            if abs(p.angle_deg) > half:
                raise InvalidArgumentError(
                    f"angle {p.angle_deg} outside scheme range"
                )

    def __len__(self):
        return len(self.projections)

    @property
    def angles_deg(self):
        return [p.angle_deg for p in self.projections]

    def sorted_by_angle(self) -> list:
        """Projections reordered to ascending (annular) angle order."""
        return sorted(self.projections, key=lambda p: p.angle_deg)


class ParallelProjector:
    """Cached per-angle projection matrices for one volume/detector pairing.

    ``project`` maps a volume [x, y, z] to a detector image [y, u];
    ``backproject`` applies the exact transpose.
    """

    def __init__(self, volume_shape, detector_cols: int | None = None):
        nx, ny, nz = volume_shape
        if detector_cols is None:
            detector_cols = nx
        self.geometry = ProjectionGeometry(
            volume_shape=tuple(volume_shape),
            detector_shape=(ny, detector_cols),
        )
        self._nx, self._ny, self._nz = nx, ny, nz
        self._nu = detector_cols
        # ray-step count: enough samples to cross the volume at any angle,
        # parity-matched to nz so samples align with voxel centers at 0 deg
        nt = int(math.ceil(math.hypot(nx, nz)))
        if (nt - nz) % 2:
            nt += 1
        self._nt = nt
        self._matrices: dict = {}

    def matrix(self, angle_deg: float) -> sparse.csr_matrix:
        """Sparse (detector_cols, nx*nz) line-integral operator for one angle."""
        key = float(angle_deg)
        mat = self._matrices.get(key)
        if mat is None:
            mat = self._build(key)
            self._matrices[key] = mat
        return mat

    def _build(self, angle_deg: float) -> sparse.csr_matrix:
        nx, nz, nu, nt = self._nx, self._nz, self._nu, self._nt
        theta = math.radians(angle_deg)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        u = np.arange(nu, dtype=np.float64) - (nu - 1) / 2.0
        t = np.arange(nt, dtype=np.float64) - (nt - 1) / 2.0
        uu, tt = np.meshgrid(u, t, indexing="ij")
        xs = (uu * cos_t - tt * sin_t + (nx - 1) / 2.0).ravel()
        zs = (uu * sin_t + tt * cos_t + (nz - 1) / 2.0).ravel()
        rows = np.repeat(np.arange(nu, dtype=np.int64), nt)

        ix0 = np.floor(xs)
        iz0 = np.floor(zs)
        fx = xs - ix0
        fz = zs - iz0
        entries = []
        for dx_i, dz_i, w in (
            (0, 0, (1 - fx) * (1 - fz)),
            (1, 0, fx * (1 - fz)),
            (0, 1, (1 - fx) * fz),
            (1, 1, fx * fz),
        ):
            ix = ix0 + dx_i
            iz = iz0 + dz_i
            ok = (ix >= 0) & (ix < nx) & (iz >= 0) & (iz < nz) & (w > 0)
            entries.append(
                (rows[ok], (ix[ok] * nz + iz[ok]).astype(np.int64), w[ok])
            )
        r = np.concatenate([e[0] for e in entries])
        c = np.concatenate([e[1] for e in entries])
        d = np.concatenate([e[2] for e in entries])
        mat = sparse.coo_matrix((d, (r, c)), shape=(nu, nx * nz))
        return mat.tocsr()

    def _as_planes(self, volume_data: np.ndarray) -> np.ndarray:
        # (nx, ny, nz) -> (nx*nz, ny): one x-z plane per y column
        return np.ascontiguousarray(volume_data.transpose(0, 2, 1)).reshape(
            self._nx * self._nz, self._ny
        )

    def project(self, volume_data: np.ndarray, angle_deg: float) -> np.ndarray:
        """Line integrals of a volume at one angle; returns image [y, u]."""
        if tuple(volume_data.shape) != (self._nx, self._ny, self._nz):
            raise InvalidArgumentError(
                f"volume shape {volume_data.shape} does not match projector "
                f"{(self._nx, self._ny, self._nz)}"
            )
        p = self.matrix(angle_deg) @ self._as_planes(volume_data.astype(np.float64))
        return p.T.copy()  # (ny, nu)

    def backproject(self, image: np.ndarray, angle_deg: float) -> np.ndarray:
        """Exact transpose of ``project``; returns a volume [x, y, z]."""
        image = np.asarray(image, dtype=np.float64)
        if tuple(image.shape) != (self._ny, self._nu):
            raise InvalidArgumentError(
                f"image shape {image.shape} does not match detector "
                f"{(self._ny, self._nu)}"
            )
        planes = self.matrix(angle_deg).T @ image.T  # (nx*nz, ny)
        return planes.reshape(self._nx, self._nz, self._ny).transpose(0, 2, 1).copy()


_PROJECTOR_CACHE: dict = {}


def projector_for(volume_shape, detector_cols: int | None = None) -> ParallelProjector:
    key = (tuple(volume_shape), detector_cols)
    proj = _PROJECTOR_CACHE.get(key)
    if proj is None:
        proj = ParallelProjector(volume_shape, detector_cols)
        _PROJECTOR_CACHE[key] = proj
    return proj


def forward_project(v: VoxelVolume, angle_deg: float, chrono_index: int = 1,
                    time: float = 0.0) -> Projection:
    """Project a volume at one tilt angle (parallel beam, bilinear sampling)."""
    proj = projector_for(v.shape)
    pixels = proj.project(v.data, angle_deg)
    # clip interpolation round-off so the non-negativity invariant holds
    np.clip(pixels, 0.0, None, out=pixels)
    return Projection(
        pixels=pixels.astype(np.float32),
        angle_deg=float(angle_deg),
        chrono_index=chrono_index,
        time=time,
    )


def default_times(n: int) -> list:
    """Equal collection times: absolute times 1..n (one damage iteration each)."""
    return [float(i) for i in range(1, n + 1)]


def simulate_acquisition(v0: VoxelVolume, scheme: TiltScheme, params: DamageParams,
                         times=None) -> TiltSeries:
    """Deform-then-project acquisition of a full tilt series.

    ``times`` are absolute acquisition times, one per scheme angle and
    strictly increasing; the damage schedule uses their successive intervals,
    so equal spacing yields one deformation iteration per projection. The
    j-th projection images the volume state after the j-th cumulative
    deformation count.
    """
    return TiltSeries(
        projections=list(iter_acquisition(v0, scheme, params, times)),
        scheme=scheme,
    )


def iter_acquisition(v0: VoxelVolume, scheme: TiltScheme, params: DamageParams,
                     times=None):
    """Lazy variant of simulate_acquisition: yields one Projection at a time."""
    if times is None:
        times = default_times(len(scheme))
    times = [float(t) for t in times]
    if len(times) != len(scheme):
        raise InvalidArgumentError(
            f"times length {len(times)} != scheme length {len(scheme)}"
        )
    if any(b <= a for a, b in zip([0.0] + times, times)):
        raise InvalidArgumentError("times must be positive and strictly increasing")
    intervals = [times[0]] + [b - a for a, b in zip(times, times[1:])]
    schedule = iteration_schedule(intervals)
    proj = projector_for(v0.shape)
    for j, state in enumerate(iter_damage_states(v0, params, schedule)):
        pixels = proj.project(state.data, scheme.angles_deg[j])
        np.clip(pixels, 0.0, None, out=pixels)
        yield Projection(
            pixels=pixels.astype(np.float32),
            angle_deg=scheme.angles_deg[j],
            chrono_index=j + 1,
            time=times[j],
        )
