"""Reconstruction: streaming orthoslice FBP, batch EM, Otsu binarization.

The streaming path ramp-filters each incoming projection once and adds its
backprojected contribution onto three orthoslice pixel grids only (never the
full volume), rescaling the normalization from N-1 to N; this makes the
per-projection update cost independent of volume depth while staying exactly
equal to a batch filtered backprojection restricted to the same slices.

The EM reconstruction is the multiplicative update
``v <- v * BP(p / FP(v)) / BP(1)`` using the projector's exact
forward/backprojection transpose pair, so the shared geometry contract
between acquisition and reconstruction is structural.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidArgumentError
from .phantom import VoxelVolume
from .projector import TiltSeries, projector_for

PLANES = ("xy", "yz", "xz")


@dataclass(frozen=True)
class SliceSpec:
    """One orthoslice: base plane, offset along its normal, in-plane rotation.

    ``offset`` is in voxels from the volume center; ``rotation_deg`` rotates
    the slice plane about the tilt axis (y), which is the remedy used when a
    feature lies parallel to the default planes.
    """

    plane: str
    offset: float = 0.0
    rotation_deg: float = 0.0

    def __post_init__(self):
        if self.plane not in PLANES:
            raise InvalidArgumentError(f"plane must be one of {PLANES}, got {self.plane!r}")

    def to_dict(self) -> dict:
        return {
            "plane": self.plane,
            "offset": self.offset,
            "rotation_deg": self.rotation_deg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SliceSpec":
        return cls(
            plane=d["plane"],
            offset=float(d.get("offset", 0.0)),
            rotation_deg=float(d.get("rotation_deg", 0.0)),
        )


DEFAULT_SLICE_SPECS = (SliceSpec("xy"), SliceSpec("yz"), SliceSpec("xz"))


def validate_slice_specs(specs) -> tuple:
    specs = tuple(specs)
    if len(specs) != 3 or sorted(s.plane for s in specs) != sorted(PLANES):
        raise InvalidArgumentError("need exactly three slice specs, one per plane")
    return specs


@dataclass
class OrthosliceSet:
    """The three orthoslices reconstructed from the first N projections."""

    slices: dict
    n_projections: int
    slice_specs: tuple
    restart: bool = False

    def concatenated(self) -> np.ndarray:
        """All slice pixels as one double-precision vector (metric input)."""
        return np.concatenate(
            [np.asarray(self.slices[s.plane], dtype=np.float64).ravel()
             for s in self.slice_specs]
        )


def _padded_size(n: int) -> int:
    # zero-pad to the next power of two at least twice the row length, so the
    # frequency-domain ramp filter acts as a linear (not circular) convolution
    return max(64, int(2 ** np.ceil(np.log2(2 * n))))


def ramp_filter(pixels: np.ndarray) -> np.ndarray:
    """Ram-Lak filter each detector row (frequency domain, zero-padded)."""
    pixels = np.asarray(pixels, dtype=np.float64)
    n = pixels.shape[1]
    size = _padded_size(n)
    ramp = 2.0 * np.fft.rfftfreq(size)
    spectrum = np.fft.rfft(pixels, n=size, axis=1) * ramp
    return np.fft.irfft(spectrum, n=size, axis=1)[:, :n]


class _SliceGrid:
    """Precomputed 3D pixel positions of one slice (angle independent)."""

    def __init__(self, spec: SliceSpec, volume_shape):
        nx, ny, nz = volume_shape
        cx, cy, cz = (nx - 1) / 2.0, (ny - 1) / 2.0, (nz - 1) / 2.0
        bounds = {"xy": cz, "yz": cx, "xz": cy}[spec.plane]
        if abs(spec.offset) > bounds:
            raise InvalidArgumentError(
                f"offset {spec.offset} outside volume for plane {spec.plane}"
            )
        phi = np.deg2rad(spec.rotation_deg)
        c, s = np.cos(phi), np.sin(phi)
        off = float(spec.offset)

        def rot(a, b):
            # rotate (in-plane, normal) coordinates about the tilt axis
            return a * c + b * s, -a * s + b * c

        if spec.plane == "xy":
            sx = (np.arange(nx) - cx)[:, None]
            iy = np.arange(ny)[None, :]
            px, pz = rot(sx, off)
            rows = np.broadcast_to(iy, (nx, ny)).astype(np.float64)
            self.shape = (nx, ny)
        elif spec.plane == "yz":
            iy = np.arange(ny)[:, None]
            sz = (np.arange(nz) - cz)[None, :]
            px, pz = rot(off, sz)
            rows = np.broadcast_to(iy, (ny, nz)).astype(np.float64)
            self.shape = (ny, nz)
        else:  # xz
            s1 = (np.arange(nx) - cx)[:, None]
            s2 = (np.arange(nz) - cz)[None, :]
            px, pz = rot(s1, s2)
            rows = np.full((nx, nz), cy + off, dtype=np.float64)
            self.shape = (nx, nz)
        self.px = np.broadcast_to(px, self.shape).ravel()
        self.pz = np.broadcast_to(pz, self.shape).ravel()
        self.rows = rows.ravel()

    def backproject(self, filtered: np.ndarray, angle_deg: float) -> np.ndarray:
        """Bilinear sample of one filtered projection at this slice's pixels."""
        ny, nu = filtered.shape
        theta = np.deg2rad(angle_deg)
        u = self.px * np.cos(theta) + self.pz * np.sin(theta) + (nu - 1) / 2.0
        r = self.rows
        out = np.zeros(self.px.shape, dtype=np.float64)
        r0 = np.floor(r)
        u0 = np.floor(u)
        fr = r - r0
        fu = u - u0
        for dr, du, w in (
            (0, 0, (1 - fr) * (1 - fu)),
            (1, 0, fr * (1 - fu)),
            (0, 1, (1 - fr) * fu),
            (1, 1, fr * fu),
        ):
            rr = r0 + dr
            uu = u0 + du
            ok = (rr >= 0) & (rr < ny) & (uu >= 0) & (uu < nu) & (w > 0)
            if np.any(ok):
                out[ok] += w[ok] * filtered[rr[ok].astype(np.intp), uu[ok].astype(np.intp)]
        return out.reshape(self.shape)


def _volume_shape_for(detector_shape) -> tuple:
    # cubic in the rotation plane: nx = nz = detector cols, ny = detector rows
    rows, cols = detector_shape
    return (cols, rows, cols)


def fbp_slice(series: TiltSeries, first_n: int, spec: SliceSpec) -> np.ndarray:
    """Filtered backprojection of the first N projections onto one slice."""
    if not 1 <= first_n <= len(series):
        raise InvalidArgumentError(
            f"first_n must be in [1, {len(series)}], got {first_n}"
        )
    grid = _SliceGrid(spec, _volume_shape_for(series.detector_shape))
    acc = np.zeros(grid.shape, dtype=np.float64)
    for p in series.projections[:first_n]:
        acc += grid.backproject(ramp_filter(p.pixels), p.angle_deg)
    return acc * (np.pi / (2.0 * first_n))


class OrthosliceStream:
    """Incrementally maintained orthoslices over a growing projection set.

    ``add_projection`` filters the new projection once and adds its slice
    contributions; ``reorient`` swaps the slice specs, recomputes from the
    retained filtered projections, and flags the next emitted set as a
    restart (consumers must reset their metric history).
    """

    def __init__(self, detector_shape, specs=DEFAULT_SLICE_SPECS):
        self.detector_shape = tuple(detector_shape)
        self._volume_shape = _volume_shape_for(self.detector_shape)
        self.specs = validate_slice_specs(specs)
        self._grids = {s.plane: _SliceGrid(s, self._volume_shape) for s in self.specs}
        self._acc = {s.plane: np.zeros(self._grids[s.plane].shape) for s in self.specs}
        self._filtered = []
        self._angles = []

    @property
    def n(self) -> int:
        return len(self._filtered)

    def _emit(self, restart: bool = False) -> OrthosliceSet:
        scale = np.pi / (2.0 * self.n) if self.n else 0.0
        return OrthosliceSet(
            slices={plane: acc * scale for plane, acc in self._acc.items()},
            n_projections=self.n,
            slice_specs=self.specs,
            restart=restart,
        )

    def add_projection(self, pixels: np.ndarray, angle_deg: float) -> OrthosliceSet:
        if tuple(pixels.shape) != self.detector_shape:
            raise InvalidArgumentError(
                f"projection shape {pixels.shape} != detector {self.detector_shape}"
            )
        filtered = ramp_filter(pixels)
        self._filtered.append(filtered)
        self._angles.append(float(angle_deg))
        for spec in self.specs:
            self._acc[spec.plane] += self._grids[spec.plane].backproject(
                filtered, angle_deg
            )
        return self._emit()

    def reorient(self, new_specs) -> OrthosliceSet:
        """Replace slice specs and rebuild the current set (history restart)."""
        self.specs = validate_slice_specs(new_specs)
        self._grids = {s.plane: _SliceGrid(s, self._volume_shape) for s in self.specs}
        self._acc = {s.plane: np.zeros(self._grids[s.plane].shape) for s in self.specs}
        for filtered, angle in zip(self._filtered, self._angles):
            for spec in self.specs:
                self._acc[spec.plane] += self._grids[spec.plane].backproject(
                    filtered, angle
                )
        return self._emit(restart=True)


def streaming_orthoslices(series: TiltSeries, specs=DEFAULT_SLICE_SPECS) -> OrthosliceSet:
    """Orthoslices for a whole series via the incremental stream."""
    stream = OrthosliceStream(series.detector_shape, specs)
    out = None
    for p in series.projections:
        out = stream.add_projection(p.pixels, p.angle_deg)
    return out


def em_reconstruct(series: TiltSeries, first_n: int | None = None,
                   iterations: int = 30) -> VoxelVolume:
    """Expectation-maximization reconstruction from the first N projections.

    Multiplicative updates ``v <- v * BP(p / FP(v)) / BP(1)`` from a uniform
    positive start; forward projections are floored at 1e-12 before division.
    All-zero input data yields the (degenerate) all-zero volume.
    """
    if first_n is None:
        first_n = len(series)
    if not 1 <= first_n <= len(series):
        raise InvalidArgumentError(
            f"first_n must be in [1, {len(series)}], got {first_n}"
        )
    if iterations < 1:
        raise InvalidArgumentError(f"iterations must be >= 1, got {iterations}")
    eps = 1e-12
    shape = _volume_shape_for(series.detector_shape)
    proj = projector_for(shape, series.detector_shape[1])
    chosen = series.projections[:first_n]
    data = np.stack([p.pixels.astype(np.float64) for p in chosen])
    if not np.any(data):
        return VoxelVolume(np.zeros(shape, dtype=np.float32))
    angles = [p.angle_deg for p in chosen]

    from scipy import sparse

    stack = sparse.vstack([proj.matrix(a) for a in angles]).tocsr()
    stack_t = stack.T.tocsr()
    nx, ny, nz = shape
    flat = data.transpose(0, 2, 1).reshape(-1, ny)  # (n*nu, ny)

    v = np.ones((nx * nz, ny), dtype=np.float64)
    weight = stack_t @ np.ones_like(flat)
    covered = weight > 0
    for _ in range(iterations):
        fp = stack @ v
        np.maximum(fp, eps, out=fp)
        correction = stack_t @ (flat / fp)
        v[covered] *= correction[covered] / weight[covered]
        v[~covered] = 0.0
    out = v.reshape(nx, nz, ny).transpose(0, 2, 1)
    return VoxelVolume(np.ascontiguousarray(out, dtype=np.float32))


def otsu_threshold(values) -> float:
    """Threshold maximizing between-class variance over a 256-bin histogram.

    The histogram spans [min, max] of the data; the returned threshold is the
    center of the highest-variance split's lower bin (binarize as x > t).
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DegenerateDataError("empty input")
    vmin = float(arr.min())
    vmax = float(arr.max())
    if vmin == vmax:
        raise DegenerateDataError("constant input has no threshold")
    counts, edges = np.histogram(arr, bins=256, range=(vmin, vmax))
    counts = counts.astype(np.float64)
    centers = (edges[:-1] + edges[1:]) / 2.0

    w0 = np.cumsum(counts)[:-1]
    w1 = counts.sum() - w0
    sum0 = np.cumsum(counts * centers)[:-1]
    mu0 = np.divide(sum0, w0, out=np.zeros_like(sum0), where=w0 > 0)
    mu1 = np.divide(counts @ centers - sum0, w1, out=np.zeros_like(sum0), where=w1 > 0)
    variance = w0 * w1 * (mu0 - mu1) ** 2
    return float(centers[int(np.argmax(variance))])


def binarize(values) -> np.ndarray:
    """Otsu-binarized copy of the input (True where above threshold)."""
    return np.asarray(values) > otsu_threshold(values)
