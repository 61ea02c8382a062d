"""Ground-truth voxel phantoms.

Provides the reference volumes used both as damage-free ground truth and as
initial volumes for the beam-damage simulation: a 3D ellipsoid-sum head
phantom and a binary hollow "nanocage" (rounded cube shell with circular
openings on its faces).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class VoxelVolume:
    """A non-negative scalar volume on a regular voxel grid.

    ``data`` is indexed as [x, y, z]; the tilt axis used throughout the
    package is y.
    """

    data: np.ndarray
    voxel_size: float = 1.0

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or any(s < 1 for s in self.data.shape):
            raise InvalidArgumentError(f"volume must be 3D, got shape {self.data.shape}")
        if self.voxel_size <= 0:
            raise InvalidArgumentError(f"voxel_size must be > 0, got {self.voxel_size}")
        if np.min(self.data) < 0:
            raise InvalidArgumentError("volume values must be non-negative")

    @property
    def shape(self):
        return self.data.shape


def _centered_coords(n: int) -> np.ndarray:
    # (i - (n-1)/2) is exactly antisymmetric under i -> n-1-i, which keeps
    # mirror-symmetry tests exact in floating point
    return np.arange(n, dtype=np.float64) - (n - 1) / 2.0


# Ellipsoid table (intensity, semi-axes a/b/c, center x0/y0/z0, rotation about
# z in degrees).  Entries flagged mirror=True are added together with their
# exact x-mirror image so the phantom is symmetric about the x=center plane.
#                 A      a       b      c      x0     y0      z0    phi  mirror
_ELLIPSOIDS = [
    (1.0,  0.69,   0.92,  0.81,  0.0,   0.0,    0.0,    0.0, False),
    (-0.8, 0.6624, 0.874, 0.78,  0.0,  -0.0184, 0.0,    0.0, False),
    (-0.2, 0.11,   0.31,  0.22,  0.22,  0.0,    0.0,  -18.0, True),
    (0.1,  0.21,   0.25,  0.41,  0.0,   0.35,  -0.15,   0.0, False),
    (0.1,  0.046,  0.046, 0.05,  0.0,   0.1,    0.25,   0.0, False),
    (0.1,  0.046,  0.046, 0.05,  0.0,  -0.1,    0.25,   0.0, False),
    (0.1,  0.046,  0.023, 0.05, -0.08, -0.605,  0.0,    0.0, True),
    (0.1,  0.023,  0.023, 0.2,   0.0,  -0.606,  0.0,    0.0, False),
]


def shepp_logan_3d(size: int) -> VoxelVolume:
    """3D ellipsoid-sum head phantom, scaled to [0, 1].

    Parameters
    ----------
    size : int
        Edge length in voxels, >= 16. The phantom is centered and mirror
        symmetric about the x = center plane.
    """
    if size < 16:
        raise InvalidArgumentError(f"size must be >= 16, got {size}")
    c = _centered_coords(size) / ((size - 1) / 2.0)  # normalized [-1, 1]
    x = c[:, None, None]
    y = c[None, :, None]
    z = c[None, None, :]
    vol = np.zeros((size, size, size), dtype=np.float64)
    for amp, a, b, cc, x0, y0, z0, phi, mirror in _ELLIPSOIDS:
        rad = np.deg2rad(phi)
        cphi, sphi = np.cos(rad), np.sin(rad)
        dx, dy, dz = x - x0, y - y0, z - z0
        u = dx * cphi + dy * sphi
        w = -dx * sphi + dy * cphi
        inside = (u / a) ** 2 + (w / b) ** 2 + (dz / cc) ** 2 <= 1.0
        term = amp * inside
        vol += term
        if mirror:
            # exact mirror image about the x=center plane
            vol += np.flip(term, axis=0)
    np.clip(vol, 0.0, None, out=vol)
    peak = vol.max()
    if peak > 0:
        vol /= peak
    return VoxelVolume(vol.astype(np.float32))


def nanocage(
    size: int,
    outer_radius: float | None = None,
    wall_thickness: float = 2.0,
    opening_fraction: float = 0.5,
    shell_exponent: float = 2.5,
) -> VoxelVolume:
    """Binary hollow cage: rounded-cube shell with circular face openings.

    The shell is the set of voxels whose p-norx radius (p = shell_exponent)
    lies in (outer_radius - wall_thickness, outer_radius]; a circular opening
    of radius ``opening_fraction * outer_radius`` is cut through each of the
    six faces (one cylinder per axis).

    Parameters
    ----------
    size : int
        Edge length in voxels.
    outer_radius : float
        Outer shell radius in voxels; must satisfy
        wall_thickness < outer_radius < size/2. Defaults to 11*size/32.
    wall_thickness : float
        Shell thickness in voxels.
    opening_fraction : float
        Face-opening radius as a fraction of outer_radius, in [0, 1).
    shell_exponent : float
        p-norm exponent shaping the shell (2 = sphere, larger = more cubic).
    """
    if outer_radius is None:
        outer_radius = 11.0 * size / 32.0
    if not 0 < wall_thickness < outer_radius:
        raise InvalidArgumentError(
            f"need 0 < wall_thickness < outer_radius, got {wall_thickness}, {outer_radius}"
        )
    if not outer_radius < size / 2.0:
        raise InvalidArgumentError(
            f"outer_radius must be < size/2, got {outer_radius} vs {size / 2.0}"
        )
    if not 0.0 <= opening_fraction < 1.0:
        raise InvalidArgumentError(f"opening_fraction must be in [0, 1), got {opening_fraction}")
    if shell_exponent < 2.0:
        raise InvalidArgumentError(f"shell_exponent must be >= 2, got {shell_exponent}")

    c = _centered_coords(size)
    x = np.abs(c)[:, None, None]
    y = np.abs(c)[None, :, None]
    z = np.abs(c)[None, None, :]
    p = shell_exponent
    radius = (x**p + y**p + z**p) ** (1.0 / p)
    shell = (radius <= outer_radius) & (radius > outer_radius - wall_thickness)

    r_open = opening_fraction * outer_radius
    if r_open > 0:
        open_x = y**2 + z**2 < r_open**2
        open_y = x**2 + z**2 < r_open**2
        open_z = x**2 + y**2 < r_open**2
        shell &= ~(open_x | open_y | open_z)
    return VoxelVolume(shell.astype(np.float32))
