import numpy as np
import pytest

from tiltstream.errors import InvalidArgumentError
from tiltstream.phantom import VoxelVolume, nanocage, shepp_logan_3d, _ELLIPSOIDS


def test_shepp_logan_range_and_corner():
    vol = shepp_logan_3d(64)
    assert vol.data.shape == (64, 64, 64)
    assert vol.data.min() == 0.0
    assert vol.data.max() == 1.0
    assert vol.data[0, 0, 0] == 0.0
    assert vol.data[-1, -1, -1] == 0.0


def test_shepp_logan_center_value_matches_ellipsoid_table():
    # independent oracle: sum the table intensities of ellipsoids whose
    # (un-rotated, centered) equation contains the origin
    expected = 0.0
    for amp, a, b, c, x0, y0, z0, phi, mirror in _ELLIPSOIDS:
        rad = np.deg2rad(phi)
        u = -x0 * np.cos(rad) + -y0 * np.sin(rad)
        w = x0 * np.sin(rad) + -y0 * np.cos(rad)
        if (u / a) ** 2 + (w / b) ** 2 + (z0 / c) ** 2 <= 1.0:
            expected += amp
            if mirror:
                expected += amp  # its mirror image also contains the origin
    assert expected == pytest.approx(0.2, abs=1e-12)
    for size in (17, 64):  # odd size has an exact center voxel
        vol = shepp_logan_3d(size)
        mid = (size - 1) // 2
        center = vol.data[mid, mid, mid]
        # peak value is the outer shell (intensity 1.0), so scaling is by 1
        assert center == pytest.approx(expected, abs=1e-6)


def test_shepp_logan_mirror_symmetry_exact():
    for size in (16, 33, 64):
        vol = shepp_logan_3d(size)
        assert np.array_equal(vol.data, np.flip(vol.data, axis=0))


def test_shepp_logan_size_validation():
    with pytest.raises(InvalidArgumentError):
        shepp_logan_3d(15)


def test_shepp_logan_deterministic():
    a = shepp_logan_3d(32)
    b = shepp_logan_3d(32)
    assert np.array_equal(a.data, b.data)


def test_nanocage_basic_structure():
    size = 64
    r_out, wall = 22.0, 5.0
    vol = nanocage(size, r_out, wall)
    data = vol.data
    assert set(np.unique(data)) <= {0.0, 1.0}
    mid = (size - 1) // 2
    assert data[mid, mid, mid] == 0.0  # cavity
    assert data[0, 0, 0] == 0.0  # exterior
    frac = np.count_nonzero(data) / data.size
    assert 0.0 < frac < 1.0

    # a voxel on a face diagonal at radius outer - wall/2 sits inside the wall
    d = (r_out - wall / 2.0) / np.sqrt(2.0)
    ix = int(round(mid + d))
    iy = int(round(mid + d))
    assert data[ix, iy, mid] == 1.0


def test_nanocage_openings_pierce_faces():
    size = 64
    vol = nanocage(size, 22.0, 5.0, opening_fraction=0.5)
    mid = (size - 1) // 2
    # the axis rays from the center exit through openings: all zero
    assert np.all(vol.data[:, mid, mid] == 0.0)
    assert np.all(vol.data[mid, :, mid] == 0.0)
    assert np.all(vol.data[mid, mid, :] == 0.0)
    # with no openings the same rays hit the wall
    closed = nanocage(size, 22.0, 5.0, opening_fraction=0.0)
    assert np.count_nonzero(closed.data[:, mid, mid]) > 0


def test_nanocage_validation():
    with pytest.raises(InvalidArgumentError):
        nanocage(64, 5.0, 6.0)  # wall thicker than radius
    with pytest.raises(InvalidArgumentError):
        nanocage(64, 40.0, 2.0)  # radius past half the grid
    with pytest.raises(InvalidArgumentError):
        nanocage(64, 22.0, 2.0, opening_fraction=1.5)


def test_nanocage_deterministic():
    a = nanocage(48, 16.0, 2.0)
    b = nanocage(48, 16.0, 2.0)
    assert np.array_equal(a.data, b.data)


def test_voxel_volume_validation():
    with pytest.raises(InvalidArgumentError):
        VoxelVolume(np.zeros((4, 4)))
    with pytest.raises(InvalidArgumentError):
        VoxelVolume(-np.ones((4, 4, 4)))
    with pytest.raises(InvalidArgumentError):
        VoxelVolume(np.ones((4, 4, 4)), voxel_size=0.0)
