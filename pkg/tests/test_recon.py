"""Slice FBP, streaming updates, EM reconstruction, and Otsu thresholding."""

import numpy as np
import pytest

from tiltstream import (
    DamageParams,
    DegenerateDataError,
    InvalidArgumentError,
    OrthosliceStream,
    Projection,
    SliceSpec,
    TiltSeries,
    VoxelVolume,
    em_reconstruct,
    fbp_slice,
    grs_angles,
    is_angles,
    nanocage,
    otsu_threshold,
    ramp_filter,
    simulate_acquisition,
)
from tiltstream.metrics import shape_error
from tiltstream.phantom import _centered_coords

NO_DAMAGE = DamageParams(0.0, 0.0)


def cylinder_volume(size, radius, y_lo=8, y_hi=56):
    """Uniform disk in every xz plane of a y-band (a pillar along the tilt axis)."""
    x = _centered_coords(size)
    xs, zs = np.meshgrid(x, x, indexing="ij")
    disk = (xs**2 + zs**2 <= radius**2).astype(np.float32)
    data = np.zeros((size, size, size), dtype=np.float32)
    data[:, y_lo:y_hi, :] = disk[:, None, :]
    return VoxelVolume(data), disk > 0


def series_from_images(images, angles):
    projections = [
        Projection(pixels=np.asarray(img, dtype=np.float32), angle_deg=a, chrono_index=i + 1, time=float(i + 1))
        for i, (img, a) in enumerate(zip(images, angles))
    ]
    return TiltSeries(projections=projections, scheme=grs_angles(len(projections)))


def dense_fbp_oracle(sinogram, angles_deg, size):
    """Textbook 2D filtered backprojection (per-angle 1D interpolation)."""
    n_angles, nu = sinogram.shape
    pad = max(64, int(2 ** np.ceil(np.log2(2 * nu))))
    ramp = 2.0 * np.fft.rfftfreq(pad)
    coords = np.arange(size) - (size - 1) / 2.0
    px, pz = np.meshgrid(coords, coords, indexing="ij")
    out = np.zeros((size, size))
    for row, angle in zip(sinogram, angles_deg):
        filtered = np.fft.irfft(np.fft.rfft(row, n=pad) * ramp, n=pad)[:nu]
        theta = np.deg2rad(angle)
        u = px * np.cos(theta) + pz * np.sin(theta) + (nu - 1) / 2.0
        out += np.interp(u, np.arange(nu), filtered, left=0.0, right=0.0)
    return out * np.pi / (2.0 * n_angles)


class TestFbpSlice:
    def test_zero_series_gives_zero_slice(self):
        images = [np.zeros((16, 16))] * 4
        series = series_from_images(images, [0.0, 10.0, -20.0, 45.0])
        sl = fbp_slice(series, 4, SliceSpec("xz"))
        assert sl.shape == (16, 16)
        assert np.all(sl == 0.0)

    def test_doubling_projections_doubles_slice(self):
        vol, _ = cylinder_volume(32, 10.0, 4, 28)
        series = simulate_acquisition(vol, grs_angles(9), NO_DAMAGE)
        doubled = series_from_images(
            [2.0 * p.pixels for p in series.projections], series.angles_deg
        )
        for plane in ("xy", "yz", "xz"):
            a = fbp_slice(series, 9, SliceSpec(plane))
            b = fbp_slice(doubled, 9, SliceSpec(plane))
            np.testing.assert_allclose(b, 2.0 * a, rtol=0, atol=1e-12)

    def test_disk_slice_matches_dense_reconstruction_oracle(self):
        vol, disk = cylinder_volume(64, 20.0)
        series = simulate_acquisition(vol, is_angles(2.0, 140.0), NO_DAMAGE)
        sl = fbp_slice(series, 71, SliceSpec("xz"))

        # row 31 and 32 straddle the volume center inside the uniform y-band
        sino = np.stack([p.pixels[31].astype(np.float64) for p in series.projections])
        oracle = dense_fbp_oracle(sino, series.angles_deg, 64)
        assert shape_error(oracle, sl) < 15.0

        # honest figure against the true disk: limited-range streaking keeps
        # this well above the oracle agreement but stable run to run
        assert shape_error(disk, sl) < 21.0

    def test_first_n_bounds(self):
        vol, _ = cylinder_volume(32, 8.0, 4, 28)
        series = simulate_acquisition(vol, grs_angles(5), NO_DAMAGE)
        with pytest.raises(InvalidArgumentError):
            fbp_slice(series, 0, SliceSpec("xy"))
        with pytest.raises(InvalidArgumentError):
            fbp_slice(series, 6, SliceSpec("xy"))

    def test_offset_out_of_bounds_rejected(self):
        vol, _ = cylinder_volume(32, 8.0, 4, 28)
        series = simulate_acquisition(vol, grs_angles(3), NO_DAMAGE)
        with pytest.raises(InvalidArgumentError):
            fbp_slice(series, 3, SliceSpec("xz", offset=40.0))

    def test_bad_plane_rejected(self):
        with pytest.raises(InvalidArgumentError):
            SliceSpec("zz")


class TestRampFilter:
    def test_preserves_shape_and_is_linear(self):
        rng = np.random.default_rng(5)
        a = rng.random((7, 33))
        b = rng.random((7, 33))
        fa = ramp_filter(a)
        assert fa.shape == a.shape
        np.testing.assert_allclose(
            ramp_filter(a + b), fa + ramp_filter(b), atol=1e-12
        )

    def test_impulse_response_symmetric_with_central_peak(self):
        row = np.zeros((1, 33))
        row[0, 16] = 1.0
        out = ramp_filter(row)[0]
        np.testing.assert_allclose(out, out[::-1], atol=1e-12)
        assert out[16] == np.abs(out).max()
        assert out[15] < 0.0 and out[17] < 0.0


class TestOrthosliceStream:
    def test_first_emission_equals_batch_base_case(self):
        vol, _ = cylinder_volume(32, 9.0, 4, 28)
        series = simulate_acquisition(vol, grs_angles(3), NO_DAMAGE)
        stream = OrthosliceStream(series.detector_shape)
        out = stream.add_projection(series.projections[0].pixels, series.projections[0].angle_deg)
        assert out.n_projections == 1
        np.testing.assert_allclose(
            out.slices["xz"], fbp_slice(series, 1, SliceSpec("xz")), atol=1e-12
        )

    def test_incremental_matches_batch_every_n(self):
        vol, _ = cylinder_volume(32, 9.0, 4, 28)
        series = simulate_acquisition(vol, grs_angles(12), NO_DAMAGE)
        stream = OrthosliceStream(series.detector_shape)
        for k, p in enumerate(series.projections, start=1):
            out = stream.add_projection(p.pixels, p.angle_deg)
            for plane in ("xy", "yz", "xz"):
                batch = fbp_slice(series, k, SliceSpec(plane))
                scale = np.abs(batch).max() or 1.0
                assert np.abs(out.slices[plane] - batch).max() / scale < 1e-5

    def test_reorient_flags_restart_and_matches_batch(self):
        vol, _ = cylinder_volume(32, 9.0, 4, 28)
        series = simulate_acquisition(vol, grs_angles(8), NO_DAMAGE)
        stream = OrthosliceStream(series.detector_shape)
        for p in series.projections[:5]:
            out = stream.add_projection(p.pixels, p.angle_deg)
        assert not out.restart

        rotated = (SliceSpec("xy"), SliceSpec("yz"), SliceSpec("xz", rotation_deg=45.0))
        out = stream.reorient(rotated)
        assert out.restart
        assert out.n_projections == 5
        batch = fbp_slice(series, 5, SliceSpec("xz", rotation_deg=45.0))
        np.testing.assert_allclose(out.slices["xz"], batch, atol=1e-9)

        after = stream.add_projection(series.projections[5].pixels, series.projections[5].angle_deg)
        assert after.n_projections == 6
        assert not after.restart

    def test_specs_must_cover_all_planes(self):
        with pytest.raises(InvalidArgumentError):
            OrthosliceStream((16, 16), (SliceSpec("xy"), SliceSpec("xy"), SliceSpec("xz")))

    def test_concatenated_is_double_precision(self):
        stream = OrthosliceStream((16, 16))
        out = stream.add_projection(np.ones((16, 16), dtype=np.float32), 0.0)
        vec = out.concatenated()
        assert vec.dtype == np.float64
        assert vec.size == 3 * 16 * 16


class TestEmReconstruct:
    def test_output_non_negative(self):
        vol, _ = cylinder_volume(32, 9.0, 4, 28)
        series = simulate_acquisition(vol, grs_angles(9), NO_DAMAGE)
        rec = em_reconstruct(series, 9, iterations=5)
        assert rec.data.min() >= 0.0

    def test_all_zero_data_gives_zero_volume(self):
        images = [np.zeros((16, 16))] * 3
        series = series_from_images(images, [0.0, 30.0, -30.0])
        rec = em_reconstruct(series, 3, iterations=5)
        assert np.all(rec.data == 0.0)

    def test_uniform_disk_mass_conserved(self):
        vol, _ = cylinder_volume(64, 20.0)
        series = simulate_acquisition(vol, is_angles(2.0, 140.0), NO_DAMAGE)
        rec = em_reconstruct(series, 71, iterations=30)
        ratio = float(rec.data.sum()) / float(vol.data.sum())
        assert abs(ratio - 1.0) < 0.01

    def test_iteration_and_bounds_validation(self):
        vol, _ = cylinder_volume(32, 9.0, 4, 28)
        series = simulate_acquisition(vol, grs_angles(3), NO_DAMAGE)
        with pytest.raises(InvalidArgumentError):
            em_reconstruct(series, 3, iterations=0)
        with pytest.raises(InvalidArgumentError):
            em_reconstruct(series, 4, iterations=5)

    def test_shape_error_non_increasing_with_denser_increments(self):
        # complete constant-increment series at the census counts; the
        # reconstruction should only improve (within a point) as the
        # increment shrinks from 70 degrees to 2 degrees
        cage = nanocage(
            64, outer_radius=22.0, wall_thickness=8.0,
            opening_fraction=0.35, shell_exponent=2.0,
        )
        errors = []
        for increment in (70.0, 35.0, 14.0, 10.0, 7.0, 5.0, 2.0):
            series = simulate_acquisition(cage, is_angles(increment, 140.0), NO_DAMAGE)
            rec = em_reconstruct(series, len(series), iterations=30)
            errors.append(shape_error(cage.data, rec.data))
        for earlier, later in zip(errors, errors[1:]):
            assert later <= earlier + 1.0, f"errors grew: {errors}"


class TestOtsuThreshold:
    def test_two_value_image(self):
        img = np.zeros((8, 8))
        img[:, 4:] = 1.0
        tau = otsu_threshold(img)
        assert 0.0 < tau < 1.0

    def test_matches_brute_force_search(self):
        rng = np.random.default_rng(11)
        data = np.concatenate([
            rng.normal(1.0, 0.4, size=4000),
            rng.normal(5.0, 0.7, size=2500),
        ])
        counts, edges = np.histogram(data, bins=256, range=(data.min(), data.max()))
        centers = (edges[:-1] + edges[1:]) / 2.0
        best, best_tau = -1.0, None
        for k in range(255):
            w0 = counts[: k + 1].sum()
            w1 = counts[k + 1:].sum()
            if w0 == 0 or w1 == 0:
                continue
            mu0 = (counts[: k + 1] * centers[: k + 1]).sum() / w0
            mu1 = (counts[k + 1:] * centers[k + 1:]).sum() / w1
            var = w0 * w1 * (mu0 - mu1) ** 2
            if var > best:
                best, best_tau = var, centers[k]
        assert otsu_threshold(data) == pytest.approx(best_tau, abs=1e-12)

    def test_affine_equivariance(self):
        rng = np.random.default_rng(3)
        data = np.concatenate([rng.normal(0, 1, 3000), rng.normal(6, 1, 3000)])
        tau = otsu_threshold(data)
        bin_width = (data.max() - data.min()) / 256
        mapped = otsu_threshold(2.5 * data + 7.0)
        assert abs(mapped - (2.5 * tau + 7.0)) <= 2.5 * bin_width

    def test_constant_input_rejected(self):
        with pytest.raises(DegenerateDataError):
            otsu_threshold(np.full((4, 4), 3.3))

    def test_separates_bimodal_classes(self):
        img = np.concatenate([np.full(500, 0.2), np.full(300, 0.9)])
        tau = otsu_threshold(img)
        assert 0.2 < tau < 0.9
