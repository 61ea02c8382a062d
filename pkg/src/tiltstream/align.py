"""Projection alignment: particle masking and translational registration.

Registration correlates the dominant particle only: each image is reduced to
its largest Otsu-segmented connected component before the frequency-domain
cross-correlation, which suppresses background clutter. Chronological mode
registers each projection to its predecessor (the streaming case);
nearest-angle mode registers to the already-processed projection closest in
tilt angle, which avoids correlating views separated by large golden-ratio
jumps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateDataError, InvalidArgumentError
from .projector import Projection, TiltSeries
from .recon import otsu_threshold

MODES = ("chronological", "nearest_angle")


def mask_largest_particle(image) -> np.ndarray:
    """Binary mask of the largest 8-connected above-threshold component."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"expected 2D image, got {arr.ndim}D")
    binary = arr > otsu_threshold(arr)  # raises on constant input
    labels, count = ndimage.label(binary, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        raise DegenerateDataError("no foreground component found")
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def shift_image(image, shift) -> np.ndarray:
    """Translate by (dy, dx) pixels with zero fill; bilinear when fractional."""
    dy, dx = float(shift[0]), float(shift[1])
    if dy == int(dy) and dx == int(dx):
        out = np.zeros_like(image)
        h, w = image.shape
        dy, dx = int(dy), int(dx)
        ys = slice(max(dy, 0), min(h + dy, h))
        xs = slice(max(dx, 0), min(w + dx, w))
        ys_src = slice(max(-dy, 0), min(h - dy, h))
        xs_src = slice(max(-dx, 0), min(w - dx, w))
        out[ys, xs] = image[ys_src, xs_src]
        return out
    return ndimage.shift(np.asarray(image, dtype=np.float64), (dy, dx),
                         order=1, mode="constant", cval=0.0)


def _masked_zero_mean(image, mask_particle: bool) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if mask_particle:
        arr = arr * mask_largest_particle(arr)
    if np.all(arr == arr.flat[0]):
        raise DegenerateDataError("image constant after masking")
    return arr - arr.mean()


def _parabolic_offset(left: float, center: float, right: float) -> float:
    denom = left - 2.0 * center + right
    if denom >= 0.0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def align_translation(image, reference, mask_particle: bool = True,
                      subpixel: bool = False):
    """Shift (dy, dx) to apply to `image` so it matches `reference`.

    Correlation is computed in the frequency domain over zero-padded frames,
    so content translated into the frame never wraps around. Integer-pixel
    by default; `subpixel` adds a parabolic refinement of the peak.
    """
    img = np.asarray(image, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if img.shape != ref.shape:
        raise InvalidArgumentError(f"shape mismatch {img.shape} vs {ref.shape}")
    a = _masked_zero_mean(img, mask_particle)
    b = _masked_zero_mean(ref, mask_particle)
    padded = tuple(2 * s for s in a.shape)
    corr = np.fft.irfft2(
        np.conj(np.fft.rfft2(a, s=padded)) * np.fft.rfft2(b, s=padded), s=padded
    )
    peak = np.unravel_index(int(np.argmax(corr)), corr.shape)
    shift = []
    for axis, idx in enumerate(peak):
        size = padded[axis]
        signed = idx - size if idx > size // 2 else idx
        if subpixel:
            before = corr[tuple(np.subtract(peak, np.eye(2, dtype=int)[axis]) % size)]
            after = corr[tuple(np.add(peak, np.eye(2, dtype=int)[axis]) % size)]
            signed = signed + _parabolic_offset(before, corr[peak], after)
        shift.append(float(signed))
    return (shift[0], shift[1])


@dataclass(frozen=True)
class AlignmentResult:
    """Per-projection shifts plus which projection each was registered to."""

    shifts: tuple          # (dy, dx) per projection, chronological order
    mode: str
    reference_map: tuple   # index registered against; None for the first

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if len(self.shifts) != len(self.reference_map):
            raise InvalidArgumentError("shifts and reference_map length mismatch")
        for k, ref in enumerate(self.reference_map):
            if ref is not None and not 0 <= ref < k:
                raise InvalidArgumentError(
                    f"projection {k} registered to non-earlier index {ref}"
                )
        if not all(np.isfinite(s) for pair in self.shifts for s in pair):
            raise InvalidArgumentError("non-finite shift")

    def rows(self, series: TiltSeries):
        """(chrono_index, angle_deg, dy, dx, reference_index) per projection."""
        for p, (dy, dx), ref in zip(series.projections, self.shifts, self.reference_map):
            yield (p.chrono_index, p.angle_deg, dy, dx, -1 if ref is None else ref)


def _nearest_processed(angles, k: int) -> int:
    gaps = [abs(angles[k] - angles[j]) for j in range(k)]
    return int(np.argmin(gaps))


def align_series(series: TiltSeries, mode: str = "nearest_angle",
                 subpixel: bool = False):
    """Register every projection and return (AlignmentResult, aligned series).

    Shifts are cumulative: each raw projection is registered against an
    already-aligned reference, so the recovered shift places it directly in
    the common frame of the first projection.
    """
    if mode not in MODES:
        raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    if len(series) < 2:
        raise InvalidArgumentError("alignment needs at least 2 projections")
    angles = list(series.angles_deg)
    aligned_pixels = [np.asarray(series.projections[0].pixels, dtype=np.float64)]
    shifts = [(0.0, 0.0)]
    reference_map = [None]
    for k in range(1, len(series)):
        ref_idx = k - 1 if mode == "chronological" else _nearest_processed(angles, k)
        shift = align_translation(
            series.projections[k].pixels, aligned_pixels[ref_idx], subpixel=subpixel
        )
        shifts.append(shift)
        reference_map.append(ref_idx)
        aligned_pixels.append(
            shift_image(np.asarray(series.projections[k].pixels, dtype=np.float64), shift)
        )
    result = AlignmentResult(tuple(shifts), mode, tuple(reference_map))
    aligned = TiltSeries(
        projections=[
            Projection(
                pixels=np.maximum(pix, 0.0).astype(np.float32),
                angle_deg=p.angle_deg,
                chrono_index=p.chrono_index,
                time=p.time,
            )
            for p, pix in zip(series.projections, aligned_pixels)
        ],
        scheme=series.scheme,
    )
    return result, aligned
