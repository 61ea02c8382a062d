"""Tilt-scheme generation and acquisition geometry.

Two tilt schemes are provided: golden-ratio scanning (GRS), which places
projection i at ``(i * range * phi) mod range - range/2`` with phi the golden
ratio, and incremental scanning (IS), which sweeps equally spaced angles from
``-range/2`` to ``+range/2`` inclusive.  Angles are stored in degrees, in
chronological acquisition order.

The projection geometry is parallel-beam with a fixed tilt axis along the
volume's y axis: detector rows index y, detector columns index the in-plane
coordinate perpendicular to the tilt axis, and a positive tilt angle rotates
the volume counterclockwise when viewed along +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidArgumentError, ParseError

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0

ANGLE_KINDS = ("GRS", "IS")


@dataclass(frozen=True)
class TiltScheme:
    """An ordered tilt-angle sequence.

    Attributes
    ----------
    kind : str
        "GRS" or "IS".
    annular_range_deg : float
        Total angular range covered by the scheme, in degrees.
    angles_deg : tuple of float
        Tilt angles in chronological acquisition order.
    indices : tuple of int
        1-based acquisition indices, always ``1..len(angles_deg)``.
    increment_deg : float or None
        Angular step for IS schemes; None for GRS.
    """

    kind: str
    annular_range_deg: float
    angles_deg: tuple = field(default=())
    indices: tuple = field(default=())
    increment_deg: float | None = None

    def __post_init__(self):
        if self.kind not in ANGLE_KINDS:
            raise InvalidArgumentError(f"unknown scheme kind {self.kind!r}")
        if not 0.0 < self.annular_range_deg <= 180.0:
            raise InvalidArgumentError(
                f"annular_range_deg must be in (0, 180], got {self.annular_range_deg}"
            )
        n = len(self.angles_deg)
        if n == 0:
            raise InvalidArgumentError("scheme has no angles")
        if tuple(self.indices) != tuple(range(1, n + 1)):
            raise InvalidArgumentError("indices must be 1..n in order")
        half = self.annular_range_deg / 2.0
        for a in self.angles_deg:
            if not -half <= a <= half:
                raise InvalidArgumentError(
                    f"angle {a} outside [-{half}, {half}]"
                )

    def __len__(self):
        return len(self.angles_deg)

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "annular_range_deg": self.annular_range_deg,
            "angles_deg": list(self.angles_deg),
            "indices": list(self.indices),
        }
        if self.increment_deg is not None:
            d["increment_deg"] = self.increment_deg
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TiltScheme":
        try:
            return cls(
                kind=d["kind"],
                annular_range_deg=float(d["annular_range_deg"]),
                angles_deg=tuple(float(a) for a in d["angles_deg"]),
                indices=tuple(int(i) for i in d["indices"]),
                increment_deg=(
                    float(d["increment_deg"]) if "increment_deg" in d else None
                ),
            )
        except KeyError as e:
            raise ParseError(f"scheme record missing field {e.args[0]!r}") from e


def grs_angles(n: int, annular_range_deg: float = 140.0) -> TiltScheme:
    """Golden-ratio tilt angles for ``n`` projections.

    Projection i (1-based) is placed at
    ``(i * range * phi) mod range - range/2`` with a non-negative modulo,
    so successive angles jump across the annular range and the union of
    collected angles fills it quasi-uniformly at every prefix length.

    Parameters
    ----------
    n : int
        Number of projections, >= 1.
    annular_range_deg : float
        Total tilt range in degrees, in (0, 180].
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    if not 0.0 < annular_range_deg <= 180.0:
        raise InvalidArgumentError(
            f"annular_range_deg must be in (0, 180], got {annular_range_deg}"
        )
    r = float(annular_range_deg)
    half = r / 2.0
    angles = tuple(math.fmod(i * r * GOLDEN_RATIO, r) - half for i in range(1, n + 1))
    return TiltScheme(
        kind="GRS",
        annular_range_deg=r,
        angles_deg=angles,
        indices=tuple(range(1, n + 1)),
    )


def is_angles(increment_deg: float, annular_range_deg: float = 140.0) -> TiltScheme:
    """Incremental (equally spaced) tilt angles.

    Angles run from ``-range/2`` to ``+range/2`` inclusive in steps of
    ``increment_deg``; the increment must divide the range exactly, giving
    ``range / increment + 1`` projections in ascending chronological order.
    """
    if increment_deg <= 0:
        raise InvalidArgumentError(f"increment_deg must be > 0, got {increment_deg}")
    if not 0.0 < annular_range_deg <= 180.0:
        raise InvalidArgumentError(
            f"annular_range_deg must be in (0, 180], got {annular_range_deg}"
        )
    steps = annular_range_deg / increment_deg
    k = round(steps)
    if k < 1 or abs(steps - k) > 1e-9:
        raise InvalidArgumentError(
            f"increment {increment_deg} does not divide range {annular_range_deg}"
        )
    half = annular_range_deg / 2.0
    # linspace-style endpoints so coverage is exactly the annular range
    angles = tuple(
        (-half if i == 0 else (half if i == k else -half + i * increment_deg))
        for i in range(k + 1)
    )
    return TiltScheme(
        kind="IS",
        annular_range_deg=float(annular_range_deg),
        angles_deg=angles,
        indices=tuple(range(1, k + 2)),
        increment_deg=float(increment_deg),
    )


def angular_coverage(scheme: TiltScheme, first_n: int | None = None) -> float:
    """Spread (max - min, degrees) of the first ``first_n`` angles.

    Monotonically non-decreasing in ``first_n`` and bounded by the scheme's
    annular range.
    """
    if first_n is None:
        first_n = len(scheme)
    if not 1 <= first_n <= len(scheme):
        raise InvalidArgumentError(
            f"first_n must be in [1, {len(scheme)}], got {first_n}"
        )
    prefix = scheme.angles_deg[:first_n]
    return max(prefix) - min(prefix)


@dataclass(frozen=True)
class ProjectionGeometry:
    """Parallel-beam geometry binding a volume to its detector.

    The tilt axis is the volume's y axis; detector rows index y (one sinogram
    row per tilt-axis coordinate), so ``detector_shape[0]`` must equal the
    volume's ny.  A positive angle rotates the volume counterclockwise when
    viewed along +y.
    """

    volume_shape: tuple  # (nx, ny, nz)
    detector_shape: tuple  # (rows, cols)
    tilt_axis: str = "y"

    def __post_init__(self):
        if self.tilt_axis != "y":
            raise InvalidArgumentError("tilt axis is fixed to 'y'")
        if len(self.volume_shape) != 3 or any(s < 1 for s in self.volume_shape):
            raise InvalidArgumentError(f"bad volume_shape {self.volume_shape}")
        if len(self.detector_shape) != 2 or any(s < 1 for s in self.detector_shape):
            raise InvalidArgumentError(f"bad detector_shape {self.detector_shape}")
        if self.detector_shape[0] != self.volume_shape[1]:
            raise InvalidArgumentError(
                "detector rows must equal volume ny "
                f"({self.detector_shape[0]} != {self.volume_shape[1]})"
            )
