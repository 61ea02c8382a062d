"""Per-projection convergence/quality metrics and the stopping rule.

SROD (self-referential orthoslice difference) measures how much the
orthoslices changed when the latest projection arrived; SNR summarizes
slice quality as mean over standard deviation in dB. The stopping rule
recommends the projection count at the intersection of SROD convergence
and SNR decline: a sustained SNR drop wins (beam damage), otherwise the
first sub-threshold SROD (converged), otherwise no recommendation yet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, InvalidArgumentError, UndefinedSNRError
from .recon import OrthosliceSet, otsu_threshold

SROD_THRESHOLD_DEFAULT = 0.1
SNR_DECLINE_DB = 0.5
SNR_DECLINE_RUN = 3


def srod(current: OrthosliceSet, previous: OrthosliceSet) -> float:
    """Relative change ||O_N - O_{N-1}|| / ||O_N|| over the concatenated slices."""
    if tuple(current.slice_specs) != tuple(previous.slice_specs):
        raise InvalidArgumentError("slice specs differ between consecutive sets")
    if previous.n_projections != current.n_projections - 1:
        raise InvalidArgumentError(
            f"previous set must hold N-1 projections "
            f"(got {previous.n_projections} vs {current.n_projections})"
        )
    cur = current.concatenated()
    prev = previous.concatenated()
    denom = np.linalg.norm(cur)
    if denom == 0.0:
        raise DegenerateDataError("current orthoslices are all zero")
    return float(np.linalg.norm(cur - prev) / denom)


def snr(current: OrthosliceSet) -> float:
    """20*log10(mean/std) in dB over all pixels of the three slices."""
    pixels = current.concatenated()
    sigma = float(pixels.std())
    if sigma == 0.0:
        raise DegenerateDataError("zero variance, SNR undefined")
    mu = float(pixels.mean())
    if mu <= 0.0:
        raise UndefinedSNRError(f"non-positive mean {mu:.3g}, SNR undefined")
    return float(20.0 * np.log10(mu / sigma))


def _binary_support(values) -> np.ndarray:
    """Otsu mask of the input; constant input has no structure (empty mask)."""
    arr = np.asarray(values, dtype=np.float64)
    try:
        return arr > otsu_threshold(arr)
    except DegenerateDataError:
        return np.zeros(arr.shape, dtype=bool)


def shape_error(v_ref, v_rec) -> float:
    """Percent shape mismatch: 100*||R - C||/||R|| of the Otsu-binarized masks."""
    ref = np.asarray(getattr(v_ref, "data", v_ref))
    rec = np.asarray(getattr(v_rec, "data", v_rec))
    if ref.shape != rec.shape:
        raise InvalidArgumentError(f"shape mismatch {ref.shape} vs {rec.shape}")
    ref_b = _binary_support(ref).astype(np.float64)
    rec_b = _binary_support(rec).astype(np.float64)
    denom = np.linalg.norm(ref_b.ravel())
    if denom == 0.0:
        raise DegenerateDataError("reference binarizes to empty support")
    return float(100.0 * np.linalg.norm((ref_b - rec_b).ravel()) / denom)


@dataclass
class MetricTrace:
    """Per-projection SROD/SNR history with restart markers.

    Entries are (N, value) pairs, strictly increasing in N. A restart marker
    at N means the slice specs changed there: subsequent metrics refer to the
    new specs and the stopping rule only looks at entries after the marker.
    """

    srod: list = field(default_factory=list)
    snr: list = field(default_factory=list)
    threshold: float = SROD_THRESHOLD_DEFAULT
    restarts: list = field(default_factory=list)

    def __post_init__(self):
        if not self.threshold > 0:
            raise InvalidArgumentError(f"threshold must be > 0, got {self.threshold}")
        for seq in (self.srod, self.snr):
            ns = [n for n, _ in seq]
            if ns != sorted(set(ns)):
                raise InvalidArgumentError("metric entries must be strictly increasing in N")
        if any(n < 2 for n, _ in self.srod):
            raise InvalidArgumentError("srod requires N >= 2")

    def add_srod(self, n: int, value: float):
        if self.srod and n <= self.srod[-1][0]:
            raise InvalidArgumentError(f"srod N={n} not increasing")
        if n < 2:
            raise InvalidArgumentError("srod requires N >= 2")
        self.srod.append((int(n), float(value)))

    def add_snr(self, n: int, value: float):
        if self.snr and n <= self.snr[-1][0]:
            raise InvalidArgumentError(f"snr N={n} not increasing")
        self.snr.append((int(n), float(value)))

    def mark_restart(self, n: int):
        self.restarts.append(int(n))

    @property
    def last_restart(self) -> int:
        return self.restarts[-1] if self.restarts else 0

    def since_restart(self) -> "MetricTrace":
        """View of the entries after the most recent restart marker."""
        cut = self.last_restart
        return MetricTrace(
            srod=[(n, v) for n, v in self.srod if n > cut],
            snr=[(n, v) for n, v in self.snr if n > cut],
            threshold=self.threshold,
        )

    def to_dict(self) -> dict:
        return {
            "srod": [[n, v] for n, v in self.srod],
            "snr": [[n, v] for n, v in self.snr],
            "threshold": self.threshold,
            "restarts": list(self.restarts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricTrace":
        return cls(
            srod=[(int(n), float(v)) for n, v in d.get("srod", [])],
            snr=[(int(n), float(v)) for n, v in d.get("snr", [])],
            threshold=float(d.get("threshold", SROD_THRESHOLD_DEFAULT)),
            restarts=[int(n) for n in d.get("restarts", [])],
        )


@dataclass(frozen=True)
class StopRecommendation:
    """Outcome of the stopping rule at the current point of the session."""

    srod_converged_at: int | None
    snr_peak_at: int | None
    suggested_n: int | None
    rationale: str

    def to_dict(self) -> dict:
        return {
            "srod_converged_at": self.srod_converged_at,
            "snr_peak_at": self.snr_peak_at,
            "suggested_n": self.suggested_n,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StopRecommendation":
        return cls(
            srod_converged_at=d.get("srod_converged_at"),
            snr_peak_at=d.get("snr_peak_at"),
            suggested_n=d.get("suggested_n"),
            rationale=d["rationale"],
        )


def stop_decision(trace: MetricTrace) -> StopRecommendation:
    """Recommend where to stop acquiring based on the metric history.

    A sustained SNR decline (the last `SNR_DECLINE_RUN` entries all at least
    `SNR_DECLINE_DB` below the peak, with the peak at least that many entries
    back) signals beam damage and recommends stopping at the peak. Otherwise
    the first SROD value below the threshold recommends stopping there. With
    neither, there is no recommendation yet.
    """
    recent = trace.since_restart()

    converged_at = None
    for n, v in recent.srod:
        if v < trace.threshold:
            converged_at = n
            break

    peak_at = None
    peak_value = None
    for n, v in recent.snr:
        if peak_value is None or v > peak_value:
            peak_value = v
            peak_at = n

    damage = False
    if peak_at is not None:
        after_peak = [(n, v) for n, v in recent.snr if n > peak_at]
        tail = after_peak[-SNR_DECLINE_RUN:]
        damage = len(after_peak) >= SNR_DECLINE_RUN and all(
            v <= peak_value - SNR_DECLINE_DB for _, v in tail
        )

    if len(recent.srod) < 2:
        return StopRecommendation(converged_at, peak_at, None, "insufficient_data")
    if damage:
        return StopRecommendation(converged_at, peak_at, peak_at, "damage_detected")
    if converged_at is not None:
        return StopRecommendation(converged_at, peak_at, converged_at, "converged")
    return StopRecommendation(converged_at, peak_at, None, "insufficient_data")
