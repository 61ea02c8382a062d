"""Session orchestration: acquire, align, reconstruct, decide, persist.

A session runs three roles: a producer thread simulates acquisition one
projection at a time, the consumer (this thread) aligns each projection,
updates the streaming orthoslices and metrics, and applies control commands
between projections; an optional publisher fans events out to subscribers.

The offline `analyze` entry point replays a saved session through the very
same consumer object, so a live trace and its replay agree byte for byte.
"""

from __future__ import annotations

import base64
import json
import queue
import threading
import time as time_mod
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .align import AlignmentResult, align_translation, shift_image
from .damage import DAMAGE_PRESETS, DamageParams, damage_preset
from .errors import ConfigError, DegenerateDataError, InvalidArgumentError, TiltStreamError
from .events import CONTROL_COMMANDS, EventPublisher, make_event
from .geometry import TiltScheme, grs_angles, is_angles
from .metrics import MetricTrace, StopRecommendation, snr, srod, stop_decision
from .phantom import VoxelVolume, nanocage, shepp_logan_3d
from .projector import Projection, TiltSeries, iter_acquisition
from .recon import DEFAULT_SLICE_SPECS, SliceSpec, OrthosliceStream, em_reconstruct, validate_slice_specs
from . import storage

DEFAULT_EM_ITERATIONS = 30


def build_phantom(spec: dict) -> VoxelVolume:
    """Construct the phantom named by a config record."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "nanocage":
            return nanocage(**spec)
        if kind == "shepp_logan":
            return shepp_logan_3d(**spec)
    except (TypeError, InvalidArgumentError) as exc:
        raise ConfigError(f"invalid phantom spec: {exc}") from exc
    raise ConfigError(f"unknown phantom kind {kind!r}")


def build_scheme(spec: dict) -> TiltScheme:
    spec = dict(spec)
    kind = spec.get("kind")
    rng = float(spec.get("annular_range_deg", 140.0))
    try:
        if kind == "GRS":
            return grs_angles(int(spec["n"]), rng)
        if kind == "IS":
            return is_angles(float(spec["increment_deg"]), rng)
    except KeyError as exc:
        raise ConfigError(f"scheme spec missing field {exc}") from exc
    except InvalidArgumentError as exc:
        raise ConfigError(f"invalid scheme spec: {exc}") from exc
    raise ConfigError(f"unknown scheme kind {kind!r}")


def build_damage(spec: dict, seed: int) -> DamageParams:
    spec = dict(spec)
    try:
        if "preset" in spec:
            return damage_preset(
                spec["preset"],
                gaussian_sigma=spec.get("gaussian_sigma"),
                seed=int(spec.get("seed", seed)),
            )
        return DamageParams(
            beta1=float(spec.get("beta1", 0.0)),
            beta2=float(spec.get("beta2", 0.0)),
            gaussian_sigma=spec.get("gaussian_sigma"),
            seed=int(spec.get("seed", seed)),
        )
    except (KeyError, ValueError, InvalidArgumentError) as exc:
        raise ConfigError(f"invalid damage spec: {exc}") from exc


@dataclass(frozen=True)
class SessionConfig:
    """Everything that determines a session except wall-clock timing."""

    phantom: dict
    scheme: dict
    damage: dict = field(default_factory=dict)
    slice_specs: tuple = DEFAULT_SLICE_SPECS
    srod_threshold: float = 0.1
    em_iterations: int = DEFAULT_EM_ITERATIONS
    seed: int = 0
    times: tuple | None = None
    pace_s: float = 0.0
    output_dir: str | None = None
    emit_host: str = "127.0.0.1"
    emit_port: int | None = None
    control_script: tuple = ()

    def __post_init__(self):
        build_phantom(self.phantom)
        build_scheme(self.scheme)
        build_damage(self.damage, self.seed)
        try:
            object.__setattr__(self, "slice_specs",
                               validate_slice_specs(self.slice_specs))
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.srod_threshold > 0:
            raise ConfigError(f"srod_threshold must be > 0, got {self.srod_threshold}")
        if self.em_iterations < 1:
            raise ConfigError(f"em_iterations must be >= 1, got {self.em_iterations}")
        if self.pace_s < 0:
            raise ConfigError(f"pace_s must be >= 0, got {self.pace_s}")
        for cmd in self.control_script:
            _validate_command(cmd)

    def to_dict(self) -> dict:
        return {
            "phantom": dict(self.phantom),
            "scheme": dict(self.scheme),
            "damage": dict(self.damage),
            "slice_specs": [s.to_dict() for s in self.slice_specs],
            "srod_threshold": self.srod_threshold,
            "em_iterations": self.em_iterations,
            "seed": self.seed,
            "times": list(self.times) if self.times is not None else None,
            "pace_s": self.pace_s,
            "output_dir": self.output_dir,
            "emit_host": self.emit_host,
            "emit_port": self.emit_port,
            "control_script": [dict(c) for c in self.control_script],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        d = dict(d)
        unknown = set(d) - {
            "phantom", "scheme", "damage", "slice_specs", "srod_threshold",
            "em_iterations", "seed", "times", "pace_s", "output_dir",
            "emit_host", "emit_port", "control_script",
        }
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "phantom" not in d or "scheme" not in d:
            raise ConfigError("config requires 'phantom' and 'scheme'")
        specs = d.get("slice_specs")
        if specs is not None:
            specs = tuple(SliceSpec.from_dict(s) for s in specs)
        else:
            specs = DEFAULT_SLICE_SPECS
        times = d.get("times")
        return cls(
            phantom=d["phantom"],
            scheme=d["scheme"],
            damage=d.get("damage", {}),
            slice_specs=specs,
            srod_threshold=float(d.get("srod_threshold", 0.1)),
            em_iterations=int(d.get("em_iterations", DEFAULT_EM_ITERATIONS)),
            seed=int(d.get("seed", 0)),
            times=tuple(times) if times is not None else None,
            pace_s=float(d.get("pace_s", 0.0)),
            output_dir=d.get("output_dir"),
            emit_host=d.get("emit_host", "127.0.0.1"),
            emit_port=d.get("emit_port"),
            control_script=tuple(dict(c) for c in d.get("control_script", ())),
        )


def _validate_command(cmd: dict):
    if not isinstance(cmd, dict) or cmd.get("command") not in CONTROL_COMMANDS:
        raise ConfigError(f"invalid control command: {cmd!r}")
    if "at_n" in cmd and (not isinstance(cmd["at_n"], int) or cmd["at_n"] < 1):
        raise ConfigError(f"control at_n must be a positive integer: {cmd!r}")
    if cmd["command"] == "reorient":
        specs = cmd.get("slice_specs")
        if not specs:
            raise ConfigError("reorient command requires slice_specs")
        validate_slice_specs(SliceSpec.from_dict(s) for s in specs)


def _encode_slices(ortho_set) -> list:
    out = []
    for spec in ortho_set.slice_specs:
        pixels = np.ascontiguousarray(ortho_set.slices[spec.plane], dtype="<f4")
        out.append({
            "plane": spec.plane,
            "offset": spec.offset,
            "rotation_deg": spec.rotation_deg,
            "shape": list(pixels.shape),
            "min": float(pixels.min()),
            "max": float(pixels.max()),
            "pixels_b64": base64.b64encode(pixels.tobytes()).decode("ascii"),
        })
    return out


class SessionConsumer:
    """The ordered align → orthoslice → metrics state machine.

    Both the live loop and offline replay drive this one class, which is what
    makes replayed metric traces identical to live ones.
    """

    def __init__(self, detector_shape, slice_specs, srod_threshold):
        self.stream = OrthosliceStream(detector_shape, slice_specs)
        self.trace = MetricTrace(threshold=srod_threshold)
        self.recommendation = stop_decision(self.trace)
        self.aligned_pixels = []
        self.angles = []
        self.times = []
        self.shifts = []
        self.reference_map = []
        self._previous_set = None

    @property
    def n(self) -> int:
        return len(self.aligned_pixels)

    def ingest(self, projection: Projection) -> dict:
        """Align one raw projection, update slices and metrics."""
        raw = np.asarray(projection.pixels, dtype=np.float64)
        if self.aligned_pixels:
            try:
                shift = align_translation(raw, self.aligned_pixels[-1])
            except DegenerateDataError:
                shift = (0.0, 0.0)
            aligned = shift_image(raw, shift) if shift != (0.0, 0.0) else raw
            reference = len(self.aligned_pixels) - 1
        else:
            shift, aligned, reference = (0.0, 0.0), raw, None
        self.aligned_pixels.append(aligned)
        self.angles.append(projection.angle_deg)
        self.times.append(projection.time)
        self.shifts.append(shift)
        self.reference_map.append(reference)

        current = self.stream.add_projection(aligned, projection.angle_deg)
        n = current.n_projections
        srod_value = None
        if self._previous_set is not None:
            try:
                srod_value = srod(current, self._previous_set)
                self.trace.add_srod(n, srod_value)
            except DegenerateDataError:
                srod_value = None
        snr_value = None
        try:
            snr_value = snr(current)
            self.trace.add_snr(n, snr_value)
        except (DegenerateDataError, TiltStreamError):
            snr_value = None
        self._previous_set = current
        self.recommendation = stop_decision(self.trace)
        return {
            "set": current,
            "srod": srod_value,
            "snr": snr_value,
            "recommendation": self.recommendation,
        }

    def reorient(self, new_specs):
        """Swap slice specs: recompute slices, mark a metric restart."""
        restarted = self.stream.reorient(new_specs)
        self.trace.mark_restart(restarted.n_projections)
        self._previous_set = restarted
        self.recommendation = stop_decision(self.trace)
        return restarted

    def alignment_result(self) -> AlignmentResult:
        return AlignmentResult(tuple(self.shifts), "chronological",
                               tuple(self.reference_map))

    def aligned_series(self, scheme: TiltScheme) -> TiltSeries:
        projections = [
            Projection(
                pixels=np.maximum(pix, 0.0).astype(np.float32),
                angle_deg=angle,
                chrono_index=i + 1,
                time=t,
            )
            for i, (pix, angle, t) in enumerate(
                zip(self.aligned_pixels, self.angles, self.times)
            )
        ]
        return TiltSeries(projections=projections, scheme=scheme)


@dataclass
class SessionResult:
    config: SessionConfig
    trace: MetricTrace
    recommendation: StopRecommendation
    n_used: int
    stop_reason: str
    volume: VoxelVolume | None
    raw_series: TiltSeries
    aligned_series: TiltSeries
    control_log: list
    events: list
    output_dir: str | None


class _ControlState:
    """Commands pending application, from config script and/or the wire."""

    def __init__(self, script):
        self.pending = [dict(c) for c in script]

    def add(self, cmd: dict):
        self.pending.append(dict(cmd))

    def due(self, n: int):
        ready = [c for c in self.pending if c.get("at_n", n) <= n]
        self.pending = [c for c in self.pending if c.get("at_n", n) > n]
        return ready


def run_session(config: SessionConfig, publisher: EventPublisher | None = None) -> SessionResult:
    """Run the full acquisition loop and write artifacts if configured.

    The producer thread simulates projections (pacing with `pace_s` between
    them); this thread consumes in order, applies any due control commands
    after each projection, and finishes with an EM reconstruction. A manual
    stop pins the reconstruction at the stop point; exhaustion uses the
    suggested stop if one exists, else the full series.
    """
    volume = build_phantom(config.phantom)
    scheme = build_scheme(config.scheme)
    params = build_damage(config.damage, config.seed)
    own_publisher = publisher is None and config.emit_port is not None
    if own_publisher:
        publisher = EventPublisher(config.emit_host, config.emit_port)

    events_log = []

    def publish(kind, n, payload):
        event = make_event(kind, n, payload)
        events_log.append(event)
        if publisher is not None:
            publisher.publish(event)

    feed = queue.Queue(maxsize=4)
    abort = threading.Event()

    def produce():
        try:
            for projection in iter_acquisition(volume, scheme, params, config.times):
                if abort.is_set():
                    return
                if config.pace_s:
                    time_mod.sleep(config.pace_s)
                feed.put(projection)
        finally:
            feed.put(None)

    producer = threading.Thread(target=produce, daemon=True)
    producer.start()

    consumer = SessionConsumer(
        (volume.shape[1], volume.shape[0]), config.slice_specs, config.srod_threshold
    )
    control = _ControlState(config.control_script)
    control_log = []
    raw_projections = []
    stop_reason = "exhausted"
    last_suggestion = None

    try:
        while True:
            projection = feed.get()
            if projection is None:
                break
            raw_projections.append(projection)
            step = consumer.ingest(projection)
            n = consumer.n
            publish("projection_added", n, {
                "angle_deg": projection.angle_deg,
                "time": projection.time,
                "chrono_index": projection.chrono_index,
            })
            publish("slices_updated", n, {
                "restart": False,
                "slices": _encode_slices(step["set"]),
            })
            publish("metrics_updated", n, {
                "srod": step["srod"],
                "snr": step["snr"],
                "threshold": config.srod_threshold,
            })
            suggestion = step["recommendation"]
            if suggestion.suggested_n is not None and (
                suggestion.suggested_n, suggestion.rationale
            ) != last_suggestion:
                last_suggestion = (suggestion.suggested_n, suggestion.rationale)
                publish("stop_suggested", n, suggestion.to_dict())

            if publisher is not None:
                for sub, record in publisher.pending_commands():
                    try:
                        _validate_command(record)
                    except ConfigError as exc:
                        publisher.send_to(sub, {
                            "kind": "control_error", "n": n,
                            "payload": {"error": str(exc)},
                        })
                        continue
                    control.add(record)
                    publisher.send_to(sub, {
                        "kind": "control_ack", "n": n,
                        "payload": {"command": record["command"]},
                    })

            stopped = False
            for cmd in control.due(n):
                applied = {"n": n, "command": cmd["command"]}
                if cmd["command"] == "stop":
                    stopped = True
                elif cmd["command"] == "reorient":
                    applied["slice_specs"] = [dict(s) for s in cmd["slice_specs"]]
                    new_specs = tuple(SliceSpec.from_dict(s) for s in cmd["slice_specs"])
                    restarted = consumer.reorient(new_specs)
                    publish("history_restarted", n, {
                        "slices": _encode_slices(restarted),
                    })
                control_log.append(applied)
                if stopped:
                    break
            if stopped:
                stop_reason = "manual_stop"
                abort.set()
                break
    finally:
        abort.set()
        while producer.is_alive():
            try:
                feed.get_nowait()
            except queue.Empty:
                pass
            producer.join(timeout=0.05)

    recommendation = consumer.recommendation
    if stop_reason == "manual_stop":
        n_used = consumer.n
    else:
        n_used = recommendation.suggested_n or consumer.n

    aligned = consumer.aligned_series(scheme)
    reconstruction = None
    if n_used >= 1:
        reconstruction = em_reconstruct(aligned, n_used, config.em_iterations)

    publish("session_ended", consumer.n, {
        "n_used": n_used,
        "stop_reason": stop_reason,
        "recommendation": recommendation.to_dict(),
    })

    raw_series = TiltSeries(projections=raw_projections, scheme=scheme)
    result = SessionResult(
        config=config,
        trace=consumer.trace,
        recommendation=recommendation,
        n_used=n_used,
        stop_reason=stop_reason,
        volume=reconstruction,
        raw_series=raw_series,
        aligned_series=aligned,
        control_log=control_log,
        events=events_log,
        output_dir=config.output_dir,
    )
    if config.output_dir:
        write_session_artifacts(Path(config.output_dir), result, consumer)
    if own_publisher:
        publisher.close()
    return result


def write_session_artifacts(directory: Path, result: SessionResult,
                            consumer: SessionConsumer):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    # the artifact must not encode its own location: identical configs give
    # identical bytes wherever the session is written
    storage.write_json(directory / "config.json",
                       {**result.config.to_dict(), "output_dir": None})
    storage.write_json(directory / "scheme.json",
                       build_scheme(result.config.scheme).to_dict())
    storage.save_tilt_series(directory, result.raw_series)
    storage.write_alignment_tsv(directory / "alignment.tsv",
                                consumer.alignment_result(), result.raw_series)
    storage.write_json(directory / "metrics.json", result.trace.to_dict())
    storage.write_metrics_tsv(directory / "metrics.tsv", result.trace)
    storage.write_json(directory / "recommendation.json", {
        "recommendation": result.recommendation.to_dict(),
        "n_used": result.n_used,
        "stop_reason": result.stop_reason,
    })
    storage.write_json(directory / "control_log.json", result.control_log)
    if result.volume is not None:
        storage.save_volume(directory / "reconstruction.raw", result.volume, {
            "n_used": result.n_used,
            "em_iterations": result.config.em_iterations,
        })
    final_set = consumer.stream._emit()
    slices_dir = directory / "slices"
    slices_dir.mkdir(exist_ok=True)
    for spec in final_set.slice_specs:
        storage.save_image(
            slices_dir / f"{spec.plane}.raw",
            final_set.slices[spec.plane],
            {
                "plane": spec.plane,
                "offset": spec.offset,
                "rotation_deg": spec.rotation_deg,
                "n_projections": final_set.n_projections,
            },
        )
    with open(directory / "events.jsonl", "wb") as fh:
        for event in result.events:
            fh.write(storage.canonical_json_bytes(event) + b"\n")
    storage.write_manifest(directory)


@dataclass
class AnalyzeResult:
    trace: MetricTrace
    recommendation: StopRecommendation
    n_used: int
    stop_reason: str
    volume: VoxelVolume | None


def analyze(session_dir, srod_threshold: float | None = None,
            reconstruct: bool = False) -> AnalyzeResult:
    """Offline replay of a saved session through the live consumer path.

    With the saved threshold this reproduces the live MetricTrace exactly;
    overriding the threshold keeps the SROD/SNR values and only moves the
    decision. Set `reconstruct` to also redo the EM volume at the replayed
    stop point.
    """
    session_dir = Path(session_dir)
    config = SessionConfig.from_dict(storage.read_json(session_dir / "config.json"))
    if srod_threshold is not None:
        config = replace(config, srod_threshold=float(srod_threshold))
    series = storage.load_tilt_series(session_dir)
    control_log = storage.read_json(session_dir / "control_log.json")

    consumer = SessionConsumer(
        series.detector_shape, config.slice_specs, config.srod_threshold
    )
    by_n = {}
    for entry in control_log:
        by_n.setdefault(int(entry["n"]), []).append(entry)

    stop_reason = "exhausted"
    for projection in series.projections:
        consumer.ingest(projection)
        stopped = False
        for cmd in by_n.get(consumer.n, ()):
            if cmd["command"] == "stop":
                stopped = True
                break
            if cmd["command"] == "reorient":
                consumer.reorient(
                    tuple(SliceSpec.from_dict(s) for s in cmd["slice_specs"])
                )
        if stopped:
            stop_reason = "manual_stop"
            break

    recommendation = consumer.recommendation
    if stop_reason == "manual_stop":
        n_used = consumer.n
    else:
        n_used = recommendation.suggested_n or consumer.n
    volume = None
    if reconstruct and n_used >= 1:
        volume = em_reconstruct(
            consumer.aligned_series(series.scheme), n_used, config.em_iterations
        )
    return AnalyzeResult(consumer.trace, recommendation, n_used, stop_reason, volume)
