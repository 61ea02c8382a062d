"""Artifact persistence: raw volumes/images with JSON sidecars, tilt series,
metric traces, alignment tables, and content-hash manifests.

All binary payloads are little-endian float32. Volumes are written x-fastest
(column-major flatten of the [x, y, z] array); 2D images are row-major.
JSON artifacts are canonical (sorted keys, no whitespace) so identical
inputs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ParseError
from .geometry import TiltScheme
from .phantom import VoxelVolume
from .projector import Projection, TiltSeries


def canonical_json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def write_json(path, obj):
    Path(path).write_bytes(canonical_json_bytes(obj) + b"\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"missing file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc


def _require(record: dict, field: str, path):
    if field not in record:
        raise ParseError(f"missing field {field!r} in {path}")
    return record[field]


def save_volume(raw_path, volume: VoxelVolume, extra_meta: dict | None = None):
    """Write volume.raw (float32, x-fastest) plus a .json sidecar."""
    raw_path = Path(raw_path)
    data = np.asarray(volume.data, dtype="<f4")
    raw_path.write_bytes(data.flatten(order="F").tobytes())
    meta = {
        "shape": list(data.shape),
        "dtype": "float32",
        "byte_order": "little",
        "axis_order": "x-fastest",
        "voxel_size": volume.voxel_size,
    }
    meta.update(extra_meta or {})
    write_json(raw_path.with_suffix(".json"), meta)


def load_volume(raw_path) -> VoxelVolume:
    raw_path = Path(raw_path)
    meta = read_json(raw_path.with_suffix(".json"))
    shape = tuple(int(s) for s in _require(meta, "shape", raw_path))
    if not raw_path.exists():
        raise ParseError(f"missing file: {raw_path}")
    buf = raw_path.read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(buf) != expected:
        raise ParseError(
            f"size mismatch in {raw_path}: got {len(buf)} bytes, expected {expected}"
        )
    data = np.frombuffer(buf, dtype="<f4").reshape(shape, order="F")
    return VoxelVolume(np.ascontiguousarray(data), float(meta.get("voxel_size", 1.0)))


def save_image(raw_path, image, meta: dict | None = None):
    """Write a 2D raw float32 row-major image plus a .json sidecar."""
    raw_path = Path(raw_path)
    data = np.ascontiguousarray(np.asarray(image, dtype="<f4"))
    raw_path.write_bytes(data.tobytes())
    record = {"shape": list(data.shape), "dtype": "float32", "byte_order": "little"}
    record.update(meta or {})
    write_json(raw_path.with_suffix(".json"), record)


def load_image(raw_path):
    raw_path = Path(raw_path)
    meta = read_json(raw_path.with_suffix(".json"))
    shape = tuple(int(s) for s in _require(meta, "shape", raw_path))
    buf = raw_path.read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(buf) != expected:
        raise ParseError(
            f"size mismatch in {raw_path}: got {len(buf)} bytes, expected {expected}"
        )
    return np.frombuffer(buf, dtype="<f4").reshape(shape).copy(), meta


def save_tilt_series(directory, series: TiltSeries):
    """Write per-projection raw images and a series.json index."""
    directory = Path(directory)
    proj_dir = directory / "projections"
    proj_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for p in series.projections:
        name = f"proj_{p.chrono_index:04d}.raw"
        (proj_dir / name).write_bytes(
            np.ascontiguousarray(p.pixels.astype("<f4")).tobytes()
        )
        entries.append({
            "file": f"projections/{name}",
            "angle_deg": p.angle_deg,
            "chrono_index": p.chrono_index,
            "time": p.time,
        })
    write_json(directory / "series.json", {
        "detector_shape": list(series.detector_shape),
        "scheme": series.scheme.to_dict(),
        "projections": entries,
    })


def load_tilt_series(directory) -> TiltSeries:
    directory = Path(directory)
    index = read_json(directory / "series.json")
    shape = tuple(int(s) for s in _require(index, "detector_shape", directory / "series.json"))
    scheme = TiltScheme.from_dict(_require(index, "scheme", directory / "series.json"))
    projections = []
    for entry in _require(index, "projections", directory / "series.json"):
        rel = _require(entry, "file", directory / "series.json")
        raw = directory / rel
        if not raw.exists():
            raise ParseError(f"missing file: {raw}")
        buf = raw.read_bytes()
        expected = shape[0] * shape[1] * 4
        if len(buf) != expected:
            raise ParseError(
                f"size mismatch in {raw}: got {len(buf)} bytes, expected {expected}"
            )
        pixels = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
        projections.append(Projection(
            pixels=pixels,
            angle_deg=float(_require(entry, "angle_deg", raw)),
            chrono_index=int(_require(entry, "chrono_index", raw)),
            time=float(_require(entry, "time", raw)),
        ))
    return TiltSeries(projections=projections, scheme=scheme)


def write_alignment_tsv(path, result, series: TiltSeries):
    lines = ["chrono_index\tangle_deg\tdy\tdx\treference_index"]
    for chrono, angle, dy, dx, ref in result.rows(series):
        lines.append(f"{chrono}\t{angle!r}\t{dy!r}\t{dx!r}\t{ref}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_alignment_tsv(path):
    lines = Path(path).read_text().strip().split("\n")
    rows = []
    for line in lines[1:]:
        chrono, angle, dy, dx, ref = line.split("\t")
        rows.append((int(chrono), float(angle), float(dy), float(dx), int(ref)))
    return rows


def write_metrics_tsv(path, trace):
    srod_at = dict(trace.srod)
    snr_at = dict(trace.snr)
    restarts = set(trace.restarts)
    lines = ["n\tsrod\tsnr\trestart"]
    for n in sorted(set(srod_at) | set(snr_at)):
        srod_s = repr(srod_at[n]) if n in srod_at else ""
        snr_s = repr(snr_at[n]) if n in snr_at else ""
        lines.append(f"{n}\t{srod_s}\t{snr_s}\t{int(n in restarts)}")
    Path(path).write_text("\n".join(lines) + "\n")


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(directory, exclude=("manifest.json",)):
    """Hash every artifact in the directory tree into manifest.json."""
    directory = Path(directory)
    files = {}
    for path in sorted(directory.rglob("*")):
        rel = path.relative_to(directory).as_posix()
        if path.is_file() and rel not in exclude:
            files[rel] = file_sha256(path)
    manifest = {
        "files": files,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    write_json(directory / "manifest.json", manifest)
    return manifest


def verify_manifest(directory) -> bool:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    for rel, digest in _require(manifest, "files", directory / "manifest.json").items():
        path = directory / rel
        if not path.exists() or file_sha256(path) != digest:
            return False
    return True
