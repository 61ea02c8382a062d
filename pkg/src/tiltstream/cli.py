"""Command-line interface.

Subcommands: `simulate` writes a damaged tilt series, `session` runs the
live acquisition loop (optionally serving events on a local socket),
`analyze` replays a saved session offline, `reconstruct` runs EM at a chosen
N, and `report` prints metric tables. Exit codes: 0 success, 2 invalid
configuration or arguments, 3 I/O or parse failure, 4 degenerate data.

Output paths default into the directory named by the TILTSTREAM_OUT
environment variable (falling back to the working directory).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .align import align_series
from .errors import ConfigError, DegenerateDataError, InvalidArgumentError, ParseError
from .events import EventPublisher
from .metrics import shape_error
from .pipeline import (
    SessionConfig,
    analyze,
    build_damage,
    build_phantom,
    build_scheme,
    run_session,
)
from .projector import simulate_acquisition
from .recon import em_reconstruct
from . import storage

OUTPUT_ROOT_ENV = "TILTSTREAM_OUT"


def _output_path(explicit, default_name: str) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / default_name


def _parse_spec(text: str, kind_key: str = "kind") -> dict:
    """Parse a compact spec: JSON object, or shorthand `kind:arg[:arg...]`."""
    text = text.strip()
    if text.startswith("{"):
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON spec {text!r}: {exc}") from exc
        if not isinstance(spec, dict):
            raise ConfigError(f"spec must be an object: {text!r}")
        return spec
    parts = text.split(":")
    head, args = parts[0], parts[1:]
    if head == "GRS":
        spec = {"kind": "GRS"}
        if args:
            spec["n"] = int(args[0])
        if len(args) > 1:
            spec["annular_range_deg"] = float(args[1])
        return spec
    if head == "IS":
        spec = {"kind": "IS"}
        if args:
            spec["increment_deg"] = float(args[0])
        if len(args) > 1:
            spec["annular_range_deg"] = float(args[1])
        return spec
    if head in ("nanocage", "shepp_logan"):
        spec = {"kind": head}
        if args:
            spec["size"] = int(args[0])
        return spec
    if head.startswith("NC-"):
        return {"preset": head}
    raise ConfigError(f"unrecognized spec shorthand {text!r}")


def _load_config(args) -> SessionConfig:
    base: dict = {}
    if args.config:
        base = storage.read_json(args.config)
    if getattr(args, "phantom", None):
        base["phantom"] = _parse_spec(args.phantom)
    if getattr(args, "scheme", None):
        base["scheme"] = _parse_spec(args.scheme)
    if getattr(args, "damage", None):
        base["damage"] = _parse_spec(args.damage)
    for flag, key in (
        ("seed", "seed"),
        ("srod_threshold", "srod_threshold"),
        ("em_iterations", "em_iterations"),
        ("pace_s", "pace_s"),
        ("emit_port", "emit_port"),
        ("emit_host", "emit_host"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            base[key] = value
    controls = getattr(args, "control", None)
    if controls:
        script = list(base.get("control_script", []))
        for text in controls:
            try:
                script.append(json.loads(text))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid control command {text!r}: {exc}") from exc
        base["control_script"] = script
    return SessionConfig.from_dict(base)


def _add_config_flags(sub, with_controls: bool = False):
    sub.add_argument("--config", help="JSON config file supplying any field")
    sub.add_argument("--phantom", help='phantom spec: JSON or "nanocage:64"')
    sub.add_argument("--scheme", help='scheme spec: JSON, "GRS:71:140", or "IS:2:140"')
    sub.add_argument("--damage", help='damage spec: JSON or preset name "NC-3"')
    sub.add_argument("--seed", type=int)
    sub.add_argument("--srod-threshold", type=float, dest="srod_threshold")
    sub.add_argument("--em-iterations", type=int, dest="em_iterations")
    if with_controls:
        sub.add_argument("--pace-s", type=float, dest="pace_s",
                         help="seconds to wait between simulated projections")
        sub.add_argument("--emit-port", type=int, dest="emit_port",
                         help="serve session events on this local TCP port")
        sub.add_argument("--emit-host", dest="emit_host")
        sub.add_argument("--control", action="append",
                         help='scripted control command as JSON, e.g. '
                              '\'{"command":"stop","at_n":40}\' (repeatable)')


def cmd_simulate(args) -> int:
    config = _load_config(args)
    out = _output_path(args.output, "series")
    volume = build_phantom(config.phantom)
    scheme = build_scheme(config.scheme)
    series = simulate_acquisition(volume, scheme,
                                  build_damage(config.damage, config.seed),
                                  times=config.times)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_json(out / "config.json", config.to_dict())
    storage.write_json(out / "scheme.json", scheme.to_dict())
    storage.save_tilt_series(out, series)
    storage.write_manifest(out)
    print(f"wrote {len(series)} projections to {out}")
    return 0


def cmd_session(args) -> int:
    config = _load_config(args)
    out = _output_path(args.output, "session")
    config = SessionConfig.from_dict({**config.to_dict(), "output_dir": str(out)})
    publisher = None
    if config.emit_port is not None:
        publisher = EventPublisher(config.emit_host, config.emit_port)
        print(f"serving events on {config.emit_host}:{publisher.port}")
    try:
        result = run_session(config, publisher=publisher)
    finally:
        if publisher is not None:
            publisher.close()
    rec = result.recommendation
    print(f"session ended ({result.stop_reason}); n_used={result.n_used}; "
          f"suggested_n={rec.suggested_n}; rationale={rec.rationale}")
    print(f"artifacts in {out}")
    return 0


def cmd_analyze(args) -> int:
    result = analyze(args.session_dir, srod_threshold=args.srod_threshold,
                     reconstruct=args.reconstruct)
    if args.reconstruct and result.volume is not None:
        out = _output_path(args.output, "analysis_em.raw")
        storage.save_volume(out, result.volume, {"n_used": result.n_used})
        print(f"wrote EM volume to {out}")
    print(json.dumps({
        "recommendation": result.recommendation.to_dict(),
        "n_used": result.n_used,
        "stop_reason": result.stop_reason,
        "trace": result.trace.to_dict(),
    }, indent=2, sort_keys=True))
    return 0


def cmd_reconstruct(args) -> int:
    series = storage.load_tilt_series(args.session_dir)
    if args.align:
        _, series = align_series(series, mode="chronological")
    volume = em_reconstruct(series, args.n, args.iterations)
    out = _output_path(args.output, f"em_{args.n or len(series)}.raw")
    storage.save_volume(out, volume, {
        "n_used": args.n or len(series),
        "em_iterations": args.iterations,
        "aligned": bool(args.align),
    })
    print(f"wrote EM volume to {out}")
    return 0


def cmd_report(args) -> int:
    directory = Path(args.session_dir)
    trace_dict = storage.read_json(directory / "metrics.json")
    srod = {n: v for n, v in trace_dict.get("srod", [])}
    snr = {n: v for n, v in trace_dict.get("snr", [])}
    restarts = set(trace_dict.get("restarts", []))

    es = {}
    if args.es_at:
        config = SessionConfig.from_dict(storage.read_json(directory / "config.json"))
        reference = build_phantom(config.phantom)
        series = storage.load_tilt_series(directory)
        _, aligned = align_series(series, mode="chronological")
        for n in args.es_at:
            volume = em_reconstruct(aligned, n, config.em_iterations)
            es[n] = shape_error(reference, volume)

    ns = sorted(set(srod) | set(snr) | set(es))
    print("n\tsrod\tsnr\tes\trestart")
    for n in ns:
        cells = [str(n)]
        for table in (srod, snr, es):
            cells.append(repr(table[n]) if n in table else "")
        cells.append("1" if n in restarts else "")
        print("\t".join(cells))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiltstream",
        description="Dose-aware tilt-series simulation, streaming "
                    "reconstruction, and stop-criterion analysis.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="simulate a damaged tilt series")
    _add_config_flags(sim)
    sim.add_argument("-o", "--output", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    ses = subs.add_parser("session", help="run the live acquisition loop")
    _add_config_flags(ses, with_controls=True)
    ses.add_argument("-o", "--output", help="session artifact directory")
    ses.set_defaults(func=cmd_session)

    ana = subs.add_parser("analyze", help="replay a saved session offline")
    ana.add_argument("session_dir")
    ana.add_argument("--srod-threshold", type=float, dest="srod_threshold")
    ana.add_argument("--reconstruct", action="store_true",
                     help="also run EM at the replayed stop point")
    ana.add_argument("-o", "--output", help="EM volume output path")
    ana.set_defaults(func=cmd_analyze)

    rec = subs.add_parser("reconstruct", help="EM reconstruction at a chosen N")
    rec.add_argument("session_dir")
    rec.add_argument("-n", type=int, default=None,
                     help="use the first N projections (default: all)")
    rec.add_argument("--iterations", type=int, default=30)
    rec.add_argument("--align", action="store_true",
                     help="chronologically align the series first")
    rec.add_argument("-o", "--output", help="volume output path")
    rec.set_defaults(func=cmd_reconstruct)

    rep = subs.add_parser("report", help="print metric tables for a session")
    rep.add_argument("session_dir")
    rep.add_argument("--es-at", type=int, nargs="+",
                     help="also compute shape error of EM volumes at these N")
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
        sys.stdout.flush()
        return code
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DegenerateDataError as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return 4
    except BrokenPipeError:
        # Downstream reader (e.g. `head`) closed stdout; silence the
        # interpreter's shutdown flush and exit as the shell convention expects.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
