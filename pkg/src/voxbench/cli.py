"""Command-line front end: record episodes, run and sweep evaluations,
export voxel snapshots, and pretty-print metrics CSVs.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .backends import BACKEND_NAMES, create_backend
from .config import (
    CSV_COLUMNS,
    ConfigError,
    RunConfig,
    build_episode_config,
    build_run_config,
    build_sweep_config,
    apply_overrides,
    load_config_file,
    metrics_row,
    params_field,
    write_metrics_csv,
    write_per_frame_csv,
)
from .episode import read_header
from .evaluate import evaluate_episode, run_pipeline
from .grid import GridSpec, unpack_keys, voxel_centers
from .simulate import record_episode

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _raw_config(args) -> dict[str, str]:
    raw = load_config_file(args.config) if getattr(args, "config", None) else {}
    return apply_overrides(raw, getattr(args, "set", None) or [])


def _make_backend(cfg: RunConfig):
    header = read_header(cfg.episode)
    spec = GridSpec(origin=header.grid_origin, resolution=cfg.params["minimum_voxel_length"])
    backend = create_backend(
        cfg.backend, spec, cfg.params, cell_size=header.cell_size, seed=cfg.seed
    )
    return backend, header


def cmd_record(args) -> int:
    raw = _raw_config(args)
    config = build_episode_config(raw, seed=args.seed)
    header = record_episode(config, args.out)
    n_frames = sum(s.frame_count(config.duration_s) for s in config.resolved_sensors())
    print(f"recorded {header.duration_s:g} s episode -> {args.out} ({n_frames} frames)")
    return 0


def _run_one(cfg: RunConfig):
    backend, _header = _make_backend(cfg)
    report = evaluate_episode(str(cfg.episode), backend, latency_ns=cfg.latency_ns)
    return report


def cmd_run(args) -> int:
    raw = _raw_config(args)
    cfg = build_run_config(
        raw,
        episode=args.episode,
        backend=args.backend,
        seed=args.seed,
        out=args.out,
        per_frame_out=args.per_frame_out,
    )
    if not cfg.episode.exists():
        raise ConfigError(f"episode file not found: {cfg.episode}")
    report = _run_one(cfg)
    row = metrics_row(cfg, report)
    if cfg.out:
        write_metrics_csv(cfg.out, [row])
    if cfg.per_frame_out:
        write_per_frame_csv(cfg.per_frame_out, report)
    _print_summary(cfg, report)
    return 0


def _print_summary(cfg: RunConfig, report) -> None:
    print(f"backend:  {cfg.backend}")
    print(f"params:   {params_field(cfg)}")
    print(f"frames:   {report.frames_evaluated} evaluated, {report.frames_skipped} skipped {report.skip_reasons or ''}")
    print(f"counts:   TP={report.sum_tp} FP={report.sum_fp} FN={report.sum_fn}")
    print(
        "pooled:   "
        f"P={report.precision:.3f} R={report.recall:.3f} "
        f"F1={report.f_score(1):.3f} F2={report.f_score(2):.3f} F3={report.f_score(3):.3f}"
    )
    print(f"per-frame means: P={report.mean_precision:.3f} R={report.mean_recall:.3f}")
    for line in report.diagnostics:
        print(f"note: {line}", file=sys.stderr)


def _sweep_worker(payload):
    cfg_dict, value = payload
    cfg = RunConfig(**cfg_dict)
    report = _run_one(cfg)
    return metrics_row(cfg, report)


def cmd_sweep(args) -> int:
    raw = _raw_config(args)
    base = build_run_config(raw, episode=args.episode, backend=args.backend,
                            seed=args.seed, out=args.out)
    if not base.episode.exists():
        raise ConfigError(f"episode file not found: {base.episode}")
    sweep = build_sweep_config(base, raw, parameter=args.param, values=args.values)

    payloads = []
    for cfg in sweep.run_configs():
        cfg_dict = dict(
            episode=cfg.episode,
            backend=cfg.backend,
            params=cfg.params,
            seed=cfg.seed,
            integration_latency_s=cfg.integration_latency_s,
        )
        payloads.append((cfg_dict, cfg.params[sweep.parameter]))

    rows: list[list[str] | None] = [None] * len(payloads)
    failures = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_sweep_worker, p) for p in payloads]
            for idx, future in enumerate(futures):
                try:
                    rows[idx] = future.result()
                except Exception as exc:  # noqa: BLE001 - per-row isolation
                    failures.append((payloads[idx][1], exc))
    else:
        for idx, payload in enumerate(payloads):
            try:
                rows[idx] = _sweep_worker(payload)
            except Exception as exc:  # noqa: BLE001
                failures.append((payload[1], exc))

    kept = [r for r in rows if r is not None]
    if args.out:
        write_metrics_csv(args.out, kept)
    for row in kept:
        print(",".join(row[:2] + row[7:9]))
    for value, exc in failures:
        print(f"sweep value {value!r} failed: {exc}", file=sys.stderr)
    return RUNTIME_ERROR if failures else 0


def cmd_export(args) -> int:
    raw = _raw_config(args)
    cfg = build_run_config(raw, episode=args.episode, backend=args.backend, seed=args.seed)
    if not cfg.episode.exists():
        raise ConfigError(f"episode file not found: {cfg.episode}")
    backend, header = _make_backend(cfg)
    if not (0.0 <= args.time <= header.duration_s):
        raise ConfigError(
            f"timestamp {args.time} outside the episode [0, {header.duration_s}]"
        )
    result = run_pipeline(
        str(cfg.episode),
        backend,
        latency_ns=cfg.latency_ns,
        capture_at_ns=int(round(args.time * 1e9)),
        stop_after_capture=True,
    )
    capture = result.capture
    if capture is None:
        raise ConfigError(f"no fused frame at or before t={args.time}")

    base = Path(args.out)
    if base.suffix == ".xyz":
        base = base.with_suffix("")
    spec = backend.spec
    occupied_path = base.with_suffix(".xyz")
    centers = (
        voxel_centers(unpack_keys(capture.occupied_packed), spec)
        if len(capture.occupied_packed)
        else np.empty((0, 3))
    )
    _write_xyz(occupied_path, centers)

    classified_path = base.parent / (base.name + "_classified.xyzrgb")
    lines = []
    if capture.classified is not None:
        colors = {"tp": (0, 255, 0), "fp": (0, 0, 255), "fn": (255, 0, 0)}
        for label, keys in (("tp", capture.classified.tp), ("fp", capture.classified.fp),
                            ("fn", capture.classified.fn)):
            r, g, b = colors[label]
            for key in sorted(keys):
                x, y, z = voxel_centers(np.array(key, dtype=np.float64), spec)
                lines.append(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}")
    classified_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    print(f"snapshot at fused t={capture.fused_t_ns/1e9:.3f}s "
          f"(aligned {capture.snapshot_t_ns/1e9:.3f}s): "
          f"{len(centers)} occupied -> {occupied_path}")
    if capture.classified is None:
        print(f"classification skipped ({capture.skipped_reason})", file=sys.stderr)
    else:
        c = capture.classified
        print(f"classified: {len(c.tp)} TP / {len(c.fp)} FP / {len(c.fn)} FN -> {classified_path}")
    return 0


def _write_xyz(path: Path, points: np.ndarray) -> None:
    lines = [f"{x:.6f} {y:.6f} {z:.6f}" for x, y, z in points]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def cmd_report(args) -> int:
    text = Path(args.csv).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0] != ",".join(CSV_COLUMNS):
        raise ConfigError(f"{args.csv} is not a voxbench metrics CSV")
    print(f"{'backend':<9} {'precision':>9} {'recall':>7} {'f1':>7} {'f2':>7} {'f3':>7}  params")
    for line in text[1:]:
        cells = _split_csv_line(line)
        row = dict(zip(CSV_COLUMNS, cells))
        print(
            f"{row['backend']:<9} {float(row['precision']):>9.3f} "
            f"{float(row['recall']):>7.3f} {float(row['f1']):>7.3f} "
            f"{float(row['f2']):>7.3f} {float(row['f3']):>7.3f}  {row['params']}"
        )
    return 0


def _split_csv_line(line: str) -> list[str]:
    import csv
    import io

    return next(csv.reader(io.StringIO(line)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxbench",
        description="Benchmark occupancy-mapping backends on synthetic cell episodes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, episode=True):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--seed", type=int, default=None, help="random seed override")
        if episode:
            p.add_argument("--episode", help="episode file path")
            p.add_argument("--backend", choices=BACKEND_NAMES, help="backend name")

    p_record = sub.add_parser("record", help="render and record a synthetic episode")
    add_common(p_record, episode=False)
    p_record.add_argument("--out", required=True, help="output episode path")
    p_record.set_defaults(func=cmd_record)

    p_run = sub.add_parser("run", help="evaluate one backend configuration")
    add_common(p_run)
    p_run.add_argument("--out", help="metrics CSV path")
    p_run.add_argument("--per-frame-out", help="optional per-frame CSV path")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="evaluate one parameter over several values")
    add_common(p_sweep)
    p_sweep.add_argument("--param", help="swept parameter name")
    p_sweep.add_argument("--values", help="comma-separated swept values")
    p_sweep.add_argument("--out", help="metrics CSV path")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_sweep.set_defaults(func=cmd_sweep)

    p_export = sub.add_parser("export", help="export occupied voxels at a timestamp")
    add_common(p_export)
    p_export.add_argument("--time", type=float, required=True, help="episode time in seconds")
    p_export.add_argument("--out", required=True, help="output base path (.xyz)")
    p_export.set_defaults(func=cmd_export)

    p_report = sub.add_parser("report", help="pretty-print a metrics CSV")
    p_report.add_argument("--csv", required=True, help="metrics CSV path")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
