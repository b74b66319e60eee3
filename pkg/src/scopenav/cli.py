"""Command-line entry points.

Subcommands: analyze (trajectory metrics and paired comparison), register
(fiducial file to transform matrix), simulate (stream a scenario), serve
(run the session server), slice (volume plane to PNG).

Exit codes: 0 success, 2 usage error, 3 data error, 4 network error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NETWORK = 4


class DataError(Exception):
    pass


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# analyze


def _analyze_one(path: str, threshold: float) -> dict:
    from scopenav.geometry.analytics import analyze_trajectory
    from scopenav.geometry.trajectory import TrajectoryError, load_trajectory

    try:
        trajectory = load_trajectory(path)
    except (OSError, TrajectoryError) as exc:
        return {"file": path, "error": str(exc)}
    report = analyze_trajectory(trajectory, threshold)
    return {
        "file": path,
        "n_samples": report.n_samples,
        "outlier_fraction": report.outlier_fraction,
        "hull_volume_mm3": report.hull_volume_mm3,
        "path_length_mm": report.path_length_mm,
        **({"note": report.note} if report.note else {}),
    }


def _fmt(value, width=14, decimals=4) -> str:
    if value is None:
        return "-".rjust(width)
    return f"{value:.{decimals}f}".rjust(width)


def _pair_rows(records: dict[str, dict], baseline: str, treatment: str) -> list[dict]:
    from scopenav.geometry.analytics import pct_change

    rows = []
    for title, key in (
        ("Convex Hull Volume", "hull_volume_mm3"),
        ("Total Distance Traveled", "path_length_mm"),
    ):
        base = records[baseline].get(key)
        treat = records[treatment].get(key)
        change = None
        if base not in (None, 0) and treat is not None:
            change = pct_change(base, treat)
        rows.append({"metric": title, "baseline": base, "treatment": treat,
                     "pct_change": change})
    return rows


def cmd_analyze(args) -> int:
    records = {}
    any_error = False
    for path in args.trajectories:
        record = _analyze_one(path, args.threshold)
        records[path] = record
        any_error = any_error or "error" in record

    pair_rows = []
    if args.pair:
        parts = args.pair.split(":")
        if len(parts) != 2:
            return _fail(EXIT_USAGE, "--pair needs baseline:treatment")
        baseline, treatment = parts
        missing = [p for p in (baseline, treatment) if p not in records]
        if missing:
            return _fail(EXIT_USAGE, f"--pair names files not analyzed: {missing}")
        if "error" in records[baseline] or "error" in records[treatment]:
            any_error = True
        else:
            pair_rows = _pair_rows(records, baseline, treatment)

    if args.format == "machine":
        for record in records.values():
            print(json.dumps(record))
        for row in pair_rows:
            print(json.dumps({"pair": row}))
    else:
        header = (
            f"{'trajectory':<32}{'n_samples':>10}{'outlier_frac':>14}"
            f"{'hull_volume_mm3':>18}{'path_length_mm':>16}"
        )
        print(header)
        print("-" * len(header))
        for path, record in records.items():
            name = Path(path).name[:31]
            if "error" in record:
                print(f"{name:<32}  error: {record['error']}")
                continue
            print(
                f"{name:<32}{record['n_samples']:>10}"
                f"{_fmt(record['outlier_fraction'], 14)}"
                f"{_fmt(record['hull_volume_mm3'], 18, 2)}"
                f"{_fmt(record['path_length_mm'], 16, 2)}"
            )
        if pair_rows:
            print()
            print(f"{'':<26}{'baseline':>14}{'treatment':>14}{'% Change':>12}")
            for row in pair_rows:
                print(
                    f"{row['metric']:<26}"
                    f"{_fmt(row['baseline'], 14, 2)}"
                    f"{_fmt(row['treatment'], 14, 2)}"
                    f"{_fmt(row['pct_change'], 12, 2)}"
                )
    return EXIT_DATA if any_error else EXIT_OK


# ---------------------------------------------------------------------------
# register


def cmd_register(args) -> int:
    from scopenav.rigid import RegistrationError, load_fiducial_pairs, save_transform, solve_rigid

    try:
        pairs = load_fiducial_pairs(args.pairs)
        result = solve_rigid(pairs)
    except (OSError, RegistrationError, ValueError) as exc:
        return _fail(EXIT_DATA, str(exc))
    save_transform(args.output, result.transform)
    print(f"fre_mm: {result.fre:.6f}")
    print(f"pairs: {len(pairs)}")
    print(f"matrix: {args.output}")
    if args.format == "machine":
        print(json.dumps({
            "fre_mm": result.fre,
            "per_point_residuals_mm": result.per_point_residuals,
            "matrix_file": str(args.output),
        }))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    from scopenav.simulator import SimulatorError, load_scenario, stream

    try:
        scenario = load_scenario(args.scenario)
    except (OSError, SimulatorError) as exc:
        return _fail(EXIT_DATA, f"scenario: {exc}")
    if args.seed is not None:
        scenario.seed = args.seed
    host, port = args.host, args.port
    if ":" in args.endpoint:
        host, port_text = args.endpoint.rsplit(":", 1)
        port = int(port_text)
    elif args.endpoint:
        host = args.endpoint
    try:
        summary = stream(scenario, host=host, port=port, listen=args.listen)
    except SimulatorError as exc:
        return _fail(EXIT_NETWORK, str(exc))
    print(f"sent: {summary.sent}")
    print(f"dropped: {summary.dropped}")
    print(f"duration_s: {summary.duration_s:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    from scopenav.server.config import ConfigError, load_session_config
    from scopenav.server.service import run_server

    overrides = {
        "igtl_port": args.port,
        "viewer_port": args.viewer_port,
        "threshold": args.threshold if args.threshold_set else None,
        "ui_dir": args.ui_dir,
    }
    try:
        config = load_session_config(args.config, overrides)
    except (OSError, ConfigError) as exc:
        return _fail(EXIT_DATA, f"config: {exc}")
    try:
        run_server(config)
    except OSError as exc:
        return _fail(EXIT_NETWORK, str(exc))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


# ---------------------------------------------------------------------------
# slice


def _parse_csv_floats(text: str, n: int, what: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != n:
        raise DataError(f"{what} needs {n} comma-separated values")
    return np.array([float(v) for v in parts])


def cmd_slice(args) -> int:
    from scopenav.volume import VolumeError, load_nrrd, reslice_plane, slice_axis, slice_to_png

    try:
        volume = load_nrrd(args.volume)
        if args.axis is not None:
            image = slice_axis(volume, args.axis, args.index)
        elif args.origin and args.basis:
            origin = _parse_csv_floats(args.origin, 3, "--origin")
            basis_values = _parse_csv_floats(args.basis, 6, "--basis")
            basis = basis_values.reshape(2, 3)
            basis /= np.linalg.norm(basis, axis=1)[:, None]
            width, height = (int(v) for v in args.size.split("x"))
            spacing = _parse_csv_floats(args.spacing, 2, "--spacing")
            image = reslice_plane(volume, origin, basis, width, height,
                                  (spacing[0], spacing[1]))
        else:
            return _fail(EXIT_USAGE, "need --axis/--index or --origin/--basis")
        png = slice_to_png(image, args.window, args.level)
    except (OSError, VolumeError, DataError, ValueError) as exc:
        return _fail(EXIT_DATA, str(exc))
    Path(args.output).write_bytes(png)
    print(f"wrote {args.output} ({image.width}x{image.height})")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scopenav",
        description="Tracked-ureteroscope navigation: analytics, registration, "
        "simulation, and the live session server.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="trajectory metrics, optionally paired")
    p.add_argument("trajectories", nargs="+", help="trajectory CSV files")
    p.add_argument("--threshold", type=float, default=3.0,
                   help="Mahalanobis outlier threshold (default 3.0)")
    p.add_argument("--pair", help="baseline:treatment file paths for %% change rows")
    p.add_argument("--format", choices=("table", "machine"), default="table")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("register", help="solve rigid transform from fiducial pairs")
    p.add_argument("pairs", help="CSV: label, tx, ty, tz, cx, cy, cz")
    p.add_argument("--output", default="registration.txt", help="matrix file to write")
    p.add_argument("--format", choices=("table", "machine"), default="table")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("simulate", help="stream a scenario to a listening server")
    p.add_argument("scenario", help="scenario key-value file")
    p.add_argument("endpoint", nargs="?", default="", help="host or host:port")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=18944)
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--listen", action="store_true",
                   help="swap roles: wait for the peer to connect, then stream")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the live navigation session server")
    p.add_argument("--config", required=True, help="session config file")
    p.add_argument("--port", type=int, default=None, help="tracker (IGTL) port")
    p.add_argument("--viewer-port", type=int, default=None, help="viewer channel port")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--ui-dir", default=None, help="static viewer files to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("slice", help="extract a CT plane as PNG")
    p.add_argument("volume", help="NRRD volume")
    p.add_argument("output", help="output PNG path")
    p.add_argument("--axis", type=int, choices=(0, 1, 2), default=None)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--origin", help="x,y,z world mm of pixel (0,0)")
    p.add_argument("--basis", help="ux,uy,uz,vx,vy,vz in-plane directions")
    p.add_argument("--size", default="256x256", help="WxH pixels")
    p.add_argument("--spacing", default="1,1", help="sx,sy mm per pixel")
    p.add_argument("--window", type=float, default=400.0)
    p.add_argument("--level", type=float, default=40.0)
    p.set_defaults(func=cmd_slice)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve":
        args.threshold_set = args.threshold is not None
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
