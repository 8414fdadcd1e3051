"""``eigenscan`` command-line interface.

Exit codes: 0 success (an alarm is not an error), 1 usage error, 2 data
error, 3 infeasible calibration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, calibration, montecarlo
from .detector import PROCEDURES, Detector, DetectorConfig, trajectory
from .errors import CalibrationInfeasibleError, DataError, EigenscanError, InvalidArgumentError
from .tracy_widom import default_table

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3

TABLE1_DELTAS = (2, 6, 10, 15, 20)
TABLE2_ARLS = (5000, 10000, 20000, 30000, 40000, 50000)


class UsageError(EigenscanError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None = None
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))


def _manifest(args) -> RunManifest:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    return RunManifest(args.command, params, getattr(args, "seed", None))


def _json_out(payload, args, out):
    payload = {**payload, "manifest": asdict(_manifest(args))}
    out.write(json.dumps(payload, default=montecarlo._json_default) + "\n")


def _csv_out(header, rows, args, out):
    """Write CSV to --output (plus a sidecar manifest) or to ``out``."""
    path = getattr(args, "output", None)
    fh = open(path, "w", newline="") if path else out
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path:
            fh.close()
    if path:
        Path(str(path) + ".manifest.json").write_text(json.dumps(asdict(_manifest(args)), default=str) + "\n")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _finite(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
    return value


def _arl(text):
    value = _finite(text)
    if value <= 1:
        raise argparse.ArgumentTypeError(f"target ARL must exceed 1, got {value:g}")
    return value


def _grid(text):
    """Parse ``start:stop:step`` (inclusive stop) into a list of floats."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
    if not step > 0 or stop < start:
        raise argparse.ArgumentTypeError(f"empty or invalid grid {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _method_name(procedure, method):
    if method is None:
        method = "corrected" if procedure == "max" else "tw"
    return {"tw": "tw-independent", "corrected": "tw-corrected"}[method]


def _calibrate(procedure, w, p, arl, method):
    method = _method_name(procedure, method)
    if procedure == "min":
        if method != "tw-independent":
            raise UsageError("the min procedure supports only --method tw")
        return calibration.threshold_tw_min(w, p, arl)
    if method == "tw-corrected":
        return calibration.threshold_corrected(w, p, arl)
    return calibration.threshold_tw_max(w, p, arl)


def _config(args, p):
    kind = PROCEDURES[args.procedure]
    if args.b is not None:
        return DetectorConfig(kind, p, args.w, args.b)
    if args.arl is not None:
        return DetectorConfig.calibrated(kind, p, args.w, args.arl, _method_name(args.procedure, args.method))
    raise UsageError("one of --b or --arl is required")


# calibrate -----------------------------------------------------------------


def cmd_calibrate(args, out):
    res = _calibrate(args.procedure, args.w, args.p, args.arl, args.method)
    if args.json:
        _json_out(res.as_dict(), args, out)
    else:
        label = "T_alpha" if res.method == "tw-independent" else "b_std"
        out.write(f"b = {res.threshold_b:.6f}\n")
        out.write(f"{label} = {res.quantile:.6f}\n")
        out.write(f"method = {res.method}, procedure = {res.procedure}, w = {res.w}, p = {res.p}, arl = {res.target_arl:g}\n")
    return EXIT_OK


# detect --------------------------------------------------------------------


def _read_rows(fh, skip_header, p=None):
    """Yield float rows from CSV text, raising DataError with line numbers."""
    for lineno, line in enumerate(fh, start=1):
        if lineno == 1 and skip_header:
            continue
        line = line.strip()
        if not line:
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise DataError(f"line {lineno}: malformed row {line[:60]!r}") from None
        if not all(math.isfinite(v) for v in row):
            raise DataError(f"line {lineno}: non-finite value")
        if p is None:
            p = len(row)
        elif len(row) != p:
            raise DataError(f"line {lineno}: expected {p} columns, got {len(row)}")
        yield row


def _peek_dimension(rows):
    try:
        first = next(rows)
    except StopIteration:
        raise DataError("input has no observations") from None
    return len(first), first


def cmd_detect(args, out):
    fh = sys.stdin if args.input in (None, "-") else open(args.input, newline="")
    try:
        rows = _read_rows(fh, args.header, args.p)
        p, first = _peek_dimension(rows)
        config = _config(args, p)

        read = [0]

        def stream():
            read[0] += 1
            yield first
            for row in rows:
                read[0] += 1
                yield row

        if args.trajectory:
            traj = trajectory(config, stream())
            with open(args.trajectory, "w", newline="") as tf:
                traj.write_csv(tf)
            alarm, steps = traj.alarm_time, read[0]
            statistic = float(traj.statistic[traj.t == alarm][0]) if alarm is not None else None
            singular = statistic is not None and math.isinf(statistic)
        else:
            det = Detector(config)
            alarm, statistic = None, None
            for row in stream():
                event = det.step(row)
                if event.kind == "alarm":
                    alarm, statistic = event.t, event.statistic
                    break
            steps, singular = det.t, det.singular
    finally:
        if fh is not sys.stdin:
            fh.close()

    report = {
        "alarm_time": alarm,
        "statistic": statistic,
        "singular": singular,
        "steps_read": steps,
        "config": config.as_dict(),
    }
    if args.json:
        _json_out(report, args, out)
    elif alarm is None:
        out.write(f"no alarm after {steps} steps (b = {config.threshold_b:.6g})\n")
    else:
        note = " (singular window)" if singular else ""
        out.write(f"alarm at t = {alarm}{note}, statistic = {statistic:.6g}, b = {config.threshold_b:.6g}\n")
    return EXIT_OK


# simulate ------------------------------------------------------------------


def _emit_data(args, out):
    if args.regime == "null":
        spec = montecarlo.GeneratorSpec("null", args.p, seed=args.seed)
    else:
        spec = montecarlo.GeneratorSpec(args.regime, args.p, args.theta, change_at=args.change_at, seed=args.seed)
    data = montecarlo.ObservationStream(spec).block(1, args.length)
    with open(args.emit_data, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in data:
            writer.writerow([repr(float(v)) for v in row])
    Path(args.emit_data + ".manifest.json").write_text(json.dumps(asdict(_manifest(args))) + "\n")
    out.write(f"wrote {args.length} rows to {args.emit_data}\n")
    return EXIT_OK


def cmd_simulate(args, out):
    if args.replicates is not None and args.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    if args.regime is None:
        args.regime = "null" if args.metric == "arl" else "spiked"
    if args.emit_data:
        if args.regime != "null" and args.theta is None:
            raise UsageError("--theta is required for non-null regimes")
        return _emit_data(args, out)
    if args.metric == "arl" and args.regime != "null":
        raise UsageError("ARL is defined on null streams; use --regime null")
    if args.metric == "edd" and args.regime == "null":
        raise UsageError("EDD needs --regime spiked or rank1")
    if args.metric == "edd" and args.theta is None and not args.sweep_theta:
        raise UsageError("--theta (or --sweep-theta) is required for EDD")
    if args.sweep_theta and args.metric != "edd":
        raise UsageError("--sweep-theta applies to EDD only")
    if args.sweep_b and args.sweep_theta:
        raise UsageError("sweep over b or theta, not both")
    if args.b is None and args.arl is None and not args.sweep_b:
        raise UsageError("one of --b, --arl or --sweep-b is required")
    replicates = args.replicates or 200

    b_values = args.sweep_b or [None]
    theta_values = args.sweep_theta or [args.theta]
    reports = []
    for b in b_values:
        for theta in theta_values:
            if b is not None:
                config = DetectorConfig(PROCEDURES[args.procedure], args.p, args.w, b)
            else:
                config = _config(args, args.p)
            if args.metric == "arl":
                rep = montecarlo.estimate_arl(config, replicates, args.step_cap, args.seed, args.threads)
            else:
                gen = montecarlo.GeneratorSpec(args.regime, args.p, theta, seed=args.seed)
                rep = montecarlo.estimate_edd(
                    config, gen, replicates, step_cap=args.step_cap or 100_000, threads=args.threads
                )
                if config.kind == "max-eig":
                    bound = calibration.edd_lower_bound(config.threshold_b, config.w, theta)
                    rep.settings["edd_lower_bound"] = bound.value
                rep.settings["kl_delay_bound"] = (
                    calibration.kl_delay_bound(args.arl, theta) if args.arl else None
                )
            reports.append(rep)

    if args.format == "csv" or (args.format is None and len(reports) > 1):
        text = montecarlo.reports_to_csv(reports)
        lines = list(csv.reader(text.splitlines()))
        _csv_out(lines[0], lines[1:], args, out)
    elif len(reports) == 1:
        _json_out(reports[0].as_dict(), args, out)
    else:
        _json_out({"reports": [r.as_dict() for r in reports]}, args, out)
    return EXIT_OK


# corr-study ----------------------------------------------------------------


def cmd_corr_study(args, out):
    rows = montecarlo.correlation_study(
        args.w, args.p, args.deltas, args.replicates, args.seed, args.stream_length, args.threads
    )
    header = list(rows[0]) + ["cross_moment_bound", "local_approx"]
    table = []
    with warnings.catch_warnings():
        # the local approximation is reported at every lag, in range or not
        warnings.simplefilter("ignore")
        for row in rows:
            d = row["delta"]
            bound = calibration.cross_moment_upper_bound(args.w, args.p, d) if d < args.w else ""
            approx = calibration.local_correlation_approx(args.w, args.p, d)
            table.append(list(row.values()) + [bound, approx])
    _csv_out(header, table, args, out)
    return EXIT_OK


# table ---------------------------------------------------------------------


def cmd_table(args, out):
    w, p = 200, 10
    rows = []
    if args.which == 1:
        header = ["row"] + [f"delta={d}" for d in TABLE1_DELTAS]
        if args.replicates:
            sim = montecarlo.correlation_study(w, p, TABLE1_DELTAS, args.replicates, args.seed, threads=args.threads)
            rows.append(["simulation"] + [r["cross_moment"] for r in sim])
        rows.append(["upper bound"] + [calibration.cross_moment_upper_bound(w, p, d) for d in TABLE1_DELTAS])
    else:
        header = ["row"] + [f"arl={a}" for a in TABLE2_ARLS]
        if args.replicates:
            sim = montecarlo.estimate_thresholds(w, p, TABLE2_ARLS, args.replicates, args.seed, threads=args.threads)
            rows.append(["simulation"] + [r.point_estimate for r in sim])
        rows.append(["TW approx"] + [calibration.threshold_tw_max(w, p, a).threshold_b for a in TABLE2_ARLS])
        rows.append(["corrected"] + [calibration.threshold_corrected(w, p, a).threshold_b for a in TABLE2_ARLS])
    _csv_out(header, [[r[0]] + [f"{v:.4f}" for v in r[1:]] for r in rows], args, out)
    return EXIT_OK


def cmd_tw_table(args, out):
    text = default_table().to_csv()
    lines = list(csv.reader(text.splitlines()))
    _csv_out(lines[0], lines[1:], args, out)
    return EXIT_OK


# parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eigenscan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def detector_flags(sp, need_w=True):
        sp.add_argument("--w", type=_positive_int, required=need_w, help="window length")
        sp.add_argument("--procedure", choices=("max", "min"), default="max")
        sp.add_argument("--b", type=_finite, help="threshold")
        sp.add_argument("--arl", type=_arl, help="calibrate the threshold for this ARL")
        sp.add_argument("--method", choices=("tw", "corrected"), help="calibration method for --arl")

    sp = sub.add_parser("calibrate", help="analytic threshold for a target ARL")
    sp.add_argument("--w", type=_positive_int, required=True)
    sp.add_argument("--p", type=_positive_int, required=True)
    sp.add_argument("--arl", type=_arl, required=True)
    sp.add_argument("--procedure", choices=("max", "min"), default="max")
    sp.add_argument("--method", choices=("tw", "corrected"))
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("detect", help="run a detector over CSV observations")
    sp.add_argument("input", nargs="?", default="-", help="CSV file, or - for stdin")
    sp.add_argument("--header", action="store_true", help="skip the first line")
    sp.add_argument("--p", type=_positive_int, help="expected row width (default: first row)")
    detector_flags(sp)
    sp.add_argument("--trajectory", metavar="PATH", help="write t,statistic,threshold,alarmed to PATH")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("simulate", help="Monte Carlo ARL / EDD")
    sp.add_argument("--metric", choices=("arl", "edd"), default="arl")
    sp.add_argument("--regime", choices=("null", "spiked", "rank1"))
    sp.add_argument("--theta", type=_finite)
    sp.add_argument("--p", type=_positive_int, required=True)
    detector_flags(sp)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--step-cap", type=_positive_int)
    sp.add_argument("--threads", type=_positive_int)
    sp.add_argument("--sweep-b", type=_grid, metavar="START:STOP:STEP")
    sp.add_argument("--sweep-theta", type=_grid, metavar="START:STOP:STEP")
    sp.add_argument("--format", choices=("json", "csv"))
    sp.add_argument("--output", metavar="PATH", help="CSV destination (a manifest is written alongside)")
    sp.add_argument("--emit-data", metavar="PATH", help="write a synthetic stream instead of simulating")
    sp.add_argument("--length", type=_positive_int, default=6000, help="rows for --emit-data")
    sp.add_argument("--change-at", type=int, default=0, help="change time for --emit-data")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("corr-study", help="correlation of scan statistics across lags")
    sp.add_argument("--w", type=_positive_int, required=True)
    sp.add_argument("--p", type=_positive_int, required=True)
    sp.add_argument("--deltas", type=_int_list, default=list(TABLE1_DELTAS))
    sp.add_argument("--replicates", type=_positive_int, default=20)
    sp.add_argument("--stream-length", type=_positive_int)
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--threads", type=_positive_int)
    sp.add_argument("--output", metavar="PATH")
    sp.set_defaults(func=cmd_corr_study)

    sp = sub.add_parser("table", help="reproduce the w=200, p=10 comparison tables")
    sp.add_argument("--which", type=int, choices=(1, 2), required=True)
    sp.add_argument("--replicates", type=_positive_int, help="also simulate the simulation row")
    sp.add_argument("--seed", type=_seed, default=0)
    sp.add_argument("--threads", type=_positive_int)
    sp.add_argument("--output", metavar="PATH")
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("tw-table", help="export the embedded Tracy-Widom table")
    sp.add_argument("--output", metavar="PATH")
    sp.set_defaults(func=cmd_tw_table)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except CalibrationInfeasibleError as exc:
        print(f"eigenscan: calibration infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DataError as exc:
        print(f"eigenscan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, InvalidArgumentError) as exc:
        print(f"eigenscan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"eigenscan: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
