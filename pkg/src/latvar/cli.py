"""``latvar`` command line: one verb per analysis step.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
error. Diagnostics go to stderr; results go to stdout or ``--output``.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from typing import Sequence

from . import deadline, fusion, predictor, stats, synth, transport
from .errors import DataError, NumericalError
from .trace import emit_trace, ingest_trace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _fmt(v: object) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def render(rows: Sequence[dict[str, object]], fmt: str, precision: int = 6) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    if fmt == "csv":
        out = [",".join(cols)]
        out += [",".join(_fmt(r[c]) for c in cols) for r in rows]
        return "\n".join(out) + "\n"
    cells = [[f"{r[c]:.{precision}f}" if isinstance(r[c], float) else str(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    out = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    out += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(out) + "\n"


def _write(args, text: str) -> None:
    path = getattr(args, "output", None)
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


# -- subcommands -----------------------------------------------------------


def cmd_stats(args) -> None:
    trace = ingest_trace(args.trace)
    series = _column(trace, args.column)
    summary = stats.summarize(series, _floats(args.quantiles))
    row = {"column": args.column, **summary.as_row()}
    _write(args, render([row], args.format))


def _column(trace, name):
    try:
        return trace.column(name)
    except KeyError:
        raise DataError(f"unknown column {name!r}") from None


def cmd_corr(args) -> None:
    trace = ingest_trace(args.trace)
    r = stats.pearson(_column(trace, args.x), _column(trace, args.y))
    _write(args, render([{"x": args.x, "y": args.y, "pearson": r}], args.format))


def cmd_cdf(args) -> None:
    trace = ingest_trace(args.trace)
    pts = stats.cdf_points(_column(trace, args.column))
    if args.format == "csv":
        _write(args, stats.format_cdf(pts))
    else:
        _write(args, render([{"value_ms": v, "fraction": f} for v, f in pts], "table"))


def cmd_fit(args) -> None:
    trace = ingest_trace(args.trace)
    model = predictor.fit(trace, args.kind, decay=args.decay)
    predictor.save_model(model, args.model_out)
    text = predictor.format_model(model)
    if args.format == "table":
        text = render([{k: v for k, v in (line.split("=", 1) for line in text.splitlines())}], "table")
    _write(args, text)


def cmd_predict(args) -> None:
    model = predictor.load_model(args.model)
    field = "n_proposals" if model.kind == predictor.OBJECT_DETECTION else "n_lane_pixels"
    if args.count < 0:
        raise DataError("--count must be >= 0")
    pred = predictor.predict(
        model, lam=args.lam, lambda_inverted=args.lambda_inverted, **{field: args.count}
    )
    _write(args, render([{field: args.count, "predicted_ms": pred}], args.format))


def cmd_eval(args) -> None:
    trace = ingest_trace(args.trace)
    model = predictor.load_model(args.model)
    mode, decay = predictor.parse_calibration(args.calibration)
    report = predictor.evaluate(model, trace, mode, decay=decay, lambda_inverted=args.lambda_inverted)
    row = {
        "frames": len(report.per_frame),
        "mean_real_ms": report.mean_real_ms,
        "mean_pred_ms": report.mean_pred_ms,
        "mean_abs_error_ms": report.mean_abs_error_ms,
        "accuracy_pct": report.accuracy_pct,
    }
    _write(args, render([row], args.format, precision=2))
    if args.frames_out:
        lines = ["frame_id,real_ms,pred_ms,abs_err_ms"]
        lines += [f"{f.frame_id},{f.real_ms:.6f},{f.pred_ms:.6f},{f.abs_err_ms:.6f}" for f in report.per_frame]
        with open(args.frames_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def cmd_deadline(args) -> None:
    trace = ingest_trace(args.trace)
    series = _column(trace, args.column)
    policies = [deadline.DeadlinePolicy.parse(p, args.terminate) for p in args.policy]
    reports = deadline.compare(policies, series)
    _write(args, render([r.as_row() for r in reports], args.format))


def cmd_sim_transport(args) -> None:
    params = transport.load_params(args.params) if args.params else transport.default_params()
    scenario = transport.TransportScenario(args.mechanism, args.bytes, args.subs, args.trials, args.seed)
    lat = transport.simulate_transport(scenario, params, jobs=args.jobs)
    if args.format == "csv":
        _write(args, transport.format_latencies(lat))
    else:
        summary = stats.summarize(lat.ravel())
        _write(args, render([{"mechanism": args.mechanism, **summary.as_row()}], "table", precision=3))


def cmd_sim_fusion(args) -> None:
    config, streams = fusion.load_fusion_config(args.config, args.seed)
    if args.queue_size is not None:
        config = fusion.SyncConfig(
            config.k_streams, args.queue_size, config.slop_ms, config.duration_ms, config.seed
        )
    result = fusion.simulate_fusion(config, streams, backend=args.backend)
    if args.format == "csv":
        _write(args, fusion.format_fusion(result))
    else:
        row = {"fusion_count": result.fusion_count, "worst_delay_ms": result.worst_delay_ms}
        if result.inter_fusion_delays_ms.size:
            s = stats.summarize(result.inter_fusion_delays_ms)
            row.update(mean_delay_ms=s.mean_ms, std_delay_ms=s.std_ms, cv=s.cv)
        row["dropped"] = ";".join(map(str, result.dropped_per_stream))
        _write(args, render([row], "table", precision=3))


def cmd_synth(args) -> None:
    spec = synth.load_spec(args.spec, seed=args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = synth.generate_detailed(spec)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    emit_trace(result.trace, args.out)
    summary = stats.summarize(result.trace.column("end_to_end"))
    if args.output or args.format == "table":
        _write(args, render([{"frames": result.trace.m, "clamped": result.clamped, **summary.as_row()}], args.format))


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--output", "-o", default=argparse.SUPPRESS, help="write results here instead of stdout")
    common.add_argument("--format", choices=("csv", "table"), default=argparse.SUPPRESS)

    def seeded(p, required):
        p.add_argument("--seed", type=int, required=required, default=argparse.SUPPRESS)

    parser = _Parser(prog="latvar", description=__doc__.splitlines()[0], parents=[common])
    seeded(parser, False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("stats", parents=[common], help="variation summary of one column")
    p.add_argument("trace")
    p.add_argument("--column", default="end_to_end")
    p.add_argument("--quantiles", default="0.5,0.8,0.99")
    seeded(p, False)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("corr", parents=[common], help="Pearson correlation of two columns")
    p.add_argument("trace")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    seeded(p, False)
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("cdf", parents=[common], help="empirical CDF points of a column")
    p.add_argument("trace")
    p.add_argument("--column", default="end_to_end")
    seeded(p, False)
    p.set_defaults(func=cmd_cdf)

    p = sub.add_parser("fit", parents=[common], help="fit the latency model and save it")
    p.add_argument("trace")
    p.add_argument("--kind", choices=("od", "ld"), required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--decay", type=float, default=predictor.DEFAULT_DECAY)
    seeded(p, False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict end-to-end latency for one count")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--lambda-inverted", action="store_true")
    seeded(p, False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="score a saved model on a trace")
    p.add_argument("trace")
    p.add_argument("--model", required=True)
    p.add_argument("--calibration", default="per-frame", help="off | per-frame | ewma:<decay>")
    p.add_argument("--lambda-inverted", action="store_true")
    p.add_argument("--frames-out", default=None, help="also write per-frame predictions here")
    seeded(p, False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("deadline", parents=[common], help="deadline policy report")
    p.add_argument("trace")
    p.add_argument("--policy", action="append", required=True, help="worst | mean | q:<q> | fixed:<ms>; repeatable")
    p.add_argument("--terminate", action="store_true")
    p.add_argument("--column", default="end_to_end")
    seeded(p, False)
    p.set_defaults(func=cmd_deadline)

    p = sub.add_parser("sim-transport", parents=[common], help="simulate 1-to-N topic transport")
    p.add_argument("--mechanism", choices=("ipc", "dds"), required=True)
    p.add_argument("--bytes", type=int, required=True)
    p.add_argument("--subs", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--params", default=None)
    p.add_argument("--jobs", type=int, default=1)
    seeded(p, True)
    p.set_defaults(func=cmd_sim_transport)

    p = sub.add_parser("sim-fusion", parents=[common], help="simulate approximate-time fusion")
    p.add_argument("--config", required=True)
    p.add_argument("--queue-size", type=int, default=None, help="override the config's queue_size")
    p.add_argument("--backend", choices=("auto", "python", "compiled"), default="auto")
    seeded(p, True)
    p.set_defaults(func=cmd_sim_fusion)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trace")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    seeded(p, True)
    p.set_defaults(func=cmd_synth)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("latvar: error: a subcommand is required")
        args.format = getattr(args, "format", "csv")
        args.output = getattr(args, "output", None)
        if not hasattr(args, "seed"):
            args.seed = None
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _warn_to_stderr
            args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"latvar: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"latvar: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _warn_to_stderr(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
