"""Command-line front end.

    connlab simulate  --preset field-logs --seed 7 --out corpus.jsonl
    connlab analyze   --input corpus.jsonl --out reports/
    connlab train     --input corpus.jsonl --out model.bin
    connlab eval      --input candidates.jsonl --out eval.json
    connlab select    --model model.bin --input candidates.jsonl --out decisions.jsonl
    connlab config    show --preset field-candidates

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any

import numpy as np

from connlab import analytics
from connlab.binning import binned_mean_curve
from connlab.corpus import (
    CandidateConfig,
    CorpusConfig,
    field_candidate_config,
    field_log_config,
    generate_candidate_sets,
    generate_corpus,
)
from connlab.features import (
    FAST_SLOW_THRESHOLD_MS,
    encode_matrix,
    fit_encoders,
    label_vector,
)
from connlab.forest import ForestParams, ModelFormatError, load, metrics, save, train
from connlab.schema import (
    Format,
    IngestError,
    SchemaError,
    read_attempts,
    write_attempts,
)
from connlab.selection import (
    read_candidate_sets,
    replay,
    select_ml_many,
    split_events,
    what_if_eval,
    write_candidate_sets,
)
from connlab.sim import TransitionTrace

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

PRESETS = {
    "field-logs": field_log_config,
    "field-candidates": field_candidate_config,
}

log = logging.getLogger("connlab")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# configuration


def load_config(args: argparse.Namespace) -> CorpusConfig | CandidateConfig:
    """Config from ``--config`` or ``--preset``, with command-line overrides applied."""
    if args.config and args.preset:
        raise UsageError("give either --config or --preset, not both")
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
            kind = doc.get("kind", "logs")
            body = doc.get("config", doc)
            cfg = CandidateConfig.from_dict(body) if kind == "candidates" else CorpusConfig.from_dict(body)
        except (ValueError, TypeError, KeyError, AttributeError) as exc:
            raise DataError(f"bad config {path}: {exc}") from None
    elif args.preset:
        cfg = PRESETS[args.preset]()
    else:
        raise UsageError("one of --config or --preset is required")
    return _override(cfg, args)


def _override(cfg: CorpusConfig | CandidateConfig, args: argparse.Namespace) -> CorpusConfig | CandidateConfig:
    n = getattr(args, "n", None)
    seed = getattr(args, "seed", None)
    timeout = getattr(args, "timeout_ms", None)
    if isinstance(cfg, CandidateConfig):
        corpus = cfg.corpus if timeout is None else replace(cfg.corpus, timeout_ms=timeout)
        changes: dict[str, Any] = {"corpus": corpus}
        if n is not None:
            changes["n_events"] = n
        if seed is not None:
            changes["rng_seed"] = seed
        return replace(cfg, **changes)
    changes = {}
    if n is not None:
        changes["n_attempts"] = n
    if seed is not None:
        changes["rng_seed"] = seed
    if timeout is not None:
        changes["timeout_ms"] = timeout
    return replace(cfg, **changes)


def forest_params(args: argparse.Namespace) -> ForestParams:
    try:
        return ForestParams(
            n_trees=args.trees,
            max_depth=args.max_depth,
            class_weight_fast=args.class_weight,
            rng_seed=args.seed if args.seed is not None else 0,
            n_jobs=args.jobs,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_json(path: Path | None, doc: Any) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _json_default(o: Any) -> Any:
    if isinstance(o, np.generic):
        return o.item()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _read_logs(path: str, fmt: str | None):
    res = read_attempts(path, fmt)
    for d in res.diagnostics:
        log.info("row %d %s: %s", d.row, d.action, d.reason)
    if res.rejected:
        log.warning("%d rows rejected while reading %s", len(res.rejected), path)
    return res.attempts


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    if isinstance(cfg, CandidateConfig):
        write_candidate_sets(out, generate_candidate_sets(cfg))
        return EXIT_OK
    corpus = generate_corpus(cfg, with_traces=args.traces is not None)
    write_attempts(out, corpus.attempts, args.format)
    if args.traces is not None:
        with open(args.traces, "w") as fh:
            for tr in corpus.traces:
                fh.write(json.dumps(tr.to_record(), separators=(",", ":")) + "\n")
    _write_json(Path(str(out) + ".calibration.json"), asdict(corpus.report))
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    cls = None
    if args.cls is not None:
        try:
            cls = analytics.TimeCostClass.parse(args.cls)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    attempts = _read_logs(args.input, args.format)
    if not attempts:
        raise DataError(f"{args.input}: empty corpus")
    traces = None
    if args.traces:
        with open(args.traces) as fh:
            traces = [TransitionTrace.from_record(json.loads(line)) for line in fh if line.strip()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    report = analytics.measurement_report(attempts, traces)
    if cls is not None:
        report["scan_time_quantiles"] = {k: v for k, v in report.get("scan_time_quantiles", {}).items()
                                         if k == cls.value}
    _write_json(out / "report.json", report)

    tables = {}
    times = analytics.success_times(attempts)
    if times:
        tables["success_time_cdf.csv"] = analytics.EmpiricalCdf.of(times).to_csv("connection_time_ms")
        pb = analytics.phase_proportion_cdfs(attempts)
        for cls, per_phase in pb.cdfs.items():
            for phase, cdf in per_phase.items():
                tables[f"phase_share_{cls.value}_{phase}.csv"] = cdf.to_csv(f"{phase}_share")
        ok = [a for a in attempts if a.connection_time_ms is not None]
        for name, spec in analytics.CORRELATION_FEATURES.items():
            x = [getattr(a, name) for a in ok]
            tables[f"mean_time_by_{name}.csv"] = binned_mean_curve(x, [a.connection_time_ms for a in ok], spec).to_csv()
        if "error" not in report.get("correlation", {}):
            tables["correlation.csv"] = analytics.correlation_report(attempts).to_csv()
    props = analytics.outcome_proportions(attempts)
    tables["outcomes.csv"] = "outcome,fraction\n" + "".join(f"{o.value},{v!r}\n" for o, v in props.items())
    if traces is not None:
        tables["transitions.csv"] = analytics.transition_matrix(traces).to_csv()
    for name, text in tables.items():
        (out / name).write_text(text)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    attempts = [a for a in _read_logs(args.input, args.format) if a.outcome.willing]
    if not attempts:
        raise DataError(f"{args.input}: no willing attempts to train on")
    y = label_vector(attempts, args.threshold_ms)
    perm = np.random.default_rng([args.seed or 0, 0x7A1]).permutation(len(attempts))
    n_val = int(round(args.validation * len(attempts)))
    tr, va = np.sort(perm[n_val:]), np.sort(perm[:n_val])
    tr_rows = [attempts[i] for i in tr]
    enc = fit_encoders(tr_rows)
    try:
        model = train(encode_matrix(tr_rows, enc), y[tr], forest_params(args), enc)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    save(model, args.out)
    doc: dict[str, Any] = {"summary": asdict(model.summary), "n_validation": int(n_val)}
    if n_val:
        va_rows = [attempts[i] for i in va]
        doc["validation"] = metrics(y[va], model.predict_many(encode_matrix(va_rows, enc))).to_dict()
    _write_json(Path(args.metrics) if args.metrics else None, doc)
    return EXIT_OK


def _read_sets(path: str):
    try:
        return read_candidate_sets(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_eval(args: argparse.Namespace) -> int:
    sets = _read_sets(args.input)
    usable = [cs for cs in sets if cs.has_truth]
    if not usable:
        raise DataError(f"{args.input}: no candidate sets carry ground truth")
    seed = args.seed if args.seed is not None else 0
    if args.model:
        model = load(args.model)
        _, test = split_events(usable, seed)
        base, ml, cand = replay(model, test, args.decision_threshold, args.threshold_ms)
        doc = {"n_events": len(sets), "n_excluded": len(sets) - len(usable), "n_replay": len(test),
               "threshold": args.decision_threshold, "baseline": asdict(base), "ml": asdict(ml),
               "candidate_metrics": cand.to_dict()}
    else:
        report, model = what_if_eval(sets, forest_params(args), seed, threshold=args.decision_threshold,
                                     threshold_ms=args.threshold_ms)
        doc = report.to_dict()
        if args.save_model:
            save(model, args.save_model)
    _write_json(Path(args.out) if args.out else None, doc)
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    model = load(args.model)
    sets = _read_sets(args.input)
    decisions = select_ml_many(model, sets, args.decision_threshold)
    lines = "".join(json.dumps(d.to_record(), separators=(",", ":")) + "\n" for d in decisions)
    if args.out:
        Path(args.out).write_text(lines)
    else:
        sys.stdout.write(lines)
    return EXIT_OK


def cmd_config(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    kind = "candidates" if isinstance(cfg, CandidateConfig) else "logs"
    _write_json(Path(args.out) if args.out else None, {"kind": kind, "config": cfg.to_dict()})
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="connlab", description="Connection set-up simulation, analytics and AP selection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seed(sp):
        sp.add_argument("--seed", type=_u64, default=None, help="master random seed")

    def cfg_args(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--n", type=_nonneg, help="number of attempts or events")
        sp.add_argument("--timeout-ms", type=_positive)
        seed(sp)

    def forest_args(sp):
        sp.add_argument("--trees", type=_positive, default=100)
        sp.add_argument("--max-depth", type=_positive, default=90)
        sp.add_argument("--class-weight", type=float, default=0.3, help="FAST class weight (SLOW is 1)")
        sp.add_argument("--jobs", type=_positive, default=1)
        sp.add_argument("--threshold-ms", type=_positive, default=FAST_SLOW_THRESHOLD_MS,
                        help="FAST/SLOW boundary in ms")

    s = sub.add_parser("simulate", help="generate a log or candidate-set corpus")
    cfg_args(s)
    s.add_argument("--format", choices=[f.value for f in Format], default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--traces", help="also write transition traces (JSONL)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", help="measurement reports for a log corpus")
    s.add_argument("--input", required=True)
    s.add_argument("--format", choices=[f.value for f in Format], default=None)
    s.add_argument("--traces")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--class", dest="cls", help="restrict scan quantiles to one class (0-7, 7-15, 15-30)")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("train", help="train a FAST/SLOW forest on a log corpus")
    s.add_argument("--input", required=True)
    s.add_argument("--format", choices=[f.value for f in Format], default=None)
    s.add_argument("--out", required=True, help="model file")
    s.add_argument("--metrics", help="write validation metrics here (default: stdout)")
    s.add_argument("--validation", type=float, default=0.2)
    forest_args(s)
    seed(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="what-if replay on a candidate-set corpus")
    s.add_argument("--input", required=True)
    s.add_argument("--model", help="replay this model instead of training one")
    s.add_argument("--save-model")
    s.add_argument("--decision-threshold", type=float, default=0.5)
    s.add_argument("--out")
    forest_args(s)
    seed(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("select", help="pick an AP for every candidate set")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--decision-threshold", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("config", help="print a resolved configuration")
    s.add_argument("action", choices=["show", "validate"])
    cfg_args(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_config)
    return p


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"connlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, IngestError, SchemaError, ModelFormatError, analytics.EmptyInputError) as exc:
        print(f"connlab: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"connlab: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
