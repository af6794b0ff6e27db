"""Command-line entry point: ``pumpdetect <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .artifact import load_artifact, save_artifact
from .core import PipelineConfig, PipelineError
from .evaluation import EventData, ModelSpec, kfold_cv, scan_suspects
from .featurize import featurize
from .ingest import ClientConfig, DatasetManifest, TradeClient, build_event_dataset, extract_core_days, load_file
from .models import LRParams, RFParams, fit_threshold_detector, train_logreg, train_random_forest
from .replay import inject_pump, replay_detect
from .tradeio import (
    atomic_write_text,
    feature_matrix,
    format_alert,
    read_events,
    read_features,
    read_json,
    read_trades,
    write_features,
    write_json,
    write_pr_curve,
    write_trades,
)

log = logging.getLogger("pumpdetect")

MODEL_KINDS = {"rf": "random_forest", "lr": "logistic_regression", "threshold": "threshold"}


def _time_ms(s: str) -> int:
    """Epoch milliseconds or an ISO-8601 timestamp (UTC when no offset is given)."""
    if s.lstrip("-").isdigit():
        return int(s)
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--config", type=Path, help="JSON file with pipeline settings; flags override it")
    g.add_argument("--chunk-seconds", type=int, help="chunk width s (default 25)")
    g.add_argument("--window-seconds", type=int, help="window length w (default 25200)")
    g.add_argument("--cooldown-seconds", type=int, help="pause after an alert (default 1800)")
    g.add_argument("--exclusive-window", action="store_true", default=None,
                   help="window ends at the chunk before the scored one")


def _add_client_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("exchange client")
    g.add_argument("--base-url")
    g.add_argument("--requests-per-minute", type=float)
    g.add_argument("--page-size", type=int)
    g.add_argument("--max-retries", type=int)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=sorted(MODEL_KINDS), default="rf")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-trees", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--min-samples-leaf", type=int, default=6)
    p.add_argument("--class-weight", choices=["balanced"], default=None)
    p.add_argument("--C", type=float, default=1.0, dest="C")


def pipeline_config(args: argparse.Namespace, base: PipelineConfig | None = None) -> PipelineConfig:
    d = (base or PipelineConfig()).to_dict()
    if getattr(args, "config", None):
        d.update(read_json(args.config))
    for flag, key in (("chunk_seconds", "chunk_seconds"), ("window_seconds", "window_seconds"),
                      ("cooldown_seconds", "cooldown_seconds")):
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    if getattr(args, "exclusive_window", None):
        d["window_includes_current"] = False
    return PipelineConfig.from_dict(d)


def client_config(args: argparse.Namespace) -> ClientConfig:
    over = {k: getattr(args, k) for k in ("base_url", "requests_per_minute", "page_size", "max_retries")
            if getattr(args, k, None) is not None}
    return ClientConfig.from_env(**over)


def model_spec(args: argparse.Namespace) -> ModelSpec:
    return ModelSpec(MODEL_KINDS[args.model],
                     rf=RFParams(n_trees=args.n_trees, max_depth=args.max_depth,
                                 min_samples_leaf=args.min_samples_leaf, seed=args.seed,
                                 class_weight=args.class_weight),
                     lr=LRParams(C=args.C, class_weight=args.class_weight))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pumpdetect", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fetch", help="download trades for one symbol and time range")
    p.add_argument("symbol")
    p.add_argument("--start", required=True, type=_time_ms, help="epoch ms or ISO time")
    p.add_argument("--end", required=True, type=_time_ms)
    p.add_argument("--out", required=True, type=Path)
    _add_client_flags(p)

    p = sub.add_parser("dataset", help="build per-event trade files and a manifest")
    p.add_argument("events", type=Path, help="CSV symbol,exchange,signal_ts_ms,group")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--days-before", type=int, default=7)
    p.add_argument("--days-after", type=int, default=7)
    p.add_argument("--workers", type=int, default=4)
    _add_client_flags(p)

    p = sub.add_parser("featurize", help="trade file -> feature file")
    p.add_argument("trades", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--events", type=Path, help="events CSV used for labels")
    p.add_argument("--symbol", default="", help="only events of this symbol label the file")
    _add_pipeline_flags(p)

    p = sub.add_parser("train", help="feature files -> model artifact")
    p.add_argument("features", nargs="+", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--pr-curve", type=Path, help="threshold model: write the PR curve CSV here")
    _add_model_flags(p)
    _add_pipeline_flags(p)

    p = sub.add_parser("eval", help="k-fold cross-validation on the core days of a dataset")
    p.add_argument("manifest", type=Path)
    p.add_argument("--k", type=int, choices=[5, 10], default=10)
    p.add_argument("--chunk-random", action="store_true", help="split chunks instead of events")
    p.add_argument("--out", required=True, type=Path, help="metrics JSON; a CSV summary is written alongside")
    _add_model_flags(p)
    _add_pipeline_flags(p)

    p = sub.add_parser("replay", help="stream a trade file through a model, print alert JSON lines")
    p.add_argument("trades", type=Path)
    p.add_argument("artifact", type=Path)
    p.add_argument("--symbol", default="")
    p.add_argument("--out", type=Path, help="write alerts here instead of stdout")
    _add_pipeline_flags(p)

    p = sub.add_parser("scan", help="look for unexplained alerts outside the core days")
    p.add_argument("manifest", type=Path)
    p.add_argument("artifact", type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_pipeline_flags(p)

    p = sub.add_parser("inject", help="insert a synthetic pump into a trade file")
    p.add_argument("trades", type=Path)
    p.add_argument("--at-ms", required=True, type=_time_ms)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n-rush", type=int, default=10)
    p.add_argument("--scale", type=float, default=50.0)
    p.add_argument("--seed", type=int, default=0)
    _add_pipeline_flags(p)
    return parser


def cmd_fetch(args) -> int:
    trades = TradeClient(client_config(args)).fetch_trades(args.symbol, args.start, args.end)
    write_trades(args.out, trades)
    print(f"{len(trades)} trades -> {args.out}", file=sys.stderr)
    return 0


def cmd_dataset(args) -> int:
    client = TradeClient(client_config(args))
    manifest = build_event_dataset(read_events(args.events), client.fetch_trades, args.out_dir,
                                   args.days_before, args.days_after, args.workers)
    print(f"{len(manifest.files)} files -> {args.out_dir / 'manifest.json'}", file=sys.stderr)
    return 0


def cmd_featurize(args) -> int:
    config = pipeline_config(args)
    events = read_events(args.events) if args.events else []
    if args.symbol:
        events = [e for e in events if e.symbol == args.symbol]
    feats = featurize(read_trades(args.trades), config, events, args.symbol)
    write_features(args.out, feats.vectors())
    write_json(args.out.with_suffix(".config.json"), config.to_dict())
    print(f"{len(feats)} vectors ({int(feats.y.sum())} positive) -> {args.out}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    config = pipeline_config(args)
    parts = [feature_matrix(read_features(f)) for f in args.features]
    X = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    spec = model_spec(args)
    if spec.kind == "threshold":
        model, curve = fit_threshold_detector(X, y)
        if args.pr_curve:
            write_pr_curve(args.pr_curve, curve.thresholds, curve.precision, curve.recall)
    elif spec.kind == "random_forest":
        model = train_random_forest(X, y, spec.rf)
    else:
        model = train_logreg(X, y, spec.lr)
    save_artifact(args.out, model, config)
    print(f"{spec.kind} trained on {len(y)} rows -> {args.out}", file=sys.stderr)
    return 0


def _core_dataset(manifest: DatasetManifest, config: PipelineConfig) -> list[EventData]:
    data = []
    for ev in manifest.events:
        if DatasetManifest.key(ev) not in manifest.event_files:
            log.warning("no trades for %s; skipped", DatasetManifest.key(ev))
            continue
        trades = extract_core_days(manifest, ev)
        same = [e for e in manifest.events if e.symbol == ev.symbol]
        data.append(EventData(ev, featurize(trades, config, same, ev.symbol)))
    return data


def cmd_eval(args) -> int:
    config = pipeline_config(args)
    manifest = DatasetManifest.load(args.manifest)
    report = kfold_cv(_core_dataset(manifest, config), model_spec(args), args.k, args.seed,
                      grouped=not args.chunk_random, config=config)
    write_json(args.out, report.to_dict())
    atomic_write_text(args.out.with_suffix(".csv"), report.summary_csv())
    m = report.mean()
    print(f"mean precision={m['precision']:.3f} recall={m['recall']:.3f} f1={m['f1']:.3f}", file=sys.stderr)
    return 0


def cmd_replay(args) -> int:
    _, trained = load_artifact(args.artifact)
    config = pipeline_config(args, base=trained)
    alerts = replay_detect(args.trades, args.artifact, config, args.symbol)
    if args.out:
        atomic_write_text(args.out, "".join(format_alert(a) + "\n" for a in alerts))
    else:
        for a in alerts:
            print(format_alert(a), flush=True)
    return 0


def cmd_scan(args) -> int:
    model, trained = load_artifact(args.artifact)
    config = pipeline_config(args, base=trained)
    manifest = DatasetManifest.load(args.manifest)
    series = []
    for entry in manifest.files:
        trades = load_file(manifest, entry)
        if len(trades):
            series.append(featurize(trades, config, symbol=entry.symbol))
    result = scan_suspects(model, series, manifest.events, config)
    write_json(args.out, result.to_dict())
    print(f"{len(result.suspects)} suspects, {len(result.matched)} matched -> {args.out}", file=sys.stderr)
    return 0


def cmd_inject(args) -> int:
    config = pipeline_config(args)
    out = inject_pump(read_trades(args.trades), args.at_ms, args.n_rush, args.scale,
                      chunk_seconds=config.chunk_seconds, seed=args.seed)
    write_trades(args.out, out)
    return 0


COMMANDS = {"fetch": cmd_fetch, "dataset": cmd_dataset, "featurize": cmd_featurize, "train": cmd_train,
            "eval": cmd_eval, "replay": cmd_replay, "scan": cmd_scan, "inject": cmd_inject}


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (PipelineError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"pumpdetect {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
