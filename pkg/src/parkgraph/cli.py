"""Command-line entry point: synth, ingest, preprocess, train, eval, predict, serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import urllib.error
import urllib.request
from dataclasses import fields
from datetime import timedelta
from pathlib import Path

from .data import INTERVAL, DatasetSplit, FrameSeries, LotRegistry, format_timestamp, parse_event_log, \
    parse_timestamp, resample, split_by_fraction, split_dataset, write_event_log
from .encoders import KINDS, EncoderConfig

log = logging.getLogger("parkgraph")

BASELINE_METHODS = ("ar4", "seasonal_day", "seasonal_week")


class CliError(Exception):
    pass


# -- config -----------------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    unknown = set(cfg) - {"train", "encoder", "synth", "paths"}
    if unknown:
        raise CliError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _pick(cls, values: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise CliError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return values


def _path(args, name: str, default: str) -> Path:
    """Explicit flag, then config ``paths`` entry, then a file in ``--out``."""
    flag = getattr(args, name, None)
    if flag:
        return Path(flag)
    configured = args.config_data.get("paths", {}).get(name)
    return Path(configured) if configured else args.out / default


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _read_meta(path: Path) -> dict:
    meta = path.with_suffix(".meta.json")
    if not meta.exists():
        raise CliError(f"missing {meta}; run the producing step first")
    return json.loads(meta.read_text())


# -- subcommands ------------------------------------------------------------


def cmd_synth(args) -> None:
    from .synth import SynthSpec, generate_synthetic

    values = dict(args.config_data.get("synth", {}))
    for key in ("weeks", "clusters", "spatial_correlation", "noise"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    if "clusters" in values and "lots_per_cluster" not in values and values["clusters"] != 27:
        values["lots_per_cluster"] = 12
    spec = SynthSpec(**_pick(SynthSpec, values))
    registry, events = generate_synthetic(spec, args.seed)
    registry.write_csv(_path(args, "registry", "registry.csv"))
    write_event_log(events, _path(args, "events", "events.csv"))
    _write_json(args.out / "synth.json", {**spec.to_dict(), "seed": args.seed})
    print(f"wrote {len(registry)} lots and {len(events)} events to {args.out}")


def cmd_ingest(args) -> None:
    registry = LotRegistry.read_csv(_path(args, "registry", "registry.csv"))
    events = parse_event_log(_path(args, "events", "events.csv"), registry)
    if not events:
        raise CliError("event log holds no usable events")
    start = parse_timestamp(args.start) if args.start else events[0].timestamp
    end = parse_timestamp(args.end) if args.end else events[-1].timestamp + INTERVAL
    frames = resample(events, registry, start, end)
    out = _path(args, "frames", "frames.csv")
    frames.write_csv(out)
    _write_json(out.with_suffix(".meta.json"), {"epoch": format_timestamp(frames.epoch),
                                                "interval_s": int(frames.interval.total_seconds())})
    print(f"wrote {len(frames)} frames x {len(registry)} lots to {out}")


def _load_frames(path: Path) -> FrameSeries:
    meta = _read_meta(path)
    return FrameSeries.read_csv(path, parse_timestamp(meta["epoch"]), timedelta(seconds=meta["interval_s"]))


def cmd_preprocess(args) -> None:
    from .preprocess import build_graph, cluster_lots, normalize

    registry = LotRegistry.read_csv(_path(args, "registry", "registry.csv"))
    frames = _load_frames(_path(args, "frames", "frames.csv"))
    cmap = cluster_lots(registry)
    graph = build_graph(cmap, args.threshold)
    series = normalize(frames, cmap)
    if args.boundaries:
        split = split_dataset(frames.timestamp(frames.first_step), len(series),
                              [parse_timestamp(b) for b in args.boundaries], frames.interval)
    else:
        split = split_by_fraction(len(series), args.train_fraction, args.validation_fraction)
    cmap.write_csv(args.out / "cluster_map.csv")
    (args.out / "graph.json").write_text(graph.to_json() + "\n")
    out = _path(args, "series", "series.csv")
    series.write_csv(out)
    _write_json(out.with_suffix(".meta.json"), {
        "epoch": format_timestamp(series.epoch), "interval_s": int(series.interval.total_seconds()),
        "split": {"train": list(split.train), "validation": list(split.validation), "test": list(split.test)},
    })
    print(f"{cmap.n_clusters} clusters, {len(graph.edges)} edges, {len(series)} steps; split {split}")


def _load_prepared(args):
    from .preprocess import ClusterMap, ClusterSeries, ProximityGraph

    registry = LotRegistry.read_csv(_path(args, "registry", "registry.csv"))
    cmap = ClusterMap.from_assignment(registry, args.out / "cluster_map.csv")
    graph = ProximityGraph.from_json((args.out / "graph.json").read_text())
    path = _path(args, "series", "series.csv")
    meta = _read_meta(path)
    series = ClusterSeries.read_csv(path, parse_timestamp(meta["epoch"]), timedelta(seconds=meta["interval_s"]))
    split = DatasetSplit(*(tuple(meta["split"][k]) for k in ("train", "validation", "test")))
    return cmap, graph, series, split


def _train_config(args):
    from .training import TrainConfig

    values = dict(args.config_data.get("train", {}))
    for key in ("epochs", "batch_size", "learning_rate", "teacher_forcing_ratio"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    values["seed"] = args.seed
    return TrainConfig(**_pick(TrainConfig, values))


def cmd_train(args) -> None:
    from .checkpoint import ModelCheckpoint, history_digest, save_checkpoint
    from .model import Seq2SeqModel
    from .pipeline import window_dataset
    from .plot import write_history_svg
    from .training import history_to_csv, train

    cmap, graph, series, split = _load_prepared(args)
    tcfg = _train_config(args)
    enc_values = dict(args.config_data.get("encoder", {}))
    if args.encoder:
        enc_values["kind"] = args.encoder
    enc_values.update(M=tcfg.M, K=cmap.n_clusters, ggnn_steps=tcfg.ggnn_steps)
    enc = EncoderConfig.from_dict(_pick(EncoderConfig, enc_values))
    ds = window_dataset(series, cmap, graph, split, tcfg.M, tcfg.n_max)
    model = Seq2SeqModel.create(enc, graph, args.seed)
    result = train(model, ds.train, ds.validation, tcfg,
                   on_epoch=lambda r: print(f"epoch {r.epoch:3d}  train {r.train_mae:.5f}  val {r.val_mae:.5f}",
                                            flush=True))
    history = history_to_csv(result.history)
    (args.out / "history.csv").write_text(history)
    write_history_svg(result.history, args.out / "history.svg")
    ckpt = ModelCheckpoint(model, cmap, tcfg, args.seed, history_digest(history))
    path = _path(args, "checkpoint", "checkpoint.bin")
    digest = save_checkpoint(ckpt, path)
    print(f"best epoch {result.best_epoch}; checkpoint {path} ({digest[:12]})")


def cmd_eval(args) -> None:
    from .checkpoint import load_checkpoint
    from .evaluation import evaluate, evaluate_baseline
    from .preprocess import make_windows

    ckpt = load_checkpoint(_path(args, "checkpoint", "checkpoint.bin"))
    cmap, _, series, split = _load_prepared(args)
    m = ckpt.model.encoder_cfg.M
    test = make_windows(series, m, 8, split.test)
    if len(test) == 0:
        raise CliError("test split is too short to form any window")
    reports = [("eval_report", evaluate(ckpt.model, test, ckpt.cmap))]
    for method in args.baselines or ():
        reports.append((f"baseline_{method}", evaluate_baseline(method, series, test, cmap, split.train)))
    for stem, report in reports:
        (args.out / f"{stem}.csv").write_text(report.to_csv())
        (args.out / f"{stem}.json").write_text(report.to_json())
        city = "  ".join(f"{mins}min {v:.3f}" for mins, v in zip(report.horizons_min, report.city_mae))
        print(f"{report.model:>14}: {city}")
        if report.note:
            print(f"{'':>14}  note: {report.note}")


def _predict_remote(url: str, steps: int) -> dict:
    target = f"{url.rstrip('/')}/predict?steps={steps}"
    try:
        with urllib.request.urlopen(target, timeout=30) as resp:
            return json.load(resp)
    except urllib.error.HTTPError as exc:
        raise CliError(f"server answered {exc.code}: {exc.read().decode(errors='replace')}") from exc
    except urllib.error.URLError as exc:
        raise CliError(f"cannot reach {url}: {exc.reason}") from exc


def cmd_predict(args) -> None:
    from .checkpoint import load_checkpoint
    from .forecast import MAX_STEPS, forecast_payload
    from .preprocess import normalize

    if not 1 <= args.horizon <= MAX_STEPS:
        raise CliError(f"horizon must lie in 1..{MAX_STEPS}")
    if args.server:
        payload = _predict_remote(args.server, args.horizon)
    else:
        ckpt = load_checkpoint(_path(args, "checkpoint", "checkpoint.bin"))
        frames = _load_frames(_path(args, "frames", "frames.csv"))
        series = normalize(frames, ckpt.cmap)
        end = len(series) if args.at is None else args.at - series.first_step + 1
        if not ckpt.model.encoder_cfg.M <= end <= len(series):
            raise CliError(f"--at must leave at least {ckpt.model.encoder_cfg.M} frames of history")
        payload = forecast_payload(ckpt.model, ckpt.cmap, ckpt.model_id, series.values[:end],
                                   series.first_step + end - 1, series.epoch, args.horizon, series.interval)
    text = json.dumps(payload, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_serve(args) -> None:
    import uvicorn

    from .checkpoint import load_checkpoint
    from .service import ServiceState, create_app, read_frames, tail_frames

    ckpt = load_checkpoint(_path(args, "checkpoint", "checkpoint.bin"))
    epoch = parse_timestamp(args.epoch) if args.epoch else None
    if args.feed == "-":
        if epoch is None:
            raise CliError("--epoch is required when reading frames from stdin")
        feed = lambda stop: read_frames(sys.stdin)  # noqa: E731
    else:
        feed_path = Path(args.feed) if args.feed else _path(args, "frames", "frames.csv")
        if epoch is None:
            epoch = parse_timestamp(_read_meta(feed_path)["epoch"])
        feed = lambda stop: tail_frames(feed_path, stop)  # noqa: E731
    state = ServiceState(ckpt, epoch)
    print(f"serving model {ckpt.model_id} on http://{args.host}:{args.port}", flush=True)
    uvicorn.run(create_app(state, feed), host=args.host, port=args.port, log_level="info")


# -- parser -----------------------------------------------------------------


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=default(None), help="JSON config (train/encoder/synth/paths)")
    parser.add_argument("--seed", type=int, default=default(0), help="seed for every random stream")
    parser.add_argument("--out", type=Path, default=default(Path(".")), help="working directory for artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parkgraph", description=__doc__)
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic registry and event log")
    p.add_argument("--weeks", type=float)
    p.add_argument("--clusters", type=int)
    p.add_argument("--spatial-correlation", type=float)
    p.add_argument("--noise", type=float)

    p = add("ingest", cmd_ingest, "resample an event log onto 15-minute frames")
    p.add_argument("--registry")
    p.add_argument("--events")
    p.add_argument("--start", help="ISO-8601 start (default: first event)")
    p.add_argument("--end", help="ISO-8601 exclusive end (default: just after the last event)")

    p = add("preprocess", cmd_preprocess, "cluster, build the graph, normalise and split")
    p.add_argument("--registry")
    p.add_argument("--frames")
    p.add_argument("--threshold", type=float, default=95.0, help="edge distance in metres")
    p.add_argument("--boundaries", nargs=2, metavar="TS", help="train/validation and validation/test cut instants")
    p.add_argument("--train-fraction", type=float, default=0.6)
    p.add_argument("--validation-fraction", type=float, default=0.2)

    p = add("train", cmd_train, "fit an encoder-decoder model")
    p.add_argument("--encoder", choices=KINDS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--teacher-forcing-ratio", type=float)
    p.add_argument("--checkpoint")

    p = add("eval", cmd_eval, "score a checkpoint on the test split")
    p.add_argument("--checkpoint")
    p.add_argument("--baselines", nargs="*", choices=BASELINE_METHODS, default=None)

    p = add("predict", cmd_predict, "forecast from the latest frames (or ask a running server)")
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--checkpoint")
    p.add_argument("--frames")
    p.add_argument("--at", type=int, help="step index of the last frame to use (default: newest)")
    p.add_argument("--server", help="base URL of a running service; skips local inference")
    p.add_argument("--output")

    p = add("serve", cmd_serve, "run the HTTP prediction service")
    p.add_argument("--checkpoint")
    p.add_argument("--feed", help="frame dump to follow, or '-' for stdin (default: frames.csv in --out)")
    p.add_argument("--epoch", help="timestamp of step index 0 (default: from the frame dump metadata)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.config_data = load_config(args.config)
        if args.seed < 0 or args.seed >= 2**64:
            raise CliError("--seed must be an unsigned 64-bit integer")
        args.out.mkdir(parents=True, exist_ok=True)
        args.func(args)
    except (CliError, ValueError, OSError, KeyError) as exc:
        print(f"parkgraph {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
