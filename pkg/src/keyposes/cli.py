"""Command line entry point: ``keyposes <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cluster import kmeans_fit, label_track, load_model, prune_track, save_model
from .core import RngState
from .extract import extract_keyposes
from .io import load_sequence
from .metrics import evaluate
from .net import init_net, load_net, save_net
from .pipeline import (
    PipelineError,
    load_config,
    load_track,
    run_pipeline,
    save_track,
    write_json,
    write_synth_dataset,
)
from .predict import rollout, sample_futures, save_forecast
from .synth import SynthSpec
from .train import train

log = logging.getLogger("keyposes")


def _config(args, **overrides):
    return load_config(args.config, seed=args.seed, **overrides)


def cmd_synth(args) -> None:
    spec = SynthSpec(args.n_actions, args.seqs_per_action, args.T, args.J, args.noise_std, args.fps)
    splits = write_synth_dataset(spec, args.seed or 0, args.out)
    log.info("wrote %d sequences to %s", sum(map(len, splits.values())), args.out)


def cmd_extract(args) -> None:
    cfg = _config(args, threshold_mm=args.threshold_mm)
    track = extract_keyposes(load_sequence(args.inp), cfg.threshold_mm)
    save_track(track, args.out)
    log.info("%d keyposes", len(track))


def _track_files(directory):
    files = sorted(Path(directory).glob("*.jsonl"))
    if not files:
        raise PipelineError(f"no keypose tracks (*.jsonl) in {directory}")
    return files


def cmd_cluster(args) -> None:
    cfg = _config(args, K=args.k)
    points = [kp.value for f in _track_files(args.inp) for kp in load_track(f).keyposes]
    model = kmeans_fit(points, cfg.K, RngState(cfg.seed).child("kmeans").generator(), cfg.kmeans_iters)
    save_model(model, args.out)


def cmd_train(args) -> None:
    cfg = _config(args)
    model = load_model(args.clusters)
    tcfg = cfg.train_config()

    def labeled(directory):
        tracks = [prune_track(label_track(model, load_track(f))) for f in _track_files(directory)]
        return [t for t in tracks if len(t) >= tcfg.window]

    train_set = labeled(args.data)
    if not train_set:
        raise PipelineError(f"no track in {args.data} has {tcfg.window} keyposes after pruning")
    val_set = labeled(args.val) if args.val else None
    net = init_net(model.K, cfg.H, RngState(cfg.seed).child("init").generator(), cfg.n_layers)
    result = train(net, train_set, model, tcfg, val_set or None)
    save_net(result.net, args.out)
    log.info("best epoch %d, score %.4f", result.best_epoch, result.best_score)


def cmd_predict(args) -> None:
    cfg = _config(args, horizon_s=args.horizon_s, sample_temp=args.temp, n_samples=args.n)
    net, model = load_net(args.model), load_model(args.clusters)
    seq = load_sequence(args.inp)
    observed = prune_track(label_track(model, extract_keyposes(seq, cfg.threshold_mm)))
    N = int(round(cfg.horizon_s * seq.frame_rate_hz))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    common = dict(token_temperature=cfg.train_temp, n_obs=cfg.obs, frame_rate_hz=seq.frame_rate_hz)
    if args.mode == "greedy":
        save_forecast(rollout(net, observed, model, N, "greedy", **common), out / "greedy")
    else:
        futures = sample_futures(net, observed, model, N, cfg.n_samples, cfg.sample_temp, cfg.seed, **common)
        for i, f in enumerate(futures):
            save_forecast(f, out / f"sample_{i:03d}")


def cmd_evaluate(args) -> None:
    gt = load_sequence(args.gt)
    preds = [load_sequence(p) for p in sorted(Path(args.pred).glob("*.csv"))]
    if not preds:
        raise PipelineError(f"no predicted sequences (*.csv) in {args.pred}")
    write_json(evaluate(gt, preds).to_dict(), args.report)


def cmd_run(args) -> None:
    report = run_pipeline(_config(args), args.data, args.out, resume=args.resume)
    summary = {k: report[k] for k in ("mpjpe_at", "pskl", "diversity")}
    print(json.dumps(summary, sort_keys=True, indent=2))


def build_parser() -> argparse.ArgumentParser:
    def flags(default):
        # subcommands suppress their defaults so flags given before the subcommand survive
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--config", default=default, help="key=value config file with [section] headers")
        common.add_argument("--seed", type=int, default=default, help="override [run] seed")
        common.add_argument("-v", "--verbose", action="store_true", default=default or False)
        return common

    parser = argparse.ArgumentParser(prog="keyposes", description=__doc__, parents=[flags(None)])
    common = flags(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset with splits")
    p.add_argument("--out", required=True)
    p.add_argument("--n-actions", type=int, default=2)
    p.add_argument("--seqs-per-action", type=int, default=5)
    p.add_argument("--T", type=int, default=300)
    p.add_argument("--J", type=int, default=5)
    p.add_argument("--noise-std", type=float, default=2.0)
    p.add_argument("--fps", type=float, default=25.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", parents=[common], help="extract keyposes from one sequence")
    p.add_argument("--threshold-mm", type=float)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("cluster", parents=[common], help="k-means over a directory of keypose tracks")
    p.add_argument("--k", type=int)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", parents=[common], help="train the keypose network")
    p.add_argument("--data", required=True, help="directory of keypose tracks")
    p.add_argument("--val", help="directory of validation keypose tracks")
    p.add_argument("--clusters", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="forecast from an observed sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--horizon-s", type=float)
    p.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    p.add_argument("--n", type=int)
    p.add_argument("--temp", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predicted sequences against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", parents=[common], help="end-to-end pipeline")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true", help="reuse artifacts already in --out")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except (PipelineError, ValueError, OSError) as exc:
        print(f"keyposes {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
