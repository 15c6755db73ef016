"""End-to-end experiment: extract, cluster, label, train, forecast, evaluate.

Every stage writes its artifacts under the output directory; with
``resume=True`` a stage whose artifact already exists is loaded instead of
recomputed. Reports contain no paths or timestamps so reruns with the same
seed are byte-identical.
"""

from __future__ import annotations

import configparser
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .cluster import (
    LabeledKeypose,
    kmeans_fit,
    label_track,
    load_model,
    prune_track,
    save_model,
)
from .core import MotionSequence, RngState
from .extract import Keypose, KeyposeTrack, extract_keyposes
from .io import atomic_write, load_sequence, save_sequence
from .metrics import EvalReport, evaluate, mpjpe, pskl_summary
from .net import init_net, load_net, save_net
from .predict import rollout, sample_futures, save_forecast
from .synth import SynthSpec, synth_dataset
from .train import TrainConfig, train

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    threshold_mm: float = 500.0
    K: int = 1000
    H: int = 512
    n_layers: int = 3
    lr: float = 1e-4
    weight_decay: float = 0.01
    batch: int = 64
    epochs: int = 100
    w_labels: float = 1.0
    w_dur: float = 0.1
    train_temp: float = 0.03
    sample_temp: float = 0.3
    noise_std: float = 0.1
    sched_k: float = 10.0
    past_supervision: bool = True
    obs: int = 7
    pred: int = 12
    horizon_s: float = 5.0
    fps: float = 25.0
    n_samples: int = 100
    kmeans_iters: int = 300
    seed: int = 0

    def __post_init__(self):
        positive = ("threshold_mm", "K", "H", "n_layers", "batch", "epochs", "train_temp",
                    "sample_temp", "sched_k", "obs", "pred", "horizon_s", "fps", "n_samples",
                    "kmeans_iters")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"config: {name} must be positive, got {getattr(self, name)}")
        for name in ("lr", "weight_decay", "w_labels", "w_dur", "noise_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"config: {name} must be non-negative")

    @property
    def horizon_frames(self) -> int:
        return int(round(self.horizon_s * self.fps))

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            weight_decay=self.weight_decay,
            batch_size=self.batch,
            epochs=self.epochs,
            w_labels=self.w_labels,
            w_dur=self.w_dur,
            obs_keyposes=self.obs,
            pred_keyposes=self.pred,
            sched_k=self.sched_k,
            past_supervision=self.past_supervision,
            train_temperature=self.train_temp,
            noise_std=self.noise_std,
            seed=self.seed,
        )


# section -> {file key: field name}
CONFIG_KEYS = {
    "extract": {"threshold_mm": "threshold_mm"},
    "cluster": {"k": "K", "kmeans_iters": "kmeans_iters"},
    "net": {"hidden": "H", "layers": "n_layers"},
    "train": {
        "lr": "lr", "weight_decay": "weight_decay", "batch": "batch", "epochs": "epochs",
        "w_labels": "w_labels", "w_dur": "w_dur", "temperature": "train_temp",
        "noise_std": "noise_std", "sched_k": "sched_k", "past_supervision": "past_supervision",
        "obs": "obs", "pred": "pred",
    },
    "predict": {"temperature": "sample_temp", "n_samples": "n_samples", "horizon_s": "horizon_s"},
    "data": {"fps": "fps"},
    "run": {"seed": "seed"},
}


def parse_config(text: str, **overrides) -> PipelineConfig:
    """Parse ``[section]`` / ``key = value`` text; missing keys keep defaults."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    types = {f.name: f.type for f in fields(PipelineConfig)}
    values = {}
    for section in parser.sections():
        if section not in CONFIG_KEYS:
            raise ValueError(f"config: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in CONFIG_KEYS[section]:
                raise ValueError(f"config: unknown key {key!r} in [{section}]")
            name = CONFIG_KEYS[section][key]
            kind = types[name]
            try:
                if kind in ("bool", bool):
                    values[name] = parser.getboolean(section, key)
                elif kind in ("int", int):
                    values[name] = int(raw)
                else:
                    values[name] = float(raw)
            except ValueError:
                raise ValueError(f"config: bad value {raw!r} for {section}.{key}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


def load_config(path: Optional[str], **overrides) -> PipelineConfig:
    text = Path(path).read_text(encoding="utf-8") if path else ""
    return parse_config(text, **overrides)


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for section, keys in CONFIG_KEYS.items():
        lines.append(f"[{section}]")
        for key, name in keys.items():
            value = getattr(cfg, name)
            text = str(value).lower() if isinstance(value, bool) else repr(value)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------- artifacts


def save_track(track: KeyposeTrack, path) -> None:
    path = Path(path)
    with atomic_write(path) as fh:
        for kp in track.keyposes:
            fh.write(json.dumps({"frame_index": kp.frame_index, "joints": kp.value.tolist()}) + "\n")
    meta = [f"source_length={track.source_length}", f"threshold_mm={track.threshold_mm!r}",
            f"fps={track.frame_rate_hz!r}"]
    if track.action:
        meta.append(f"action={track.action}")
    with atomic_write(path.with_suffix(".meta")) as fh:
        fh.write("\n".join(meta) + "\n")


def _read_meta(path) -> Dict[str, str]:
    mpath = Path(path).with_suffix(".meta")
    if not mpath.exists():
        return {}
    return dict(line.split("=", 1) for line in mpath.read_text(encoding="utf-8").splitlines() if "=" in line)


def load_track(path) -> KeyposeTrack:
    rows = [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    meta = _read_meta(path)
    kps = tuple(Keypose(int(r["frame_index"]), np.asarray(r["joints"], dtype=np.float64)) for r in rows)
    return KeyposeTrack(
        kps,
        int(meta.get("source_length", kps[-1].frame_index)),
        float(meta.get("threshold_mm", "nan")),
        float(meta.get("fps", 25.0)),
        meta.get("action"),
    )


def save_labeled(track: Sequence[LabeledKeypose], path) -> None:
    with atomic_write(path) as fh:
        for kp in track:
            fh.write(json.dumps({
                "frame_index": kp.frame_index,
                "joints": kp.value.tolist(),
                "label": kp.label,
                "duration": kp.duration_frames,
            }) + "\n")


def load_labeled(path) -> List[LabeledKeypose]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            r = json.loads(line)
            kp = Keypose(int(r["frame_index"]), np.asarray(r["joints"], dtype=np.float64))
            out.append(LabeledKeypose(kp, int(r["label"]), int(r["duration"])))
    return out


def write_json(obj, path) -> None:
    with atomic_write(path) as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------- data


def read_split(data_dir, split: str) -> List[str]:
    listing = Path(data_dir) / f"{split}.txt"
    if not listing.exists():
        raise PipelineError(f"missing split listing {listing}")
    return [ln.strip() for ln in listing.read_text(encoding="utf-8").splitlines() if ln.strip()]


def load_split(data_dir, split: str) -> Dict[str, MotionSequence]:
    return {name: load_sequence(Path(data_dir) / name) for name in read_split(data_dir, split)}


def write_synth_dataset(spec: SynthSpec, seed: int, out_dir) -> Dict[str, List[str]]:
    """Write a synthetic dataset with train/val/test listings.

    Per action, the last sequence goes to test, the one before to val and
    the rest to train.
    """
    if spec.seqs_per_action < 3:
        raise ValueError("need at least 3 sequences per action for train/val/test splits")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seqs = synth_dataset(spec, RngState(seed, ("synth",)).generator())
    splits = {s: [] for s in SPLITS}
    for i, seq in enumerate(seqs):
        j = i % spec.seqs_per_action
        name = f"{seq.action}_{j:03d}.csv"
        save_sequence(seq, out / name)
        split = "test" if j == spec.seqs_per_action - 1 else "val" if j == spec.seqs_per_action - 2 else "train"
        splits[split].append(name)
    for split, names in splits.items():
        with atomic_write(out / f"{split}.txt") as fh:
            fh.write("".join(n + "\n" for n in names))
    return splits


# ---------------------------------------------------------------- stages


def _stem(name: str) -> str:
    return Path(name).stem


def run_pipeline(cfg: PipelineConfig, data_dir, out_dir, resume: bool = False) -> dict:
    """Run every stage and return the report written to ``report.json``."""
    data_dir, out = Path(data_dir), Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = RngState(cfg.seed)
    splits = {s: load_split(data_dir, s) for s in SPLITS}
    if not splits["train"]:
        raise PipelineError("train split is empty")
    if not splits["test"]:
        raise PipelineError("test split is empty")
    (out / "config.ini").write_text(format_config(cfg), encoding="utf-8")

    # keypose extraction
    tracks = {}
    for split in ("train", "val"):
        tdir = out / "tracks" / split
        tdir.mkdir(parents=True, exist_ok=True)
        tracks[split] = {}
        for name, seq in splits[split].items():
            path = tdir / f"{_stem(name)}.jsonl"
            if resume and path.exists():
                tracks[split][name] = load_track(path)
            else:
                tracks[split][name] = extract_keyposes(seq, cfg.threshold_mm)
                save_track(tracks[split][name], path)

    # clustering
    model_path = out / "clusters.kpc"
    if resume and model_path.exists():
        model = load_model(model_path)
    else:
        points = [kp.value for t in tracks["train"].values() for kp in t.keyposes]
        if len(points) < cfg.K:
            raise PipelineError(f"only {len(points)} training keyposes for K={cfg.K} clusters")
        model = kmeans_fit(points, cfg.K, root.child("kmeans").generator(), cfg.kmeans_iters)
        save_model(model, model_path)
    if model.K != cfg.K:
        raise PipelineError(f"cluster model has K={model.K}, config says {cfg.K}")

    # labeling and pruning
    labeled = {}
    for split in ("train", "val"):
        ldir = out / "labeled" / split
        ldir.mkdir(parents=True, exist_ok=True)
        labeled[split] = {}
        for name, t in tracks[split].items():
            path = ldir / f"{_stem(name)}.jsonl"
            if resume and path.exists():
                labeled[split][name] = load_labeled(path)
            else:
                labeled[split][name] = prune_track(label_track(model, t))
                save_labeled(labeled[split][name], path)

    # training
    tcfg = cfg.train_config()
    net_path = out / "net.kpn"
    if resume and net_path.exists():
        net = load_net(net_path)
        train_log = json.loads((out / "train_log.json").read_text(encoding="utf-8"))
    else:
        window = tcfg.window
        train_set = [t for t in labeled["train"].values() if len(t) >= window]
        val_set = [t for t in labeled["val"].values() if len(t) >= window]
        if not train_set:
            raise PipelineError(
                f"no training track has {window} keyposes after pruning; lower threshold_mm or obs/pred"
            )
        net0 = init_net(cfg.K, cfg.H, root.child("init").generator(), cfg.n_layers)
        result = train(net0, train_set, model, tcfg, val_set or None)
        net = result.net
        save_net(net, net_path)
        train_log = {
            "best_epoch": result.best_epoch,
            "best_score": result.best_score,
            "validation": "val" if val_set else "train",
            "epochs": [asdict(s) for s in result.history],
        }
        write_json(train_log, out / "train_log.json")

    # forecasting and evaluation
    N = cfg.horizon_frames
    fdir = out / "forecasts"
    per_seq = {}
    skipped = []
    for i, (name, seq) in enumerate(splits["test"].items()):
        if seq.T - N < 2:
            skipped.append({"sequence": name, "reason": f"needs more than {N + 1} frames"})
            continue
        past, future = seq.slice(0, seq.T - N), seq.slice(seq.T - N, seq.T)
        observed = prune_track(label_track(model, extract_keyposes(past, cfg.threshold_mm)))
        if len(observed) < cfg.obs:
            skipped.append({"sequence": name, "reason": f"only {len(observed)} observed keyposes"})
            continue
        sdir = fdir / _stem(name)
        sdir.mkdir(parents=True, exist_ok=True)
        greedy = rollout(net, observed, model, N, "greedy", token_temperature=cfg.train_temp,
                         n_obs=cfg.obs, frame_rate_hz=seq.frame_rate_hz)
        save_forecast(greedy, sdir / "greedy")
        seed_i = int(root.child("predict", i).generator().integers(2**62))
        futures = sample_futures(net, observed, model, N, cfg.n_samples, cfg.sample_temp, seed_i,
                                 token_temperature=cfg.train_temp, n_obs=cfg.obs,
                                 frame_rate_hz=seq.frame_rate_hz)
        for j, f in enumerate(futures):
            save_forecast(f, sdir / f"sample_{j:03d}")
        rep = evaluate(future, [f.sequence for f in futures])
        d = rep.to_dict()
        d["greedy_mpjpe_mm"] = {
            k: mpjpe(greedy.sequence, future, future.seconds_to_frames(float(k))) for k in rep.mpjpe_at
        }
        per_seq[name] = d
    if not per_seq:
        raise PipelineError(f"no test sequence could be forecast: {skipped}")
    report = aggregate(per_seq)
    report["skipped"] = skipped
    report["train"] = {"best_epoch": train_log["best_epoch"], "best_score": train_log["best_score"]}
    report["config"] = asdict(cfg)
    write_json(report, out / "report.json")
    return report


def aggregate(per_seq: Dict[str, dict]) -> dict:
    reps = list(per_seq.values())
    keys = sorted(set().union(*(r["mpjpe_at"] for r in reps)))
    mp = {}
    for k in keys:
        vals = [r["mpjpe_at"][k] for r in reps if k in r["mpjpe_at"]]
        mp[k] = {m: float(np.mean([v[m] for v in vals])) for m in ("ave_mm", "best_mm")}
    pk = pskl_summary(float(np.mean([r["pskl"]["gt_pred"] for r in reps])),
                      float(np.mean([r["pskl"]["pred_gt"] for r in reps])))
    summary = EvalReport(mp, pk, float(np.mean([r["diversity"] for r in reps])), [], reps[0]["meta"])
    out = summary.to_dict()
    del out["diversity_pairs"]
    out["sequences"] = per_seq
    return out
