"""Command-line entry point: sync -> sample -> featurize -> dataset -> train ->
eval -> predict -> export-timeline -> bench, plus fixture generation.

Every artifact is written with a sidecar ``<name>.manifest.json`` recording
the SHA-256 of each declared input and the effective parameters, so a rerun
with unchanged inputs reproduces byte-identical outputs and the provenance
chain is checkable. Config values come from an optional JSON project file
(``--config`` or $GAZEFUSION_CONFIG); command-line flags override file values.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation, pipeline, synthetic
from .features import (
    ToyBackboneConfig,
    feature_store_write,
    read_ppm,
    toy_backbone_extract,
)
from .model import (
    FusionModelConfig,
    build_fusion_model,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .optim import TrainConfig, predict_probability, train, write_history_csv
from .tensor import ConfigError


class CliError(Exception):
    """User-actionable command failure; message explains what to run or fix."""


@dataclass
class ProjectConfig:
    """Project-wide settings; round-trips losslessly through its JSON form."""

    media_root: str = "fixture/media"
    manifest_csv: str = "fixture/manifests/heads.csv"
    annotations_dir: str = "fixture/annotations"
    output_dir: str = "out"
    task: str = "MG"
    seeds: list[int] = field(default_factory=lambda: [1, 2])
    held_out_sessions: list[str] = field(default_factory=lambda: ["s03"])
    rate_hz: float = 1.0
    max_lag_s: float = 5.0
    min_head_confidence: float = 0.8
    val_fraction: float = 0.10
    balance_seed: int = 7
    backbone: dict = field(default_factory=lambda: {"grid": 4, "out_dim": 16,
                                                    "projection_seed": 0})
    model: dict = field(default_factory=lambda: {
        "embed_dim": 16, "encoder_layers": 2, "attention_heads": 2, "dropout": 0.1,
        "head_layer_sizes": [16, 8, 1], "use_positional_embedding": True,
        "use_view_segment_embedding": True})
    train: dict = field(default_factory=lambda: {
        "learning_rate": 5e-3, "batch_size": 8, "max_epochs": 12})

    @classmethod
    def load(cls, path) -> "ProjectConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read project config {path}: {exc}") from exc
        known = set(cls().__dict__)
        unknown = set(data) - known
        if unknown:
            raise CliError(f"unknown config keys in {path}: {sorted(unknown)}")
        config = cls(**data)
        return config

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")

    def out(self, *parts) -> Path:
        path = Path(self.output_dir).joinpath(*parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def backbone_config(self) -> ToyBackboneConfig:
        return ToyBackboneConfig(**self.backbone)

    def model_config(self) -> FusionModelConfig:
        backbone = self.backbone_config()
        return FusionModelConfig(feature_dim_in=backbone.out_dim,
                                 tokens_per_view=backbone.tokens_per_view,
                                 **{k: tuple(v) if k == "head_layer_sizes" else v
                                    for k, v in self.model.items()})

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, **self.train)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(artifact: Path, inputs: dict[str, Path], params: dict) -> None:
    manifest = {
        "artifact": artifact.name,
        "inputs": {name: _sha256(Path(p)) for name, p in sorted(inputs.items())},
        "params": params,
    }
    Path(str(artifact) + ".manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_json(path: Path, payload, inputs: dict[str, Path], params: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_manifest(path, inputs, params)


def _require(path, producer: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise CliError(f"missing {path}: produce it with `gazefusion {producer}` first")
    return path


def _session_dirs(media_root) -> list[Path]:
    root = _require(media_root, "fixture (or point --media-root at your recordings)")
    sessions = sorted(p for p in root.iterdir() if p.is_dir())
    if not sessions:
        raise CliError(f"no session directories under {root}")
    return sessions


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_fixture(args, config: ProjectConfig) -> int:
    root = Path(args.root)
    summary = synthetic.generate_fixture(root, seed=args.seed)
    print(f"fixture written under {root} "
          f"({len(summary['sessions'])} sessions, seed {summary['seed']})")
    return 0


def cmd_sync(args, config: ProjectConfig) -> int:
    offsets: dict[str, dict] = {}
    failures: list[str] = []
    inputs: dict[str, Path] = {}
    for session_dir in _session_dirs(config.media_root):
        session = session_dir.name
        wav_a = session_dir / "audio_infant.wav"
        wav_b = session_dir / "audio_parent.wav"
        try:
            samples_a, rate_a = pipeline.parse_wav(_require(wav_a, "fixture"))
            samples_b, rate_b = pipeline.parse_wav(_require(wav_b, "fixture"))
            estimate = pipeline.estimate_audio_offset(samples_a, rate_a, samples_b, rate_b,
                                                      max_lag_s=config.max_lag_s)
        except (CliError, ValueError) as exc:
            failures.append(f"{session}: {exc}")
            continue
        offsets[session] = {"offset_s": estimate.offset_s,
                            "confidence": round(estimate.confidence, 6),
                            "reliable": estimate.reliable}
        inputs[f"{session}/audio_infant.wav"] = wav_a
        inputs[f"{session}/audio_parent.wav"] = wav_b
        flag = "" if estimate.reliable else "  [LOW CONFIDENCE - validate manually]"
        print(f"{session}: offset {estimate.offset_s:+.3f} s "
              f"(confidence {estimate.confidence:.3f}){flag}")
    out = config.out("offsets.json")
    _write_json(out, offsets, inputs, {"max_lag_s": config.max_lag_s})
    if failures:
        print("sync failed for sessions:", file=sys.stderr)
        for line in failures:
            print(f"  {line}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


def _frame_timestamps(session_dir: Path, view: str) -> list[float]:
    frame_dir = session_dir / "frames" / view
    if not frame_dir.is_dir():
        raise CliError(f"missing frame directory {frame_dir} "
                       f"(expected <media>/<session>/frames/<view>/<timestamp_ms>.ppm)")
    stamps = sorted(int(p.stem) for p in frame_dir.iterdir() if p.suffix == ".ppm")
    if not stamps:
        raise CliError(f"no .ppm frames under {frame_dir}")
    return [ms / 1000.0 for ms in stamps]


def cmd_sample(args, config: ProjectConfig) -> int:
    offsets_path = _require(args.offsets or config.out("offsets.json"), "sync")
    offsets = _load_json(offsets_path)
    index_payload: dict[str, dict] = {}
    inputs = {"offsets.json": offsets_path}
    for session_dir in _session_dirs(config.media_root):
        session = session_dir.name
        if session not in offsets:
            raise CliError(f"session {session} missing from {offsets_path}; rerun `gazefusion sync`")
        ts_a = _frame_timestamps(session_dir, "infant")
        ts_b = _frame_timestamps(session_dir, "parent")
        index = pipeline.sample_frames(ts_a, ts_b, offsets[session]["offset_s"],
                                       rate_hz=config.rate_hz, session=session)
        index_payload[session] = {
            "offset_s": index.offset_s, "rate_hz": index.rate_hz,
            "pairs": [[p.tick_s, p.timestamp_a, p.timestamp_b] for p in index.pairs]}
        print(f"{session}: {len(index.pairs)} aligned pairs")
    out = config.out("frame_index.json")
    _write_json(out, index_payload, inputs, {"rate_hz": config.rate_hz})
    print(f"wrote {out}")
    return 0


def cmd_featurize(args, config: ProjectConfig) -> int:
    if args.backbone != "toy":
        raise CliError(f"unknown backbone {args.backbone!r}; this build ships `toy` "
                       f"(precomputed features can be imported as GZFS files directly)")
    index_path = _require(args.frame_index or config.out("frame_index.json"), "sample")
    manifest_path = _require(config.manifest_csv, "fixture (or supply your detector's manifest)")
    index = _load_json(index_path)
    manifest = pipeline.read_manifest_csv(manifest_path)
    boxes = {(r.session, r.view, r.timestamp_ms): r.box for r in manifest}
    backbone = config.backbone_config()
    store_root = Path(args.store or config.out("store"))
    media_root = Path(config.media_root)
    written = skipped = 0
    for session, payload in sorted(index.items()):
        for tick, ts_a, ts_b in payload["pairs"]:
            for view, ts in (("infant", ts_a), ("parent", ts_b)):
                timestamp_ms = int(round(ts * 1000))
                box = boxes.get((session, view, timestamp_ms))
                if box is None:
                    skipped += 1
                    continue
                frame_path = media_root / session / "frames" / view / f"{timestamp_ms}.ppm"
                image = read_ppm(_require(frame_path, "fixture"))
                seq = toy_backbone_extract(image, box, backbone, session=session,
                                           view=view, timestamp_s=ts)
                feature_store_write(seq, store_root)
                written += 1
    print(f"featurized {written} frames into {store_root} "
          f"({skipped} skipped: no head box)")
    _write_manifest(store_root / "STORE", {"frame_index.json": index_path,
                                           "heads.csv": manifest_path},
                    {"backbone": asdict(backbone)})
    return 0


def cmd_dataset_build(args, config: ProjectConfig) -> int:
    index_path = _require(args.frame_index or config.out("frame_index.json"), "sample")
    manifest_path = _require(config.manifest_csv, "fixture")
    task = (args.task or config.task).upper()
    index = _load_json(index_path)
    manifest = pipeline.read_manifest_csv(manifest_path)
    dataset: dict[str, list] = {}
    annotations_dir = Path(config.annotations_dir)
    for session, payload in sorted(index.items()):
        frame_index = pipeline.FrameIndex(session=session, offset_s=payload["offset_s"],
                                          rate_hz=payload["rate_hz"])
        frame_index.pairs = [pipeline.FramePair(tick_s=t, timestamp_a=a, timestamp_b=b)
                             for t, a, b in payload["pairs"]]
        kept, stats = pipeline.filter_by_heads(frame_index, manifest,
                                               min_confidence=config.min_head_confidence)
        annotation_path = _require(annotations_dir / f"{session}.csv",
                                   "fixture (or export annotations from the labeler UI)")
        events = pipeline.read_annotations_csv(annotation_path)
        labeled = pipeline.label_frames(kept, events, task=task, session=session)
        dataset[session] = [{"tick_s": f.pair.tick_s, "timestamp_a": f.pair.timestamp_a,
                             "timestamp_b": f.pair.timestamp_b, "label": f.label,
                             "in_ambiguous": f.in_ambiguous} for f in labeled]
        positives = sum(1 for f in labeled if f.label == 1)
        print(f"{session}: kept {stats['kept']}/{stats['total']} pairs "
              f"(missing {stats['missing_record']}, low-conf {stats['low_confidence']}); "
              f"{positives} positive / {len(labeled) - positives} negative [{task}]")
    out = config.out(f"dataset_{task.lower()}.json")
    _write_json(out, dataset, {"frame_index.json": index_path, "heads.csv": manifest_path},
                {"task": task, "min_head_confidence": config.min_head_confidence})
    print(f"wrote {out}")
    return 0


def _frames_from_dataset(payload: dict, task: str) -> list[pipeline.LabeledFrame]:
    frames = []
    for session, rows in sorted(payload.items()):
        for row in rows:
            pair = pipeline.FramePair(tick_s=row["tick_s"], timestamp_a=row["timestamp_a"],
                                      timestamp_b=row["timestamp_b"])
            frames.append(pipeline.LabeledFrame(session=session, pair=pair,
                                                label=row["label"],
                                                in_ambiguous=row["in_ambiguous"], task=task))
    return frames


def _frame_row(frame: pipeline.LabeledFrame) -> dict:
    return {"session": frame.session, "tick_s": frame.pair.tick_s,
            "timestamp_a": frame.pair.timestamp_a, "timestamp_b": frame.pair.timestamp_b,
            "label": frame.label, "in_ambiguous": frame.in_ambiguous}


def cmd_dataset_split(args, config: ProjectConfig) -> int:
    task = (args.task or config.task).upper()
    dataset_path = _require(args.dataset or config.out(f"dataset_{task.lower()}.json"),
                            "dataset build")
    held_out = args.held_out or config.held_out_sessions
    frames = _frames_from_dataset(_load_json(dataset_path), task)
    split = pipeline.temporal_split(frames, held_out_sessions=held_out,
                                    val_fraction=config.val_fraction)
    payload = {"task": task,
               "held_out_sessions": sorted(held_out),
               "train": [_frame_row(f) for f in split.train],
               "validation": [_frame_row(f) for f in split.validation],
               "test": [_frame_row(f) for f in split.test]}
    out = config.out(f"split_{task.lower()}.json")
    _write_json(out, payload, {"dataset": dataset_path},
                {"held_out_sessions": sorted(held_out), "val_fraction": config.val_fraction})
    print(f"train {len(split.train)} / validation {len(split.validation)} / "
          f"test {len(split.test)}")
    print(f"wrote {out}")
    return 0


def cmd_dataset_balance(args, config: ProjectConfig) -> int:
    task = (args.task or config.task).upper()
    split_path = _require(args.split or config.out(f"split_{task.lower()}.json"),
                          "dataset split")
    payload = _load_json(split_path)
    frames = []
    for row in payload["test"]:
        pair = pipeline.FramePair(tick_s=row["tick_s"], timestamp_a=row["timestamp_a"],
                                  timestamp_b=row["timestamp_b"])
        frames.append(pipeline.LabeledFrame(session=row["session"], pair=pair,
                                            label=row["label"],
                                            in_ambiguous=row["in_ambiguous"], task=task))
    seed = args.seed if args.seed is not None else config.balance_seed
    balanced = pipeline.balance_test(frames, seed=seed)
    payload["test"] = [_frame_row(f) for f in balanced]
    payload["balance_seed"] = seed
    out = config.out(f"split_{task.lower()}_balanced.json")
    _write_json(out, payload, {"split": split_path}, {"seed": seed})
    labels = [f.label for f in balanced]
    print(f"balanced test: {labels.count(1)} positive / {labels.count(0)} negative")
    print(f"wrote {out}")
    return 0


def _samples_for(rows: list[dict], store_root, task: str, session: str | None = None) -> list:
    frames = []
    for row in rows:
        pair = pipeline.FramePair(tick_s=row["tick_s"], timestamp_a=row["timestamp_a"],
                                  timestamp_b=row["timestamp_b"])
        frames.append(pipeline.LabeledFrame(session=session or row["session"], pair=pair,
                                            label=row["label"],
                                            in_ambiguous=row["in_ambiguous"], task=task))
    return pipeline.attach_features(frames, store_root)


def cmd_train(args, config: ProjectConfig) -> int:
    task = (args.task or config.task).upper()
    split_path = _require(args.split or config.out(f"split_{task.lower()}_balanced.json"),
                          "dataset balance")
    store_root = _require(args.store or config.out("store"), "featurize")
    payload = _load_json(split_path)
    seeds = args.seeds or config.seeds
    train_set = _samples_for(payload["train"], store_root, task)
    val_set = _samples_for(payload["validation"], store_root, task)
    model_config = config.model_config()
    run_dir = config.out("runs", task.lower())
    model_config.validate()
    for seed in seeds:
        model = build_fusion_model(model_config, seed=seed)
        checkpoint, history = train(model, train_set, val_set,
                                    config.train_config(seed), task=task)
        seed_dir = run_dir / f"seed{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = seed_dir / "checkpoint.gfck"
        save_checkpoint(checkpoint, ckpt_path)
        write_history_csv(history, seed_dir / "history.csv")
        _write_manifest(ckpt_path, {"split": split_path}, {
            "seed": seed, "task": task, "model": asdict(model_config),
            "train": asdict(config.train_config(seed))})
        best = f"{checkpoint.val_f1:.4f}" if checkpoint.val_f1 is not None else "n/a"
        print(f"seed {seed}: best epoch {checkpoint.epoch} (val F1 {best}) "
              f"-> {ckpt_path}")
    return 0


def cmd_eval(args, config: ProjectConfig) -> int:
    task = (args.task or config.task).upper()
    split_path = _require(args.split or config.out(f"split_{task.lower()}_balanced.json"),
                          "dataset balance")
    store_root = _require(args.store or config.out("store"), "featurize")
    run_dir = _require(args.runs_dir or config.out("runs", task.lower()), "train")
    payload = _load_json(split_path)
    test_set = _samples_for(payload["test"], store_root, task)
    labels = np.array([s.label for s in test_set])
    reports = []
    checkpoint_paths = sorted(Path(run_dir).glob("seed*/checkpoint.gfck"))
    if not checkpoint_paths:
        raise CliError(f"no checkpoints under {run_dir}; run `gazefusion train` first")
    for ckpt_path in checkpoint_paths:
        checkpoint = load_checkpoint(ckpt_path)
        model = model_from_checkpoint(checkpoint)
        probs = predict_probability(model, test_set)
        report = evaluation.threshold_metrics(probs, labels, task=task,
                                              seed=checkpoint.seed)
        reports.append(report)
        print(f"{ckpt_path}: acc {report.accuracy:.3f} precision {report.precision:.3f} "
              f"recall {report.recall:.3f} f1 {report.f1:.3f} auc {report.roc_auc:.3f}")
    aggregate = evaluation.aggregate_runs(reports)
    out = config.out(f"report_{task.lower()}.json")
    _write_json(out, {"aggregate": aggregate.as_dict(),
                      "runs": [r.as_dict() for r in reports]},
                {"split": split_path}, {"task": task})
    print("aggregate (mean, -min spread, +max spread):")
    for row in aggregate.to_rows():
        print(f"  {row}")
    print(f"wrote {out}")
    return 0


def cmd_predict(args, config: ProjectConfig) -> int:
    task = (args.task or config.task).upper()
    ckpt_path = _require(args.checkpoint, "train")
    store_root = _require(args.store or config.out("store"), "featurize")
    dataset_path = _require(args.dataset or config.out(f"dataset_{task.lower()}.json"),
                            "dataset build")
    dataset = _load_json(dataset_path)
    sessions = [args.session] if args.session else sorted(dataset)
    for session in sessions:
        if session not in dataset:
            raise CliError(f"session {session!r} not in {dataset_path}")
    checkpoint = load_checkpoint(ckpt_path)
    model = model_from_checkpoint(checkpoint)
    records = []
    for session in sessions:
        samples = _samples_for(dataset[session], store_root, task, session=session)
        probs = predict_probability(model, samples)
        for sample, prob in zip(samples, probs):
            records.append(evaluation.PredictionRecord(
                session=session, timestamp_s=sample.timestamp_s, task=task,
                probability=float(prob), label=sample.label))
    out = Path(args.out) if args.out else config.out(f"predictions_{task.lower()}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    evaluation.export_predictions(records, out)
    _write_manifest(out, {"checkpoint": ckpt_path, "dataset": dataset_path}, {"task": task})
    print(f"wrote {len(records)} predictions to {out}")
    return 0


def cmd_import_predictions(args, config: ProjectConfig) -> int:
    csv_path = _require(args.csv, "predict (or export from your external classifier)")
    records = evaluation.import_external_predictions(csv_path)
    labeled = [r for r in records if r.label is not None]
    print(f"imported {len(records)} predictions ({len(labeled)} labeled)")
    if labeled:
        by_task: dict[str, list] = {}
        for record in labeled:
            by_task.setdefault(record.task, []).append(record)
        results = {}
        for task, rows in sorted(by_task.items()):
            report = evaluation.threshold_metrics([r.probability for r in rows],
                                                  [r.label for r in rows], task=task)
            results[task] = report.as_dict()
            print(f"{task}: acc {report.accuracy:.3f} precision {report.precision:.3f} "
                  f"recall {report.recall:.3f} f1 {report.f1:.3f}")
        out = Path(args.out) if args.out else config.out("external_report.json")
        _write_json(out, results, {"predictions": csv_path}, {})
        print(f"wrote {out}")
    return 0


def cmd_export_timeline(args, config: ProjectConfig) -> int:
    predictions_path = _require(args.predictions, "predict")
    records = evaluation.import_external_predictions(predictions_path)
    annotations = []
    inputs = {"predictions": predictions_path}
    if args.annotations:
        annotations_path = _require(args.annotations, "fixture (or the labeler UI export)")
        annotations = pipeline.read_annotations_csv(annotations_path)
        inputs["annotations"] = annotations_path
    document = evaluation.export_timeline(records, annotations,
                                          window_s=args.window, threshold=args.threshold)
    out = Path(args.out) if args.out else config.out("timeline.gztl")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(document.dumps(), encoding="utf-8")
    _write_manifest(out, inputs, {"window_s": args.window, "threshold": args.threshold})
    print(f"wrote {out}")
    return 0


def cmd_bench(args, config: ProjectConfig) -> int:
    if args.checkpoint:
        checkpoint = load_checkpoint(_require(args.checkpoint, "train"))
        model = model_from_checkpoint(checkpoint)
        model_config = checkpoint.config
    else:
        model_config = config.model_config()
        model = build_fusion_model(model_config, seed=0)
    samples = synthetic.planted_relational_samples(
        32, model_config.tokens_per_view, model_config.feature_dim_in, seed=0)
    inputs = [(s.tokens_a, s.tokens_b) for s in samples]
    report = evaluation.bench_throughput(model, inputs, batch_size=args.batch_size)
    print(f"throughput: {report.samples_per_second:.2f} samples/s "
          f"(p50 {report.p50_latency_s * 1e3:.2f} ms, p95 {report.p95_latency_s * 1e3:.2f} ms "
          f"over {report.sample_count} samples)")
    out = Path(args.out) if args.out else config.out("bench.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.as_dict(), sort_keys=True, indent=2) + "\n",
                   encoding="utf-8")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazefusion",
        description="Dual-camera mutual-gaze / joint-attention detection toolkit")
    parser.add_argument("--config", default=os.environ.get("GAZEFUSION_CONFIG"),
                        help="project config JSON (default: $GAZEFUSION_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="generate the bundled synthetic corpus")
    p.add_argument("--root", default="fixture")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_fixture)

    p = sub.add_parser("sync", help="estimate per-session audio offsets")
    p.set_defaults(handler=cmd_sync)

    p = sub.add_parser("sample", help="pair frames at 1 Hz ticks using the offsets")
    p.add_argument("--offsets")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("featurize", help="fill the feature store")
    p.add_argument("--backbone", default="toy", choices=["toy"])
    p.add_argument("--frame-index")
    p.add_argument("--store")
    p.set_defaults(handler=cmd_featurize)

    dataset = sub.add_parser("dataset", help="build / split / balance the dataset")
    dsub = dataset.add_subparsers(dest="dataset_command", required=True)
    p = dsub.add_parser("build", help="filter by heads and label frames")
    p.add_argument("--frame-index")
    p.add_argument("--task", choices=["mg", "ja", "MG", "JA"])
    p.set_defaults(handler=cmd_dataset_build)
    p = dsub.add_parser("split", help="temporal train/val split plus held-out test")
    p.add_argument("--dataset")
    p.add_argument("--task", choices=["mg", "ja", "MG", "JA"])
    p.add_argument("--held-out", nargs="+")
    p.set_defaults(handler=cmd_dataset_split)
    p = dsub.add_parser("balance", help="downsample the test majority class to 50/50")
    p.add_argument("--split")
    p.add_argument("--task", choices=["mg", "ja", "MG", "JA"])
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_dataset_balance)

    p = sub.add_parser("train", help="train the fusion model, one run per seed")
    p.add_argument("--task", choices=["mg", "ja", "MG", "JA"])
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--split")
    p.add_argument("--store")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="score every run on the balanced test set")
    p.add_argument("--task", choices=["mg", "ja", "MG", "JA"])
    p.add_argument("--split")
    p.add_argument("--store")
    p.add_argument("--runs-dir")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="emit per-frame probabilities as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", choices=["mg", "ja", "MG", "JA"])
    p.add_argument("--session")
    p.add_argument("--dataset")
    p.add_argument("--store")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("import-predictions", help="score third-party classifier output")
    p.add_argument("--csv", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_import_predictions)

    p = sub.add_parser("export-timeline", help="build the review timeline document")
    p.add_argument("--predictions", required=True)
    p.add_argument("--annotations")
    p.add_argument("--window", type=float, default=15.0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_export_timeline)

    p = sub.add_parser("bench", help="measure eval-mode inference throughput")
    p.add_argument("--checkpoint")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = ProjectConfig.load(args.config) if args.config else ProjectConfig()
        return args.handler(args, config)
    except (CliError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
