"""Classification metrics, multi-run aggregation, prediction IO, timeline export.

ROC-AUC uses the rank statistic with midranks, which is exact under ties and
equals the trapezoidal area under the ROC curve. Multi-run results aggregate
per metric as (mean, observed min, observed max); the aggregate F1 is the
mean of per-run F1s, not a pooled-confusion F1.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "roc_auc")


class MetricContractError(ValueError):
    """Inputs violate a metric's preconditions (lengths, classes, tasks)."""


class UndefinedMetricError(MetricContractError):
    """The metric has no value for this input (e.g. single-class AUC)."""


class PredictionFormatError(ValueError):
    """A prediction CSV row failed validation; message cites the line number."""


@dataclass
class MetricReport:
    """Per-run classification metrics at a fixed threshold."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float | None
    threshold: float
    sample_count: int
    task: str = "MG"
    seed: int | None = None

    def __post_init__(self):
        for name in METRIC_NAMES:
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise MetricContractError(f"{name} out of [0, 1]: {value}")
        if self.precision + self.recall > 0:
            harmonic = 2 * self.precision * self.recall / (self.precision + self.recall)
        else:
            harmonic = 0.0
        if abs(self.f1 - harmonic) > 1e-9:
            raise MetricContractError(
                f"f1 {self.f1} is not the harmonic mean of precision/recall ({harmonic})")

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "roc_auc": self.roc_auc,
                "threshold": self.threshold, "sample_count": self.sample_count,
                "task": self.task, "seed": self.seed}


@dataclass
class AggregateReport:
    """Across-run summary: per metric mean with observed min/max spread."""

    task: str
    run_count: int
    metrics: dict[str, tuple[float, float, float]]  # name -> (mean, min, max)

    def spread(self, name: str) -> tuple[float, float, float]:
        """(mean, minus, plus) where minus = mean - min and plus = max - mean."""
        mean, low, high = self.metrics[name]
        return mean, mean - low, high - mean

    def to_rows(self) -> list[str]:
        rows = []
        for name in METRIC_NAMES:
            if name in self.metrics:
                mean, minus, plus = self.spread(name)
                rows.append(f"{name},{mean:.3f},{minus:.3f},{plus:.3f}")
        return rows

    def as_dict(self) -> dict:
        return {"task": self.task, "run_count": self.run_count,
                "metrics": {k: list(v) for k, v in self.metrics.items()}}


@dataclass
class PredictionRecord:
    """One scored frame: where, when, which task, and the model's probability."""

    session: str
    timestamp_s: float
    task: str
    probability: float
    label: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise MetricContractError(f"probability out of [0, 1]: {self.probability}")
        if self.label is not None and self.label not in (0, 1):
            raise MetricContractError(f"label must be 0/1, got {self.label}")


def threshold_metrics(predictions, labels, threshold: float = 0.5,
                      task: str = "MG", seed: int | None = None) -> MetricReport:
    """Confusion-matrix metrics with score >= threshold counted positive.

    Empty-denominator conventions: precision is 0 with no positive
    predictions, recall is 0 with no positive labels, F1 is 0 when both are 0.
    AUC is included when both classes are present, None otherwise.
    """
    scores = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels)
    if scores.shape != y.shape or scores.ndim != 1:
        raise MetricContractError(
            f"predictions and labels must be equal-length 1-d, got {scores.shape} vs {y.shape}")
    if scores.size == 0:
        raise MetricContractError("need at least one sample")
    if not np.isin(y, (0, 1)).all():
        raise MetricContractError("labels must be binary 0/1")
    predicted = scores >= threshold
    actual = y == 1
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    tn = int(np.sum(~predicted & ~actual))
    accuracy = (tp + tn) / scores.size
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    auc = roc_auc(scores, y) if 0 < actual.sum() < scores.size else None
    return MetricReport(accuracy=accuracy, precision=precision, recall=recall, f1=f1,
                        roc_auc=auc, threshold=threshold, sample_count=int(scores.size),
                        task=task, seed=seed)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney rank AUC with midranks for ties.

    Equals P(score_pos > score_neg) + 0.5 * P(score_pos == score_neg) exactly,
    which is the trapezoidal area under the ROC curve.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise MetricContractError(f"scores/labels shape mismatch: {s.shape} vs {y.shape}")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # midrank: ranks are 1-based, tied group shares the average
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def aggregate_runs(reports: list[MetricReport]) -> AggregateReport:
    """Per-metric mean/min/max across independent runs on one test set."""
    if not reports:
        raise MetricContractError("need at least one report to aggregate")
    tasks = {r.task for r in reports}
    if len(tasks) != 1:
        raise MetricContractError(f"cannot aggregate mixed tasks: {sorted(tasks)}")
    metrics: dict[str, tuple[float, float, float]] = {}
    for name in METRIC_NAMES:
        values = [getattr(r, name) for r in reports]
        if any(v is None for v in values):
            raise MetricContractError(f"metric {name} missing in at least one report")
        metrics[name] = (float(np.mean(values)), float(min(values)), float(max(values)))
    return AggregateReport(task=tasks.pop(), run_count=len(reports), metrics=metrics)


# ---------------------------------------------------------------------------
# prediction CSV

PREDICTION_HEADER = ["session", "timestamp_s", "task", "probability", "label"]


def export_predictions(records: list[PredictionRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_HEADER)
        for r in records:
            label = "" if r.label is None else str(r.label)
            writer.writerow([r.session, f"{r.timestamp_s:.3f}", r.task,
                             f"{r.probability:.6f}", label])


def import_external_predictions(path) -> list[PredictionRecord]:
    """Load third-party classifier outputs so they can be scored like ours."""
    records: list[PredictionRecord] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PredictionFormatError("line 1: empty prediction file") from None
        if header != PREDICTION_HEADER:
            raise PredictionFormatError(
                f"line 1: header {header!r} != expected {PREDICTION_HEADER!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PREDICTION_HEADER):
                raise PredictionFormatError(
                    f"line {line_no}: expected {len(PREDICTION_HEADER)} fields, got {len(row)}")
            session, ts, task, prob, label = row
            try:
                timestamp = float(ts)
                probability = float(prob)
            except ValueError as exc:
                raise PredictionFormatError(f"line {line_no}: {exc}") from None
            if not 0.0 <= probability <= 1.0:
                raise PredictionFormatError(
                    f"line {line_no}: probability {probability} out of [0, 1]")
            if task not in ("MG", "JA"):
                raise PredictionFormatError(f"line {line_no}: unknown task {task!r}")
            parsed_label: int | None = None
            if label != "":
                if label not in ("0", "1"):
                    raise PredictionFormatError(f"line {line_no}: label must be 0/1, got {label!r}")
                parsed_label = int(label)
            records.append(PredictionRecord(session=session, timestamp_s=timestamp,
                                            task=task, probability=probability,
                                            label=parsed_label))
    return records


# ---------------------------------------------------------------------------
# timeline document ("GZTL", line-oriented, versioned; see docs/formats.md)

TIMELINE_MAGIC = "GZTL"
TIMELINE_VERSION = 1


@dataclass
class TimelineSection:
    task: str
    threshold: float
    intervals: list[tuple[float, float]]          # confident ground truth
    slots: list[tuple[float, float]]              # (timestamp_s, probability)


@dataclass
class TimelineDocument:
    window_s: float
    sections: list[TimelineSection] = field(default_factory=list)

    def dumps(self) -> str:
        lines = [f"{TIMELINE_MAGIC} {TIMELINE_VERSION}", f"window_s {self.window_s:.3f}"]
        for section in self.sections:
            lines.append(f"task {section.task}")
            lines.append(f"threshold {section.threshold:.3f}")
            lines.append(f"intervals {len(section.intervals)}")
            for start, end in section.intervals:
                lines.append(f"{start:.3f} {end:.3f}")
            lines.append(f"slots {len(section.slots)}")
            for ts, prob in section.slots:
                lines.append(f"{ts:.3f} {prob:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TimelineDocument":
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty timeline document")
        magic = lines[0].split()
        if len(magic) != 2 or magic[0] != TIMELINE_MAGIC:
            raise ValueError(f"bad timeline magic line: {lines[0]!r}")
        if int(magic[1]) != TIMELINE_VERSION:
            raise ValueError(f"unsupported timeline version {magic[1]}")
        if not lines[1].startswith("window_s "):
            raise ValueError("missing window_s line")
        doc = cls(window_s=float(lines[1].split()[1]))
        i = 2
        while i < len(lines):
            if not lines[i].startswith("task "):
                raise ValueError(f"expected task line at {i + 1}, got {lines[i]!r}")
            task = lines[i].split()[1]
            threshold = float(lines[i + 1].split()[1])
            n_intervals = int(lines[i + 2].split()[1])
            i += 3
            intervals = []
            for _ in range(n_intervals):
                start, end = lines[i].split()
                intervals.append((float(start), float(end)))
                i += 1
            n_slots = int(lines[i].split()[1])
            i += 1
            slots = []
            for _ in range(n_slots):
                ts, prob = lines[i].split()
                slots.append((float(ts), float(prob)))
                i += 1
            doc.sections.append(TimelineSection(task=task, threshold=threshold,
                                                intervals=intervals, slots=slots))
        return doc


def export_timeline(predictions: list[PredictionRecord], annotations,
                    window_s: float = 15.0, threshold: float = 0.5) -> TimelineDocument:
    """Build the review document: ground-truth intervals plus per-second scores.

    ``annotations`` is a list of pipeline event annotations; only confident
    events of each prediction task are included as ground-truth intervals.
    Predictions must be sorted by time within each task.
    """
    doc = TimelineDocument(window_s=window_s)
    tasks = sorted({p.task for p in predictions}) or ["MG"]
    for task in tasks:
        slots = [(p.timestamp_s, p.probability) for p in predictions if p.task == task]
        if any(slots[i][0] > slots[i + 1][0] for i in range(len(slots) - 1)):
            raise MetricContractError(f"predictions for task {task} are not sorted by time")
        intervals = [(a.start_s, a.end_s) for a in annotations
                     if a.event_type == task and a.quality == "confident"]
        doc.sections.append(TimelineSection(task=task, threshold=threshold,
                                            intervals=intervals, slots=slots))
    return doc


# ---------------------------------------------------------------------------
# throughput


@dataclass
class ThroughputReport:
    samples_per_second: float
    mean_latency_s: float
    p50_latency_s: float
    p95_latency_s: float
    sample_count: int
    warmup_count: int

    def as_dict(self) -> dict:
        return {"samples_per_second": self.samples_per_second,
                "mean_latency_s": self.mean_latency_s,
                "p50_latency_s": self.p50_latency_s,
                "p95_latency_s": self.p95_latency_s,
                "sample_count": self.sample_count,
                "warmup_count": self.warmup_count}


def bench_throughput(model, inputs: list, batch_size: int = 8,
                     min_samples: int = 100, warmup: int = 10) -> ThroughputReport:
    """Wall-clock eval-mode inference throughput; warmup excluded.

    ``inputs`` is a list of (a, b) argument pairs for ``model.forward`` and is
    repeated until at least ``min_samples`` timed calls are made. The numbers
    are hardware-dependent and reported, never asserted.
    """
    if not inputs:
        raise MetricContractError("need at least one input to benchmark")
    if batch_size < 1:
        raise MetricContractError(f"batch_size must be >= 1, got {batch_size}")
    stream: list = []
    while len(stream) < min_samples + warmup:
        stream.extend(inputs)
    latencies = []
    seen = 0
    with T.no_grad():
        for start_idx in range(0, len(stream), batch_size):
            batch = stream[start_idx:start_idx + batch_size]
            start = time.perf_counter()
            for a, b in batch:
                model.forward(a, b, train_mode=False)
            per_sample = (time.perf_counter() - start) / len(batch)
            for _ in batch:
                seen += 1
                if seen > warmup:
                    latencies.append(per_sample)
    lat = np.array(latencies)
    total = float(lat.sum())
    return ThroughputReport(
        samples_per_second=len(lat) / total if total > 0 else float("inf"),
        mean_latency_s=float(lat.mean()),
        p50_latency_s=float(np.percentile(lat, 50)),
        p95_latency_s=float(np.percentile(lat, 95)),
        sample_count=len(lat),
        warmup_count=warmup)
