"""Preprocessing pipeline: audio sync, frame pairing, labeling, splits, balance.

Dual-camera streams are aligned by cross-correlating 100 Hz amplitude
envelopes of their audio tracks. Positive offset means the parent stream's
content sits ``offset`` seconds later on its own clock than on the infant
clock, so infant-clock time t corresponds to parent-stream time t + offset.

Frames are paired at 1 Hz ticks on the infant clock, filtered by the head-box
manifest, labeled from confident event annotations (boundaries inclusive),
split chronologically (first 10% of each non-test session to validation), and
the held-out test set is downsampled once to an exact 50/50 class ratio.
"""

from __future__ import annotations

import csv
import warnings
import wave
from dataclasses import dataclass, field

import numpy as np

from .features import DualFrameSample, VIEWS, feature_store_read
from .rng import named_stream
from .tensor import ConfigError

ENVELOPE_RATE_HZ = 100
EVENT_TYPES = ("MG", "JA")
QUALITIES = ("confident", "ambiguous")


class AudioFormatError(ValueError):
    """Audio file is not plain 8/16-bit PCM WAV."""


class SilentAudioError(ValueError):
    """Envelope variance too low to synchronize; manual validation required."""


class PipelineInputError(ValueError):
    """A pipeline operation received unusable inputs."""


class AnnotationFormatError(ValueError):
    """An annotation or manifest CSV row failed validation."""


class BalanceError(ValueError):
    """Test balancing impossible; message reports the class counts."""


# ---------------------------------------------------------------------------
# domain records


@dataclass
class EventAnnotation:
    """Labeled behavioral interval from the annotation tool."""

    event_type: str
    start_s: float
    end_s: float
    duration_s: float
    quality: str

    def __post_init__(self):
        if self.event_type not in EVENT_TYPES:
            raise AnnotationFormatError(f"event_type must be one of {EVENT_TYPES}, "
                                        f"got {self.event_type!r}")
        if self.quality not in QUALITIES:
            raise AnnotationFormatError(f"quality must be one of {QUALITIES}, "
                                        f"got {self.quality!r}")
        if not self.start_s < self.end_s:
            raise AnnotationFormatError(
                f"start_s {self.start_s} must precede end_s {self.end_s}")
        if abs(self.duration_s - (self.end_s - self.start_s)) > 1e-3:
            raise AnnotationFormatError(
                f"duration_s {self.duration_s} inconsistent with interval "
                f"[{self.start_s}, {self.end_s}]")


@dataclass
class HeadBoxRecord:
    session: str
    view: str
    timestamp_s: float
    box: tuple[float, float, float, float]  # normalized x0, y0, x1, y1
    confidence: float

    def __post_init__(self):
        if self.view not in VIEWS:
            raise AnnotationFormatError(f"view must be one of {VIEWS}, got {self.view!r}")
        x0, y0, x1, y1 = self.box
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise AnnotationFormatError(f"invalid head box {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise AnnotationFormatError(f"confidence out of [0, 1]: {self.confidence}")

    @property
    def timestamp_ms(self) -> int:
        return int(round(self.timestamp_s * 1000.0))


@dataclass
class FramePair:
    """One aligned tick: reference-clock time plus each view's frame timestamp."""

    tick_s: float
    timestamp_a: float
    timestamp_b: float
    box_a: tuple[float, float, float, float] | None = None
    box_b: tuple[float, float, float, float] | None = None


@dataclass
class FrameIndex:
    session: str
    offset_s: float
    rate_hz: float
    pairs: list[FramePair] = field(default_factory=list)


@dataclass
class LabeledFrame:
    """A paired frame with its task label and pool eligibility flags."""

    session: str
    pair: FramePair
    label: int
    in_ambiguous: bool
    task: str

    @property
    def eligible_train_val(self) -> bool:
        return not self.in_ambiguous

    @property
    def eligible_test(self) -> bool:
        # ambiguous coverage disqualifies unless a confident label applies
        return (not self.in_ambiguous) or self.label == 1


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    test: list = field(default_factory=list)
    task: str = "MG"


@dataclass
class OffsetEstimate:
    offset_s: float
    confidence: float
    reliable: bool


# ---------------------------------------------------------------------------
# audio


def parse_wav(path) -> tuple[np.ndarray, int]:
    """Load a PCM WAV as mono float64 in [-1, 1] plus its sample rate.

    Channels are averaged; 8-bit (unsigned) and 16-bit (signed) PCM accepted.
    """
    try:
        with wave.open(str(path), "rb") as fh:
            n_channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            frames = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a readable PCM WAV ({exc})") from exc
    if width == 2:
        samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 1:
        samples = (np.frombuffer(frames, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    else:
        raise AudioFormatError(f"{path}: unsupported sample width {width * 8} bits")
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return samples, rate


def write_wav(path, samples: np.ndarray, rate: int) -> None:
    """Write mono float samples in [-1, 1] as 16-bit PCM (fixture/testing aid)."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


def amplitude_envelope(samples: np.ndarray, rate: int,
                       envelope_rate: int = ENVELOPE_RATE_HZ) -> np.ndarray:
    """Mean absolute value per window (10 ms at the default 100 Hz)."""
    if rate < envelope_rate:
        raise AudioFormatError(f"sample rate {rate} below envelope rate {envelope_rate}")
    window = rate // envelope_rate
    usable = (len(samples) // window) * window
    if usable == 0:
        raise PipelineInputError("audio shorter than one envelope window")
    return np.abs(samples[:usable]).reshape(-1, window).mean(axis=1)


def estimate_audio_offset(audio_a: np.ndarray, rate_a: int,
                          audio_b: np.ndarray, rate_b: int,
                          max_lag_s: float = 5.0,
                          silence_threshold: float = 1e-8,
                          min_confidence: float = 0.35) -> OffsetEstimate:
    """FFT cross-correlation of mean-removed envelopes at 100 Hz.

    Returns the lag (positive: B's content is delayed relative to A) plus the
    normalized peak correlation. Near-silent input raises; an unreliable but
    nonsilent match is returned flagged for manual validation.
    """
    if len(audio_a) == 0 or len(audio_b) == 0:
        raise PipelineInputError("empty audio stream")
    if max_lag_s <= 0:
        raise PipelineInputError(f"max_lag_s must be > 0, got {max_lag_s}")
    env_a = amplitude_envelope(np.asarray(audio_a, dtype=np.float64), rate_a)
    env_b = amplitude_envelope(np.asarray(audio_b, dtype=np.float64), rate_b)
    env_a = env_a - env_a.mean()
    env_b = env_b - env_b.mean()
    if env_a.var() < silence_threshold or env_b.var() < silence_threshold:
        raise SilentAudioError(
            "near-silent audio: offset cannot be estimated, validate manually")

    n = 1 << int(np.ceil(np.log2(len(env_a) + len(env_b) - 1)))
    spec_a = np.fft.rfft(env_a, n)
    spec_b = np.fft.rfft(env_b, n)
    corr = np.fft.irfft(np.conj(spec_a) * spec_b, n)

    max_lag = int(round(max_lag_s * ENVELOPE_RATE_HZ))
    max_lag = min(max_lag, len(env_a) - 1, len(env_b) - 1)
    lags = np.arange(-max_lag, max_lag + 1)
    values = corr[lags % n]
    peak = int(np.argmax(values))
    norm = float(np.sqrt(np.sum(env_a ** 2) * np.sum(env_b ** 2)))
    confidence = float(np.clip(values[peak] / norm, 0.0, 1.0)) if norm > 0 else 0.0
    offset_s = float(lags[peak]) / ENVELOPE_RATE_HZ
    return OffsetEstimate(offset_s=offset_s, confidence=confidence,
                          reliable=confidence >= min_confidence)


# ---------------------------------------------------------------------------
# frame pairing


def sample_frames(timestamps_a, timestamps_b, offset_s: float,
                  rate_hz: float = 1.0, session: str = "unnamed") -> FrameIndex:
    """Pair the nearest frame per view at each reference-clock tick.

    Tick t on the infant (A) clock targets A-time t and B-time t + offset.
    A tick is dropped when either view's nearest frame deviates by more than
    half a tick period.
    """
    ts_a = np.asarray(timestamps_a, dtype=np.float64)
    ts_b = np.asarray(timestamps_b, dtype=np.float64)
    if ts_a.size == 0 or ts_b.size == 0:
        raise PipelineInputError("each view needs at least one frame timestamp")
    for name, ts in (("A", ts_a), ("B", ts_b)):
        if np.any(np.diff(ts) <= 0):
            raise PipelineInputError(f"view {name} timestamps must be strictly increasing")
    if rate_hz <= 0:
        raise PipelineInputError(f"rate_hz must be > 0, got {rate_hz}")

    tolerance = 0.5 / rate_hz
    index = FrameIndex(session=session, offset_s=offset_s, rate_hz=rate_hz)
    last_target = max(ts_a[-1], ts_b[-1] - offset_s)
    k = 0
    while True:
        tick = k / rate_hz
        if tick > last_target + tolerance:
            break
        near_a = _nearest(ts_a, tick)
        near_b = _nearest(ts_b, tick + offset_s)
        if abs(near_a - tick) <= tolerance and abs(near_b - (tick + offset_s)) <= tolerance:
            index.pairs.append(FramePair(tick_s=tick, timestamp_a=float(near_a),
                                         timestamp_b=float(near_b)))
        k += 1
    return index


def _nearest(sorted_ts: np.ndarray, target: float) -> float:
    pos = np.searchsorted(sorted_ts, target)
    candidates = []
    if pos > 0:
        candidates.append(sorted_ts[pos - 1])
    if pos < len(sorted_ts):
        candidates.append(sorted_ts[pos])
    # ties resolve to the earlier frame
    return min(candidates, key=lambda t: (abs(t - target), t))


def filter_by_heads(index: FrameIndex, manifest: list[HeadBoxRecord],
                    min_confidence: float = 0.8) -> tuple[list[FramePair], dict]:
    """Keep pairs where both views have a confident head box; attach the boxes."""
    by_key: dict[tuple[str, str, int], HeadBoxRecord] = {}
    for record in manifest:
        by_key[(record.session, record.view, record.timestamp_ms)] = record
    survivors: list[FramePair] = []
    stats = {"total": len(index.pairs), "kept": 0,
             "missing_record": 0, "low_confidence": 0}
    for pair in index.pairs:
        rec_a = by_key.get((index.session, "infant", int(round(pair.timestamp_a * 1000))))
        rec_b = by_key.get((index.session, "parent", int(round(pair.timestamp_b * 1000))))
        if rec_a is None or rec_b is None:
            stats["missing_record"] += 1
            continue
        if rec_a.confidence < min_confidence or rec_b.confidence < min_confidence:
            stats["low_confidence"] += 1
            continue
        survivors.append(FramePair(tick_s=pair.tick_s, timestamp_a=pair.timestamp_a,
                                   timestamp_b=pair.timestamp_b,
                                   box_a=rec_a.box, box_b=rec_b.box))
        stats["kept"] += 1
    return survivors, stats


# ---------------------------------------------------------------------------
# labeling / splitting / balancing


def merge_confident_intervals(annotations: list[EventAnnotation],
                              task: str) -> list[tuple[float, float]]:
    """Confident intervals of one type, merged where they overlap (with warning)."""
    spans = sorted((a.start_s, a.end_s) for a in annotations
                   if a.event_type == task and a.quality == "confident")
    merged: list[tuple[float, float]] = []
    for start, end in spans:
        if merged and start <= merged[-1][1]:
            warnings.warn(f"overlapping confident {task} events merged: "
                          f"{merged[-1]} and ({start}, {end})", stacklevel=2)
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def label_frames(pairs: list[FramePair], annotations: list[EventAnnotation],
                 task: str, session: str = "unnamed") -> list[LabeledFrame]:
    """Label ticks by confident-interval membership (boundaries inclusive).

    Ticks inside an ambiguous event of the task type are flagged: they are
    excluded from train/validation pools, and kept for test only when a
    confident label applies.
    """
    if task not in EVENT_TYPES:
        raise PipelineInputError(f"task must be one of {EVENT_TYPES}, got {task!r}")
    confident = merge_confident_intervals(annotations, task)
    ambiguous = [(a.start_s, a.end_s) for a in annotations
                 if a.event_type == task and a.quality == "ambiguous"]
    labeled = []
    for pair in pairs:
        t = pair.tick_s
        label = int(any(start <= t <= end for start, end in confident))
        in_ambiguous = any(start <= t <= end for start, end in ambiguous)
        labeled.append(LabeledFrame(session=session, pair=pair, label=label,
                                    in_ambiguous=in_ambiguous, task=task))
    return labeled


def temporal_split(samples: list[LabeledFrame], held_out_sessions: list[str],
                   val_fraction: float = 0.10) -> DatasetSplit:
    """Held-out sessions go to test in full; others split chronologically,
    first ceil(val_fraction * n) frames to validation, the rest to training."""
    if not held_out_sessions:
        raise ConfigError("held_out_sessions must not be empty")
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError(f"val_fraction must be in [0, 1), got {val_fraction}")
    sessions = {s.session for s in samples}
    missing = set(held_out_sessions) - sessions
    if missing:
        raise ConfigError(f"held-out sessions absent from data: {sorted(missing)}")
    tasks = {s.task for s in samples}
    if len(tasks) > 1:
        raise PipelineInputError(f"mixed tasks in one split: {sorted(tasks)}")

    split = DatasetSplit(task=tasks.pop() if tasks else "MG")
    held = set(held_out_sessions)
    for session in sorted(sessions):
        in_session = sorted((s for s in samples if s.session == session),
                            key=lambda s: s.pair.tick_s)
        if session in held:
            split.test.extend(s for s in in_session if s.eligible_test)
            continue
        eligible = [s for s in in_session if s.eligible_train_val]
        n_val = int(np.ceil(val_fraction * len(eligible)))
        split.validation.extend(eligible[:n_val])
        split.train.extend(eligible[n_val:])
    return split


def balance_test(test_samples: list, seed: int) -> list:
    """Downsample the majority class without replacement to the minority count.

    One-time, deterministic given the seed; selected samples are kept
    bit-exactly and in their original order. Works on anything with a
    ``label`` attribute.
    """
    positives = [i for i, s in enumerate(test_samples) if s.label == 1]
    negatives = [i for i, s in enumerate(test_samples) if s.label == 0]
    if not positives or not negatives:
        raise BalanceError(
            f"both classes required to balance: {len(positives)} positive, "
            f"{len(negatives)} negative")
    rng = named_stream(seed, "test-balance")
    if len(positives) > len(negatives):
        keep_majority = rng.choice(len(positives), size=len(negatives), replace=False)
        kept = set(negatives) | {positives[i] for i in keep_majority}
    elif len(negatives) > len(positives):
        keep_majority = rng.choice(len(negatives), size=len(positives), replace=False)
        kept = set(positives) | {negatives[i] for i in keep_majority}
    else:
        return list(test_samples)
    return [s for i, s in enumerate(test_samples) if i in kept]


def attach_features(frames: list[LabeledFrame], store_root) -> list[DualFrameSample]:
    """Join labeled frame pairs with their stored token sequences."""
    samples = []
    for frame in frames:
        seq_a = feature_store_read(store_root, frame.session, "infant", frame.pair.timestamp_a)
        seq_b = feature_store_read(store_root, frame.session, "parent", frame.pair.timestamp_b)
        samples.append(DualFrameSample(session=frame.session, timestamp_s=frame.pair.tick_s,
                                       tokens_a=seq_a.tokens, tokens_b=seq_b.tokens,
                                       label=frame.label))
    return samples


# ---------------------------------------------------------------------------
# CSV formats (byte layouts in docs/formats.md)

ANNOTATION_HEADER = ["event_type", "start_s", "end_s", "duration_s", "quality"]
MANIFEST_HEADER = ["session", "view", "timestamp_s", "x0", "y0", "x1", "y1", "confidence"]


def write_annotations_csv(annotations: list[EventAnnotation], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANNOTATION_HEADER)
        for a in annotations:
            writer.writerow([a.event_type, f"{a.start_s:.3f}", f"{a.end_s:.3f}",
                             f"{a.duration_s:.3f}", a.quality])


def read_annotations_csv(path) -> list[EventAnnotation]:
    annotations = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise AnnotationFormatError(f"{path}: empty annotation file") from None
        if header != ANNOTATION_HEADER:
            raise AnnotationFormatError(
                f"{path} line 1: header {header!r} != expected {ANNOTATION_HEADER!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise AnnotationFormatError(f"{path} line {line_no}: expected 5 fields")
            try:
                annotations.append(EventAnnotation(
                    event_type=row[0], start_s=float(row[1]), end_s=float(row[2]),
                    duration_s=float(row[3]), quality=row[4]))
            except (ValueError, AnnotationFormatError) as exc:
                raise AnnotationFormatError(f"{path} line {line_no}: {exc}") from None
    return annotations


def write_manifest_csv(records: list[HeadBoxRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in records:
            x0, y0, x1, y1 = r.box
            writer.writerow([r.session, r.view, f"{r.timestamp_s:.3f}",
                             f"{x0:.6f}", f"{y0:.6f}", f"{x1:.6f}", f"{y1:.6f}",
                             f"{r.confidence:.4f}"])


def read_manifest_csv(path) -> list[HeadBoxRecord]:
    records = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise AnnotationFormatError(f"{path}: empty manifest file") from None
        if header != MANIFEST_HEADER:
            raise AnnotationFormatError(
                f"{path} line 1: header {header!r} != expected {MANIFEST_HEADER!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 8:
                raise AnnotationFormatError(f"{path} line {line_no}: expected 8 fields")
            try:
                records.append(HeadBoxRecord(
                    session=row[0], view=row[1], timestamp_s=float(row[2]),
                    box=(float(row[3]), float(row[4]), float(row[5]), float(row[6])),
                    confidence=float(row[7])))
            except (ValueError, AnnotationFormatError) as exc:
                raise AnnotationFormatError(f"{path} line {line_no}: {exc}") from None
    return records
