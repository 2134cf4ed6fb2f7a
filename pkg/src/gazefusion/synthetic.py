"""Synthetic data: the planted relational task and the end-to-end media fixture.

The planted task probes cross-view reasoning directly: the label says whether
the mean of one designated feature channel is higher in view A than in view B.
Nothing about a single view resolves it, so a classifier only succeeds by
comparing the two views. Labels are computed from the realized token values
(zero label noise) and the channel-mean gap is kept away from zero so the
task is learnable at desk scale.

The media fixture writes a miniature dual-camera corpus (WAV audio with known
offsets, PPM frames, head manifests, annotation CSVs) so the whole pipeline
can run offline; everything is generated, nothing is stored in the repo.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import DualFrameSample, write_ppm
from .pipeline import (
    EventAnnotation,
    HeadBoxRecord,
    write_annotations_csv,
    write_manifest_csv,
    write_wav,
)
from .rng import named_stream


def planted_relational_samples(count: int, tokens_per_view: int, feature_dim: int,
                               seed: int, channel: int = 0, min_margin: float = 0.7,
                               session: str = "planted") -> list[DualFrameSample]:
    """Samples whose label is 1 iff the designated channel's mean is higher in A.

    The channel means are shifted to a drawn gap of at least ``min_margin``
    (sign random), so the realized label always matches the construction.
    """
    if not 0 <= channel < feature_dim:
        raise ValueError(f"channel {channel} out of range for width {feature_dim}")
    rng = named_stream(seed, "planted-task")
    samples = []
    for i in range(count):
        tokens_a = rng.normal(0.0, 1.0, (tokens_per_view, feature_dim))
        tokens_b = rng.normal(0.0, 1.0, (tokens_per_view, feature_dim))
        gap = float(rng.uniform(min_margin, 1.0)) * (1.0 if rng.random() < 0.5 else -1.0)
        tokens_a[:, channel] += gap / 2.0 - tokens_a[:, channel].mean()
        tokens_b[:, channel] += -gap / 2.0 - tokens_b[:, channel].mean()
        label = int(tokens_a[:, channel].mean() > tokens_b[:, channel].mean())
        samples.append(DualFrameSample(session=session, timestamp_s=float(i),
                                       tokens_a=tokens_a.astype(np.float32),
                                       tokens_b=tokens_b.astype(np.float32),
                                       label=label))
    return samples


# ---------------------------------------------------------------------------
# media fixture


@dataclass
class FixtureSessionSpec:
    name: str
    duration_s: int
    offset_s: float            # parent-stream delay relative to infant clock
    mg_events: list[tuple[float, float, str]]  # (start, end, quality)
    ja_events: list[tuple[float, float, str]]


DEFAULT_SESSIONS = [
    FixtureSessionSpec("s01", 40, 0.20,
                       mg_events=[(1.0, 9.0, "confident"), (20.0, 27.0, "confident"),
                                  (31.0, 33.0, "ambiguous")],
                       ja_events=[(3.0, 7.0, "confident"), (14.0, 18.0, "confident"),
                                  (28.0, 30.0, "confident")]),
    FixtureSessionSpec("s02", 40, -0.35,
                       mg_events=[(2.0, 12.0, "confident"), (24.0, 31.0, "confident")],
                       ja_events=[(1.0, 4.0, "confident"), (18.0, 22.0, "confident"),
                                  (34.0, 36.0, "ambiguous")]),
    FixtureSessionSpec("s03", 40, 0.50,
                       mg_events=[(2.0, 13.0, "confident"), (22.0, 30.0, "confident")],
                       ja_events=[(1.0, 5.0, "confident"), (15.0, 20.0, "confident"),
                                  (32.0, 36.0, "confident")]),
]

AUDIO_RATE = 8000
FRAME_SIZE = 24  # pixels per side


def _burst_audio(duration_s: int, rng) -> np.ndarray:
    n = duration_s * AUDIO_RATE
    signal = rng.normal(0.0, 0.02, n)
    for _ in range(duration_s):
        at = int(rng.integers(0, n - AUDIO_RATE // 4))
        signal[at:at + AUDIO_RATE // 10] += rng.normal(0.0, 0.5, AUDIO_RATE // 10)
    return np.clip(signal, -1.0, 1.0)


def _delay(signal: np.ndarray, offset_s: float) -> np.ndarray:
    shift = int(round(abs(offset_s) * AUDIO_RATE))
    if offset_s >= 0:
        return np.concatenate([np.zeros(shift), signal])[: len(signal)]
    return np.concatenate([signal[shift:], np.zeros(shift)])


def _frame_image(rng, active_mg: bool, active_ja: bool, view: str) -> np.ndarray:
    """Tiny frame whose colors carry the event state plus pixel noise."""
    base = np.full((FRAME_SIZE, FRAME_SIZE, 3), 60, dtype=np.float64)
    if active_mg:
        base[:, :, 0] += 120  # red-shifted during mutual gaze
    if active_ja:
        base[:, :, 1] += 120  # green-shifted during joint attention
    if view == "parent":
        base[:, :, 2] += 40
    base += rng.normal(0.0, 8.0, base.shape)
    return np.clip(base, 0, 255).astype(np.uint8)


def _head_box(rng, active_mg: bool) -> tuple[float, float, float, float]:
    # heads drift toward the center while mutual gaze is active
    center = 0.5 if active_mg else 0.35
    cx = float(np.clip(center + rng.normal(0.0, 0.05), 0.15, 0.85))
    cy = float(np.clip(0.5 + rng.normal(0.0, 0.05), 0.15, 0.85))
    half = 0.12
    return (cx - half, cy - half, cx + half, cy + half)


def generate_fixture(root, seed: int = 0,
                     sessions: list[FixtureSessionSpec] | None = None) -> dict:
    """Write the synthetic dual-camera corpus under ``root``; returns a summary.

    Layout: <root>/media/<session>/{audio_infant.wav,audio_parent.wav},
    <root>/media/<session>/frames/<view>/<timestamp_ms>.ppm,
    <root>/manifests/heads.csv, <root>/annotations/<session>.csv.
    """
    sessions = sessions if sessions is not None else DEFAULT_SESSIONS
    root = Path(root)
    media = root / "media"
    manifests = root / "manifests"
    annotations_dir = root / "annotations"
    for directory in (media, manifests, annotations_dir):
        directory.mkdir(parents=True, exist_ok=True)

    head_records: list[HeadBoxRecord] = []
    summary: dict = {"seed": seed, "sessions": {}}
    for spec in sessions:
        srng = named_stream(seed, f"fixture-{spec.name}")
        session_dir = media / spec.name
        (session_dir / "frames" / "infant").mkdir(parents=True, exist_ok=True)
        (session_dir / "frames" / "parent").mkdir(parents=True, exist_ok=True)

        audio = _burst_audio(spec.duration_s, srng)
        write_wav(session_dir / "audio_infant.wav", audio, AUDIO_RATE)
        write_wav(session_dir / "audio_parent.wav", _delay(audio, spec.offset_s), AUDIO_RATE)

        events = [EventAnnotation("MG", s, e, e - s, q) for s, e, q in spec.mg_events]
        events += [EventAnnotation("JA", s, e, e - s, q) for s, e, q in spec.ja_events]
        events.sort(key=lambda a: (a.start_s, a.event_type))
        write_annotations_csv(events, annotations_dir / f"{spec.name}.csv")

        mg_confident = [(s, e) for s, e, q in spec.mg_events if q == "confident"]
        ja_confident = [(s, e) for s, e, q in spec.ja_events if q == "confident"]
        n_frames = 0
        for t in range(spec.duration_s + 1):
            active_mg = any(s <= t <= e for s, e in mg_confident)
            active_ja = any(s <= t <= e for s, e in ja_confident)
            for view in ("infant", "parent"):
                stream_t = float(t) if view == "infant" else float(t) + spec.offset_s
                if stream_t < 0:
                    continue
                timestamp_ms = int(round(stream_t * 1000))
                image = _frame_image(srng, active_mg, active_ja, view)
                write_ppm(session_dir / "frames" / view / f"{timestamp_ms}.ppm", image)
                box = _head_box(srng, active_mg)
                if srng.random() < 0.08:  # occasional poor detection
                    confidence = 0.70 + srng.random() * 0.09
                else:
                    confidence = 0.85 + srng.random() * 0.13
                head_records.append(HeadBoxRecord(
                    session=spec.name, view=view, timestamp_s=stream_t,
                    box=box, confidence=round(confidence, 4)))
                n_frames += 1
        summary["sessions"][spec.name] = {
            "offset_s": spec.offset_s, "duration_s": spec.duration_s, "frames": n_frames}

    write_manifest_csv(head_records, manifests / "heads.csv")
    (root / "fixture.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return summary
