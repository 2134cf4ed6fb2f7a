import { EVENT_COLORS } from "./types.js";
import type { EventAnnotation, EventType, TimelineDocument, TimelineSection } from "./types.js";

export class TimelineParseError extends Error {}

/** Parse the versioned "GZTL" line-oriented timeline document. */
export function parseTimelineDocument(text: string): TimelineDocument {
  const lines = text.split(/\r?\n/);
  const magic = (lines[0] ?? "").split(" ");
  if (magic.length !== 2 || magic[0] !== "GZTL") {
    throw new TimelineParseError(`bad magic line: ${JSON.stringify(lines[0])}`);
  }
  if (Number(magic[1]) !== 1) {
    throw new TimelineParseError(`unsupported timeline version ${magic[1]}`);
  }
  if (!lines[1]?.startsWith("window_s ")) {
    throw new TimelineParseError("missing window_s line");
  }
  const doc: TimelineDocument = { windowS: Number(lines[1].split(" ")[1]), sections: [] };
  let i = 2;
  while (i < lines.length && lines[i] !== "") {
    if (!lines[i].startsWith("task ")) {
      throw new TimelineParseError(`expected task line at ${i + 1}, got ${JSON.stringify(lines[i])}`);
    }
    const task = lines[i].split(" ")[1] as EventType;
    const threshold = Number(lines[i + 1].split(" ")[1]);
    const nIntervals = Number(lines[i + 2].split(" ")[1]);
    i += 3;
    const intervals: Array<[number, number]> = [];
    for (let k = 0; k < nIntervals; k++, i++) {
      const [start, end] = lines[i].split(" ").map(Number);
      intervals.push([start, end]);
    }
    const nSlots = Number(lines[i].split(" ")[1]);
    i += 1;
    const slots: Array<[number, number]> = [];
    for (let k = 0; k < nSlots; k++, i++) {
      const [ts, prob] = lines[i].split(" ").map(Number);
      slots.push([ts, prob]);
    }
    doc.sections.push({ task, threshold, intervals, slots });
  }
  return doc;
}

export const FULL_OPACITY = 1.0;
export const REDUCED_OPACITY = 0.35;

export interface Bar {
  timestampS: number;
  /** normalized [0, 1] horizontal position within the scroll window */
  x: number;
  height: number;
  color: string;
  opacity: number;
}

export interface GroundTruthBar {
  x0: number;
  x1: number;
  color: "white";
}

export interface WindowRenderModel {
  windowStartS: number;
  windowEndS: number;
  bars: Bar[];
  groundTruth: GroundTruthBar[];
}

/** Scroll window centered on the playhead: [t - w/2, t + w/2]. */
export function scrollWindow(playheadS: number, windowS: number): [number, number] {
  return [playheadS - windowS / 2, playheadS + windowS / 2];
}

/**
 * Layout for the scrolling review strip: per-second probability bars colored
 * by task, with bars below the decision threshold drawn at reduced opacity,
 * plus ground-truth intervals as white bars.
 */
export function renderWindow(
  section: TimelineSection,
  playheadS: number,
  windowS: number,
): WindowRenderModel {
  const [start, end] = scrollWindow(playheadS, windowS);
  const span = end - start;
  const bars: Bar[] = [];
  for (const [ts, probability] of section.slots) {
    if (ts < start || ts > end) continue;
    bars.push({
      timestampS: ts,
      x: (ts - start) / span,
      height: probability,
      color: EVENT_COLORS[section.task],
      opacity: probability < section.threshold ? REDUCED_OPACITY : FULL_OPACITY,
    });
  }
  const groundTruth: GroundTruthBar[] = [];
  for (const [s0, s1] of section.intervals) {
    if (s1 < start || s0 > end) continue;
    groundTruth.push({
      x0: Math.max(0, (s0 - start) / span),
      x1: Math.min(1, (s1 - start) / span),
      color: "white",
    });
  }
  return { windowStartS: start, windowEndS: end, bars, groundTruth };
}

export interface GlobalBand {
  eventType: EventType;
  x0: number;
  x1: number;
  color: string;
}

/** Whole-session color-coded band per event type (annotation coverage view). */
export function renderGlobalTimeline(
  events: EventAnnotation[],
  durationS: number,
): GlobalBand[] {
  if (durationS <= 0) return [];
  return events.map((e) => ({
    eventType: e.eventType,
    x0: Math.max(0, e.startS / durationS),
    x1: Math.min(1, e.endS / durationS),
    color: EVENT_COLORS[e.eventType],
  }));
}
