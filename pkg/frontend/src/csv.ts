import type { EventAnnotation, EventType, Quality } from "./types.js";

export const ANNOTATION_HEADER = "event_type,start_s,end_s,duration_s,quality";

/** Seconds rendered with millisecond precision, matching the pipeline's CSVs. */
function seconds(value: number): string {
  return value.toFixed(3);
}

/** Byte format shared with the processing pipeline: header + one row per event. */
export function annotationsToCsv(events: EventAnnotation[]): string {
  const lines = [ANNOTATION_HEADER];
  for (const e of events) {
    lines.push(
      `${e.eventType},${seconds(e.startS)},${seconds(e.endS)},${seconds(e.durationS)},${e.quality}`,
    );
  }
  return lines.join("\n") + "\n";
}

export class CsvParseError extends Error {}

export function parseAnnotationsCsv(text: string): EventAnnotation[] {
  const lines = text.split(/\r?\n/);
  if (lines[0] !== ANNOTATION_HEADER) {
    throw new CsvParseError(`line 1: header ${JSON.stringify(lines[0])} != ${ANNOTATION_HEADER}`);
  }
  const events: EventAnnotation[] = [];
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i];
    if (line === "") continue;
    const fields = line.split(",");
    if (fields.length !== 5) {
      throw new CsvParseError(`line ${i + 1}: expected 5 fields, got ${fields.length}`);
    }
    const [type, start, end, duration, quality] = fields;
    if (type !== "MG" && type !== "JA") {
      throw new CsvParseError(`line ${i + 1}: unknown event type ${type}`);
    }
    if (quality !== "confident" && quality !== "ambiguous") {
      throw new CsvParseError(`line ${i + 1}: unknown quality ${quality}`);
    }
    const startS = Number(start);
    const endS = Number(end);
    const durationS = Number(duration);
    if (!Number.isFinite(startS) || !Number.isFinite(endS) || !Number.isFinite(durationS)) {
      throw new CsvParseError(`line ${i + 1}: non-numeric timestamp`);
    }
    if (startS >= endS) {
      throw new CsvParseError(`line ${i + 1}: start ${startS} must precede end ${endS}`);
    }
    if (Math.abs(durationS - (endS - startS)) > 1e-3) {
      throw new CsvParseError(`line ${i + 1}: duration inconsistent with interval`);
    }
    events.push({ eventType: type as EventType, startS, endS, durationS, quality: quality as Quality });
  }
  return events;
}

export interface PredictionRow {
  session: string;
  timestampS: number;
  task: EventType;
  probability: number;
  label: number | null;
}

export const PREDICTION_HEADER = "session,timestamp_s,task,probability,label";

export function parsePredictionsCsv(text: string): PredictionRow[] {
  const lines = text.split(/\r?\n/);
  if (lines[0] !== PREDICTION_HEADER) {
    throw new CsvParseError(`line 1: header ${JSON.stringify(lines[0])} != ${PREDICTION_HEADER}`);
  }
  const rows: PredictionRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i];
    if (line === "") continue;
    const fields = line.split(",");
    if (fields.length !== 5) {
      throw new CsvParseError(`line ${i + 1}: expected 5 fields, got ${fields.length}`);
    }
    const [session, ts, task, prob, label] = fields;
    if (task !== "MG" && task !== "JA") {
      throw new CsvParseError(`line ${i + 1}: unknown task ${task}`);
    }
    const probability = Number(prob);
    if (!Number.isFinite(probability) || probability < 0 || probability > 1) {
      throw new CsvParseError(`line ${i + 1}: probability ${prob} out of [0, 1]`);
    }
    rows.push({
      session,
      timestampS: Number(ts),
      task: task as EventType,
      probability,
      label: label === "" ? null : Number(label),
    });
  }
  return rows;
}
