export type EventType = "MG" | "JA";
export type Quality = "confident" | "ambiguous";

export interface EventAnnotation {
  eventType: EventType;
  startS: number;
  endS: number;
  durationS: number;
  quality: Quality;
}

export interface TimelineSection {
  task: EventType;
  threshold: number;
  /** confident ground-truth intervals, [start, end] in seconds */
  intervals: Array<[number, number]>;
  /** per-second probabilities, [timestamp, probability] */
  slots: Array<[number, number]>;
}

export interface TimelineDocument {
  windowS: number;
  sections: TimelineSection[];
}

export const EVENT_COLORS: Record<EventType, string> = {
  JA: "#2e9e4f", // green
  MG: "#e07b2a", // orange
};
