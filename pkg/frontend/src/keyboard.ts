import type { EventType } from "./types.js";

export type Action =
  | { kind: "toggle-event"; eventType: EventType }
  | { kind: "play-pause" }
  | { kind: "rate-down" }
  | { kind: "rate-up" }
  | { kind: "undo" };

export type KeyMap = Record<string, Action>;

/** Defaults: one key per event type, space for play/pause, brackets for rate. */
export function defaultKeyMap(): KeyMap {
  return {
    m: { kind: "toggle-event", eventType: "MG" },
    j: { kind: "toggle-event", eventType: "JA" },
    " ": { kind: "play-pause" },
    "[": { kind: "rate-down" },
    "]": { kind: "rate-up" },
    z: { kind: "undo" },
  };
}

export function lookupAction(map: KeyMap, key: string): Action | undefined {
  return map[key.toLowerCase() === key ? key : key.toLowerCase()];
}

export const PLAYBACK_RATES = [0.25, 0.5, 1.0, 1.5, 2.0];

export function stepRate(current: number, direction: 1 | -1): number {
  const index = PLAYBACK_RATES.findIndex((r) => Math.abs(r - current) < 1e-9);
  const base = index >= 0 ? index : PLAYBACK_RATES.indexOf(1.0);
  const next = Math.min(Math.max(base + direction, 0), PLAYBACK_RATES.length - 1);
  return PLAYBACK_RATES[next];
}
