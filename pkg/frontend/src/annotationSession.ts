import type { EventAnnotation, EventType, Quality } from "./types.js";

export interface ToggleResult {
  action: "opened" | "committed" | "rejected";
  message?: string;
  event?: EventAnnotation;
}

/**
 * Annotation state for one dual-camera session: per-type open events,
 * committed intervals, and an undo history. At most one event per type is
 * open at a time; committing before its start (after a seek) is rejected.
 */
export class AnnotationSession {
  private open = new Map<EventType, number>();
  private committed: EventAnnotation[] = [];
  private history: EventAnnotation[][] = [];

  toggleEvent(type: EventType, currentTime: number, quality: Quality = "confident"): ToggleResult {
    const openedAt = this.open.get(type);
    if (openedAt === undefined) {
      this.open.set(type, currentTime);
      return { action: "opened" };
    }
    if (currentTime <= openedAt) {
      return {
        action: "rejected",
        message: `cannot commit ${type} at ${currentTime.toFixed(3)}s: ` +
          `event opened later, at ${openedAt.toFixed(3)}s`,
      };
    }
    const event: EventAnnotation = {
      eventType: type,
      startS: openedAt,
      endS: currentTime,
      durationS: currentTime - openedAt,
      quality,
    };
    this.pushHistory();
    this.open.delete(type);
    this.committed.push(event);
    return { action: "committed", event };
  }

  openEvents(): Array<{ type: EventType; startS: number }> {
    return [...this.open.entries()].map(([type, startS]) => ({ type, startS }));
  }

  isOpen(type: EventType): boolean {
    return this.open.has(type);
  }

  /** Committed events sorted by start time (display order), regardless of entry order. */
  events(): EventAnnotation[] {
    return [...this.committed].sort((a, b) => a.startS - b.startS || a.endS - b.endS);
  }

  deleteEvent(event: EventAnnotation): boolean {
    const index = this.committed.indexOf(event);
    if (index < 0) return false;
    this.pushHistory();
    this.committed.splice(index, 1);
    return true;
  }

  setQuality(event: EventAnnotation, quality: Quality): void {
    const index = this.committed.indexOf(event);
    if (index < 0) return;
    this.pushHistory();
    this.committed[index] = { ...event, quality };
  }

  undo(): boolean {
    const previous = this.history.pop();
    if (!previous) return false;
    this.committed = previous;
    return true;
  }

  private pushHistory(): void {
    this.history.push([...this.committed]);
  }
}
