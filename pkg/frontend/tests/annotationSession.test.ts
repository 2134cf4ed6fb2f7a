import { describe, expect, it } from "vitest";
import { AnnotationSession } from "../src/annotationSession.js";

describe("AnnotationSession.toggleEvent", () => {
  it("opens then commits [3.0, 6.0] with duration 3.0", () => {
    const session = new AnnotationSession();
    expect(session.toggleEvent("MG", 3.0).action).toBe("opened");
    const result = session.toggleEvent("MG", 6.0);
    expect(result.action).toBe("committed");
    expect(result.event).toEqual({
      eventType: "MG", startS: 3.0, endS: 6.0, durationS: 3.0, quality: "confident",
    });
    expect(session.events()).toHaveLength(1);
  });

  it("tracks MG and JA as independent open events", () => {
    const session = new AnnotationSession();
    session.toggleEvent("MG", 1.0);
    session.toggleEvent("JA", 2.0);
    expect(session.isOpen("MG")).toBe(true);
    expect(session.isOpen("JA")).toBe(true);
    expect(session.openEvents()).toEqual([
      { type: "MG", startS: 1.0 },
      { type: "JA", startS: 2.0 },
    ]);
  });

  it("rejects committing before the open time after a seek back", () => {
    const session = new AnnotationSession();
    session.toggleEvent("MG", 6.0);
    const result = session.toggleEvent("MG", 2.0);
    expect(result.action).toBe("rejected");
    expect(result.message).toMatch(/opened later/);
    expect(session.isOpen("MG")).toBe(true);
    expect(session.events()).toHaveLength(0);
  });

  it("rejects zero-length spans", () => {
    const session = new AnnotationSession();
    session.toggleEvent("JA", 4.0);
    expect(session.toggleEvent("JA", 4.0).action).toBe("rejected");
  });
});

describe("review table model", () => {
  it("sorts events by start time regardless of entry order", () => {
    const session = new AnnotationSession();
    session.toggleEvent("MG", 10.0);
    session.toggleEvent("MG", 12.0);
    session.toggleEvent("JA", 1.0);
    session.toggleEvent("JA", 2.0);
    expect(session.events().map((e) => e.startS)).toEqual([1.0, 10.0]);
  });

  it("deleting an event removes it from the listing", () => {
    const session = new AnnotationSession();
    session.toggleEvent("MG", 1.0);
    session.toggleEvent("MG", 2.0);
    const [event] = session.events();
    expect(session.deleteEvent(event)).toBe(true);
    expect(session.events()).toHaveLength(0);
  });

  it("undo restores the previous committed list", () => {
    const session = new AnnotationSession();
    session.toggleEvent("MG", 1.0);
    session.toggleEvent("MG", 2.0);
    session.toggleEvent("JA", 3.0);
    session.toggleEvent("JA", 5.0);
    expect(session.events()).toHaveLength(2);
    expect(session.undo()).toBe(true);
    expect(session.events().map((e) => e.eventType)).toEqual(["MG"]);
    expect(session.undo()).toBe(true);
    expect(session.events()).toHaveLength(0);
    expect(session.undo()).toBe(false);
  });

  it("quality can be edited after commit", () => {
    const session = new AnnotationSession();
    session.toggleEvent("MG", 1.0);
    session.toggleEvent("MG", 2.0);
    session.setQuality(session.events()[0], "ambiguous");
    expect(session.events()[0].quality).toBe("ambiguous");
  });
});
