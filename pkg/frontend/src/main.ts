import { AnnotationSession } from "./annotationSession.js";
import { annotationsToCsv, parseAnnotationsCsv } from "./csv.js";
import { defaultKeyMap, lookupAction, stepRate } from "./keyboard.js";
import { DualPlayback } from "./playback.js";
import { parseTimelineDocument, renderGlobalTimeline, renderWindow } from "./timeline.js";
import { EVENT_COLORS } from "./types.js";
import type { EventType, TimelineDocument } from "./types.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

const infantVideo = byId<HTMLVideoElement>("video-infant");
const parentVideo = byId<HTMLVideoElement>("video-parent");
const session = new AnnotationSession();
const playback = new DualPlayback(infantVideo, parentVideo, 0);
const keyMap = defaultKeyMap();
let timelineDoc: TimelineDocument | null = null;
let nextQuality: "confident" | "ambiguous" = "confident";

function loadVideo(input: HTMLInputElement, video: HTMLVideoElement): void {
  input.addEventListener("change", () => {
    const file = input.files?.[0];
    if (file) video.src = URL.createObjectURL(file);
  });
}

loadVideo(byId<HTMLInputElement>("file-infant"), infantVideo);
loadVideo(byId<HTMLInputElement>("file-parent"), parentVideo);

const offsetInput = byId<HTMLInputElement>("offset-input");
offsetInput.addEventListener("change", () => {
  playback.offsetS = Number(offsetInput.value) || 0;
  playback.resync();
});

function setStatus(message: string): void {
  byId<HTMLElement>("status").textContent = message;
}

function refreshIndicators(): void {
  for (const type of ["MG", "JA"] as EventType[]) {
    const el = byId<HTMLElement>(`indicator-${type.toLowerCase()}`);
    el.classList.toggle("active", session.isOpen(type));
  }
}

function refreshTable(): void {
  const body = byId<HTMLTableSectionElement>("event-rows");
  body.textContent = "";
  for (const event of session.events()) {
    const row = document.createElement("tr");
    const seek = document.createElement("button");
    seek.textContent = "▶";
    seek.addEventListener("click", () => playback.seekToEvent(event.startS));
    const remove = document.createElement("button");
    remove.textContent = "✕";
    remove.addEventListener("click", () => {
      session.deleteEvent(event);
      refreshAll();
    });
    const quality = document.createElement("button");
    quality.textContent = event.quality;
    quality.addEventListener("click", () => {
      session.setQuality(event, event.quality === "confident" ? "ambiguous" : "confident");
      refreshAll();
    });
    for (const text of [event.eventType, event.startS.toFixed(3), event.endS.toFixed(3),
                        event.durationS.toFixed(3)]) {
      const cell = document.createElement("td");
      cell.textContent = text;
      row.appendChild(cell);
    }
    for (const control of [quality, seek, remove]) {
      const cell = document.createElement("td");
      cell.appendChild(control);
      row.appendChild(cell);
    }
    body.appendChild(row);
  }
}

function refreshGlobalTimeline(): void {
  const container = byId<HTMLElement>("global-timeline");
  container.textContent = "";
  const duration = infantVideo.duration || 0;
  for (const band of renderGlobalTimeline(session.events(), duration)) {
    const div = document.createElement("div");
    div.className = "band";
    div.style.left = `${band.x0 * 100}%`;
    div.style.width = `${(band.x1 - band.x0) * 100}%`;
    div.style.background = band.color;
    div.classList.add(band.eventType === "MG" ? "band-mg" : "band-ja");
    container.appendChild(div);
  }
}

function drawReviewStrip(): void {
  if (!timelineDoc) return;
  const canvas = byId<HTMLCanvasElement>("review-canvas");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const laneHeight = canvas.height / Math.max(timelineDoc.sections.length, 1);
  timelineDoc.sections.forEach((section, lane) => {
    const top = lane * laneHeight;
    const model = renderWindow(section, playback.currentTime, timelineDoc!.windowS);
    ctx.fillStyle = "#ffffff";
    for (const gt of model.groundTruth) {
      ctx.globalAlpha = 1.0;
      ctx.fillRect(gt.x0 * canvas.width, top + 2, (gt.x1 - gt.x0) * canvas.width, 6);
    }
    const barWidth = canvas.width / (timelineDoc!.windowS + 1);
    for (const bar of model.bars) {
      ctx.globalAlpha = bar.opacity;
      ctx.fillStyle = bar.color;
      const h = bar.height * (laneHeight - 12);
      ctx.fillRect(bar.x * canvas.width - barWidth / 2, top + laneHeight - h - 2, barWidth - 1, h);
    }
    ctx.globalAlpha = 1.0;
    ctx.fillStyle = EVENT_COLORS[section.task];
    ctx.fillText(section.task, 4, top + 12);
  });
  // playhead
  ctx.globalAlpha = 1.0;
  ctx.strokeStyle = "#dddddd";
  ctx.beginPath();
  ctx.moveTo(canvas.width / 2, 0);
  ctx.lineTo(canvas.width / 2, canvas.height);
  ctx.stroke();
}

function refreshAll(): void {
  refreshIndicators();
  refreshTable();
  refreshGlobalTimeline();
  drawReviewStrip();
}

byId<HTMLButtonElement>("toggle-mg").addEventListener("click", () => handleToggle("MG"));
byId<HTMLButtonElement>("toggle-ja").addEventListener("click", () => handleToggle("JA"));
byId<HTMLButtonElement>("quality-toggle").addEventListener("click", () => {
  nextQuality = nextQuality === "confident" ? "ambiguous" : "confident";
  byId<HTMLButtonElement>("quality-toggle").textContent = `next: ${nextQuality}`;
});
byId<HTMLButtonElement>("undo").addEventListener("click", () => {
  session.undo();
  refreshAll();
});

function handleToggle(type: EventType): void {
  const result = session.toggleEvent(type, playback.currentTime, nextQuality);
  if (result.action === "rejected") {
    setStatus(result.message ?? "rejected");
  } else {
    setStatus(result.action === "opened"
      ? `${type} opened at ${playback.currentTime.toFixed(3)}s`
      : `${type} committed [${result.event!.startS.toFixed(3)}, ${result.event!.endS.toFixed(3)}]`);
  }
  refreshAll();
}

byId<HTMLButtonElement>("export-csv").addEventListener("click", () => {
  const blob = new Blob([annotationsToCsv(session.events())], { type: "text/csv" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = "annotations.csv";
  link.click();
});

byId<HTMLInputElement>("import-csv").addEventListener("change", async (e) => {
  const file = (e.target as HTMLInputElement).files?.[0];
  if (!file) return;
  try {
    const events = parseAnnotationsCsv(await file.text());
    for (const event of events) {
      session.toggleEvent(event.eventType, event.startS, event.quality);
      session.toggleEvent(event.eventType, event.endS, event.quality);
    }
    setStatus(`imported ${events.length} events`);
  } catch (err) {
    setStatus(`import error: ${err}`);
  }
  refreshAll();
});

byId<HTMLInputElement>("import-timeline").addEventListener("change", async (e) => {
  const file = (e.target as HTMLInputElement).files?.[0];
  if (!file) return;
  try {
    timelineDoc = parseTimelineDocument(await file.text());
    setStatus(`timeline loaded: ${timelineDoc.sections.map((s) => s.task).join(", ")}`);
  } catch (err) {
    setStatus(`timeline import error: ${err}`);
  }
  drawReviewStrip();
});

document.addEventListener("keydown", (e) => {
  if ((e.target as HTMLElement)?.tagName === "INPUT") return;
  const action = lookupAction(keyMap, e.key);
  if (!action) return;
  e.preventDefault();
  switch (action.kind) {
    case "toggle-event":
      handleToggle(action.eventType);
      break;
    case "play-pause":
      playback.togglePlay();
      break;
    case "rate-down":
    case "rate-up":
      playback.setRate(stepRate(infantVideo.playbackRate, action.kind === "rate-up" ? 1 : -1));
      setStatus(`rate ${infantVideo.playbackRate}x`);
      break;
    case "undo":
      session.undo();
      refreshAll();
      break;
  }
});

infantVideo.addEventListener("timeupdate", () => {
  byId<HTMLElement>("clock").textContent = playback.currentTime.toFixed(3);
  drawReviewStrip();
});

refreshAll();
