/** Minimal surface of an HTMLVideoElement the controller needs (testable). */
export interface VideoLike {
  currentTime: number;
  playbackRate: number;
  paused: boolean;
  play(): void;
  pause(): void;
}

export const SEEK_PREROLL_S = 1.0;

/**
 * Keeps two camera streams aligned: the parent video plays ``offset`` seconds
 * ahead on its own clock (infant time t maps to parent time t + offset).
 */
export class DualPlayback {
  constructor(
    private infant: VideoLike,
    private parent: VideoLike,
    public offsetS = 0,
  ) {}

  /** Reference (infant-clock) playhead. */
  get currentTime(): number {
    return this.infant.currentTime;
  }

  seek(referenceTime: number): void {
    const t = Math.max(0, referenceTime);
    this.infant.currentTime = t;
    this.parent.currentTime = Math.max(0, t + this.offsetS);
  }

  /** Jump to an event with a one-second pre-roll, offset respected. */
  seekToEvent(eventStartS: number): void {
    this.seek(eventStartS - SEEK_PREROLL_S);
  }

  setRate(rate: number): void {
    this.infant.playbackRate = rate;
    this.parent.playbackRate = rate;
  }

  togglePlay(): void {
    if (this.infant.paused) {
      this.infant.play();
      this.parent.play();
    } else {
      this.infant.pause();
      this.parent.pause();
    }
  }

  /** Residual parent-clock misalignment after accounting for the offset. */
  drift(): number {
    return this.parent.currentTime - (this.infant.currentTime + this.offsetS);
  }

  resync(): void {
    this.parent.currentTime = this.infant.currentTime + this.offsetS;
  }
}
