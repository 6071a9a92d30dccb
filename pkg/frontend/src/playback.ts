/** Scrubber/playback cursor over one rollout's frame list. */

export class Playback {
  private cursor = 0;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    public frameCount: number,
    private readonly onFrame: (index: number) => void,
    private readonly fps = 12,
  ) {}

  get index(): number {
    return this.cursor;
  }

  get playing(): boolean {
    return this.timer !== null;
  }

  seek(index: number): void {
    this.cursor = Math.max(0, Math.min(index, this.frameCount - 1));
    this.onFrame(this.cursor);
  }

  load(frameCount: number): void {
    this.stop();
    this.frameCount = frameCount;
    this.seek(0);
  }

  play(): void {
    if (this.timer !== null || this.frameCount <= 1) return;
    this.timer = setInterval(() => {
      if (this.cursor >= this.frameCount - 1) {
        this.stop();
        return;
      }
      this.seek(this.cursor + 1);
    }, 1000 / this.fps);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
