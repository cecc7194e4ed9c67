/** Per-alert timing. The display starts when the alert's features arrive and
 * stops at submission; the server's recorded elapsed time is authoritative
 * and replaces the local reading once the acknowledgment comes back. */

export class AlertTimer {
  private startedAt: number | null = null;
  private serverElapsed: number | null = null;
  private stoppedAt: number | null = null;

  constructor(private now: () => number = () => Date.now()) {}

  start(): void {
    if (this.startedAt === null) {
      this.startedAt = this.now();
    }
  }

  stop(): void {
    if (this.stoppedAt === null) {
      this.stoppedAt = this.now();
    }
  }

  reconcile(serverElapsedSeconds: number): void {
    this.serverElapsed = serverElapsedSeconds;
  }

  elapsedSeconds(): number {
    if (this.serverElapsed !== null) return this.serverElapsed;
    if (this.startedAt === null) return 0;
    const end = this.stoppedAt ?? this.now();
    return (end - this.startedAt) / 1000;
  }

  display(): string {
    const total = Math.round(this.elapsedSeconds());
    const minutes = Math.floor(total / 60);
    const seconds = total % 60;
    return `${minutes}:${String(seconds).padStart(2, "0")}`;
  }
}
