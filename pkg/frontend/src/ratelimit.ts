/** Trailing-edge rate limiter for slice requests.
 *
 * At most `maxPerSecond` invocations per sliding second; bursts collapse
 * to the newest arguments, which always get delivered (a drag ends on
 * the final plane position).
 */

export class RateLimiter<Args> {
  private stamps: number[] = [];
  private trailing: Args | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private fn: (args: Args) => void,
    private maxPerSecond = 10,
    private now: () => number = () => Date.now(),
  ) {}

  request(args: Args): void {
    const t = this.now();
    this.stamps = this.stamps.filter((s) => t - s < 1000);
    if (this.stamps.length < this.maxPerSecond) {
      this.stamps.push(t);
      this.fn(args);
      return;
    }
    this.trailing = args;
    if (this.timer === null) {
      const waitUntil = this.stamps[0]! + 1000;
      this.timer = setTimeout(() => {
        this.timer = null;
        const pending = this.trailing;
        this.trailing = null;
        if (pending !== null) this.request(pending);
      }, Math.max(0, waitUntil - t));
    }
  }

  dispose(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.trailing = null;
  }
}
