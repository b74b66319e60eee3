/** Operator command dispatch with offline queueing and ack tracking.
 *
 * Commands issued while disconnected are queued and flushed on
 * reconnect; every command resolves with its ack or rejects (timeout,
 * connection dropped before an ack, explicit server error). Nothing is
 * dropped silently: rejection and queueing are both observable.
 */

import type { AckMessage } from "./types.js";

export interface CommandSocket {
  readonly isOpen: boolean;
  sendText(text: string): void;
}

interface Pending {
  resolve: (ack: AckMessage) => void;
  reject: (err: Error) => void;
  timer: ReturnType<typeof setTimeout>;
}

export type QueueListener = (queuedCount: number) => void;

export class CommandQueue {
  private counter = 0;
  private pending = new Map<string, Pending>();
  private queued: { id: string; payload: Record<string, unknown> }[] = [];
  private listeners: QueueListener[] = [];

  constructor(
    private socket: CommandSocket,
    private timeoutMs = 15_000,
  ) {}

  onQueueChange(listener: QueueListener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.queued.length);
  }

  get queuedCount(): number {
    return this.queued.length;
  }

  send(cmd: string, fields: Record<string, unknown> = {}): Promise<AckMessage> {
    this.counter += 1;
    const id = `c${this.counter}`;
    const payload = { cmd, id, ...fields };
    return new Promise<AckMessage>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        this.queued = this.queued.filter((q) => q.id !== id);
        this.notify();
        reject(new Error(`${cmd}: no response within ${this.timeoutMs} ms`));
      }, this.timeoutMs);
      this.pending.set(id, { resolve, reject, timer });
      if (this.socket.isOpen) {
        this.socket.sendText(JSON.stringify(payload));
      } else {
        this.queued.push({ id, payload });
        this.notify();
      }
    });
  }

  /** Feed every incoming ack here; returns true when it matched a command. */
  handleAck(ack: AckMessage): boolean {
    if (!ack.id) return false;
    const entry = this.pending.get(ack.id);
    if (!entry) return false;
    this.pending.delete(ack.id);
    clearTimeout(entry.timer);
    if (ack.ok) {
      entry.resolve(ack);
    } else {
      entry.reject(new Error(ack.error ?? "command failed"));
    }
    return true;
  }

  /** Flush queued commands after a reconnect. */
  handleOpen(): void {
    const toSend = this.queued;
    this.queued = [];
    for (const { payload } of toSend) {
      this.socket.sendText(JSON.stringify(payload));
    }
    this.notify();
  }

  /** Fail commands that were in flight when the connection dropped. */
  handleClose(): void {
    for (const [id, entry] of [...this.pending]) {
      if (this.queued.some((q) => q.id === id)) continue; // still queued, may flush later
      this.pending.delete(id);
      clearTimeout(entry.timer);
      entry.reject(new Error("connection lost before acknowledgement"));
    }
  }
}
