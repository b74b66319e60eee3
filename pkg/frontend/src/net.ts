/** WebSocket session client: reducer-driven state with reconnect.
 *
 * The WebSocket implementation is injectable so headless tests (node)
 * can drive the same client against a live server.
 */

import { CommandQueue } from "./commands.js";
import { applyMessage, initialState, type ViewerState } from "./state.js";
import type { AckMessage, ServerMessage } from "./types.js";

// structural subset shared by the browser WebSocket and the ws package
export interface WebSocketLike {
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  send(data: string): void;
  close(): void;
  readyState: number;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export type StateListener = (state: ViewerState, msg: ServerMessage | null) => void;

export interface SessionClientOptions {
  reconnectDelayMs?: number;
  commandTimeoutMs?: number;
  reconnect?: boolean;
}

export class SessionClient {
  state: ViewerState = initialState();
  readonly commands: CommandQueue;
  private ws: WebSocketLike | null = null;
  private listeners: StateListener[] = [];
  private closed = false;
  private reconnectDelayMs: number;
  private shouldReconnect: boolean;

  constructor(
    private url: string,
    private factory: WebSocketFactory,
    options: SessionClientOptions = {},
  ) {
    this.reconnectDelayMs = options.reconnectDelayMs ?? 1000;
    this.shouldReconnect = options.reconnect ?? true;
    const self = this;
    this.commands = new CommandQueue(
      {
        get isOpen() {
          return self.ws !== null && self.ws.readyState === 1;
        },
        sendText: (text: string) => {
          self.ws?.send(text);
        },
      },
      options.commandTimeoutMs,
    );
  }

  onState(listener: StateListener): void {
    this.listeners.push(listener);
  }

  private emit(msg: ServerMessage | null): void {
    for (const listener of this.listeners) listener(this.state, msg);
  }

  connect(): void {
    if (this.closed) return;
    this.state = { ...this.state, connection: "connecting" };
    this.emit(null);
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.state = { ...this.state, connection: "open" };
      this.commands.handleOpen();
      this.emit(null);
    };
    ws.onmessage = (ev) => {
      let msg: ServerMessage;
      try {
        msg = JSON.parse(String(ev.data)) as ServerMessage;
      } catch {
        return;
      }
      if (msg.type === "ack") {
        this.commands.handleAck(msg as AckMessage);
      }
      this.state = applyMessage(this.state, msg);
      this.emit(msg);
    };
    ws.onclose = () => {
      if (this.ws !== ws) return;
      this.ws = null;
      this.state = { ...this.state, connection: "closed" };
      this.commands.handleClose();
      this.emit(null);
      if (!this.closed && this.shouldReconnect) {
        setTimeout(() => this.connect(), this.reconnectDelayMs);
      }
    };
    ws.onerror = () => {
      // close follows; nothing to do here
    };
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
    this.ws = null;
  }
}
