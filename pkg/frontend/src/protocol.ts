// Client side of the environment-server message protocol (version 1):
// one JSON document per websocket text frame, every request answered by
// exactly one response carrying the same correlation id.

export const PROTOCOL_VERSION = 1;
export const DEFAULT_PORT = 7801;

export interface Envelope {
  type: string;
  id: number;
  payload: Record<string, unknown>;
}

export interface HelloPayload {
  server_version: string;
  protocol_version: number;
  env_ids: string[];
}

export interface StepPayload {
  observation: unknown;
  reward: number;
  terminated: boolean;
  truncated: boolean;
  info: {
    success: boolean;
    step: number;
    reward_breakdown: [string, number][];
    features: Record<string, number>;
  };
}

export interface FramePayload {
  shape: [number, number, number];
  rgb: string;
  depth: string;
  segmentation: string;
}

export class ProtocolError extends Error {
  constructor(public code: string, message: string) {
    super(`${code}: ${message}`);
  }
}

export class Disconnected extends Error {
  constructor() {
    super("connection closed");
  }
}

// Minimal transport abstraction so the client works over a browser
// WebSocket in production and over a raw socket shim in tests.
export interface Transport {
  send(text: string): void;
  close(): void;
  onMessage: ((text: string) => void) | null;
  onClose: (() => void) | null;
}

export function webSocketTransport(url: string): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(url);
    const transport: Transport = {
      send: (text) => ws.send(text),
      close: () => ws.close(),
      onMessage: null,
      onClose: null,
    };
    ws.onmessage = (ev) => transport.onMessage?.(String(ev.data));
    ws.onclose = () => transport.onClose?.();
    ws.onopen = () => resolve(transport);
    ws.onerror = () => reject(new Disconnected());
  });
}

interface PendingRequest {
  envelope: Envelope;
  resolve: (response: Envelope) => void;
  reject: (err: Error) => void;
  sent: boolean;
}

// Serializes requests: at most one is on the wire at any time, matching
// the server's strict per-session ordering contract.
export class ProtocolClient {
  private nextId = 1;
  private queue: PendingRequest[] = [];
  private closed = false;

  constructor(private transport: Transport) {
    transport.onMessage = (text) => this.dispatch(text);
    transport.onClose = () => this.abort();
  }

  get pendingCount(): number {
    return this.queue.length;
  }

  request(type: string, payload: Record<string, unknown> = {}): Promise<Envelope> {
    if (this.closed) {
      return Promise.reject(new Disconnected());
    }
    const envelope: Envelope = { type, id: this.nextId++, payload };
    return new Promise((resolve, reject) => {
      this.queue.push({ envelope, resolve, reject, sent: false });
      this.pump();
    });
  }

  hello(): Promise<HelloPayload> {
    return this.request("hello").then((r) => {
      const payload = r.payload as unknown as HelloPayload;
      if (payload.protocol_version !== PROTOCOL_VERSION) {
        throw new ProtocolError(
          "BAD_MESSAGE",
          `server speaks protocol ${payload.protocol_version}, expected ${PROTOCOL_VERSION}`,
        );
      }
      return payload;
    });
  }

  make(envId: string, config?: Record<string, unknown>): Promise<{ action_dim: number }> {
    const payload: Record<string, unknown> = { env_id: envId };
    if (config !== undefined) {
      payload.config = config;
    }
    return this.request("make", payload).then(
      (r) => r.payload as unknown as { action_dim: number },
    );
  }

  reset(seed: number): Promise<{ observation: unknown }> {
    return this.request("reset", { seed }).then(
      (r) => r.payload as unknown as { observation: unknown },
    );
  }

  step(action: number[]): Promise<StepPayload> {
    return this.request("step", { action }).then(
      (r) => r.payload as unknown as StepPayload,
    );
  }

  render(): Promise<FramePayload> {
    return this.request("render").then((r) => r.payload as unknown as FramePayload);
  }

  recordStart(path: string, source?: string): Promise<void> {
    const payload: Record<string, unknown> = { path };
    if (source !== undefined) {
      payload.source = source;
    }
    return this.request("record_start", payload).then(() => undefined);
  }

  recordStop(): Promise<{ path: string; steps: number }> {
    return this.request("record_stop").then(
      (r) => r.payload as unknown as { path: string; steps: number },
    );
  }

  close(): Promise<void> {
    return this.request("close")
      .then(() => undefined)
      .finally(() => {
        this.closed = true;
        this.transport.close();
      });
  }

  private pump(): void {
    const head = this.queue[0];
    if (head !== undefined && !head.sent) {
      head.sent = true;
      this.transport.send(JSON.stringify(head.envelope));
    }
  }

  private dispatch(text: string): void {
    const head = this.queue.shift();
    if (head === undefined) {
      return; // unsolicited frame; the server never sends these
    }
    let response: Envelope;
    try {
      response = JSON.parse(text) as Envelope;
    } catch {
      head.reject(new ProtocolError("BAD_MESSAGE", "unparseable server frame"));
      this.pump();
      return;
    }
    if (response.type === "error") {
      const { code, message } = response.payload as { code: string; message: string };
      head.reject(new ProtocolError(code, message));
    } else {
      head.resolve(response);
    }
    this.pump();
  }

  private abort(): void {
    this.closed = true;
    const pending = this.queue;
    this.queue = [];
    for (const req of pending) {
      req.reject(new Disconnected());
    }
  }
}

export interface DecodedFrame {
  width: number;
  height: number;
  rgb: Uint8Array; // H*W*3, row-major
}

export function decodeFrame(payload: FramePayload): DecodedFrame {
  const [height, width, channels] = payload.shape;
  if (channels !== 3) {
    throw new ProtocolError("BAD_MESSAGE", `expected 3-channel frame, got ${channels}`);
  }
  const raw = atob(payload.rgb);
  if (raw.length !== height * width * 3) {
    throw new ProtocolError(
      "BAD_MESSAGE",
      `frame byte count ${raw.length} does not match shape ${height}x${width}x3`,
    );
  }
  const rgb = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) {
    rgb[i] = raw.charCodeAt(i);
  }
  return { width, height, rgb };
}
