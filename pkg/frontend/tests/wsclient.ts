// Minimal RFC 6455 client over a raw TCP socket, used only by the node
// test suite (the browser build uses the native WebSocket instead).

import * as net from "node:net";
import * as crypto from "node:crypto";
import type { Transport } from "../src/protocol.js";

function buildTextFrame(text: string): Buffer {
  const payload = Buffer.from(text, "utf-8");
  const mask = crypto.randomBytes(4);
  let header: Buffer;
  if (payload.length < 126) {
    header = Buffer.from([0x81, 0x80 | payload.length]);
  } else if (payload.length < 65536) {
    header = Buffer.alloc(4);
    header[0] = 0x81;
    header[1] = 0x80 | 126;
    header.writeUInt16BE(payload.length, 2);
  } else {
    header = Buffer.alloc(10);
    header[0] = 0x81;
    header[1] = 0x80 | 127;
    header.writeBigUInt64BE(BigInt(payload.length), 2);
  }
  const masked = Buffer.from(payload);
  for (let i = 0; i < masked.length; i++) {
    masked[i] ^= mask[i % 4];
  }
  return Buffer.concat([header, mask, masked]);
}

class FrameParser {
  private buffer = Buffer.alloc(0);

  constructor(private onText: (text: string) => void, private onClose: () => void) {}

  feed(chunk: Buffer): void {
    this.buffer = Buffer.concat([this.buffer, chunk]);
    for (;;) {
      if (this.buffer.length < 2) {
        return;
      }
      const opcode = this.buffer[0] & 0x0f;
      let length = this.buffer[1] & 0x7f;
      let offset = 2;
      if (length === 126) {
        if (this.buffer.length < 4) {
          return;
        }
        length = this.buffer.readUInt16BE(2);
        offset = 4;
      } else if (length === 127) {
        if (this.buffer.length < 10) {
          return;
        }
        length = Number(this.buffer.readBigUInt64BE(2));
        offset = 10;
      }
      if (this.buffer.length < offset + length) {
        return;
      }
      const payload = this.buffer.subarray(offset, offset + length);
      this.buffer = this.buffer.subarray(offset + length);
      if (opcode === 0x8) {
        this.onClose();
        return;
      }
      if (opcode === 0x1) {
        this.onText(payload.toString("utf-8"));
      }
    }
  }
}

export function connectWebSocket(host: string, port: number): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const socket = net.connect(port, host);
    const key = crypto.randomBytes(16).toString("base64");
    let upgraded = false;
    let headerData = Buffer.alloc(0);

    const transport: Transport = {
      send: (text) => socket.write(buildTextFrame(text)),
      close: () => socket.end(),
      onMessage: null,
      onClose: null,
    };
    const parser = new FrameParser(
      (text) => transport.onMessage?.(text),
      () => socket.end(),
    );

    socket.on("error", (err) => {
      if (!upgraded) {
        reject(err);
      }
    });
    socket.on("close", () => transport.onClose?.());
    socket.on("data", (chunk: Buffer) => {
      if (upgraded) {
        parser.feed(chunk);
        return;
      }
      headerData = Buffer.concat([headerData, chunk]);
      const end = headerData.indexOf("\r\n\r\n");
      if (end === -1) {
        return;
      }
      const head = headerData.subarray(0, end).toString("utf-8");
      if (!head.startsWith("HTTP/1.1 101")) {
        reject(new Error(`handshake rejected: ${head.split("\r\n")[0]}`));
        socket.destroy();
        return;
      }
      upgraded = true;
      const rest = headerData.subarray(end + 4);
      resolve(transport);
      if (rest.length > 0) {
        parser.feed(rest);
      }
    });
    socket.on("connect", () => {
      socket.write(
        `GET / HTTP/1.1\r\n` +
          `Host: ${host}:${port}\r\n` +
          `Upgrade: websocket\r\n` +
          `Connection: Upgrade\r\n` +
          `Sec-WebSocket-Key: ${key}\r\n` +
          `Sec-WebSocket-Version: 13\r\n\r\n`,
      );
    });
  });
}
