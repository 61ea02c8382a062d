/**
 * TCP client for a live acquisition session.
 *
 * Connects to the session's event socket, decodes the frame stream, and
 * hands every record to a callback.  Control commands are encoded with the
 * same framing and written back on the same socket.
 */

import net from "node:net";
import { FrameDecoder, ProtocolError, encodeFrame } from "./protocol.js";

export interface SessionClientOptions {
  host: string;
  port: number;
  /** Called once per decoded record, in arrival order. */
  onRecord: (record: unknown) => void;
  /** Called once when the socket closes, with the error that caused it if any. */
  onClose?: (error?: Error) => void;
}

export class SessionClient {
  private readonly socket: net.Socket;
  private readonly decoder = new FrameDecoder();
  private closed = false;
  private closeError: Error | undefined;

  private constructor(socket: net.Socket, options: SessionClientOptions) {
    this.socket = socket;
    socket.on("data", (chunk) => {
      let records: unknown[];
      try {
        records = this.decoder.feed(chunk);
      } catch (error) {
        this.closeError = error instanceof ProtocolError ? error : new Error(String(error));
        socket.destroy();
        return;
      }
      for (const record of records) {
        options.onRecord(record);
      }
    });
    socket.on("error", (error) => {
      this.closeError = this.closeError ?? error;
    });
    socket.on("close", () => {
      if (!this.closed) {
        this.closed = true;
        options.onClose?.(this.closeError);
      }
    });
  }

  /** Open a connection and resolve once the socket is established. */
  static connect(options: SessionClientOptions): Promise<SessionClient> {
    return new Promise((resolve, rejectPromise) => {
      const socket = net.createConnection({ host: options.host, port: options.port });
      const onError = (error: Error) => rejectPromise(error);
      socket.once("error", onError);
      socket.once("connect", () => {
        socket.removeListener("error", onError);
        resolve(new SessionClient(socket, options));
      });
    });
  }

  get connected(): boolean {
    return !this.closed && !this.socket.destroyed;
  }

  /** Send one control command, e.g. `{command: "stop", at_n: 40}`. */
  send(command: Record<string, unknown>): void {
    if (!this.connected) {
      throw new Error("session socket is closed");
    }
    this.socket.write(encodeFrame(command));
  }

  close(): void {
    this.socket.end();
    this.socket.destroy();
  }
}
