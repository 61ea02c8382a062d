/**
 * HTTP bridge between the session event socket and a local browser.
 *
 * The bridge holds the canonical folded view, re-broadcasts it over
 * server-sent events after every session event, and forwards control
 * commands posted by the page back to the session socket.  It serves the
 * page itself, so the console has no external network dependencies.
 */

import http from "node:http";
import { SessionClient } from "./client.js";
import { PAGE_HTML } from "./page.js";
import { isSessionEvent } from "./protocol.js";
import { initialView, renderEvent, type SessionView } from "./state.js";

export interface ConsoleServerOptions {
  sessionHost: string;
  sessionPort: number;
  httpPort?: number;
}

interface SseMessage {
  view: SessionView;
  reply?: unknown;
}

export class ConsoleServer {
  private readonly options: ConsoleServerOptions;
  private readonly httpServer: http.Server;
  private readonly subscribers = new Set<http.ServerResponse>();
  private client: SessionClient | null = null;
  private view: SessionView = initialView();

  constructor(options: ConsoleServerOptions) {
    this.options = options;
    this.httpServer = http.createServer((request, response) => {
      this.route(request, response).catch(() => {
        if (!response.headersSent) {
          response.writeHead(500, { "content-type": "application/json" });
        }
        response.end(JSON.stringify({ error: "internal error" }));
      });
    });
  }

  /** Connect to the session socket and start serving; resolves to the HTTP port. */
  async start(): Promise<number> {
    this.client = await SessionClient.connect({
      host: this.options.sessionHost,
      port: this.options.sessionPort,
      onRecord: (record) => this.onRecord(record),
      onClose: () => {
        this.client = null;
        this.broadcast({ view: this.view });
      },
    });
    await new Promise<void>((resolve) => {
      this.httpServer.listen(this.options.httpPort ?? 0, "127.0.0.1", resolve);
    });
    const address = this.httpServer.address();
    if (address === null || typeof address === "string") {
      throw new Error("http server has no port");
    }
    return address.port;
  }

  get currentView(): SessionView {
    return this.view;
  }

  get sessionConnected(): boolean {
    return this.client !== null && this.client.connected;
  }

  stop(): void {
    for (const subscriber of this.subscribers) {
      subscriber.end();
    }
    this.subscribers.clear();
    this.client?.close();
    this.httpServer.close();
  }

  private onRecord(record: unknown): void {
    if (isSessionEvent(record) && (record.kind === "control_ack" || record.kind === "control_error")) {
      this.broadcast({ view: this.view, reply: record });
      return;
    }
    this.view = renderEvent(this.view, record);
    this.broadcast({ view: this.view });
  }

  private broadcast(message: SseMessage): void {
    const data = `data: ${JSON.stringify(message)}\n\n`;
    for (const subscriber of this.subscribers) {
      subscriber.write(data);
    }
  }

  private async route(
    request: http.IncomingMessage,
    response: http.ServerResponse,
  ): Promise<void> {
    const url = new URL(request.url ?? "/", "http://127.0.0.1");
    if (request.method === "GET" && url.pathname === "/") {
      response.writeHead(200, { "content-type": "text/html; charset=utf-8" });
      response.end(PAGE_HTML);
      return;
    }
    if (request.method === "GET" && url.pathname === "/view") {
      response.writeHead(200, { "content-type": "application/json" });
      response.end(JSON.stringify({ view: this.view, connected: this.sessionConnected }));
      return;
    }
    if (request.method === "GET" && url.pathname === "/events") {
      response.writeHead(200, {
        "content-type": "text/event-stream",
        "cache-control": "no-cache",
        connection: "keep-alive",
      });
      response.write(`data: ${JSON.stringify({ view: this.view })}\n\n`);
      this.subscribers.add(response);
      request.on("close", () => this.subscribers.delete(response));
      return;
    }
    if (request.method === "POST" && url.pathname === "/control") {
      const body = await readBody(request);
      let command: unknown;
      try {
        command = JSON.parse(body);
      } catch {
        response.writeHead(400, { "content-type": "application/json" });
        response.end(JSON.stringify({ error: "control body is not valid JSON" }));
        return;
      }
      if (command === null || typeof command !== "object" || Array.isArray(command)) {
        response.writeHead(400, { "content-type": "application/json" });
        response.end(JSON.stringify({ error: "control body must be a JSON object" }));
        return;
      }
      if (this.client === null || !this.client.connected) {
        response.writeHead(503, { "content-type": "application/json" });
        response.end(JSON.stringify({ error: "session socket is disconnected" }));
        return;
      }
      this.client.send(command as Record<string, unknown>);
      response.writeHead(202, { "content-type": "application/json" });
      response.end(JSON.stringify({ status: "sent" }));
      return;
    }
    response.writeHead(404, { "content-type": "application/json" });
    response.end(JSON.stringify({ error: "not found" }));
  }
}

function readBody(request: http.IncomingMessage): Promise<string> {
  return new Promise((resolve, rejectPromise) => {
    const chunks: Buffer[] = [];
    request.on("data", (chunk: Buffer) => chunks.push(chunk));
    request.on("end", () => resolve(Buffer.concat(chunks).toString("utf-8")));
    request.on("error", rejectPromise);
  });
}
