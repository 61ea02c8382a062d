/**
 * Command-line entry point: `node dist/main.js --port 9000 [--host H] [--http-port P]`.
 */

import { ConsoleServer } from "./server.js";

function parseArgs(argv: string[]): { host: string; port: number; httpPort: number } {
  const options = { host: "127.0.0.1", port: NaN, httpPort: 0 };
  for (let i = 0; i < argv.length; i += 1) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (flag === "--host" && value !== undefined) {
      options.host = value;
      i += 1;
    } else if (flag === "--port" && value !== undefined) {
      options.port = Number(value);
      i += 1;
    } else if (flag === "--http-port" && value !== undefined) {
      options.httpPort = Number(value);
      i += 1;
    } else {
      console.error(`unknown argument: ${flag}`);
      process.exit(2);
    }
  }
  if (!Number.isInteger(options.port) || options.port <= 0) {
    console.error("usage: main.js --port SESSION_PORT [--host HOST] [--http-port PORT]");
    process.exit(2);
  }
  return options;
}

async function main(): Promise<void> {
  const options = parseArgs(process.argv.slice(2));
  const server = new ConsoleServer({
    sessionHost: options.host,
    sessionPort: options.port,
    httpPort: options.httpPort,
  });
  const httpPort = await server.start();
  console.log(`console on http://127.0.0.1:${httpPort} (session ${options.host}:${options.port})`);
  process.on("SIGINT", () => {
    server.stop();
    process.exit(0);
  });
}

main().catch((error) => {
  console.error(String(error));
  process.exit(1);
});
