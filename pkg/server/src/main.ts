// Scripted-table tracker server.
//
//   node dist/main.js --table <file>              serve stdin/stdout
//   node dist/main.js --table <file> --tcp H:P    serve one TCP connection
//
// One JSON response line per request line; close is acknowledged and then the
// process exits 0. EOF on the transport also exits 0.

import * as net from "node:net";
import * as readline from "node:readline";

import { Server, respondTo, tableBackend } from "./server";
import { loadTable } from "./table";

interface Options {
  table: string;
  tcp: { host: string; port: number } | null;
}

function usage(detail: string): never {
  process.stderr.write(`error: ${detail}\n`);
  process.stderr.write("usage: main.js --table <file> [--tcp <host>:<port>]\n");
  process.exit(1);
}

function parseArgs(argv: string[]): Options {
  let table: string | null = null;
  let tcp: Options["tcp"] = null;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--table") {
      table = argv[++i] ?? usage("--table needs a file path");
    } else if (arg === "--tcp") {
      const spec = argv[++i] ?? usage("--tcp needs <host>:<port>");
      const colon = spec.lastIndexOf(":");
      const port = colon < 0 ? NaN : Number(spec.slice(colon + 1));
      if (colon <= 0 || !Number.isInteger(port) || port < 0 || port > 65535) {
        usage(`bad --tcp endpoint ${JSON.stringify(spec)}`);
      }
      tcp = { host: spec.slice(0, colon), port };
    } else {
      usage(`unknown argument ${JSON.stringify(arg)}`);
    }
  }
  if (table === null) {
    usage("--table is required");
  }
  return { table, tcp };
}

function writeLine(stream: NodeJS.WritableStream, text: string): Promise<void> {
  return new Promise((resolve) => {
    if (stream.write(text + "\n")) {
      resolve();
    } else {
      stream.once("drain", () => resolve());
    }
  });
}

async function serveStdio(server: Server): Promise<void> {
  const lines = readline.createInterface({
    input: process.stdin,
    crlfDelay: Infinity,
    terminal: false,
  });
  for await (const line of lines) {
    const { text, keepGoing } = respondTo(server, line);
    if (text !== null) {
      await writeLine(process.stdout, text);
    }
    if (!keepGoing) {
      break;
    }
  }
  lines.close();
  process.stdin.destroy();
}

function serveTcp(server: Server, host: string, port: number): Promise<void> {
  return new Promise((resolve, reject) => {
    const listener = net.createServer((socket) => {
      listener.close();
      socket.setEncoding("utf-8");
      const lines = readline.createInterface({ input: socket, crlfDelay: Infinity });
      let closing = false;
      lines.on("line", (line) => {
        const { text, keepGoing } = respondTo(server, line);
        if (text !== null) {
          socket.write(text + "\n");
        }
        if (!keepGoing) {
          closing = true;
          lines.close();
          socket.end(() => resolve());
        }
      });
      socket.on("close", () => {
        if (!closing) {
          resolve();
        }
      });
      socket.on("error", () => {
        if (!closing) {
          resolve();
        }
      });
    });
    listener.on("error", reject);
    listener.listen(port, host, () => {
      const bound = listener.address() as net.AddressInfo;
      process.stderr.write(`listening on ${bound.address}:${bound.port}\n`);
    });
  });
}

async function main(): Promise<void> {
  const options = parseArgs(process.argv.slice(2));
  const server = new Server(tableBackend(loadTable(options.table)));
  if (options.tcp !== null) {
    await serveTcp(server, options.tcp.host, options.tcp.port);
  } else {
    await serveStdio(server);
  }
}

main().catch((err: unknown) => {
  process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
  process.exit(1);
});
