// Request loop for the bridge protocol, independent of any transport.
//
// One request line in, at most one response out. The loop is deliberately
// synchronous and single-connection: the client owns pacing, and responses
// must come back in request order.

import {
  PROTOCOL_VERSION,
  Response,
  ack,
  encodeResponse,
  errorResponse,
  isIntegerField,
  isRecord,
} from "./protocol";
import { ScriptedTable, TableEntry, tableKey } from "./table";

// The extension point for serving a live tracker instead of a table: give
// the request loop anything that answers per-state quality queries. Only
// frame indices cross the wire; the backend owns the actual frames. The
// scripted table is the mandatory backend and the only one whose responses
// are reproducible byte-for-byte across implementations.
export interface TrackerBackend {
  readonly videoLength: number;
  readonly capacity: number;
  /** Entry for bank state at timestep t, or null when the state is unknown. */
  predict(t: number, bank: number[]): TableEntry | null;
}

export function tableBackend(table: ScriptedTable): TrackerBackend {
  return {
    videoLength: table.videoLength,
    capacity: table.capacity,
    predict: (t, bank) => table.entries.get(tableKey(t, bank)) ?? null,
  };
}

export interface Handled {
  response: Response | null;
  keepGoing: boolean;
}

export class Server {
  private initialized = false;
  private lastT: number | null = null;

  constructor(private readonly backend: TrackerBackend) {}

  /** Response for one request line (null for blank input) plus a stop flag. */
  handle(line: string): Handled {
    if (line.trim() === "") {
      return { response: null, keepGoing: true };
    }
    let message: unknown;
    try {
      message = JSON.parse(line);
    } catch {
      return { response: errorResponse("parse", "invalid message line"), keepGoing: true };
    }
    if (!isRecord(message) || typeof message.kind !== "string") {
      return { response: errorResponse("parse", "invalid message line"), keepGoing: true };
    }
    switch (message.kind) {
      case "init":
        return { response: this.handleInit(message), keepGoing: true };
      case "predict":
        return { response: this.handlePredict(message), keepGoing: true };
      case "reset":
        if (!this.initialized) {
          return { response: errorResponse("state", "reset before init"), keepGoing: true };
        }
        this.lastT = null;
        return { response: ack(), keepGoing: true };
      case "close":
        return { response: ack(), keepGoing: false };
      default:
        return {
          response: errorResponse("unknown", `unknown message kind '${message.kind}'`),
          keepGoing: true,
        };
    }
  }

  private handleInit(message: Record<string, unknown>): Response {
    const version = message.version;
    if (typeof version !== "string") {
      return errorResponse("parse", "malformed init");
    }
    if (version !== PROTOCOL_VERSION) {
      return errorResponse("version", `unsupported protocol version '${version}'`);
    }
    const t = message.T;
    const n = message.N;
    if (!isIntegerField(t) || !isIntegerField(n) || typeof message.video_id !== "string") {
      return errorResponse("parse", "malformed init");
    }
    if (t !== this.backend.videoLength || n !== this.backend.capacity) {
      return errorResponse(
        "state",
        `table covers T=${this.backend.videoLength} N=${this.backend.capacity}, ` +
          `init requested T=${t} N=${n}`,
      );
    }
    this.initialized = true;
    this.lastT = null;
    return ack();
  }

  private handlePredict(message: Record<string, unknown>): Response {
    if (!this.initialized) {
      return errorResponse("state", "predict before init");
    }
    const t = message.t;
    const bank = message.bank;
    if (!isIntegerField(t) || !Array.isArray(bank) || !bank.every(isIntegerField)) {
      return errorResponse("parse", "malformed predict");
    }
    if (this.lastT !== null && t <= this.lastT) {
      return errorResponse(
        "order",
        `t must increase within an episode: got ${t} after ${this.lastT}`,
      );
    }
    const entry = this.backend.predict(t, bank as number[]);
    if (entry === null) {
      return errorResponse("state", `no table entry for t=${t} bank=${bank.join(",")}`);
    }
    this.lastT = t;
    return {
      kind: "predict_result",
      q: entry.q,
      predicted_empty: entry.predictedEmpty,
    };
  }
}

/** Encoded response line for a request line, or null when nothing is owed. */
export function respondTo(server: Server, line: string): { text: string | null; keepGoing: boolean } {
  const { response, keepGoing } = server.handle(line);
  return { text: response === null ? null : encodeResponse(response), keepGoing };
}
