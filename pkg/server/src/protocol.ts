// Wire types for the v1 bridge protocol: UTF-8 JSON, one message per line.
// Key order and number formatting are part of the contract (responses must be
// byte-identical across implementations), so responses are built with a fixed
// property order and serialized with plain JSON.stringify.

export const PROTOCOL_VERSION = "v1";

export type ErrorCode = "version" | "order" | "state" | "parse" | "unknown";

export interface PredictResult {
  kind: "predict_result";
  q: number;
  predicted_empty: boolean;
}

export interface ErrorResponse {
  kind: "error";
  code: ErrorCode;
  message: string;
}

export type Response = PredictResult | ErrorResponse;

export function predictResult(q: number, predictedEmpty: boolean): PredictResult {
  return { kind: "predict_result", q, predicted_empty: predictedEmpty };
}

/** Acknowledgement for init/reset/close: a predict_result with q=1. */
export function ack(): PredictResult {
  return predictResult(1, false);
}

export function errorResponse(code: ErrorCode, message: string): ErrorResponse {
  return { kind: "error", code, message };
}

export function encodeResponse(response: Response): string {
  return JSON.stringify(response);
}

export function isIntegerField(value: unknown): value is number {
  return typeof value === "number" && Number.isInteger(value);
}

export function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}
