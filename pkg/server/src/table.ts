// Scripted-table files: first line "<video_length> <capacity>" separated by
// spaces, then one tab-separated row per state:
//
//   t <TAB> comma-joined bank frames <TAB> q <TAB> true|false
//
// Bank frames are slot-ordered (slot identity matters), q lies in [0, 1].
// Blank lines are ignored and duplicate states are rejected.

import * as fs from "node:fs";

export interface TableEntry {
  q: number;
  predictedEmpty: boolean;
}

export interface ScriptedTable {
  videoLength: number;
  capacity: number;
  entries: Map<string, TableEntry>;
}

export function tableKey(t: number, bank: number[]): string {
  return `${t}|${bank.join(",")}`;
}

const INTEGER = /^-?\d+$/;

function parseInteger(text: string): number | null {
  if (!INTEGER.test(text)) return null;
  const value = Number(text);
  return Number.isSafeInteger(value) ? value : null;
}

export function parseTable(text: string, source = "<string>"): ScriptedTable {
  const lines = text.split("\n").filter((line) => line.trim() !== "");
  if (lines.length === 0) {
    throw new Error(`${source}: empty table file`);
  }
  const head = lines[0].trim().split(/\s+/);
  if (head.length !== 2) {
    throw new Error(`${source}: header must be 'video_length capacity', got ${JSON.stringify(lines[0])}`);
  }
  const videoLength = parseInteger(head[0]);
  const capacity = parseInteger(head[1]);
  if (videoLength === null || capacity === null) {
    throw new Error(`${source}: non-integer header ${JSON.stringify(lines[0])}`);
  }

  const entries = new Map<string, TableEntry>();
  for (let i = 1; i < lines.length; i++) {
    const row = `${source}:${i + 1}`;
    const parts = lines[i].split("\t");
    if (parts.length !== 4) {
      throw new Error(`${row}: expected 4 tab-separated fields, got ${parts.length}`);
    }
    const [tText, slotsText, qText, peText] = parts;
    const t = parseInteger(tText.trim());
    const slots = slotsText.split(",").map((s) => parseInteger(s.trim()));
    if (t === null || slots.some((s) => s === null)) {
      throw new Error(`${row}: malformed row ${JSON.stringify(lines[i])}`);
    }
    // Number("") is 0, so blank q fields need their own rejection; NaN and
    // infinities fall through to the range check like any other bad value.
    const q = Number(qText.trim());
    if (qText.trim() === "") {
      throw new Error(`${row}: malformed row ${JSON.stringify(lines[i])}`);
    }
    if (peText !== "true" && peText !== "false") {
      throw new Error(`${row}: predicted_empty must be true/false, got ${JSON.stringify(peText)}`);
    }
    if (!(q >= 0 && q <= 1)) {
      throw new Error(`${row}: q=${q} outside [0, 1]`);
    }
    const key = tableKey(t, slots as number[]);
    if (entries.has(key)) {
      throw new Error(`${row}: duplicate state t=${t} bank=${slotsText}`);
    }
    entries.set(key, { q, predictedEmpty: peText === "true" });
  }
  return { videoLength, capacity, entries };
}

export function loadTable(path: string): ScriptedTable {
  return parseTable(fs.readFileSync(path, "utf-8"), path);
}
