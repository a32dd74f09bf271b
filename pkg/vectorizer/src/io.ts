// Pitch-text input: JSONL lines of {"pitch_text_id": "...", "text": "..."}.

import { readFileSync } from "node:fs";

export interface PitchTextRecord {
  pitch_text_id: string;
  text: string;
}

export function readPitchTexts(path: string): PitchTextRecord[] {
  const raw = readFileSync(path, "utf-8");
  const records: PitchTextRecord[] = [];
  const seen = new Set<string>();
  raw.split("\n").forEach((line, i) => {
    const lineNo = i + 1;
    if (!line.trim()) return;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      throw new Error(`line ${lineNo}: invalid JSON (${(err as Error).message})`);
    }
    const obj = parsed as Record<string, unknown>;
    const id = obj["pitch_text_id"];
    const text = obj["text"];
    if (typeof id !== "string" || id.length === 0) {
      throw new Error(`line ${lineNo}: missing pitch_text_id`);
    }
    if (seen.has(id)) {
      throw new Error(`line ${lineNo}: duplicate pitch_text_id '${id}'`);
    }
    if (typeof text !== "string" || text.trim().length === 0) {
      throw new Error(`line ${lineNo}: empty text for id '${id}'`);
    }
    seen.add(id);
    records.push({ pitch_text_id: id, text });
  });
  return records;
}
