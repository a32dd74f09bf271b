#!/usr/bin/env node
// vectorize_pitch --in texts.jsonl --model <name> --out pitch.vec
//
// Encodes pitch-report texts into the unit-norm embedding file the innings
// prediction pipeline loads. `--model hash:<dim>` runs the built-in
// deterministic encoder; any other name loads a pretrained sentence encoder.
// Exit codes: 0 ok, 2 bad input or encoder load failure.

import { parseArgs } from "node:util";

import { resolveEncoder } from "./encoders.js";
import { writePitchFile, VectorRow } from "./format.js";
import { readPitchTexts } from "./io.js";

async function run(): Promise<number> {
  const { values } = parseArgs({
    options: {
      in: { type: "string" },
      model: { type: "string", default: "hash:64" },
      out: { type: "string" },
    },
  });
  if (!values.in || !values.out) {
    console.error("usage: vectorize_pitch --in texts.jsonl --model <name> --out pitch.vec");
    return 2;
  }
  const records = readPitchTexts(values.in);
  const encoder = await resolveEncoder(values.model!);
  const vectors = await encoder.encode(records.map((r) => r.text));
  const rows: VectorRow[] = records.map((r, i) => ({
    id: r.pitch_text_id,
    values: vectors[i],
  }));
  writePitchFile(rows, encoder.dim, encoder.name, values.out);
  console.log(`${rows.length} pitch vectors (dim ${encoder.dim}) -> ${values.out}`);
  return 0;
}

run()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(2);
  });
