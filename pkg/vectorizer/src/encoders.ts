// Sentence encoders behind one interface.
//
// "hash:<dim>" is a built-in deterministic signed-feature-hashing encoder
// that needs no downloads; any other model name is treated as a pretrained
// sentence-transformer id loaded through @xenova/transformers (mean pooling,
// normalized output).

export interface Encoder {
  name: string;
  dim: number;
  encode(texts: string[]): Promise<number[][]>;
}

const FNV_PRIME = 0x100000001b3n;
const FNV_OFFSET_BUCKET = 0xcbf29ce484222325n;
const FNV_OFFSET_SIGN = FNV_OFFSET_BUCKET ^ 0x9e3779b97f4a7c15n;
const MASK64 = 0xffffffffffffffffn;

function fnv1a64(data: string, offset: bigint): bigint {
  let h = offset;
  const bytes = new TextEncoder().encode(data);
  for (const b of bytes) {
    h ^= BigInt(b);
    h = (h * FNV_PRIME) & MASK64;
  }
  return h;
}

export function tokenize(text: string): string[] {
  return text.toLowerCase().match(/[a-z0-9]+/g) ?? [];
}

export function hashVector(text: string, dim: number): number[] {
  const acc = new Array<number>(dim).fill(0);
  for (const token of tokenize(text)) {
    const bucket = Number(fnv1a64(token, FNV_OFFSET_BUCKET) % BigInt(dim));
    const sign = (fnv1a64(token, FNV_OFFSET_SIGN) & 1n) === 0n ? 1 : -1;
    acc[bucket] += sign;
  }
  const norm = Math.sqrt(acc.reduce((s, v) => s + v * v, 0));
  if (norm === 0) {
    throw new Error("text has no tokens to hash");
  }
  return acc.map((v) => v / norm);
}

export function hashEncoder(dim: number): Encoder {
  if (!Number.isInteger(dim) || dim < 8) {
    throw new Error(`hash encoder needs an integer dim >= 8, got ${dim}`);
  }
  return {
    name: `hash:${dim}`,
    dim,
    async encode(texts: string[]): Promise<number[][]> {
      return texts.map((t) => hashVector(t, dim));
    },
  };
}

async function transformersEncoder(modelName: string): Promise<Encoder> {
  let pipeline;
  try {
    ({ pipeline } = await import("@xenova/transformers"));
  } catch (err) {
    throw new Error(
      `encoder backend unavailable: install @xenova/transformers to use ` +
      `pretrained model '${modelName}' (${(err as Error).message})`,
    );
  }
  const extractor = await pipeline("feature-extraction", modelName);
  const probe = await extractor("probe", { pooling: "mean", normalize: true });
  const dim = probe.data.length;
  return {
    name: modelName,
    dim,
    async encode(texts: string[]): Promise<number[][]> {
      const out: number[][] = [];
      for (const text of texts) {
        const t = await extractor(text, { pooling: "mean", normalize: true });
        out.push(Array.from(t.data as Float32Array));
      }
      return out;
    },
  };
}

export async function resolveEncoder(modelName: string): Promise<Encoder> {
  const hashMatch = /^hash:(\d+)$/.exec(modelName);
  if (hashMatch) {
    return hashEncoder(Number(hashMatch[1]));
  }
  return transformersEncoder(modelName);
}
