/**
 * Pluggable embedding backends.
 *
 * An encoder turns (image path, prompt) rows into a 768-d image embedding
 * and a 768-d text embedding per row, float32 like real model outputs.
 * Per-row failures (unreadable image etc.) come back as Error values in the
 * corresponding slot so one bad file never sinks the whole batch.
 *
 * Two backends:
 *  - `clip`: CLIP ViT-L/14 via @xenova/transformers (optional install,
 *    downloads weights on first use) - the real thing.
 *  - `hash`: fully offline and deterministic; embeddings are derived from
 *    SHA-256 of the image bytes / prompt text. No semantics, but exercises
 *    every pipeline contract (ordering, batching, truncation, failures) and
 *    keeps tests hermetic.
 */

import { createHash } from 'node:crypto';
import { readFile } from 'node:fs/promises';

export const HALF_DIM = 768;

// rough CLIP budget: 77 tokens at ~4 chars/token
export const HASH_PROMPT_LIMIT = 308;

export interface EncodeRequest {
  imagePath: string;
  prompt: string;
}

export interface EncodedPair {
  image: Float32Array;
  text: Float32Array;
  truncated: boolean;
}

export interface Encoder {
  readonly name: string;
  readonly halfDim: number;
  encodeBatch(rows: EncodeRequest[]): Promise<Array<EncodedPair | Error>>;
}

/** Expand a digest into `dim` float32 values in [-1, 1) with counter-mode hashing. */
function digestToVector(digest: Buffer, dim: number): Float32Array {
  const out = new Float32Array(dim);
  let filled = 0;
  for (let block = 0; filled < dim; block++) {
    const counter = Buffer.alloc(4);
    counter.writeUInt32LE(block, 0);
    const chunk = createHash('sha256').update(digest).update(counter).digest();
    for (let off = 0; off + 4 <= chunk.length && filled < dim; off += 4) {
      out[filled++] = chunk.readUInt32LE(off) / 2 ** 31 - 1;
    }
  }
  return out;
}

export function hashImageEmbedding(imageBytes: Buffer): Float32Array {
  const digest = createHash('sha256').update('img\0').update(imageBytes).digest();
  return digestToVector(digest, HALF_DIM);
}

export function hashTextEmbedding(prompt: string): Float32Array {
  const digest = createHash('sha256').update('txt\0').update(prompt, 'utf8').digest();
  return digestToVector(digest, HALF_DIM);
}

export function hashEncoder(): Encoder {
  return {
    name: 'hash',
    halfDim: HALF_DIM,
    async encodeBatch(rows: EncodeRequest[]): Promise<Array<EncodedPair | Error>> {
      return Promise.all(
        rows.map(async (row) => {
          let bytes: Buffer;
          try {
            bytes = await readFile(row.imagePath);
          } catch (err) {
            return new Error(
              `unreadable image: ${err instanceof Error ? err.message : String(err)}`,
            );
          }
          const truncated = row.prompt.length > HASH_PROMPT_LIMIT;
          const prompt = truncated ? row.prompt.slice(0, HASH_PROMPT_LIMIT) : row.prompt;
          return {
            image: hashImageEmbedding(bytes),
            text: hashTextEmbedding(prompt),
            truncated,
          };
        }),
      );
    },
  };
}

export async function createEncoder(name: string): Promise<Encoder> {
  if (name === 'hash') {
    return hashEncoder();
  }
  if (name === 'clip') {
    const { clipEncoder } = await import('./clip.js');
    return clipEncoder();
  }
  throw new Error(`unknown encoder "${name}" (expected clip or hash)`);
}
