/**
 * The extraction pipeline: manifest rows -> batched encoder -> ordered bank.
 *
 * Bank row i corresponds to manifest row i among successes (batches are
 * processed in order and the writer is a single ordered sink). Failed rows
 * are skipped and reported per row; the bank stays valid either way.
 */

import { BankWriter } from './bank.js';
import type { Encoder } from './encoder.js';
import type { ManifestRow } from './manifest.js';

export interface ExtractOptions {
  batchSize: number;
  normalize: boolean;
}

export interface RowFailure {
  /** 1-based manifest data row (row 1 = first row after the header). */
  row: number;
  path: string;
  reason: string;
}

export interface ExtractSummary {
  rowsWritten: number;
  failures: RowFailure[];
  truncatedPrompts: number;
  dim: number;
  /** fixed concatenation layout of each vector */
  concatOrder: 'image,text';
}

function normalizeHalf(vec: Float64Array, start: number, len: number): void {
  let sq = 0;
  for (let i = start; i < start + len; i++) {
    sq += vec[i] * vec[i];
  }
  const norm = Math.sqrt(sq);
  if (norm === 0) {
    return;
  }
  for (let i = start; i < start + len; i++) {
    vec[i] /= norm;
  }
}

export async function runExtraction(
  rows: ManifestRow[],
  outPath: string,
  encoder: Encoder,
  opts: ExtractOptions,
): Promise<ExtractSummary> {
  if (!Number.isInteger(opts.batchSize) || opts.batchSize < 1) {
    throw new Error(`batch size must be a positive integer, got ${opts.batchSize}`);
  }
  const dim = 2 * encoder.halfDim;
  const writer = await BankWriter.create(outPath, dim);
  const failures: RowFailure[] = [];
  let truncatedPrompts = 0;

  try {
    for (let start = 0; start < rows.length; start += opts.batchSize) {
      const batch = rows.slice(start, start + opts.batchSize);

      // empty prompts fail before the encoder sees the batch
      const requests = batch.map((row, j) =>
        row.prompt.trim() === '' ? null : { index: start + j, row },
      );
      for (let j = 0; j < batch.length; j++) {
        if (requests[j] === null) {
          failures.push({
            row: start + j + 1,
            path: batch[j].path,
            reason: 'empty prompt',
          });
        }
      }
      const kept = requests.filter((r): r is { index: number; row: ManifestRow } => r !== null);
      if (kept.length === 0) {
        continue;
      }

      const encoded = await encoder.encodeBatch(
        kept.map(({ row }) => ({ imagePath: row.path, prompt: row.prompt })),
      );
      for (let k = 0; k < kept.length; k++) {
        const { index, row } = kept[k];
        const result = encoded[k];
        if (result instanceof Error) {
          failures.push({ row: index + 1, path: row.path, reason: result.message });
          continue;
        }
        if (result.truncated) {
          truncatedPrompts += 1;
        }
        const vec = new Float64Array(dim);
        vec.set(result.image, 0);
        vec.set(result.text, encoder.halfDim);
        if (opts.normalize) {
          normalizeHalf(vec, 0, encoder.halfDim);
          normalizeHalf(vec, encoder.halfDim, encoder.halfDim);
        }
        await writer.appendRow(vec, row.label);
      }
    }
  } finally {
    await writer.close();
  }

  return {
    rowsWritten: writer.rowsWritten,
    failures,
    truncatedPrompts,
    dim,
    concatOrder: 'image,text',
  };
}
