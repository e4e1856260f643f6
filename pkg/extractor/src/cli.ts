#!/usr/bin/env node
/**
 * extract --manifest m.csv --out bank.fb [--batch-size 64] [--normalize]
 *         [--encoder clip|hash]
 *
 * Reads a path,prompt,label manifest, embeds every row (768-d image +
 * 768-d text, concatenated image-first), and writes the detector's binary
 * bank format. Exit codes: 0 all rows written, 1 usage, 2 fatal,
 * 3 finished but some rows failed (bank contains the successes).
 */

import { readFile } from 'node:fs/promises';
import { parseArgs } from 'node:util';
import { pathToFileURL } from 'node:url';

import { createEncoder } from './encoder.js';
import { runExtraction } from './extract.js';
import { ManifestError, parseManifest } from './manifest.js';

const USAGE =
  'usage: extract --manifest m.csv --out bank.fb [--batch-size N] [--normalize] [--encoder clip|hash]';

export async function main(argv: string[]): Promise<number> {
  let args;
  try {
    args = parseArgs({
      args: argv,
      options: {
        manifest: { type: 'string' },
        out: { type: 'string' },
        'batch-size': { type: 'string', default: '64' },
        normalize: { type: 'boolean', default: false },
        encoder: { type: 'string', default: 'clip' },
        help: { type: 'boolean', default: false },
      },
      strict: true,
    });
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    console.error(USAGE);
    return 1;
  }
  if (args.values.help) {
    console.log(USAGE);
    return 0;
  }
  const { manifest, out } = args.values;
  if (!manifest || !out) {
    console.error('--manifest and --out are required');
    console.error(USAGE);
    return 1;
  }
  const batchSize = Number(args.values['batch-size']);
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    console.error(`--batch-size must be a positive integer, got ${args.values['batch-size']}`);
    return 1;
  }
  if (args.values.encoder !== 'clip' && args.values.encoder !== 'hash') {
    console.error(`--encoder must be clip or hash, got ${args.values.encoder}`);
    return 1;
  }

  try {
    const rows = parseManifest(await readFile(manifest, 'utf8'));
    const encoder = await createEncoder(args.values.encoder);
    const summary = await runExtraction(rows, out, encoder, {
      batchSize,
      normalize: args.values.normalize,
    });

    for (const f of summary.failures) {
      console.error(`row ${f.row} (${f.path}): ${f.reason}`);
    }
    console.log(`rows_written=${summary.rowsWritten}`);
    console.log(`failures=${summary.failures.length}`);
    console.log(`truncated_prompts=${summary.truncatedPrompts}`);
    console.log(`dim=${summary.dim}`);
    console.log(`concat=${summary.concatOrder}`);
    return summary.failures.length === 0 ? 0 : 3;
  } catch (err) {
    if (err instanceof ManifestError) {
      console.error(err.message);
      return 2;
    }
    console.error(err instanceof Error ? err.message : String(err));
    return 2;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
