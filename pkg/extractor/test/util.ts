import { mkdtemp, readFile, writeFile } from 'node:fs/promises';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

export interface DecodedBank {
  n: number;
  dim: number;
  rows: Array<{ features: Float64Array; label: number }>;
}

/** Parse the binary bank format straight off the bytes. */
export async function decodeBank(path: string): Promise<DecodedBank> {
  const raw = await readFile(path);
  const magic = raw.subarray(0, 8).toString('latin1');
  if (magic !== 'FBANK\x00\x01\x00') {
    throw new Error(`bad magic: ${JSON.stringify(magic)}`);
  }
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const n = Number(view.getBigUint64(8, true));
  const dim = Number(view.getBigUint64(16, true));
  const rowSize = 8 * dim + 1;
  if (raw.length !== 24 + n * rowSize) {
    throw new Error(`body is ${raw.length - 24} bytes, expected ${n} rows of ${rowSize}`);
  }
  const rows = [];
  for (let i = 0; i < n; i++) {
    const base = 24 + i * rowSize;
    const features = new Float64Array(dim);
    for (let j = 0; j < dim; j++) {
      features[j] = view.getFloat64(base + 8 * j, true);
    }
    rows.push({ features, label: raw[base + 8 * dim] });
  }
  return { n, dim, rows };
}

export async function makeTmpDir(): Promise<string> {
  return mkdtemp(join(tmpdir(), 'extract-test-'));
}

/** Ten tiny fake image files plus a matching manifest; returns both paths. */
export async function makeToyManifest(
  dir: string,
  count = 10,
): Promise<{ manifestPath: string; imagePaths: string[]; prompts: string[]; labels: number[] }> {
  const imagePaths: string[] = [];
  const prompts: string[] = [];
  const labels: number[] = [];
  const lines = ['path,prompt,label'];
  for (let i = 0; i < count; i++) {
    const p = join(dir, `img${i}.bin`);
    await writeFile(p, Buffer.from([7, i, 2 * i, 255 - i]));
    const prompt = `a study of subject ${i}, oil on canvas`;
    imagePaths.push(p);
    prompts.push(prompt);
    labels.push(i % 2);
    lines.push(`${p},"${prompt}",${i % 2}`);
  }
  const manifestPath = join(dir, 'manifest.csv');
  await writeFile(manifestPath, lines.join('\n') + '\n');
  return { manifestPath, imagePaths, prompts, labels };
}
