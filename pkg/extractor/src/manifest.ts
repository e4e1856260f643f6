/**
 * Manifest parsing.
 *
 * A manifest is a UTF-8 CSV with the exact header `path,prompt,label` and
 * one (image path, prompt text, binary label) triple per row. Prompts may
 * contain commas/quotes under standard CSV quoting. Labels: 0 = real,
 * 1 = generated.
 */

import Papa from 'papaparse';

export interface ManifestRow {
  path: string;
  prompt: string;
  label: 0 | 1;
}

const EXPECTED_HEADER = ['path', 'prompt', 'label'];

export class ManifestError extends Error {}

export function parseManifest(text: string): ManifestRow[] {
  const parsed = Papa.parse<Record<string, string>>(text, {
    header: true,
    skipEmptyLines: true,
  });
  for (const err of parsed.errors) {
    // papaparse row numbers are 0-based data rows; +2 puts us on file lines
    throw new ManifestError(
      `manifest row ${err.row === undefined ? '?' : err.row + 2}: ${err.message}`,
    );
  }
  const fields = parsed.meta.fields ?? [];
  if (fields.length !== 3 || EXPECTED_HEADER.some((h, i) => fields[i] !== h)) {
    throw new ManifestError(
      `manifest header must be "path,prompt,label", got "${fields.join(',')}"`,
    );
  }

  const rows: ManifestRow[] = [];
  parsed.data.forEach((rec, i) => {
    const line = i + 2;
    const path = (rec.path ?? '').trim();
    if (path === '') {
      throw new ManifestError(`manifest row ${line}: empty path`);
    }
    const rawLabel = (rec.label ?? '').trim();
    if (rawLabel !== '0' && rawLabel !== '1') {
      throw new ManifestError(
        `manifest row ${line}: label must be 0 or 1, got "${rawLabel}"`,
      );
    }
    rows.push({ path, prompt: rec.prompt ?? '', label: rawLabel === '1' ? 1 : 0 });
  });
  return rows;
}
