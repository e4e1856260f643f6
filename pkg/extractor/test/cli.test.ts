import { writeFile } from 'node:fs/promises';
import { join } from 'node:path';

import { describe, expect, it, vi } from 'vitest';

import { main } from '../src/cli.js';
import { decodeBank, makeTmpDir, makeToyManifest } from './util.js';

describe('extract CLI', () => {
  it('extracts a manifest end to end and prints the summary', async () => {
    const dir = await makeTmpDir();
    const { manifestPath } = await makeToyManifest(dir);
    const out = join(dir, 'bank.fb');
    const log = vi.spyOn(console, 'log').mockImplementation(() => {});
    try {
      const code = await main([
        '--manifest', manifestPath,
        '--out', out,
        '--encoder', 'hash',
        '--batch-size', '4',
      ]);
      expect(code).toBe(0);
      const printed = log.mock.calls.map((c) => c.join(' '));
      expect(printed).toContain('rows_written=10');
      expect(printed).toContain('failures=0');
      expect(printed).toContain('dim=1536');
      expect(printed).toContain('concat=image,text');
    } finally {
      log.mockRestore();
    }
    const bank = await decodeBank(out);
    expect(bank.n).toBe(10);
  });

  it('accepts --normalize', async () => {
    const dir = await makeTmpDir();
    const { manifestPath } = await makeToyManifest(dir);
    const out = join(dir, 'normed.fb');
    const code = await main([
      '--manifest', manifestPath, '--out', out, '--encoder', 'hash', '--normalize',
    ]);
    expect(code).toBe(0);
  });

  it('exits 3 when rows fail but still writes the successes', async () => {
    const dir = await makeTmpDir();
    const img = join(dir, 'ok.bin');
    await writeFile(img, Buffer.from('ok'));
    const manifestPath = join(dir, 'm.csv');
    await writeFile(
      manifestPath,
      `path,prompt,label\n${img},fine,1\n${join(dir, 'gone.bin')},lost,0\n`,
    );
    const out = join(dir, 'partial.fb');
    const err = vi.spyOn(console, 'error').mockImplementation(() => {});
    try {
      const code = await main(['--manifest', manifestPath, '--out', out, '--encoder', 'hash']);
      expect(code).toBe(3);
      expect(err.mock.calls.flat().join('\n')).toMatch(/row 2 .*unreadable image/);
    } finally {
      err.mockRestore();
    }
    expect((await decodeBank(out)).n).toBe(1);
  });

  it('exits 1 on usage errors', async () => {
    const err = vi.spyOn(console, 'error').mockImplementation(() => {});
    try {
      expect(await main(['--out', 'x.fb'])).toBe(1);
      expect(await main(['--manifest', 'm.csv'])).toBe(1);
      expect(await main(['--manifest', 'm.csv', '--out', 'x.fb', '--frobnicate'])).toBe(1);
      expect(await main(['--manifest', 'm.csv', '--out', 'x.fb', '--batch-size', '0'])).toBe(1);
      expect(await main(['--manifest', 'm.csv', '--out', 'x.fb', '--batch-size', 'many'])).toBe(1);
      expect(await main(['--manifest', 'm.csv', '--out', 'x.fb', '--encoder', 'vit'])).toBe(1);
    } finally {
      err.mockRestore();
    }
  });

  it('exits 2 on fatal input problems', async () => {
    const dir = await makeTmpDir();
    const err = vi.spyOn(console, 'error').mockImplementation(() => {});
    try {
      expect(
        await main(['--manifest', join(dir, 'missing.csv'), '--out', join(dir, 'x.fb'), '--encoder', 'hash']),
      ).toBe(2);

      const bad = join(dir, 'bad.csv');
      await writeFile(bad, 'path,prompt,label\na.png,x,7\n');
      expect(await main(['--manifest', bad, '--out', join(dir, 'y.fb'), '--encoder', 'hash'])).toBe(2);
    } finally {
      err.mockRestore();
    }
  });

  it('prints usage on --help', async () => {
    const log = vi.spyOn(console, 'log').mockImplementation(() => {});
    try {
      expect(await main(['--help'])).toBe(0);
      expect(log.mock.calls.flat().join(' ')).toMatch(/usage: extract/);
    } finally {
      log.mockRestore();
    }
  });
});
