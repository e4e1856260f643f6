/**
 * Binary feature-bank writer, bit-compatible with the detector's loader.
 *
 * Layout (little-endian): 8-byte magic FBANK\x00\x01\x00, then the row
 * count and dimensionality as u64, then per row `dim` float64 values
 * followed by one label byte. The row count is back-patched on close, so
 * rows can stream in as batches finish.
 */

import { open, type FileHandle } from 'node:fs/promises';

export const BANK_MAGIC = Buffer.from('FBANK\x00\x01\x00', 'latin1');
const HEADER_SIZE = 8 + 8 + 8;

export class BankWriter {
  private handle: FileHandle | null = null;
  private rowBuf: Buffer;
  private n = 0;

  private constructor(handle: FileHandle, readonly dim: number) {
    this.handle = handle;
    this.rowBuf = Buffer.allocUnsafe(8 * dim + 1);
  }

  static async create(path: string, dim: number): Promise<BankWriter> {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`bank dimension must be a positive integer, got ${dim}`);
    }
    const handle = await open(path, 'w');
    const header = Buffer.alloc(HEADER_SIZE);
    BANK_MAGIC.copy(header, 0);
    header.writeBigUInt64LE(0n, 8);
    header.writeBigUInt64LE(BigInt(dim), 16);
    await handle.write(header, 0, HEADER_SIZE, 0);
    return new BankWriter(handle, dim);
  }

  get rowsWritten(): number {
    return this.n;
  }

  /** Append one example; features are widened to float64 on the way out. */
  async appendRow(features: ArrayLike<number>, label: 0 | 1): Promise<void> {
    if (!this.handle) {
      throw new Error('bank writer is closed');
    }
    if (features.length !== this.dim) {
      throw new Error(`row has ${features.length} values, bank dim is ${this.dim}`);
    }
    for (let i = 0; i < this.dim; i++) {
      const v = features[i];
      if (!Number.isFinite(v)) {
        throw new Error(`non-finite feature value at index ${i}`);
      }
      this.rowBuf.writeDoubleLE(v, 8 * i);
    }
    this.rowBuf.writeUInt8(label, 8 * this.dim);
    await this.handle.write(this.rowBuf, 0, this.rowBuf.length, HEADER_SIZE + this.n * this.rowBuf.length);
    this.n += 1;
  }

  /** Patch the row count into the header and release the file. */
  async close(): Promise<void> {
    if (!this.handle) {
      return;
    }
    const count = Buffer.alloc(8);
    count.writeBigUInt64LE(BigInt(this.n), 0);
    await this.handle.write(count, 0, 8, 8);
    await this.handle.close();
    this.handle = null;
  }
}
