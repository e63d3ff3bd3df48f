/** Writer/reader for the pipeline's binary embedding container. */

const MAGIC = "LADR";
const VERSION = 1;

export function encodeLadremb(rows: number, dim: number, values: Float32Array): Buffer {
  if (values.length !== rows * dim) {
    throw new Error(`payload has ${values.length} values, expected ${rows * dim}`);
  }
  const buffer = Buffer.alloc(24 + rows * dim * 4);
  buffer.write(MAGIC, 0, "ascii");
  buffer.writeUInt32LE(VERSION, 4);
  buffer.writeBigUInt64LE(BigInt(rows), 8);
  buffer.writeBigUInt64LE(BigInt(dim), 16);
  for (let i = 0; i < values.length; i++) buffer.writeFloatLE(values[i], 24 + i * 4);
  return buffer;
}

export function decodeLadremb(buffer: Buffer): { rows: number; dim: number; values: Float32Array } {
  if (buffer.subarray(0, 4).toString("ascii") !== MAGIC) throw new Error("bad magic");
  if (buffer.readUInt32LE(4) !== VERSION) throw new Error("unsupported version");
  const rows = Number(buffer.readBigUInt64LE(8));
  const dim = Number(buffer.readBigUInt64LE(16));
  const values = new Float32Array(rows * dim);
  for (let i = 0; i < values.length; i++) values[i] = buffer.readFloatLE(24 + i * 4);
  return { rows, dim, values };
}

export function matrixToFloat32(rows: number[][]): Float32Array {
  const dim = rows.length ? rows[0].length : 0;
  const out = new Float32Array(rows.length * dim);
  rows.forEach((row, r) => row.forEach((v, c) => (out[r * dim + c] = v)));
  return out;
}
