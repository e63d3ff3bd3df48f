/** Deterministic, platform-independent pseudo-randomness for toy encoders. */

export function fnv1a32(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

/** mulberry32: tiny seeded generator, uniform in [0, 1). */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** rows x cols matrix with entries uniform in [-1, 1), keyed by a string. */
export function seededMatrix(rows: number, cols: number, key: string): Float64Array[] {
  const next = mulberry32(fnv1a32(key));
  const out: Float64Array[] = [];
  for (let r = 0; r < rows; r++) {
    const row = new Float64Array(cols);
    for (let c = 0; c < cols; c++) row[c] = next() * 2 - 1;
    out.push(row);
  }
  return out;
}

/** Deterministic unit-scale residual vector for a piece of text. */
export function hashResidual(dim: number, text: string): Float64Array {
  const next = mulberry32(fnv1a32(text));
  const out = new Float64Array(dim);
  for (let i = 0; i < dim; i++) out[i] = next() * 2 - 1;
  return out;
}
