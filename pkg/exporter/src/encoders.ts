/** Deterministic reference encoders.
 *
 * Real deployments extract classifier features and joint image/text
 * embeddings from model checkpoints; this package ships self-contained "toy"
 * encoders so exports are reproducible anywhere. The joint encoder maps both
 * modalities through a shared set of semantic probes (brightness, left/right
 * and top/bottom mass, warm/cool balance, contrast), so captions that
 * describe an image genuinely land near its embedding, which is what the
 * downstream retrieval and scoring stages rely on.
 */

import { readFile } from "fs/promises";

import { EncoderLoadError } from "./errors.js";
import { hashResidual, seededMatrix } from "./prng.js";
import type { RawImage } from "./ppm.js";

const GRID = 4;
export const N_PROBES = 5;

function pixel(image: RawImage, x: number, y: number, channel: number): number {
  const c = image.channels === 3 ? channel : 0;
  return image.data[(y * image.width + x) * image.channels + c];
}

/** 4x4 grid of per-channel means, values in [0, 1]; the classifier's raw cues. */
export function gridFeatures(image: RawImage): Float64Array {
  const out = new Float64Array(GRID * GRID * 3);
  for (let gy = 0; gy < GRID; gy++) {
    for (let gx = 0; gx < GRID; gx++) {
      const x0 = Math.floor((gx * image.width) / GRID);
      const x1 = Math.max(x0 + 1, Math.floor(((gx + 1) * image.width) / GRID));
      const y0 = Math.floor((gy * image.height) / GRID);
      const y1 = Math.max(y0 + 1, Math.floor(((gy + 1) * image.height) / GRID));
      const sums = [0, 0, 0];
      let count = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) {
          for (let c = 0; c < 3; c++) sums[c] += pixel(image, x, y, c);
          count++;
        }
      }
      for (let c = 0; c < 3; c++) {
        out[(gy * GRID + gx) * 3 + c] = sums[c] / (count * 255);
      }
    }
  }
  return out;
}

/** Shared semantic probes, each in [-1, 1]. */
export function imageProbes(image: RawImage): Float64Array {
  let total = 0;
  let left = 0;
  let right = 0;
  let top = 0;
  let bottom = 0;
  let warm = 0;
  let cool = 0;
  const n = image.width * image.height;
  let sumSq = 0;
  for (let y = 0; y < image.height; y++) {
    for (let x = 0; x < image.width; x++) {
      const r = pixel(image, x, y, 0);
      const g = pixel(image, x, y, 1);
      const b = pixel(image, x, y, 2);
      const lum = (r + g + b) / 3 / 255;
      total += lum;
      sumSq += lum * lum;
      if (x < image.width / 2) left += lum;
      else right += lum;
      if (y < image.height / 2) top += lum;
      else bottom += lum;
      warm += r / 255;
      cool += b / 255;
    }
  }
  const mean = total / n;
  const variance = Math.max(0, sumSq / n - mean * mean);
  return Float64Array.from([
    2 * mean - 1,
    (2 * (right - left)) / n,
    (2 * (bottom - top)) / n,
    (2 * (warm - cool)) / n,
    4 * Math.sqrt(variance) - 1,
  ]);
}

const LEXICON: Array<[RegExp, number, number]> = [
  // pattern, probe index, sign
  [/\bbright|brightly|light|sunlit|pale\b/, 0, +1],
  [/\bdark|dim|shadow|murky|dusky\b/, 0, -1],
  [/\bright(-| )?(side|edge|half)|on the right\b/, 1, +1],
  [/\bleft(-| )?(side|edge|half)|on the left\b/, 1, -1],
  [/\bbottom|lower\b/, 2, +1],
  [/\btop|upper\b/, 2, -1],
  [/\bred|warm|amber|orange\b/, 3, +1],
  [/\bblue|cool|cold\b/, 3, -1],
  [/\bbusy|textured|detailed|cluttered\b/, 4, +1],
  [/\bplain|flat|uniform|smooth\b/, 4, -1],
];

export function textProbes(text: string): Float64Array {
  const probes = new Float64Array(N_PROBES);
  const lowered = text.toLowerCase();
  for (const [pattern, index, sign] of LEXICON) {
    if (pattern.test(lowered)) probes[index] += sign;
  }
  for (let i = 0; i < N_PROBES; i++) probes[i] = Math.max(-1, Math.min(1, probes[i]));
  return probes;
}

function normalize(vector: Float64Array): Float64Array {
  let norm = 0;
  for (const v of vector) norm += v * v;
  norm = Math.sqrt(norm);
  if (norm === 0) return vector;
  return vector.map((v) => v / norm) as Float64Array;
}

function project(matrix: Float64Array[], vector: Float64Array): Float64Array {
  const out = new Float64Array(matrix.length);
  matrix.forEach((row, r) => {
    let sum = 0;
    for (let c = 0; c < row.length; c++) sum += row[c] * vector[c];
    out[r] = sum;
  });
  return out;
}

export interface FeatureEncoder {
  name: string;
  dim: number;
  encodeImage(image: RawImage): Float64Array;
}

export interface JointEncoder {
  name: string;
  dim: number;
  encodeImage(image: RawImage): Float64Array;
  encodeText(text: string): Float64Array;
}

export interface ClassifierCheckpoint {
  name: string;
  encoder: FeatureEncoder;
  /** featureDim x nClasses */
  weights: number[][];
  bias: number[];
  nClasses: number;
}

function toyFeatureEncoder(dim: number, seed: number): FeatureEncoder {
  const matrix = seededMatrix(dim, GRID * GRID * 3, `toy-features:${seed}`);
  return {
    name: `toy-features-d${dim}-s${seed}`,
    dim,
    encodeImage: (image) => project(matrix, gridFeatures(image)),
  };
}

function toyJointEncoder(dim: number, seed: number, residual = 0.05): JointEncoder {
  const matrix = seededMatrix(dim, N_PROBES, `toy-joint:${seed}`);
  const mix = (probes: Float64Array, residualKey: string) => {
    const base = project(matrix, probes);
    const noise = hashResidual(dim, residualKey);
    for (let i = 0; i < dim; i++) base[i] += residual * noise[i];
    return normalize(base);
  };
  return {
    name: `toy-joint-d${dim}-s${seed}`,
    dim,
    encodeImage: (image) => mix(imageProbes(image), "img"),
    encodeText: (text) => mix(textProbes(text), text.toLowerCase().trim()),
  };
}

export async function loadClassifier(path: string): Promise<ClassifierCheckpoint> {
  let spec: any;
  try {
    spec = JSON.parse(await readFile(path, "utf-8"));
  } catch (err) {
    throw new EncoderLoadError(`cannot read classifier checkpoint ${path}: ${err}`);
  }
  if (spec.type !== "toy-linear") {
    throw new EncoderLoadError(`unsupported classifier type ${JSON.stringify(spec.type)}`);
  }
  const dim = Number(spec.feature_dim);
  const weights: number[][] = spec.weights;
  const bias: number[] = spec.bias;
  if (!Array.isArray(weights) || weights.length !== dim || !Array.isArray(bias)) {
    throw new EncoderLoadError(`${path}: weight shape does not match feature_dim=${dim}`);
  }
  const nClasses = bias.length;
  if (weights.some((row) => row.length !== nClasses)) {
    throw new EncoderLoadError(`${path}: weight rows must have ${nClasses} columns`);
  }
  return {
    name: `toy-linear-d${dim}-s${spec.seed ?? 0}`,
    encoder: toyFeatureEncoder(dim, Number(spec.seed ?? 0)),
    weights,
    bias,
    nClasses,
  };
}

export async function loadJointEncoder(path: string): Promise<JointEncoder> {
  let spec: any;
  try {
    spec = JSON.parse(await readFile(path, "utf-8"));
  } catch (err) {
    throw new EncoderLoadError(`cannot read encoder spec ${path}: ${err}`);
  }
  if (spec.type !== "toy-joint") {
    throw new EncoderLoadError(`unsupported joint-encoder type ${JSON.stringify(spec.type)}`);
  }
  return toyJointEncoder(Number(spec.dim ?? 16), Number(spec.seed ?? 0), spec.residual ?? 0.05);
}

export function classify(
  checkpoint: ClassifierCheckpoint,
  features: Float64Array,
): { prediction: number; score?: number } {
  const logits = checkpoint.bias.slice();
  for (let d = 0; d < features.length; d++) {
    for (let c = 0; c < checkpoint.nClasses; c++) logits[c] += features[d] * checkpoint.weights[d][c];
  }
  let prediction = 0;
  for (let c = 1; c < logits.length; c++) if (logits[c] > logits[prediction]) prediction = c;
  if (checkpoint.nClasses === 2) {
    const score = 1 / (1 + Math.exp(logits[0] - logits[1]));
    return { prediction, score };
  }
  return { prediction };
}
