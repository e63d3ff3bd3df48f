/** Ten-image fixture with a planted brightness bias.
 *
 * Class 0 ("disc") is mostly bright, class 1 ("cross") mostly dark, and the
 * classifier checkpoint separates purely on brightness, so each class has
 * exactly one bias-conflicting (misclassified) member. Captions spell the
 * lighting out, which is what the discovery pipeline latches onto.
 */

import { mkdir, writeFile } from "fs/promises";
import { join } from "path";

import { gridFeatures } from "../src/encoders.js";
import { encodePpm, type RawImage } from "../src/ppm.js";
import { seededMatrix } from "../src/prng.js";

const SIZE = 24;
const FEATURE_DIM = 12;
const FEATURE_SEED = 3;
const JOINT_DIM = 16;
const JOINT_SEED = 11;

function makeImage(bright: boolean, shape: "disc" | "cross", variant: number): RawImage {
  const bg = bright ? 205 + 6 * variant : 48 + 6 * variant;
  const fg = bright ? 90 : 190;
  const data = new Uint8Array(SIZE * SIZE * 3).fill(bg);
  const put = (x: number, y: number, value: number) => {
    const base = (y * SIZE + x) * 3;
    data[base] = value;
    data[base + 1] = value;
    data[base + 2] = Math.max(0, value - 12); // slight warm tint
  };
  const cx = SIZE / 2 + (variant % 2);
  const cy = SIZE / 2 - (variant % 3);
  for (let y = 0; y < SIZE; y++) {
    for (let x = 0; x < SIZE; x++) {
      if (shape === "disc") {
        const r2 = (x - cx) ** 2 + (y - cy) ** 2;
        if (r2 < 36) put(x, y, fg);
      } else {
        if (Math.abs(x - cx) < 2 || Math.abs(y - cy) < 2) put(x, y, fg);
      }
    }
  }
  return { width: SIZE, height: SIZE, channels: 3, data };
}

const BRIGHT_CAPTIONS = [
  "a brightly lit photo of a rounded disc shape",
  "a pale, light scene showing a disc in the middle",
  "a sunlit frame with a single disc figure",
  "a bright view of a smooth disc on a light backdrop",
  "a brightly exposed picture of a cross mark",
];

const DARK_CAPTIONS = [
  "a dark photo of a disc barely visible in shadow",
  "a dim scene with a cross shape at the center",
  "a murky frame showing a cross figure",
  "a dark, shadowy view of a cross on a dusky backdrop",
  "a dim picture of a thin cross mark",
];

export interface Fixture {
  root: string;
  imagesDir: string;
  labelsPath: string;
  captionsPath: string;
  checkpointPath: string;
  vlrPath: string;
  brightCaptions: string[];
  darkCaptions: string[];
}

/** Brightness direction in classifier-feature space, for the biased head. */
function brightnessHead(): { weights: number[][]; bias: number[] } {
  const matrix = seededMatrix(FEATURE_DIM, 48, `toy-features:${FEATURE_SEED}`);
  const project = (vec: Float64Array) =>
    matrix.map((row) => row.reduce((acc, w, i) => acc + w * vec[i], 0));
  const brightFeat = project(gridFeatures(makeImage(true, "disc", 0)));
  const darkFeat = project(gridFeatures(makeImage(false, "cross", 0)));
  const direction = brightFeat.map((v, i) => v - darkFeat[i]);
  const norm = Math.hypot(...direction);
  const unit = direction.map((v) => (4 * v) / norm);
  const midpoint = brightFeat.map((v, i) => (v + darkFeat[i]) / 2);
  const threshold = unit.reduce((acc, w, i) => acc + w * midpoint[i], 0);
  // logit0 - logit1 = 2 * (unit . phi - threshold): bright -> class 0
  return {
    weights: unit.map((w) => [w, -w]),
    bias: [-threshold, threshold],
  };
}

export async function buildFixture(root: string): Promise<Fixture> {
  const imagesDir = join(root, "images");
  await mkdir(imagesDir, { recursive: true });

  // class 0: 4 bright discs + 1 dark disc; class 1: 4 dark crosses + 1 bright cross
  const samples: Array<{ id: string; file: string; label: number; bright: boolean; caption: string }> = [];
  for (let i = 0; i < 4; i++) {
    samples.push({ id: `img${i}`, file: `img${i}.ppm`, label: 0, bright: true,
                   caption: BRIGHT_CAPTIONS[i] });
  }
  samples.push({ id: "img4", file: "img4.ppm", label: 0, bright: false,
                 caption: DARK_CAPTIONS[0] });
  for (let i = 5; i < 9; i++) {
    samples.push({ id: `img${i}`, file: `img${i}.ppm`, label: 1, bright: false,
                   caption: DARK_CAPTIONS[i - 4] });
  }
  samples.push({ id: "img9", file: "img9.ppm", label: 1, bright: true,
                 caption: BRIGHT_CAPTIONS[4] });

  for (const [index, sample] of samples.entries()) {
    const image = makeImage(sample.bright, sample.label === 0 ? "disc" : "cross", index % 4);
    await writeFile(join(imagesDir, sample.file), encodePpm(image));
  }

  const labelsPath = join(root, "labels.json");
  await writeFile(
    labelsPath,
    JSON.stringify(
      {
        classes: ["disc", "cross"],
        samples: samples.map(({ id, file, label, bright }) => ({
          id, file, label, groups: { bright: bright ? 1 : 0 },
        })),
      },
      null,
      2,
    ),
  );

  const captionsPath = join(root, "captions.jsonl");
  await writeFile(
    captionsPath,
    samples.map((s) => JSON.stringify({ id: s.id, text: s.caption })).join("\n") + "\n",
  );

  const checkpointPath = join(root, "toy_head.json");
  const head = brightnessHead();
  await writeFile(
    checkpointPath,
    JSON.stringify({
      type: "toy-linear",
      feature_dim: FEATURE_DIM,
      seed: FEATURE_SEED,
      weights: head.weights,
      bias: head.bias,
    }),
  );

  const vlrPath = join(root, "toy_joint.json");
  await writeFile(vlrPath, JSON.stringify({ type: "toy-joint", dim: JOINT_DIM, seed: JOINT_SEED }));

  return {
    root,
    imagesDir,
    labelsPath,
    captionsPath,
    checkpointPath,
    vlrPath,
    brightCaptions: samples.filter((s) => s.bright).map((s) => s.caption),
    darkCaptions: samples.filter((s) => !s.bright).map((s) => s.caption),
  };
}
