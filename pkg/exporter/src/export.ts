/** Export job: images + labels + checkpoints -> pipeline file formats.
 *
 * Output layout under job.outDir:
 *   manifest.json, samples.jsonl, features.ladremb, vlr.ladremb,
 *   corpus.jsonl, corpus.ladremb
 * Embedding row i always pairs with samples.jsonl / corpus.jsonl line i.
 */

import { mkdir, readFile, writeFile } from "fs/promises";
import { join } from "path";

import { generateCaption, loadProvidedCaptions, type CaptionEndpoint } from "./captions.js";
import {
  classify,
  loadClassifier,
  loadJointEncoder,
} from "./encoders.js";
import { FormatError, ImageDecodeError } from "./errors.js";
import { encodeLadremb, matrixToFloat32 } from "./ladremb.js";
import { decodePpm } from "./ppm.js";

export interface ExportJob {
  imagesDir: string;
  labelsPath: string;
  checkpointPath: string;
  vlrPath: string;
  captionSource: "provided" | "instruction-model";
  captionsPath?: string;
  captionEndpoint?: CaptionEndpoint;
  outDir: string;
  split?: "train" | "validation" | "test";
  name?: string;
}

interface LabelsFile {
  classes: string[];
  samples: Array<{
    id: string;
    file: string;
    label: number;
    groups?: Record<string, number>;
  }>;
}

async function loadLabels(path: string): Promise<LabelsFile> {
  let spec: any;
  try {
    spec = JSON.parse(await readFile(path, "utf-8"));
  } catch (err) {
    throw new FormatError(`cannot read labels file ${path}: ${err}`);
  }
  if (!Array.isArray(spec.classes) || !Array.isArray(spec.samples)) {
    throw new FormatError(`${path}: labels file needs "classes" and "samples"`);
  }
  const seen = new Set<string>();
  for (const sample of spec.samples) {
    if (typeof sample.id !== "string" || typeof sample.file !== "string") {
      throw new FormatError(`${path}: every sample needs id and file`);
    }
    if (seen.has(sample.id)) throw new FormatError(`${path}: duplicate sample id ${sample.id}`);
    seen.add(sample.id);
    const label = Number(sample.label);
    if (!Number.isInteger(label) || label < 0 || label >= spec.classes.length) {
      throw new FormatError(`${path}: sample ${sample.id} has invalid label ${sample.label}`);
    }
  }
  return spec as LabelsFile;
}

export async function runExport(job: ExportJob): Promise<void> {
  const labels = await loadLabels(job.labelsPath);
  const checkpoint = await loadClassifier(job.checkpointPath);
  const joint = await loadJointEncoder(job.vlrPath);

  let providedCaptions: Map<string, string> | undefined;
  if (job.captionSource === "provided") {
    if (!job.captionsPath) throw new FormatError("provided caption mode needs captionsPath");
    providedCaptions = await loadProvidedCaptions(job.captionsPath);
  } else if (!job.captionEndpoint) {
    throw new FormatError("instruction-model caption mode needs captionEndpoint");
  }

  const sampleRows: string[] = [];
  const featureRows: number[][] = [];
  const vlrRows: number[][] = [];
  const corpusRows: string[] = [];
  const textRows: number[][] = [];

  for (const sample of labels.samples) {
    const imagePath = join(job.imagesDir, sample.file);
    let bytes: Buffer;
    try {
      bytes = await readFile(imagePath);
    } catch (err) {
      throw new ImageDecodeError(`cannot read image ${imagePath}: ${err}`);
    }
    const image = decodePpm(bytes, imagePath);

    const features = checkpoint.encoder.encodeImage(image);
    const { prediction, score } = classify(checkpoint, features);
    const record: Record<string, unknown> = {
      id: sample.id,
      label: sample.label,
      prediction,
    };
    if (score !== undefined) record.score = Number(score.toFixed(6));
    if (sample.groups) record.groups = sample.groups;
    sampleRows.push(JSON.stringify(record));
    featureRows.push(Array.from(features));
    vlrRows.push(Array.from(joint.encodeImage(image)));

    let caption: string;
    if (providedCaptions) {
      const found = providedCaptions.get(sample.id);
      if (found === undefined) {
        throw new FormatError(`no caption provided for image id ${sample.id}`);
      }
      caption = found;
    } else {
      caption = await generateCaption(job.captionEndpoint!, bytes);
    }
    corpusRows.push(JSON.stringify({ id: `cap_${sample.id}`, text: caption }));
    textRows.push(Array.from(joint.encodeText(caption)));
  }

  await mkdir(job.outDir, { recursive: true });
  const featureDim = checkpoint.encoder.dim;
  await writeFile(
    join(job.outDir, "features.ladremb"),
    encodeLadremb(featureRows.length, featureDim, matrixToFloat32(featureRows)),
  );
  await writeFile(
    join(job.outDir, "vlr.ladremb"),
    encodeLadremb(vlrRows.length, joint.dim, matrixToFloat32(vlrRows)),
  );
  await writeFile(join(job.outDir, "samples.jsonl"), sampleRows.join("\n") + "\n");
  await writeFile(join(job.outDir, "corpus.jsonl"), corpusRows.join("\n") + "\n");
  await writeFile(
    join(job.outDir, "corpus.ladremb"),
    encodeLadremb(textRows.length, joint.dim, matrixToFloat32(textRows)),
  );
  const manifest = {
    name: job.name ?? "exported",
    classes: labels.classes,
    split: job.split ?? "validation",
    samples: "samples.jsonl",
    features: "features.ladremb",
    vlr_image: "vlr.ladremb",
    provenance: {
      classifier: checkpoint.name,
      vlr_encoder: joint.name,
      caption_source: job.captionSource,
      precision: "float32",
    },
  };
  await writeFile(join(job.outDir, "manifest.json"), JSON.stringify(manifest, null, 2) + "\n");
}
