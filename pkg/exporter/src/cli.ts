/** CLI: export an image dataset into the pipeline's file formats.
 *
 * node dist/cli.js --images data/imgs --labels labels.json \
 *   --checkpoint toy_head.json --vlr toy_joint.json \
 *   --captions captions.jsonl --out exported/
 */

import { parseArgs } from "node:util";

import { ExporterError } from "./errors.js";
import { runExport, type ExportJob } from "./export.js";

function usage(): never {
  console.error(
    "usage: export --images DIR --labels FILE --checkpoint FILE --vlr FILE " +
      "(--captions FILE | --caption-endpoint URL --caption-model NAME) " +
      "--out DIR [--split train|validation|test] [--name NAME]",
  );
  process.exit(2);
}

export async function main(argv: string[]): Promise<number> {
  let values: Record<string, string | boolean | undefined>;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        images: { type: "string" },
        labels: { type: "string" },
        checkpoint: { type: "string" },
        vlr: { type: "string" },
        captions: { type: "string" },
        "caption-endpoint": { type: "string" },
        "caption-model": { type: "string" },
        out: { type: "string" },
        split: { type: "string" },
        name: { type: "string" },
      },
    }));
  } catch {
    usage();
  }
  const required = ["images", "labels", "checkpoint", "vlr", "out"] as const;
  if (required.some((key) => typeof values[key] !== "string")) usage();
  const providedMode = typeof values.captions === "string";
  if (!providedMode && typeof values["caption-endpoint"] !== "string") usage();

  const job: ExportJob = {
    imagesDir: values.images as string,
    labelsPath: values.labels as string,
    checkpointPath: values.checkpoint as string,
    vlrPath: values.vlr as string,
    captionSource: providedMode ? "provided" : "instruction-model",
    captionsPath: values.captions as string | undefined,
    captionEndpoint: providedMode
      ? undefined
      : {
          endpoint: values["caption-endpoint"] as string,
          model: (values["caption-model"] as string) ?? "llava-1.5-7b",
          apiKey: process.env.LADDER_LLM_API_KEY,
        },
    outDir: values.out as string,
    split: values.split as ExportJob["split"],
    name: values.name as string | undefined,
  };
  try {
    await runExport(job);
  } catch (err) {
    if (err instanceof ExporterError) {
      console.error(JSON.stringify({ error: err.constructor.name, message: err.message }));
      return 1;
    }
    throw err;
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
