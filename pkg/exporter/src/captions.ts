/** Caption sources: a provided JSONL file, or an instruction-tuned
 * vision-language endpoint asked to describe each image. */

import { readFile } from "fs/promises";

import { FormatError } from "./errors.js";

export const DESCRIBE_PROMPT = "Describe the image";

export async function loadProvidedCaptions(path: string): Promise<Map<string, string>> {
  let raw: string;
  try {
    raw = await readFile(path, "utf-8");
  } catch (err) {
    throw new FormatError(`cannot read captions file ${path}: ${err}`);
  }
  const captions = new Map<string, string>();
  raw.split("\n").forEach((line, lineno) => {
    if (!line.trim()) return;
    let row: any;
    try {
      row = JSON.parse(line);
    } catch (err) {
      throw new FormatError(`${path}:${lineno + 1}: invalid JSON (${err})`);
    }
    if (typeof row.id !== "string" || typeof row.text !== "string") {
      throw new FormatError(`${path}:${lineno + 1}: caption rows need id and text`);
    }
    captions.set(row.id, row.text);
  });
  return captions;
}

export interface CaptionEndpoint {
  endpoint: string;
  model: string;
  apiKey?: string;
  fetchImpl?: typeof fetch;
}

/** One request per image: {model, prompt, image(base64)} -> {text}. */
export async function generateCaption(
  config: CaptionEndpoint,
  imageBytes: Buffer,
): Promise<string> {
  const doFetch = config.fetchImpl ?? fetch;
  const headers: Record<string, string> = { "Content-Type": "application/json" };
  if (config.apiKey) headers["Authorization"] = `Bearer ${config.apiKey}`;
  const response = await doFetch(config.endpoint, {
    method: "POST",
    headers,
    body: JSON.stringify({
      model: config.model,
      prompt: DESCRIBE_PROMPT,
      image: imageBytes.toString("base64"),
    }),
  });
  if (!response.ok) {
    throw new FormatError(`caption endpoint returned HTTP ${response.status}`);
  }
  const body: any = await response.json();
  if (typeof body.text !== "string" || !body.text.trim()) {
    throw new FormatError(`caption endpoint returned no text: ${JSON.stringify(body)}`);
  }
  return body.text;
}
