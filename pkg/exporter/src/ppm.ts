/** Minimal binary PPM (P6) / PGM (P5) codec: self-contained image IO. */

import { ImageDecodeError } from "./errors.js";

export interface RawImage {
  width: number;
  height: number;
  channels: 1 | 3;
  /** row-major, channel-interleaved, 8-bit */
  data: Uint8Array;
}

export function decodePpm(buffer: Buffer, source = "<buffer>"): RawImage {
  let pos = 0;
  const readToken = (): string => {
    // skip whitespace and '#' comment lines
    for (;;) {
      while (pos < buffer.length && /\s/.test(String.fromCharCode(buffer[pos]))) pos++;
      if (pos < buffer.length && buffer[pos] === 0x23) {
        while (pos < buffer.length && buffer[pos] !== 0x0a) pos++;
        continue;
      }
      break;
    }
    const start = pos;
    while (pos < buffer.length && !/\s/.test(String.fromCharCode(buffer[pos]))) pos++;
    if (start === pos) throw new ImageDecodeError(`${source}: truncated header`);
    return buffer.subarray(start, pos).toString("ascii");
  };

  const magic = readToken();
  if (magic !== "P5" && magic !== "P6") {
    throw new ImageDecodeError(`${source}: unsupported magic ${JSON.stringify(magic)}`);
  }
  const channels = magic === "P6" ? 3 : 1;
  const width = Number(readToken());
  const height = Number(readToken());
  const maxval = Number(readToken());
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new ImageDecodeError(`${source}: bad dimensions ${width}x${height}`);
  }
  if (maxval !== 255) {
    throw new ImageDecodeError(`${source}: only maxval 255 supported, got ${maxval}`);
  }
  pos++; // single whitespace after maxval
  const expected = width * height * channels;
  const data = buffer.subarray(pos, pos + expected);
  if (data.length !== expected) {
    throw new ImageDecodeError(
      `${source}: payload is ${data.length} bytes, expected ${expected}`,
    );
  }
  return { width, height, channels: channels as 1 | 3, data: new Uint8Array(data) };
}

export function encodePpm(image: RawImage): Buffer {
  const magic = image.channels === 3 ? "P6" : "P5";
  const header = Buffer.from(`${magic}\n${image.width} ${image.height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(image.data)]);
}
