import { readFileSync } from "node:fs";
import { PNG } from "pngjs";

export interface GrayImage {
  width: number;
  height: number;
  /** Rec.601 luma per pixel, row-major, range 0..255. */
  pixels: Float64Array;
}

/** Decode a PNG file to a luma plane. Alpha is ignored. Throws on
 * unreadable or undecodable input. */
export function decodeToGray(path: string): GrayImage {
  const bytes = readFileSync(path);
  const png = PNG.sync.read(bytes);
  const { width, height, data } = png;
  if (width < 1 || height < 1) {
    throw new Error("empty image");
  }
  const pixels = new Float64Array(width * height);
  for (let i = 0; i < width * height; i++) {
    const r = data[4 * i];
    const g = data[4 * i + 1];
    const b = data[4 * i + 2];
    pixels[i] = 0.299 * r + 0.587 * g + 0.114 * b;
  }
  return { width, height, pixels };
}
