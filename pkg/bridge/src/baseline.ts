import type { GrayImage } from "./decode.js";

// Logistic squashing constants for the high-frequency residual, on the
// 0..255 luma scale: a residual of RESIDUAL_MIDPOINT maps to 0.5 and
// RESIDUAL_SCALE sets the slope. A perfectly flat image (residual 0)
// scores 1 / (1 + e^3) ~= 0.0474258732.
export const RESIDUAL_MIDPOINT = 6.0;
export const RESIDUAL_SCALE = 2.0;

/** 3x3 box blur with edge replication. */
export function boxBlur3(image: GrayImage): Float64Array {
  const { width, height, pixels } = image;
  const out = new Float64Array(width * height);
  const clamp = (v: number, hi: number) => (v < 0 ? 0 : v >= hi ? hi - 1 : v);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      let acc = 0;
      for (let dy = -1; dy <= 1; dy++) {
        for (let dx = -1; dx <= 1; dx++) {
          acc += pixels[clamp(y + dy, height) * width + clamp(x + dx, width)];
        }
      }
      out[y * width + x] = acc / 9;
    }
  }
  return out;
}

/** Mean absolute difference between the image and its 3x3 box blur. */
export function highFreqResidual(image: GrayImage): number {
  const blurred = boxBlur3(image);
  let acc = 0;
  for (let i = 0; i < image.pixels.length; i++) {
    acc += Math.abs(image.pixels[i] - blurred[i]);
  }
  return acc / image.pixels.length;
}

/** Deterministic baseline detector score in [0, 1].
 *
 * Not a serious synthetic-image detector: it only measures high-frequency
 * residual energy so the scoring pipeline can be exercised end-to-end
 * without model weights. */
export function baselineScore(image: GrayImage): number {
  const residual = highFreqResidual(image);
  const score = 1 / (1 + Math.exp(-(residual - RESIDUAL_MIDPOINT) / RESIDUAL_SCALE));
  return Math.min(1, Math.max(0, score));
}
