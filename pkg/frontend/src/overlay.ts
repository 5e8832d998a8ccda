// Pixel blending for the selection overlay, kept pure for testability.

export interface OverlayColor {
  r: number;
  g: number;
  b: number;
  alpha: number; // 0..1 blend toward the overlay color
}

export const SELECTION_COLOR: OverlayColor = { r: 255, g: 64, b: 64, alpha: 0.55 };

/**
 * Blend the overlay color into `rgba` (RGBA byte buffer) wherever `mask` is
 * set. Returns the same buffer for chaining.
 */
export function blendMask(
  rgba: Uint8ClampedArray,
  mask: Uint8Array,
  color: OverlayColor = SELECTION_COLOR,
): Uint8ClampedArray {
  if (rgba.length !== mask.length * 4) {
    throw new Error("rgba buffer and mask sizes differ");
  }
  const keep = 1 - color.alpha;
  for (let i = 0; i < mask.length; i++) {
    if (!mask[i]) continue;
    const o = i * 4;
    rgba[o] = Math.round(rgba[o] * keep + color.r * color.alpha);
    rgba[o + 1] = Math.round(rgba[o + 1] * keep + color.g * color.alpha);
    rgba[o + 2] = Math.round(rgba[o + 2] * keep + color.b * color.alpha);
    rgba[o + 3] = 255;
  }
  return rgba;
}
