// Deterministic software rasterizer: StrokeDocument -> 8-bit grayscale pixels.
// Black ink (0) on white paper (255), the convention the synthesis service
// expects for uploaded drawings.  No HTMLCanvas involved, so the same
// document yields bit-identical pixels on every submit and in tests.

import { Stroke, StrokeDocument } from "./document.js";

export const PAPER = 255;
export const INK = 0;

function stampDisc(
  pixels: Uint8Array, size: number, cx: number, cy: number, radius: number, value: number,
): void {
  const r = Math.max(0.5, radius);
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(size - 1, Math.ceil(cx + r));
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(size - 1, Math.ceil(cy + r));
  const r2 = r * r;
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x + 0.5 - cx;
      const dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r2) pixels[y * size + x] = value;
    }
  }
}

function paintStroke(pixels: Uint8Array, size: number, stroke: Stroke): void {
  const value = stroke.erase ? PAPER : INK;
  const radius = stroke.width / 2;
  const pts = stroke.points;
  if (pts.length === 0) return;
  stampDisc(pixels, size, pts[0].x, pts[0].y, radius, value);
  for (let i = 1; i < pts.length; i++) {
    const a = pts[i - 1];
    const b = pts[i];
    const steps = Math.max(1, Math.ceil(Math.hypot(b.x - a.x, b.y - a.y) * 2));
    for (let s = 1; s <= steps; s++) {
      const t = s / steps;
      stampDisc(pixels, size, a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, radius, value);
    }
  }
}

/** Rasterize the whole document onto white paper. */
export function rasterize(doc: StrokeDocument): Uint8Array {
  const size = doc.size;
  const pixels = new Uint8Array(size * size).fill(PAPER);
  for (const stroke of doc.allStrokes()) paintStroke(pixels, size, stroke);
  return pixels;
}
