// Built-in example sketches: deliberately rough face drawings expressed as
// stroke documents, so "load example" exercises the exact same path as
// hand drawing.

import { Point, StrokeDocument } from "./document.js";

function ellipse(cx: number, cy: number, rx: number, ry: number, n = 40): Point[] {
  const pts: Point[] = [];
  for (let i = 0; i <= n; i++) {
    const t = (i / n) * 2 * Math.PI;
    pts.push({ x: cx + rx * Math.cos(t), y: cy + ry * Math.sin(t) });
  }
  return pts;
}

function arc(cx: number, cy: number, r: number, a0: number, a1: number, n = 16): Point[] {
  const pts: Point[] = [];
  for (let i = 0; i <= n; i++) {
    const t = a0 + ((a1 - a0) * i) / n;
    pts.push({ x: cx + r * Math.cos(t), y: cy + r * Math.sin(t) });
  }
  return pts;
}

function drawPolyline(doc: StrokeDocument, pts: Point[], width = 2): void {
  if (pts.length === 0) return;
  doc.beginStroke(pts[0].x, pts[0].y, width);
  for (let i = 1; i < pts.length; i++) doc.extendStroke(pts[i].x, pts[i].y);
  doc.endStroke();
}

export interface Example {
  name: string;
  build(): StrokeDocument;
}

export const EXAMPLES: Example[] = [
  {
    name: "round face",
    build() {
      const doc = new StrokeDocument();
      drawPolyline(doc, ellipse(128, 140, 70, 85)); // head
      drawPolyline(doc, ellipse(100, 120, 10, 6)); // left eye
      drawPolyline(doc, ellipse(156, 120, 10, 6)); // right eye
      drawPolyline(doc, [{ x: 128, y: 135 }, { x: 122, y: 160 }, { x: 132, y: 162 }]); // nose
      drawPolyline(doc, arc(128, 180, 24, 0.3, Math.PI - 0.3)); // mouth
      return doc;
    },
  },
  {
    name: "long face",
    build() {
      const doc = new StrokeDocument();
      drawPolyline(doc, ellipse(128, 140, 55, 95));
      drawPolyline(doc, [{ x: 85, y: 115 }, { x: 110, y: 112 }]); // left brow
      drawPolyline(doc, [{ x: 146, y: 112 }, { x: 171, y: 115 }]); // right brow
      drawPolyline(doc, ellipse(98, 128, 9, 5));
      drawPolyline(doc, ellipse(158, 128, 9, 5));
      drawPolyline(doc, arc(128, 190, 18, 0.4, Math.PI - 0.4));
      return doc;
    },
  },
];
