// Stroke document model: an ordered list of polyline strokes with undo/redo.
// The document is plain data; rasterization lives in raster.ts so that the
// same document always produces the same pixels.

export interface Point {
  x: number;
  y: number;
}

export interface Stroke {
  points: Point[];
  width: number;
  erase: boolean;
}

export const CANVAS_SIZE = 256;
export const DEFAULT_STROKE_WIDTH = 2;

export class StrokeDocument {
  readonly size: number;
  private strokes: Stroke[] = [];
  private undone: Stroke[] = [];
  private active: Stroke | null = null;

  constructor(size: number = CANVAS_SIZE) {
    this.size = size;
  }

  beginStroke(x: number, y: number, width = DEFAULT_STROKE_WIDTH, erase = false): void {
    this.active = { points: [{ x, y }], width, erase };
  }

  extendStroke(x: number, y: number): void {
    if (!this.active) return;
    this.active.points.push({ x, y });
  }

  endStroke(): void {
    if (!this.active) return;
    this.strokes.push(this.active);
    this.active = null;
    this.undone = []; // a fresh stroke invalidates the redo branch
  }

  undo(): boolean {
    const s = this.strokes.pop();
    if (!s) return false;
    this.undone.push(s);
    return true;
  }

  redo(): boolean {
    const s = this.undone.pop();
    if (!s) return false;
    this.strokes.push(s);
    return true;
  }

  clear(): void {
    this.strokes = [];
    this.undone = [];
    this.active = null;
  }

  isEmpty(): boolean {
    return this.strokes.length === 0 && this.active === null;
  }

  /** Committed strokes plus the stroke being drawn, in paint order. */
  allStrokes(): readonly Stroke[] {
    return this.active ? [...this.strokes, this.active] : this.strokes;
  }

  /** Deep snapshot, for comparing document states. */
  snapshot(): Stroke[] {
    return this.allStrokes().map((s) => ({
      width: s.width,
      erase: s.erase,
      points: s.points.map((p) => ({ x: p.x, y: p.y })),
    }));
  }
}
