// Application controller: wires the stroke document, the display canvas,
// the synthesis client, and the session strip into the page.  All DOM
// access goes through the root element handed to `mountApp`, so the whole
// flow runs under a DOM test environment against a mocked service.

import { SynthesisClient } from "./api.js";
import { CANVAS_SIZE, DEFAULT_STROKE_WIDTH, StrokeDocument } from "./document.js";
import { EXAMPLES } from "./examples.js";
import { encodeGrayPng, toBase64 } from "./png.js";
import { INK, rasterize } from "./raster.js";
import { Session } from "./session.js";

export interface AppHandles {
  doc: StrokeDocument;
  session: Session;
  submit(): Promise<void>;
  loadExample(index: number): void;
  rasterizePngBase64(): string;
  elements: {
    canvas: HTMLCanvasElement;
    submitButton: HTMLButtonElement;
    status: HTMLElement;
    triptych: HTMLElement;
    strip: HTMLElement;
  };
}

const PAGE = `
  <div class="toolbar">
    <button data-role="draw" class="active">Draw</button>
    <button data-role="erase">Erase</button>
    <button data-role="undo">Undo</button>
    <button data-role="redo">Redo</button>
    <button data-role="clear">Clear</button>
    <select data-role="examples"><option value="">Load example…</option></select>
    <button data-role="submit" disabled>Synthesize</button>
    <span data-role="status"></span>
  </div>
  <div class="workspace">
    <canvas data-role="canvas" width="${CANVAS_SIZE}" height="${CANVAS_SIZE}"></canvas>
    <div data-role="triptych" class="triptych"></div>
  </div>
  <div data-role="strip" class="strip"></div>
`;

export function mountApp(root: HTMLElement, client: SynthesisClient): AppHandles {
  root.innerHTML = PAGE;
  const q = <T extends HTMLElement>(role: string) =>
    root.querySelector(`[data-role="${role}"]`) as T;

  const canvas = q<HTMLCanvasElement>("canvas");
  const submitButton = q<HTMLButtonElement>("submit");
  const status = q<HTMLElement>("status");
  const triptych = q<HTMLElement>("triptych");
  const strip = q<HTMLElement>("strip");
  const examplesSelect = q<HTMLSelectElement>("examples");

  const doc = new StrokeDocument(CANVAS_SIZE);
  const session = new Session();
  let erasing = false;
  let pending = false;

  for (let i = 0; i < EXAMPLES.length; i++) {
    const opt = document.createElement("option");
    opt.value = String(i);
    opt.textContent = EXAMPLES[i].name;
    examplesSelect.appendChild(opt);
  }

  const ctx = canvas.getContext ? canvas.getContext("2d") : null;

  function repaint(): void {
    if (ctx) {
      const pixels = rasterize(doc);
      const img = ctx.createImageData(CANVAS_SIZE, CANVAS_SIZE);
      for (let i = 0; i < pixels.length; i++) {
        img.data[i * 4] = img.data[i * 4 + 1] = img.data[i * 4 + 2] = pixels[i];
        img.data[i * 4 + 3] = 255;
      }
      ctx.putImageData(img, 0, 0);
    }
    submitButton.disabled = doc.isEmpty() || pending;
  }

  function canvasPoint(ev: PointerEvent): { x: number; y: number } {
    const rect = canvas.getBoundingClientRect();
    const scaleX = rect.width > 0 ? CANVAS_SIZE / rect.width : 1;
    const scaleY = rect.height > 0 ? CANVAS_SIZE / rect.height : 1;
    return { x: (ev.clientX - rect.left) * scaleX, y: (ev.clientY - rect.top) * scaleY };
  }

  let drawing = false;
  canvas.addEventListener("pointerdown", (ev) => {
    drawing = true;
    const p = canvasPoint(ev as PointerEvent);
    doc.beginStroke(p.x, p.y, erasing ? DEFAULT_STROKE_WIDTH * 4 : DEFAULT_STROKE_WIDTH, erasing);
    repaint();
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!drawing) return;
    const p = canvasPoint(ev as PointerEvent);
    doc.extendStroke(p.x, p.y);
    repaint();
  });
  const finish = () => {
    if (!drawing) return;
    drawing = false;
    doc.endStroke();
    repaint();
  };
  canvas.addEventListener("pointerup", finish);
  canvas.addEventListener("pointerleave", finish);

  q<HTMLButtonElement>("draw").addEventListener("click", (ev) => {
    erasing = false;
    q("draw").classList.add("active");
    q("erase").classList.remove("active");
  });
  q<HTMLButtonElement>("erase").addEventListener("click", () => {
    erasing = true;
    q("erase").classList.add("active");
    q("draw").classList.remove("active");
  });
  q<HTMLButtonElement>("undo").addEventListener("click", () => {
    doc.undo();
    repaint();
  });
  q<HTMLButtonElement>("redo").addEventListener("click", () => {
    doc.redo();
    repaint();
  });
  q<HTMLButtonElement>("clear").addEventListener("click", () => {
    doc.clear();
    repaint();
  });
  examplesSelect.addEventListener("change", () => {
    const idx = Number(examplesSelect.value);
    if (!Number.isNaN(idx) && examplesSelect.value !== "") loadExample(idx);
    examplesSelect.value = "";
  });

  function loadExample(index: number): void {
    const example = EXAMPLES[index];
    if (!example) return;
    doc.clear();
    const built = example.build();
    for (const s of built.allStrokes()) {
      doc.beginStroke(s.points[0].x, s.points[0].y, s.width, s.erase);
      for (let i = 1; i < s.points.length; i++) doc.extendStroke(s.points[i].x, s.points[i].y);
      doc.endStroke();
    }
    repaint();
  }

  function rasterizePngBase64(): string {
    return toBase64(encodeGrayPng(rasterize(doc), CANVAS_SIZE, CANVAS_SIZE));
  }

  function panel(title: string, pngBase64: string): HTMLElement {
    const box = document.createElement("figure");
    const img = document.createElement("img");
    img.src = `data:image/png;base64,${pngBase64}`;
    img.width = CANVAS_SIZE;
    img.height = CANVAS_SIZE;
    const cap = document.createElement("figcaption");
    cap.textContent = title;
    box.appendChild(img);
    box.appendChild(cap);
    return box;
  }

  async function submit(): Promise<void> {
    if (doc.isEmpty() || pending) return;
    pending = true;
    repaint();
    status.textContent = "synthesizing…";
    const sketchPng = rasterizePngBase64();
    try {
      const res = await client.synthesize(sketchPng, true);
      triptych.innerHTML = "";
      triptych.appendChild(panel("your sketch", sketchPng));
      if (res.refined) triptych.appendChild(panel("calibrated sketch", res.refined));
      triptych.appendChild(panel("photo", res.photo));
      session.add(sketchPng, res.photo, res.refined);

      const item = document.createElement("div");
      item.className = "strip-entry";
      item.appendChild(panel(`#${session.length}`, res.photo));
      strip.appendChild(item);
      status.textContent = "done";
    } catch (err) {
      status.textContent = `${err instanceof Error ? err.message : err} — retry?`;
    } finally {
      pending = false;
      repaint();
    }
  }

  submitButton.addEventListener("click", () => void submit());
  repaint();

  return {
    doc,
    session,
    submit,
    loadExample,
    rasterizePngBase64,
    elements: { canvas, submitButton, status, triptych, strip },
  };
}
