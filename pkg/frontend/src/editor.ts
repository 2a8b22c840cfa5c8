/**
 * Canvas editor: renders the image with specular and painted overlays,
 * translates pointer events into mask strokes, and handles zoom/pan.
 */

import { MaskState } from "./maskState.js";

const SR_TINT = [255, 64, 64, 140] as const; // locked specular pixels
const PAINT_TINT = [64, 160, 255, 150] as const; // painted hidden pixels

export class CanvasEditor {
  readonly state: MaskState;
  private readonly canvas: HTMLCanvasElement;
  private readonly ctx: CanvasRenderingContext2D;
  private readonly image: ImageBitmap;
  private readonly overlay: OffscreenCanvas;
  private readonly overlayCtx: OffscreenCanvasRenderingContext2D;

  brushRadius = 3;
  erasing = false;
  onChange: (() => void) | null = null;

  private scale = 1;
  private offsetX = 0;
  private offsetY = 0;
  private drawing = false;
  private panning = false;
  private lastClient: [number, number] | null = null;
  private lastPixel: [number, number] | null = null;

  constructor(canvas: HTMLCanvasElement, image: ImageBitmap, state: MaskState) {
    this.canvas = canvas;
    this.image = image;
    this.state = state;
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas unavailable");
    this.ctx = ctx;
    this.overlay = new OffscreenCanvas(state.width, state.height);
    const octx = this.overlay.getContext("2d");
    if (!octx) throw new Error("2d canvas unavailable");
    this.overlayCtx = octx;

    this.fitToCanvas();
    this.refreshOverlay();
    this.bind();
    this.render();
  }

  private fitToCanvas(): void {
    const sx = this.canvas.width / this.state.width;
    const sy = this.canvas.height / this.state.height;
    this.scale = Math.max(1, Math.floor(Math.min(sx, sy)));
    this.offsetX = (this.canvas.width - this.state.width * this.scale) / 2;
    this.offsetY = (this.canvas.height - this.state.height * this.scale) / 2;
  }

  private bind(): void {
    this.canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    this.canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    window.addEventListener("pointerup", () => this.pointerUp());
    this.canvas.addEventListener("wheel", (e) => this.wheel(e), { passive: false });
  }

  private toPixel(e: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const x = (e.clientX - rect.left - this.offsetX) / this.scale;
    const y = (e.clientY - rect.top - this.offsetY) / this.scale;
    return [x, y];
  }

  private pointerDown(e: PointerEvent): void {
    e.preventDefault();
    if (e.button === 1 || e.shiftKey) {
      this.panning = true;
      this.lastClient = [e.clientX, e.clientY];
      return;
    }
    this.drawing = true;
    const [x, y] = this.toPixel(e);
    this.lastPixel = [x, y];
    if (this.state.stamp(x, y, this.brushRadius, this.erasing) > 0) {
      this.afterPaint();
    }
  }

  private pointerMove(e: PointerEvent): void {
    if (this.panning && this.lastClient) {
      this.offsetX += e.clientX - this.lastClient[0];
      this.offsetY += e.clientY - this.lastClient[1];
      this.lastClient = [e.clientX, e.clientY];
      this.render();
      return;
    }
    if (!this.drawing || !this.lastPixel) return;
    const [x, y] = this.toPixel(e);
    const changed = this.state.stroke(
      this.lastPixel[0],
      this.lastPixel[1],
      x,
      y,
      this.brushRadius,
      this.erasing,
    );
    this.lastPixel = [x, y];
    if (changed > 0) this.afterPaint();
  }

  private pointerUp(): void {
    this.drawing = false;
    this.panning = false;
    this.lastClient = null;
    this.lastPixel = null;
  }

  private wheel(e: WheelEvent): void {
    e.preventDefault();
    const rect = this.canvas.getBoundingClientRect();
    const px = (e.clientX - rect.left - this.offsetX) / this.scale;
    const py = (e.clientY - rect.top - this.offsetY) / this.scale;
    const factor = e.deltaY < 0 ? 1.25 : 0.8;
    const next = Math.min(64, Math.max(0.5, this.scale * factor));
    this.offsetX += px * (this.scale - next);
    this.offsetY += py * (this.scale - next);
    this.scale = next;
    this.render();
  }

  private afterPaint(): void {
    this.refreshOverlay();
    this.render();
    this.onChange?.();
  }

  clear(): void {
    this.state.clear();
    this.afterPaint();
  }

  loadPainted(): void {
    this.refreshOverlay();
    this.render();
  }

  private refreshOverlay(): void {
    const { width, height } = this.state;
    const data = this.overlayCtx.createImageData(width, height);
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const o = (y * width + x) * 4;
        if (this.state.isSpecular(x, y)) {
          data.data.set(SR_TINT, o);
        } else if (this.state.isPainted(x, y)) {
          data.data.set(PAINT_TINT, o);
        }
      }
    }
    this.overlayCtx.putImageData(data, 0, 0);
  }

  render(): void {
    this.ctx.save();
    this.ctx.fillStyle = "#1d1f24";
    this.ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    this.ctx.imageSmoothingEnabled = false;
    this.ctx.translate(this.offsetX, this.offsetY);
    this.ctx.scale(this.scale, this.scale);
    this.ctx.drawImage(this.image, 0, 0);
    this.ctx.drawImage(this.overlay, 0, 0);
    this.ctx.restore();
  }
}
