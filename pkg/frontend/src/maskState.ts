/**
 * Pure mask-painting model, independent of the DOM.
 *
 * The painted (hidden) set is a boolean grid aligned with the image. The
 * brush is hard-edged: a pixel is either fully painted or untouched, never
 * partially covered, so the exported mask is strictly binary. Pixels the
 * service marked as specular can never be painted; strokes simply flow
 * around them.
 */

export const HIDDEN = 0;
export const KEEP = 255;

export class MaskState {
  readonly width: number;
  readonly height: number;
  /** 1 = painted (hidden); 0 = keep. */
  private readonly painted: Uint8Array;
  /** 1 = paintable; 0 = specular, locked. */
  private readonly paintable: Uint8Array;

  constructor(width: number, height: number, srMask: Uint8Array) {
    if (srMask.length !== width * height) {
      throw new Error(`SR mask length ${srMask.length} != ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.painted = new Uint8Array(width * height);
    this.paintable = srMask;
  }

  private index(x: number, y: number): number {
    return y * this.width + x;
  }

  inBounds(x: number, y: number): boolean {
    return x >= 0 && x < this.width && y >= 0 && y < this.height;
  }

  isPainted(x: number, y: number): boolean {
    return this.painted[this.index(x, y)] === 1;
  }

  isSpecular(x: number, y: number): boolean {
    return this.paintable[this.index(x, y)] === 0;
  }

  paintedCount(): number {
    let n = 0;
    for (const v of this.painted) n += v;
    return n;
  }

  /**
   * Stamp a hard-edged disc; radius 0 is a single pixel. Specular pixels
   * are skipped. Returns how many pixels changed.
   */
  stamp(cx: number, cy: number, radius: number, erase = false): number {
    const r = Math.max(0, radius);
    const r2 = r * r;
    const value = erase ? 0 : 1;
    let changed = 0;
    for (let y = Math.ceil(cy - r); y <= Math.floor(cy + r); y++) {
      for (let x = Math.ceil(cx - r); x <= Math.floor(cx + r); x++) {
        if (!this.inBounds(x, y)) continue;
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy > r2) continue;
        const i = this.index(x, y);
        if (!erase && this.paintable[i] === 0) continue;
        if (this.painted[i] !== value) {
          this.painted[i] = value;
          changed++;
        }
      }
    }
    return changed;
  }

  /** Stamp along the segment from (x0,y0) to (x1,y1) at 1px steps. */
  stroke(x0: number, y0: number, x1: number, y1: number, radius: number, erase = false): number {
    const steps = Math.max(1, Math.ceil(Math.hypot(x1 - x0, y1 - y0)));
    let changed = 0;
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      changed += this.stamp(x0 + t * (x1 - x0), y0 + t * (y1 - y0), radius, erase);
    }
    return changed;
  }

  clear(): void {
    this.painted.fill(0);
  }

  /** Flat indices of every painted pixel. */
  paintedIndices(): number[] {
    const out: number[] = [];
    for (let i = 0; i < this.painted.length; i++) {
      if (this.painted[i] === 1) out.push(i);
    }
    return out;
  }

  /** Export pixels in the service convention: 0 = hidden, 255 = keep. */
  toGrayPixels(): Uint8Array {
    const out = new Uint8Array(this.painted.length);
    for (let i = 0; i < this.painted.length; i++) {
      out[i] = this.painted[i] === 1 ? HIDDEN : KEEP;
    }
    return out;
  }

  /** Rebuild state from served mask pixels (strictly 0 or 255). */
  static fromGrayPixels(
    width: number,
    height: number,
    gray: Uint8Array,
    srMask: Uint8Array,
  ): MaskState {
    if (gray.length !== width * height) {
      throw new Error(`mask length ${gray.length} != ${width}x${height}`);
    }
    const state = new MaskState(width, height, srMask);
    for (let i = 0; i < gray.length; i++) {
      if (gray[i] === HIDDEN) {
        state.painted[i] = 1;
      } else if (gray[i] !== KEEP) {
        throw new Error(`mask pixel ${i} has value ${gray[i]}, expected 0 or 255`);
      }
    }
    return state;
  }
}
