import { describe, expect, it } from "vitest";

import { Canvas2DLike, drawBoxes, drawGrid } from "../src/render.js";
import { Box } from "../src/types.js";

interface RectCall {
  x: number;
  y: number;
  w: number;
  h: number;
  style: string;
  dash: number[];
}

class RecordingCtx implements Canvas2DLike {
  strokeStyle: string = "";
  lineWidth = 1;
  rects: RectCall[] = [];
  lines: [number, number, number, number][] = [];
  private dash: number[] = [];
  private path: [number, number][] = [];

  setLineDash(segments: number[]): void {
    this.dash = segments;
  }

  strokeRect(x: number, y: number, w: number, h: number): void {
    this.rects.push({ x, y, w, h, style: String(this.strokeStyle), dash: [...this.dash] });
  }

  beginPath(): void {
    this.path = [];
  }

  moveTo(x: number, y: number): void {
    this.path.push([x, y]);
  }

  lineTo(x: number, y: number): void {
    const [sx, sy] = this.path[this.path.length - 1];
    this.lines.push([sx, sy, x, y]);
    this.path.push([x, y]);
  }

  stroke(): void {}
}

const FIXTURE: Box[] = [
  { annId: "a", cls: 0, x1: 10, y1: 20, x2: 30, y2: 40 },
  { annId: "b", cls: 1, x1: 50, y1: 60, x2: 74, y2: 72 },
  { annId: "c", cls: 2, x1: 100, y1: 5, x2: 140, y2: 25 },
];

describe("box overlays", () => {
  it("renders the 3-box fixture at exactly transform(label) coordinates", () => {
    const ctx = new RecordingCtx();
    const t = { scale: 2, offsetX: 5, offsetY: 7 };
    drawBoxes(ctx, t, FIXTURE);
    expect(ctx.rects).toHaveLength(3);
    const [a, b, c] = ctx.rects;
    // screen = label * scale + offset, width/height scale linearly
    expect([a.x, a.y, a.w, a.h]).toEqual([25, 47, 40, 40]);
    expect([b.x, b.y, b.w, b.h]).toEqual([105, 127, 48, 24]);
    expect([c.x, c.y, c.w, c.h]).toEqual([205, 17, 80, 40]);
  });

  it("identity transform reproduces label coordinates verbatim", () => {
    const ctx = new RecordingCtx();
    drawBoxes(ctx, { scale: 1, offsetX: 0, offsetY: 0 }, FIXTURE);
    expect(ctx.rects.map((r) => [r.x, r.y, r.w, r.h])).toEqual([
      [10, 20, 20, 20],
      [50, 60, 24, 12],
      [100, 5, 40, 20],
    ]);
  });

  it("uses a distinct color per class and dashes only the uncertain class", () => {
    const ctx = new RecordingCtx();
    drawBoxes(ctx, { scale: 1, offsetX: 0, offsetY: 0 }, FIXTURE);
    const styles = ctx.rects.map((r) => r.style);
    expect(new Set(styles).size).toBe(3);
    expect(ctx.rects[0].dash).toEqual([]);
    expect(ctx.rects[1].dash).toEqual([6, 4]);
    expect(ctx.rects[2].dash).toEqual([]);
  });

  it("widens the stroke for the selected box", () => {
    const ctx = new RecordingCtx();
    const widths: number[] = [];
    const orig = ctx.strokeRect.bind(ctx);
    ctx.strokeRect = (x, y, w, h) => {
      widths.push(ctx.lineWidth);
      orig(x, y, w, h);
    };
    drawBoxes(ctx, { scale: 1, offsetX: 0, offsetY: 0 }, FIXTURE, "b");
    expect(widths).toEqual([1.5, 3, 1.5]);
  });
});

describe("grid overlay", () => {
  it("draws full-height/width lines at transformed positions", () => {
    const ctx = new RecordingCtx();
    const grid = { cell_m: 250, spacing_px: 100, x_lines: [80, 180], y_lines: [40] };
    drawGrid(ctx, { scale: 2, offsetX: 10, offsetY: 0 }, grid, 320);
    expect(ctx.lines).toEqual([
      [170, 0, 170, 640],
      [370, 0, 370, 640],
      [10, 80, 650, 80],
    ]);
  });
});
