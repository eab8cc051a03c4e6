import { ViewTransform, imageToScreen } from "./transform.js";
import { Box, CLASS_PALETTE, GridLines } from "./types.js";

/**
 * The slice of CanvasRenderingContext2D the renderer uses; tests pass a
 * recording stub instead of a real canvas.
 */
export interface Canvas2DLike {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  setLineDash(segments: number[]): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
}

/** Draw one box overlay; screen coords are exactly transform(label). */
export function drawBox(ctx: Canvas2DLike, t: ViewTransform, box: Box,
                        selected = false): void {
  const style = CLASS_PALETTE[box.cls];
  const [sx, sy] = imageToScreen(t, box.x1, box.y1);
  const w = (box.x2 - box.x1) * t.scale;
  const h = (box.y2 - box.y1) * t.scale;
  ctx.strokeStyle = style.color;
  ctx.lineWidth = selected ? 3 : 1.5;
  ctx.setLineDash(style.dashed ? [6, 4] : []);
  ctx.strokeRect(sx, sy, w, h);
  ctx.setLineDash([]);
}

export function drawBoxes(ctx: Canvas2DLike, t: ViewTransform, boxes: Box[],
                          selected: string | null = null): void {
  for (const box of boxes) {
    drawBox(ctx, t, box, box.annId === selected);
  }
}

/** Survey-grid overlay: vertical/horizontal lines across the patch. */
export function drawGrid(ctx: Canvas2DLike, t: ViewTransform, grid: GridLines,
                         patchSize: number): void {
  ctx.strokeStyle = "rgba(255,80,80,0.7)";
  ctx.lineWidth = 1;
  ctx.setLineDash([2, 4]);
  ctx.beginPath();
  for (const x of grid.x_lines) {
    const [sx, sy0] = imageToScreen(t, x, 0);
    const [, sy1] = imageToScreen(t, x, patchSize);
    ctx.moveTo(sx, sy0);
    ctx.lineTo(sx, sy1);
  }
  for (const y of grid.y_lines) {
    const [sx0, sy] = imageToScreen(t, 0, y);
    const [sx1] = imageToScreen(t, patchSize, y);
    ctx.moveTo(sx0, sy);
    ctx.lineTo(sx1, sy);
  }
  ctx.stroke();
  ctx.setLineDash([]);
}
