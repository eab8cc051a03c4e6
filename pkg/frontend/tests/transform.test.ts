import { describe, expect, it } from "vitest";

import { fitPatch, imageToScreen, pan, screenToImage, zoomAt } from "../src/transform.js";

describe("view transform", () => {
  it("maps image to screen linearly", () => {
    const t = { scale: 2, offsetX: 5, offsetY: 7 };
    expect(imageToScreen(t, 10, 20)).toEqual([25, 47]);
  });

  it("screenToImage inverts imageToScreen", () => {
    const t = { scale: 1.75, offsetX: -12, offsetY: 30 };
    const [sx, sy] = imageToScreen(t, 123.4, 56.7);
    const [ix, iy] = screenToImage(t, sx, sy);
    expect(ix).toBeCloseTo(123.4, 10);
    expect(iy).toBeCloseTo(56.7, 10);
  });

  it("pan shifts offsets only", () => {
    const t = pan({ scale: 3, offsetX: 1, offsetY: 2 }, 10, -5);
    expect(t).toEqual({ scale: 3, offsetX: 11, offsetY: -3 });
  });

  it("zoomAt keeps the anchor point fixed", () => {
    const t0 = { scale: 1, offsetX: 0, offsetY: 0 };
    const t1 = zoomAt(t0, 100, 80, 2);
    expect(t1.scale).toBe(2);
    // the image point under (100, 80) stays under (100, 80)
    const [ix, iy] = screenToImage(t0, 100, 80);
    expect(imageToScreen(t1, ix, iy)).toEqual([100, 80]);
  });

  it("zoomAt clamps the scale range", () => {
    const t = zoomAt({ scale: 16, offsetX: 0, offsetY: 0 }, 0, 0, 1000);
    expect(t.scale).toBe(32);
  });

  it("fitPatch centers the patch", () => {
    const t = fitPatch(320, 900, 760, 16);
    const [x1, y1] = imageToScreen(t, 0, 0);
    const [x2, y2] = imageToScreen(t, 320, 320);
    expect(x1).toBeCloseTo(900 - x2, 6);
    expect(y1).toBeCloseTo(760 - y2, 6);
    expect(x2 - x1).toBeLessThanOrEqual(900 - 2 * 16 + 1e-9);
  });
});
