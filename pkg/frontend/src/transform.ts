/** Pan/zoom between patch (image) coordinates and canvas pixels. */
export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export const IDENTITY: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };

export function imageToScreen(t: ViewTransform, x: number, y: number): [number, number] {
  return [x * t.scale + t.offsetX, y * t.scale + t.offsetY];
}

export function screenToImage(t: ViewTransform, sx: number, sy: number): [number, number] {
  return [(sx - t.offsetX) / t.scale, (sy - t.offsetY) / t.scale];
}

export function pan(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { scale: t.scale, offsetX: t.offsetX + dx, offsetY: t.offsetY + dy };
}

/** Zoom by `factor` keeping the screen point (sx, sy) fixed. */
export function zoomAt(
  t: ViewTransform, sx: number, sy: number, factor: number,
  minScale = 0.25, maxScale = 32,
): ViewTransform {
  const scale = Math.min(maxScale, Math.max(minScale, t.scale * factor));
  const applied = scale / t.scale;
  return {
    scale,
    offsetX: sx - (sx - t.offsetX) * applied,
    offsetY: sy - (sy - t.offsetY) * applied,
  };
}

/** Transform that letterboxes a patch into a canvas with a margin. */
export function fitPatch(patchSize: number, canvasW: number, canvasH: number,
                         margin = 16): ViewTransform {
  const scale = Math.min(
    (canvasW - 2 * margin) / patchSize,
    (canvasH - 2 * margin) / patchSize,
  );
  return {
    scale,
    offsetX: (canvasW - patchSize * scale) / 2,
    offsetY: (canvasH - patchSize * scale) / 2,
  };
}
