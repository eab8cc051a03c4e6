export type ClassId = 0 | 1 | 2;

export const CLASS_NAMES: Record<ClassId, string> = {
  0: "certain_whale",
  1: "uncertain_whale",
  2: "harp_seal",
};

export interface ClassStyle {
  color: string;
  dashed: boolean;
}

// Uncertain whales render dashed so reviewers can tell the two whale
// classes apart at a glance.
export const CLASS_PALETTE: Record<ClassId, ClassStyle> = {
  0: { color: "#2ecc71", dashed: false },
  1: { color: "#f1c40f", dashed: true },
  2: { color: "#3498db", dashed: false },
};

export function cycleClass(cls: ClassId): ClassId {
  return ((cls + 1) % 3) as ClassId;
}

/** Half-open box in patch pixel coordinates. */
export interface Box {
  annId: string;
  cls: ClassId;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface PatchSummary {
  patch_id: string;
  n_boxes: number;
  reviewed: boolean;
}

export interface LabelSet {
  revision: number;
  boxes: Box[];
}

export interface GridLines {
  cell_m: number;
  spacing_px: number;
  x_lines: number[];
  y_lines: number[];
}

export function boxArea(b: Box): number {
  return Math.max(0, b.x2 - b.x1) * Math.max(0, b.y2 - b.y1);
}

export function boxValid(b: Box, patchSize: number): boolean {
  return (
    b.x1 >= 0 && b.y1 >= 0 && b.x2 <= patchSize && b.y2 <= patchSize &&
    b.x1 < b.x2 && b.y1 < b.y2 && boxArea(b) >= 1
  );
}
