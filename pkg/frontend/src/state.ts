import { Box, ClassId, boxValid, cycleClass } from "./types.js";

/**
 * Patch-local editing state. All edits stay here until Save; the caller
 * owns pushing to the server and feeding results back.
 */
export interface EditorState {
  patchId: string;
  patchSize: number;
  baseRevision: number;
  boxes: Box[];
  selected: string | null;
  dirty: boolean;
  /** Set when a save hit a 409; holds the server's current revision. */
  conflict: number | null;
}

export function newEditor(patchId: string, patchSize: number,
                          revision: number, boxes: Box[]): EditorState {
  return {
    patchId,
    patchSize,
    baseRevision: revision,
    boxes: boxes.map((b) => ({ ...b })),
    selected: null,
    dirty: false,
    conflict: null,
  };
}

function withBoxes(state: EditorState, boxes: Box[]): EditorState {
  return { ...state, boxes, dirty: true };
}

export function selectBox(state: EditorState, annId: string | null): EditorState {
  if (annId !== null && !state.boxes.some((b) => b.annId === annId)) {
    return state;
  }
  return { ...state, selected: annId };
}

/** Topmost box whose region contains the image-space point. */
export function hitTest(state: EditorState, x: number, y: number): string | null {
  for (let i = state.boxes.length - 1; i >= 0; i--) {
    const b = state.boxes[i];
    if (x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2) {
      return b.annId;
    }
  }
  return null;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

export function moveBox(state: EditorState, annId: string,
                        dx: number, dy: number): EditorState {
  return withBoxes(state, state.boxes.map((b) => {
    if (b.annId !== annId) return b;
    const w = b.x2 - b.x1;
    const h = b.y2 - b.y1;
    const x1 = clamp(b.x1 + dx, 0, state.patchSize - w);
    const y1 = clamp(b.y1 + dy, 0, state.patchSize - h);
    return { ...b, x1, y1, x2: x1 + w, y2: y1 + h };
  }));
}

export type Corner = "nw" | "ne" | "sw" | "se";

/** Drag one corner to (x, y), keeping at least a 1x1 pixel box. */
export function resizeBox(state: EditorState, annId: string, corner: Corner,
                          x: number, y: number): EditorState {
  return withBoxes(state, state.boxes.map((b) => {
    if (b.annId !== annId) return b;
    const r = { ...b };
    const px = clamp(x, 0, state.patchSize);
    const py = clamp(y, 0, state.patchSize);
    if (corner === "nw" || corner === "sw") r.x1 = Math.min(px, r.x2 - 1);
    else r.x2 = Math.max(px, r.x1 + 1);
    if (corner === "nw" || corner === "ne") r.y1 = Math.min(py, r.y2 - 1);
    else r.y2 = Math.max(py, r.y1 + 1);
    return r;
  }));
}

export function deleteBox(state: EditorState, annId: string): EditorState {
  const next = withBoxes(state, state.boxes.filter((b) => b.annId !== annId));
  if (next.selected === annId) next.selected = null;
  return next;
}

export function addBox(state: EditorState, cls: ClassId,
                       x1: number, y1: number, x2: number, y2: number): EditorState {
  let n = state.boxes.length;
  let annId = `new${state.baseRevision + 1}_${n}`;
  while (state.boxes.some((b) => b.annId === annId)) {
    n += 1;
    annId = `new${state.baseRevision + 1}_${n}`;
  }
  const box: Box = {
    annId, cls,
    x1: Math.min(x1, x2), y1: Math.min(y1, y2),
    x2: Math.max(x1, x2), y2: Math.max(y1, y2),
  };
  if (!boxValid(box, state.patchSize)) {
    return state; // zero-area or out-of-bounds draws are dropped client-side
  }
  const next = withBoxes(state, [...state.boxes, box]);
  next.selected = annId;
  return next;
}

export function reclassBox(state: EditorState, annId: string): EditorState {
  return withBoxes(state, state.boxes.map((b) =>
    b.annId === annId ? { ...b, cls: cycleClass(b.cls) } : b));
}

export function invalidBoxes(state: EditorState): Box[] {
  return state.boxes.filter((b) => !boxValid(b, state.patchSize));
}

/** Successful save: the edited set becomes the new base. */
export function markSaved(state: EditorState, revision: number): EditorState {
  return { ...state, baseRevision: revision, dirty: false, conflict: null };
}

export function markConflict(state: EditorState, serverRevision: number): EditorState {
  return { ...state, conflict: serverRevision };
}

/** Keep local edits but rebase onto the server's revision (after a 409). */
export function reapplyOntoRevision(state: EditorState, serverRevision: number): EditorState {
  return { ...state, baseRevision: serverRevision, conflict: null, dirty: true };
}

/** Drop local edits in favor of the server's current label set. */
export function discardToServer(state: EditorState, revision: number,
                                boxes: Box[]): EditorState {
  return newEditor(state.patchId, state.patchSize, revision, boxes);
}
