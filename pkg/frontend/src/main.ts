import { ApiError, ConflictError, ReviewApi } from "./api.js";
import {
  Corner, EditorState, addBox, deleteBox, hitTest, invalidBoxes, markConflict,
  markSaved, moveBox, newEditor, reapplyOntoRevision, reclassBox, resizeBox,
  selectBox,
} from "./state.js";
import { ViewTransform, fitPatch, pan, screenToImage, zoomAt } from "./transform.js";
import { drawBoxes, drawGrid } from "./render.js";
import { CLASS_NAMES, ClassId, GridLines, PatchSummary } from "./types.js";

const PATCH_SIZE_FALLBACK = 320;
const HANDLE_PX = 8;

interface App {
  api: ReviewApi;
  patches: PatchSummary[];
  editor: EditorState | null;
  transform: ViewTransform;
  image: HTMLImageElement | null;
  grid: GridLines | null;
  showGrid: boolean;
  drawClass: ClassId;
}

const app: App = {
  api: new ReviewApi(""),
  patches: [],
  editor: null,
  transform: { scale: 1, offsetX: 0, offsetY: 0 },
  image: null,
  grid: null,
  showGrid: false,
  drawClass: 0,
};

const canvas = document.getElementById("patch-canvas") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const patchList = document.getElementById("patch-list")!;
const saveButton = document.getElementById("save") as HTMLButtonElement;
const banner = document.getElementById("banner")!;
const statsPanel = document.getElementById("stats")!;
const conflictBox = document.getElementById("conflict")!;

function showBanner(message: string, retry: (() => void) | null): void {
  banner.textContent = message;
  banner.classList.remove("hidden");
  if (retry) {
    const button = document.createElement("button");
    button.textContent = "retry";
    button.onclick = () => {
      banner.classList.add("hidden");
      retry();
    };
    banner.append(" ");
    banner.appendChild(button);
  }
}

function clearBanner(): void {
  banner.classList.add("hidden");
  banner.textContent = "";
}

function redraw(): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (app.image && app.editor) {
    ctx.save();
    ctx.imageSmoothingEnabled = false;
    ctx.translate(app.transform.offsetX, app.transform.offsetY);
    ctx.scale(app.transform.scale, app.transform.scale);
    ctx.drawImage(app.image, 0, 0);
    ctx.restore();
    if (app.showGrid && app.grid) {
      drawGrid(ctx, app.transform, app.grid, app.editor.patchSize);
    }
    drawBoxes(ctx, app.transform, app.editor.boxes, app.editor.selected);
  }
  saveButton.disabled = !app.editor?.dirty || invalidBoxes(app.editor!).length > 0;
  conflictBox.classList.toggle("hidden", app.editor?.conflict == null);
}

function renderPatchList(): void {
  patchList.innerHTML = "";
  for (const p of app.patches) {
    const item = document.createElement("li");
    item.textContent = `${p.patch_id} (${p.n_boxes})${p.reviewed ? " *" : ""}`;
    item.classList.toggle("active", app.editor?.patchId === p.patch_id);
    item.onclick = () => void openPatch(p.patch_id);
    patchList.appendChild(item);
  }
}

async function refreshStats(): Promise<void> {
  try {
    const stats = await app.api.corrections();
    const rows = Object.entries(stats).map(([cls, s]) =>
      `<tr><td>${cls}</td><td>${s.n_corrected}/${s.n_auto}</td>` +
      `<td>${(s.rate * 100).toFixed(1)}%</td></tr>`);
    statsPanel.innerHTML =
      "<table><tr><th>class</th><th>corrected</th><th>rate</th></tr>" +
      rows.join("") + "</table>";
  } catch {
    statsPanel.textContent = "stats unavailable";
  }
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`cannot load ${url}`));
    img.src = url;
  });
}

async function openPatch(patchId: string): Promise<void> {
  if (app.editor?.dirty &&
      !window.confirm("Discard unsaved edits on this patch?")) {
    return;
  }
  try {
    const labels = await app.api.getLabels(patchId);
    const image = await loadImage(app.api.imageUrl(patchId));
    const size = image.naturalWidth || PATCH_SIZE_FALLBACK;
    app.image = image;
    app.editor = newEditor(patchId, size, labels.revision, labels.boxes);
    app.transform = fitPatch(size, canvas.width, canvas.height);
    app.grid = null;
    try {
      app.grid = await app.api.grid(patchId);
    } catch {
      app.grid = null; // grid overlay is optional
    }
    clearBanner();
  } catch (err) {
    showBanner(`load failed: ${(err as Error).message}`, () => void openPatch(patchId));
    return;
  }
  renderPatchList();
  redraw();
}

async function save(): Promise<void> {
  const editor = app.editor;
  if (!editor || !editor.dirty) return;
  if (invalidBoxes(editor).length > 0) {
    showBanner("a box has zero area or exceeds the patch; fix it before saving", null);
    return;
  }
  try {
    const revision = await app.api.putLabels(
      editor.patchId, editor.baseRevision, editor.boxes);
    app.editor = markSaved(editor, revision);
    clearBanner();
    await Promise.all([refreshPatches(), refreshStats()]);
  } catch (err) {
    if (err instanceof ConflictError) {
      const latest = await app.api.getLabels(editor.patchId);
      app.editor = markConflict(editor, latest.revision);
    } else if (err instanceof ApiError && err.status === 400) {
      showBanner(`rejected: ${err.message}`, null);
    } else {
      showBanner(`save failed: ${(err as Error).message}`, () => void save());
    }
  }
  renderPatchList();
  redraw();
}

async function refreshPatches(): Promise<void> {
  app.patches = await app.api.listPatches();
  renderPatchList();
}

function currentIndex(): number {
  return app.patches.findIndex((p) => p.patch_id === app.editor?.patchId);
}

function openNeighbor(delta: number): void {
  if (app.patches.length === 0) return;
  const index = (currentIndex() + delta + app.patches.length) % app.patches.length;
  void openPatch(app.patches[index].patch_id);
}

// --- canvas interaction -----------------------------------------------------

type DragMode =
  | { kind: "none" }
  | { kind: "pan"; lastX: number; lastY: number }
  | { kind: "move"; annId: string; lastX: number; lastY: number }
  | { kind: "resize"; annId: string; corner: Corner }
  | { kind: "draw"; startX: number; startY: number };

let drag: DragMode = { kind: "none" };

function cornerAt(sx: number, sy: number): { annId: string; corner: Corner } | null {
  const editor = app.editor;
  if (!editor || !editor.selected) return null;
  const box = editor.boxes.find((b) => b.annId === editor.selected);
  if (!box) return null;
  const corners: [Corner, number, number][] = [
    ["nw", box.x1, box.y1], ["ne", box.x2, box.y1],
    ["sw", box.x1, box.y2], ["se", box.x2, box.y2],
  ];
  for (const [corner, x, y] of corners) {
    const [cx, cy] = [x * app.transform.scale + app.transform.offsetX,
                      y * app.transform.scale + app.transform.offsetY];
    if (Math.abs(cx - sx) <= HANDLE_PX && Math.abs(cy - sy) <= HANDLE_PX) {
      return { annId: box.annId, corner };
    }
  }
  return null;
}

canvas.addEventListener("mousedown", (ev) => {
  if (!app.editor) return;
  const [ix, iy] = screenToImage(app.transform, ev.offsetX, ev.offsetY);
  const handle = cornerAt(ev.offsetX, ev.offsetY);
  if (handle) {
    drag = { kind: "resize", ...handle };
    return;
  }
  if (ev.shiftKey) {
    drag = { kind: "draw", startX: ix, startY: iy };
    return;
  }
  const hit = hitTest(app.editor, ix, iy);
  if (hit) {
    app.editor = selectBox(app.editor, hit);
    drag = { kind: "move", annId: hit, lastX: ix, lastY: iy };
  } else {
    app.editor = selectBox(app.editor, null);
    drag = { kind: "pan", lastX: ev.offsetX, lastY: ev.offsetY };
  }
  redraw();
});

canvas.addEventListener("mousemove", (ev) => {
  if (!app.editor || drag.kind === "none") return;
  const [ix, iy] = screenToImage(app.transform, ev.offsetX, ev.offsetY);
  if (drag.kind === "pan") {
    app.transform = pan(app.transform, ev.offsetX - drag.lastX, ev.offsetY - drag.lastY);
    drag = { kind: "pan", lastX: ev.offsetX, lastY: ev.offsetY };
  } else if (drag.kind === "move") {
    app.editor = moveBox(app.editor, drag.annId, ix - drag.lastX, iy - drag.lastY);
    drag = { ...drag, lastX: ix, lastY: iy };
  } else if (drag.kind === "resize") {
    app.editor = resizeBox(app.editor, drag.annId, drag.corner, ix, iy);
  }
  redraw();
});

canvas.addEventListener("mouseup", (ev) => {
  if (app.editor && drag.kind === "draw") {
    const [ix, iy] = screenToImage(app.transform, ev.offsetX, ev.offsetY);
    app.editor = addBox(app.editor, app.drawClass, drag.startX, drag.startY, ix, iy);
  }
  drag = { kind: "none" };
  redraw();
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  app.transform = zoomAt(app.transform, ev.offsetX, ev.offsetY,
                         ev.deltaY < 0 ? 1.15 : 1 / 1.15);
  redraw();
});

window.addEventListener("keydown", (ev) => {
  if (!app.editor) return;
  if (ev.target instanceof HTMLInputElement) return;
  switch (ev.key) {
    case "c": // cycle class of the selected box
      if (app.editor.selected) {
        app.editor = reclassBox(app.editor, app.editor.selected);
      }
      break;
    case "Delete":
    case "Backspace":
      if (app.editor.selected) {
        app.editor = deleteBox(app.editor, app.editor.selected);
      }
      break;
    case "g":
      app.showGrid = !app.showGrid;
      break;
    case "n":
      openNeighbor(1);
      return;
    case "p":
      openNeighbor(-1);
      return;
    case "s":
      if (ev.ctrlKey || ev.metaKey) {
        ev.preventDefault();
        void save();
        return;
      }
      break;
    case "1":
    case "2":
    case "3":
      app.drawClass = (Number(ev.key) - 1) as ClassId;
      showBanner(`drawing class: ${CLASS_NAMES[app.drawClass]} (shift-drag to add)`, null);
      break;
    default:
      return;
  }
  redraw();
});

saveButton.addEventListener("click", () => void save());

document.getElementById("conflict-reapply")!.addEventListener("click", () => {
  if (app.editor?.conflict != null) {
    app.editor = reapplyOntoRevision(app.editor, app.editor.conflict);
    void save();
  }
});

document.getElementById("conflict-reload")!.addEventListener("click", () => {
  if (app.editor) {
    const pid = app.editor.patchId;
    app.editor = null;
    void openPatch(pid);
  }
});

async function start(): Promise<void> {
  try {
    await refreshPatches();
    await refreshStats();
    if (app.patches.length > 0) {
      await openPatch(app.patches[0].patch_id);
    }
  } catch (err) {
    showBanner(`cannot reach review service: ${(err as Error).message}`,
               () => void start());
  }
}

void start();
