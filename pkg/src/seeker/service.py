"""HTTP review service: browse patches, refine labels, track corrections.

Revisions are optimistic-concurrency files: the auto labels are revision 0
and immutable; every accepted PUT appends ``<patch>.rev<k>.txt`` (+ ``.ids``
and a small meta JSON) under the revisions directory.  Writes are
serialized per patch; a stale base_revision gets a 409.
"""
from __future__ import annotations

import datetime
import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, PlainTextResponse
from pydantic import BaseModel, Field

from seeker.annotations import ClassLabel, LabeledBox, parse_yolo_labels, write_yolo_labels
from seeker.dataset import merge_refinements
from seeker.raster import PatchRef, patch_filename, px_from_meters, read_manifest

_REV_RE = re.compile(r"\.rev(\d+)\.txt$")


@dataclass
class LabelRevision:
    patch_id: str
    revision: int
    boxes: list[LabeledBox]
    author: str = ""
    timestamp: str = ""


class LabelStore:
    """Filesystem-backed label revisions for a labeled patch set."""

    def __init__(self, manifest_path, images_dir, labels_dir, revisions_dir=None):
        self.images_dir = Path(images_dir)
        self.labels_dir = Path(labels_dir)
        self.revisions_dir = Path(revisions_dir) if revisions_dir \
            else self.labels_dir.parent / "revisions"
        self.revisions_dir.mkdir(parents=True, exist_ok=True)
        self.patches: dict[str, PatchRef] = {
            ref.patch_id: ref for ref in read_manifest(manifest_path)}
        self._locks: dict[str, threading.Lock] = {
            pid: threading.Lock() for pid in self.patches}

    def _ref(self, patch_id: str) -> PatchRef:
        ref = self.patches.get(patch_id)
        if ref is None:
            raise KeyError(patch_id)
        return ref

    def image_path(self, patch_id: str) -> Path:
        return self.images_dir / patch_filename(self._ref(patch_id))

    def latest_revision(self, patch_id: str) -> int:
        self._ref(patch_id)
        best = 0
        for path in self.revisions_dir.glob(f"{patch_id}.rev*.txt"):
            m = _REV_RE.search(path.name)
            if m:
                best = max(best, int(m.group(1)))
        return best

    def _label_paths(self, patch_id: str, revision: int) -> tuple[Path, Path]:
        if revision == 0:
            base = self.labels_dir / f"{patch_id}.txt"
        else:
            base = self.revisions_dir / f"{patch_id}.rev{revision}.txt"
        return base, base.with_suffix(".ids")

    def load_labels(self, patch_id: str, revision: int | None = None) -> LabelRevision:
        ref = self._ref(patch_id)
        rev = self.latest_revision(patch_id) if revision is None else revision
        label_path, ids_path = self._label_paths(patch_id, rev)
        if not label_path.exists():
            boxes: list[LabeledBox] = []
        else:
            ids_text = ids_path.read_text() if ids_path.exists() else None
            boxes = parse_yolo_labels(label_path.read_text(), ref.size, ids_text)
        return LabelRevision(patch_id, rev, boxes)

    def save_revision(self, patch_id: str, base_revision: int,
                      boxes: list[LabeledBox], author: str = "") -> int:
        """Append a new revision; raises RevisionConflict on a stale base."""
        ref = self._ref(patch_id)
        for b in boxes:
            x1, y1, x2, y2 = b.box
            if not (0 <= x1 < x2 <= ref.size and 0 <= y1 < y2 <= ref.size):
                raise ValueError(f"box {b.ann_id!r} outside patch bounds: {b.box}")
            if b.area < 1.0:
                raise ValueError(f"box {b.ann_id!r} area below 1 px^2")
        with self._locks[patch_id]:
            current = self.latest_revision(patch_id)
            if base_revision != current:
                raise RevisionConflict(current)
            new_rev = current + 1
            label_path, ids_path = self._label_paths(patch_id, new_rev)
            label_text, ids_text = write_yolo_labels(boxes, ref.size)
            tmp = label_path.with_suffix(".tmp")
            tmp.write_text(label_text)
            ids_path.write_text(ids_text)
            meta = {"author": author,
                    "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}
            label_path.with_suffix(".meta.json").write_text(json.dumps(meta))
            tmp.rename(label_path)
            return new_rev

    def correction_stats(self):
        auto = {}
        refined = {}
        for pid in self.patches:
            auto[pid] = self.load_labels(pid, revision=0).boxes
            latest = self.latest_revision(pid)
            if latest > 0:
                refined[pid] = self.load_labels(pid, latest).boxes
        _, stats = merge_refinements(auto, refined)
        return stats

    def grid_lines(self, patch_id: str, cell_m: float) -> dict:
        """Scene-aligned square grid restricted to the patch, local coords."""
        ref = self._ref(patch_id)
        if cell_m <= 0:
            raise ValueError("cell_m must be > 0")
        spacing = px_from_meters(cell_m, ref.gsd)

        def lines(origin: int) -> list[int]:
            first = -(-origin // spacing)  # ceil division
            out = []
            k = first
            while k * spacing <= origin + ref.size:
                out.append(k * spacing - origin)
                k += 1
            return out

        return {"cell_m": cell_m, "spacing_px": spacing,
                "x_lines": lines(ref.x), "y_lines": lines(ref.y)}


class RevisionConflict(Exception):
    def __init__(self, current: int):
        super().__init__(f"stale base_revision; current revision is {current}")
        self.current = current


class BoxPayload(BaseModel):
    ann_id: str | None = None
    cls: int = Field(alias="class")
    box: tuple[float, float, float, float]

    model_config = {"populate_by_name": True}


class PutLabelsPayload(BaseModel):
    base_revision: int
    boxes: list[BoxPayload]
    author: str = ""


def _box_json(b: LabeledBox) -> dict:
    return {"ann_id": b.ann_id, "class": int(b.cls), "box": list(b.box)}


def create_app(store: LabelStore, static_dir=None) -> FastAPI:
    app = FastAPI(title="label review service")

    @app.get("/api/patches")
    def list_patches():
        out = []
        for pid in sorted(store.patches):
            rev = store.latest_revision(pid)
            out.append({"patch_id": pid,
                        "n_boxes": len(store.load_labels(pid, rev).boxes),
                        "reviewed": rev > 0})
        return out

    @app.get("/api/patches/{patch_id}/image")
    def patch_image(patch_id: str):
        try:
            path = store.image_path(patch_id)
        except KeyError:
            raise HTTPException(404, f"unknown patch {patch_id!r}")
        if not path.exists():
            raise HTTPException(404, f"no image for patch {patch_id!r}")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/patches/{patch_id}/labels")
    def get_labels(patch_id: str):
        try:
            rev = store.load_labels(patch_id)
        except KeyError:
            raise HTTPException(404, f"unknown patch {patch_id!r}")
        return {"revision": rev.revision, "boxes": [_box_json(b) for b in rev.boxes]}

    @app.put("/api/patches/{patch_id}/labels")
    def put_labels(patch_id: str, payload: PutLabelsPayload):
        if patch_id not in store.patches:
            raise HTTPException(404, f"unknown patch {patch_id!r}")
        try:
            boxes = []
            for i, bp in enumerate(payload.boxes):
                ann_id = bp.ann_id or f"new{payload.base_revision + 1}_{i}"
                boxes.append(LabeledBox(ann_id, ClassLabel(bp.cls), tuple(bp.box)))
            new_rev = store.save_revision(patch_id, payload.base_revision,
                                          boxes, payload.author)
        except RevisionConflict as exc:
            raise HTTPException(409, str(exc))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return {"revision": new_rev}

    @app.get("/api/stats/corrections")
    def corrections():
        return store.correction_stats().to_dict()

    @app.get("/api/patches/{patch_id}/grid")
    def grid(patch_id: str, cell_m: float = Query(250.0)):
        try:
            return store.grid_lines(patch_id, cell_m)
        except KeyError:
            raise HTTPException(404, f"unknown patch {patch_id!r}")
        except ValueError as exc:
            raise HTTPException(400, str(exc))

    @app.get("/health", response_class=PlainTextResponse)
    def health():
        return "ok"

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
