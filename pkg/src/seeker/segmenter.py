"""Promptable-segmentation backends.

Three implementations of the same ``segment(request) -> InstanceMask``
contract: fixture playback for tests, a synthetic connected-component
backend (which deliberately merges touching objects, the failure mode the
overlap resolver exists for), and a child-process backend speaking a
newline-delimited JSON protocol to a real model sidecar.
"""
from __future__ import annotations

import json
import math
import os
import select
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

from seeker import kernels
from seeker.annotations import ClassLabel, LabeledBox, PointAnnotation

TIMEOUT_ENV = "SEEKER_BACKEND_TIMEOUT_MS"
DEFAULT_TIMEOUT_MS = 30000

# Foreground/background separation of the synthetic scenes: generator keeps
# background strictly below and objects strictly above this value.
SYNTH_THRESHOLD = 128
_CONN8 = np.ones((3, 3), dtype=bool)


class BackendError(RuntimeError):
    """Segmentation failure, tagged with the request that caused it."""

    def __init__(self, message: str, patch_id: str = "", ann_id: str = ""):
        tag = f" [patch={patch_id} ann={ann_id}]" if patch_id or ann_id else ""
        super().__init__(message + tag)
        self.patch_id = patch_id
        self.ann_id = ann_id


@dataclass
class SegmentRequest:
    patch_id: str
    ann_id: str
    image: "np.ndarray | str"  # patch pixels, or a path for process backends
    point: tuple[float, float]
    box: tuple[float, float, float, float]

    def validate(self, size: int | None = None) -> None:
        x, y = self.point
        x1, y1, x2, y2 = self.box
        if not (x1 <= x <= x2 and y1 <= y <= y2):
            raise BackendError(f"point ({x}, {y}) outside prompt box {self.box}",
                               self.patch_id, self.ann_id)
        if size is None and isinstance(self.image, np.ndarray):
            size = max(self.image.shape)
        if size is not None and not (x1 >= 0 and y1 >= 0 and x2 <= size and y2 <= size):
            raise BackendError(f"prompt box {self.box} outside patch bounds",
                               self.patch_id, self.ann_id)


@dataclass
class InstanceMask:
    ann_id: str
    bits: np.ndarray  # 2-D bool, patch dims
    score: float = 1.0

    def __post_init__(self) -> None:
        if self.bits.ndim != 2:
            raise ValueError("mask must be 2-D")
        if self.bits.dtype != bool:
            self.bits = self.bits.astype(bool)
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


class SegmentBackend(Protocol):
    def segment(self, req: SegmentRequest) -> InstanceMask: ...


class FixtureBackend:
    """Pure playback: masks keyed by (patch_id, ann_id); unknown key errors."""

    def __init__(self, masks: dict[tuple[str, str], InstanceMask] | None = None):
        self._masks = dict(masks or {})

    def add(self, patch_id: str, mask: InstanceMask) -> None:
        self._masks[(patch_id, mask.ann_id)] = mask

    def segment(self, req: SegmentRequest) -> InstanceMask:
        key = (req.patch_id, req.ann_id)
        if key not in self._masks:
            raise BackendError("no fixture mask for request", req.patch_id, req.ann_id)
        return self._masks[key]

    @classmethod
    def from_json(cls, path) -> "FixtureBackend":
        """Load ``{patch_id: {ann_id: {rle, width, height, score}}}``."""
        data = json.loads(Path(path).read_text())
        masks = {}
        for patch_id, entries in data.items():
            for ann_id, rec in entries.items():
                flat = kernels.rle_decode(np.asarray(rec["rle"], dtype=np.int64),
                                          rec["width"] * rec["height"])
                bits = flat.reshape(rec["height"], rec["width"]).astype(bool)
                masks[(patch_id, ann_id)] = InstanceMask(ann_id, bits, rec.get("score", 1.0))
        return cls(masks)


class SyntheticBackend:
    """Connected-component oracle over bright-on-dark synthetic patches.

    Returns the full 8-connected foreground component containing the prompt
    point, so touching objects come back as one merged mask exactly like a
    real promptable model with no separating water between bodies.
    """

    def __init__(self, threshold: int = SYNTH_THRESHOLD):
        self.threshold = threshold

    def segment(self, req: SegmentRequest) -> InstanceMask:
        if not isinstance(req.image, np.ndarray):
            raise BackendError("synthetic backend needs pixel arrays", req.patch_id, req.ann_id)
        req.validate()
        px, py = int(req.point[0]), int(req.point[1])
        h, w = req.image.shape
        if not (0 <= px < w and 0 <= py < h):
            raise BackendError(f"prompt point ({px}, {py}) outside patch", req.patch_id, req.ann_id)
        fg = req.image >= self.threshold
        if not fg[py, px]:
            # Keep the contract that the mask contains the prompt pixel.
            bits = np.zeros_like(fg)
            bits[py, px] = True
            return InstanceMask(req.ann_id, bits, 0.0)
        labels, _ = ndimage.label(fg, structure=_CONN8)
        return InstanceMask(req.ann_id, labels == labels[py, px], 1.0)


class ExternalBackend:
    """Child-process backend speaking newline-delimited JSON.

    Request:  {"patch_path": ..., "point": [x, y], "box": [x1, y1, x2, y2]}
    Reply:    {"rle": [...], "score": s} with row-major zero-first run
    lengths summing to width*height.  Any protocol violation kills the
    child and raises; requests are never retried.
    """

    def __init__(self, command: Sequence[str], patch_dir, timeout_ms: int | None = None):
        self.command = list(command)
        self.patch_dir = Path(patch_dir)
        if timeout_ms is None:
            timeout_ms = int(os.environ.get(TIMEOUT_ENV, DEFAULT_TIMEOUT_MS))
        self.timeout_ms = timeout_ms
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None

    def _ensure_child(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, cwd=self.patch_dir,
                stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1,
            )
        return self._proc

    def _read_reply(self, proc: subprocess.Popen) -> str:
        deadline = self.timeout_ms / 1000.0
        ready, _, _ = select.select([proc.stdout], [], [], deadline)
        if not ready:
            raise TimeoutError(f"no reply within {self.timeout_ms} ms")
        line = proc.stdout.readline()
        if not line:
            raise EOFError("backend process closed its output")
        return line

    def segment(self, req: SegmentRequest) -> InstanceMask:
        if isinstance(req.image, np.ndarray):
            raise BackendError("external backend needs a patch file path",
                               req.patch_id, req.ann_id)
        req.validate()
        patch_path = self.patch_dir / req.image
        try:
            from PIL import Image

            with Image.open(patch_path) as img:
                width, height = img.size
        except OSError as exc:
            raise BackendError(f"cannot read patch file: {exc}", req.patch_id, req.ann_id)

        message = json.dumps({
            "patch_path": str(req.image),
            "point": [req.point[0], req.point[1]],
            "box": list(req.box),
        })
        with self._lock:
            proc = self._ensure_child()
            try:
                proc.stdin.write(message + "\n")
                proc.stdin.flush()
                line = self._read_reply(proc)
            except (OSError, TimeoutError, EOFError) as exc:
                self.close()
                raise BackendError(f"backend process failed: {exc}",
                                   req.patch_id, req.ann_id) from exc
        try:
            reply = json.loads(line)
            runs = np.asarray(reply["rle"], dtype=np.int64)
            score = float(reply["score"])
        except (ValueError, KeyError, TypeError) as exc:
            self.close()
            raise BackendError(f"malformed reply: {exc}", req.patch_id, req.ann_id) from exc
        try:
            flat = kernels.rle_decode(runs, width * height)
        except ValueError as exc:
            self.close()
            raise BackendError(str(exc), req.patch_id, req.ann_id) from exc
        return InstanceMask(req.ann_id, flat.reshape(height, width).astype(bool), score)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def __enter__(self) -> "ExternalBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def make_backend(name: str, *, patch_dir=None, command: Sequence[str] | None = None,
                 fixture_path=None) -> SegmentBackend:
    if name == "synthetic":
        return SyntheticBackend()
    if name == "fixture":
        if fixture_path is None:
            raise ValueError("fixture backend needs --fixture <json>")
        return FixtureBackend.from_json(fixture_path)
    if name == "external":
        if not command:
            raise ValueError("external backend needs --backend-cmd")
        if patch_dir is None:
            raise ValueError("external backend needs the patch directory")
        return ExternalBackend(command, patch_dir)
    raise ValueError(f"unknown backend {name!r}")


# ---------------------------------------------------------------------------
# Synthetic scene generation

@dataclass
class SyntheticScene:
    image: np.ndarray  # uint8
    points: list[PointAnnotation]
    boxes: list[LabeledBox]  # tight ground-truth boxes
    masks: list[np.ndarray] = field(default_factory=list)  # per-object bool masks


# Semi-axis ranges in pixels, loosely sized to adult bodies at 0.3 m GSD.
_AXIS_RANGES = {
    ClassLabel.CERTAIN_WHALE: ((5.0, 9.0), (2.0, 3.5)),
    ClassLabel.UNCERTAIN_WHALE: ((5.0, 9.0), (2.0, 3.5)),
    ClassLabel.HARP_SEAL: ((2.5, 4.0), (1.6, 2.6)),
}


def _ellipse_mask(size: int, cx: float, cy: float, a: float, b: float,
                  theta: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    dx = (xx + 0.5) - cx
    dy = (yy + 0.5) - cy
    ct, st = math.cos(theta), math.sin(theta)
    u = (dx * ct + dy * st) / a
    v = (-dx * st + dy * ct) / b
    return u * u + v * v <= 1.0


def _radius_along(a: float, b: float, theta: float, phi: float) -> float:
    """Distance from center to the ellipse boundary along direction phi."""
    psi = phi - theta
    return (a * b) / math.hypot(b * math.cos(psi), a * math.sin(psi))


def generate_synthetic_scene(seed: int, n_objects: int, size: int = 320,
                             class_mix: dict[ClassLabel, float] | None = None,
                             touch_probability: float = 0.0,
                             scene_id: str | None = None,
                             max_attempts: int = 200) -> SyntheticScene:
    """Bright ellipses on a noisy dark background, with known ground truth.

    Deterministic per seed.  With ``touch_probability`` an object is placed
    tangent-overlapping a previous one so its foreground component merges
    with the neighbor.  Points sit at ellipse centers; ground-truth boxes
    are the tight bounds of each rasterized ellipse.
    """
    if size < 32:
        raise ValueError("size must be >= 32")
    if n_objects < 0:
        raise ValueError("n_objects must be >= 0")
    rng = np.random.default_rng(seed)
    scene_id = scene_id or f"synth{seed}"
    image = np.clip(rng.normal(32.0, 7.0, (size, size)), 0, 90).astype(np.uint8)

    mix = class_mix or {c: 1 / 3 for c in ClassLabel}
    classes = sorted(mix, key=int)
    probs = np.array([mix[c] for c in classes], dtype=float)
    probs = probs / probs.sum()

    occupied = np.zeros((size, size), dtype=bool)
    placed: list[tuple[float, float, float, float, float]] = []  # cx, cy, a, b, theta
    points, boxes, masks = [], [], []

    for i in range(n_objects):
        cls = classes[int(rng.choice(len(classes), p=probs))]
        (a_lo, a_hi), (b_lo, b_hi) = _AXIS_RANGES[cls]
        mask = None
        for _ in range(max_attempts):
            a = float(rng.uniform(a_lo, a_hi))
            b = float(rng.uniform(b_lo, b_hi))
            theta = float(rng.uniform(0.0, math.pi))
            touch = bool(placed) and rng.random() < touch_probability
            if touch:
                j = int(rng.integers(len(placed)))
                ox, oy, oa, ob, otheta = placed[j]
                phi = float(rng.uniform(0.0, 2 * math.pi))
                gap = _radius_along(oa, ob, otheta, phi) + _radius_along(a, b, theta, phi + math.pi)
                dist = gap * float(rng.uniform(0.86, 0.97))
                cx, cy = ox + dist * math.cos(phi), oy + dist * math.sin(phi)
            else:
                margin = a + 2.0
                if size - margin <= margin:
                    continue
                cx = float(rng.uniform(margin, size - margin))
                cy = float(rng.uniform(margin, size - margin))
            if not (a + 1 <= cx <= size - a - 1 and a + 1 <= cy <= size - a - 1):
                continue
            cand = _ellipse_mask(size, cx, cy, a, b, theta)
            if cand.sum() < 4 or not cand[int(cy), int(cx)]:
                continue
            grown = ndimage.binary_dilation(cand, structure=_CONN8)
            overlap = bool((grown & occupied).any())
            if touch != overlap:
                continue  # touch placements must merge, isolated ones must not
            mask = cand
            break
        if mask is None:
            raise ValueError(f"cannot place object {i} within {max_attempts} attempts "
                             f"(seed {seed}, n={n_objects}, size {size})")

        brightness = int(rng.integers(170, 240))
        image[mask] = np.clip(
            brightness + rng.integers(-8, 9, int(mask.sum())), 160, 255
        ).astype(np.uint8)
        occupied |= mask
        placed.append((cx, cy, a, b, theta))

        ys, xs = np.nonzero(mask)
        ann_id = f"{scene_id}:obj{i:03d}"  # unique across scenes, not just within
        points.append(PointAnnotation(ann_id, scene_id, cx, cy, cls))
        boxes.append(LabeledBox(ann_id, cls, (float(xs.min()), float(ys.min()),
                                              float(xs.max() + 1), float(ys.max() + 1))))
        masks.append(mask)

    return SyntheticScene(image, points, boxes, masks)
