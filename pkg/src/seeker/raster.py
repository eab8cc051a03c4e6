"""Scene loading, 16-to-8-bit conversion, tiling, and patch filtering.

Scenes are single-band grayscale rasters with a key=value sidecar carrying
scene_id, gsd (meters per pixel) and an optional 6-number affine
geotransform in GDAL order.  Patches are square uint8 crops named
``<scene_id>_<x>_<y>`` and listed in a CSV manifest.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

MANIFEST_FIELDS = ["patch_id", "scene_id", "x", "y", "size", "gsd"]

# Patch edge per platform GSD (meters per pixel), keeping ground coverage
# comparable across platforms.
DEFAULT_PATCH_SIZES = {0.3: 320, 0.46: 192}


@dataclass(frozen=True)
class GeoTransform:
    """Affine geo<->pixel mapping, GDAL coefficient order."""

    a: float  # x origin
    b: float  # pixel width
    c: float  # row rotation
    d: float  # y origin
    e: float  # column rotation
    f: float  # pixel height (typically negative)

    def pixel_to_geo(self, col: float, row: float) -> tuple[float, float]:
        return (self.a + col * self.b + row * self.c,
                self.d + col * self.e + row * self.f)

    def geo_to_pixel(self, gx: float, gy: float) -> tuple[float, float]:
        det = self.b * self.f - self.c * self.e
        if det == 0:
            raise ValueError("geotransform is singular")
        dx, dy = gx - self.a, gy - self.d
        col = (dx * self.f - dy * self.c) / det
        row = (dy * self.b - dx * self.e) / det
        return col, row


@dataclass
class SceneImage:
    scene_id: str
    gsd: float
    pixels: np.ndarray  # 2-D grayscale, uint8 or uint16
    geotransform: GeoTransform | None = None

    def __post_init__(self) -> None:
        if self.pixels.ndim != 2:
            raise ValueError(f"scene {self.scene_id!r}: expected a 2-D single-band array")
        if self.pixels.size == 0:
            raise ValueError(f"scene {self.scene_id!r}: empty image")
        if self.pixels.dtype not in (np.uint8, np.uint16):
            raise ValueError(f"scene {self.scene_id!r}: dtype must be uint8 or uint16, "
                             f"got {self.pixels.dtype}")
        if self.gsd <= 0:
            raise ValueError(f"scene {self.scene_id!r}: gsd must be > 0")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def bit_depth(self) -> int:
        return 8 if self.pixels.dtype == np.uint8 else 16


@dataclass(frozen=True)
class StretchParams:
    """Percentile window for the linear 16-to-8-bit stretch."""

    p_low: float = 1.0
    p_high: float = 99.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_low < self.p_high <= 100.0):
            raise ValueError(f"percentiles must satisfy 0 <= p_low < p_high <= 100, "
                             f"got ({self.p_low}, {self.p_high})")


@dataclass
class PatchRef:
    """Manifest record: a patch's identity and placement, without pixels."""

    patch_id: str
    scene_id: str
    x: int
    y: int
    size: int
    gsd: float


@dataclass
class Patch(PatchRef):
    pixels: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.pixels is not None and self.pixels.dtype != np.uint8:
            raise ValueError(f"patch {self.patch_id!r}: buffer must be 8-bit")


def convert_depth(scene: SceneImage, params: StretchParams = StretchParams()) -> SceneImage:
    """Percentile linear stretch of a 16-bit scene down to uint8.

    output = clamp(round(255 * (v - lo) / (hi - lo)), 0, 255) with lo/hi the
    p_low/p_high percentile values of the scene; a flat scene (hi == lo)
    maps to all zeros.
    """
    if scene.bit_depth == 8:
        raise ValueError(f"scene {scene.scene_id!r} is already 8-bit")
    pix = scene.pixels.astype(np.float64)
    lo, hi = np.percentile(pix, [params.p_low, params.p_high])
    if hi == lo:
        out = np.zeros_like(pix, dtype=np.uint8)
    else:
        scaled = 255.0 * (pix - lo) / (hi - lo)
        out = np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
    return SceneImage(scene.scene_id, scene.gsd, out, scene.geotransform)


def _grid_offsets(extent: int, patch_size: int) -> list[int]:
    """Stride-equal-size offsets, with a clamp-anchored final tile when the
    extent is not divisible (edge tiles overlap interior ones, no padding)."""
    offs = list(range(0, extent - patch_size + 1, patch_size))
    if offs[-1] != extent - patch_size:
        offs.append(extent - patch_size)
    return offs


def tile_scene(scene: SceneImage, patch_size: int) -> list[Patch]:
    """Cut an 8-bit scene into square patches in row-major order."""
    if scene.bit_depth != 8:
        raise ValueError(f"scene {scene.scene_id!r}: tile_scene needs an 8-bit scene")
    if patch_size <= 0:
        raise ValueError("patch_size must be positive")
    if patch_size > min(scene.width, scene.height):
        raise ValueError(f"patch_size {patch_size} exceeds scene dimensions "
                         f"{scene.width}x{scene.height}")
    patches = []
    for y in _grid_offsets(scene.height, patch_size):
        for x in _grid_offsets(scene.width, patch_size):
            patches.append(Patch(
                patch_id=f"{scene.scene_id}_{x}_{y}",
                scene_id=scene.scene_id,
                x=x, y=y, size=patch_size, gsd=scene.gsd,
                pixels=scene.pixels[y:y + patch_size, x:x + patch_size].copy(),
            ))
    return patches


def filter_patches(patches: Sequence[PatchRef], points: Iterable) -> list[PatchRef]:
    """Keep patches whose half-open region [x, x+size) x [y, y+size) contains
    at least one annotation point (scene pixel coordinates)."""
    pts = list(points)
    kept = []
    for p in patches:
        for pt in pts:
            if pt.scene_id != p.scene_id:
                continue
            if p.x <= pt.x < p.x + p.size and p.y <= pt.y < p.y + p.size:
                kept.append(p)
                break
    return kept


def px_from_meters(m: float, gsd: float) -> int:
    """Meters to pixels, rounded half away from zero, at least 1 px."""
    if gsd <= 0:
        raise ValueError(f"gsd must be > 0, got {gsd}")
    if m < 0:
        raise ValueError(f"distance must be >= 0, got {m}")
    return max(1, math.floor(m / gsd + 0.5))


def default_patch_size(gsd: float) -> int | None:
    """Platform patch-size rule; None when the GSD has no configured entry."""
    for known, size in DEFAULT_PATCH_SIZES.items():
        if abs(gsd - known) < 1e-9:
            return size
    return None


# ---------------------------------------------------------------------------
# File I/O

def read_sidecar(path: Path) -> dict:
    """Parse a key=value sidecar (scene_id, gsd, optional geotransform)."""
    meta: dict = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        meta[key.strip()] = value.strip()
    if "gsd" in meta:
        meta["gsd"] = float(meta["gsd"])
    if "geotransform" in meta:
        coeffs = [float(v) for v in meta["geotransform"].split(",")]
        if len(coeffs) != 6:
            raise ValueError(f"{path}: geotransform needs 6 numbers, got {len(coeffs)}")
        meta["geotransform"] = GeoTransform(*coeffs)
    return meta


def load_scene(image_path: Path, meta_path: Path | None = None) -> SceneImage:
    """Load a single-band raster plus its sidecar metadata.

    The sidecar defaults to ``<image>.meta`` next to the raster; without one
    the scene_id falls back to the file stem and gsd must be supplied later.
    """
    image_path = Path(image_path)
    img = Image.open(image_path)
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"{image_path}: expected single-band raster, got shape {arr.shape}")
    if arr.dtype == np.int32:  # Pillow reads 16-bit PNG as mode "I"
        if arr.min() < 0 or arr.max() > 65535:
            raise ValueError(f"{image_path}: sample values outside 16-bit range")
        arr = arr.astype(np.uint16)
    if arr.dtype not in (np.uint8, np.uint16):
        raise ValueError(f"{image_path}: unsupported sample type {arr.dtype}")

    if meta_path is None:
        candidate = image_path.with_suffix(image_path.suffix + ".meta")
        meta_path = candidate if candidate.exists() else None
    meta = read_sidecar(meta_path) if meta_path else {}
    scene_id = meta.get("scene_id", image_path.stem)
    gsd = meta.get("gsd")
    if gsd is None:
        raise ValueError(f"{image_path}: no gsd in sidecar; pass a .meta file with gsd=<m/px>")
    return SceneImage(scene_id, gsd, arr, meta.get("geotransform"))


def save_scene(scene: SceneImage, path: Path) -> None:
    Image.fromarray(scene.pixels).save(path)


def patch_filename(patch: PatchRef) -> str:
    return f"{patch.scene_id}_{patch.x}_{patch.y}.png"


def save_patches(patches: Sequence[Patch], out_dir: Path) -> Path:
    """Write patch PNGs plus the manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for p in patches:
        Image.fromarray(p.pixels).save(out_dir / patch_filename(p))
    manifest = out_dir / "manifest.csv"
    write_manifest(patches, manifest)
    return manifest


def write_manifest(patches: Sequence[PatchRef], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for p in patches:
            writer.writerow([p.patch_id, p.scene_id, p.x, p.y, p.size, repr(p.gsd)])


def read_manifest(path: Path) -> list[PatchRef]:
    refs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_FIELDS:
            raise ValueError(f"{path}: manifest header must be {','.join(MANIFEST_FIELDS)}")
        for row in reader:
            refs.append(PatchRef(
                patch_id=row["patch_id"], scene_id=row["scene_id"],
                x=int(row["x"]), y=int(row["y"]),
                size=int(row["size"]), gsd=float(row["gsd"]),
            ))
    return refs


def load_patch_pixels(patches_dir: Path, ref: PatchRef) -> np.ndarray:
    arr = np.asarray(Image.open(Path(patches_dir) / patch_filename(ref)))
    if arr.dtype != np.uint8 or arr.ndim != 2:
        raise ValueError(f"patch {ref.patch_id}: expected 8-bit grayscale PNG")
    return arr
