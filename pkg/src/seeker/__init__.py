"""Toolchain turning expert point annotations into per-instance box labels.

Pipeline: tile large survey scenes into patches, prompt a segmentation
backend with point + buffer-box prompts, resolve mask overlaps by nearest
annotation point, emit YOLO-format detection datasets, and score external
detections.  A review HTTP service supports expert refinement of the
automatic labels.
"""

__version__ = "0.1.0"
