"""Two-stage poorly-drawn-sketch to face-photo synthesis.

Stage 1 calibrates and completes sketch strokes; stage 2 renders the
calibrated sketch as a photo-realistic face.  The package also ships the
dataset builder, loss suite, three-stage trainer, evaluation metrics,
HTTP inference service, and operator CLI around the two networks.
"""

__version__ = "0.1.0"

from .buffers import EdgeMap, ImageBuffer, read_edge_map, read_image, write_png

__all__ = [
    "EdgeMap",
    "ImageBuffer",
    "read_edge_map",
    "read_image",
    "write_png",
    "__version__",
]
