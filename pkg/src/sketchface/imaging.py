"""Deterministic image operations for dataset synthesis and ground truth.

All functions are pure: they never mutate their inputs and are safe to call
from any number of workers.  Edge maps come back in the ink=1 convention.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .buffers import ContractViolation, EdgeMap, ImageBuffer

# BT.601 luma weights.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

CANNY_DEFAULTS = {"low": 0.1, "high": 0.3, "sigma": 1.4}
XDOG_DEFAULTS = {"sigma": 0.8, "k": 1.6, "p": 19.0, "eps": 0.01, "phi": 10.0}
PHOTOCOPY_DEFAULTS = {"sigma": 2.0, "threshold": 0.5}
CONTOUR_DEFAULTS = {"dilate_iterations": 2, "blur_sigma": 1.5}


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Luma-weighted channel collapse; output keeps the input's range tag."""
    if img.channels != 3:
        raise ContractViolation(f"to_grayscale needs 3 channels, got {img.channels}")
    r, g, b = LUMA_WEIGHTS
    luma = img.data[:, :, 0] * r + img.data[:, :, 1] * g + img.data[:, :, 2] * b
    return ImageBuffer(luma[:, :, None], img.range_tag)


def histogram_equalize(img: ImageBuffer) -> ImageBuffer:
    """Cumulative-distribution remap over 256 levels.

    A constant image has a degenerate histogram and is returned unchanged.
    The output keeps the input's range tag.
    """
    if img.channels != 1:
        raise ContractViolation("histogram_equalize needs a single channel")
    unit = img.convert("unit").plane().astype(np.float64)
    levels = np.clip(np.floor(unit * 255.0 + 0.5), 0, 255).astype(np.int64)
    if levels.min() == levels.max():
        return img
    counts = np.bincount(levels.ravel(), minlength=256)
    cdf = np.cumsum(counts) / levels.size
    out = cdf[levels].astype(np.float32)
    return ImageBuffer(out[:, :, None], "unit").convert(img.range_tag)


def _gradients(plane: np.ndarray, sigma: float):
    smoothed = ndimage.gaussian_filter(plane, sigma=sigma, mode="nearest")
    gx = ndimage.sobel(smoothed, axis=1, mode="nearest")
    gy = ndimage.sobel(smoothed, axis=0, mode="nearest")
    return np.hypot(gx, gy), gx, gy


def _non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Thin ridges to one pixel along the gradient direction.

    Directions are quantized to 4 bins.  Ties between two equal neighbours
    keep exactly one pixel (strict comparison toward the positive
    direction), so a symmetric step edge yields a single line.
    """
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0

    # Neighbour offsets per quantized direction (dy, dx) of the "positive" side.
    offs = np.zeros((h, w, 2), dtype=np.int64)
    horiz = (angle < 22.5) | (angle >= 157.5)
    diag1 = (angle >= 22.5) & (angle < 67.5)
    vert = (angle >= 67.5) & (angle < 112.5)
    diag2 = (angle >= 112.5) & (angle < 157.5)
    offs[horiz] = (0, 1)
    offs[diag1] = (1, 1)
    offs[vert] = (1, 0)
    offs[diag2] = (1, -1)

    ys, xs = np.mgrid[0:h, 0:w]
    fwd = padded[ys + 1 + offs[:, :, 0], xs + 1 + offs[:, :, 1]]
    back = padded[ys + 1 - offs[:, :, 0], xs + 1 - offs[:, :, 1]]
    keep = (mag > fwd) & (mag >= back)
    return np.where(keep, mag, 0.0)


def canny(
    img: ImageBuffer,
    low: float = CANNY_DEFAULTS["low"],
    high: float = CANNY_DEFAULTS["high"],
    sigma: float = CANNY_DEFAULTS["sigma"],
) -> EdgeMap:
    """Binary thin-edge detector (blur, Sobel, NMS, hysteresis).

    Thresholds apply to the gradient magnitude normalized by its maximum,
    so the result only depends on relative edge strength.
    """
    if img.channels != 1:
        raise ContractViolation("canny needs a single channel")
    if sigma <= 0:
        raise ContractViolation("canny sigma must be positive")
    if not (0 < low <= high):
        raise ContractViolation("expected 0 < low <= high")

    plane = img.convert("unit").plane().astype(np.float64)
    mag, gx, gy = _gradients(plane, sigma)
    peak = mag.max()
    if peak <= 0:
        return EdgeMap.from_array(np.zeros_like(plane, dtype=np.float32), "local_detail")
    mag /= peak

    thin = _non_maximum_suppression(mag, gx, gy)
    strong = thin >= high
    candidate = thin >= low
    # Hysteresis: keep weak pixels only inside 8-connected components that
    # contain at least one strong pixel.
    labels, n = ndimage.label(candidate, structure=np.ones((3, 3)))
    if n == 0:
        edges = np.zeros_like(plane)
    else:
        strong_labels = np.unique(labels[strong])
        strong_labels = strong_labels[strong_labels != 0]
        edges = np.isin(labels, strong_labels) & candidate
    return EdgeMap.from_array(edges.astype(np.float32), "local_detail")


def xdog(
    img: ImageBuffer,
    sigma: float = XDOG_DEFAULTS["sigma"],
    k: float = XDOG_DEFAULTS["k"],
    p: float = XDOG_DEFAULTS["p"],
    eps: float = XDOG_DEFAULTS["eps"],
    phi: float = XDOG_DEFAULTS["phi"],
) -> EdgeMap:
    """Soft stylized strokes from an extended difference-of-Gaussians.

    The response is ``u = p * (G_sigma(I) - G_{k*sigma}(I))``; ink appears
    where the dark-side lobe exceeds ``eps``::

        ink = clip(tanh(phi * (-u - eps)), 0, 1)

    A constant image has zero response and therefore no strokes.  As phi
    grows the ramp sharpens toward the hard threshold ``u < -eps``.
    """
    if img.channels != 1:
        raise ContractViolation("xdog needs a single channel")
    if sigma <= 0:
        raise ContractViolation("xdog sigma must be positive")
    if k <= 1:
        raise ContractViolation("xdog k must exceed 1")

    plane = img.convert("unit").plane().astype(np.float64)
    fine = ndimage.gaussian_filter(plane, sigma=sigma, mode="nearest")
    coarse = ndimage.gaussian_filter(plane, sigma=sigma * k, mode="nearest")
    u = p * (fine - coarse)
    ink = np.clip(np.tanh(phi * (-u - eps)), 0.0, 1.0)
    return EdgeMap.from_array(ink.astype(np.float32), "local_detail")


def photocopy(
    img: ImageBuffer,
    sigma: float = PHOTOCOPY_DEFAULTS["sigma"],
    threshold: float = PHOTOCOPY_DEFAULTS["threshold"],
) -> EdgeMap:
    """Thresholded-blur sketch style: ink wherever the blurred image is dark."""
    if img.channels != 1:
        raise ContractViolation("photocopy needs a single channel")
    plane = img.convert("unit").plane().astype(np.float64)
    blurred = ndimage.gaussian_filter(plane, sigma=sigma, mode="nearest")
    ink = (blurred < threshold).astype(np.float32)
    return EdgeMap.from_array(ink, "local_detail")


def pseudo_contour(
    img: ImageBuffer,
    dilate_iterations: int = CONTOUR_DEFAULTS["dilate_iterations"],
    blur_sigma: float = CONTOUR_DEFAULTS["blur_sigma"],
) -> EdgeMap:
    """Soft thick object-scale contours (stand-in for a learned detector).

    Pipeline: binarized thin edges -> 3x3 dilation (``dilate_iterations``
    rounds) -> Gaussian blur -> renormalize to [0, 1].  Defaults suit
    256x256 inputs; smaller working resolutions should scale the radii
    down to keep the relative contour thickness comparable.  Callers are
    expected to pass a histogram-equalized image.  Any pretrained contour
    network producing a soft thick map can replace this seam.
    """
    ring = canny(img).data > 0.5
    thick = ring
    if dilate_iterations > 0:
        thick = ndimage.binary_dilation(ring, structure=np.ones((3, 3)),
                                        iterations=dilate_iterations)
    soft = ndimage.gaussian_filter(thick.astype(np.float64), sigma=blur_sigma, mode="nearest")
    peak = soft.max()
    if peak > 0:
        soft = soft / peak
    return EdgeMap.from_array(soft.astype(np.float32), "global_contour")


def binarize(edge_map: EdgeMap, threshold: float) -> EdgeMap:
    """Hard threshold (>= threshold -> 1.0); idempotent for 0 < threshold < 1."""
    if not (0.0 < threshold < 1.0):
        raise ContractViolation("binarize threshold must lie strictly inside (0, 1)")
    out = (edge_map.data >= threshold).astype(np.float32)
    return EdgeMap.from_array(out, edge_map.kind)


def hadamard(a: EdgeMap, b: EdgeMap) -> EdgeMap:
    """Elementwise product of two same-sized edge maps."""
    if a.data.shape != b.data.shape:
        raise ContractViolation(
            f"hadamard dimension mismatch: {a.data.shape} vs {b.data.shape}"
        )
    return EdgeMap.from_array(a.data * b.data, "composed")


def _bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resampling; identity when sizes match."""
    h, w, _ = arr.shape
    if (h, w) == (out_h, out_w):
        return arr.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bottom = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def resize_crop(img: ImageBuffer, out_h: int, out_w: int) -> ImageBuffer:
    """Center-crop to the output aspect ratio, then bilinear resize."""
    if out_h <= 0 or out_w <= 0:
        raise ContractViolation("output dimensions must be positive")
    h, w = img.height, img.width
    target_aspect = out_w / out_h
    crop_w = min(w, int(round(h * target_aspect)))
    crop_h = min(h, int(round(w / target_aspect)))
    top = (h - crop_h) // 2
    left = (w - crop_w) // 2
    cropped = img.data[top : top + crop_h, left : left + crop_w, :].astype(np.float64)
    out = _bilinear_resize(cropped, out_h, out_w)
    lo, hi = (-1.0, 1.0) if img.range_tag == "signed" else (0.0, 255.0 if img.range_tag == "byte" else 1.0)
    return ImageBuffer(np.clip(out, lo, hi).astype(np.float32), img.range_tag)
