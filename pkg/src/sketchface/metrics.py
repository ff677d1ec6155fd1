"""Evaluation metrics and the batch evaluation harness.

PSNR and SSIM compare generated photos against references in byte-range
units.  FID fits one Gaussian per embedding set and measures the Frechet
distance between them; the embedder is pluggable (a pretrained Inception
pool3 adapter when its weights are available, a seeded random convolutional
embedder for hermetic runs).  FID values are only comparable within a
single embedder.  Precision/recall binarize the refined sketch against the
thin ground-truth edges and count ink pixels.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import imaging
from .buffers import ContractViolation, EdgeMap, ImageBuffer
from .dataset import DatasetManifest, load_sample
from .models import forward_isn, forward_scn, load_checkpoint

SSIM_K1 = (0.01 * 255.0) ** 2
SSIM_K2 = (0.03 * 255.0) ** 2


class MetricsError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussianStats:
    """Mean and unbiased covariance of an embedding sample."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise MetricsError("need at least 2 samples for covariance")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-8):
            raise MetricsError("covariance must be symmetric")


@dataclass
class MetricsReport:
    n_samples: int
    psnr_mean: float
    psnr_inf_count: int
    ssim_mean: float
    fid: float
    precision: float
    recall: float
    embedder_id: str
    config_hash: str = ""

    def validate(self) -> None:
        if self.fid < 0:
            raise MetricsError("fid must be clipped to >= 0")
        if not (-1.0 - 1e-9 <= self.ssim_mean <= 1.0 + 1e-9):
            raise MetricsError("ssim out of range")
        for name in ("precision", "recall"):
            v = getattr(self, name)
            if not math.isnan(v) and not (0.0 <= v <= 1.0):
                raise MetricsError(f"{name} out of range")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _as_byte_array(img: ImageBuffer) -> np.ndarray:
    return img.convert("byte").data.astype(np.float64)


def psnr(gt: ImageBuffer, pred: ImageBuffer, peak: float = 255.0) -> float:
    """10 log10(peak^2 / MSE) in dB; identical images return +inf."""
    a = _as_byte_array(gt)
    b = _as_byte_array(pred)
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(gt: ImageBuffer, pred: ImageBuffer, k1: float = SSIM_K1, k2: float = SSIM_K2,
         windowed: bool = False, window: int = 11) -> float:
    """Structural similarity: luminance term times structure term.

    Default is the global form (one statistics window over the whole
    image); ``windowed=True`` averages the same expression over local
    Gaussian windows instead.
    """
    a = _as_byte_array(gt)
    b = _as_byte_array(pred)
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    if windowed:
        return _ssim_windowed(a, b, k1, k2, window)
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    lum = (2 * mu_a * mu_b + k1) / (mu_a ** 2 + mu_b ** 2 + k1)
    struct = (2 * cov + k2) / (var_a + var_b + k2)
    return float(lum * struct)


def _gaussian_window(size: int, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_windowed(a: np.ndarray, b: np.ndarray, k1: float, k2: float, window: int) -> float:
    from scipy.signal import fftconvolve

    w = _gaussian_window(window)
    vals = []
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mu_x = fftconvolve(x, w, mode="valid")
        mu_y = fftconvolve(y, w, mode="valid")
        xx = fftconvolve(x * x, w, mode="valid") - mu_x ** 2
        yy = fftconvolve(y * y, w, mode="valid") - mu_y ** 2
        xy = fftconvolve(x * y, w, mode="valid") - mu_x * mu_y
        m = ((2 * mu_x * mu_y + k1) / (mu_x ** 2 + mu_y ** 2 + k1)
             * (2 * xy + k2) / (xx + yy + k2))
        vals.append(m.mean())
    return float(np.mean(vals))


def gaussian_stats(embeddings: np.ndarray) -> GaussianStats:
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 2:
        raise MetricsError("need an n x d matrix with n >= 2")
    mu = emb.mean(axis=0)
    sigma = np.cov(emb, rowvar=False)
    sigma = np.atleast_2d(sigma)
    return GaussianStats(mu=mu, sigma=(sigma + sigma.T) / 2.0, n=emb.shape[0])


def _psd_sqrt(mat: np.ndarray, tol: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    scale = max(abs(vals).max(), 1.0)
    if vals.min() < -tol * scale:
        raise MetricsError(f"matrix not PSD: eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(real: GaussianStats, gen: GaussianStats, tol: float = 1e-6) -> float:
    """Frechet distance between the two Gaussian fits.

    The cross-term square root is taken by symmetric eigendecomposition of
    sqrt(Sr) Sg sqrt(Sr), so no imaginary parts arise; eigenvalues below
    -tol (relative) are a failure, small negatives are clipped.  A tiny
    negative total is clipped to zero.
    """
    if real.mu.shape != gen.mu.shape:
        raise MetricsError("embedding dimensions differ")
    diff = real.mu - gen.mu
    sqrt_r = _psd_sqrt(real.sigma, tol)
    inner = sqrt_r @ gen.sigma @ sqrt_r
    inner = (inner + inner.T) / 2.0
    vals = np.linalg.eigh(inner)[0]
    scale = max(abs(vals).max(), 1.0)
    if vals.min() < -tol * scale:
        raise MetricsError(f"cross term not PSD: eigenvalue {vals.min():.3e}")
    trace_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    value = float(diff @ diff + np.trace(real.sigma) + np.trace(gen.sigma) - 2.0 * trace_sqrt)
    return max(value, 0.0)


def precision_recall(refined: EdgeMap, reference: EdgeMap, threshold: float = 0.5) -> tuple[float, float]:
    """Ink-pixel counting after binarizing both maps at the threshold.

    Empty prediction makes precision undefined (NaN); empty reference makes
    recall undefined (NaN).
    """
    if refined.data.shape != reference.data.shape:
        raise ContractViolation("maps must share dimensions")
    pred = imaging.binarize(refined, threshold).data > 0.5
    ref = imaging.binarize(reference, threshold).data > 0.5
    hit = int(np.logical_and(pred, ref).sum())
    n_pred = int(pred.sum())
    n_ref = int(ref.sum())
    precision = hit / n_pred if n_pred else math.nan
    recall = hit / n_ref if n_ref else math.nan
    return precision, recall


class RandomConvEmbedder(nn.Module):
    """Seeded random convolutional embedder: 3 stride-2 stages, mean pool."""

    def __init__(self, dim: int = 64, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        widths = (16, 32, dim)
        convs = []
        c = 3
        for w in widths:
            conv = nn.Conv2d(c, w, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.normal_(0.0, 0.2, generator=gen)
                conv.bias.zero_()
            convs.append(conv)
            c = w
        self.convs = nn.ModuleList(convs)
        self.dim = dim
        self.seed = seed
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def embedder_id(self) -> str:
        return f"random-conv-d{self.dim}-s{self.seed}"

    @torch.no_grad()
    def embed(self, images: list[ImageBuffer]) -> np.ndarray:
        out = []
        for img in images:
            t = torch.from_numpy(img.convert("signed").data.copy()).float().permute(2, 0, 1)
            if t.shape[0] == 1:
                t = t.repeat(3, 1, 1)
            x = t.unsqueeze(0)
            for conv in self.convs:
                x = torch.nn.functional.leaky_relu(conv(x), 0.2)
            out.append(x.mean(dim=(2, 3))[0].numpy())
        return np.stack(out).astype(np.float64)


class InceptionEmbedder:
    """Pretrained Inception-v3 pool3 activations (2048-d); needs weights."""

    def __init__(self):
        try:
            from torchvision import models
            net = models.inception_v3(weights=models.Inception_V3_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise MetricsError(f"pretrained Inception-v3 unavailable: {exc}") from exc
        net.fc = nn.Identity()
        net.eval()
        self.net = net
        self.embedder_id = "inception-v3-pool3"

    @torch.no_grad()
    def embed(self, images: list[ImageBuffer]) -> np.ndarray:
        from torch.nn.functional import interpolate

        out = []
        for img in images:
            t = torch.from_numpy(img.convert("unit").data.copy()).float().permute(2, 0, 1)
            if t.shape[0] == 1:
                t = t.repeat(3, 1, 1)
            t = interpolate(t.unsqueeze(0), size=(299, 299), mode="bilinear", align_corners=False)
            mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
            std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
            out.append(self.net((t - mean) / std)[0].numpy())
        return np.stack(out).astype(np.float64)


def make_embedder(kind: str = "random", dim: int = 64, seed: int = 0):
    if kind == "random":
        return RandomConvEmbedder(dim=dim, seed=seed)
    if kind == "inception":
        return InceptionEmbedder()
    if kind == "auto":
        try:
            return InceptionEmbedder()
        except MetricsError:
            return RandomConvEmbedder(dim=dim, seed=seed)
    raise MetricsError(f"unknown embedder kind {kind!r}")


def evaluate_pairs(
    references: list[ImageBuffer],
    generated: list[ImageBuffer],
    embedder,
    refined_pairs: "list[tuple[EdgeMap, EdgeMap]] | None" = None,
    threshold: float = 0.5,
    config_hash: str = "",
) -> MetricsReport:
    """Aggregate metrics over aligned (reference, generated) photo lists."""
    if not references or len(references) != len(generated):
        raise MetricsError("need equal-length nonempty image lists")
    psnrs = [psnr(r, g) for r, g in zip(references, generated)]
    finite = [p for p in psnrs if math.isfinite(p)]
    ssims = [ssim(r, g) for r, g in zip(references, generated)]

    stats_r = gaussian_stats(embedder.embed(references))
    stats_g = gaussian_stats(embedder.embed(generated))
    fid_value = fid(stats_r, stats_g)

    if refined_pairs:
        hits = preds = refs = 0
        for refined, reference in refined_pairs:
            pred = imaging.binarize(refined, threshold).data > 0.5
            ref = imaging.binarize(reference, threshold).data > 0.5
            hits += int(np.logical_and(pred, ref).sum())
            preds += int(pred.sum())
            refs += int(ref.sum())
        precision = hits / preds if preds else math.nan
        recall = hits / refs if refs else math.nan
    else:
        precision = recall = math.nan

    report = MetricsReport(
        n_samples=len(references),
        psnr_mean=float(np.mean(finite)) if finite else math.inf,
        psnr_inf_count=len(psnrs) - len(finite),
        ssim_mean=float(np.mean(ssims)),
        fid=fid_value,
        precision=precision,
        recall=recall,
        embedder_id=embedder.embedder_id,
        config_hash=config_hash,
    )
    report.validate()
    return report


def evaluate(
    manifest: DatasetManifest,
    split: str,
    scn_ckpt: "str | Path",
    isn_ckpt: "str | Path",
    embedder=None,
    threshold: float = 0.5,
    report_path: "str | Path | None" = None,
) -> MetricsReport:
    """Run the full two-stage pipeline over a split and aggregate metrics."""
    ids = manifest.sample_ids(split)
    if not ids:
        raise MetricsError(f"split {split!r} is empty")
    embedder = embedder or RandomConvEmbedder()
    g1 = load_checkpoint(scn_ckpt)
    g2 = load_checkpoint(isn_ckpt)

    references: list[ImageBuffer] = []
    generated: list[ImageBuffer] = []
    refined_pairs: list[tuple[EdgeMap, EdgeMap]] = []
    for sid in ids:
        sample = load_sample(manifest, sid)
        refined = forward_scn(g1, sample.sketch)
        photo = forward_isn(g2, refined)
        references.append(sample.photo)
        generated.append(photo)
        refined_pairs.append((refined, sample.detail))

    config_hash = hashlib.sha256(
        json.dumps({"split": split, "threshold": threshold, "ids": ids}).encode()
    ).hexdigest()[:16]
    report = evaluate_pairs(references, generated, embedder, refined_pairs,
                            threshold, config_hash)
    if report_path:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(report.to_json())
    return report
