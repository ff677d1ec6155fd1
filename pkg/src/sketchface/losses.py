"""Loss terms for both stages, standalone and composed into stage totals.

Stage 1 (calibration) combines a least-squares adversarial term with a
multi-layer discriminator feature-matching term against the two ground
truth maps.  Stage 2 (synthesis) combines L1 reconstruction, adversarial,
perceptual, style (Gram), and total-variation terms.

All functions accept torch tensors, ImageBuffers, or EdgeMaps; buffers are
converted to the signed range used inside the networks, raw tensors pass
through untouched.  Losses are plain scalars on the autograd graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import torch
import torch.nn.functional as F

from .buffers import ContractViolation, EdgeMap, ImageBuffer

Scalar = torch.Tensor


@dataclass(frozen=True)
class LossWeights:
    """Weights for the stage totals plus the LSGAN label triple (a, b, c)."""

    lambda_cl: float = 10.0
    lambda_l1: float = 100.0
    lambda_adv: float = 1.0
    lambda_percep: float = 10.0
    lambda_style: float = 250.0
    tv_weight: float = 0.1
    lsgan_labels: tuple[float, float, float] = (0.0, 1.0, 1.0)

    def __post_init__(self):
        for name in ("lambda_cl", "lambda_l1", "lambda_adv", "lambda_percep", "lambda_style", "tv_weight"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be >= 0")
        a, b, _ = self.lsgan_labels
        if a == b:
            raise ContractViolation("real and fake labels must differ")


@dataclass
class LossReport:
    """Unweighted term values plus the weighted total.

    When built from live tensors, ``total_tensor`` keeps the same weighted
    sum on the autograd graph so training backpropagates exactly what the
    report says.
    """

    terms: dict[str, float]
    weights: dict[str, float]
    total: float
    total_tensor: torch.Tensor | None = field(default=None, repr=False, compare=False)

    def total_from_parts(self) -> float:
        return sum(self.weights[k] * v for k, v in self.terms.items())

    def verify(self, rel_tol: float = 1e-6) -> None:
        expected = self.total_from_parts()
        if abs(expected - self.total) > rel_tol * max(abs(expected), 1e-12):
            raise ContractViolation(
                f"total {self.total} does not reconstruct from parts ({expected})"
            )

    def as_dict(self) -> dict[str, float]:
        out = dict(self.terms)
        out["total"] = self.total
        return out


def as_tensor(x) -> torch.Tensor:
    """Coerce to a B x C x H x W float tensor (buffers go to signed range)."""
    if isinstance(x, torch.Tensor):
        t = x
    elif isinstance(x, EdgeMap):
        t = torch.from_numpy(x.data.copy()).float() * 2.0 - 1.0
    elif isinstance(x, ImageBuffer):
        t = torch.from_numpy(x.convert("signed").data.copy()).float().permute(2, 0, 1)
    else:
        raise ContractViolation(f"cannot interpret {type(x).__name__} as an image tensor")
    while t.dim() < 4:
        t = t.unsqueeze(0)
    return t


def lsgan_d_loss(real_scores, fake_scores, labels: tuple[float, float] = (0.0, 1.0)) -> Scalar:
    """Least-squares discriminator objective with (fake, real) labels (a, b)."""
    real_scores = as_tensor(real_scores)
    fake_scores = as_tensor(fake_scores)
    if real_scores.shape != fake_scores.shape:
        raise ContractViolation("score grids must share a shape")
    a, b = labels
    return 0.5 * ((real_scores - b) ** 2).mean() + 0.5 * ((fake_scores - a) ** 2).mean()


def lsgan_g_loss(fake_scores, target: float = 1.0) -> Scalar:
    """Least-squares generator objective toward label c."""
    fake_scores = as_tensor(fake_scores)
    return 0.5 * ((fake_scores - target) ** 2).mean()


def l1_loss(gt, pred) -> Scalar:
    gt = as_tensor(gt)
    pred = as_tensor(pred)
    if gt.shape != pred.shape:
        raise ContractViolation(f"shape mismatch {tuple(gt.shape)} vs {tuple(pred.shape)}")
    return (gt - pred).abs().mean()


def _feature_match(feats_a: Iterable[torch.Tensor], feats_b: Iterable[torch.Tensor]) -> Scalar:
    """Sum over layers of the mean absolute feature difference."""
    total = None
    for fa, fb in zip(feats_a, feats_b):
        term = (fa - fb).abs().mean()
        total = term if total is None else total + term
    if total is None:
        raise ContractViolation("extractor produced no taps")
    return total


def calibration_loss(discriminator, refined, detail, contour, mode: str = "both") -> Scalar:
    """Multi-layer feature-matching distance from the refined sketch to the
    ground-truth maps seen through the discriminator.

    ``mode`` selects which targets contribute: thin detail edges, thick
    contours, or the sum of both.
    """
    if mode not in ("detail_only", "contour_only", "both"):
        raise ContractViolation(f"unknown calibration mode {mode!r}")
    refined_feats = discriminator.features(as_tensor(refined))
    total = None
    if mode in ("detail_only", "both"):
        with torch.no_grad():
            target = discriminator.features(as_tensor(detail))
        term = _feature_match(target, refined_feats)
        total = term if total is None else total + term
    if mode in ("contour_only", "both"):
        with torch.no_grad():
            target = discriminator.features(as_tensor(contour))
        term = _feature_match(target, refined_feats)
        total = term if total is None else total + term
    return total


def perceptual_loss(extractor, gt, pred) -> Scalar:
    """Sum over taps of mean absolute differences of pre-activation features."""
    with torch.no_grad():
        gt_feats = [f.detach() for f in extractor(as_tensor(gt))]
    pred_feats = extractor(as_tensor(pred))
    return _feature_match(gt_feats, pred_feats)


def gram(features: torch.Tensor) -> torch.Tensor:
    """Channel inner-product matrix, normalized by C*H*W.

    Accepts C x H x W (returns C x C) or B x C x H x W (returns B x C x C).
    """
    squeeze = features.dim() == 3
    if squeeze:
        features = features.unsqueeze(0)
    b, c, h, w = features.shape
    flat = features.reshape(b, c, h * w)
    g = flat @ flat.transpose(1, 2) / (c * h * w)
    return g[0] if squeeze else g


def style_loss(extractor, gt, pred) -> Scalar:
    """Sum over taps of mean absolute Gram-matrix differences."""
    with torch.no_grad():
        gt_feats = [f.detach() for f in extractor(as_tensor(gt))]
    pred_feats = extractor(as_tensor(pred))
    total = None
    for fg, fp in zip(gt_feats, pred_feats):
        term = (gram(fg) - gram(fp)).abs().mean()
        total = term if total is None else total + term
    return total


def tv_loss(img, variant: str = "anisotropic") -> Scalar:
    """Total variation smoothness penalty.

    ``anisotropic`` is mean |dx| + mean |dy| with forward differences.  The
    ``difference`` variant penalizes mean |dx - dy| on the common interior
    instead (kept selectable for comparison; it vanishes on diagonally
    constant patterns, which is why it is not the default).
    """
    t = as_tensor(img)
    dx = t[:, :, :, 1:] - t[:, :, :, :-1]
    dy = t[:, :, 1:, :] - t[:, :, :-1, :]
    if variant == "anisotropic":
        return dx.abs().mean() + dy.abs().mean()
    if variant == "difference":
        return (dx[:, :, :-1, :] - dy[:, :, :, :-1]).abs().mean()
    raise ContractViolation(f"unknown tv variant {variant!r}")


def _val(x) -> float:
    return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)


def scn_total(adv: Scalar, calibration: Scalar, weights: LossWeights) -> LossReport:
    """Stage-1 generator objective: adversarial + weighted calibration."""
    terms = {"adv": _val(adv), "calibration": _val(calibration)}
    w = {"adv": 1.0, "calibration": weights.lambda_cl}
    total = adv + weights.lambda_cl * calibration
    tensor = total if isinstance(total, torch.Tensor) else None
    return LossReport(terms=terms, weights=w, total=_val(total), total_tensor=tensor)


def isn_total(l1: Scalar, adv: Scalar, percep: Scalar, style: Scalar, tv: Scalar,
              weights: LossWeights) -> LossReport:
    """Stage-2 generator objective: weighted sum of the five terms."""
    terms = {
        "l1": _val(l1),
        "adv": _val(adv),
        "percep": _val(percep),
        "style": _val(style),
        "tv": _val(tv),
    }
    w = {
        "l1": weights.lambda_l1,
        "adv": weights.lambda_adv,
        "percep": weights.lambda_percep,
        "style": weights.lambda_style,
        "tv": weights.tv_weight,
    }
    total = (weights.lambda_l1 * l1 + weights.lambda_adv * adv
             + weights.lambda_percep * percep + weights.lambda_style * style
             + weights.tv_weight * tv)
    tensor = total if isinstance(total, torch.Tensor) else None
    return LossReport(terms=terms, weights=w, total=_val(total), total_tensor=tensor)
