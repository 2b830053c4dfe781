"""Reconstruction losses and their adjoints.

total = L2 + lambda1 * L_grad + lambda2 * L_perceptual

L2 is a weighted mean squared error (weight `foreground_weight` on masked
pixels, 1 elsewhere, normalized by the total weight). L_grad applies the same
weighting to squared differences of forward finite differences along width and
height. L_perceptual delegates to a pluggable feature extractor and is zero
when no extractor is configured.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeMismatch


@dataclass
class LossConfig:
    lambda1: float = 1.0
    lambda2: float = 0.0
    foreground_weight: float = 10.0


@dataclass
class LossBreakdown:
    l2: float
    grad: float
    perceptual: float
    total: float
    lambda1: float
    lambda2: float
    foreground_weight: float

    def finite(self):
        return np.isfinite(self.total)


def pixel_weights(mask, shape, foreground_weight, region="full"):
    """Per-pixel loss weights.

    region="full": foreground_weight on the mask, 1 off it (1 everywhere when
    mask is None). region="background": hard complement mask, exactly 0 on the
    foreground so masked truth pixels get strictly zero gradient.
    """
    if mask is None:
        return np.ones(shape)  # empty foreground: everything is background
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != shape:
        raise SizeMismatch(f"mask shape {mask.shape} != image shape {shape}")
    if region == "background":
        return 1.0 - mask
    return 1.0 + (foreground_weight - 1.0) * mask


def loss_with_grad(rendered, truth, mask, cfg: LossConfig, extractor=None,
                   region="full"):
    """LossBreakdown plus d(total)/d(rendered), shape (H, W, 3)."""
    rendered = np.asarray(rendered, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if rendered.shape != truth.shape:
        raise SizeMismatch(f"rendered {rendered.shape} vs truth {truth.shape}")
    h, w = rendered.shape[:2]
    wgt = pixel_weights(mask, (h, w), cfg.foreground_weight, region)
    diff = rendered - truth
    g = np.zeros_like(rendered)

    wsum = wgt.sum()
    if wsum > 0:
        l2 = float((wgt * (diff**2).sum(axis=2)).sum() / wsum)
        g += 2.0 * wgt[..., None] * diff / wsum
    else:
        l2 = 0.0

    dx = diff[:, 1:] - diff[:, :-1]   # forward difference along width
    dy = diff[1:, :] - diff[:-1, :]   # along height
    if region == "background":
        # hard masking: a pair touching any foreground pixel contributes
        # nothing, so foreground values get exactly zero gradient
        wx = wgt[:, :-1] * wgt[:, 1:]
        wy = wgt[:-1, :] * wgt[1:, :]
    else:
        wx = wgt[:, :-1]              # anchor-pixel weight per pair
        wy = wgt[:-1, :]
    norm = wx.sum() + wy.sum()
    if norm > 0:
        grad_term = float(
            ((wx * (dx**2).sum(axis=2)).sum() + (wy * (dy**2).sum(axis=2)).sum())
            / norm
        )
        gx = 2.0 * cfg.lambda1 * wx[..., None] * dx / norm
        gy = 2.0 * cfg.lambda1 * wy[..., None] * dy / norm
        g[:, 1:] += gx
        g[:, :-1] -= gx
        g[1:, :] += gy
        g[:-1, :] -= gy
    else:
        grad_term = 0.0

    perceptual = 0.0
    if extractor is not None and cfg.lambda2 != 0.0:
        perceptual, gp = _perceptual_with_grad(extractor, rendered, truth)
        g += cfg.lambda2 * gp

    total = l2 + cfg.lambda1 * grad_term + cfg.lambda2 * perceptual
    return (
        LossBreakdown(
            l2=l2, grad=grad_term, perceptual=float(perceptual), total=float(total),
            lambda1=cfg.lambda1, lambda2=cfg.lambda2,
            foreground_weight=cfg.foreground_weight,
        ),
        g,
    )


def loss(rendered, truth, mask, cfg: LossConfig, extractor=None, region="full"):
    breakdown, _ = loss_with_grad(rendered, truth, mask, cfg, extractor, region)
    return breakdown


def _perceptual_with_grad(extractor, rendered, truth):
    fr = extractor.features(rendered)
    ft = extractor.features(truth)
    value = 0.0
    cotangents = []
    for a, b in zip(fr, ft):
        d = a - b
        value += float(np.abs(d).mean())
        cotangents.append(np.sign(d) / d.size)
    grad = extractor.features_vjp(rendered, cotangents)
    return value, grad


class BoxPyramidExtractor:
    """Feature pyramid of repeated 2x2 average pooling; L1 feature distance.

    A minimal stand-in for a pretrained perceptual network: any object with
    the same features / features_vjp surface plugs in identically.
    """

    def __init__(self, levels=2):
        self.levels = levels

    @staticmethod
    def _pool(img):
        h, w = img.shape[:2]
        img = img[: h - h % 2, : w - w % 2]
        return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])

    @staticmethod
    def _unpool(g, shape):
        out = np.zeros(shape, dtype=g.dtype)
        gh, gw = g.shape[:2]
        out[: 2 * gh, : 2 * gw] = 0.25 * np.repeat(np.repeat(g, 2, axis=0), 2, axis=1)
        return out

    def features(self, img):
        feats = []
        cur = np.asarray(img, dtype=np.float64)
        for _ in range(self.levels):
            cur = self._pool(cur)
            feats.append(cur)
        return feats

    def features_vjp(self, img, cotangents):
        shapes = [np.asarray(img).shape]
        cur = np.asarray(img, dtype=np.float64)
        for _ in range(self.levels - 1):
            cur = self._pool(cur)
            shapes.append(cur.shape)
        grad = np.zeros(np.asarray(img).shape, dtype=np.float64)
        for level in reversed(range(self.levels)):
            g = cotangents[level]
            for s in reversed(shapes[: level + 1]):
                g = self._unpool(g, s)
            grad += g
        return grad


def psnr(rendered, truth):
    mse = float(np.mean((np.asarray(rendered) - np.asarray(truth)) ** 2))
    if mse == 0:
        return float("inf")
    return -10.0 * np.log10(mse)
