"""Deterministic geometry: center crop, bilinear resize and seeded affine augmentation.

All functions act on the last two axes, so both ``(H, W)`` grids and
``(1, H, W)`` image tensors are accepted.

Random draws use numpy's Philox 4x64 counter-based generator seeded with the
caller's integer seed. Philox output is fixed by its algorithm, so a seed
reproduces the same warp on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import ShapeMismatch

IMAGE_FILL = -1024.0
MASK_FILL = 0.0


def center_crop(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[-2:]
    s = min(h, w)
    top = (h - s) // 2
    left = (w - s) // 2
    return img[..., top:top + s, left:left + s]


def _axis_weights(src: int, dst: int):
    pos = (np.arange(dst) + 0.5) * src / dst - 0.5
    pos = np.clip(pos, 0, src - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def resize_bilinear(img: np.ndarray, res: int, res_w: Optional[int] = None) -> np.ndarray:
    """Bilinear resize to ``res x res`` (or ``res x res_w``) with half-pixel centres.

    Source coordinates are clamped to the image, so edges replicate and a
    constant image stays constant.
    """
    res_w = res if res_w is None else res_w
    if res < 1 or res_w < 1:
        raise ValueError(f"target size must be >= 1, got {res}x{res_w}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[-2:]
    lo, hi, t = _axis_weights(h, res)
    rows = img[..., lo, :] * (1 - t)[:, None] + img[..., hi, :] * t[:, None]
    lo, hi, t = _axis_weights(w, res_w)
    return rows[..., lo] * (1 - t) + rows[..., hi] * t


@dataclass(frozen=True)
class AugmentationSpec:
    max_rotation_deg: float = 45.0
    max_translation_frac: float = 0.15
    scale_range: tuple[float, float] = (0.9, 1.1)
    image_fill: float = IMAGE_FILL
    mask_fill: float = MASK_FILL


@dataclass(frozen=True)
class AffineParams:
    """One augmentation draw. Translation is in pixels."""

    theta_deg: float
    tx: float
    ty: float
    scale: float


def draw_params(spec: AugmentationSpec, seed: int, size: int) -> AffineParams:
    """Draw rotation, translation and scale uniformly within ``spec``'s bounds."""
    rng = np.random.Generator(np.random.Philox(seed))
    rot = spec.max_rotation_deg
    shift = spec.max_translation_frac * size
    theta = rng.uniform(-rot, rot)
    tx = rng.uniform(-shift, shift)
    ty = rng.uniform(-shift, shift)
    scale = rng.uniform(*spec.scale_range)
    return AffineParams(float(theta), float(tx), float(ty), float(scale))


def _sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray, fill: float) -> np.ndarray:
    # constant padding by one pixel so samples straddling the border blend with fill
    h, w = img.shape[-2:]
    pad = [(0, 0)] * (img.ndim - 2) + [(1, 1), (1, 1)]
    padded = np.pad(img, pad, mode="constant", constant_values=fill)
    py = ys + 1.0
    px = xs + 1.0
    inside = (py >= 0) & (py <= h + 1) & (px >= 0) & (px <= w + 1)
    py = np.clip(py, 0, h + 1)
    px = np.clip(px, 0, w + 1)
    y0 = np.minimum(np.floor(py).astype(np.intp), h)
    x0 = np.minimum(np.floor(px).astype(np.intp), w)
    fy = py - y0
    fx = px - x0
    out = (
        padded[..., y0, x0] * (1 - fy) * (1 - fx)
        + padded[..., y0 + 1, x0] * fy * (1 - fx)
        + padded[..., y0, x0 + 1] * (1 - fy) * fx
        + padded[..., y0 + 1, x0 + 1] * fy * fx
    )
    return np.where(inside, out, fill)


def warp_affine(img: np.ndarray, params: AffineParams, fill: float) -> np.ndarray:
    """Rotate about the centre, scale, then translate; bilinear inverse mapping."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[-2:]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(params.theta_deg)
    c, s = math.cos(theta), math.sin(theta)
    oy, ox = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy = oy - cy - params.ty
    dx = ox - cx - params.tx
    # inverse of out = centre + scale * R(theta) @ (in - centre) + t
    src_x = (c * dx + s * dy) / params.scale + cx
    src_y = (-s * dx + c * dy) / params.scale + cy
    return _sample_bilinear(img, src_y, src_x, fill)


def augment(
    img: np.ndarray,
    masks: Optional[Mapping[int, np.ndarray]] = None,
    seed: int = 0,
    spec: AugmentationSpec = AugmentationSpec(),
):
    """Apply one seeded random affine warp to an image and, identically, its masks.

    Returns ``(img, masks)``; ``masks`` is ``None`` when none were given.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[-2:]
    if h != w:
        raise ShapeMismatch(f"augment expects a square image, got {h}x{w}")
    if masks is not None:
        for k, m in masks.items():
            if np.shape(m)[-2:] != (h, w):
                raise ShapeMismatch(f"mask {k} has shape {np.shape(m)}, image is {h}x{w}")
    params = draw_params(spec, seed, h)
    out = warp_affine(img, params, spec.image_fill)
    if masks is None:
        return out, None
    warped = {k: np.clip(warp_affine(m, params, spec.mask_fill), 0.0, 1.0) for k, m in masks.items()}
    return out, warped


@dataclass(frozen=True)
class CenterCrop:
    def __str__(self):
        return "crop"


@dataclass(frozen=True)
class Resize:
    res: int

    def __post_init__(self):
        if self.res < 1:
            raise ValueError(f"resize target must be >= 1, got {self.res}")

    def __str__(self):
        return f"resize:{self.res}"


@dataclass(frozen=True)
class Augment:
    spec: AugmentationSpec = field(default_factory=AugmentationSpec)
    seed: Optional[int] = None

    def __str__(self):
        return "augment" if self.seed is None else f"augment:seed={self.seed}"


class TransformChain:
    """Ordered crop/resize/augment steps applied to an image and its masks together."""

    def __init__(self, steps=()):
        steps = tuple(steps)
        for st in steps:
            if not isinstance(st, (CenterCrop, Resize, Augment)):
                raise TypeError(f"unsupported transform step {st!r}")
        if sum(isinstance(st, Augment) for st in steps) > 1:
            raise ValueError("a chain holds at most one augment step")
        self.steps = steps

    def __repr__(self):
        return f"TransformChain({str(self)!r})"

    def __str__(self):
        return ",".join(str(s) for s in self.steps)

    def __eq__(self, other):
        return isinstance(other, TransformChain) and self.steps == other.steps

    @property
    def augments(self) -> bool:
        return any(isinstance(s, Augment) for s in self.steps)

    @classmethod
    def parse(cls, text: str) -> "TransformChain":
        """Parse ``"crop,resize:224,augment:seed=7"``.

        ``augment`` also takes ``rot=``, ``shift=``, ``smin=`` and ``smax=``
        to override the default bounds.
        """
        steps = []
        for part in filter(None, (p.strip() for p in text.split(","))):
            name, _, arg = part.partition(":")
            name = name.strip().lower()
            if name == "crop":
                steps.append(CenterCrop())
            elif name == "resize":
                if not arg:
                    raise ValueError("resize needs a size, e.g. resize:224")
                steps.append(Resize(int(arg)))
            elif name == "augment":
                opts = dict(kv.split("=", 1) for kv in arg.split(";") if kv) if arg else {}
                spec = AugmentationSpec(
                    max_rotation_deg=float(opts.pop("rot", 45.0)),
                    max_translation_frac=float(opts.pop("shift", 0.15)),
                    scale_range=(float(opts.pop("smin", 0.9)), float(opts.pop("smax", 1.1))),
                )
                seed = opts.pop("seed", None)
                if opts:
                    raise ValueError(f"unknown augment options {sorted(opts)}")
                steps.append(Augment(spec, None if seed is None else int(seed)))
            else:
                raise ValueError(f"unknown transform step {part!r}")
        return cls(steps)

    def __call__(self, img, masks=None, seed: Optional[int] = None):
        """Apply every step. ``seed`` overrides the augment step's own seed."""
        for st in self.steps:
            if isinstance(st, CenterCrop):
                img = center_crop(img)
                if masks is not None:
                    masks = {k: center_crop(m) for k, m in masks.items()}
            elif isinstance(st, Resize):
                img = resize_bilinear(img, st.res)
                if masks is not None:
                    masks = {k: resize_bilinear(m, st.res) for k, m in masks.items()}
            else:
                s = seed if seed is not None else st.seed
                if s is None:
                    raise ValueError("augmentation needs a seed")
                img, masks = augment(img, masks, s, st.spec)
        return img, masks
