"""Running a trained generator on whole images and scoring datasets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import io
from .autodiff import ShapeError
from .blur_synth import BlurPair
from .metrics import ms_ssim, ms_ssim_min_size, psnr, ssim
from .model import GeneratorSpec, generator_forward
from .pyramid import gaussian_pyramid

Restorer = Callable[[np.ndarray], np.ndarray]


def pad_to_multiple(img: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad the bottom/right of a (C, H, W) image up to a multiple of ``multiple``."""
    _, h, w = img.shape
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        img = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return img, (h, w)


def deblur_image(blurry: np.ndarray, params: dict[str, np.ndarray], spec: GeneratorSpec,
                 all_levels: bool = False):
    """Restore one (C, H, W) image of any size; the finest latent is the result.

    Sizes not divisible by ``2**(K-1)`` are reflect-padded and cropped back.
    """
    dtype = next(iter(params.values())).dtype
    padded, (h, w) = pad_to_multiple(np.asarray(blurry, dtype=np.float64), 2 ** (spec.scales - 1))
    pyr = [lvl[None].astype(dtype) for lvl in gaussian_pyramid(padded, spec.scales)]
    latents = generator_forward(pyr, params, spec)
    finest = np.clip(latents[0][0, :, :h, :w].astype(np.float64), 0.0, 1.0)
    if not all_levels:
        return finest
    levels = [finest] + [np.clip(l[0].astype(np.float64), 0.0, 1.0) for l in latents[1:]]
    return finest, levels


def generator_restorer(params, spec: GeneratorSpec) -> Restorer:
    return lambda img: deblur_image(img, params, spec)


def identity_restorer(img: np.ndarray) -> np.ndarray:
    return img


# ---------------------------------------------------------------------------
# datasets


@dataclass
class ManifestEntry:
    blur: str
    sharp: str
    start: int
    length: int
    gamma: float

    def line(self) -> str:
        return f"{self.blur} {self.sharp} {self.start} {self.length} {self.gamma!r}"


def read_manifest(dataset_dir) -> list[ManifestEntry]:
    path = Path(dataset_dir) / "manifest.txt"
    entries = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{n}: expected 5 fields, got {len(parts)}")
        entries.append(ManifestEntry(parts[0], parts[1], int(parts[2]), int(parts[3]), float(parts[4])))
    return entries


def load_pairs(dataset_dir) -> list[BlurPair]:
    root = Path(dataset_dir)
    return [BlurPair(io.read_image(root / e.blur), io.read_image(root / e.sharp), e.start, e.length, e.gamma)
            for e in read_manifest(root)]


# ---------------------------------------------------------------------------
# reports


@dataclass
class ImageScore:
    path: str
    psnr: float = math.nan
    ssim: float = math.nan
    msssim: float | None = None
    error: str | None = None


@dataclass
class MetricReport:
    items: list[ImageScore]
    checkpoint: str = ""
    scales: int = 0
    quantized: bool = False
    meta: dict = field(default_factory=dict)

    def _mean(self, attr):
        vals = [getattr(i, attr) for i in self.items if i.error is None and getattr(i, attr) is not None]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_psnr(self) -> float:
        return self._mean("psnr")

    @property
    def mean_ssim(self) -> float:
        return self._mean("ssim")

    @property
    def mean_msssim(self) -> float:
        return self._mean("msssim")

    def to_text(self) -> str:
        def fmt(v, spec):
            return "n/a" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, spec)
        lines = [f"# checkpoint: {self.checkpoint or '-'}  scales: {self.scales}  quantized: {self.quantized}",
                 f"{'image':<40} {'PSNR':>8} {'SSIM':>8} {'MS-SSIM':>8}"]
        for i in self.items:
            if i.error is not None:
                lines.append(f"{i.path:<40} ERROR {i.error}")
            else:
                lines.append(f"{i.path:<40} {fmt(i.psnr, '8.4f')} {fmt(i.ssim, '8.4f')} {fmt(i.msssim, '8.4f')}")
        lines.append(f"{'mean':<40} {fmt(self.mean_psnr, '8.4f')} {fmt(self.mean_ssim, '8.4f')} "
                     f"{fmt(self.mean_msssim, '8.4f')}")
        return "\n".join(lines) + "\n"

    def to_jsonl(self) -> str:
        rows = [json.dumps({"path": i.path, "psnr": i.psnr, "ssim": i.ssim, "msssim": i.msssim,
                            **({"error": i.error} if i.error else {})}) for i in self.items]
        return "\n".join(rows) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        companion = path.with_suffix(".jsonl")
        companion.write_text(self.to_jsonl())
        return companion


def score_pair(path: str, restored: np.ndarray, sharp: np.ndarray, quantized: bool = False) -> ImageScore:
    if quantized:
        restored, sharp = io.to_uint8(restored) / 255.0, io.to_uint8(sharp) / 255.0
    ms = ms_ssim(restored, sharp) if min(sharp.shape[-2:]) >= ms_ssim_min_size() else None
    return ImageScore(path, psnr(restored, sharp), ssim(restored, sharp), ms)


def evaluate_dataset(dataset_dir, restore: Restorer, checkpoint: str = "", scales: int = 0,
                     quantized: bool = False) -> MetricReport:
    """Score ``restore(blurry)`` against sharp ground truth, in manifest order.

    A pair that cannot be read or scored becomes an error entry; the rest
    of the dataset is still evaluated.
    """
    root = Path(dataset_dir)
    items = []
    for e in read_manifest(root):
        try:
            blurry = io.read_image(root / e.blur)
            sharp = io.read_image(root / e.sharp)
            items.append(score_pair(e.blur, restore(blurry), sharp, quantized))
        except (OSError, ValueError, ShapeError) as exc:
            items.append(ImageScore(e.blur, error=f"{type(exc).__name__}: {exc}"))
    return MetricReport(items, checkpoint, scales, quantized)
