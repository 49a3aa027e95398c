"""Gaussian pyramids and paired training-time augmentation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import ShapeError
from .blur_synth import BlurPair

BINOMIAL_5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _blur_axis(x: np.ndarray, axis: int) -> np.ndarray:
    pad = [(0, 0)] * x.ndim
    pad[axis] = (2, 2)
    xp = np.pad(x, pad, mode="reflect")
    n = x.shape[axis]
    out = np.zeros_like(x)
    for i, w in enumerate(BINOMIAL_5):
        out += w * np.take(xp, np.arange(i, i + n), axis=axis)
    return out


def pyramid_down(x: np.ndarray) -> np.ndarray:
    """Separable (1,4,6,4,1)/16 blur with reflect borders, then keep every other pixel."""
    y = _blur_axis(_blur_axis(x, -1), -2)
    return y[..., ::2, ::2]


def gaussian_pyramid(image: np.ndarray, levels: int) -> list[np.ndarray]:
    """``[image, down(image), ...]``, finest first. Works on (..., H, W) arrays."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    h, w = image.shape[-2:]
    f = 2 ** (levels - 1)
    if h % f or w % f:
        raise ShapeError(f"{h}x{w} is not divisible by {f} for a {levels}-level pyramid")
    pyr = [image]
    for _ in range(levels - 1):
        pyr.append(pyramid_down(pyr[-1]))
    return pyr


@dataclass
class PyramidPair:
    blurry_levels: list[np.ndarray]
    sharp_levels: list[np.ndarray]

    @classmethod
    def from_images(cls, blurry: np.ndarray, sharp: np.ndarray, levels: int) -> "PyramidPair":
        return cls(gaussian_pyramid(blurry, levels), gaussian_pyramid(sharp, levels))


def stack_pyramids(pairs: list[PyramidPair]) -> PyramidPair:
    """Batch a list of per-image (C, H, W) pyramids into (N, C, H, W) levels."""
    K = len(pairs[0].blurry_levels)
    return PyramidPair([np.stack([p.blurry_levels[k] for p in pairs]) for k in range(K)],
                       [np.stack([p.sharp_levels[k] for p in pairs]) for k in range(K)])


# ---------------------------------------------------------------------------
# color space


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone HSV for channel-first (3, ...) arrays; H in [0, 1)."""
    r, g, b = rgb[0], rgb[1], rgb[2]
    v = np.max(rgb[:3], axis=0)
    c = v - np.min(rgb[:3], axis=0)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)
    safe = np.where(c > 0, c, 1.0)
    h = np.where(v == r, ((g - b) / safe) % 6.0,
                 np.where(v == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    # tiny negative (g - b) rounds to 6.0 under % 6; wrap again to keep H < 1
    h = np.where(c > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v])


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[0], hsv[1], hsv[2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b])


def scale_saturation(rgb: np.ndarray, factor: float) -> np.ndarray:
    if factor == 1.0:
        return rgb
    hsv = rgb_to_hsv(rgb)
    hsv[1] = np.clip(hsv[1] * factor, 0.0, 1.0)
    return hsv_to_rgb(hsv)


# ---------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class AugmentConfig:
    hflip: bool = True
    vflip: bool = True
    rotations: tuple[int, ...] = (0, 90, 180, 270)
    permute_channels: bool = True
    saturation: tuple[float, float] | None = (0.5, 1.5)
    noise_sigma_std: float | None = 2.0 / 255.0
    seed: int = 0

    @classmethod
    def disabled(cls, seed: int = 0) -> "AugmentConfig":
        return cls(hflip=False, vflip=False, rotations=(0,), permute_channels=False,
                   saturation=None, noise_sigma_std=None, seed=seed)


@dataclass(frozen=True)
class AugmentDraw:
    """The random choices behind one augmentation, shared by blurry and sharp."""
    hflip: bool
    vflip: bool
    rot90: int
    perm: tuple[int, ...]
    saturation: float
    noise_sigma: float


def draw_augmentation(cfg: AugmentConfig, rng: np.random.Generator, channels: int = 3) -> AugmentDraw:
    hflip = bool(cfg.hflip and rng.random() < 0.5)
    vflip = bool(cfg.vflip and rng.random() < 0.5)
    rot = int(cfg.rotations[rng.integers(len(cfg.rotations))]) if len(cfg.rotations) > 1 else cfg.rotations[0]
    if rot % 90:
        raise ValueError(f"rotation {rot} is not a multiple of 90 degrees")
    perm = tuple(int(i) for i in rng.permutation(channels)) if cfg.permute_channels else tuple(range(channels))
    sat = float(rng.uniform(*cfg.saturation)) if cfg.saturation else 1.0
    sigma = abs(float(rng.normal(0.0, cfg.noise_sigma_std))) if cfg.noise_sigma_std else 0.0
    return AugmentDraw(hflip, vflip, (rot // 90) % 4, perm, sat, sigma)


def apply_geometric(img: np.ndarray, d: AugmentDraw) -> np.ndarray:
    """Flips, right-angle rotation and channel permutation on a (C, H, W) image."""
    if d.hflip:
        img = img[:, :, ::-1]
    if d.vflip:
        img = img[:, ::-1, :]
    if d.rot90:
        img = np.rot90(img, d.rot90, axes=(1, 2))
    return np.ascontiguousarray(img[list(d.perm)])


def augment(pair: BlurPair, cfg: AugmentConfig, rng: np.random.Generator) -> BlurPair:
    """Identical geometric/color draws for both images; noise only on the blurry one."""
    if pair.blurry.shape != pair.sharp.shape:
        raise ShapeError(f"blurry {pair.blurry.shape} vs sharp {pair.sharp.shape}")
    d = draw_augmentation(cfg, rng, pair.blurry.shape[0])
    blurry = scale_saturation(apply_geometric(pair.blurry, d), d.saturation)
    sharp = scale_saturation(apply_geometric(pair.sharp, d), d.saturation)
    if d.noise_sigma > 0:
        blurry = blurry + rng.normal(0.0, d.noise_sigma, size=blurry.shape)
    return replace(pair, blurry=np.clip(blurry, 0.0, 1.0), sharp=np.clip(sharp, 0.0, 1.0))
