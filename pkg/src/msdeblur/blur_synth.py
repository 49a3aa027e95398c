"""Blurry/sharp pair synthesis by averaging high-frame-rate frames.

Averaging happens on linear sensor signal: observed frames are mapped
through the inverse gamma CRF, averaged, and mapped back. The sharp target
is the middle frame of the window.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError


@dataclass(frozen=True)
class GammaCRF:
    gamma: float = 2.2

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def _check_nonnegative(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("CRF input contains negative values")
    return x


def crf_apply(signal: np.ndarray, crf: GammaCRF = GammaCRF()) -> np.ndarray:
    """Linear signal -> observed value, ``x ** (1/gamma)``."""
    return _check_nonnegative(signal) ** (1.0 / crf.gamma)


def crf_invert(observed: np.ndarray, crf: GammaCRF = GammaCRF()) -> np.ndarray:
    """Observed value -> linear signal, ``x ** gamma``."""
    return _check_nonnegative(observed) ** crf.gamma


@dataclass
class FrameSequence:
    frames: np.ndarray  # (T, C, H, W), observed values in [0, 1]
    fps: float = 240.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4 or len(self.frames) < 1:
            raise ShapeError(f"frames must be a non-empty (T, C, H, W) stack, got {self.frames.shape}")

    def __len__(self) -> int:
        return len(self.frames)

    def exposure(self, window: int) -> float:
        """Simulated exposure time, in seconds, of a ``window``-frame average."""
        return window / self.fps


@dataclass
class BlurPair:
    blurry: np.ndarray  # (C, H, W)
    sharp: np.ndarray
    start: int = 0
    length: int = 1
    gamma: float = 2.2
    extra: dict = field(default_factory=dict)


def _as_window(window) -> np.ndarray:
    if isinstance(window, FrameSequence):
        window = window.frames
    if isinstance(window, (list, tuple)):
        if not window:
            raise ValueError("empty window")
        shapes = {np.shape(f) for f in window}
        if len(shapes) != 1:
            raise ShapeError(f"frames in a window differ in shape: {sorted(shapes)}")
        window = np.stack(window)
    window = np.asarray(window, dtype=np.float64)
    if len(window) == 0:
        raise ValueError("empty window")
    return window


def synthesize_blur(window, crf: GammaCRF = GammaCRF()) -> np.ndarray:
    """``g(mean_i g^-1(frame_i))`` over the window."""
    frames = _as_window(window)
    linear = crf_invert(frames, crf)
    blurry = np.clip(crf_apply(linear.mean(axis=0), crf), 0.0, 1.0)
    # pixels that never change are returned untouched, free of pow/mean rounding
    static = np.all(frames == frames[0], axis=0)
    return np.where(static, frames[0], blurry)


def mid_index(m: int) -> int:
    """Sharp frame index inside an ``m``-frame window; ``m // 2`` (the later one for even m)."""
    if m < 1:
        raise ValueError("empty window")
    return m // 2


def select_sharp(window) -> np.ndarray:
    frames = _as_window(window)
    return frames[mid_index(len(frames))]


# ---------------------------------------------------------------------------
# uniform-kernel comparison blur


@dataclass(frozen=True)
class UniformKernel:
    taps: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] % 2 == 0 or t.shape[1] % 2 == 0:
            raise ValueError(f"kernel must be 2-D with odd sides, got {t.shape}")
        if np.any(t < 0):
            raise ValueError("kernel taps must be nonnegative")
        if abs(t.sum() - 1.0) > 1e-9:
            raise ValueError(f"kernel taps sum to {t.sum()}, expected 1")
        object.__setattr__(self, "taps", t)

    @classmethod
    def box(cls, size: int) -> "UniformKernel":
        return cls(np.full((size, size), 1.0 / size**2))

    @classmethod
    def line(cls, length: int) -> "UniformKernel":
        """Horizontal linear-motion kernel."""
        t = np.zeros((length, length))
        t[length // 2] = 1.0 / length
        return cls(t)


def uniform_kernel_blur(sharp: np.ndarray, kernel: UniformKernel, noise_sigma: float = 0.0,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Blur every channel of a (..., H, W) image with one kernel, reflect-padded.

    The kernel is applied as a true convolution (flipped). Gaussian noise is
    added afterwards and the result clipped to [0, 1].
    """
    taps = kernel.taps[::-1, ::-1]
    kh, kw = taps.shape
    ph, pw = kh // 2, kw // 2
    x = np.asarray(sharp, dtype=np.float64)
    pad = [(0, 0)] * (x.ndim - 2) + [(ph, ph), (pw, pw)]
    xp = np.pad(x, pad, mode="reflect")
    h, w = x.shape[-2:]
    out = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            if taps[i, j]:
                out += taps[i, j] * xp[..., i : i + h, j : j + w]
    if noise_sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        out = out + rng.normal(0.0, noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# dataset generation


def window_starts(n_frames: int, stride: int) -> range:
    return range(0, n_frames, stride)


def generate_dataset(sequence: FrameSequence, window_sizes, stride: int,
                     crf: GammaCRF = GammaCRF(), seed: int = 0) -> list[BlurPair]:
    """Slide windows over the sequence and emit one pair per placement.

    Each placement draws its window length uniformly from ``window_sizes``
    with an RNG seeded by ``(seed, placement index)``. Placements that would
    run past the end are dropped.
    """
    sizes = [int(m) for m in window_sizes]
    if not sizes:
        raise ValueError("window_sizes is empty")
    even = [m for m in sizes if m % 2 == 0 or m < 1]
    if even:
        raise ValueError(f"window sizes must be odd and positive, got {even}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n = len(sequence)
    if n < max(sizes):
        warnings.warn(f"sequence has {n} frames, shorter than the largest window {max(sizes)}; "
                      "no pairs generated", RuntimeWarning, stacklevel=2)
        return []
    pairs = []
    for idx, start in enumerate(window_starts(n, stride)):
        rng = np.random.default_rng([seed, idx])
        m = sizes[int(rng.integers(len(sizes)))]
        if start + m > n:
            continue
        window = sequence.frames[start : start + m]
        pairs.append(BlurPair(blurry=synthesize_blur(window, crf), sharp=window[mid_index(m)].copy(),
                              start=start, length=m, gamma=crf.gamma))
    return pairs
