"""Procedural high-frame-rate sequences for tests and desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .blur_synth import FrameSequence


def translating_square(n_frames: int = 9, size: int = 64, square: int = 8, speed: int = 1,
                       origin: tuple[int, int] = (28, 20), channels: int = 3,
                       fps: float = 240.0) -> FrameSequence:
    """White ``square`` x ``square`` block moving right ``speed`` px/frame on black."""
    frames = np.zeros((n_frames, channels, size, size))
    y0, x0 = origin
    for i in range(n_frames):
        x = x0 + i * speed
        if x + square > size:
            raise ValueError("square leaves the frame; shorten the sequence")
        frames[i, :, y0 : y0 + square, x : x + square] = 1.0
    return FrameSequence(frames, fps)


def _smooth_noise(rng: np.random.Generator, shape: tuple[int, int], cells: int) -> np.ndarray:
    """Bilinearly upsampled coarse noise in [0, 1]."""
    h, w = shape
    coarse = rng.random((cells + 1, cells + 1))
    ys = np.linspace(0, cells, h, endpoint=False)
    xs = np.linspace(0, cells, w, endpoint=False)
    y0, x0 = ys.astype(int), xs.astype(int)
    fy, fx = (ys - y0)[:, None], (xs - x0)[None, :]
    c00 = coarse[y0][:, x0]
    c01 = coarse[y0][:, x0 + 1]
    c10 = coarse[y0 + 1][:, x0]
    c11 = coarse[y0 + 1][:, x0 + 1]
    return (1 - fy) * ((1 - fx) * c00 + fx * c01) + fy * ((1 - fx) * c10 + fx * c11)


def moving_scene(n_frames: int = 40, size: int = 64, n_objects: int = 4, seed: int = 0,
                 max_speed: float = 2.0, fps: float = 240.0) -> FrameSequence:
    """Static textured background with several flat-colored boxes moving at constant velocity.

    Objects wrap around the frame edges so every frame stays fully populated.
    Positions are integer-rounded each frame, so the background stays exactly
    static wherever no object passes.
    """
    rng = np.random.default_rng(seed)
    bg = np.stack([0.15 + 0.5 * _smooth_noise(rng, (size, size), 4) for _ in range(3)])
    objs = []
    for _ in range(n_objects):
        h, w = rng.integers(size // 8, size // 3, size=2)
        color = rng.uniform(0.0, 1.0, size=3)
        stripe = rng.integers(2, 5)
        pos = rng.uniform(0, size, size=2)
        angle = rng.uniform(0, 2 * np.pi)
        speed = rng.uniform(0.5, 1.0) * max_speed
        vel = speed * np.array([np.sin(angle), np.cos(angle)])
        objs.append((int(h), int(w), color, int(stripe), pos, vel))

    frames = np.empty((n_frames, 3, size, size))
    yy, xx = np.mgrid[0:size, 0:size]
    for t in range(n_frames):
        f = bg.copy()
        for h, w, color, stripe, pos, vel in objs:
            y, x = np.round(pos + t * vel).astype(int)
            inside = (((yy - y) % size) < h) & (((xx - x) % size) < w)
            # vertical stripes give the boxes internal edges to smear
            shade = np.where(((xx - x) % size) // stripe % 2 == 0, 1.0, 0.55)
            for c in range(3):
                f[c][inside] = (color[c] * shade)[inside]
        frames[t] = f
    return FrameSequence(np.clip(frames, 0.0, 1.0), fps)
