"""Best PSNR any shift-invariant linear filter reaches on the overfit pairs.

Fits one (2r+1)^2 x 3 -> 3 filter by least squares over all 8 pairs, which
bounds what a near-linear network can gain early in training.
"""

import argparse

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from msdeblur.blur_synth import generate_dataset
from msdeblur.metrics import psnr
from msdeblur.synthetic import moving_scene


def patches(img: np.ndarray, r: int) -> np.ndarray:
    padded = np.pad(img, ((0, 0), (r, r), (r, r)), mode="reflect")
    win = sliding_window_view(padded, (2 * r + 1, 2 * r + 1), axis=(1, 2))  # (C, H, W, k, k)
    c, h, w = img.shape
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, -1)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--radius", type=int, nargs="+", default=[0, 2, 4, 8])
    a = p.parse_args()
    pairs = generate_dataset(moving_scene(80, 64, 4, seed=0, max_speed=2.0), [7, 9, 11, 13], 8)[:8]
    base = np.mean([psnr(q.blurry, q.sharp) for q in pairs])
    print(f"blurry PSNR {base:.2f} dB")
    for r in a.radius:
        X = np.concatenate([patches(q.blurry, r) for q in pairs])
        X = np.hstack([X, np.ones((len(X), 1))])
        Y = np.concatenate([q.sharp.reshape(3, -1).T for q in pairs])
        coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
        fit = np.clip(X @ coef, 0, 1)
        n = 64 * 64
        out = [fit[i * n:(i + 1) * n].T.reshape(3, 64, 64) for i in range(len(pairs))]
        best = np.mean([psnr(o, q.sharp) for o, q in zip(out, pairs)])
        print(f"radius {r}: {best:.2f} dB ({best - base:+.2f})")


if __name__ == "__main__":
    main()
