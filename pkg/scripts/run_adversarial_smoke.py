"""Joint generator/discriminator run with the adversarial term switched on.

Prints the loss stream every few iterations, then trains only the
discriminator against a frozen random generator to show it separates
real from generated images.
"""

import argparse
from dataclasses import replace

import numpy as np

from msdeblur.blur_synth import generate_dataset
from msdeblur.model import DiscriminatorSpec, GeneratorSpec
from msdeblur.synthetic import moving_scene
from msdeblur.trainer import TrainConfig, TrainState, frozen_generator_d_losses, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--lam", type=float, default=1e-4)
    p.add_argument("--d-steps", type=int, default=60)
    p.add_argument("--non-saturating", action="store_true")
    a = p.parse_args()

    pairs = generate_dataset(moving_scene(80, 64, 4, seed=0, max_speed=2.0), [7, 9, 11, 13], 8)[:8]
    gspec, dspec = GeneratorSpec.desk(), DiscriminatorSpec.desk()
    cfg = replace(TrainConfig.desk(), lam=a.lam, non_saturating=a.non_saturating)
    state = TrainState.create(gspec, dspec, cfg)
    history = train(state, pairs, cfg, gspec, dspec, a.iterations)
    for i, h in enumerate(history, 1):
        if i % 20 == 0 or i == 1:
            print(h.log_line(i, cfg.lr))
    d = frozen_generator_d_losses(pairs, replace(gspec, tail_init="he"), dspec, cfg, a.d_steps)
    print(f"frozen-generator D loss: first-10 mean {np.mean(d[:10]):.4f}  last-10 mean {np.mean(d[-10:]):.4f}")


if __name__ == "__main__":
    main()
