"""Write a procedural high-frame-rate sequence as numbered PNGs plus meta.txt.

The output directory is ready for ``msdeblur synth --input <dir>``.
"""

import argparse

from msdeblur.cli import write_sequence
from msdeblur.synthetic import moving_scene, translating_square


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["scene", "square"], default="scene")
    p.add_argument("--frames", type=int, default=80)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--objects", type=int, default=4)
    p.add_argument("--max-speed", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=float, default=240.0)
    a = p.parse_args()
    if a.kind == "square":
        seq = translating_square(a.frames, a.size, fps=a.fps)
    else:
        seq = moving_scene(a.frames, a.size, a.objects, a.seed, a.max_speed, a.fps)
    write_sequence(seq, a.out)
    print(f"wrote {len(seq)} frames of {a.size}x{a.size} to {a.out}")


if __name__ == "__main__":
    main()
