"""``msdeblur`` command line: synth, augment-preview, train, infer, eval, gradcheck.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .autodiff import DivergenceError
from .blur_synth import BlurPair, FrameSequence, GammaCRF, generate_dataset
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PRESETS, RunConfig
from .evaluate import (ManifestEntry, deblur_image, evaluate_dataset, generator_restorer,
                       identity_restorer, load_pairs)
from .pyramid import AugmentConfig, augment
from .trainer import TrainState, train
from .verification import SCOPES, run_scope

log = logging.getLogger("msdeblur")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# ---------------------------------------------------------------------------
# synth


def read_sequence(directory) -> FrameSequence:
    """Numbered frames (lexicographic = temporal) plus ``meta.txt`` declaring ``fps``."""
    directory = Path(directory)
    meta = directory / "meta.txt"
    if not meta.exists():
        raise UsageError(f"{directory} has no meta.txt declaring fps")
    kv = io.read_kv(meta)
    if "fps" not in kv:
        raise UsageError(f"{meta} does not declare fps")
    files = io.list_images(directory)
    if not files:
        raise UsageError(f"no image frames in {directory}")
    return FrameSequence(np.stack([io.read_image(f) for f in files]), float(kv["fps"]))


def write_sequence(seq: FrameSequence, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        io.write_image(directory / f"{i:06d}.png", frame)
    (directory / "meta.txt").write_text(f"fps = {seq.fps!r}\n")


def write_dataset(pairs: list[BlurPair], out) -> list[ManifestEntry]:
    out = Path(out)
    (out / "blur").mkdir(parents=True, exist_ok=True)
    (out / "sharp").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, p in enumerate(pairs):
        name = f"{i:06d}.png"
        io.write_image(out / "blur" / name, p.blurry)
        io.write_image(out / "sharp" / name, p.sharp)
        entries.append(ManifestEntry(f"blur/{name}", f"sharp/{name}", p.start, p.length, p.gamma))
    (out / "manifest.txt").write_text("".join(e.line() + "\n" for e in entries))
    return entries


def cmd_synth(args) -> int:
    seq = read_sequence(args.input)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pairs = generate_dataset(seq, args.windows, args.stride, GammaCRF(args.gamma), args.seed)
    for w in caught:
        log.warning("%s", w.message)
    write_dataset(pairs, args.output)
    echo = {"input": str(args.input), "output": str(args.output), "windows": ",".join(map(str, args.windows)),
            "stride": args.stride, "gamma": args.gamma, "seed": args.seed, "fps": seq.fps}
    (Path(args.output) / "run_config.txt").write_text(io.format_kv(echo))
    print(f"wrote {len(pairs)} pairs to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# augment-preview


def cmd_augment_preview(args) -> int:
    pair = BlurPair(io.read_image(args.blur), io.read_image(args.sharp))
    rng = np.random.default_rng(args.seed)
    cfg = AugmentConfig(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        a = augment(pair, cfg, rng)
        io.write_image(out / f"aug{i:03d}_blur.png", a.blurry)
        io.write_image(out / f"aug{i:03d}_sharp.png", a.sharp)
    print(f"wrote {args.n} augmented pairs to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def load_run_config(args) -> RunConfig:
    kv = io.read_kv(args.config) if args.config else {}
    if args.preset:
        kv["preset"] = args.preset
    for item in args.set or []:
        k, sep, v = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        kv[k.strip()] = v.strip()
    try:
        return RunConfig.from_kv(kv)
    except (ValueError, TypeError) as e:
        raise UsageError(str(e)) from e


def cmd_train(args) -> int:
    run = load_run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pairs = load_pairs(args.dataset)
    if not pairs:
        raise UsageError(f"dataset {args.dataset} is empty")
    if args.resume:
        state, stored = load_checkpoint(args.resume, expected=run)
        run = stored if not args.config and not args.set else run
    else:
        state = TrainState.create(run.generator, run.discriminator, run.train)
    (out / "config.txt").write_text(run.to_text())

    def checkpoint(s):
        save_checkpoint(s, run, out / f"checkpoint_{s.iteration:06d}.ckpt")

    mode = "a" if args.resume else "w"
    with open(out / "loss.log", mode) as logf:
        if mode == "w":
            logf.write("# iteration content adv_g adv_d total lr\n")
        try:
            train(state, pairs, run.train, run.generator, run.discriminator, log_file=logf,
                  on_checkpoint=checkpoint)
        except DivergenceError as e:
            log.error("training diverged: %s; earlier checkpoints left untouched", e)
            return EXIT_NUMERIC
    save_checkpoint(state, run, out / "final.ckpt")
    print(f"trained to iteration {state.iteration}; checkpoint {out / 'final.ckpt'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# infer


def cmd_infer(args) -> int:
    state, run = load_checkpoint(args.checkpoint)
    src = Path(args.input)
    files = io.list_images(src) if src.is_dir() else [src]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for f in files:
        try:
            img = io.read_image(f)
        except OSError as e:
            log.error("cannot read %s: %s", f, e)
            failures += 1
            continue
        finest, levels = deblur_image(img, state.gen, run.generator, all_levels=True)
        io.write_image(out / f"{f.stem}.png", finest)
        if args.levels:
            for k, lvl in enumerate(levels[1:], start=2):
                io.write_image(out / f"{f.stem}_level{k}.png", lvl)
    print(f"restored {len(files) - failures}/{len(files)} images into {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    if args.identity:
        restore, name, scales = identity_restorer, "identity", args.scales or 0
    else:
        if not args.checkpoint:
            raise UsageError("eval needs --checkpoint (or --identity)")
        state, run = load_checkpoint(args.checkpoint)
        if args.scales and args.scales != run.generator.scales:
            raise UsageError(f"checkpoint was trained with K={run.generator.scales}, "
                             f"--scales {args.scales} requested; train a model at that scale count")
        restore, name, scales = generator_restorer(state.gen, run.generator), str(args.checkpoint), run.generator.scales
    report = evaluate_dataset(args.dataset, restore, name, scales, args.quantized)
    companion = report.write(args.out)
    print(report.to_text(), end="")
    print(f"wrote {args.out} and {companion}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck(args) -> int:
    reports = run_scope(args.scope, args.seed, args.corrupt)
    ok = True
    for name, rep in reports.items():
        print(f"{name:<16} {rep}")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="msdeblur", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="build blurry/sharp pairs from a frame sequence")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--windows", type=_int_list, default=[7, 9, 11, 13])
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--gamma", type=float, default=2.2)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("augment-preview", help="write N random augmentations of one pair")
    s.add_argument("--blur", required=True)
    s.add_argument("--sharp", required=True)
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_augment_preview)

    s = sub.add_parser("train", help="train generator and discriminator")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--preset", choices=PRESETS)
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    s.add_argument("--resume", help="checkpoint to continue from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="deblur an image or a directory of images")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--levels", action="store_true", help="also write the coarser latent levels")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="PSNR/SSIM/MS-SSIM report over a dataset")
    s.add_argument("--checkpoint")
    s.add_argument("--dataset", required=True)
    s.add_argument("--scales", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--quantized", action="store_true", help="round both images to 8 bits first")
    s.add_argument("--identity", action="store_true", help="score the blurry input itself")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of the backward passes")
    s.add_argument("--scope", choices=SCOPES, default="layer")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--corrupt", action="store_true", help="negative control: scale backward by 2")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, io.CheckpointError, FileNotFoundError) as e:
        print(f"msdeblur {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as e:
        print(f"msdeblur {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
