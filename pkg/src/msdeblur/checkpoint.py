"""Lossless save/restore of a full training state."""

from __future__ import annotations

import json

import numpy as np

from . import io
from .autodiff import AdamState
from .config import RunConfig
from .io import CheckpointError
from .model import check_params, discriminator_param_shapes, generator_param_shapes
from .trainer import TrainState

_OPTIMIZERS = ("gen_opt", "disc_opt")


def save_checkpoint(state: TrainState, run: RunConfig, path) -> None:
    header: dict = dict(run.to_kv())
    header["state.iteration"] = state.iteration
    header["state.lr"] = float(state.lr)
    header["state.rng"] = json.dumps(state.rng.bit_generator.state, sort_keys=True)
    for name in _OPTIMIZERS:
        opt: AdamState = getattr(state, name)
        header[f"state.{name}.step"] = opt.step
        header[f"state.{name}.beta1"] = float(opt.beta1)
        header[f"state.{name}.beta2"] = float(opt.beta2)
        header[f"state.{name}.eps"] = float(opt.eps)
    arrays = {}
    for group in ("gen", "disc"):
        for k, v in getattr(state, group).items():
            arrays[f"{group}/{k}"] = v
    for name in _OPTIMIZERS:
        opt = getattr(state, name)
        for k in sorted(opt.m):
            arrays[f"{name}.m/{k}"] = opt.m[k]
            arrays[f"{name}.v/{k}"] = opt.v[k]
    io.write_checkpoint(path, header, arrays)


def load_checkpoint(path, expected: RunConfig | None = None) -> tuple[TrainState, RunConfig]:
    """Restore ``(state, run_config)``.

    With ``expected`` given, the stored generator and discriminator specs
    must match it exactly.
    """
    header, arrays = io.read_checkpoint(path)
    kv = {k: v for k, v in header.items() if not k.startswith("state.")}
    try:
        run = RunConfig.from_kv(kv)
    except (ValueError, TypeError) as e:
        raise CheckpointError(f"{path}: bad stored config: {e}") from e
    if expected is not None and (run.generator != expected.generator
                                 or run.discriminator != expected.discriminator):
        raise CheckpointError(f"{path}: stored model spec {run.generator} does not match the requested one "
                              f"{expected.generator}")
    dtype = np.dtype(run.train.dtype)

    def group(prefix):
        n = len(prefix) + 1
        return {k[n:]: v.astype(dtype) for k, v in arrays.items() if k.startswith(prefix + "/")}

    gen, disc = group("gen"), group("disc")
    try:
        check_params(gen, generator_param_shapes(run.generator))
        check_params(disc, discriminator_param_shapes(run.discriminator))
    except ValueError as e:
        raise CheckpointError(f"{path}: {e}") from e

    opts = {}
    for name in _OPTIMIZERS:
        opts[name] = AdamState(m=group(f"{name}.m"), v=group(f"{name}.v"),
                               step=int(header[f"state.{name}.step"]),
                               beta1=float(header[f"state.{name}.beta1"]),
                               beta2=float(header[f"state.{name}.beta2"]),
                               eps=float(header[f"state.{name}.eps"]))
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(header["state.rng"])
    state = TrainState(gen, disc, opts["gen_opt"], opts["disc_opt"], rng,
                       int(header["state.iteration"]), float(header["state.lr"]))
    return state, run
