"""Finite-difference gradient checks for every differentiable piece, at desk scale."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import autodiff as ad
from . import model as M
from .autodiff import ConvParams, GradcheckReport, gradcheck

SCOPES = ("layer", "resblock", "generator", "discriminator")
TOLERANCE = 1e-4
EPS = 1e-5
# test points keep every rectifier input at least this far from its kink
KINK_MARGIN = 1e-4


def _away_from_zero(x: np.ndarray, margin: float = 1e-3) -> np.ndarray:
    """Push entries out of (-margin, margin) so FD steps never straddle a kink."""
    return np.where(np.abs(x) < margin, np.copysign(margin, x) + x, x)


def conv_fn(stride=1, padding=2):
    def fn(inp):
        p = ConvParams(inp["w"], inp["b"], stride, padding)
        out = ad.conv2d(inp["x"], p)

        def pullback(g):
            gx, gw, gb = ad.conv2d_backward(inp["x"], p, g)
            return {"x": gx, "w": gw, "b": gb}
        return out, pullback
    return fn


def upconv_fn(stride=2, padding=1):
    def fn(inp):
        p = ConvParams(inp["w"], inp["b"], stride, padding)
        out = ad.upconv2d(inp["x"], p)

        def pullback(g):
            gx, gw, gb = ad.upconv2d_backward(inp["x"], p, g)
            return {"x": gx, "w": gw, "b": gb}
        return out, pullback
    return fn


def elementwise_fn(kind: str, slope: float = 0.2):
    def fn(inp):
        x = inp["x"]
        if kind == "relu":
            return ad.relu(x), lambda g: {"x": ad.relu_backward(x, g)}
        if kind == "leaky_relu":
            return ad.leaky_relu(x, slope), lambda g: {"x": ad.leaky_relu_backward(x, g, slope)}
        y = ad.sigmoid(x)
        return y, lambda g: {"x": ad.sigmoid_backward(y, g)}
    return fn


def resblock_fn():
    def fn(inp):
        p1 = ConvParams(inp["w1"], inp["b1"], 1, 2)
        p2 = ConvParams(inp["w2"], inp["b2"], 1, 2)
        out, pb = M.resblock_vjp(inp["x"], p1, p2)

        def pullback(g):
            gx, (gw1, gb1), (gw2, gb2) = pb(g)
            return {"x": gx, "w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}
        return out, pullback
    return fn


def generator_fn(spec: M.GeneratorSpec):
    def fn(inp):
        pyr = [inp[f"B{k + 1}"] for k in range(spec.scales)]
        params = {k: v for k, v in inp.items() if not k.startswith("B")}
        latents, pb = M.generator_vjp(pyr, params, spec)
        sizes = [l.size for l in latents]
        out = np.concatenate([l.ravel() for l in latents])

        def pullback(g):
            parts = np.split(g, np.cumsum(sizes)[:-1])
            grads, g_pyr = pb([p.reshape(l.shape) for p, l in zip(parts, latents)])
            grads.update({f"B{k + 1}": gp for k, gp in enumerate(g_pyr)})
            return grads
        return out, pullback
    return fn


def discriminator_fn(spec: M.DiscriminatorSpec):
    def fn(inp):
        params = {k: v for k, v in inp.items() if k != "image"}
        prob, pb = M.discriminator_vjp(inp["image"], params, spec)

        def pullback(g):
            grads, gi = pb(g)
            grads["image"] = gi
            return grads
        return prob, pullback
    return fn


def _maybe_corrupt(fn, corrupt_backward: bool):
    return ad.corrupt(fn) if corrupt_backward else fn


def check_layers(seed: int = 0, corrupt_backward: bool = False, samples: int = 30) -> dict[str, GradcheckReport]:
    rng = np.random.default_rng(seed)
    n = rng.standard_normal
    reports = {}
    reports["conv2d"] = gradcheck(_maybe_corrupt(conv_fn(1, 2), corrupt_backward),
                                  {"x": n((1, 2, 6, 6)), "w": n((3, 2, 5, 5)), "b": n(3)},
                                  TOLERANCE, EPS, samples, seed)
    reports["conv2d_strided"] = gradcheck(_maybe_corrupt(conv_fn(2, 2), corrupt_backward),
                                          {"x": n((2, 2, 9, 9)), "w": n((3, 2, 5, 5)), "b": n(3)},
                                          TOLERANCE, EPS, samples, seed)
    reports["upconv2d"] = gradcheck(_maybe_corrupt(upconv_fn(2, 1), corrupt_backward),
                                    {"x": n((2, 3, 4, 4)), "w": n((3, 2, 4, 4)), "b": n(2)},
                                    TOLERANCE, EPS, samples, seed)
    for kind in ("relu", "leaky_relu", "sigmoid"):
        reports[kind] = gradcheck(_maybe_corrupt(elementwise_fn(kind), corrupt_backward),
                                  {"x": _away_from_zero(n((2, 3, 4, 4)))}, TOLERANCE, EPS, samples, seed)
    return reports


def check_resblock(seed: int = 0, corrupt_backward: bool = False, samples: int = 30,
                   channels: int = 4, size: int = 8) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(channels * 25)
    inp = {"x": rng.standard_normal((1, channels, size, size)),
           "w1": rng.standard_normal((channels, channels, 5, 5)) * scale, "b1": rng.standard_normal(channels) * 0.1,
           "w2": rng.standard_normal((channels, channels, 5, 5)) * scale, "b2": rng.standard_normal(channels) * 0.1}
    return gradcheck(_maybe_corrupt(resblock_fn(), corrupt_backward), inp, TOLERANCE, EPS, samples, seed)


def check_generator(seed: int = 0, corrupt_backward: bool = False, samples: int = 5,
                    spec: M.GeneratorSpec | None = None, size: int = 32) -> GradcheckReport:
    # a zero tail would zero every upstream gradient; check at a generic point
    spec = replace(spec or M.GeneratorSpec.desk(), tail_init="he")
    rng = np.random.default_rng(seed)
    inp = dict(M.init_generator(spec, rng))
    for k in inp:
        if k.endswith(".b"):
            inp[k] = rng.standard_normal(inp[k].shape) * 0.05
    for level in range(spec.scales):
        s = size >> level
        inp[f"B{level + 1}"] = rng.random((1, spec.image_channels, s, s))
    return gradcheck(_maybe_corrupt(generator_fn(spec), corrupt_backward), inp, TOLERANCE, EPS, samples, seed)


def discriminator_preactivations(image, params, spec: M.DiscriminatorSpec) -> list[np.ndarray]:
    h, pre = image, []
    for i, (_, _, k, s) in enumerate(spec.convs):
        a = ad.conv2d(h, M._conv(params, f"d.conv{i + 1:02d}", s, (k - 1) // 2))
        pre.append(a)
        h = ad.leaky_relu(a, spec.slope)
    return pre


def check_discriminator(seed: int = 0, corrupt_backward: bool = False, samples: int = 12,
                        spec: M.DiscriminatorSpec | None = None, margin: float = KINK_MARGIN,
                        max_draws: int = 500) -> GradcheckReport:
    """Gradcheck at a point where no LeakyReLU input lies within ``margin`` of 0.

    A unit sitting closer to its kink than the finite-difference step
    reaches makes central differences average two slopes, so test points
    are redrawn (deterministically from ``seed``) until every unit clears it.
    """
    spec = spec or M.DiscriminatorSpec.desk()
    rng = np.random.default_rng(seed)
    for _ in range(max_draws):
        inp = dict(M.init_discriminator(spec, rng))
        for k in inp:
            if k.endswith(".b"):
                inp[k] = rng.standard_normal(inp[k].shape) * 0.05
        inp["image"] = rng.random((1, spec.convs[0][1], spec.input_size, spec.input_size))
        params = {k: v for k, v in inp.items() if k != "image"}
        if min(np.abs(a).min() for a in discriminator_preactivations(inp["image"], params, spec)) >= margin:
            break
    else:
        raise RuntimeError(f"no kink-free discriminator test point in {max_draws} draws")
    return gradcheck(_maybe_corrupt(discriminator_fn(spec), corrupt_backward), inp, TOLERANCE, EPS, samples, seed)


def run_scope(scope: str, seed: int = 0, corrupt_backward: bool = False) -> dict[str, GradcheckReport]:
    if scope == "layer":
        return check_layers(seed, corrupt_backward)
    if scope == "resblock":
        return {"resblock": check_resblock(seed, corrupt_backward)}
    if scope == "generator":
        return {"generator": check_generator(seed, corrupt_backward)}
    if scope == "discriminator":
        return {"discriminator": check_discriminator(seed, corrupt_backward)}
    raise ValueError(f"unknown scope {scope!r}; choose from {SCOPES}")
