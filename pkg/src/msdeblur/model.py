"""Multi-scale deblurring generator and the strided-conv discriminator.

Parameters live in flat ``dict[str, ndarray]`` maps. Generator keys look like
``s2.rb07.conv1.w`` (scale level 2, ResBlock 7, first conv, weight); level 1
is the finest scale. Each ``*_vjp`` function returns ``(output, pullback)``
where ``pullback(grad_output)`` gives gradients for every parameter and for
the inputs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import ConvParams, ShapeError


@dataclass(frozen=True)
class GeneratorSpec:
    scales: int = 3
    resblocks: int = 2
    channels: int = 16
    kernel_size: int = 5
    image_channels: int = 3
    upconv_kernel: int = 4
    upconv_stride: int = 2
    # add the stage's blurry input to its latent output
    residual_output: bool = False
    # "zero" starts every latent at 0 (or at the blurry input with residual_output)
    tail_init: str = "zero"

    def __post_init__(self):
        if self.scales < 1 or self.resblocks < 0 or self.channels < 1:
            raise ValueError(f"invalid generator spec {self}")
        if self.tail_init not in ("he", "zero"):
            raise ValueError(f"tail_init must be 'he' or 'zero', got {self.tail_init!r}")
        ad.same_padding(self.kernel_size)
        if self.scales > 1:
            ad.check_upconv_geometry(self.upconv_kernel, self.upconv_stride, self.upconv_padding)

    @classmethod
    def paper(cls) -> "GeneratorSpec":
        return cls(scales=3, resblocks=19, channels=64, kernel_size=5)

    @classmethod
    def desk(cls) -> "GeneratorSpec":
        return cls()

    @property
    def padding(self) -> int:
        return (self.kernel_size - 1) // 2

    @property
    def upconv_padding(self) -> int:
        return (self.upconv_kernel - self.upconv_stride) // 2

    @property
    def conv_layers_per_scale(self) -> int:
        return 2 * self.resblocks + 2

    @property
    def conv_layers_total(self) -> int:
        return self.scales * self.conv_layers_per_scale

    def stage_in_channels(self, level: int) -> int:
        coarsest = level == self.scales
        return self.image_channels + (0 if coarsest else self.channels)

    def to_dict(self) -> dict:
        return asdict(self)


# Full-size discriminator: (out, in, kernel, stride) per conv row.
PAPER_DISCRIMINATOR_CONVS = (
    (32, 3, 5, 2), (64, 32, 5, 1), (64, 64, 5, 2), (128, 64, 5, 1), (128, 128, 5, 2),
    (256, 128, 5, 1), (256, 256, 5, 4), (512, 256, 5, 1), (512, 512, 5, 4), (1024, 512, 5, 2),
)


@dataclass(frozen=True)
class DiscriminatorSpec:
    convs: tuple[tuple[int, int, int, int], ...] = PAPER_DISCRIMINATOR_CONVS
    fc: tuple[int, int] = (1024, 1024)  # (out, in)
    slope: float = 0.2
    input_size: int = 256

    def __post_init__(self):
        for i in range(1, len(self.convs)):
            if self.convs[i][1] != self.convs[i - 1][0]:
                raise ValueError(f"conv {i + 1} input channels do not chain: {self.convs}")
        if self.fc[1] != self.convs[-1][0]:
            raise ValueError(f"fc input {self.fc[1]} != last conv width {self.convs[-1][0]}")

    @classmethod
    def paper(cls) -> "DiscriminatorSpec":
        return cls()

    @classmethod
    def desk(cls, divisor: int = 16, input_size: int = 64) -> "DiscriminatorSpec":
        convs = tuple((max(o // divisor, 1), i if n == 0 else max(i // divisor, 1), k, s)
                      for n, (o, i, k, s) in enumerate(PAPER_DISCRIMINATOR_CONVS))
        width = convs[-1][0]
        return cls(convs=convs, fc=(width, width), input_size=input_size)

    def spatial_trace(self, size: int | None = None) -> list[int]:
        size = self.input_size if size is None else size
        trace = []
        for _, _, k, s in self.convs:
            size = ad.conv_output_size(size, k, s, (k - 1) // 2)
            trace.append(size)
        return trace

    def to_dict(self) -> dict:
        return {"convs": [list(c) for c in self.convs], "fc": list(self.fc),
                "slope": self.slope, "input_size": self.input_size}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorSpec":
        return cls(convs=tuple(tuple(c) for c in d["convs"]), fc=tuple(d["fc"]),
                   slope=float(d["slope"]), input_size=int(d["input_size"]))


def generator_spec_from_dict(d: dict) -> GeneratorSpec:
    names = {f.name for f in fields(GeneratorSpec)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown generator spec keys: {sorted(unknown)}")
    return GeneratorSpec(**d)


# ---------------------------------------------------------------------------
# parameters


def _conv_keys(spec: GeneratorSpec, level: int) -> list[tuple[str, tuple[int, ...]]]:
    c, k, ic = spec.channels, spec.kernel_size, spec.image_channels
    layers = [(f"s{level}.head", (c, spec.stage_in_channels(level), k, k))]
    for j in range(spec.resblocks):
        layers.append((f"s{level}.rb{j:02d}.conv1", (c, c, k, k)))
        layers.append((f"s{level}.rb{j:02d}.conv2", (c, c, k, k)))
    layers.append((f"s{level}.tail", (ic, c, k, k)))
    return layers


def layer_inventory(spec: GeneratorSpec) -> list[tuple[str, str, tuple[int, ...]]]:
    """Every learnable layer as ``(name, kind, weight_shape)``, coarsest scale first."""
    inv = []
    for level in range(spec.scales, 0, -1):
        inv += [(name, "conv", shape) for name, shape in _conv_keys(spec, level)]
        if level > 1:
            u = spec.upconv_kernel
            inv.append((f"s{level}.up", "upconv", (spec.channels, spec.channels, u, u)))
    return inv


def init_generator(spec: GeneratorSpec, rng: np.random.Generator,
                   dtype=np.float64) -> dict[str, np.ndarray]:
    params = {}
    for name, kind, shape in layer_inventory(spec):
        if kind == "conv":
            fan_in = shape[1] * shape[2] * shape[3]
            bias = shape[0]
        else:
            fan_in = shape[0] * shape[2] * shape[3] // spec.upconv_stride**2
            bias = shape[1]
        w = ad.he_uniform(rng, shape, fan_in, dtype)
        if name.endswith(".tail") and spec.tail_init == "zero":
            w = np.zeros_like(w)
        params[name + ".w"] = w
        params[name + ".b"] = np.zeros(bias, dtype=dtype)
    return params


def init_discriminator(spec: DiscriminatorSpec, rng: np.random.Generator,
                       dtype=np.float64) -> dict[str, np.ndarray]:
    params = {}
    for i, (o, c, k, _) in enumerate(spec.convs):
        params[f"d.conv{i + 1:02d}.w"] = ad.he_uniform(rng, (o, c, k, k), c * k * k, dtype)
        params[f"d.conv{i + 1:02d}.b"] = np.zeros(o, dtype=dtype)
    out_f, in_f = spec.fc
    params["d.fc.w"] = ad.he_uniform(rng, (out_f, in_f), in_f, dtype)
    params["d.fc.b"] = np.zeros(out_f, dtype=dtype)
    return params


def check_params(params: dict[str, np.ndarray], expected: dict[str, tuple[int, ...]]) -> None:
    missing = set(expected) - set(params)
    extra = set(params) - set(expected)
    if missing or extra:
        raise ShapeError(f"parameter keys differ: missing={sorted(missing)[:5]} extra={sorted(extra)[:5]}")
    for k, shape in expected.items():
        if params[k].shape != shape:
            raise ShapeError(f"{k}: shape {params[k].shape} != {shape}")


def generator_param_shapes(spec: GeneratorSpec) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_generator(spec, np.random.default_rng(0)).items()}


def discriminator_param_shapes(spec: DiscriminatorSpec) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for i, (o, c, k, _) in enumerate(spec.convs):
        shapes[f"d.conv{i + 1:02d}.w"] = (o, c, k, k)
        shapes[f"d.conv{i + 1:02d}.b"] = (o,)
    shapes["d.fc.w"] = spec.fc
    shapes["d.fc.b"] = (spec.fc[0],)
    return shapes


def _conv(params, name, stride=1, padding=0) -> ConvParams:
    return ConvParams(params[name + ".w"], params[name + ".b"], stride, padding)


Pullback = Callable[[np.ndarray], tuple[dict[str, np.ndarray], np.ndarray]]


def _conv_vjp(x, p: ConvParams, name: str):
    y, cols = ad.conv2d_cached(x, p)

    def pullback(g, grads):
        gx, gw, gb = ad.conv2d_backward(x, p, g, cols)
        grads[name + ".w"] = gw
        grads[name + ".b"] = gb
        return gx
    return y, pullback


# ---------------------------------------------------------------------------
# ResBlock


def resblock_forward(x: np.ndarray, p1: ConvParams, p2: ConvParams) -> np.ndarray:
    """``x + conv2(relu(conv1(x)))``: no activation after the sum, no normalization."""
    return resblock_vjp(x, p1, p2)[0]


def resblock_vjp(x: np.ndarray, p1: ConvParams, p2: ConvParams):
    """Forward plus pullback ``g -> (grad_x, (gw1, gb1), (gw2, gb2))``."""
    c = x.shape[1]
    for p in (p1, p2):
        if p.weight.shape[0] != c or p.weight.shape[1] != c:
            raise ShapeError(f"ResBlock conv {p.weight.shape} does not preserve {c} channels")
    a, cols1 = ad.conv2d_cached(x, p1)
    r = ad.relu(a)
    b, cols2 = ad.conv2d_cached(r, p2)
    out = x + b
    if out.shape != x.shape:
        raise ShapeError(f"ResBlock convs change spatial shape {x.shape} -> {out.shape}")

    def pullback(g):
        gr, gw2, gb2 = ad.conv2d_backward(r, p2, g, cols2)
        ga = ad.relu_backward(a, gr)
        gx, gw1, gb1 = ad.conv2d_backward(x, p1, ga, cols1)
        return g + gx, (gw1, gb1), (gw2, gb2)
    return out, pullback


# ---------------------------------------------------------------------------
# generator


def stage_vjp(blurry: np.ndarray, coarser_feat: np.ndarray | None,
              params: dict[str, np.ndarray], spec: GeneratorSpec, level: int):
    """One scale of the generator.

    Returns ``(latent, up_feat, pullback)``; ``up_feat`` is None at level 1.
    ``pullback(g_latent, g_up, grads)`` fills ``grads`` and returns
    ``(grad_blurry, grad_coarser_feat)``.
    """
    pad = spec.padding
    if blurry.shape[1] != spec.image_channels:
        raise ShapeError(f"level {level}: blurry has {blurry.shape[1]} channels, "
                         f"expected {spec.image_channels}")
    coarsest = level == spec.scales
    if coarsest:
        if coarser_feat is not None:
            raise ShapeError("coarsest stage takes no coarser features")
        inp = blurry
    else:
        if coarser_feat is None:
            raise ShapeError(f"level {level} needs features from level {level + 1}")
        inp = ad.concat_channels(blurry, coarser_feat)

    h, head_pb = _conv_vjp(inp, _conv(params, f"s{level}.head", 1, pad), f"s{level}.head")
    block_pbs = []
    for j in range(spec.resblocks):
        name = f"s{level}.rb{j:02d}"
        h, pb = resblock_vjp(h, _conv(params, name + ".conv1", 1, pad),
                             _conv(params, name + ".conv2", 1, pad))
        block_pbs.append((name, pb))
    latent, tail_pb = _conv_vjp(h, _conv(params, f"s{level}.tail", 1, pad), f"s{level}.tail")
    if spec.residual_output:
        latent = latent + blurry

    up_feat = None
    if level > 1:
        up_p = _conv(params, f"s{level}.up", spec.upconv_stride, spec.upconv_padding)
        up_feat = ad.upconv2d(h, up_p)

    def pullback(g_latent, g_up, grads):
        gh = tail_pb(g_latent, grads)
        if level > 1:
            gh_up, gw, gb = ad.upconv2d_backward(h, up_p, g_up)
            grads[f"s{level}.up.w"] = gw
            grads[f"s{level}.up.b"] = gb
            gh = gh + gh_up
        for name, pb in reversed(block_pbs):
            gh, (gw1, gb1), (gw2, gb2) = pb(gh)
            grads[name + ".conv1.w"], grads[name + ".conv1.b"] = gw1, gb1
            grads[name + ".conv2.w"], grads[name + ".conv2.b"] = gw2, gb2
        g_inp = head_pb(gh, grads)
        if coarsest:
            g_blurry, g_feat = g_inp, None
        else:
            g_blurry, g_feat = ad.split_channels(g_inp, spec.image_channels)
        if spec.residual_output:
            g_blurry = g_blurry + g_latent
        return g_blurry, g_feat
    return latent, up_feat, pullback


def stage_forward(blurry, coarser_feat, params, spec, level):
    latent, up_feat, _ = stage_vjp(blurry, coarser_feat, params, spec, level)
    return latent, up_feat


def check_pyramid(pyramid: list[np.ndarray], spec: GeneratorSpec) -> None:
    if len(pyramid) != spec.scales:
        raise ShapeError(f"pyramid has {len(pyramid)} levels, generator expects {spec.scales}")
    for k in range(1, len(pyramid)):
        prev, cur = pyramid[k - 1].shape, pyramid[k].shape
        if cur[:2] != prev[:2] or prev[2] != 2 * cur[2] or prev[3] != 2 * cur[3]:
            raise ShapeError(f"pyramid level {k + 1} shape {cur} is not half of {prev}")


def generator_vjp(pyramid: list[np.ndarray], params: dict[str, np.ndarray], spec: GeneratorSpec):
    """Run stages coarsest to finest. ``pyramid[0]`` is the finest level.

    Returns ``(latents, pullback)`` with ``pullback(grad_latents) ->
    (param_grads, grad_pyramid)``.
    """
    check_pyramid(pyramid, spec)
    latents: list[np.ndarray] = [None] * spec.scales  # type: ignore[list-item]
    pbs = {}
    feat = None
    for level in range(spec.scales, 0, -1):
        latents[level - 1], feat, pbs[level] = stage_vjp(pyramid[level - 1], feat, params, spec, level)

    def pullback(grad_latents):
        grads: dict[str, np.ndarray] = {}
        g_pyr: list[np.ndarray] = [None] * spec.scales  # type: ignore[list-item]
        g_feat = None
        for level in range(1, spec.scales + 1):
            g_pyr[level - 1], g_feat = pbs[level](grad_latents[level - 1], g_feat, grads)
        return grads, g_pyr
    return latents, pullback


def generator_forward(pyramid, params, spec) -> list[np.ndarray]:
    return generator_vjp(pyramid, params, spec)[0]


# ---------------------------------------------------------------------------
# discriminator


def discriminator_vjp(image: np.ndarray, params: dict[str, np.ndarray], spec: DiscriminatorSpec):
    """Probability that ``image`` is a real sharp image, one per batch item.

    The fc output is averaged to a single logit before the sigmoid.
    ``pullback(grad_prob) -> (param_grads, grad_image)``.
    """
    h = image
    steps = []
    for i, (o, c, k, s) in enumerate(spec.convs):
        name = f"d.conv{i + 1:02d}"
        if h.shape[2] < 1 or h.shape[1] != c:
            raise ShapeError(f"{name}: cannot accept input {h.shape}")
        p = _conv(params, name, s, (k - 1) // 2)
        a, cols = ad.conv2d_cached(h, p)
        steps.append((name, h, p, a, cols))
        h = ad.leaky_relu(a, spec.slope)
    n = image.shape[0]
    if h.shape[2:] != (1, 1):
        raise ShapeError(f"discriminator input {image.shape[2:]} leaves {h.shape[2:]} spatial "
                         f"after the conv stack; need 1x1 (try {spec.input_size}x{spec.input_size})")
    flat = h.reshape(n, -1)
    z = ad.linear(flat, params["d.fc.w"], params["d.fc.b"])
    logit = z.mean(axis=1)
    prob = ad.sigmoid(logit)

    def pullback(grad_prob):
        grads: dict[str, np.ndarray] = {}
        g_logit = ad.sigmoid_backward(prob, np.asarray(grad_prob).reshape(n))
        gz = np.repeat(g_logit[:, None] / z.shape[1], z.shape[1], axis=1)
        gflat, grads["d.fc.w"], grads["d.fc.b"] = ad.linear_backward(flat, params["d.fc.w"], gz)
        g = gflat.reshape(h.shape)
        for name, x, p, a, cols in reversed(steps):
            g = ad.leaky_relu_backward(a, g, spec.slope)
            g, grads[name + ".w"], grads[name + ".b"] = ad.conv2d_backward(x, p, g, cols)
        return grads, g
    return prob, pullback


def discriminator_forward(image, params, spec) -> np.ndarray:
    return discriminator_vjp(image, params, spec)[0]


# ---------------------------------------------------------------------------
# analysis


def stacked_receptive_field(layers: int, kernel_size: int) -> int:
    """Receptive field of ``layers`` stacked stride-1 convolutions."""
    return 1 + layers * (kernel_size - 1)


def receptive_field(spec: GeneratorSpec) -> int:
    """Receptive field of one scale stage (the ResBlock shortcuts do not enlarge it)."""
    return stacked_receptive_field(spec.conv_layers_per_scale, spec.kernel_size)


def architecture_audit(spec: GeneratorSpec) -> dict:
    inv = layer_inventory(spec)
    convs = [name for name, kind, _ in inv if kind == "conv"]
    per_scale = {level: sum(1 for n in convs if n.startswith(f"s{level}.")) for level in range(1, spec.scales + 1)}
    kernels = {shape[2:] for _, kind, shape in inv if kind == "conv"}
    return {
        "conv_layers_per_scale": per_scale,
        "conv_layers_total": len(convs),
        "upconv_layers": sum(1 for _, kind, _ in inv if kind == "upconv"),
        "resblocks_per_scale": spec.resblocks,
        "filter_sizes": sorted(kernels),
        "feature_channels": spec.channels,
        "normalization_layers": sum(1 for _, kind, _ in inv if kind not in ("conv", "upconv")),
        "receptive_field_per_scale": receptive_field(spec),
    }
