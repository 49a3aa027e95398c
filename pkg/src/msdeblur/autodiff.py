"""Dense NCHW tensor ops with hand-written backward passes.

Every array here is a plain ``numpy.ndarray`` laid out as
(batch, channels, height, width). Convolutions are cross-correlations
(no kernel flip). Backward functions return exact vector-Jacobian products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    """Raised when a non-finite value reaches an optimizer or loss."""


@dataclass
class ConvParams:
    weight: np.ndarray  # (out, in, kh, kw); upconv reads it as (in, out, kh, kw)
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]


def same_padding(kernel_size: int) -> int:
    if kernel_size % 2 != 1:
        raise ShapeError(f"'same' padding needs an odd kernel, got {kernel_size}")
    return (kernel_size - 1) // 2


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def upconv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


def check_upconv_geometry(kernel: int, stride: int, padding: int) -> None:
    """Reject transposed-conv settings that do not scale size by exactly ``stride``."""
    if stride < 2:
        raise ShapeError(f"upconv stride must be >= 2, got {stride}")
    if kernel - 2 * padding != stride:
        raise ShapeError(
            f"upconv kernel={kernel} stride={stride} pad={padding} does not give "
            f"an exact x{stride} output (need kernel - 2*pad == stride)"
        )


def _check_rank4(name: str, x: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be rank-4 NCHW, got shape {x.shape}")


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (C*kh*kw, N*ho*wo) patch matrix, channel-major."""
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, n * ho * wo)


def _col2im(cols: np.ndarray, shape: tuple[int, int, int, int], kh: int, kw: int,
            stride: int, ho: int, wo: int, pad: int) -> np.ndarray:
    """Adjoint of ``_im2col`` followed by un-padding. ``shape`` is the unpadded NCHW shape."""
    n, c, h, w = shape
    cols = cols.reshape(c, kh, kw, n, ho, wo)
    out = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, i, j]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def _to_cn(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (C, N*H*W)."""
    return x.transpose(1, 0, 2, 3).reshape(x.shape[1], -1)


def _from_cn(m: np.ndarray, n: int, h: int, w: int) -> np.ndarray:
    return np.ascontiguousarray(m.reshape(-1, n, h, w).transpose(1, 0, 2, 3))


def conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    return conv2d_cached(x, p)[0]


def conv2d_cached(x: np.ndarray, p: ConvParams) -> tuple[np.ndarray, np.ndarray]:
    """``conv2d`` that also returns the patch matrix, reusable by ``conv2d_backward``."""
    _check_rank4("input", x)
    out_c, in_c, kh, kw = p.weight.shape
    if x.shape[1] != in_c:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, weight expects {in_c}")
    if p.bias.shape != (out_c,):
        raise ShapeError(f"conv2d: bias shape {p.bias.shape} != ({out_c},)")
    n, _, h, w = x.shape
    ho = conv_output_size(h, kh, p.stride, p.padding)
    wo = conv_output_size(w, kw, p.stride, p.padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: input {h}x{w} too small for kernel {kh}x{kw}")
    cols = _im2col(_pad(x, p.padding), kh, kw, p.stride, ho, wo)
    out = p.weight.reshape(out_c, -1) @ cols + p.bias[:, None]
    return _from_cn(out, n, ho, wo), cols


def conv2d_backward(x: np.ndarray, p: ConvParams, grad_out: np.ndarray,
                    cols: np.ndarray | None = None, need_input_grad: bool = True):
    """Return ``(grad_input, grad_weight, grad_bias)`` for ``conv2d(x, p)``.

    ``cols`` is the patch matrix from ``conv2d_cached``; it is rebuilt when
    omitted. ``grad_input`` is None when ``need_input_grad`` is false.
    """
    out_c, in_c, kh, kw = p.weight.shape
    n, _, h, w = x.shape
    ho = conv_output_size(h, kh, p.stride, p.padding)
    wo = conv_output_size(w, kw, p.stride, p.padding)
    if grad_out.shape != (n, out_c, ho, wo):
        raise ShapeError(f"conv2d_backward: grad_out {grad_out.shape} != {(n, out_c, ho, wo)}")
    g = _to_cn(grad_out)
    if cols is None:
        cols = _im2col(_pad(x, p.padding), kh, kw, p.stride, ho, wo)
    grad_w = (g @ cols.T).reshape(p.weight.shape)
    grad_b = g.sum(axis=1)
    grad_x = None
    if need_input_grad:
        grad_cols = p.weight.reshape(out_c, -1).T @ g
        grad_x = _col2im(grad_cols, x.shape, kh, kw, p.stride, ho, wo, p.padding)
    return grad_x, grad_w, grad_b


def upconv2d(y: np.ndarray, p: ConvParams) -> np.ndarray:
    """Transposed convolution; weight is (in_channels, out_channels, kh, kw).

    Without bias this is exactly the adjoint of ``conv2d`` with the same
    weight, stride and padding.
    """
    _check_rank4("input", y)
    in_c, out_c, kh, kw = p.weight.shape
    if y.shape[1] != in_c:
        raise ShapeError(f"upconv2d: input has {y.shape[1]} channels, weight expects {in_c}")
    if p.bias.shape != (out_c,):
        raise ShapeError(f"upconv2d: bias shape {p.bias.shape} != ({out_c},)")
    n, _, h, w = y.shape
    ho = upconv_output_size(h, kh, p.stride, p.padding)
    wo = upconv_output_size(w, kw, p.stride, p.padding)
    cols = p.weight.reshape(in_c, -1).T @ _to_cn(y)
    out = _col2im(cols, (n, out_c, ho, wo), kh, kw, p.stride, h, w, p.padding)
    return out + p.bias[None, :, None, None]


def upconv2d_backward(y: np.ndarray, p: ConvParams, grad_out: np.ndarray):
    in_c, out_c, kh, kw = p.weight.shape
    n, _, h, w = y.shape
    ho = upconv_output_size(h, kh, p.stride, p.padding)
    wo = upconv_output_size(w, kw, p.stride, p.padding)
    if grad_out.shape != (n, out_c, ho, wo):
        raise ShapeError(f"upconv2d_backward: grad_out {grad_out.shape} != {(n, out_c, ho, wo)}")
    cols = _im2col(_pad(grad_out, p.padding), kh, kw, p.stride, h, w)
    gy = _to_cn(y)
    grad_w = (gy @ cols.T).reshape(p.weight.shape)
    grad_y = _from_cn(p.weight.reshape(in_c, -1) @ cols, n, h, w)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    return grad_y, grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def leaky_relu(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x < 0, slope * x, x)


def leaky_relu_backward(x: np.ndarray, grad_out: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x < 0, slope * grad_out, grad_out)


def sigmoid(x):
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    e = np.exp(-np.abs(x))  # never overflows
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_backward(y: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Backward from the sigmoid *output* ``y``."""
    return grad_out * y * (1.0 - y)


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_rank4("a", a)
    _check_rank4("b", b)
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(f"concat_channels: incompatible shapes {a.shape} and {b.shape}")
    return np.concatenate([a, b], axis=1)


def split_channels(x: np.ndarray, first: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of ``concat_channels``; also the backward of it."""
    return x[:, :first], x[:, first:]


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Fully connected map; ``weight`` is (out_features, in_features)."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input features {x.shape[-1]} != weight in {weight.shape[1]}")
    return x @ weight.T + bias


def linear_backward(x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray):
    return grad_out @ weight, grad_out.T @ x, grad_out.sum(axis=0)


# ---------------------------------------------------------------------------
# initialization and optimization


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
               dtype=np.float64) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray], **kw) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()}, **kw)


def adam_step(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """Bias-corrected ADAM update, applied to ``params`` in place.

    Every gradient is checked before anything is touched, so a
    ``DivergenceError`` leaves both parameters and moments intact.
    """
    for k, g in grads.items():
        if k not in params:
            raise KeyError(f"gradient for unknown parameter {k!r}")
        if g.shape != params[k].shape:
            raise ShapeError(f"grad {k}: shape {g.shape} != param {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {k!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, g in grads.items():
        m = state.m.setdefault(k, np.zeros_like(params[k]))
        v = state.v.setdefault(k, np.zeros_like(params[k]))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# finite-difference verification

Pullback = Callable[[np.ndarray], Mapping[str, np.ndarray]]
VJPFunction = Callable[[Mapping[str, np.ndarray]], tuple[np.ndarray, Pullback]]


@dataclass
class GradcheckReport:
    passed: bool
    max_rel_error: float
    worst: tuple[str, int] | None  # (input name, flat index)
    checked: int
    tolerance: float
    kinks: int = 0

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        where = "" if self.worst is None else f" at {self.worst[0]}[{self.worst[1]}]"
        kinks = f", {self.kinks} kink-straddling skipped" if self.kinks else ""
        return (f"{status} max_rel_error={self.max_rel_error:.3e}{where} "
                f"(tol {self.tolerance:g}, {self.checked} coords{kinks})")


def gradcheck(fn: VJPFunction, inputs: dict[str, np.ndarray], tolerance: float = 1e-4,
              eps: float = 1e-5, samples: int = 20, seed: int = 0,
              floor: float = 1e-8, kink_ratio: float = 100.0) -> GradcheckReport:
    """Compare ``fn``'s pullback with central differences.

    ``fn(inputs)`` returns ``(output, pullback)``; the scalar under test is
    ``<r, output>`` for a fixed random ``r``. Up to ``samples`` coordinates per
    input are checked. Coordinates where ``|analytic| + |numeric| < floor`` are
    skipped.

    A failing coordinate whose two one-sided slopes disagree by more than
    ``kink_ratio * tolerance`` (relative) sits within ``eps`` of a ReLU-type
    kink, where the central difference averages two different slopes. Such
    coordinates are counted in ``kinks`` and excluded; a smooth function has
    one-sided slopes within ``O(eps)`` of each other.

    The relative error's denominator never drops below ``noise / tolerance``,
    where ``noise = eps_machine * sum|r * output| / eps`` bounds the rounding
    error of a central difference; slopes far above it are judged purely
    relatively.
    """
    rng = np.random.default_rng(seed)
    for name, arr in inputs.items():
        if arr.dtype != np.float64:
            raise TypeError(f"gradcheck needs float64 inputs, {name} is {arr.dtype}")
    out, pullback = fn(inputs)
    r = rng.standard_normal(np.shape(out))
    analytic = pullback(r)
    f0 = float(np.sum(r * out))
    # central differences cannot resolve slopes below the rounding noise of f
    noise = np.finfo(np.float64).eps * float(np.sum(np.abs(r * out))) / eps
    denom_floor = noise / tolerance

    worst_err, worst, checked, kinks = 0.0, None, 0, 0
    for name, arr in inputs.items():
        if name not in analytic:
            continue
        flat = arr.reshape(-1)
        grad = np.asarray(analytic[name]).reshape(-1)
        idx = np.arange(flat.size) if flat.size <= samples else rng.choice(flat.size, samples, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(np.sum(r * fn(inputs)[0]))
            flat[i] = orig - eps
            fm = float(np.sum(r * fn(inputs)[0]))
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            a = float(grad[i])
            if abs(a) + abs(num) < floor:
                continue
            err = abs(a - num) / max(abs(a), abs(num), denom_floor)
            if err > tolerance:
                fwd, bwd = (fp - f0) / eps, (f0 - fm) / eps
                if abs(fwd - bwd) > kink_ratio * tolerance * max(abs(fwd), abs(bwd), floor):
                    kinks += 1
                    continue
            checked += 1
            if err > worst_err:
                worst_err, worst = err, (name, int(i))
    # a check where many coordinates straddled a kink proves little
    passed = worst_err <= tolerance and kinks <= max(1, checked // 10)
    return GradcheckReport(passed, worst_err, worst, checked, tolerance, kinks)


def corrupt(fn: VJPFunction, scale: float = 2.0) -> VJPFunction:
    """Wrap ``fn`` so its pullback is scaled; a negative control for gradcheck."""
    def wrapped(inputs):
        out, pb = fn(inputs)
        return out, lambda g: {k: scale * v for k, v in pb(g).items()}
    return wrapped
