"""Multi-scale content loss, adversarial losses and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import DivergenceError, ShapeError

LOG_EPS = 1e-12
DEFAULT_LAMBDA = 1e-4


@dataclass
class LossBreakdown:
    content: float
    adversarial_g: float
    adversarial_d: float
    total: float
    per_level_content: list[float] = field(default_factory=list)

    def check_finite(self) -> None:
        vals = [self.content, self.adversarial_g, self.adversarial_d, self.total, *self.per_level_content]
        if not all(np.isfinite(vals)):
            raise DivergenceError(f"non-finite loss: {self}")

    def log_line(self, iteration: int, lr: float) -> str:
        return (f"{iteration} {self.content!r} {self.adversarial_g!r} "
                f"{self.adversarial_d!r} {self.total!r} {lr!r}")


def content_loss(latents: list[np.ndarray], sharps: list[np.ndarray]):
    """Half the mean over levels of each level's per-element MSE.

    Returns ``(loss, per_level_mse, grads)`` where ``grads[k]`` is the
    gradient with respect to ``latents[k]``. The batch axis counts as part
    of each level's element count.
    """
    if len(latents) != len(sharps) or not latents:
        raise ShapeError(f"level count mismatch: {len(latents)} latents vs {len(sharps)} sharps")
    K = len(latents)
    per_level, grads = [], []
    for L, S in zip(latents, sharps):
        if L.shape != S.shape:
            raise ShapeError(f"latent {L.shape} vs sharp {S.shape}")
        d = L - S
        per_level.append(float(np.mean(d * d)))
        grads.append(d / (K * d.size))
    return sum(per_level) / (2 * K), per_level, grads


def _clamp(p):
    return np.clip(np.asarray(p, dtype=np.float64), LOG_EPS, 1.0 - LOG_EPS)


def adversarial_d_loss(d_real, d_fake):
    """Discriminator objective ``-[log D(S) + log(1 - D(G(B)))]``, batch-averaged.

    Returns ``(loss, grad_d_real, grad_d_fake)``.
    """
    r, f = _clamp(d_real), _clamp(d_fake)
    loss = -(np.mean(np.log(r)) + np.mean(np.log1p(-f)))
    return float(loss), -1.0 / (r * r.size), 1.0 / ((1.0 - f) * f.size)


def adversarial_g_loss(d_fake, non_saturating: bool = False):
    """Generator objective ``log(1 - D(G(B)))``, or ``-log D(G(B))`` when switched.

    Returns ``(loss, grad_d_fake)``.
    """
    f = _clamp(d_fake)
    if non_saturating:
        return float(-np.mean(np.log(f))), -1.0 / (f * f.size)
    return float(np.mean(np.log1p(-f))), -1.0 / ((1.0 - f) * f.size)


def total_loss(content: float, adv_g: float, lam: float = DEFAULT_LAMBDA) -> float:
    return content + lam * adv_g
