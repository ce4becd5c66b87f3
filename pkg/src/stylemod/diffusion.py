"""Core DDPM mathematics: noise schedules, forward noising, reverse steps, losses.

All operations are pure functions of their tensor inputs and safe to call
concurrently. The schedule ladders are kept in float64 so that products and
round trips hold to ~1e-12; coefficients are cast to the dtype of the data
they multiply.

Timesteps are 1-based: t runs over [1, T], with t=1 the least-noised step.

Key formulas:
    forward:   z_t = sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps
    clean est: z0_hat = (z_t - sqrt(1 - abar_t) * eps_pred) / sqrt(abar_t)
    reverse:   z_{t-1} = (z_t - (1-a_t)/sqrt(1-abar_t) * eps_pred) / sqrt(a_t)
                         + sigma_t * noise,  sigma_t = sqrt(beta_t), sigma_1 = 0
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import torch

Timestep = Union[int, torch.Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed beta/alpha/alpha-bar ladders for a T-step diffusion.

    betas, alphas and alpha_bars are float64 tensors of shape (T,), indexed
    internally by t-1 for a 1-based timestep t.
    """

    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor

    @property
    def T(self) -> int:
        return self.betas.shape[0]

    def _index(self, t: Timestep) -> torch.Tensor:
        if isinstance(t, int):
            if not 1 <= t <= self.T:
                raise ValueError(f"timestep {t} outside [1, {self.T}]")
            return torch.tensor(t - 1)
        t = torch.as_tensor(t)
        if t.numel() == 0 or (t < 1).any() or (t > self.T).any():
            raise ValueError(f"timesteps must lie in [1, {self.T}]")
        return t.long() - 1

    def beta(self, t: Timestep) -> torch.Tensor:
        return self.betas[self._index(t)]

    def alpha(self, t: Timestep) -> torch.Tensor:
        return self.alphas[self._index(t)]

    def alpha_bar(self, t: Timestep) -> torch.Tensor:
        return self.alpha_bars[self._index(t)]


def make_linear_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    """Linearly spaced beta schedule with derived alpha / alpha-bar ladders."""
    if not isinstance(T, int) or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"betas must satisfy 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = torch.linspace(beta_start, beta_end, T, dtype=torch.float64)
    alphas = 1.0 - betas
    alpha_bars = torch.cumprod(alphas, dim=0)
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def _coef(values: torch.Tensor, t: Timestep, like: torch.Tensor) -> torch.Tensor:
    """Gather per-timestep values and broadcast against a data tensor.

    Scalar t gives a scalar coefficient; a (B,) tensor t requires `like` to
    carry a leading batch dimension and yields a (B, 1, ..., 1) coefficient.
    """
    if isinstance(t, int):
        return values.to(like.dtype)
    if values.ndim == 0:
        raise ValueError("per-sample timesteps need per-sample schedule values")
    if like.shape[0] != values.shape[0]:
        raise ValueError(
            f"batch size mismatch: {values.shape[0]} timesteps for data batch {like.shape[0]}"
        )
    return values.to(like.dtype).view(-1, *([1] * (like.ndim - 1)))


def q_sample(z0: torch.Tensor, t: Timestep, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """Forward-noise a clean latent: sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch: z0 {tuple(z0.shape)} vs eps {tuple(eps.shape)}")
    abar = sched.alpha_bar(t)
    a = _coef(abar.sqrt(), t, z0)
    b = _coef((1.0 - abar).sqrt(), t, z0)
    return a * z0 + b * eps


def predict_clean(z_t: torch.Tensor, t: Timestep, eps_pred: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """One-step clean-latent estimate from a noisy latent and predicted noise."""
    if z_t.shape != eps_pred.shape:
        raise ValueError(f"shape mismatch: z_t {tuple(z_t.shape)} vs eps_pred {tuple(eps_pred.shape)}")
    abar = sched.alpha_bar(t)
    b = _coef((1.0 - abar).sqrt(), t, z_t)
    a = _coef(abar.sqrt(), t, z_t)
    return (z_t - b * eps_pred) / a


def reverse_step(
    z_t: torch.Tensor,
    t: Timestep,
    eps_pred: torch.Tensor,
    noise: torch.Tensor,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """One ancestral reverse step from z_t to z_{t-1}.

    sigma_t = sqrt(beta_t) except at the final step, where sigma_1 = 0 and
    the noise argument is ignored.
    """
    if z_t.shape != eps_pred.shape or z_t.shape != noise.shape:
        raise ValueError("z_t, eps_pred and noise must share a shape")
    alpha = sched.alpha(t)
    abar = sched.alpha_bar(t)
    beta = sched.beta(t)
    mean = (z_t - _coef((1.0 - alpha) / (1.0 - abar).sqrt(), t, z_t) * eps_pred)
    mean = mean / _coef(alpha.sqrt(), t, z_t)
    sigma = beta.sqrt()
    if isinstance(t, int):
        if t == 1:
            return mean
        return mean + sigma.to(z_t.dtype) * noise
    last = torch.as_tensor(t) == 1
    sigma = torch.where(last, torch.zeros_like(sigma), sigma)
    return mean + _coef(sigma, t, z_t) * noise


def denoise_loss(
    eps_pred: torch.Tensor,
    eps: torch.Tensor,
    t: Timestep,
    weight_fn: Optional[Callable[[torch.Tensor], torch.Tensor]] = None,
) -> torch.Tensor:
    """Timestep-weighted mean-squared noise-prediction error.

    The squared error is averaged over all elements of each sample and over
    the batch; weight_fn maps timesteps to scalar weights (default 1).
    """
    if eps_pred.shape != eps.shape:
        raise ValueError(f"shape mismatch: {tuple(eps_pred.shape)} vs {tuple(eps.shape)}")
    sq = (eps_pred - eps) ** 2
    if isinstance(t, int):
        mse = sq.mean()
        if weight_fn is None:
            return mse
        w = torch.as_tensor(weight_fn(torch.tensor(t)), dtype=mse.dtype)
        return w * mse
    per_sample = sq.reshape(sq.shape[0], -1).mean(dim=1)
    if weight_fn is not None:
        w = torch.as_tensor(weight_fn(torch.as_tensor(t)), dtype=per_sample.dtype)
        per_sample = per_sample * w
    return per_sample.mean()
