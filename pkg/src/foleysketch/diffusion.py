"""Denoising-diffusion spine: schedule, forward noising, reverse steps, dual CFG.

Timesteps are 1-indexed (t in 1..T).  alpha_cum[t-1] is the cumulative
product up to step t; step t=0 is defined to have cumulative product 1 so
the deterministic sampler can land on a clean estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .conditioning import ConditionSet


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray        # (T,)
    alpha_step: np.ndarray   # 1 - beta_t
    alpha_cum: np.ndarray    # prod_{s<=t} (1 - beta_s)

    @property
    def T(self) -> int:
        return len(self.betas)

    def acum(self, t: int) -> float:
        """Cumulative alpha at step t, with acum(0) := 1."""
        return 1.0 if t == 0 else float(self.alpha_cum[t - 1])


@dataclass(frozen=True)
class GuidanceScales:
    s_text: float = 3.5
    s_video: float = 4.5


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule; beta_1 = beta_start even when T = 1."""
    if T < 1:
        raise ValueError("invalid beta range: T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("invalid beta range")
    if T == 1:
        betas = np.array([beta_start])
    else:
        betas = beta_start + np.arange(T) / (T - 1) * (beta_end - beta_start)
    alpha_step = 1.0 - betas
    alpha_cum = np.cumprod(alpha_step)
    return NoiseSchedule(betas, alpha_step, alpha_cum)


def _check_step(t: int, T: int) -> None:
    if not 1 <= t <= T:
        raise ValueError("invalid step")


def q_sample(z0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Forward noising: sqrt(acum_t) z0 + sqrt(1 - acum_t) eps.

    `t` may be an int, or an int array matching a leading batch axis.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValueError("latent shape mismatch")
    if np.isscalar(t) or np.ndim(t) == 0:
        _check_step(int(t), sched.T)
        ac = sched.acum(int(t))
        return np.sqrt(ac) * z0 + np.sqrt(1.0 - ac) * eps
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > sched.T):
        raise ValueError("invalid step")
    ac = sched.alpha_cum[t - 1].reshape((-1,) + (1,) * (z0.ndim - 1))
    return np.sqrt(ac) * z0 + np.sqrt(1.0 - ac) * eps


def ddpm_step(zt: np.ndarray, t: int, eps_hat: np.ndarray, sched: NoiseSchedule,
              noise: np.ndarray) -> np.ndarray:
    """One ancestral reverse step; `noise` is ignored (forced zero) at t = 1."""
    _check_step(t, sched.T)
    if zt.shape != eps_hat.shape:
        raise ValueError("latent shape mismatch")
    beta = sched.betas[t - 1]
    a_step = sched.alpha_step[t - 1]
    ac_t = sched.acum(t)
    mu = (zt - beta / np.sqrt(1.0 - ac_t) * eps_hat) / np.sqrt(a_step)
    if t == 1:
        return mu
    ac_prev = sched.acum(t - 1)
    sigma = np.sqrt((1.0 - ac_prev) / (1.0 - ac_t) * beta)
    return mu + sigma * noise


def ddim_step(zt: np.ndarray, t: int, t_prev: int, eps_hat: np.ndarray,
              sched: NoiseSchedule) -> np.ndarray:
    """Deterministic reverse step via the predicted clean sample."""
    _check_step(t, sched.T)
    if t_prev >= t:
        raise ValueError("non-decreasing step")
    if t_prev < 0:
        raise ValueError("invalid step")
    ac_t = sched.acum(t)
    ac_prev = sched.acum(t_prev)
    z0_hat = (zt - np.sqrt(1.0 - ac_t) * eps_hat) / np.sqrt(ac_t)
    return np.sqrt(ac_prev) * z0_hat + np.sqrt(1.0 - ac_prev) * eps_hat


def dual_cfg(eps_uncond: np.ndarray, eps_text: np.ndarray, eps_full: np.ndarray,
             scales: GuidanceScales) -> np.ndarray:
    """Two-condition classifier-free guidance combination."""
    if not (eps_uncond.shape == eps_text.shape == eps_full.shape):
        raise ValueError("latent shape mismatch")
    return (eps_uncond
            + scales.s_text * (eps_text - eps_uncond)
            + scales.s_video * (eps_full - eps_uncond))


def ddim_step_sequence(T: int, steps: int) -> list[tuple[int, int]]:
    """Evenly spaced (t, t_prev) pairs descending from T to 0."""
    taus = [round(i * T / steps) for i in range(steps + 1)]
    return [(taus[i], taus[i - 1]) for i in range(steps, 0, -1)]


# A denoiser handle evaluates eps-hat for one latent under several
# condition sets at once: fn(zt, t, conds) -> (len(conds), *zt.shape).
DenoiseFn = Callable[[np.ndarray, int, Sequence[ConditionSet]], np.ndarray]


def sample(denoise_fn: DenoiseFn, cond: ConditionSet, sched: NoiseSchedule,
           steps: int, scales: GuidanceScales, sampler: str, seed: int,
           shape: tuple[int, ...]) -> np.ndarray:
    """Run the reverse process from seeded Gaussian noise.

    Every step evaluates the denoiser on the three guidance branches
    (null/null, text/null, text/full); the loudness signal, when present,
    rides along in all three.  `ddim` uses an evenly spaced decreasing
    step subset and is bit-deterministic given the seed; `ddpm` is the
    full-schedule ancestral sampler and requires steps == T.
    """
    if steps > sched.T:
        raise ValueError("too many steps")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if sampler not in ("ddpm", "ddim"):
        raise ValueError(f"unknown sampler {sampler!r}")
    if sampler == "ddpm" and steps != sched.T:
        raise ValueError("ddpm requires steps == T (ancestral sampling runs the full schedule)")

    rng = np.random.default_rng(seed)
    z = rng.standard_normal(shape)
    branches = [cond.all_null(), cond.text_only(), cond]

    def guided_eps(zt: np.ndarray, t: int) -> np.ndarray:
        eps3 = denoise_fn(zt, t, branches)
        return dual_cfg(eps3[0], eps3[1], eps3[2], scales)

    if sampler == "ddim":
        for t, t_prev in ddim_step_sequence(sched.T, steps):
            z = ddim_step(z, t, t_prev, guided_eps(z, t), sched)
    else:
        for t in range(sched.T, 0, -1):
            noise = rng.standard_normal(shape) if t > 1 else np.zeros(shape)
            z = ddpm_step(z, t, guided_eps(z, t), sched, noise)
    return z
