"""White-box latent-space attacks on surrogate classifiers.

Both styles search the generator's latent space for codes whose decoded
image the surrogate assigns to the target class with high likelihood.
The conditional style fixes the generator's conditioning label at the
target class and ascends log-likelihood with adaptive-momentum steps; the
prior-regularized style adds a realness term from a discriminator source
head and uses plain momentum SGD. Neither touches the target oracle.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch

from .oracle import attack_phase


class InversionStyle(str, Enum):
    CONDITIONAL_ASCENT = "conditional_ascent"
    PRIOR_REGULARIZED = "prior_regularized"


@dataclass(frozen=True)
class InversionConfig:
    style: InversionStyle = InversionStyle.CONDITIONAL_ASCENT
    steps: int = 600
    step_size: float = 0.002
    prior_weight: float = 0.0  # used by the prior-regularized style only
    candidates_per_class: int = 5
    momentum: float = 0.9  # SGD momentum for the prior-regularized style
    seed: int = 0
    clip_radius_scale: float = 3.0  # latents reprojected to scale*sqrt(dim)

    def __post_init__(self):
        if self.steps < 1 or self.step_size <= 0:
            raise ValueError("steps must be >= 1 and step_size > 0")
        if self.prior_weight < 0:
            raise ValueError("prior_weight must be nonnegative")
        if self.candidates_per_class < 1:
            raise ValueError("candidates_per_class must be >= 1")


@dataclass
class ReconstructionSet:
    target_class: int
    latents: torch.Tensor  # (k, latent_dim)
    images: torch.Tensor  # (k, C, H, W)
    likelihoods: np.ndarray  # final surrogate likelihood per candidate
    trajectories: np.ndarray  # (k, steps + 1) likelihood per step

    def __post_init__(self):
        if self.trajectories.shape[0] != self.latents.shape[0]:
            raise ValueError("one trajectory per candidate required")

    def __len__(self):
        return int(self.latents.shape[0])


def _class_seed(seed: int, y: int) -> int:
    return (seed * 1_000_003 + y) % (2**63 - 1)


def _reproject(z: torch.Tensor, max_norm: float) -> None:
    with torch.no_grad():
        norms = z.norm(dim=1, keepdim=True)
        mask = norms > max_norm
        if mask.any():
            z.mul_(torch.where(mask, max_norm / norms, torch.ones_like(norms)))


def _ascend(G, scorer, y: int, cfg: InversionConfig, disc=None) -> ReconstructionSet:
    k = cfg.candidates_per_class
    gen = torch.Generator().manual_seed(_class_seed(cfg.seed, y))
    z = torch.randn(k, G.latent_dim, generator=gen).requires_grad_(True)
    y_vec = torch.full((k,), y, dtype=torch.long)
    max_norm = cfg.clip_radius_scale * float(np.sqrt(G.latent_dim))

    if cfg.style == InversionStyle.CONDITIONAL_ASCENT:
        opt = torch.optim.Adam([z], lr=cfg.step_size)
    else:
        opt = torch.optim.SGD([z], lr=cfg.step_size, momentum=cfg.momentum)

    alive = torch.ones(k, dtype=torch.bool)
    last_good = z.detach().clone()
    traj = np.zeros((k, cfg.steps + 1))
    last_lik = np.zeros(k)

    with attack_phase():
        for step in range(cfg.steps):
            x = G(z, y_vec)
            logp = scorer.class_log_prob(x, y_vec)
            lik = torch.exp(logp).detach().numpy()
            bad = ~np.isfinite(lik)
            if bad.any():
                alive &= torch.from_numpy(~bad)
                lik = np.where(bad, last_lik, lik)
            last_lik = np.where(alive.numpy(), lik, last_lik)
            traj[:, step] = last_lik

            loss = -logp[alive].sum()
            if disc is not None and cfg.prior_weight > 0:
                src_logits, _ = disc(x)
                loss = loss + cfg.prior_weight * (-src_logits[alive].sum())
            opt.zero_grad()
            loss.backward()
            with torch.no_grad():
                z.grad[~alive] = 0.0
            opt.step()
            _reproject(z, max_norm)
            with torch.no_grad():
                nonfinite = ~torch.isfinite(z).all(dim=1)
                if nonfinite.any():
                    alive &= ~nonfinite
                z[~alive] = last_good[~alive]
                last_good[alive] = z.detach()[alive]

        with torch.no_grad():
            x = G(z, y_vec)
            logp = scorer.class_log_prob(x, y_vec)
            lik = torch.exp(logp).numpy()
            last_lik = np.where(alive.numpy() & np.isfinite(lik), lik, last_lik)
            traj[:, cfg.steps] = last_lik

    return ReconstructionSet(
        target_class=y,
        latents=z.detach().clone(),
        images=x.detach().clone(),
        likelihoods=last_lik,
        trajectories=traj,
    )


def invert_conditional(G, surrogate, y: int, cfg: InversionConfig) -> ReconstructionSet:
    """Likelihood ascent over z with the generator conditioned on the target class."""
    cfg = _with_style(cfg, InversionStyle.CONDITIONAL_ASCENT)
    return _ascend(G, surrogate, y, cfg)


def invert_prior_regularized(G, disc, surrogate, y: int, cfg: InversionConfig) -> ReconstructionSet:
    """Likelihood ascent plus a realness prior from the discriminator source head.

    With prior_weight == 0 the prior term is dropped structurally and the
    run is plain likelihood ascent under this style's optimizer.
    """
    cfg = _with_style(cfg, InversionStyle.PRIOR_REGULARIZED)
    return _ascend(G, surrogate, y, cfg, disc=disc if cfg.prior_weight > 0 else None)


def _with_style(cfg: InversionConfig, style: InversionStyle) -> InversionConfig:
    return cfg if cfg.style == style else dataclasses.replace(cfg, style=style)


def select_final(recons: ReconstructionSet, n: int) -> ReconstructionSet:
    """Top-n candidates by final likelihood; ties broken by candidate index."""
    if n > len(recons):
        raise ValueError(f"cannot select {n} of {len(recons)} candidates")
    order = sorted(range(len(recons)), key=lambda i: (-recons.likelihoods[i], i))[:n]
    idx = torch.as_tensor(order, dtype=torch.long)
    return ReconstructionSet(
        target_class=recons.target_class,
        latents=recons.latents[idx],
        images=recons.images[idx],
        likelihoods=recons.likelihoods[np.asarray(order)],
        trajectories=recons.trajectories[np.asarray(order)],
    )
