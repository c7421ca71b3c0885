"""Two-head GAN losses and the alternating training loops.

The discriminator/classifier update comes in two flavours. The classic
auxiliary-classifier form supervises the class head on both real and fake
samples with the dataset/conditioning label. The target-assisted form
drops the real-sample class term entirely and instead supervises the class
head on fake samples with the hard label the target oracle assigns to
them; real public images contribute only to real/fake discrimination.
The generator update is identical in both: fool the source head while
matching the conditioning class.

All loss helpers take probabilities already evaluated at the supervision
label and clamp them at LOG_EPS before the log; that clamp is the only
place zero probabilities are handled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .datasets import DatasetSplit
from .oracle import PhaseTag, attack_phase
from .training import TrainingDivergedError

LOG_EPS = 1e-8


def _log(p: torch.Tensor) -> torch.Tensor:
    if torch.any(p > 1.0 + 1e-5) or torch.any(p < 0.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return torch.log(p.clamp_min(LOG_EPS))


def acgan_dc_loss(p_fake_src, p_real_src, p_class_fake_at_y, p_class_real_at_y) -> torch.Tensor:
    """Discriminator/classifier loss with class supervision on real and fake."""
    return -(
        _log(p_fake_src).mean()
        + _log(p_real_src).mean()
        + _log(p_class_fake_at_y).mean()
        + _log(p_class_real_at_y).mean()
    )


def acgan_g_loss(p_fake_src, p_class_fake_at_y, adv_weight=1.0, cls_weight=1.0) -> torch.Tensor:
    """Generator loss: lower when the source head is fooled and the class matches."""
    return adv_weight * _log(p_fake_src).mean() - cls_weight * _log(p_class_fake_at_y).mean()


def tacgan_dc_loss(p_fake_src, p_real_src, p_class_fake_at_label, adv_weight=1.0, cls_weight=1.0) -> torch.Tensor:
    """Target-assisted variant: no real-sample class term by construction."""
    return (
        -adv_weight * (_log(p_fake_src).mean() + _log(p_real_src).mean())
        - cls_weight * _log(p_class_fake_at_label).mean()
    )


def track_gamma(conditioning_labels, oracle_labels) -> float:
    """Fraction of samples whose oracle label equals the conditioning label."""
    y = np.asarray(conditioning_labels)
    yt = np.asarray(oracle_labels)
    if y.shape != yt.shape:
        raise ValueError("label lists must have equal length")
    if y.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(y == yt))


@dataclass(frozen=True)
class GanTrainConfig:
    iterations: int = 1000
    batch_size: int = 64
    d_steps_per_g_step: int = 5
    adversarial_weight: float = 1.0  # weight on the source terms
    classification_weight: float = 1.5  # weight on the class term
    latent_dim: int = 64
    g_lr: float = 2e-4
    d_lr: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.9
    adv_loss: str = "ce"  # "hinge" is a declared deviation from the written form
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        if min(self.iterations, self.batch_size, self.d_steps_per_g_step) < 1:
            raise ValueError("iterations, batch_size and d_steps_per_g_step must be positive")
        if self.adversarial_weight < 0 or self.classification_weight < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.adv_loss not in ("ce", "hinge"):
            raise ValueError("adv_loss must be 'ce' or 'hinge'")


@dataclass
class GammaTrace:
    """Per-iteration mean label-agreement values, each in [0, 1]."""

    values: np.ndarray
    d_loss: np.ndarray | None = None
    g_loss: np.ndarray | None = None
    pairs: list | None = None  # optional (conditioning, oracle) label log per iteration

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("gamma values must lie in [0, 1]")

    def __len__(self):
        return int(self.values.size)

    def to_csv(self, path) -> None:
        rows = ["iteration,gamma"] + [f"{i},{g:.6f}" for i, g in enumerate(self.values)]
        with open(path, "w") as f:
            f.write("\n".join(rows) + "\n")


class _RealBatcher:
    def __init__(self, images: torch.Tensor, batch_size: int, seed: int):
        self.images = images
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._order = self.rng.permutation(len(images))
        self._pos = 0

    def next(self) -> torch.Tensor:
        if self._pos + self.batch_size > len(self._order):
            self._order = self.rng.permutation(len(self.images))
            self._pos = 0
        idx = self._order[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return self.images[idx]


def _build_gan(num_classes, image_shape, cfg):
    from .nets import Discriminator, Generator

    torch.manual_seed(cfg.seed)
    G = Generator(cfg.latent_dim, num_classes, image_shape)
    D = Discriminator(num_classes, in_ch=image_shape[0])
    g_opt = torch.optim.Adam(G.parameters(), lr=cfg.g_lr, betas=(cfg.beta1, cfg.beta2))
    d_opt = torch.optim.Adam(D.parameters(), lr=cfg.d_lr, betas=(cfg.beta1, cfg.beta2))
    return G, D, g_opt, d_opt


def _check_finite(loss, what, iteration):
    if not torch.isfinite(loss):
        raise TrainingDivergedError(f"{what} loss non-finite at iteration {iteration}")


def _generator_step(G, D, g_opt, cfg, z, y):
    x_f = G(z, y)
    src_f, cls_f = D(x_f)
    p_cls = torch.softmax(cls_f, dim=1)[torch.arange(len(y)), y]
    if cfg.adv_loss == "hinge":
        loss = -cfg.adversarial_weight * src_f.mean() - cfg.classification_weight * _log(p_cls).mean()
    else:
        p_fake = 1.0 - torch.sigmoid(src_f)
        loss = acgan_g_loss(p_fake, p_cls, cfg.adversarial_weight, cfg.classification_weight)
    g_opt.zero_grad()
    loss.backward()
    g_opt.step()
    return loss


def train_tacgan(split: DatasetSplit, oracle, cfg: GanTrainConfig,
                 log_label_pairs: bool = False, label_sampler=None):
    """Alternating training with oracle-labeled fake batches.

    Every iteration runs `d_steps_per_g_step` discriminator updates, each
    on a freshly generated batch (labeled by one oracle call of the full
    batch size) plus a real public batch, followed by one generator update
    that uses only the conditioning labels. Total oracle consumption is
    exactly iterations * d_steps_per_g_step * batch_size.

    label_sampler(batch_size) -> int64 tensor overrides how conditioning
    labels are drawn (default: uniform over the private classes).
    """
    n = split.num_private_classes
    G, D, g_opt, d_opt = _build_gan(n, split.image_shape, cfg)
    gen = torch.Generator().manual_seed(cfg.seed)
    if label_sampler is None:
        label_sampler = lambda b: torch.randint(0, n, (b,), generator=gen)
    reals = _RealBatcher(split.public_images, cfg.batch_size, cfg.seed + 1)

    gammas, d_losses, g_losses = [], [], []
    pair_log: list | None = [] if log_label_pairs else None

    with attack_phase():
        for it in range(cfg.iterations):
            iter_gammas = []
            iter_pairs = []
            for _ in range(cfg.d_steps_per_g_step):
                z = torch.randn(cfg.batch_size, cfg.latent_dim, generator=gen)
                y = label_sampler(cfg.batch_size)
                with torch.no_grad():
                    x_f = G(z, y)
                y_tilde = oracle.query(x_f, PhaseTag.TACGAN_TRAINING)
                iter_gammas.append(track_gamma(y.numpy(), y_tilde))
                if pair_log is not None:
                    iter_pairs.append((y.numpy().copy(), y_tilde.copy()))
                y_t = torch.from_numpy(y_tilde)

                x_r = reals.next()
                src_all, cls_all = D(torch.cat([x_f, x_r]))
                src_f, src_r = src_all[: len(x_f)], src_all[len(x_f) :]
                cls_f = cls_all[: len(x_f)]
                p_cls = torch.softmax(cls_f, dim=1)[torch.arange(len(y_t)), y_t]
                if cfg.adv_loss == "hinge":
                    adv = torch.relu(1.0 - src_r).mean() + torch.relu(1.0 + src_f).mean()
                    d_loss = cfg.adversarial_weight * adv - cfg.classification_weight * _log(p_cls).mean()
                else:
                    d_loss = tacgan_dc_loss(
                        1.0 - torch.sigmoid(src_f),
                        torch.sigmoid(src_r),
                        p_cls,
                        cfg.adversarial_weight,
                        cfg.classification_weight,
                    )
                _check_finite(d_loss, "discriminator", it)
                d_opt.zero_grad()
                d_loss.backward()
                d_opt.step()

            z = torch.randn(cfg.batch_size, cfg.latent_dim, generator=gen)
            y = label_sampler(cfg.batch_size)
            g_loss = _generator_step(G, D, g_opt, cfg, z, y)
            _check_finite(g_loss, "generator", it)

            gammas.append(float(np.mean(iter_gammas)))
            d_losses.append(float(d_loss.detach()))
            g_losses.append(float(g_loss.detach()))
            if pair_log is not None:
                pair_log.append(iter_pairs)
            if cfg.log_every and (it + 1) % cfg.log_every == 0:
                print(
                    f"[tacgan {it + 1}/{cfg.iterations}] d_loss={d_loss:.3f} "
                    f"g_loss={g_loss:.3f} gamma={gammas[-1]:.3f}"
                )

    G.eval()
    D.eval()
    G.manifest.update(iterations=cfg.iterations, final_gamma=gammas[-1], seed=cfg.seed)
    D.manifest.update(iterations=cfg.iterations, seed=cfg.seed)
    trace = GammaTrace(
        values=np.asarray(gammas),
        d_loss=np.asarray(d_losses),
        g_loss=np.asarray(g_losses),
        pairs=pair_log,
    )
    return G, D, trace


def train_acgan(images: torch.Tensor, labels: torch.Tensor, num_classes: int, cfg: GanTrainConfig):
    """Classic auxiliary-classifier training on an already-labeled corpus.

    Class supervision uses the corpus labels on real samples and the
    conditioning labels on fake samples; no oracle is involved. With
    num_classes=1 every class probability is identically one, which
    reduces this to an unconditional GAN.
    """
    image_shape = tuple(images.shape[1:])
    G, D, g_opt, d_opt = _build_gan(num_classes, image_shape, cfg)
    gen = torch.Generator().manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    order = rng.permutation(len(images))
    pos = 0

    d_losses, g_losses = [], []
    for it in range(cfg.iterations):
        for _ in range(cfg.d_steps_per_g_step):
            if pos + cfg.batch_size > len(order):
                order = rng.permutation(len(images))
                pos = 0
            idx = order[pos : pos + cfg.batch_size]
            pos += cfg.batch_size
            x_r, y_r = images[idx], labels[idx]

            z = torch.randn(cfg.batch_size, cfg.latent_dim, generator=gen)
            y = torch.randint(0, num_classes, (cfg.batch_size,), generator=gen)
            with torch.no_grad():
                x_f = G(z, y)

            src_all, cls_all = D(torch.cat([x_f, x_r]))
            src_f, src_r = src_all[: len(x_f)], src_all[len(x_f) :]
            cls_f, cls_r = cls_all[: len(x_f)], cls_all[len(x_f) :]
            p_cls_f = torch.softmax(cls_f, dim=1)[torch.arange(len(y)), y]
            p_cls_r = torch.softmax(cls_r, dim=1)[torch.arange(len(y_r)), y_r]
            if cfg.adv_loss == "hinge":
                adv = torch.relu(1.0 - src_r).mean() + torch.relu(1.0 + src_f).mean()
                d_loss = adv - _log(p_cls_f).mean() - _log(p_cls_r).mean()
            else:
                d_loss = acgan_dc_loss(
                    1.0 - torch.sigmoid(src_f), torch.sigmoid(src_r), p_cls_f, p_cls_r
                )
            _check_finite(d_loss, "discriminator", it)
            d_opt.zero_grad()
            d_loss.backward()
            d_opt.step()

        z = torch.randn(cfg.batch_size, cfg.latent_dim, generator=gen)
        y = torch.randint(0, num_classes, (cfg.batch_size,), generator=gen)
        g_loss = _generator_step(G, D, g_opt, cfg, z, y)
        _check_finite(g_loss, "generator", it)
        d_losses.append(float(d_loss.detach()))
        g_losses.append(float(g_loss.detach()))
        if cfg.log_every and (it + 1) % cfg.log_every == 0:
            print(f"[acgan {it + 1}/{cfg.iterations}] d_loss={d_loss:.3f} g_loss={g_loss:.3f}")

    G.eval()
    D.eval()
    G.manifest.update(iterations=cfg.iterations, seed=cfg.seed)
    D.manifest.update(iterations=cfg.iterations, seed=cfg.seed)
    return G, D, {"d_loss": np.asarray(d_losses), "g_loss": np.asarray(g_losses)}
