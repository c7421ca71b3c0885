"""Shared supervised-training loop for the small classifiers in this project."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassifierTrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    optimizer: str = "sgd"
    cosine_schedule: bool = True
    val_fraction: float = 0.1
    seed: int = 0


def _make_optimizer(net, cfg: ClassifierTrainConfig):
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(
            net.parameters(), lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
        )
    if cfg.optimizer == "adam":
        return torch.optim.Adam(net.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


@torch.no_grad()
def accuracy(net, images, labels, batch_size=512) -> float:
    net.eval()
    hits = 0
    for i in range(0, len(images), batch_size):
        logits = net(images[i : i + batch_size])
        hits += (logits.argmax(dim=1) == labels[i : i + batch_size]).sum().item()
    return hits / max(len(images), 1)


def fit_classifier(net, images, labels, cfg: ClassifierTrainConfig, checkpoint_epochs=()):
    """Cross-entropy training; returns a manifest dict (plus model snapshots).

    checkpoint_epochs: 1-based epochs after which a deep copy of the net is
    stashed (used to study how the model's per-sample confidence evolves).
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    n = len(images)
    n_val = int(round(cfg.val_fraction * n)) if cfg.val_fraction > 0 else 0
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    x_train, y_train = images[train_idx], labels[train_idx]

    opt = _make_optimizer(net, cfg)
    sched = (
        torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.epochs)
        if cfg.cosine_schedule
        else None
    )

    checkpoints: dict[int, torch.nn.Module] = {}
    for epoch in range(1, cfg.epochs + 1):
        net.train()
        order = rng.permutation(len(x_train))
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            logits = net(x_train[idx])
            loss = F.cross_entropy(logits, y_train[idx])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
        if sched is not None:
            sched.step()
        if epoch in checkpoint_epochs:
            snap = copy.deepcopy(net)
            snap.eval()
            checkpoints[epoch] = snap

    net.eval()
    manifest = {
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "train_accuracy": accuracy(net, x_train, y_train),
        "val_accuracy": accuracy(net, images[val_idx], labels[val_idx]) if n_val else None,
        "n_train": int(len(x_train)),
    }
    return manifest, checkpoints
