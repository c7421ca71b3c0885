"""Surrogate classifiers distilled from the hard-label oracle.

Three designs: (i) reuse the trained discriminator trunk + class head
directly, (ii) train a fresh classifier on generated images labeled by
the oracle, (iii) an ensemble of such classifiers with different
architectures, scored by the mean of member log-likelihoods.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .datasets import DatasetSource, PseudoLabeledDataset
from .oracle import PhaseTag, attack_phase
from .training import ClassifierTrainConfig, fit_classifier

SURROGATE_TRAIN_DEFAULTS = ClassifierTrainConfig(
    epochs=40, batch_size=64, lr=0.1, momentum=0.9, weight_decay=5e-4,
    optimizer="sgd", cosine_schedule=True, val_fraction=0.0,
)


class Provenance(str, Enum):
    CD_HEAD = "cd_head"
    SYNTHETIC_TRAINED = "synthetic_trained"


class SurrogateModel:
    """A differentiable N-way classifier with a uniform scoring interface."""

    def __init__(self, net: nn.Module, architecture_id: str, num_classes: int,
                 provenance: Provenance, manifest: dict | None = None):
        self.net = net.eval()
        self.architecture_id = architecture_id
        self.num_classes = num_classes
        self.provenance = provenance
        self.manifest = manifest or {}
        self.checkpoints: dict[int, "SurrogateModel"] = {}

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)

    def class_log_prob(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        """log P(y|x) per sample; differentiable w.r.t. x."""
        logp = F.log_softmax(self.net(x), dim=1)
        return logp[torch.arange(len(y)), y]

    @torch.no_grad()
    def predict_proba(self, x: torch.Tensor) -> np.ndarray:
        return torch.softmax(self.net(x), dim=1).numpy()

    @torch.no_grad()
    def predict(self, x: torch.Tensor) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)


class SurrogateEnsemble:
    """Fixed set of surrogates scored by the mean of member log-likelihoods."""

    def __init__(self, members):
        members = list(members)
        if len(members) < 2:
            raise ValueError("an ensemble needs at least two members")
        arch_ids = [m.architecture_id for m in members]
        if len(set(arch_ids)) != len(arch_ids):
            raise ValueError("ensemble members must have distinct architecture_ids")
        if len({m.num_classes for m in members}) != 1:
            raise ValueError("ensemble members must share the class count")
        self.members = tuple(members)
        self.num_classes = members[0].num_classes
        self.architecture_id = "ensemble:" + "+".join(sorted(arch_ids))

    def class_log_prob(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return torch.stack([m.class_log_prob(x, y) for m in self.members]).mean(dim=0)

    @torch.no_grad()
    def predict_proba(self, x: torch.Tensor) -> np.ndarray:
        logp = np.stack([F.log_softmax(m.net(x), dim=1).numpy() for m in self.members])
        return np.exp(logp.mean(axis=0))


class _CDView(nn.Module):
    def __init__(self, disc):
        super().__init__()
        self.disc = disc

    def features(self, x):
        return self.disc.features(x)

    def forward(self, x):
        return self.disc.class_logits(self.disc.features(x))


def extract_cd(disc) -> SurrogateModel:
    """Reuse the trained discriminator's trunk + class head as a classifier.

    Costs zero oracle queries; parameters are shared with the
    discriminator, not copied.
    """
    if disc.manifest.get("iterations", 0) <= 0:
        raise ValueError("discriminator manifest reports no training iterations")
    return SurrogateModel(
        net=_CDView(disc).eval(),
        architecture_id="cd_head",
        num_classes=disc.num_classes,
        provenance=Provenance.CD_HEAD,
        manifest={"from_iterations": disc.manifest["iterations"]},
    )


class SyntheticLabelingError(RuntimeError):
    def __init__(self, msg, progress):
        super().__init__(msg)
        self.progress = progress  # partial-progress manifest


def generate_fake_dataset(G, oracle, per_class: int, seed: int = 0,
                          batch_size: int = 200) -> PseudoLabeledDataset:
    """Generate per_class samples for every class and label them via the oracle.

    Conditioning labels cycle over the classes (balanced by construction);
    the stored labels are the oracle's, whose realized histogram may be
    skewed and is reported in the manifest unchanged.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    n = oracle.num_classes
    gen = torch.Generator().manual_seed(seed)
    cond = torch.arange(n).repeat(per_class)
    images, labels = [], []
    with attack_phase():
        for i in range(0, len(cond), batch_size):
            y = cond[i : i + batch_size]
            z = torch.randn(len(y), G.latent_dim, generator=gen)
            with torch.no_grad():
                x = G(z, y)
            try:
                y_tilde = oracle.query(x, PhaseTag.SYNTHETIC_LABELING)
            except Exception as exc:
                raise SyntheticLabelingError(
                    f"oracle failed after {len(labels) * batch_size} labeled samples",
                    progress={"labeled": sum(len(l) for l in labels), "requested": len(cond)},
                ) from exc
            images.append(x)
            labels.append(y_tilde)
    return PseudoLabeledDataset(
        images=torch.cat(images),
        labels=torch.from_numpy(np.concatenate(labels)),
        num_classes=n,
        source=DatasetSource.SYNTHETIC,
        manifest={
            "origin": "generated",
            "per_class": per_class,
            "seed": seed,
            "conditioning_histogram": np.bincount(cond.numpy(), minlength=n).tolist(),
        },
    )


def train_surrogate(ds: PseudoLabeledDataset, architecture_id: str,
                    cfg: ClassifierTrainConfig = SURROGATE_TRAIN_DEFAULTS,
                    checkpoint_epochs=()) -> SurrogateModel:
    """Cross-entropy training on a pseudo-labeled dataset; oracle-free."""
    from .nets import build_classifier

    if len(ds) == 0:
        raise ValueError("cannot train a surrogate on an empty dataset")
    net = build_classifier(architecture_id, ds.num_classes, tuple(ds.images.shape[1:]))
    manifest, snaps = fit_classifier(net, ds.images, ds.labels, cfg, checkpoint_epochs)
    manifest.update(architecture_id=architecture_id, dataset_source=ds.source.value)
    model = SurrogateModel(net, architecture_id, ds.num_classes,
                           Provenance.SYNTHETIC_TRAINED, manifest)
    model.checkpoints = {
        ep: SurrogateModel(snap, architecture_id, ds.num_classes,
                           Provenance.SYNTHETIC_TRAINED, {"epoch": ep})
        for ep, snap in snaps.items()
    }
    return model


def build_ensemble(models) -> SurrogateEnsemble:
    return SurrogateEnsemble(models)
