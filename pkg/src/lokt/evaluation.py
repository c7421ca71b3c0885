"""Attack metrics computed under an independently trained evaluation model.

The evaluation model stands in for human inspection: it must use an
architecture different from the target's and is trained on the private
set. Attack accuracy is the fraction of reconstructions it assigns to
their target class; the KNN distance is the minimum penultimate-feature
l2 distance between a reconstruction and the target class's private
images.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .datasets import DatasetSplit
from .training import ClassifierTrainConfig, fit_classifier


class EvaluationModel:
    def __init__(self, net, architecture_id: str, num_classes: int, manifest: dict | None = None):
        self.net = net.eval()
        self.architecture_id = architecture_id
        self.num_classes = num_classes
        self.manifest = manifest or {}

    @torch.no_grad()
    def predict(self, x: torch.Tensor) -> np.ndarray:
        self.net.eval()
        return self.net(x).argmax(dim=1).numpy()

    @torch.no_grad()
    def features(self, x: torch.Tensor, batch_size: int = 512) -> np.ndarray:
        self.net.eval()
        out = [self.net.features(x[i : i + batch_size]).numpy() for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, 0))


def train_eval_model(split: DatasetSplit, architecture_id: str, cfg: ClassifierTrainConfig,
                     target_architecture_id: str) -> EvaluationModel:
    from .nets import build_classifier

    if architecture_id == target_architecture_id:
        raise ValueError(
            f"evaluation model must use a different architecture than the target ({architecture_id})"
        )
    net = build_classifier(architecture_id, split.num_private_classes, split.image_shape)
    manifest, _ = fit_classifier(net, split.private_images, split.private_labels, cfg)
    manifest.update(architecture_id=architecture_id, role="evaluation")
    return EvaluationModel(net, architecture_id, split.num_private_classes, manifest)


@dataclass
class MetricReport:
    """Per-class and aggregate attack metrics for one attack run."""

    per_class_accuracy: dict[int, float]
    accuracy_mean: float
    per_class_knn: dict[int, float] = field(default_factory=dict)
    knn_mean: float = float("nan")
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_class_accuracy": {int(k): v for k, v in self.per_class_accuracy.items()},
            "accuracy_mean": self.accuracy_mean,
            "per_class_knn": {int(k): v for k, v in self.per_class_knn.items()},
            "knn_mean": self.knn_mean,
            "metadata": self.metadata,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def attack_accuracy(recons_by_class: dict[int, torch.Tensor], model: EvaluationModel) -> MetricReport:
    """Top-1 fraction of reconstructions classified as their target class."""
    per_class = {}
    for y, images in sorted(recons_by_class.items()):
        if len(images) == 0:
            raise ValueError(f"no reconstructions for class {y}")
        preds = model.predict(images)
        per_class[int(y)] = float(np.mean(preds == y))
    mean = float(np.mean(list(per_class.values())))
    return MetricReport(per_class_accuracy=per_class, accuracy_mean=mean)


def knn_distance(recons_by_class: dict[int, torch.Tensor], split: DatasetSplit,
                 model: EvaluationModel) -> MetricReport:
    """Min feature-space l2 to the class's private images, averaged per class."""
    labels = split.private_labels.numpy()
    per_class = {}
    for y, images in sorted(recons_by_class.items()):
        idx = np.flatnonzero(labels == y)
        if len(idx) == 0:
            raise ValueError(f"private set has no samples of class {y}")
        priv_feats = model.features(split.private_images[idx])
        rec_feats = model.features(images)
        diffs = rec_feats[:, None, :] - priv_feats[None, :, :]
        dists = np.sqrt((diffs**2).sum(axis=2))
        per_class[int(y)] = float(dists.min(axis=1).mean())
    mean = float(np.mean(list(per_class.values())))
    return MetricReport(per_class_accuracy={}, accuracy_mean=float("nan"),
                        per_class_knn=per_class, knn_mean=mean)


def evaluate_attack(recons_by_class, split, model, metadata=None) -> MetricReport:
    acc = attack_accuracy(recons_by_class, model)
    knn = knn_distance(recons_by_class, split, model)
    return MetricReport(
        per_class_accuracy=acc.per_class_accuracy,
        accuracy_mean=acc.accuracy_mean,
        per_class_knn=knn.per_class_knn,
        knn_mean=knn.knn_mean,
        metadata=metadata or {},
    )


@dataclass
class SeedAggregate:
    accuracy_mean: float
    accuracy_std: float
    knn_mean: float
    n_seeds: int


def aggregate_runs(reports: list[MetricReport]) -> SeedAggregate:
    """Mean and dispersion across independent attack seeds."""
    accs = np.asarray([r.accuracy_mean for r in reports])
    knns = np.asarray([r.knn_mean for r in reports])
    return SeedAggregate(
        accuracy_mean=float(accs.mean()),
        accuracy_std=float(accs.std(ddof=1)) if len(accs) > 1 else 0.0,
        knn_mean=float(np.nanmean(knns)),
        n_seeds=len(reports),
    )
