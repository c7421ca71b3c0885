"""Reference surrogate-construction pipelines for the controlled comparison.

All four consume exactly |public_set| oracle queries (the one-time
pseudo-labeling of the public images) and share every downstream
component, so differences in attack outcomes isolate how the surrogate
was built:

  DIRECT_I   train a classifier on the pseudo-labeled public set
  DIRECT_II  same, after augmentation-based class balancing
  ACGAN_I    train a classic auxiliary-classifier GAN on the pseudo-labeled
             public set and use its trunk+class head as the surrogate
  ACGAN_II   same, on the balanced set

The direct variants use the same architecture as the GAN trunk+class-head
surrogate so the comparison stays architecture-matched.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .datasets import (
    AugmentationPolicy,
    CoverageReport,
    DatasetSplit,
    PseudoLabeledDataset,
    balance_by_augmentation,
    build_pseudo_labeled_public,
)
from .oracle import attack_phase
from .surrogate import SURROGATE_TRAIN_DEFAULTS, SurrogateModel, extract_cd, train_surrogate
from .tacgan import GanTrainConfig, train_acgan
from .training import ClassifierTrainConfig


class BaselineKind(str, Enum):
    DIRECT_I = "direct_i"
    DIRECT_II = "direct_ii"
    ACGAN_I = "acgan_i"
    ACGAN_II = "acgan_ii"


@dataclass(frozen=True)
class BaselineSpec:
    kind: BaselineKind
    classifier: ClassifierTrainConfig = SURROGATE_TRAIN_DEFAULTS
    gan: GanTrainConfig | None = None
    augmentation: AugmentationPolicy | None = None
    balance_target: int | None = None  # None: pad to the largest class count

    def __post_init__(self):
        if self.kind in (BaselineKind.DIRECT_II, BaselineKind.ACGAN_II) and self.augmentation is None:
            raise ValueError(f"{self.kind.value} requires an augmentation policy")
        if self.kind in (BaselineKind.ACGAN_I, BaselineKind.ACGAN_II) and self.gan is None:
            raise ValueError(f"{self.kind.value} requires a GAN training config")


@dataclass
class BaselineResult:
    kind: BaselineKind
    surrogate: SurrogateModel
    generator: object | None = None
    discriminator: object | None = None
    pseudo_public: PseudoLabeledDataset | None = None
    coverage: CoverageReport | None = None


def run_baseline(spec: BaselineSpec, split: DatasetSplit, oracle,
                 pseudo_public: PseudoLabeledDataset | None = None) -> BaselineResult:
    """Run one reference pipeline.

    pseudo_public may be passed in when the public set was already
    relabeled (the labeling is identical across baselines); otherwise it
    is produced here at a cost of |public_set| queries.
    """
    with attack_phase():
        if pseudo_public is None:
            pseudo_public = build_pseudo_labeled_public(split.public_images, oracle)
        ds = pseudo_public
        coverage = None
        if spec.kind in (BaselineKind.DIRECT_II, BaselineKind.ACGAN_II):
            target = spec.balance_target or int(ds.class_histogram.max())
            ds, coverage = balance_by_augmentation(ds, target, spec.augmentation)

        if spec.kind in (BaselineKind.DIRECT_I, BaselineKind.DIRECT_II):
            surrogate = train_surrogate(ds, "cd_head", spec.classifier)
            return BaselineResult(spec.kind, surrogate, pseudo_public=pseudo_public,
                                  coverage=coverage)

        G, D, _ = train_acgan(ds.images, ds.labels, ds.num_classes, spec.gan)
        return BaselineResult(spec.kind, extract_cd(D), generator=G, discriminator=D,
                              pseudo_public=pseudo_public, coverage=coverage)
