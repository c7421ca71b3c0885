"""Declarative experiment configuration.

One YAML file describes the full pipeline; every stage command takes only
the config path plus a stage name. The config digest is computed over the
parsed structure with sorted keys, so reordering fields in the file does
not change it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .artifacts import canonical_digest
from .baselines import BaselineKind
from .datasets import AugmentationPolicy, SplitPolicy
from .tacgan import GanTrainConfig
from .training import ClassifierTrainConfig

_DEFAULTS: dict = {
    "seed": 0,
    "output_dir": "runs/experiment",
    "data": {
        "dataset_id": "digits16",
        "private_classes": None,
        "private_per_class": 300,
        "private_total": None,
        "public_source": "companion:letters16",
        "public_size": 3600,
    },
    "target": {
        "architecture": "target_cnn",
        "epochs": 12,
        "batch_size": 64,
        "lr": 0.05,
        "momentum": 0.9,
        "weight_decay": 5.0e-4,
        "optimizer": "sgd",
    },
    "tacgan": {
        "iterations": 1500,
        "batch_size": 32,
        "d_steps_per_g_step": 5,
        "adversarial_weight": 1.0,
        "classification_weight": 1.5,
        "latent_dim": 64,
        "g_lr": 2.0e-4,
        "d_lr": 2.0e-4,
        "log_every": 100,
    },
    "surrogate": {
        "per_class": 500,
        "architectures": ["dense_s", "dense_m", "dense_l"],
        "primary": "dense_m",
        "epochs": 40,
        "batch_size": 64,
        "lr": 0.1,
        "momentum": 0.9,
        "weight_decay": 5.0e-4,
        "checkpoint_epochs": [2, 20, 40],
    },
    "baselines": {
        "enabled": ["direct_i", "direct_ii", "acgan_i", "acgan_ii"],
        "balance_target": None,
        "augmentation": {"max_shift": 2, "max_rotate_deg": 10.0, "noise_std": 0.03},
        "classifier_epochs": 40,
        "gan": {
            "iterations": 1500,
            "batch_size": 32,
            "d_steps_per_g_step": 5,
            "adversarial_weight": 1.0,
            "classification_weight": 1.0,
            "log_every": 100,
        },
        "public_gan": {
            "iterations": 800,
            "batch_size": 32,
            "d_steps_per_g_step": 5,
            "adversarial_weight": 1.0,
            "classification_weight": 0.0,
            "log_every": 100,
        },
    },
    "attack": {
        "target_classes": None,
        "seeds": [201, 202, 203],
        "candidates_per_class": 5,
        "select_top": 1,
        "conditional": {"steps": 300, "step_size": 2.0e-3},
        "prior": {"steps": 400, "step_size": 0.02, "prior_weight": 0.05, "momentum": 0.9},
    },
    "evaluation": {"architecture": "eval_cnn", "epochs": 14, "lr": 0.05},
    "analysis": {
        "sample_count": 10000,
        "ps_threshold": 0.9,
        "easy_fraction": 0.7,
        "dynamics_per_class": 40,
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in (override or {}).items():
        if k not in base:
            raise KeyError(f"unknown config key {k!r}")
        out[k] = _merge(base[k], v) if isinstance(base[k], dict) and isinstance(v, dict) else v
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    path: Path | None = None

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        return cls(raw=_merge(_DEFAULTS, data), path=Path(path))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(raw=_merge(_DEFAULTS, data))

    def digest(self) -> str:
        return canonical_digest(self.raw)

    # -- derived views ------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = dict(self.raw)
        raw["seed"] = int(seed)
        return ExperimentConfig(raw=raw, path=self.path)

    @property
    def output_dir(self) -> Path:
        root = os.environ.get("LOKT_OUTPUT_ROOT")
        out = Path(self.raw["output_dir"])
        return Path(root) / out if root else out

    @property
    def dataset_id(self) -> str:
        return self.raw["data"]["dataset_id"]

    def split_policy(self) -> SplitPolicy:
        d = self.raw["data"]
        return SplitPolicy(
            private_classes=tuple(d["private_classes"]) if d["private_classes"] else None,
            private_per_class=d["private_per_class"],
            private_total=d["private_total"],
            public_source=d["public_source"],
            public_size=d["public_size"],
            seed=self.seed,
        )

    def target_train(self) -> ClassifierTrainConfig:
        t = self.raw["target"]
        return ClassifierTrainConfig(
            epochs=t["epochs"], batch_size=t["batch_size"], lr=t["lr"],
            momentum=t["momentum"], weight_decay=t["weight_decay"],
            optimizer=t["optimizer"], seed=self.seed + 1,
        )

    def tacgan_train(self) -> GanTrainConfig:
        g = self.raw["tacgan"]
        return GanTrainConfig(
            iterations=g["iterations"], batch_size=g["batch_size"],
            d_steps_per_g_step=g["d_steps_per_g_step"],
            adversarial_weight=g["adversarial_weight"],
            classification_weight=g["classification_weight"],
            latent_dim=g["latent_dim"], g_lr=g["g_lr"], d_lr=g["d_lr"],
            seed=self.seed + 2, log_every=g.get("log_every", 0),
        )

    def surrogate_train(self) -> ClassifierTrainConfig:
        s = self.raw["surrogate"]
        return ClassifierTrainConfig(
            epochs=s["epochs"], batch_size=s["batch_size"], lr=s["lr"],
            momentum=s["momentum"], weight_decay=s["weight_decay"],
            optimizer="sgd", cosine_schedule=True, val_fraction=0.0,
            seed=self.seed + 3,
        )

    def baseline_gan(self, kind: str) -> GanTrainConfig:
        g = self.raw["baselines"]["gan" if kind != "public" else "public_gan"]
        return GanTrainConfig(
            iterations=g["iterations"], batch_size=g["batch_size"],
            d_steps_per_g_step=g["d_steps_per_g_step"],
            adversarial_weight=g["adversarial_weight"],
            classification_weight=g["classification_weight"],
            latent_dim=self.raw["tacgan"]["latent_dim"],
            seed=self.seed + 4, log_every=g.get("log_every", 0),
        )

    def baseline_classifier(self) -> ClassifierTrainConfig:
        s = self.surrogate_train()
        b = self.raw["baselines"]
        return ClassifierTrainConfig(
            epochs=b.get("classifier_epochs", s.epochs), batch_size=s.batch_size,
            lr=s.lr, momentum=s.momentum, weight_decay=s.weight_decay,
            optimizer="sgd", cosine_schedule=True, val_fraction=0.0,
            seed=self.seed + 5,
        )

    def augmentation_policy(self) -> AugmentationPolicy:
        a = self.raw["baselines"]["augmentation"]
        return AugmentationPolicy(
            max_shift=a["max_shift"], max_rotate_deg=a["max_rotate_deg"],
            noise_std=a["noise_std"], seed=self.seed + 6,
        )

    def enabled_baselines(self) -> list[BaselineKind]:
        return [BaselineKind(k) for k in self.raw["baselines"]["enabled"]]
