"""The private target classifier and its two strictly separated views.

The attacker-facing view is a hard-label oracle: argmax class ids only,
every query batch counted in an append-only per-phase ledger. The
experimenter-facing view is a soft-probability probe used by evaluation
and analysis code; it never touches the ledger and refuses to run inside
an attack-phase context, so attack code cannot read confidence scores
even by accident.
"""

from __future__ import annotations

import contextlib
import contextvars
import json
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import torch

from .datasets import DatasetSplit, PIXEL_RANGE
from .training import ClassifierTrainConfig, fit_classifier

__all__ = [
    "PhaseTag",
    "LedgerSnapshot",
    "QueryLedger",
    "PrivilegeError",
    "OracleInputError",
    "attack_phase",
    "in_attack_phase",
    "TargetModel",
    "train_target",
    "HardLabelOracle",
    "ExperimenterToken",
    "ExperimenterProbe",
    "TargetDeployment",
    "deploy_target",
    "ledger_frozen",
]


class PhaseTag(str, Enum):
    TACGAN_TRAINING = "tacgan_training"
    SYNTHETIC_LABELING = "synthetic_labeling"
    PUBLIC_RELABELING = "public_relabeling"
    OTHER = "other"


@dataclass(frozen=True)
class LedgerSnapshot:
    tacgan_training: int = 0
    synthetic_labeling: int = 0
    public_relabeling: int = 0
    other: int = 0

    @property
    def total(self) -> int:
        return self.tacgan_training + self.synthetic_labeling + self.public_relabeling + self.other

    def to_dict(self) -> dict:
        return {
            "tacgan_training": self.tacgan_training,
            "synthetic_labeling": self.synthetic_labeling,
            "public_relabeling": self.public_relabeling,
            "other": self.other,
            "total": self.total,
        }


class QueryLedger:
    """Append-only per-phase query counters; increments are atomic."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts = {tag: 0 for tag in PhaseTag}

    def record(self, phase: PhaseTag, n: int) -> None:
        if n < 0:
            raise ValueError("cannot record a negative query count")
        with self._lock:
            self._counts[PhaseTag(phase)] += n

    def snapshot(self) -> LedgerSnapshot:
        with self._lock:
            return LedgerSnapshot(
                tacgan_training=self._counts[PhaseTag.TACGAN_TRAINING],
                synthetic_labeling=self._counts[PhaseTag.SYNTHETIC_LABELING],
                public_relabeling=self._counts[PhaseTag.PUBLIC_RELABELING],
                other=self._counts[PhaseTag.OTHER],
            )

    def to_json(self, path: Path | None = None) -> str:
        text = json.dumps(self.snapshot().to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, path: Path) -> "QueryLedger":
        data = json.loads(Path(path).read_text())
        ledger = cls()
        for tag in PhaseTag:
            ledger._counts[tag] = int(data.get(tag.value, 0))
        return ledger


class PrivilegeError(RuntimeError):
    """Soft-probability access attempted from an attack code path."""


class OracleInputError(ValueError):
    pass


_ATTACK_PHASE: contextvars.ContextVar[bool] = contextvars.ContextVar("attack_phase", default=False)


@contextlib.contextmanager
def attack_phase():
    """Marks the dynamic extent of attacker-side code."""
    token = _ATTACK_PHASE.set(True)
    try:
        yield
    finally:
        _ATTACK_PHASE.reset(token)


def in_attack_phase() -> bool:
    return _ATTACK_PHASE.get()


@contextlib.contextmanager
def ledger_frozen(oracle: "HardLabelOracle"):
    """Asserts the wrapped block consumes no oracle queries."""
    before = oracle.ledger_report()
    yield
    after = oracle.ledger_report()
    if before != after:
        raise AssertionError(f"oracle queried inside a ledger-frozen block: {before} -> {after}")


# ---------------------------------------------------------------------------
# target model

class TargetModel:
    def __init__(self, net: torch.nn.Module, architecture_id: str, num_classes: int,
                 input_shape, pixel_range=PIXEL_RANGE, manifest: dict | None = None):
        self.net = net.eval()
        self.architecture_id = architecture_id
        self.num_classes = num_classes
        self.input_shape = tuple(input_shape)
        self.pixel_range = tuple(pixel_range)
        self.manifest = manifest or {}

    @torch.no_grad()
    def predict_proba(self, batch: torch.Tensor) -> np.ndarray:
        self.net.eval()
        return torch.softmax(self.net(batch), dim=1).numpy()


def train_target(split: DatasetSplit, architecture_id: str, cfg: ClassifierTrainConfig) -> TargetModel:
    """Fit the private classifier on the private side of a split."""
    from .nets import build_classifier

    net = build_classifier(architecture_id, split.num_private_classes, split.image_shape)
    manifest, _ = fit_classifier(net, split.private_images, split.private_labels, cfg)
    manifest.update(
        architecture_id=architecture_id,
        dataset_digest=split.manifest.get("digest"),
        num_classes=split.num_private_classes,
    )
    return TargetModel(
        net=net,
        architecture_id=architecture_id,
        num_classes=split.num_private_classes,
        input_shape=split.image_shape,
        pixel_range=split.pixel_range,
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# deployment: oracle + probe

class HardLabelOracle:
    """Attacker-facing interface: hard labels only, every batch ledgered."""

    def __init__(self, target: TargetModel, ledger: QueryLedger | None = None):
        self._predict = target.predict_proba  # private; probabilities never leave
        self.num_classes = target.num_classes
        self.input_shape = target.input_shape
        self.pixel_range = target.pixel_range
        self._ledger = ledger if ledger is not None else QueryLedger()

    def _validate(self, batch: torch.Tensor) -> torch.Tensor:
        if not isinstance(batch, torch.Tensor):
            raise OracleInputError("oracle expects a torch.Tensor batch")
        if batch.ndim != 4 or tuple(batch.shape[1:]) != self.input_shape:
            raise OracleInputError(
                f"batch shape {tuple(batch.shape)} does not match input shape {self.input_shape}"
            )
        lo, hi = self.pixel_range
        tol = 1e-4
        if batch.numel() and (batch.min().item() < lo - tol or batch.max().item() > hi + tol):
            raise OracleInputError(f"pixel values outside declared range [{lo}, {hi}]")
        return batch

    def query(self, batch: torch.Tensor, phase: PhaseTag) -> np.ndarray:
        """Hard labels for a batch; the phase counter grows by the batch size."""
        batch = self._validate(batch)
        probs = self._predict(batch.detach())
        labels = np.argmax(probs, axis=1).astype(np.int64)  # first max wins ties
        self._ledger.record(phase, len(labels))
        return labels

    def ledger_report(self) -> LedgerSnapshot:
        return self._ledger.snapshot()

    def save_ledger(self, path: Path) -> None:
        self._ledger.to_json(path)


class ExperimenterToken:
    """Capability object gating soft-probability access.

    Only evaluation/analysis entry points construct one; attack-side
    functions neither accept nor create tokens.
    """


class ExperimenterProbe:
    """Full softmax outputs for evaluation and analysis. Never ledgered."""

    def __init__(self, target: TargetModel, token: ExperimenterToken):
        if not isinstance(token, ExperimenterToken):
            raise PrivilegeError("experimenter probe requires a capability token")
        self._predict = target.predict_proba
        self.num_classes = target.num_classes

    def query(self, batch: torch.Tensor) -> np.ndarray:
        if in_attack_phase():
            raise PrivilegeError("soft-probability probe invoked from an attack-phase context")
        return self._predict(batch)

    def hard_labels(self, batch: torch.Tensor) -> np.ndarray:
        # experimenter-side argmax; identical to the oracle's labels but unledgered
        return np.argmax(self.query(batch), axis=1).astype(np.int64)


class TargetDeployment:
    """Owns the target model; hands out the oracle and (gated) the probe."""

    def __init__(self, target: TargetModel, ledger: QueryLedger | None = None):
        self._target = target
        self.oracle = HardLabelOracle(target, ledger)

    def probe(self, token: ExperimenterToken) -> ExperimenterProbe:
        if in_attack_phase():
            raise PrivilegeError("probe requested from an attack-phase context")
        return ExperimenterProbe(self._target, token)

    @property
    def target_architecture_id(self) -> str:
        return self._target.architecture_id


def deploy_target(target: TargetModel, ledger: QueryLedger | None = None) -> TargetDeployment:
    return TargetDeployment(target, ledger)
