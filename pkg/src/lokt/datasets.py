"""Dataset ingestion: registry, private/public splits and pseudo-labeled sets.

A split has two sides: a labeled private set the target classifier is
trained on, and an unlabeled public set the attacker is allowed to see.
The two sides never share a sample. All images are float32 tensors in
[-1, 1], shape (n, C, H, W).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .glyphs import DIGIT_GLYPHS, LETTER_GLYPHS, render_corpus

PIXEL_RANGE = (-1.0, 1.0)


class DatasetError(ValueError):
    pass


class DatasetSource(str, Enum):
    PUBLIC_RELABELED = "public_relabeled"
    SYNTHETIC = "synthetic"


# ---------------------------------------------------------------------------
# registry

_REGISTRY: dict[str, Callable[[int], tuple[np.ndarray, np.ndarray]]] = {}


def register_dataset(dataset_id: str, builder) -> None:
    """Register a builder(seed) -> (images, labels) under an id."""
    _REGISTRY[dataset_id] = builder


def registered_datasets() -> list[str]:
    return sorted(_REGISTRY)


def _build(dataset_id: str, seed: int):
    if dataset_id not in _REGISTRY:
        raise DatasetError(f"unknown dataset_id {dataset_id!r}; registered: {registered_datasets()}")
    images, labels = _REGISTRY[dataset_id](seed)
    return np.ascontiguousarray(images), np.ascontiguousarray(labels)


def _template_corpus(num_classes, per_class, size, seed):
    # cheap many-class stand-in: per-class low-res template, upsampled + noise
    rng = np.random.default_rng(seed)
    low = rng.uniform(-1.0, 1.0, size=(num_classes, 1, 4, 4)).astype(np.float32)
    templates = np.repeat(np.repeat(low, size // 4, axis=2), size // 4, axis=3)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    rng.shuffle(labels)
    images = templates[labels] * 0.7
    images += rng.normal(0.0, 0.15, images.shape).astype(np.float32)
    return np.clip(images, -1.0, 1.0).astype(np.float32), labels


register_dataset("digits16", lambda seed: render_corpus(DIGIT_GLYPHS, 360, 16, seed))
register_dataset("letters16", lambda seed: render_corpus(LETTER_GLYPHS, 340, 16, seed))
register_dataset("synthid1000", lambda seed: _template_corpus(1000, 62, 16, seed))


# ---------------------------------------------------------------------------
# splits

@dataclass(frozen=True)
class SplitPolicy:
    """How to carve a registered corpus into private / public sides.

    public_source: "companion:<dataset_id>" takes the public images from a
    different corpus (labels discarded); "holdout" takes them from samples
    of the same corpus left out of the private side.
    """

    private_classes: tuple[int, ...] | None = None
    private_per_class: int | None = None
    private_total: int | None = None
    public_source: str = "holdout"
    public_size: int = 0
    seed: int = 0

    def digest_fields(self) -> dict:
        d = asdict(self)
        d["private_classes"] = list(self.private_classes) if self.private_classes else None
        return d


@dataclass
class DatasetSplit:
    private_images: torch.Tensor
    private_labels: torch.Tensor
    public_images: torch.Tensor
    num_private_classes: int
    image_shape: tuple[int, int, int]
    pixel_range: tuple[float, float] = PIXEL_RANGE
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = self.private_labels
        if labels.numel() == 0 or self.public_images.shape[0] == 0:
            raise DatasetError("split policy yields an empty private or public set")
        if labels.min() < 0 or labels.max() >= self.num_private_classes:
            raise DatasetError("private label outside [0, num_private_classes)")
        priv = {_image_key(x) for x in self.private_images}
        pub = {_image_key(x) for x in self.public_images}
        if priv & pub:
            raise DatasetError("private and public sets share a sample")

    @property
    def private_set(self):
        return list(zip(self.private_images, self.private_labels.tolist()))

    @property
    def public_set(self) -> torch.Tensor:
        return self.public_images

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.private_images.numpy().tobytes())
        h.update(self.private_labels.numpy().tobytes())
        h.update(self.public_images.numpy().tobytes())
        return h.hexdigest()


def _image_key(img: torch.Tensor) -> bytes:
    return hashlib.sha256(np.ascontiguousarray(img.numpy()).tobytes()).digest()


def load_and_split(dataset_id: str, policy: SplitPolicy) -> DatasetSplit:
    """Build the private/public split for a registered corpus.

    Deterministic given (dataset_id, policy): the policy seed drives both
    corpus rendering and sample selection.
    """
    images, labels = _build(dataset_id, policy.seed)
    rng = np.random.default_rng(policy.seed + 1)
    num_classes = int(labels.max()) + 1

    classes = policy.private_classes or tuple(range(num_classes))
    class_map = {c: i for i, c in enumerate(sorted(classes))}

    per_class_idx = []
    for c in sorted(classes):
        idx = np.flatnonzero(labels == c)
        if policy.private_per_class is not None:
            idx = idx[: policy.private_per_class]
        per_class_idx.append(idx.tolist())
    if policy.private_total is not None:
        # round-robin over classes so a total cap still covers every class
        interleaved: list[int] = []
        depth = max(len(ix) for ix in per_class_idx)
        for j in range(depth):
            for ix in per_class_idx:
                if j < len(ix):
                    interleaved.append(ix[j])
        if len(interleaved) < policy.private_total:
            raise DatasetError(
                f"corpus provides {len(interleaved)} eligible private samples, "
                f"policy wants {policy.private_total}"
            )
        priv_idx = np.asarray(interleaved[: policy.private_total], dtype=np.int64)
    else:
        priv_idx = np.asarray([i for ix in per_class_idx for i in ix], dtype=np.int64)

    if policy.public_source.startswith("companion:"):
        pub_id = policy.public_source.split(":", 1)[1]
        pub_images, _ = _build(pub_id, policy.seed + 2)  # labels discarded here
        if policy.public_size:
            if policy.public_size > len(pub_images):
                raise DatasetError("companion corpus smaller than requested public_size")
            pub_images = pub_images[: policy.public_size]
    elif policy.public_source == "holdout":
        rest = np.setdiff1d(np.arange(len(images)), priv_idx)
        rng.shuffle(rest)
        n_pub = policy.public_size or len(rest)
        if n_pub > len(rest):
            raise DatasetError("not enough held-out samples for requested public_size")
        pub_images = images[rest[:n_pub]]
    else:
        raise DatasetError(f"unknown public_source {policy.public_source!r}")

    priv_images = images[priv_idx]
    priv_labels = np.asarray([class_map[int(c)] for c in labels[priv_idx]], dtype=np.int64)

    split = DatasetSplit(
        private_images=torch.from_numpy(priv_images),
        private_labels=torch.from_numpy(priv_labels),
        public_images=torch.from_numpy(np.ascontiguousarray(pub_images)),
        num_private_classes=len(classes),
        image_shape=tuple(priv_images.shape[1:]),
        manifest={
            "dataset_id": dataset_id,
            "policy": policy.digest_fields(),
            "seed": policy.seed,
        },
    )
    split.manifest["digest"] = split.digest()
    return split


# ---------------------------------------------------------------------------
# pseudo-labeled datasets

@dataclass
class PseudoLabeledDataset:
    images: torch.Tensor
    labels: torch.Tensor
    num_classes: int
    source: DatasetSource
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.labels.numel() and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError("pseudo label outside [0, num_classes)")

    def __len__(self):
        return int(self.images.shape[0])

    @property
    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels.numpy(), minlength=self.num_classes)


def build_pseudo_labeled_public(public_set: torch.Tensor, oracle, batch_size: int = 256) -> PseudoLabeledDataset:
    """Label every public image with one hard-label oracle query each."""
    from .oracle import PhaseTag, attack_phase

    labels = []
    with attack_phase():
        for i in range(0, len(public_set), batch_size):
            batch = public_set[i : i + batch_size]
            labels.append(oracle.query(batch, PhaseTag.PUBLIC_RELABELING))
    labels = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
    return PseudoLabeledDataset(
        images=public_set,
        labels=torch.from_numpy(labels),
        num_classes=oracle.num_classes,
        source=DatasetSource.PUBLIC_RELABELED,
        manifest={"origin": "public_relabeling", "n": len(public_set)},
    )


@dataclass(frozen=True)
class AugmentationPolicy:
    """Label-preserving image jitter used to pad minority classes."""

    max_shift: int = 2
    max_rotate_deg: float = 10.0
    noise_std: float = 0.03
    hflip: bool = False  # not label-preserving for glyphs; off by default
    seed: int = 0


def _augment_one(img: np.ndarray, pol: AugmentationPolicy, rng) -> np.ndarray:
    out = img.copy()
    dx, dy = rng.integers(-pol.max_shift, pol.max_shift + 1, size=2)
    out = np.roll(out, (int(dy), int(dx)), axis=(1, 2))
    if pol.max_rotate_deg > 0:
        k = rng.uniform(-pol.max_rotate_deg, pol.max_rotate_deg) / 90.0
        h = out.shape[1]
        rows = (np.arange(h) - h / 2) * k
        for r in range(h):  # cheap shear-as-rotation for tiny canvases
            out[:, r] = np.roll(out[:, r], int(round(rows[r])), axis=-1)
    if pol.hflip and rng.random() < 0.5:
        out = out[:, :, ::-1]
    out = out + rng.normal(0.0, pol.noise_std, out.shape)
    return np.clip(out, -1.0, 1.0).astype(np.float32)


@dataclass
class CoverageReport:
    before: np.ndarray
    after: np.ndarray
    empty_classes: tuple[int, ...]


def balance_by_augmentation(
    ds: PseudoLabeledDataset, target_per_class: int, policy: AugmentationPolicy
) -> tuple[PseudoLabeledDataset, CoverageReport]:
    """Pad every non-empty class up to target_per_class with jittered copies.

    Empty classes stay empty (they are reported, not fabricated); no oracle
    queries are involved, augmented samples inherit their source's label.
    """
    if ds.source != DatasetSource.PUBLIC_RELABELED:
        raise DatasetError("balancing is defined for relabeled public data")
    before = ds.class_histogram
    if target_per_class < int(before.max()):
        raise DatasetError(
            f"target_per_class={target_per_class} below existing maximum class count {int(before.max())}"
        )
    rng = np.random.default_rng(policy.seed)
    images = ds.images.numpy()
    labels = ds.labels.numpy()
    extra_imgs, extra_labels = [], []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0:
            continue
        for _ in range(target_per_class - len(idx)):
            src = images[rng.choice(idx)]
            extra_imgs.append(_augment_one(src, policy, rng))
            extra_labels.append(c)
    if extra_imgs:
        images = np.concatenate([images, np.stack(extra_imgs)])
        labels = np.concatenate([labels, np.asarray(extra_labels, dtype=np.int64)])
    out = PseudoLabeledDataset(
        images=torch.from_numpy(np.ascontiguousarray(images)),
        labels=torch.from_numpy(np.ascontiguousarray(labels)),
        num_classes=ds.num_classes,
        source=ds.source,
        manifest={**ds.manifest, "balanced_to": target_per_class},
    )
    report = CoverageReport(
        before=before,
        after=out.class_histogram,
        empty_classes=tuple(int(c) for c in np.flatnonzero(before == 0)),
    )
    return out, report


# ---------------------------------------------------------------------------
# persistence

def save_split(split: DatasetSplit, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path,
        private_images=split.private_images.numpy(),
        private_labels=split.private_labels.numpy(),
        public_images=split.public_images.numpy(),
    )
    meta = {
        "num_private_classes": split.num_private_classes,
        "image_shape": list(split.image_shape),
        "pixel_range": list(split.pixel_range),
        "manifest": split.manifest,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def load_split(path: Path) -> DatasetSplit:
    path = Path(path)
    data = np.load(path.with_suffix(".npz"))
    meta = json.loads(path.with_suffix(".json").read_text())
    return DatasetSplit(
        private_images=torch.from_numpy(data["private_images"]),
        private_labels=torch.from_numpy(data["private_labels"]),
        public_images=torch.from_numpy(data["public_images"]),
        num_private_classes=meta["num_private_classes"],
        image_shape=tuple(meta["image_shape"]),
        pixel_range=tuple(meta["pixel_range"]),
        manifest=meta["manifest"],
    )


def save_pseudo_dataset(ds: PseudoLabeledDataset, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, images=ds.images.numpy(), labels=ds.labels.numpy())
    meta = {
        "num_classes": ds.num_classes,
        "source": ds.source.value,
        "class_histogram": ds.class_histogram.tolist(),
        "manifest": ds.manifest,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def load_pseudo_dataset(path: Path) -> PseudoLabeledDataset:
    path = Path(path)
    data = np.load(path.with_suffix(".npz"))
    meta = json.loads(path.with_suffix(".json").read_text())
    return PseudoLabeledDataset(
        images=torch.from_numpy(data["images"]),
        labels=torch.from_numpy(data["labels"]),
        num_classes=meta["num_classes"],
        source=DatasetSource(meta["source"]),
        manifest=meta["manifest"],
    )
