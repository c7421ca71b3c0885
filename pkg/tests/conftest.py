import numpy as np
import pytest
import torch
import torch.nn as nn

from lokt.datasets import DatasetSplit, register_dataset
from lokt.glyphs import DIGIT_GLYPHS, LETTER_GLYPHS, render_corpus
from lokt.oracle import HardLabelOracle, TargetModel, deploy_target

# small corpora so unit tests stay fast
register_dataset("tiny_digits", lambda seed: render_corpus(DIGIT_GLYPHS, 24, 16, seed))
register_dataset("tiny_letters", lambda seed: render_corpus(LETTER_GLYPHS, 20, 16, seed))


class FnNet(nn.Module):
    """Wraps a plain logits function as a module (for stub targets)."""

    def __init__(self, fn, num_classes):
        super().__init__()
        self.fn = fn
        self.num_classes = num_classes

    def forward(self, x):
        return self.fn(x)


def make_stub_target(fn, num_classes=10, input_shape=(1, 16, 16)) -> TargetModel:
    return TargetModel(
        net=FnNet(fn, num_classes),
        architecture_id="stub",
        num_classes=num_classes,
        input_shape=input_shape,
        manifest={"stub": True},
    )


def constant_oracle(cls: int, num_classes: int = 10, input_shape=(1, 16, 16)) -> HardLabelOracle:
    def fn(x):
        logits = torch.zeros(len(x), num_classes)
        logits[:, cls] = 10.0
        return logits

    return deploy_target(make_stub_target(fn, num_classes, input_shape)).oracle


def linear_pixel_oracle(seed: int = 0, num_classes: int = 10, input_shape=(1, 16, 16)):
    """Deterministic non-degenerate stub: argmax of a fixed random linear map."""
    g = torch.Generator().manual_seed(seed)
    w = torch.randn(num_classes, int(np.prod(input_shape)), generator=g)

    def fn(x):
        return x.flatten(1) @ w.T

    return deploy_target(make_stub_target(fn, num_classes, input_shape))


def toy_split(n_per_class=6, num_classes=4, size=8, seed=0) -> DatasetSplit:
    """Synthetic separable split: class = bright quadrant pattern."""
    rng = np.random.default_rng(seed)
    n = n_per_class * num_classes
    images = rng.normal(0, 0.05, size=(n + n, 1, size, size)).astype(np.float32)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    half = size // 2
    boxes = [(0, 0), (0, half), (half, 0), (half, half)]
    for i, c in enumerate(labels):
        r, co = boxes[c % 4]
        images[i, 0, r : r + half, co : co + half] += 0.8 * (1 + (c // 4))
    images = np.clip(images, -1, 1)
    return DatasetSplit(
        private_images=torch.from_numpy(images[:n]),
        private_labels=torch.from_numpy(labels),
        public_images=torch.from_numpy(images[n:]),
        num_private_classes=num_classes,
        image_shape=(1, size, size),
    )


@pytest.fixture(scope="session")
def small_split():
    from lokt.datasets import SplitPolicy, load_and_split

    policy = SplitPolicy(private_per_class=24, public_source="companion:tiny_letters",
                         public_size=280, seed=7)
    return load_and_split("tiny_digits", policy)


@pytest.fixture(scope="session")
def trained_target(small_split):
    from lokt.oracle import train_target
    from lokt.training import ClassifierTrainConfig

    return train_target(small_split, "target_cnn", ClassifierTrainConfig(epochs=8, lr=0.05, seed=3))
