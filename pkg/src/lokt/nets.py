"""Network architectures for the desk-scale 16x16 single-channel images.

Classifiers are looked up by architecture id so configs stay declarative;
every classifier exposes `features(x)` returning its penultimate-layer
activations. The GAN side is a scaled-down spectrally normalised residual
pair: a generator with class-conditional batch normalisation and a
two-head discriminator (real/fake source head plus an N-way classifier
head on a shared trunk).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.parametrizations import spectral_norm


# ---------------------------------------------------------------------------
# classifiers

class SmallConvNet(nn.Module):
    def __init__(self, num_classes, image_shape=(1, 16, 16)):
        super().__init__()
        in_ch, h, w = image_shape
        self.conv1 = nn.Conv2d(in_ch, 32, 3, padding=1)
        self.conv2 = nn.Conv2d(32, 64, 3, padding=1)
        self.fc1 = nn.Linear(64 * (h // 4) * (w // 4), 128)
        self.fc2 = nn.Linear(128, num_classes)

    def features(self, x):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        return F.relu(self.fc1(x.flatten(1)))

    def forward(self, x):
        return self.fc2(self.features(x))


class WideConvNet(nn.Module):
    """Evaluation-side net; deliberately a different topology from the target's."""

    def __init__(self, num_classes, image_shape=(1, 16, 16)):
        super().__init__()
        self.conv1 = nn.Conv2d(image_shape[0], 24, 5, padding=2)
        self.conv2 = nn.Conv2d(24, 48, 5, padding=2)
        self.conv3 = nn.Conv2d(48, 96, 3, padding=1)
        self.fc1 = nn.Linear(96 * 2 * 2, 96)
        self.fc2 = nn.Linear(96, num_classes)

    def features(self, x):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = F.adaptive_avg_pool2d(F.relu(self.conv3(x)), 2)
        return F.relu(self.fc1(x.flatten(1)))

    def forward(self, x):
        return self.fc2(self.features(x))


class _DenseLayer(nn.Module):
    def __init__(self, in_ch, growth):
        super().__init__()
        self.bn = nn.BatchNorm2d(in_ch)
        self.conv = nn.Conv2d(in_ch, growth, 3, padding=1, bias=False)

    def forward(self, x):
        return torch.cat([x, self.conv(F.relu(self.bn(x)))], dim=1)


class MiniDenseNet(nn.Module):
    """Dense-connectivity classifier; depth/growth picked per variant."""

    def __init__(self, num_classes, block_layers=(2, 2), growth=8, image_shape=(1, 16, 16), stem=16):
        super().__init__()
        self.stem = nn.Conv2d(image_shape[0], stem, 3, padding=1, bias=False)
        ch = stem
        stages = []
        for b, layers in enumerate(block_layers):
            for _ in range(layers):
                stages.append(_DenseLayer(ch, growth))
                ch += growth
            if b != len(block_layers) - 1:
                stages.append(nn.Sequential(
                    nn.BatchNorm2d(ch), nn.ReLU(),
                    nn.Conv2d(ch, ch // 2, 1, bias=False), nn.AvgPool2d(2),
                ))
                ch = ch // 2
        self.blocks = nn.Sequential(*stages)
        self.bn = nn.BatchNorm2d(ch)
        self.fc = nn.Linear(ch, num_classes)
        self.feature_dim = ch

    def features(self, x):
        x = self.blocks(self.stem(x))
        x = F.relu(self.bn(x))
        return F.adaptive_avg_pool2d(x, 1).flatten(1)

    def forward(self, x):
        return self.fc(self.features(x))


class DiscTrunkClassifier(nn.Module):
    """The discriminator trunk + classifier head used as a plain classifier."""

    def __init__(self, num_classes, image_shape=(1, 16, 16)):
        super().__init__()
        self.disc = Discriminator(num_classes, in_ch=image_shape[0])

    def features(self, x):
        return self.disc.features(x)

    def forward(self, x):
        return self.disc.class_logits(self.disc.features(x))


_CLASSIFIERS = {
    "target_cnn": lambda n, shape: SmallConvNet(n, shape),
    "eval_cnn": lambda n, shape: WideConvNet(n, shape),
    "cd_head": lambda n, shape: DiscTrunkClassifier(n, shape),
    "dense_s": lambda n, shape: MiniDenseNet(n, (2, 2), growth=8, image_shape=shape),
    "dense_m": lambda n, shape: MiniDenseNet(n, (3, 3), growth=10, image_shape=shape),
    "dense_l": lambda n, shape: MiniDenseNet(n, (4, 4), growth=12, image_shape=shape),
}


def registered_architectures() -> list[str]:
    return sorted(_CLASSIFIERS)


def build_classifier(architecture_id: str, num_classes: int, image_shape) -> nn.Module:
    if architecture_id not in _CLASSIFIERS:
        raise KeyError(
            f"unknown architecture_id {architecture_id!r}; registered: {registered_architectures()}"
        )
    return _CLASSIFIERS[architecture_id](num_classes, tuple(image_shape))


# ---------------------------------------------------------------------------
# generator

class CondBatchNorm2d(nn.Module):
    """Batch norm whose gain/bias are looked up from the class label."""

    def __init__(self, num_features, num_classes):
        super().__init__()
        self.bn = nn.BatchNorm2d(num_features, affine=False)
        self.gain = nn.Embedding(num_classes, num_features)
        self.bias = nn.Embedding(num_classes, num_features)
        nn.init.ones_(self.gain.weight)
        nn.init.zeros_(self.bias.weight)

    def forward(self, x, y):
        out = self.bn(x)
        g = self.gain(y).unsqueeze(-1).unsqueeze(-1)
        b = self.bias(y).unsqueeze(-1).unsqueeze(-1)
        return g * out + b


class GenBlock(nn.Module):
    def __init__(self, in_ch, out_ch, num_classes):
        super().__init__()
        self.cbn1 = CondBatchNorm2d(in_ch, num_classes)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.cbn2 = CondBatchNorm2d(out_ch, num_classes)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1)

    def forward(self, x, y):
        h = F.interpolate(F.relu(self.cbn1(x, y)), scale_factor=2)
        h = self.conv1(h)
        h = self.conv2(F.relu(self.cbn2(h, y)))
        return h + self.skip(F.interpolate(x, scale_factor=2))


class Generator(nn.Module):
    """Class-conditional image generator; outputs tanh images in [-1, 1]."""

    def __init__(self, latent_dim=64, num_classes=10, image_shape=(1, 16, 16), base_ch=64):
        super().__init__()
        self.latent_dim = latent_dim
        self.num_classes = num_classes
        self.image_shape = tuple(image_shape)
        size = image_shape[1]
        if size < 8 or size & (size - 1):
            raise ValueError("generator supports power-of-two sizes >= 8")
        n_up = (size // 4).bit_length() - 1
        chans = [base_ch]
        for i in range(n_up):
            chans.append(max(base_ch * (3 - i) // 4, 16))
        self.fc = nn.Linear(latent_dim, chans[0] * 4 * 4)
        self.blocks = nn.ModuleList(
            GenBlock(chans[i], chans[i + 1], num_classes) for i in range(n_up)
        )
        self.bn_out = nn.BatchNorm2d(chans[-1])
        self.conv_out = nn.Conv2d(chans[-1], image_shape[0], 3, padding=1)
        self._ch0 = chans[0]
        self.manifest: dict = {"iterations": 0}

    def forward(self, z, y):
        h = self.fc(z).view(z.shape[0], self._ch0, 4, 4)
        for block in self.blocks:
            h = block(h, y)
        return torch.tanh(self.conv_out(F.relu(self.bn_out(h))))

    def sample_latents(self, n, generator=None):
        return torch.randn(n, self.latent_dim, generator=generator)


class ClassAgnosticGenerator(nn.Module):
    """View of a single-class generator that ignores the conditioning label."""

    def __init__(self, inner: Generator):
        super().__init__()
        self.inner = inner
        self.latent_dim = inner.latent_dim
        self.num_classes = inner.num_classes
        self.image_shape = inner.image_shape
        self.manifest = inner.manifest

    def forward(self, z, y):
        return self.inner(z, torch.zeros_like(y))

    def sample_latents(self, n, generator=None):
        return self.inner.sample_latents(n, generator)


# ---------------------------------------------------------------------------
# discriminator

def _sn_conv(in_ch, out_ch, k, padding=0):
    return spectral_norm(nn.Conv2d(in_ch, out_ch, k, padding=padding))


class DiscBlockIn(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv1 = _sn_conv(in_ch, out_ch, 3, padding=1)
        self.conv2 = _sn_conv(out_ch, out_ch, 3, padding=1)
        self.skip = _sn_conv(in_ch, out_ch, 1)

    def forward(self, x):
        h = self.conv2(F.avg_pool2d(F.relu(self.conv1(x)), 2))
        return h + self.skip(F.avg_pool2d(x, 2))


class DiscBlock(nn.Module):
    def __init__(self, in_ch, out_ch, down=True):
        super().__init__()
        self.down = down
        self.conv1 = _sn_conv(in_ch, out_ch, 3, padding=1)
        self.conv2 = _sn_conv(out_ch, out_ch, 3, padding=1)
        self.skip = _sn_conv(in_ch, out_ch, 1) if (in_ch != out_ch or down) else None

    def forward(self, x):
        h = self.conv2(F.relu(self.conv1(F.relu(x))))
        s = x if self.skip is None else self.skip(x)
        if self.down:
            h, s = F.avg_pool2d(h, 2), F.avg_pool2d(s, 2)
        return h + s


class Discriminator(nn.Module):
    """Shared trunk with a real/fake source head and an N-way class head."""

    def __init__(self, num_classes=10, in_ch=1, base_ch=48):
        super().__init__()
        self.num_classes = num_classes
        self.block1 = DiscBlockIn(in_ch, base_ch)
        self.block2 = DiscBlock(base_ch, base_ch * 3 // 2, down=True)
        self.block3 = DiscBlock(base_ch * 3 // 2, base_ch * 3 // 2, down=False)
        feat = base_ch * 3 // 2
        self.src_head = spectral_norm(nn.Linear(feat, 1))
        self.cls_head = spectral_norm(nn.Linear(feat, num_classes))
        self.feature_dim = feat
        self.manifest: dict = {"iterations": 0}

    def features(self, x):
        h = self.block3(self.block2(self.block1(x)))
        return F.relu(h).sum(dim=(2, 3))

    def class_logits(self, feats):
        return self.cls_head(feats)

    def forward(self, x):
        feats = self.features(x)
        return self.src_head(feats).squeeze(1), self.cls_head(feats)

    def source_probs(self, src_logits):
        """P(Real|x), P(Fake|x); the two sum to one by construction."""
        p_real = torch.sigmoid(src_logits)
        return p_real, 1.0 - p_real
