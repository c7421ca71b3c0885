import numpy as np
import pytest
import torch

from conftest import make_stub_target, toy_split
from lokt.oracle import PhaseTag, deploy_target
from lokt.tacgan import GammaTrace, GanTrainConfig, track_gamma, train_acgan, train_tacgan
from lokt.training import TrainingDivergedError


def make_echo(num_classes, input_shape):
    """A conditioning sampler plus an oracle that echoes the sampled labels."""
    state = {"pending": []}

    def sampler_factory(gen, n):
        def sampler(batch_size):
            y = torch.randint(0, n, (batch_size,), generator=gen)
            state["pending"].append(y)
            return y

        return sampler

    def fn(x):
        if state["pending"]:
            # the most recent sampled batch is the one being labeled; the
            # generator step samples labels too but never queries
            y = state["pending"].pop()[: len(x)]
        else:
            y = torch.zeros(len(x), dtype=torch.long)
        logits = torch.full((len(x), num_classes), -10.0)
        logits[torch.arange(len(x)), y] = 10.0
        return logits

    oracle = deploy_target(make_stub_target(fn, num_classes, input_shape)).oracle
    return oracle, sampler_factory


@pytest.fixture(scope="module")
def tiny_gan_setup():
    split = toy_split(n_per_class=10, num_classes=4, size=8, seed=0)
    return split


class TestTrainTacgan:
    def test_echo_oracle_gives_gamma_one(self, tiny_gan_setup):
        split = tiny_gan_setup
        oracle, sampler_factory = make_echo(split.num_private_classes, split.image_shape)
        gen = torch.Generator().manual_seed(42)
        cfg = GanTrainConfig(iterations=3, batch_size=8, d_steps_per_g_step=2, seed=1)
        _, _, trace = train_tacgan(
            split, oracle, cfg, label_sampler=sampler_factory(gen, split.num_private_classes)
        )
        assert np.allclose(trace.values, 1.0)

    def test_ledger_is_iterations_times_dsteps_times_batch(self, tiny_gan_setup):
        split = tiny_gan_setup
        oracle = deploy_target(
            make_stub_target(lambda x: torch.ones(len(x), 4), 4, split.image_shape)
        ).oracle
        cfg = GanTrainConfig(iterations=10, batch_size=16, d_steps_per_g_step=5, seed=2)
        train_tacgan(split, oracle, cfg)
        snap = oracle.ledger_report()
        assert snap.tacgan_training == 10 * 5 * 16 == 800
        assert snap.total == 800

    def test_gamma_trace_matches_logged_pairs(self, tiny_gan_setup):
        split = tiny_gan_setup
        dep = deploy_target(
            make_stub_target(
                lambda x: x.flatten(1)[:, :4] * 3.0, 4, split.image_shape
            )
        )
        cfg = GanTrainConfig(iterations=4, batch_size=8, d_steps_per_g_step=3, seed=3)
        _, _, trace = train_tacgan(split, dep.oracle, cfg, log_label_pairs=True)
        assert len(trace.pairs) == 4
        for it, batches in enumerate(trace.pairs):
            per_batch = [track_gamma(y, yt) for y, yt in batches]
            assert abs(trace.values[it] - np.mean(per_batch)) < 1e-12

    def test_generator_respects_pixel_range(self, tiny_gan_setup):
        split = tiny_gan_setup
        oracle = deploy_target(
            make_stub_target(lambda x: torch.ones(len(x), 4), 4, split.image_shape)
        ).oracle
        cfg = GanTrainConfig(iterations=2, batch_size=8, d_steps_per_g_step=2, seed=4)
        G, _, _ = train_tacgan(split, oracle, cfg)
        z = torch.randn(32, cfg.latent_dim)
        with torch.no_grad():
            x = G(z, torch.randint(0, 4, (32,)))
        assert x.min() >= -1.0 and x.max() <= 1.0

    def test_divergence_aborts_with_iteration_index(self, tiny_gan_setup):
        split = tiny_gan_setup
        oracle = deploy_target(
            make_stub_target(lambda x: torch.ones(len(x), 4), 4, split.image_shape)
        ).oracle
        cfg = GanTrainConfig(iterations=6, batch_size=8, d_steps_per_g_step=1,
                             g_lr=1e18, d_lr=1e18, seed=5)
        with pytest.raises(TrainingDivergedError, match="iteration"):
            train_tacgan(split, oracle, cfg)

    def test_manifests_record_training(self, tiny_gan_setup):
        split = tiny_gan_setup
        oracle = deploy_target(
            make_stub_target(lambda x: torch.ones(len(x), 4), 4, split.image_shape)
        ).oracle
        cfg = GanTrainConfig(iterations=2, batch_size=8, d_steps_per_g_step=1, seed=6)
        G, D, trace = train_tacgan(split, oracle, cfg)
        assert G.manifest["iterations"] == 2
        assert D.manifest["iterations"] == 2
        assert 0.0 <= G.manifest["final_gamma"] <= 1.0


class TestTrainAcgan:
    def test_trains_without_oracle(self, tiny_gan_setup):
        split = tiny_gan_setup
        cfg = GanTrainConfig(iterations=3, batch_size=8, d_steps_per_g_step=2, seed=7,
                             classification_weight=1.0)
        G, D, hist = train_acgan(
            split.private_images, split.private_labels, split.num_private_classes, cfg
        )
        assert D.manifest["iterations"] == 3
        assert len(hist["d_loss"]) == 3

    def test_single_class_reduces_to_unconditional(self, tiny_gan_setup):
        split = tiny_gan_setup
        zeros = torch.zeros(len(split.public_images), dtype=torch.long)
        cfg = GanTrainConfig(iterations=2, batch_size=8, d_steps_per_g_step=1, seed=8,
                             classification_weight=0.0)
        G, D, _ = train_acgan(split.public_images, zeros, 1, cfg)
        with torch.no_grad():
            x = G(torch.randn(4, cfg.latent_dim), torch.zeros(4, dtype=torch.long))
        assert x.shape == (4, *split.image_shape)


class TestGammaTrace:
    def test_validates_range(self):
        with pytest.raises(ValueError):
            GammaTrace(values=np.array([0.5, 1.2]))

    def test_csv_export(self, tmp_path):
        trace = GammaTrace(values=np.array([0.1, 0.9]))
        trace.to_csv(tmp_path / "g.csv")
        lines = (tmp_path / "g.csv").read_text().strip().splitlines()
        assert lines[0] == "iteration,gamma"
        assert lines[1].startswith("0,0.1")


class TestConfigValidation:
    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            GanTrainConfig(iterations=0)
        with pytest.raises(ValueError):
            GanTrainConfig(batch_size=0)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            GanTrainConfig(classification_weight=-0.1)

    def test_unknown_adv_loss_rejected(self):
        with pytest.raises(ValueError):
            GanTrainConfig(adv_loss="wasserstein")
