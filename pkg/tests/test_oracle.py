import json
import threading

import numpy as np
import pytest
import torch

from conftest import make_stub_target, toy_split
from lokt.datasets import DatasetSplit
from lokt.oracle import (
    ExperimenterToken,
    HardLabelOracle,
    OracleInputError,
    PhaseTag,
    PrivilegeError,
    QueryLedger,
    attack_phase,
    deploy_target,
    in_attack_phase,
    ledger_frozen,
    train_target,
)
from lokt.training import ClassifierTrainConfig, TrainingDivergedError


def batch(n=4, shape=(1, 16, 16)):
    return torch.zeros((n, *shape))


class TestLedger:
    def test_fresh_counters_zero(self):
        snap = QueryLedger().snapshot()
        assert snap.total == 0
        assert snap.to_dict()["tacgan_training"] == 0

    def test_counting_contract(self):
        target = make_stub_target(lambda x: torch.ones(len(x), 10))
        oracle = deploy_target(target).oracle
        labels = oracle.query(batch(128), PhaseTag.PUBLIC_RELABELING)
        assert len(labels) == 128
        snap = oracle.ledger_report()
        assert snap.public_relabeling == 128
        assert snap.total == 128

    def test_total_equals_phase_sum(self):
        ledger = QueryLedger()
        ledger.record(PhaseTag.TACGAN_TRAINING, 5)
        ledger.record(PhaseTag.SYNTHETIC_LABELING, 7)
        ledger.record(PhaseTag.OTHER, 1)
        snap = ledger.snapshot()
        assert snap.total == snap.tacgan_training + snap.synthetic_labeling + snap.public_relabeling + snap.other

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            QueryLedger().record(PhaseTag.OTHER, -1)

    def test_snapshots_stable_without_queries(self):
        target = make_stub_target(lambda x: torch.ones(len(x), 10))
        oracle = deploy_target(target).oracle
        oracle.query(batch(3), PhaseTag.OTHER)
        assert oracle.ledger_report() == oracle.ledger_report()

    def test_concurrent_increments_exact(self):
        ledger = QueryLedger()

        def work():
            for _ in range(500):
                ledger.record(PhaseTag.TACGAN_TRAINING, 2)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        assert ledger.snapshot().total == 8 * 500 * 2

    def test_json_roundtrip(self, tmp_path):
        ledger = QueryLedger()
        ledger.record(PhaseTag.SYNTHETIC_LABELING, 500)
        ledger.record(PhaseTag.PUBLIC_RELABELING, 30)
        path = tmp_path / "ledger.json"
        ledger.to_json(path)
        loaded = QueryLedger.from_json(path)
        assert loaded.snapshot() == ledger.snapshot()
        data = json.loads(path.read_text())
        assert data["total"] == 530

    def test_ledger_frozen_guard(self):
        target = make_stub_target(lambda x: torch.ones(len(x), 10))
        oracle = deploy_target(target).oracle
        with ledger_frozen(oracle):
            pass
        with pytest.raises(AssertionError):
            with ledger_frozen(oracle):
                oracle.query(batch(1), PhaseTag.OTHER)


class TestHardLabels:
    def test_argmax_peak(self):
        def fn(x):
            logits = torch.zeros(len(x), 10)
            logits[:, 7] = 5.0
            return logits

        oracle = deploy_target(make_stub_target(fn)).oracle
        assert (oracle.query(batch(5), PhaseTag.OTHER) == 7).all()

    def test_tie_breaks_to_lowest_index(self):
        oracle = deploy_target(make_stub_target(lambda x: torch.ones(len(x), 10))).oracle
        assert (oracle.query(batch(6), PhaseTag.OTHER) == 0).all()

        def fn(x):
            logits = torch.zeros(len(x), 10)
            logits[:, 4] = 2.0
            logits[:, 8] = 2.0
            return logits

        oracle2 = deploy_target(make_stub_target(fn)).oracle
        assert (oracle2.query(batch(6), PhaseTag.OTHER) == 4).all()

    def test_identical_argmax_models_indistinguishable(self):
        g = torch.Generator().manual_seed(0)
        base = torch.randn(10, 256, generator=g)

        def model_a(x):
            return x.flatten(1) @ base.T

        def model_b(x):
            return 3.0 * (x.flatten(1) @ base.T) + 1.0  # same argmax, very different probs

        xa = torch.rand(32, 1, 16, 16) * 2 - 1
        oa = deploy_target(make_stub_target(model_a)).oracle
        ob = deploy_target(make_stub_target(model_b)).oracle
        assert np.array_equal(oa.query(xa, PhaseTag.OTHER), ob.query(xa, PhaseTag.OTHER))

    def test_shape_mismatch_rejected_before_counting(self):
        oracle = deploy_target(make_stub_target(lambda x: torch.ones(len(x), 10))).oracle
        with pytest.raises(OracleInputError):
            oracle.query(torch.zeros(4, 1, 8, 8), PhaseTag.OTHER)
        with pytest.raises(OracleInputError):
            oracle.query(torch.full((4, 1, 16, 16), 3.0), PhaseTag.OTHER)
        assert oracle.ledger_report().total == 0


class TestProbe:
    def test_rows_sum_to_one(self):
        dep = deploy_target(make_stub_target(lambda x: torch.randn(len(x), 10)))
        probs = dep.probe(ExperimenterToken()).query(torch.rand(8, 1, 16, 16) * 2 - 1)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-5)

    def test_uniform_logits_give_uniform_rows(self):
        dep = deploy_target(make_stub_target(lambda x: torch.zeros(len(x), 10)))
        probs = dep.probe(ExperimenterToken()).query(batch(3))
        assert np.allclose(probs, 0.1, atol=1e-6)

    def test_probe_argmax_matches_oracle(self):
        g = torch.Generator().manual_seed(1)
        w = torch.randn(10, 256, generator=g)
        dep = deploy_target(make_stub_target(lambda x: x.flatten(1) @ w.T))
        x = torch.rand(64, 1, 16, 16) * 2 - 1
        labels = dep.oracle.query(x, PhaseTag.OTHER)
        probs = dep.probe(ExperimenterToken()).query(x)
        assert np.array_equal(labels, probs.argmax(axis=1))

    def test_probe_does_not_touch_ledger(self):
        dep = deploy_target(make_stub_target(lambda x: torch.zeros(len(x), 10)))
        before = dep.oracle.ledger_report()
        dep.probe(ExperimenterToken()).query(batch(50))
        assert dep.oracle.ledger_report() == before

    def test_probe_requires_token(self):
        dep = deploy_target(make_stub_target(lambda x: torch.zeros(len(x), 10)))
        with pytest.raises(PrivilegeError):
            dep.probe(None)

    def test_probe_blocked_in_attack_phase(self):
        dep = deploy_target(make_stub_target(lambda x: torch.zeros(len(x), 10)))
        probe = dep.probe(ExperimenterToken())
        with attack_phase():
            with pytest.raises(PrivilegeError):
                probe.query(batch(2))
            with pytest.raises(PrivilegeError):
                dep.probe(ExperimenterToken())
        assert not in_attack_phase()
        probe.query(batch(2))  # fine again outside


class TestTrainTarget:
    def test_separable_two_class_reaches_full_accuracy(self):
        split = toy_split(n_per_class=12, num_classes=2, size=8, seed=1)
        cfg = ClassifierTrainConfig(epochs=20, lr=0.05, seed=0, val_fraction=0.0)
        target = train_target(split, "target_cnn", cfg)
        assert target.manifest["train_accuracy"] == 1.0

    def test_above_chance_on_glyphs(self, trained_target):
        assert trained_target.manifest["val_accuracy"] > 0.1

    def test_manifest_records_seed_and_dataset(self, trained_target):
        assert trained_target.manifest["seed"] == 3
        assert trained_target.manifest["architecture_id"] == "target_cnn"
        assert trained_target.manifest["dataset_digest"]

    def test_divergence_aborts(self):
        split = toy_split(n_per_class=8, num_classes=2, size=8, seed=2)
        huge = torch.full_like(split.private_images, 1e30)
        bad = DatasetSplit(
            private_images=huge,
            private_labels=split.private_labels,
            public_images=split.public_images,
            num_private_classes=2,
            image_shape=split.image_shape,
            pixel_range=(-1e31, 1e31),
        )
        with pytest.raises(TrainingDivergedError):
            train_target(bad, "target_cnn", ClassifierTrainConfig(epochs=3, seed=0))

    def test_unknown_architecture(self):
        split = toy_split()
        with pytest.raises(KeyError):
            train_target(split, "no_such_net", ClassifierTrainConfig(epochs=1))
