import numpy as np
import pytest
import torch

from conftest import linear_pixel_oracle, make_stub_target
from lokt.analysis import (
    LikelihoodRecord,
    conditional_pt_histogram,
    easy_hard_split,
    records_to_csv,
    track_ps_dynamics,
)
from lokt.oracle import ExperimenterToken, deploy_target


class ProbeAsSurrogate:
    """Reuses the target probe as the surrogate scorer (P_S == P_T)."""

    def __init__(self, probe):
        self.probe = probe

    def predict_proba(self, x):
        return self.probe.query(x)


class RandomSurrogate:
    def __init__(self, seed, num_classes=10):
        g = torch.Generator().manual_seed(seed)
        self.w = torch.randn(num_classes, 256, generator=g) * 3.0

    def predict_proba(self, x):
        return torch.softmax(x.flatten(1) @ self.w.T, dim=1).numpy()


@pytest.fixture(scope="module")
def probe_setup():
    dep = linear_pixel_oracle(seed=3)
    probe = dep.probe(ExperimenterToken())
    g = torch.Generator().manual_seed(0)
    images = torch.rand(4000, 1, 16, 16, generator=g) * 2 - 1
    labels = probe.hard_labels(images)
    return probe, images, labels


class TestConditionalHistogram:
    def test_surrogate_equal_to_target_concentrates_high(self, probe_setup):
        probe, images, labels = probe_setup
        hist = conditional_pt_histogram(images, labels, ProbeAsSurrogate(probe), probe, 0.7)
        if hist.n_conditioned:
            assert hist.median_conditional > 0.7
            # every conditioned sample has P_T == P_S > threshold
            assert hist.counts[: 7].sum() == 0

    def test_counts_sum_to_conditioning_set_size(self, probe_setup):
        probe, images, labels = probe_setup
        hist = conditional_pt_histogram(images, labels, RandomSurrogate(1), probe, 0.5)
        assert hist.counts.sum() == hist.n_conditioned

    def test_independent_surrogate_mirrors_unconditional(self, probe_setup):
        probe, images, labels = probe_setup
        hist = conditional_pt_histogram(images, labels, RandomSurrogate(2), probe, 0.5)
        p_t = probe.query(images)[np.arange(len(labels)), labels]
        uncond, _ = np.histogram(p_t, bins=hist.bin_edges)
        got = hist.counts / max(hist.counts.sum(), 1)
        ref = uncond / uncond.sum()
        assert np.abs(got - ref).sum() < 0.2
        assert abs(hist.median_conditional - hist.unconditional_median) < 0.25

    def test_empty_conditioning_reported_not_error(self, probe_setup):
        probe, images, labels = probe_setup

        class Never:
            def predict_proba(self, x):
                return np.full((len(x), 10), 0.1)

        hist = conditional_pt_histogram(images[:64], labels[:64], Never(), probe, 0.9)
        assert hist.empty
        assert hist.n_conditioned == 0

    def test_threshold_validated(self, probe_setup):
        probe, images, labels = probe_setup
        with pytest.raises(ValueError):
            conditional_pt_histogram(images, labels, RandomSurrogate(0), probe, 1.5)


class TestEasyHardSplit:
    def test_line_of_distances(self):
        # symmetric pairs at distances 1..10 around an exact origin centroid;
        # rho=0.7 keeps the closest 14 of 20, so distances 8..10 are hard
        pts = np.array([[d, 0.0] for d in range(1, 11)], dtype=float)
        pts = np.concatenate([pts, -pts])
        labels = np.zeros(len(pts), dtype=int)
        split = easy_hard_split(pts, labels, rho=0.7)
        assert split.easy_mask.sum() == int(np.ceil(0.7 * len(pts)))
        hard = {tuple(p) for p in pts[~split.easy_mask]}
        assert hard == {(d, 0.0) for d in (8.0, 9.0, 10.0)} | {(-d, 0.0) for d in (8.0, 9.0, 10.0)}

    def test_ties_resolve_by_sample_index(self):
        emb = np.ones((6, 3))
        labels = np.zeros(6, dtype=int)
        split = easy_hard_split(emb, labels, rho=0.5)
        assert np.array_equal(split.easy_indices(), [0, 1, 2])

    def test_matches_brute_force_sort(self):
        rng = np.random.default_rng(4)
        emb = rng.normal(size=(40, 8))
        labels = rng.integers(0, 3, size=40)
        rho = 0.7
        split = easy_hard_split(emb, labels, rho=rho)
        for c in range(3):
            idx = np.flatnonzero(labels == c)
            cent = emb[idx].mean(axis=0)
            d = np.linalg.norm(emb[idx] - cent, axis=1)
            order = sorted(range(len(idx)), key=lambda i: (d[i], i))
            want_easy = set(idx[order[: int(np.ceil(rho * len(idx)))]].tolist())
            got_easy = set(idx[split.easy_mask[idx]].tolist())
            assert want_easy == got_easy

    def test_exact_count_per_class(self):
        rng = np.random.default_rng(5)
        emb = rng.normal(size=(23, 4))
        labels = np.array([0] * 11 + [1] * 12)
        split = easy_hard_split(emb, labels, rho=0.7)
        assert split.easy_mask[labels == 0].sum() == int(np.ceil(0.7 * 11))
        assert split.easy_mask[labels == 1].sum() == int(np.ceil(0.7 * 12))

    def test_singleton_class_rejected(self):
        with pytest.raises(ValueError, match="fewer than two"):
            easy_hard_split(np.zeros((3, 2)), np.array([0, 0, 1]), rho=0.5)

    def test_rho_validated(self):
        with pytest.raises(ValueError):
            easy_hard_split(np.zeros((4, 2)), np.zeros(4, dtype=int), rho=1.0)


class TestDynamics:
    def _checkpointed_models(self):
        return [(1, RandomSurrogate(10)), (5, RandomSurrogate(10))]

    def test_identical_checkpoints_identical_ps(self, probe_setup):
        probe, images, labels = probe_setup
        records = track_ps_dynamics(images[:50], labels[:50], self._checkpointed_models(), probe)
        by_epoch = {}
        for r in records:
            by_epoch.setdefault(r.epoch, []).append(r.p_s)
        assert np.allclose(by_epoch[1], by_epoch[5])

    def test_pt_constant_across_checkpoints(self, probe_setup):
        probe, images, labels = probe_setup
        records = track_ps_dynamics(images[:50], labels[:50], self._checkpointed_models(), probe)
        by_sample = {}
        for r in records:
            by_sample.setdefault(r.sample_id, set()).add(r.p_t)
        assert all(len(v) == 1 for v in by_sample.values())

    def test_needs_two_distinct_epochs(self, probe_setup):
        probe, images, labels = probe_setup
        with pytest.raises(ValueError):
            track_ps_dynamics(images[:10], labels[:10], [(3, RandomSurrogate(0))], probe)

    def test_analysis_never_touches_ledger(self, probe_setup):
        probe, images, labels = probe_setup
        dep = linear_pixel_oracle(seed=11)
        before = dep.oracle.ledger_report()
        p = dep.probe(ExperimenterToken())
        conditional_pt_histogram(images[:100], labels[:100], RandomSurrogate(3), p, 0.5)
        track_ps_dynamics(images[:20], labels[:20], self._checkpointed_models(), p)
        assert dep.oracle.ledger_report() == before

    def test_record_validation_and_csv(self, tmp_path):
        with pytest.raises(ValueError):
            LikelihoodRecord(0, 1, p_s=1.2, p_t=0.5, epoch=1)
        records = [LikelihoodRecord(0, 1, 0.5, 0.6, 2)]
        records_to_csv(records, tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().startswith("sample_id,label,epoch")
