import math

import numpy as np
import pytest
import torch

from lokt.tacgan import (
    LOG_EPS,
    acgan_dc_loss,
    acgan_g_loss,
    tacgan_dc_loss,
    track_gamma,
)


def t(*vals):
    return torch.tensor(vals, dtype=torch.float64)


class TestHandValues:
    def test_dc_loss_perfect_model_is_zero(self):
        loss = acgan_dc_loss(t(1.0), t(1.0), t(1.0), t(1.0))
        assert abs(float(loss)) < 1e-12

    def test_dc_loss_uniform_case(self):
        # source probs 0.5, class probs 1/10: two source + two class terms
        expected = 2 * math.log(2) + 2 * math.log(10)
        loss = acgan_dc_loss(t(0.5), t(0.5), t(0.1), t(0.1))
        assert abs(float(loss) - expected) < 1e-6

    def test_g_loss_half_fooled(self):
        loss = acgan_g_loss(t(0.5), t(1.0))
        assert abs(float(loss) - math.log(0.5)) < 1e-6

    def test_g_loss_boundary_zero(self):
        assert abs(float(acgan_g_loss(t(1.0), t(1.0)))) < 1e-12

    def test_g_loss_monotone_in_fake_prob(self):
        vals = [float(acgan_g_loss(t(p), t(0.7))) for p in (0.9, 0.5, 0.2, 0.05)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_tacgan_loss_perfect_model_is_zero(self):
        assert abs(float(tacgan_dc_loss(t(1.0), t(1.0), t(1.0)))) < 1e-12

    def test_tacgan_loss_uniform_case_has_single_class_term(self):
        expected = 2 * math.log(2) + math.log(10)
        loss = tacgan_dc_loss(t(0.5), t(0.5), t(0.1))
        assert abs(float(loss) - expected) < 1e-6

    def test_tacgan_zero_class_weight_is_unconditional_gan_loss(self):
        p_f, p_r = t(0.3, 0.8), t(0.6, 0.9)
        got = tacgan_dc_loss(p_f, p_r, t(0.01, 0.02), adv_weight=1.0, cls_weight=0.0)
        uncond = -(torch.log(p_f).mean() + torch.log(p_r).mean())
        assert torch.isclose(got, uncond)

    def test_weighted_forms(self):
        p_f, p_r, p_c = t(0.4), t(0.7), t(0.2)
        got = tacgan_dc_loss(p_f, p_r, p_c, adv_weight=2.0, cls_weight=1.5)
        expected = -2.0 * (math.log(0.4) + math.log(0.7)) - 1.5 * math.log(0.2)
        assert abs(float(got) - expected) < 1e-9
        got_g = acgan_g_loss(p_f, p_c, adv_weight=2.0, cls_weight=1.5)
        assert abs(float(got_g) - (2.0 * math.log(0.4) - 1.5 * math.log(0.2))) < 1e-9


class TestStructuralDifference:
    def test_dc_minus_tacgan_equals_real_class_term(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p_f, p_r, p_cf, p_cr = (t(*rng.uniform(0.05, 1.0, size=4)) for _ in range(4))
            full = acgan_dc_loss(p_f, p_r, p_cf, p_cr)
            reduced = tacgan_dc_loss(p_f, p_r, p_cf)
            real_class_term = -torch.log(p_cr).mean()
            assert abs(float(full - reduced - real_class_term)) < 1e-6


class TestClamping:
    def test_zero_probabilities_stay_finite(self):
        loss = acgan_dc_loss(t(0.0), t(0.0), t(0.0), t(0.0))
        assert torch.isfinite(loss)
        assert abs(float(loss) - 4 * (-math.log(LOG_EPS))) < 1e-6

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            acgan_g_loss(t(1.5), t(0.5))
        with pytest.raises(ValueError):
            acgan_g_loss(t(-0.1), t(0.5))


def central_difference(fn, x, eps=1e-6):
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    gflat = grad.view(-1)
    for i in range(flat.numel()):
        orig = float(flat[i])
        flat[i] = orig + eps
        hi = float(fn())
        flat[i] = orig - eps
        lo = float(fn())
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def _rel_err(a, b):
    denom = max(float(a.norm()), float(b.norm()), 1e-12)
    return float((a - b).norm()) / denom


class TestGradients:
    """Loss gradients w.r.t. logits match central finite differences."""

    @pytest.mark.parametrize("seed", range(20))
    def test_dc_loss_gradient(self, seed):
        rng = np.random.default_rng(seed)
        n, k = 3, 5
        src_f = torch.tensor(rng.normal(size=n), requires_grad=True)
        src_r = torch.tensor(rng.normal(size=n), requires_grad=True)
        cls_f = torch.tensor(rng.normal(size=(n, k)), requires_grad=True)
        cls_r = torch.tensor(rng.normal(size=(n, k)), requires_grad=True)
        y = torch.tensor(rng.integers(0, k, size=n))

        def compute():
            idx = torch.arange(n)
            return acgan_dc_loss(
                1 - torch.sigmoid(src_f),
                torch.sigmoid(src_r),
                torch.softmax(cls_f, dim=1)[idx, y],
                torch.softmax(cls_r, dim=1)[idx, y],
            )

        loss = compute()
        loss.backward()
        for param in (src_f, src_r, cls_f, cls_r):
            with torch.no_grad():
                fd = central_difference(lambda: compute(), param.data)
            assert _rel_err(param.grad, fd) < 1e-4

    @pytest.mark.parametrize("seed", range(10))
    def test_g_and_tacgan_loss_gradients(self, seed):
        rng = np.random.default_rng(100 + seed)
        n, k = 4, 6
        src = torch.tensor(rng.normal(size=n), requires_grad=True)
        cls = torch.tensor(rng.normal(size=(n, k)), requires_grad=True)
        y = torch.tensor(rng.integers(0, k, size=n))
        idx = torch.arange(n)

        def g_loss():
            return acgan_g_loss(
                1 - torch.sigmoid(src), torch.softmax(cls, dim=1)[idx, y], 1.0, 1.5
            )

        g_loss().backward()
        for param in (src, cls):
            with torch.no_grad():
                fd = central_difference(g_loss, param.data)
            assert _rel_err(param.grad, fd) < 1e-4
            param.grad = None

        src_r = torch.tensor(rng.normal(size=n), requires_grad=True)

        def d_loss():
            return tacgan_dc_loss(
                1 - torch.sigmoid(src),
                torch.sigmoid(src_r),
                torch.softmax(cls, dim=1)[idx, y],
                1.0,
                1.5,
            )

        d_loss().backward()
        for param in (src, src_r, cls):
            with torch.no_grad():
                fd = central_difference(d_loss, param.data)
            assert _rel_err(param.grad, fd) < 1e-4


class TestTrackGamma:
    def test_identical_lists(self):
        assert track_gamma([1, 2, 3], [1, 2, 3]) == 1.0

    def test_disjoint_lists(self):
        assert track_gamma([1, 2, 3], [2, 3, 1]) == 0.0

    def test_half_matches(self):
        y = np.arange(128)
        yt = y.copy()
        yt[64:] += 1
        assert track_gamma(y, yt) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            track_gamma([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            track_gamma([1, 2], [1])
