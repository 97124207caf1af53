import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ugac import tensor as T
from ugac.errors import DimensionError
from ugac.ggd import log_gamma
from ugac.losses import (
    CycleSide,
    LossWeights,
    adv_discriminator_loss,
    adv_generator_loss,
    loss_alpha_beta,
    loss_cyc_l1,
    loss_ucyc,
    total_generator_loss,
)
from ugac.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def _side(rng, shape=(2, 1, 4, 4), alpha=None, beta=None):
    recon = rng.random(shape)
    target = rng.random(shape)
    a = rng.uniform(0.3, 2.0, shape) if alpha is None else np.full(shape, alpha)
    b = rng.uniform(0.5, 3.0, shape) if beta is None else np.full(shape, beta)
    return CycleSide(*(Tensor(v, requires_grad=True) for v in (recon, a, b, target)))


def _scalar_oracle(recon, alpha, beta, target):
    total = 0.0
    for r, t, a, b in zip(recon.ravel(), target.ravel(), alpha.ravel(), beta.ravel()):
        total += (abs(r - t) / a) ** b - math.log(b / a) + math.lgamma(1.0 / b)
    return total / recon.size


def test_unit_maps_reduce_to_l1(rng):
    side = _side(rng, alpha=1.0, beta=1.0)
    l1 = np.abs(side.recon.data - side.target.data).mean()
    assert abs(loss_alpha_beta(*side).item() - l1) < 1e-9


def test_zero_residual_unit_maps_is_zero():
    x = Tensor(np.full((1, 1, 3, 3), 0.4))
    ones = Tensor(np.ones((1, 1, 3, 3)))
    assert abs(loss_alpha_beta(x, ones, ones, x).item()) < 1e-9


def test_matches_scalar_loop_oracle(rng):
    recon, target = rng.random((4, 4)), rng.random((4, 4))
    a, b = np.full((4, 4), 0.9), np.full((4, 4), 1.7)
    got = loss_alpha_beta(recon, a, b, target).item()
    assert got == pytest.approx(_scalar_oracle(recon, a, b, target), abs=1e-11)


def test_random_maps_match_oracle(rng):
    side = _side(rng)
    want = _scalar_oracle(*(t.data for t in side))
    assert loss_alpha_beta(*side).item() == pytest.approx(want, abs=1e-11)


def test_shape_mismatch_rejected():
    with pytest.raises(DimensionError):
        loss_alpha_beta(np.zeros((2, 2)), np.ones((2, 2)), np.ones((2, 3)), np.zeros((2, 2)))


@pytest.mark.parametrize("wrt", [0, 1, 2, 3])
def test_gradient_matches_finite_differences(rng, wrt):
    side = _side(rng, shape=(1, 1, 3, 3))
    # keep every residual away from the |r| kink
    side.recon.data = side.target.data + np.where(rng.random((1, 1, 3, 3)) < 0.5, -1, 1) * rng.uniform(0.1, 0.5, (1, 1, 3, 3))
    params = list(side)
    loss_alpha_beta(*params).backward()
    analytic = params[wrt].grad
    numeric = T.numerical_grad(lambda: loss_alpha_beta(*params), params[wrt])
    assert T.relative_error(analytic, numeric) < 1e-4


def test_monotone_in_residual_at_unit_maps(rng):
    base = rng.random((3, 3))
    target = np.zeros((3, 3))
    ones = np.ones((3, 3))
    before = loss_alpha_beta(base, ones, ones, target).item()
    bumped = base.copy()
    bumped[1, 2] += 0.05
    assert loss_alpha_beta(bumped, ones, ones, target).item() > before


def test_ucyc_is_sum_and_symmetric(rng):
    a, b = _side(rng), _side(rng)
    total = loss_ucyc(a, b).item()
    assert total == loss_alpha_beta(*a).item() + loss_alpha_beta(*b).item()
    assert loss_ucyc(b, a).item() == pytest.approx(total, abs=1e-15)


def test_ucyc_zero_case_and_additivity(rng):
    x = Tensor(rng.random((1, 1, 4, 4)))
    ones = Tensor(np.ones((1, 1, 4, 4)))
    zero_side = CycleSide(x, ones, ones, x)
    assert abs(loss_ucyc(zero_side, zero_side).item()) < 1e-9
    recon, target = rng.random((1, 1, 4, 4)), rng.random((1, 1, 4, 4))
    side = CycleSide(Tensor(recon), Tensor(np.full(recon.shape, 0.9)), Tensor(np.full(recon.shape, 1.7)), Tensor(target))
    assert loss_ucyc(side, zero_side).item() == pytest.approx(loss_alpha_beta(*side).item(), abs=1e-9)


def test_l1_cycle_examples(rng):
    a, b = rng.random((2, 3)), rng.random((2, 3))
    assert loss_cyc_l1(a, b, a, b).item() == 0.0
    assert loss_cyc_l1(a + 1.0, b, a, b).item() == pytest.approx(1.0, abs=1e-12)
    ra, rb = rng.random((2, 3)), rng.random((2, 3))
    ones = np.ones((2, 3))
    ucyc = loss_ucyc(CycleSide(Tensor(ra), Tensor(ones), Tensor(ones), Tensor(a)),
                     CycleSide(Tensor(rb), Tensor(ones), Tensor(ones), Tensor(b)))
    assert abs(ucyc.item() - loss_cyc_l1(ra, rb, a, b).item()) < 1e-9


def test_adversarial_generator_examples(rng):
    assert adv_generator_loss(np.ones((2, 1, 6, 6)), np.ones((2, 1, 6, 6))).item() == 0.0
    assert adv_generator_loss(np.zeros((2, 1, 6, 6)), np.zeros((2, 1, 6, 6))).item() == pytest.approx(2.0)
    s1, s2 = rng.normal(size=(2, 1, 6, 6)), rng.normal(size=(2, 1, 6, 6))
    want = sum((v - 1.0) ** 2 for v in s1.ravel()) / s1.size + sum((v - 1.0) ** 2 for v in s2.ravel()) / s2.size
    assert adv_generator_loss(s1, s2).item() == pytest.approx(want, abs=1e-12)


def test_adversarial_discriminator_examples(rng):
    one, zero = np.ones((1, 1, 5, 5)), np.zeros((1, 1, 5, 5))
    assert adv_discriminator_loss(one, zero, one, zero).item() == 0.0
    half = np.full((1, 1, 5, 5), 0.5)
    assert adv_discriminator_loss(half, half, half, half).item() == pytest.approx(1.0)
    maps = [rng.normal(size=(1, 1, 5, 5)) for _ in range(4)]
    targets = [1.0, 0.0, 1.0, 0.0]
    want = sum(float(np.mean([(v - t) ** 2 for v in m.ravel()])) for m, t in zip(maps, targets))
    assert adv_discriminator_loss(*maps).item() == pytest.approx(want, abs=1e-12)


def test_adversarial_losses_ignore_spatial_order(rng):
    s = rng.normal(size=(1, 1, 6, 6))
    perm = rng.permutation(36)
    shuffled = s.reshape(-1)[perm].reshape(s.shape)
    assert adv_generator_loss(s, s).item() == pytest.approx(adv_generator_loss(shuffled, shuffled).item(), abs=1e-14)


def test_total_generator_loss():
    w = LossWeights()
    assert (w.lambda1, w.lambda2) == (10.0, 2.0)
    assert total_generator_loss(1.0, 1.0, w) == 12.0
    assert total_generator_loss(0.0, 0.0, w) == 0.0
    t = total_generator_loss(Tensor(1.0, requires_grad=True), Tensor(1.0), w)
    assert t.item() == 12.0


@pytest.mark.parametrize("l1,l2", [(0.0, 1.0), (1.0, -1.0)])
def test_weights_must_be_positive(l1, l2):
    with pytest.raises(ValueError):
        LossWeights(l1, l2)


@settings(max_examples=50, deadline=None)
@given(r=st.floats(-3, 3), a=st.floats(0.05, 5), b=st.floats(0.2, 8))
def test_single_pixel_matches_closed_form(r, a, b):
    got = loss_alpha_beta(np.array([r]), np.array([a]), np.array([b]), np.array([0.0])).item()
    want = (abs(r) / a) ** b - math.log(b / a) + log_gamma(1.0 / b)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)
