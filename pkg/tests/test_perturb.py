import numpy as np
import pytest

from ugac import perturb as P
from ugac.errors import DomainError

N_PIXELS = 1_000_000


@pytest.fixture
def big():
    return np.random.default_rng(11).random((1, 1000, 1000))


def test_schedules():
    assert P.SCHEDULES["gaussian"] == (0.0, 0.1, 0.2, 0.3)
    assert P.SCHEDULES["uniform"] == (0.0, 0.2, 0.4, 0.6)
    assert P.SCHEDULES["impulse"] == (0.0, 0.15, 0.3, 0.45)
    specs = P.level_schedule("uniform")
    assert [s.level for s in specs] == list(P.LEVELS)
    assert P.spec_for("impulse", "NL2").parameter == 0.3


@pytest.mark.parametrize("family", P.FAMILIES)
def test_level_zero_is_bitwise_identity(big, family):
    out = P.spec_for(family, "NL0").apply(big, np.random.default_rng(0))
    assert out.tobytes() == big.tobytes()
    assert out is not big


@pytest.mark.parametrize("sigma", [0.1, 0.2, 0.3])
def test_gaussian_moments(big, sigma):
    noise = P.perturb_gaussian(big, sigma, np.random.default_rng(1)) - big
    assert noise.size == N_PIXELS
    assert abs(noise.mean()) < 0.01 * sigma
    assert noise.std() == pytest.approx(sigma, rel=0.01)


@pytest.mark.parametrize("kappa", [0.2, 0.4, 0.6])
def test_uniform_moments(big, kappa):
    noise = P.perturb_uniform(big, kappa, np.random.default_rng(2)) - big
    assert noise.mean() == pytest.approx(kappa / 2, rel=0.01)
    assert noise.min() >= 0.0 and noise.max() <= kappa


@pytest.mark.parametrize("p", [0.15, 0.3, 0.45])
def test_impulse_replacement_fraction(big, p):
    out = P.perturb_impulse(big, p, np.random.default_rng(3))
    assert (out != big).mean() == pytest.approx(p, rel=0.01)


def test_impulse_mask_shared_across_channels():
    x = np.full((3, 200, 200), 0.5)
    out = P.perturb_impulse(x, 0.3, np.random.default_rng(4))
    changed = out != x
    assert (changed.any(axis=0) == changed.all(axis=0)).all()


def test_outputs_not_clipped():
    x = np.ones((1, 50, 50))
    assert P.perturb_uniform(x, 0.6, np.random.default_rng(0)).max() > 1.0


@pytest.mark.parametrize("call", [
    lambda x, r: P.perturb_gaussian(x, -0.1, r),
    lambda x, r: P.perturb_uniform(x, -0.1, r),
    lambda x, r: P.perturb_impulse(x, 1.0, r),
    lambda x, r: P.perturb_impulse(x[0, 0], 0.1, r),
])
def test_invalid_parameters(call):
    with pytest.raises(DomainError):
        call(np.zeros((1, 1, 4, 4)), np.random.default_rng(0))


def test_unknown_names():
    with pytest.raises(ValueError):
        P.level_schedule("speckle")
    with pytest.raises(ValueError):
        P.spec_for("gaussian", "NL4")
    with pytest.raises(ValueError):
        P.perturb(np.zeros(3), "speckle", 0.1, np.random.default_rng(0))


def test_seeded_determinism():
    x = np.random.default_rng(0).random((2, 1, 8, 8))
    for family in P.FAMILIES:
        a = P.perturb(x, family, 0.3, np.random.default_rng(5))
        b = P.perturb(x, family, 0.3, np.random.default_rng(5))
        assert np.array_equal(a, b)
