
import warnings

import numpy as np
import pytest

from gol_longtail.common import InputError
from gol_longtail.kernels import CLIP_LO, CLIP_HI
from gol_longtail.losses import gumbel_loss, sigmoid_bce, softmax_ce, weighted_loss, DropState, \
    rare_indicator, eql_weights, droploss_weights, gol_loss, eql_gumbel_loss, positive_gradient_stats, \
    gradient_stats_from_sums
# noinspection PyUnresolvedReferences
from gol_longtail.tests.fixtures import freq_table


def test_gumbel_loss_values():
    out = gumbel_loss([0.], [1])
    assert out.total == pytest.approx(1.)
    assert out.grad[0] == pytest.approx(-1.)
    out = gumbel_loss([2.], [1])
    assert out.total == pytest.approx(np.exp(-2.))
    assert out.grad[0] == pytest.approx(-0.13534, abs=1e-5)
    out = gumbel_loss([0.], [0])
    assert out.total == pytest.approx(0.45868, abs=1e-5)
    assert out.grad[0] == pytest.approx(1 / (np.e - 1))


def test_gumbel_loss_is_cross_entropy_of_the_cdf():
    q = np.linspace(-4, 10, 15)
    y = (np.arange(15) % 2).astype(float)
    p = np.exp(-np.exp(-q))
    expected = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    np.testing.assert_allclose(gumbel_loss(q, y).per_class, expected, rtol=1e-9, atol=1e-15)


def test_gumbel_gradient_asymmetry():
    assert abs(gumbel_loss([CLIP_LO], [1]).grad[0]) >= 54
    grid = np.array([-4., -2., 0., 1., 3., 6., 10.])
    neg = gumbel_loss(grid, np.zeros(7)).grad
    assert np.all((neg > 0) & (neg < 1))

    q = np.arange(-400, 0) / 100.
    pos_gumbel = np.abs(gumbel_loss(q, np.ones(len(q))).grad)
    pos_sigmoid = np.abs(sigmoid_bce(q, np.ones(len(q))).grad)
    assert np.all(pos_gumbel > pos_sigmoid)


def test_tempered_gumbel_gradient():
    out = gumbel_loss([0.], [1], sigma=0.5)
    assert out.total == pytest.approx(1.)
    assert out.grad[0] == pytest.approx(-2.)


def test_gumbel_loss_finite_on_clip_range():
    q = np.linspace(CLIP_LO, CLIP_HI, 1401)
    for y in (0, 1):
        out = gumbel_loss(q, np.full(len(q), y))
        assert np.all(np.isfinite(out.per_class)) and np.all(np.isfinite(out.grad))


def test_loss_input_errors():
    with pytest.raises(InputError, match="length mismatch"):
        gumbel_loss([0., 1.], [1])
    with pytest.raises(InputError):
        gumbel_loss([0.], [2])
    with pytest.raises(InputError, match="non-finite"):
        sigmoid_bce([np.inf], [1])
    with pytest.raises(InputError, match="multi-hot"):
        softmax_ce([0., 0.], [1, 1])


def test_sigmoid_bce_values():
    assert sigmoid_bce([0.], [1]).total == pytest.approx(np.log(2))
    assert sigmoid_bce([0.], [1]).grad[0] == pytest.approx(-0.5)
    assert sigmoid_bce([0.], [0]).total == pytest.approx(np.log(2))
    assert sigmoid_bce([0.], [0]).grad[0] == pytest.approx(0.5)
    out = sigmoid_bce([3.], [1])
    assert out.total == pytest.approx(0.048587, abs=1e-6)
    assert out.grad[0] == pytest.approx(-0.047426, abs=1e-6)
    # no overflow far from zero
    assert sigmoid_bce([-800.], [1]).total == pytest.approx(800.)


def test_softmax_ce_values():
    for k in range(4):
        assert softmax_ce(np.full(4, 1.5), np.eye(4)[k]).total == pytest.approx(np.log(4))
    out = softmax_ce([0., 0.], [1, 0])
    assert out.total == pytest.approx(np.log(2))
    np.testing.assert_allclose(out.grad, [-0.5, 0.5])
    assert softmax_ce([2., 0., 0.], [1, 0, 0]).total == pytest.approx(0.23954, abs=1e-5)


def test_softmax_ce_batch():
    q = np.array([[2., 0., 0.], [0., 0., 0.]])
    y = np.array([[1, 0, 0], [0, 1, 0]])
    out = softmax_ce(q, y)
    assert out.total == pytest.approx(0.23954 + np.log(3), abs=1e-5)
    np.testing.assert_allclose(out.grad.sum(axis=1), 0., atol=1e-15)


def test_weighted_loss_reduces_to_base():
    rng = np.random.default_rng(0)
    q = rng.uniform(CLIP_LO, CLIP_HI, size=50)
    y = rng.integers(0, 2, size=50)
    base = gumbel_loss(q, y)
    weighted = weighted_loss(q, y, 1.)
    assert weighted.total == base.total
    assert np.array_equal(weighted.per_class, base.per_class)
    assert np.array_equal(weighted.grad, base.grad)

    base = sigmoid_bce(q, y)
    weighted = weighted_loss(q, y, np.ones(50), base='sigmoid')
    assert np.array_equal(weighted.per_class, base.per_class)


def test_weighted_loss_drops_zero_weights():
    out = weighted_loss([0., 0., 1.], [0, 0, 1], [0., 1., 1.])
    assert out.per_class[0] == 0. and out.grad[0] == 0.
    assert out.per_class[1] == pytest.approx(0.45868, abs=1e-5)
    with pytest.raises(InputError):
        weighted_loss([0.], [1], [-1.])
    with pytest.raises(InputError):
        weighted_loss([0.], [1], [1.], base='tanh')


def test_rare_indicator(freq_table):
    # frequencies 0.01, 0.04, 0.2, 0.45, 0.75
    assert rare_indicator(freq_table, 0.05).tolist() == [1., 1., 0., 0., 0.]
    with pytest.raises(InputError):
        rare_indicator(freq_table, 0.)


def test_eql_weights(freq_table):
    y = np.array([0, 1, 0, 0, 0])
    w = eql_weights(y, freq_table, True, lambda_=0.05)
    assert w.tolist() == [0., 1., 1., 1., 1.]
    # background samples keep every negative
    assert eql_weights(y, freq_table, False, lambda_=0.05).tolist() == [1.] * 5
    y = np.array([[1, 0, 0, 0, 0], [0, 0, 0, 0, 1]])
    w = eql_weights(y, freq_table, [True, True], lambda_=0.05)
    assert w.tolist() == [[1., 0., 1., 1., 1.], [0., 0., 1., 1., 1.]]


def test_droploss_foreground_weights(freq_table):
    state = DropState(lambda_=0.05, mu_rare_common=0.3, mu_frequent=0.6, rng_seed=1)
    y = np.array([0, 0, 1, 0, 0])
    w = droploss_weights(y, freq_table, True, state)
    assert w.tolist() == [0., 0., 1., 1., 1.]
    w = droploss_weights(np.array([1, 0, 0, 0, 0]), freq_table, True, state)
    assert w[0] == 1.


def test_droploss_background_bernoulli(freq_table):
    state = DropState(lambda_=0.05, mu_rare_common=0.3, mu_frequent=0.6, rng_seed=7)
    y = np.zeros((100000, 5))
    w = droploss_weights(y, freq_table, np.zeros(100000, dtype=bool), state)
    assert set(np.unique(w)) <= {0., 1.}
    means = w.mean(axis=0)
    # rare classes by the indicator draw with mu_rare_common, the rest with mu_frequent
    np.testing.assert_allclose(means, [0.3, 0.3, 0.6, 0.6, 0.6], atol=0.01)


def test_droploss_is_reproducible(freq_table):
    state = DropState(lambda_=0.05, mu_rare_common=0.5, mu_frequent=0.5, rng_seed=3)
    y = np.zeros((20, 5))
    fg = np.zeros(20, dtype=bool)
    assert np.array_equal(droploss_weights(y, freq_table, fg, state), droploss_weights(y, freq_table, fg, state))


def test_drop_state(freq_table):
    # groups: rare, rare, common, common, frequent
    state = DropState.from_batch([0, 2, 4, 4], freq_table, lambda_=0.05)
    assert state.mu_rare_common == 0.5
    assert state.mu_frequent == 0.5
    state = DropState.from_batch([], freq_table)
    assert (state.mu_rare_common, state.mu_frequent) == (1., 1.)
    with pytest.raises(InputError):
        DropState(lambda_=-1.)
    with pytest.raises(InputError):
        DropState(mu_frequent=1.5)


def test_gol_reduces_to_gumbel(freq_table):
    rng = np.random.default_rng(2)
    q = rng.uniform(CLIP_LO, CLIP_HI, size=(8, 5))
    y = np.eye(5)[rng.integers(0, 5, size=8)]
    # no rare class and no background: every weight is 1
    state = DropState(lambda_=1e-3, rng_seed=0)
    gol = gol_loss(q, y, freq_table, np.ones(8, dtype=bool), state)
    gumbel = gumbel_loss(q, y)
    assert gol.total == gumbel.total
    assert np.array_equal(gol.grad, gumbel.grad)


def test_gol_drops_rare_negatives(freq_table):
    state = DropState(lambda_=0.05)
    q = np.array([0.5, -1., 2., 0., 1.])
    y = np.array([0, 0, 1, 0, 0])
    out = gol_loss(q, y, freq_table, True, state)
    assert out.per_class[:2].tolist() == [0., 0.]
    assert out.grad[:2].tolist() == [0., 0.]
    np.testing.assert_array_equal(out.per_class[2:], gumbel_loss(q, y).per_class[2:])
    assert eql_gumbel_loss(q, y, freq_table, True, lambda_=0.05).total == out.total


def test_single_class_gol():
    from gol_longtail.datasets import ClassFrequencyTable
    freq = ClassFrequencyTable([50], [50], 100)
    assert gol_loss([0.], [1], freq, True, DropState()).total == pytest.approx(1.)


def test_positive_gradient_stats():
    stats = positive_gradient_stats(np.full((4, 1), -1.), np.ones((4, 1)))
    assert stats.db[0] == pytest.approx(0.)
    stats = positive_gradient_stats(np.full((4, 1), 0.1), np.ones((4, 1)))
    assert stats.db[0] == pytest.approx(-10.)

    grads = gumbel_loss(np.array([[0.], [-2.]]), np.ones((2, 1))).grad
    stats = positive_gradient_stats(grads, np.ones((2, 1)))
    assert stats.db[0] == pytest.approx(10 * np.log10((1 + np.exp(2)) / 2))
    assert stats.db[0] == pytest.approx(6.23, abs=5e-3)


def test_gradient_stats_groups(freq_table):
    sums = np.array([2., 0., 10., 1., 0.])
    counts = np.array([2, 0, 1, 10, 0])
    with warnings.catch_warnings():
        warnings.simplefilter('error')
        stats = gradient_stats_from_sums(sums, counts, freq_table)
    assert np.isnan(stats.db[1]) and np.isnan(stats.db[4])
    assert stats.group_db['rare'] == pytest.approx(0.)
    assert stats.group_db['common'] == pytest.approx((10. - 10.) / 2)
    assert stats.group_db['frequent'] is None


def test_gradient_stats_warn_on_vanishing():
    with pytest.warns(UserWarning):
        gradient_stats_from_sums([0.], [3])


def test_losses_are_nonnegative():
    q = np.linspace(CLIP_LO, CLIP_HI, 141)
    for y in (0, 1):
        target = np.full(len(q), y)
        assert np.all(gumbel_loss(q, target).per_class >= 0)
        assert np.all(sigmoid_bce(q, target).per_class >= 0)
