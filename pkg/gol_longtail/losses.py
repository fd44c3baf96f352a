"""
Per-class losses with analytic gradients w.r.t. the scores:
Sigmoid BCE, Softmax CE, Gumbel loss, the EQL / DropLoss weighting
and their composition into the Gumbel Optimized Loss (GOL)
"""
import warnings
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from gol_longtail.common import InputError
from gol_longtail.kernels import log1mexp, log_softmax, softmax


DEFAULT_LAMBDA = 0.0011

DB_CONVENTION = '10*log10 (power)'

LossBreakdown = namedtuple("LossBreakdown", field_names="total, per_class, grad")

GradientStats = namedtuple("GradientStats", field_names="mean, db, count, group_db")


def _check_pair(q, y):
    q = np.asarray(q, dtype=float)
    y = np.asarray(y)
    if q.shape != y.shape:
        raise InputError("length mismatch: scores %s vs targets %s" % (q.shape, y.shape))
    if not np.all(np.isfinite(q)):
        raise InputError("non-finite score")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("targets must be 0 or 1")
    return q, y.astype(float)


def _breakdown(per_class, grad):
    return LossBreakdown(total=float(per_class.sum()), per_class=per_class, grad=grad)


def gumbel_terms(q, y, sigma=1.0):
    """
    Per-class Gumbel loss and its gradient, scores are taken as given (clip beforehand)
    """
    if not sigma > 0:
        raise InputError("temperature sigma must be positive, got %s" % sigma)
    t = np.exp(-q / sigma)
    pos = y == 1
    per_class = np.where(pos, t, -log1mexp(t))
    grad = np.where(pos, -t, t / np.expm1(t)) / sigma
    return per_class, grad


def gumbel_loss(q, y, sigma=1.0):
    """
    y=1: -log(exp(-exp(-q))) = exp(-q), gradient -exp(-q);
    y=0: -log(1 - exp(-exp(-q))), gradient exp(-q) / (exp(exp(-q)) - 1)
    """
    q, y = _check_pair(q, y)
    return _breakdown(*gumbel_terms(q, y, sigma))


def sigmoid_terms(q, y, sigma=1.0):
    # sigma has no meaning here, kept for a uniform signature
    pos = y == 1
    per_class = np.where(pos, np.logaddexp(0., -q), np.logaddexp(0., q))
    grad = np.where(pos, -expit(-q), expit(q))
    return per_class, grad


def sigmoid_bce(q, y):
    q, y = _check_pair(q, y)
    return _breakdown(*sigmoid_terms(q, y))


def softmax_ce(q, y):
    """
    Cross entropy over the last axis, one-hot targets only
    """
    q, y = _check_pair(q, y)
    if q.ndim == 0:
        raise InputError("softmax of an empty score vector")
    if not np.all(y.sum(axis=-1) == 1):
        raise InputError("multi-hot target: softmax cross entropy needs exactly one positive class")
    per_class = -y * log_softmax(q)
    grad = softmax(q) - y
    return _breakdown(per_class, grad)


BASE_TERMS = {
    'gumbel': gumbel_terms,
    'sigmoid': sigmoid_terms,
}


def weighted_loss(q, y, weights, base='gumbel', sigma=1.0):
    """
    -sum_j log(w_j * p_j) over the classes with w_j > 0;
    w_j = 0 terms are dropped, contributing neither loss nor gradient
    """
    q, y = _check_pair(q, y)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), q.shape)
    if np.any(weights < 0):
        raise InputError("negative class weight")
    if base not in BASE_TERMS:
        raise InputError("unknown base activation %s" % base)

    per_class, grad = BASE_TERMS[base](q, y, sigma=sigma)
    kept = weights > 0
    with np.errstate(divide='ignore'):
        per_class = np.where(kept, -np.log(np.where(kept, weights, 1.)) + per_class, 0.)
    grad = np.where(kept, grad, 0.)
    return _breakdown(per_class, grad)


@dataclass
class DropState:
    """
    Frequency threshold and Bernoulli keep-probabilities of the background negatives
    """
    lambda_: float = DEFAULT_LAMBDA
    mu_rare_common: float = 1.0
    mu_frequent: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        _check_lambda(self.lambda_)
        for name in ('mu_rare_common', 'mu_frequent'):
            if not 0. <= getattr(self, name) <= 1.:
                raise InputError("%s must be within [0, 1]" % name)

    @classmethod
    def from_batch(cls, fg_labels, freq, lambda_=DEFAULT_LAMBDA, rng_seed=0):
        """
        Shape parameters from the foreground samples of a batch;
        without foreground nothing is dropped
        """
        fg_labels = np.asarray(fg_labels, dtype=int)
        n_all = len(fg_labels)
        if not n_all:
            return cls(lambda_, 1., 1., rng_seed)
        groups = freq.groups[fg_labels]
        n_frequent = int(np.sum(groups == 'frequent'))
        return cls(lambda_, (n_all - n_frequent) / n_all, n_frequent / n_all, rng_seed)

    def rng(self):
        return np.random.default_rng(self.rng_seed)


def _check_lambda(lambda_):
    if not lambda_ > 0:
        raise InputError("frequency threshold lambda must be positive, got %s" % lambda_)


def rare_indicator(freq, lambda_):
    """
    T_lambda(f_j): 1 for the categories with frequency below lambda
    """
    _check_lambda(lambda_)
    return (freq.frequencies < lambda_).astype(float)


def _foreground_mask(y, is_foreground):
    fg = np.asarray(is_foreground, dtype=bool)
    if y.ndim == 2 and fg.ndim == 1:
        fg = fg[:, None]
    return np.broadcast_to(fg, y.shape)


def eql_weights(y, freq, is_foreground, lambda_=DEFAULT_LAMBDA):
    """
    w_j = 1 - E(r) T_lambda(f_j) (1 - y_j); background samples keep all weights at 1
    """
    y = np.asarray(y, dtype=float)
    rare = rare_indicator(freq, lambda_)
    fg = _foreground_mask(y, is_foreground)
    return 1. - fg * rare * (1. - y)


def droploss_weights(y, freq, is_foreground, state, rng=None):
    """
    Foreground: the EQL weights. Background: w_j ~ Ber(mu_{f_j}),
    mu chosen by the rare indicator T_lambda(f_j).
    The caller owns the generator; without one it is seeded from the state
    """
    y = np.asarray(y, dtype=float)
    rare = rare_indicator(freq, state.lambda_)
    fg = _foreground_mask(y, is_foreground)
    if rng is None:
        rng = state.rng()

    mu = np.where(rare == 1., state.mu_rare_common, state.mu_frequent)
    drawn = (rng.random(y.shape) < mu).astype(float)
    return np.where(fg, 1. - rare * (1. - y), drawn)


def gol_loss(q, y, freq, is_foreground, state, sigma=1.0, rng=None):
    """
    Gumbel Optimized Loss: Gumbel log-probabilities under the DropLoss weights
    """
    weights = droploss_weights(y, freq, is_foreground, state, rng=rng)
    return weighted_loss(q, y, weights, base='gumbel', sigma=sigma)


def eql_gumbel_loss(q, y, freq, is_foreground, lambda_=DEFAULT_LAMBDA, sigma=1.0):
    weights = eql_weights(y, freq, is_foreground, lambda_)
    return weighted_loss(q, y, weights, base='gumbel', sigma=sigma)


def positive_gradient_stats(grads, targets, freq=None):
    """
    Mean |dL/dq| over the positive entries of each class, and its dB value
    """
    grads = np.atleast_2d(np.asarray(grads, dtype=float))
    pos = np.atleast_2d(np.asarray(targets)) == 1
    if grads.shape != pos.shape:
        raise InputError("length mismatch: gradients %s vs targets %s" % (grads.shape, pos.shape))
    sums = np.where(pos, np.abs(grads), 0.).sum(axis=0)
    return gradient_stats_from_sums(sums, pos.sum(axis=0), freq)


def gradient_stats_from_sums(sums, counts, freq=None):
    """
    Classes without positives are absent (NaN); group dB is the mean over present members
    """
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts, dtype=int)
    present = counts > 0
    with np.errstate(divide='ignore', invalid='ignore'):
        mean = np.where(present, sums / np.where(present, counts, 1), np.nan)
        db = 10. * np.log10(mean)

    group_db = {}
    if freq is not None:
        for group in freq.group_names:
            members = (freq.groups == group) & np.isfinite(db)
            group_db[group] = float(db[members].mean()) if members.any() else None

    if np.any(present & ~np.isfinite(db)):
        warnings.warn("Vanishing positive gradients for some classes; their dB values are -inf")

    return GradientStats(mean=mean, db=db, count=counts, group_db=group_db)
