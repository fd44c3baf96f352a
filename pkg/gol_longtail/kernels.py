"""
Activation kernels: Sigmoid, Softmax and the (tempered) Gumbel CDF,
plus the score clipping applied on the Gumbel path
"""
import numpy as np
from scipy.special import expit, log_softmax as _log_softmax

from gol_longtail.common import InputError


CLIP_LO, CLIP_HI = -4.0, 10.0

LN2 = 0.6931471805599453


def _as_scores(q):
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise InputError("non-finite score")
    return q


def _check_sigma(sigma):
    if not sigma > 0:
        raise InputError("temperature sigma must be positive, got %s" % sigma)


def clip_scores(q, lo=CLIP_LO, hi=CLIP_HI):
    """
    Clamps the scores into [lo, hi], idempotent
    """
    assert lo < hi, "Empty clipping range [%s, %s]" % (lo, hi)
    return np.clip(_as_scores(q), lo, hi)


def sigmoid(q):
    return expit(np.asarray(q, dtype=float))


def softmax(q):
    """
    Softmax over the last axis, with max-subtraction
    """
    q = np.asarray(q, dtype=float)
    if q.ndim == 0 or q.shape[-1] == 0:
        raise InputError("softmax of an empty score vector")
    e = np.exp(q - q.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(q):
    q = np.asarray(q, dtype=float)
    if q.ndim == 0 or q.shape[-1] == 0:
        raise InputError("softmax of an empty score vector")
    return _log_softmax(q, axis=-1)


def gumbel_cdf(q, sigma=1.0):
    """
    exp(-exp(-q/sigma)); sigma=1 is the standard Gumbel CDF
    """
    _check_sigma(sigma)
    z = np.asarray(q, dtype=float) / sigma
    return np.exp(-np.exp(-z))


def gumbel_log_cdf(q, sigma=1.0):
    """
    log of the Gumbel CDF, in closed form
    """
    _check_sigma(sigma)
    z = np.asarray(q, dtype=float) / sigma
    return -np.exp(-z)


def log1mexp(x):
    """
    log(1 - exp(-x)) for x > 0
    """
    x = np.asarray(x, dtype=float)
    small = x < LN2
    # the branch not taken may warn on its values, hence the masks
    return np.where(
        small,
        np.log(-np.expm1(-np.where(small, x, 1.0))),
        np.log1p(-np.exp(-np.where(small, 1.0, x)))
    )


def gumbel_log_sf(q, sigma=1.0):
    """
    log(1 - gumbel_cdf(q)), without forming the difference
    """
    _check_sigma(sigma)
    z = np.asarray(q, dtype=float) / sigma
    return log1mexp(np.exp(-z))


ACTIVATIONS = {
    'sigmoid': sigmoid,
    'softmax': softmax,
    'gumbel': gumbel_cdf,
}


def activate(name, q, sigma=1.0, clip=True):
    """
    Probabilities for the named activation;
    only the Gumbel path is clipped
    """
    if name not in ACTIVATIONS:
        raise InputError("unknown activation %s" % name)
    if name == 'gumbel':
        if clip:
            q = clip_scores(q)
        return gumbel_cdf(q, sigma)
    return ACTIVATIONS[name](q)
