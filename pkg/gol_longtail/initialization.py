"""
Classifier initialization giving zero initial gradient under Gumbel activation
"""
from dataclasses import dataclass

import numpy as np

from gol_longtail.common import InputError
from gol_longtail.kernels import CLIP_LO


INIT_WEIGHT = 0.001


@dataclass
class ClassifierParams:
    """
    Final layer q = z W + b, W of shape (feature_dim, class_count)
    """
    weights: np.ndarray
    bias: np.ndarray

    @property
    def feature_dim(self):
        return self.weights.shape[0]

    @property
    def class_count(self):
        return self.weights.shape[1]

    def copy(self):
        return ClassifierParams(self.weights.copy(), self.bias.copy())


def _check_class_count(class_count):
    if not class_count >= 2:
        raise InputError("degenerate class count: %s" % class_count)


def solve_bias(class_count, sigma=1.0):
    """
    b = -sigma log(log(C)) zeroes the initial total gradient
    of one positive and C-1 negatives
    """
    _check_class_count(class_count)
    if not sigma > 0:
        raise InputError("temperature sigma must be positive, got %s" % sigma)
    return -sigma * np.log(np.log(class_count))


def initial_total_gradient(class_count, bias, sigma=1.0):
    """
    -exp(-b) + (C - 1) exp(-b) / (exp(exp(-b)) - 1), scaled by 1/sigma
    """
    _check_class_count(class_count)
    if not sigma > 0:
        raise InputError("temperature sigma must be positive, got %s" % sigma)
    z = bias / sigma
    if z < CLIP_LO:
        raise InputError("bias %s is below %s: exp(exp(-b)) overflows" % (bias, CLIP_LO * sigma))
    t = np.exp(-z)
    return float((-t + (class_count - 1) * t / np.expm1(t)) / sigma)


def init_classifier(feature_dim, class_count, sigma=1.0, bias=None, weight=INIT_WEIGHT):
    """
    Constant weights 0.001 and the solved bias; a given bias (e.g. -2.0) overrides it
    """
    if feature_dim < 1:
        raise InputError("feature dimension must be positive, got %s" % feature_dim)
    if bias is None:
        bias = solve_bias(class_count, sigma)
    else:
        _check_class_count(class_count)
    return ClassifierParams(
        weights=np.full((feature_dim, class_count), weight, dtype=float),
        bias=np.full(class_count, bias, dtype=float)
    )


def fan_in_init(fan_in, fan_out, rng):
    """
    Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias
    """
    bound = 1. / np.sqrt(fan_in)
    return ClassifierParams(
        weights=rng.uniform(-bound, bound, size=(fan_in, fan_out)),
        bias=np.zeros(fan_out)
    )
