"""
Finite-difference oracle for the hand-written gradients
"""
from collections import namedtuple

import numpy as np

from gol_longtail.common import InputError
from gol_longtail.losses import gumbel_loss, sigmoid_bce, softmax_ce, weighted_loss


DEFAULT_GRID = (-4., -2., 0., 1., 3., 6., 10.)
STEP = 1e-5
TOLERANCE = 1e-5

GradCheckRow = namedtuple("GradCheckRow", field_names="q, y, analytic, numeric, rel_error")


def central_difference(func, x, h=STEP):
    """
    Numeric gradient of the scalar func at x:
    (f(x + h) - f(x - h)) / 2h per coordinate
    """
    x = np.array(x, dtype=float)
    grad = np.zeros(x.shape)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + h
        f_plus = func(x)
        x.flat[i] = orig - h
        f_minus = func(x)
        x.flat[i] = orig
        grad.flat[i] = (f_plus - f_minus) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    analytic, numeric = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(scale > 0, np.abs(analytic - numeric) / np.where(scale > 0, scale, 1.), 0.)


def _scalar_case(loss):
    def case(q, y, sigma):
        return (lambda x: loss(x, [y], sigma).total), np.array([q])
    return case


def _softmax_case(q, y, sigma):
    # two classes [q, 0], the positive one is the first for y=1
    target = [y, 1 - y]
    return (lambda x: softmax_ce([x[0], 0.], target).total), np.array([q])


LOSS_CASES = {
    'gumbel': _scalar_case(lambda x, y, sigma: gumbel_loss(x, y, sigma)),
    'sigmoid_bce': _scalar_case(lambda x, y, sigma: sigmoid_bce(x, y)),
    'softmax_ce': _softmax_case,
    # GOL with all DropLoss weights equal to 1
    'gol': _scalar_case(lambda x, y, sigma: weighted_loss(x, y, 1., base='gumbel', sigma=sigma)),
}


def _analytic(name, q, y, sigma):
    if name == 'softmax_ce':
        return softmax_ce([q, 0.], [y, 1 - y]).grad[0]
    if name == 'sigmoid_bce':
        return sigmoid_bce([q], [y]).grad[0]
    if name == 'gol':
        return weighted_loss([q], [y], 1., base='gumbel', sigma=sigma).grad[0]
    return gumbel_loss([q], [y], sigma).grad[0]


def check_loss(name, grid=DEFAULT_GRID, sigma=1.0, h=STEP):
    """
    One row per (q, y) grid point
    """
    if name not in LOSS_CASES:
        raise InputError("unknown loss %s, expected one of %s" % (name, ', '.join(LOSS_CASES)))
    if not len(grid):
        raise InputError("empty score grid")
    rows = []
    for q in grid:
        for y in (0, 1):
            func, x = LOSS_CASES[name](float(q), y, sigma)
            numeric = central_difference(func, x, h)[0]
            analytic = _analytic(name, float(q), y, sigma)
            rows.append(GradCheckRow(float(q), y, float(analytic), float(numeric),
                                     float(relative_error(analytic, numeric))))
    return rows


def passed(rows, tolerance=TOLERANCE):
    return all(row.rel_error < tolerance for row in rows)
