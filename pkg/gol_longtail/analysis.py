"""
Diagnostics: KL divergence between spatial grids, classifier weight-norm balance,
predicted object distributions and report summaries
"""
from collections import namedtuple

import numpy as np
from scipy.special import rel_entr

from gol_longtail.common import InputError
from gol_longtail.annotations import SpatialGrid, joint_grid, weighted_joint_grid


DEFAULT_EPS = 1e-12

KL_DIRECTION = 'KL(ground_truth || predicted)'

KLResult = namedtuple("KLResult", field_names="value, support_cells, smoothing_eps, direction")

WeightNormReport = namedtuple("WeightNormReport", field_names="norms, order, sorted_norms, cv")


def _cells(grid):
    return grid.cells if isinstance(grid, SpatialGrid) else np.asarray(grid, dtype=float)


def kl_divergence(p, q, eps=DEFAULT_EPS):
    """
    sum P' log(P'/Q') after adding eps to every cell of both grids and renormalizing
    """
    p, q = _cells(p), _cells(q)
    if p.shape != q.shape:
        raise InputError("grid dimensions differ: %s vs %s" % ('x'.join(map(str, p.shape)),
                                                               'x'.join(map(str, q.shape))))
    if not eps > 0:
        raise InputError("smoothing eps must be positive, got %s" % eps)
    if np.any(p < 0) or np.any(q < 0):
        raise InputError("negative grid cell")

    p_s = (p + eps) / (p + eps).sum()
    q_s = (q + eps) / (q + eps).sum()
    # rounding may push an almost-zero value below zero
    value = max(0., float(rel_entr(p_s, q_s).sum()))
    return KLResult(value, int(np.count_nonzero((p > 0) | (q > 0))), eps, KL_DIRECTION)


def weight_norm_report(params, freq=None):
    """
    L2 norm of every classifier column, the class order by decreasing
    frequency and the coefficient of variation std/mean
    """
    weights = params.weights if hasattr(params, 'weights') else np.asarray(params, dtype=float)
    norms = np.linalg.norm(weights, axis=0)
    if freq is not None:
        if freq.class_count != len(norms):
            raise InputError("class counts do not align: %s weight columns, %s classes" % (
                len(norms), freq.class_count))
        order = np.argsort(-freq.image_count, kind='stable')
    else:
        order = np.arange(len(norms))
    mean = norms.mean()
    cv = float(norms.std() / mean) if mean > 0 else 0.
    return WeightNormReport(norms, order, norms[order], cv)


def predicted_probabilities(model, table):
    """
    Per-object class probabilities, normalized per object
    """
    if table.features is None:
        raise InputError("missing features: the table carries no per-object feature vectors")
    probs = np.asarray(model.predict_proba(table.features), dtype=float)
    if probs.shape != (table.object_count, len(table.categories)):
        raise InputError("model gives %s probabilities for %s objects of %s categories" % (
            probs.shape, table.object_count, len(table.categories)))
    return probs / probs.sum(axis=1, keepdims=True)


def predicted_joint_grid(model, table, category_id, grid_h, grid_w, probs=None):
    """
    Joint grid with the predicted probability of the category in place of the membership indicator
    """
    if probs is None:
        probs = predicted_probabilities(model, table)
    return weighted_joint_grid(table, category_id, probs[:, table.category_index(category_id)], grid_h, grid_w)


def category_kl(model, table, grid_h, grid_w, eps=DEFAULT_EPS):
    """
    KL between the annotated and the predicted joint grid of every category
    """
    probs = predicted_probabilities(model, table)
    return {
        cat_id: kl_divergence(joint_grid(table, cat_id, grid_h, grid_w),
                              predicted_joint_grid(model, table, cat_id, grid_h, grid_w, probs=probs), eps)
        for cat_id in table.category_ids
    }


def summarize(report):
    """
    Headline numbers of a run report
    """
    return {
        'loss': report.loss,
        'epochs': len(report.epoch_loss),
        'final_loss': report.epoch_loss[-1] if report.epoch_loss else None,
        'overall_accuracy': report.overall_accuracy,
        'instance_accuracy': report.instance_accuracy,
        'group_accuracy': dict(report.group_accuracy),
        'weight_norm_cv': report.weight_norm_cv,
        'group_positive_grad_db': dict(report.group_positive_grad_db),
        'db_convention': report.db_convention,
    }
