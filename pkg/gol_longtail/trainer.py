"""
Deterministic mini-batch SGD for linear and one-hidden-layer classifiers
under the selectable activations and losses, one-stage or decoupled
(classifier re-training on a frozen hidden layer)
"""
import time
import hashlib
import logging
import warnings
from collections import namedtuple
from dataclasses import dataclass, field, asdict, fields
from typing import Optional

import numpy as np

from gol_longtail.common import InputError, DivergenceError, checksum, to_jsonable
from gol_longtail.datasets import ClassFrequencyTable, DEFAULT_THRESHOLDS, GROUP_NAMES, \
    stratified_split, repeat_factor_sampler, expand_indices
from gol_longtail.initialization import ClassifierParams, init_classifier, fan_in_init
from gol_longtail.kernels import CLIP_LO, CLIP_HI, activate
from gol_longtail.losses import DEFAULT_LAMBDA, DB_CONVENTION, DropState, softmax_ce, sigmoid_bce, gumbel_loss, \
    weighted_loss, eql_weights, droploss_weights, gradient_stats_from_sums
from gol_longtail.analysis import weight_norm_report


logger = logging.getLogger(__name__)

LOSSES = ('sigmoid_bce', 'softmax_ce', 'gumbel', 'gol', 'eql_gumbel', 'eql_sigmoid', 'droploss_sigmoid')
GUMBEL_LOSSES = ('gumbel', 'gol', 'eql_gumbel')
SAMPLERS = ('random', 'repeat_factor')
SCHEDULES = ('constant', 'step', 'cosine')


def activation_of(loss):
    if loss == 'softmax_ce':
        return 'softmax'
    if loss in GUMBEL_LOSSES:
        return 'gumbel'
    return 'sigmoid'


def _check_loss(loss):
    if loss not in LOSSES:
        raise InputError("unknown loss %s, expected one of %s" % (loss, ', '.join(LOSSES)))


@dataclass
class Stage2Config:
    """
    Classifier re-training at a constant learning rate; the repeat-factor sampler
    uses the repeat_threshold of the stage one options
    """
    epochs: int = 20
    lr: float = 2e-3
    loss: str = 'gumbel'
    sampler: str = 'repeat_factor'

    def __post_init__(self):
        _check_loss(self.loss)
        if self.sampler not in SAMPLERS:
            raise InputError("stage2.sampler: unknown sampler %s" % self.sampler)
        if self.epochs < 0:
            raise InputError("stage2.epochs must be non-negative")
        if not self.lr > 0:
            raise InputError("stage2.lr must be positive, got %s" % self.lr)


@dataclass
class TrainConfig:
    loss: str = 'softmax_ce'
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    sampler: str = 'random'
    repeat_threshold: float = 0.01
    sigma: float = 1.0
    lambda_: float = DEFAULT_LAMBDA
    # None: -sigma log(log C) on the Gumbel losses
    bias_init: Optional[float] = None
    # width of the ReLU hidden layer, 0 for a linear classifier
    hidden: int = 0
    schedule: str = 'constant'
    milestones: tuple = ()
    gamma: float = 0.1
    stage2: Optional[Stage2Config] = None

    def __post_init__(self):
        _check_loss(self.loss)
        if self.sampler not in SAMPLERS:
            raise InputError("unknown sampler %s" % self.sampler)
        if self.schedule not in SCHEDULES:
            raise InputError("unknown schedule %s" % self.schedule)
        if not self.lr > 0:
            raise InputError("lr must be positive, got %s" % self.lr)
        if not 0 <= self.momentum < 1:
            raise InputError("momentum must be within [0, 1), got %s" % self.momentum)
        if self.batch_size < 1:
            raise InputError("batch_size must be at least 1, got %s" % self.batch_size)
        if self.epochs < 0:
            raise InputError("epochs must be non-negative")
        if self.weight_decay < 0:
            raise InputError("weight_decay must be non-negative")
        if not self.sigma > 0:
            raise InputError("temperature sigma must be positive, got %s" % self.sigma)
        if self.hidden < 0:
            raise InputError("hidden width must be non-negative")
        self.milestones = tuple(self.milestones)
        if isinstance(self.stage2, dict):
            self.stage2 = Stage2Config(**self.stage2)

    @classmethod
    def from_dict(cls, options):
        options = dict(options)
        if 'lambda' in options:
            options['lambda_'] = options.pop('lambda')
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(options) - known)
        if unknown:
            raise InputError("train: unknown options %s" % ', '.join(unknown))
        stage2 = options.get('stage2')
        if stage2 is not None:
            unknown = sorted(set(stage2) - {f.name for f in fields(Stage2Config)})
            if unknown:
                raise InputError("stage2: unknown options %s" % ', '.join(unknown))
        try:
            return cls(**options)
        except TypeError as ex:
            raise InputError("train: %s" % ex)

    def to_dict(self):
        out = asdict(self)
        out['lambda'] = out.pop('lambda_')
        out['milestones'] = list(self.milestones)
        return out

    def lr_at(self, epoch):
        """
        Learning rate of a 0-based epoch
        """
        if self.schedule == 'step':
            return self.lr * self.gamma ** sum(1 for m in self.milestones if epoch >= m)
        if self.schedule == 'cosine' and self.epochs:
            return self.lr * 0.5 * (1 + np.cos(np.pi * epoch / self.epochs))
        return self.lr


@dataclass
class Model:
    classifier: ClassifierParams
    hidden: Optional[ClassifierParams] = None
    activation: str = 'softmax'
    sigma: float = 1.0

    def embed(self, x):
        if self.hidden is None:
            return x
        return np.maximum(x @ self.hidden.weights + self.hidden.bias, 0.)

    def scores(self, x):
        return self.embed(np.asarray(x, dtype=float)) @ self.classifier.weights + self.classifier.bias

    def predict(self, x):
        # all the activations are monotone
        return np.argmax(self.scores(x), axis=1)

    def predict_proba(self, x):
        return activate(self.activation, self.scores(x), self.sigma)

    def parameters(self):
        params = {'classifier.weights': self.classifier.weights, 'classifier.bias': self.classifier.bias}
        if self.hidden is not None:
            params.update({'hidden.weights': self.hidden.weights, 'hidden.bias': self.hidden.bias})
        return params

    def hidden_digest(self):
        if self.hidden is None:
            return None
        digest = hashlib.md5(self.hidden.weights.tobytes())
        digest.update(self.hidden.bias.tobytes())
        return digest.hexdigest()

    def copy(self):
        return Model(self.classifier.copy(), self.hidden.copy() if self.hidden is not None else None,
                     self.activation, self.sigma)


class Criterion:
    """
    Batch loss (mean over samples) and its gradient w.r.t. the raw scores;
    the Gumbel losses see clipped scores and pass no gradient outside the clip range
    """
    def __init__(self, loss, freq, sigma=1.0, lambda_=DEFAULT_LAMBDA, rng=None):
        _check_loss(loss)
        self.loss = loss
        self.freq = freq
        self.sigma = sigma
        self.lambda_ = lambda_
        self.rng = rng if rng is not None else np.random.default_rng(0)

    @property
    def activation(self):
        return activation_of(self.loss)

    def terms(self, q, targets, labels):
        """
        Per-sample breakdown of the loss
        """
        if self.loss == 'softmax_ce':
            return softmax_ce(q, targets)
        if self.loss == 'sigmoid_bce':
            return sigmoid_bce(q, targets)
        if self.loss == 'gumbel':
            return gumbel_loss(q, targets, self.sigma)

        # classification batches carry no background samples
        is_fg = np.ones(len(labels), dtype=bool)
        if self.loss in ('eql_gumbel', 'eql_sigmoid'):
            weights = eql_weights(targets, self.freq, is_fg, self.lambda_)
        else:
            state = DropState.from_batch(labels, self.freq, self.lambda_)
            weights = droploss_weights(targets, self.freq, is_fg, state, rng=self.rng)
        base = 'sigmoid' if self.loss.endswith('_sigmoid') else 'gumbel'
        return weighted_loss(q, targets, weights, base=base, sigma=self.sigma)

    def __call__(self, scores, labels):
        """
        Returns the mean loss, dL/dscores and the per-sample score gradients
        """
        labels = np.asarray(labels, dtype=int)
        targets = np.zeros(scores.shape)
        targets[np.arange(len(labels)), labels] = 1.
        if self.activation == 'gumbel':
            q = np.clip(scores, CLIP_LO, CLIP_HI)
            inside = (scores >= CLIP_LO) & (scores <= CLIP_HI)
        else:
            q, inside = scores, None
        breakdown = self.terms(q, targets, labels)
        per_sample_grad = breakdown.grad
        grad = per_sample_grad if inside is None else np.where(inside, per_sample_grad, 0.)
        return breakdown.total / len(labels), grad / len(labels), per_sample_grad


def backward(model, x, dscores, train_hidden=True):
    """
    Parameter gradients of the batch loss, keyed as Model.parameters()
    """
    z = model.embed(x)
    grads = {'classifier.weights': z.T @ dscores, 'classifier.bias': dscores.sum(axis=0)}
    if model.hidden is not None and train_hidden:
        dz = (dscores @ model.classifier.weights.T) * (z > 0)
        grads.update({'hidden.weights': x.T @ dz, 'hidden.bias': dz.sum(axis=0)})
    return grads


def batch_loss_and_grads(model, criterion, x, labels, train_hidden=True):
    scores = model.scores(x)
    loss, dscores, per_sample = criterion(scores, labels)
    return loss, backward(model, np.asarray(x, dtype=float), dscores, train_hidden), per_sample


Metrics = namedtuple("Metrics", field_names="per_class, groups, overall, instance")


def evaluate(model, data, freq):
    """
    Top-1 accuracy per class and per frequency group;
    classes absent from the split are None and left out of the means
    """
    predicted = model.predict(data.features)
    labels = np.asarray(data.labels, dtype=int)
    class_count = freq.class_count
    hits = np.bincount(labels[predicted == labels], minlength=class_count).astype(float)
    counts = np.bincount(labels, minlength=class_count)
    present = counts > 0
    if not present.all():
        warnings.warn("Classes absent from the evaluation split: %s" % np.flatnonzero(~present).tolist())

    accuracy = np.where(present, hits / np.where(present, counts, 1), np.nan)
    groups = {}
    for group in GROUP_NAMES:
        members = (freq.groups == group) & present
        groups[group] = float(accuracy[members].mean()) if members.any() else None

    return Metrics(
        per_class=[float(a) if p else None for a, p in zip(accuracy, present)],
        groups=groups,
        overall=float(accuracy[present].mean()) if present.any() else None,
        instance=float(np.mean(predicted == labels)) if len(labels) else None
    )


@dataclass
class RunReport:
    loss: str
    epoch_loss: list
    per_class_accuracy: list
    group_accuracy: dict
    overall_accuracy: Optional[float]
    instance_accuracy: Optional[float]
    weight_norms: list
    weight_norm_cv: float
    positive_grad_db: list
    group_positive_grad_db: dict
    class_groups: list
    config: dict
    stage2_epoch_loss: list = field(default_factory=list)
    db_convention: str = DB_CONVENTION
    wall_time: float = 0.

    REQUIRED = ('loss', 'epoch_loss', 'per_class_accuracy', 'group_accuracy', 'weight_norms', 'positive_grad_db')

    def content(self):
        """
        Everything but the wall time, as plain JSON types
        """
        out = to_jsonable(asdict(self))
        out.pop('wall_time')
        return out

    def checksum(self):
        return checksum(self.content())

    def to_dict(self):
        out = self.content()
        out['wall_time'] = self.wall_time
        out['checksum'] = self.checksum()
        return out

    @classmethod
    def from_dict(cls, doc, path='report'):
        if not isinstance(doc, dict):
            raise InputError("%s: expected an object" % path)
        for key in cls.REQUIRED:
            if key not in doc:
                raise InputError("%s: missing key '%s'" % (path, key))
        known = {f.name for f in fields(cls)}
        try:
            return cls(**{k: v for k, v in doc.items() if k in known})
        except TypeError as ex:
            raise InputError("%s: %s" % (path, ex))


def _gumbel_init(feature_dim, class_count, sigma, bias_init):
    return init_classifier(feature_dim, class_count, sigma=sigma, bias=bias_init)


def _new_classifier(loss, feature_dim, class_count, cfg, rng):
    if loss in GUMBEL_LOSSES:
        return _gumbel_init(feature_dim, class_count, cfg.sigma, cfg.bias_init)
    return fan_in_init(feature_dim, class_count, rng)


def _order(data, freq, sampler, threshold, rng):
    if sampler == 'repeat_factor':
        factors = repeat_factor_sampler(freq, threshold, data.labels)
        return rng.permutation(expand_indices(factors, rng))
    return rng.permutation(len(data))


def _fit(model, data, freq, cfg, criterion, epochs, lr_at, sampler, rng, train_hidden, stage=1):
    """
    SGD with momentum: v <- m v - lr (g + wd w), w <- w + v
    """
    params = model.parameters()
    if not train_hidden:
        params = {k: v for k, v in params.items() if k.startswith('classifier')}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    grad_sums = np.zeros(freq.class_count)
    grad_counts = np.zeros(freq.class_count, dtype=int)
    history = []

    for epoch in range(epochs):
        lr = lr_at(epoch)
        order = _order(data, freq, sampler, cfg.repeat_threshold, rng)
        total, n_steps = 0., 0
        for step, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = order[start:start + cfg.batch_size]
            x, labels = data.features[batch], data.labels[batch]
            scores = model.scores(x)
            if not np.all(np.isfinite(scores)):
                raise DivergenceError("divergence at epoch %s, step %s" % (epoch + 1, step + 1))
            loss, dscores, per_sample = criterion(scores, labels)
            if not np.isfinite(loss):
                raise DivergenceError("divergence at epoch %s, step %s" % (epoch + 1, step + 1))

            grads = backward(model, x, dscores, train_hidden)
            for name, p in params.items():
                velocity[name] = cfg.momentum * velocity[name] - lr * (grads[name] + cfg.weight_decay * p)
                p += velocity[name]

            rows = np.arange(len(labels))
            np.add.at(grad_sums, labels, np.abs(per_sample[rows, labels]))
            np.add.at(grad_counts, labels, 1)
            total += loss
            n_steps += 1

        epoch_loss = total / max(n_steps, 1)
        history.append(epoch_loss)
        logger.debug("stage %s, epoch %s: loss %.6f, lr %.3g", stage, epoch + 1, epoch_loss, lr)

    return history, grad_sums, grad_counts


def split_dataset(data, seed):
    train_idx, test_idx = stratified_split(data.labels, seed)
    return data.subset(train_idx), data.subset(test_idx)


def init_model(loss, feature_dim, class_count, cfg, rng):
    hidden = fan_in_init(feature_dim, cfg.hidden, rng) if cfg.hidden else None
    width = cfg.hidden or feature_dim
    return Model(_new_classifier(loss, width, class_count, cfg, rng), hidden, activation_of(loss), cfg.sigma)


def _streams(seed):
    init_seq, order_seq, drop_seq = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init_seq), np.random.default_rng(order_seq), np.random.default_rng(drop_seq)


def retrain_classifier(model, data, cfg, freq, stage2=None):
    """
    Re-initializes the classifier and trains it alone on the frozen hidden layer;
    returns the new model with the stage history and the positive gradient sums
    """
    stage2 = stage2 or cfg.stage2
    if stage2 is None:
        raise InputError("stage2 missing: classifier re-training needs the stage2 options")
    if cfg.loss != 'softmax_ce':
        warnings.warn("Stage one was trained with %s instead of softmax_ce" % cfg.loss)

    init_rng, order_rng, drop_rng = _streams(cfg.seed + 1)
    digest = model.hidden_digest()
    retrained = model.copy()
    width = model.hidden.weights.shape[1] if model.hidden is not None else data.feature_dim
    retrained.classifier = _new_classifier(stage2.loss, width, freq.class_count, cfg, init_rng)
    retrained.activation = activation_of(stage2.loss)

    criterion = Criterion(stage2.loss, freq, cfg.sigma, cfg.lambda_, drop_rng)
    history, grad_sums, grad_counts = _fit(
        retrained, data, freq, cfg, criterion, stage2.epochs, lambda epoch: stage2.lr,
        stage2.sampler, order_rng, train_hidden=model.hidden is None, stage=2)

    if model.hidden is not None:
        assert retrained.hidden_digest() == digest, "Hidden layer changed while re-training the classifier"
    return retrained, history, grad_sums, grad_counts


def train(data, cfg, thresholds=DEFAULT_THRESHOLDS):
    """
    Trains on the stratified 80% and reports on the held-out 20%
    """
    started = time.time()
    train_set, test_set = split_dataset(data, cfg.seed)
    freq = ClassFrequencyTable.from_labels(train_set.labels, data.class_count, thresholds)

    init_rng, order_rng, drop_rng = _streams(cfg.seed)
    model = init_model(cfg.loss, data.feature_dim, data.class_count, cfg, init_rng)
    criterion = Criterion(cfg.loss, freq, cfg.sigma, cfg.lambda_, drop_rng)
    history, grad_sums, grad_counts = _fit(
        model, train_set, freq, cfg, criterion, cfg.epochs, cfg.lr_at, cfg.sampler, order_rng, train_hidden=True)
    logger.info("%s: %s epochs, final loss %s", cfg.loss, cfg.epochs, history[-1] if history else None)

    stage2_history = []
    if cfg.stage2 is not None:
        model, stage2_history, grad_sums, grad_counts = retrain_classifier(model, train_set, cfg, freq)
        logger.info("classifier re-trained with %s: %s epochs", cfg.stage2.loss, cfg.stage2.epochs)

    metrics = evaluate(model, test_set, freq)
    norms = weight_norm_report(model.classifier, freq)
    grad_stats = gradient_stats_from_sums(grad_sums, grad_counts, freq)

    report = RunReport(
        loss=cfg.loss if cfg.stage2 is None else '%s+%s' % (cfg.loss, cfg.stage2.loss),
        epoch_loss=history,
        per_class_accuracy=metrics.per_class,
        group_accuracy=metrics.groups,
        overall_accuracy=metrics.overall,
        instance_accuracy=metrics.instance,
        weight_norms=norms.norms.tolist(),
        weight_norm_cv=norms.cv,
        positive_grad_db=grad_stats.db,
        group_positive_grad_db=grad_stats.group_db,
        class_groups=freq.groups.tolist(),
        config=cfg.to_dict(),
        stage2_epoch_loss=stage2_history,
        wall_time=time.time() - started
    )
    return model, report
