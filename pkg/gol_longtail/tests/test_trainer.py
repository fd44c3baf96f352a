
import numpy as np
import pytest

from gol_longtail.common import InputError, DivergenceError
from gol_longtail.datasets import ClassFrequencyTable, SyntheticDataset
from gol_longtail.gradcheck import central_difference
from gol_longtail.initialization import ClassifierParams, solve_bias, fan_in_init
from gol_longtail.trainer import TrainConfig, Stage2Config, Model, Criterion, RunReport, batch_loss_and_grads, \
    evaluate, train, retrain_classifier, init_model
# noinspection PyUnresolvedReferences
from gol_longtail.tests.fixtures import freq_table, toy_dataset


def _separable(n=40, seed=0):
    rng = np.random.default_rng(seed)
    means = np.array([[-5., -5.], [5., 5.]])
    labels = np.repeat([0, 1], n)
    features = means[labels] + rng.standard_normal((2 * n, 2))
    return SyntheticDataset(features, labels, np.array([n, n]), 1., means)


def _one_hot_data(labels, class_count=5):
    labels = np.asarray(labels)
    eye = np.eye(class_count)
    return SyntheticDataset(eye[labels], labels, np.bincount(labels, minlength=class_count), 1., eye)


def _lookup_model(mapping, class_count=5):
    """Predicts mapping[k] for the one-hot input of class k"""
    weights = np.zeros((class_count, class_count))
    weights[np.arange(class_count), mapping] = 1.
    return Model(ClassifierParams(weights, np.zeros(class_count)))


def test_separable_softmax_ce():
    data = _separable()
    cfg = TrainConfig(loss='softmax_ce', epochs=50, batch_size=16, lr=0.05)
    model, report = train(data, cfg)
    freq = ClassFrequencyTable.from_labels(data.labels, 2)
    assert evaluate(model, data, freq).instance == 1.
    assert report.overall_accuracy == 1.
    assert len(report.epoch_loss) == 50


@pytest.mark.parametrize('loss', ['softmax_ce', 'gumbel', 'sigmoid_bce', 'gol'])
def test_loss_goes_down(toy_dataset, loss):
    cfg = TrainConfig(loss=loss, epochs=5, batch_size=16, lr=0.05)
    _, report = train(toy_dataset, cfg, thresholds=(10, 30))
    assert all(np.isfinite(report.epoch_loss))
    assert report.epoch_loss[4] < report.epoch_loss[0]


def test_train_is_deterministic(toy_dataset):
    cfg = TrainConfig(loss='gol', epochs=3, batch_size=16, sampler='repeat_factor', repeat_threshold=0.2)
    model_a, report_a = train(toy_dataset, cfg)
    model_b, report_b = train(toy_dataset, cfg)
    assert report_a.checksum() == report_b.checksum()
    assert np.array_equal(model_a.classifier.weights, model_b.classifier.weights)

    _, report_c = train(toy_dataset, TrainConfig(loss='gol', epochs=3, batch_size=16, seed=1))
    assert report_c.checksum() != report_a.checksum()


@pytest.mark.parametrize('loss', ['softmax_ce', 'sigmoid_bce', 'gumbel', 'eql_gumbel', 'eql_sigmoid'])
def test_backward_against_finite_differences(loss):
    rng = np.random.default_rng(8)
    x = rng.standard_normal((8, 4))
    labels = rng.integers(0, 3, size=8)
    freq = ClassFrequencyTable([1, 20, 60], [1, 20, 60], 80)
    model = Model(fan_in_init(6, 3, rng), fan_in_init(4, 6, rng))
    criterion = Criterion(loss, freq, lambda_=0.05)
    _, grads, _ = batch_loss_and_grads(model, criterion, x, labels)

    params = model.parameters()
    picks = [(name, int(rng.integers(0, params[name].size))) for name in sorted(params) for _ in range(3)][:10]
    for name, idx in picks:
        p = params[name]

        def func(value):
            saved = p.flat[idx]
            p.flat[idx] = value[0]
            out = criterion(model.scores(x), labels)[0]
            p.flat[idx] = saved
            return out

        numeric = central_difference(func, [p.flat[idx]])[0]
        np.testing.assert_allclose(grads[name].flat[idx], numeric, rtol=1e-4, atol=1e-8)


def test_clip_blocks_gradient():
    freq = ClassFrequencyTable([5, 5], [5, 5], 10)
    criterion = Criterion('gumbel', freq)
    scores = np.array([[-20., 0.5], [3., 30.]])
    loss, dscores, per_sample = criterion(scores, [0, 1])
    assert np.isfinite(loss)
    assert dscores[0, 0] == 0. and dscores[1, 1] == 0.
    assert per_sample[0, 0] != 0.
    assert dscores[0, 1] != 0.


def test_evaluate_perfect(freq_table):
    data = _one_hot_data([0, 1, 2, 3, 4, 4])
    metrics = evaluate(_lookup_model([0, 1, 2, 3, 4]), data, freq_table)
    assert metrics.per_class == [1.] * 5
    assert metrics.groups == {'rare': 1., 'common': 1., 'frequent': 1.}
    assert metrics.overall == 1. and metrics.instance == 1.


def test_evaluate_majority(freq_table):
    data = _one_hot_data([0, 1, 2, 3, 4])
    metrics = evaluate(_lookup_model([4] * 5), data, freq_table)
    assert metrics.groups['rare'] == 0.
    assert metrics.groups['frequent'] == 1.
    assert metrics.overall == pytest.approx(0.2)


def test_evaluate_group_means(freq_table):
    data = _one_hot_data([0, 0, 1, 2, 3, 4, 4, 4])
    metrics = evaluate(_lookup_model([0, 4, 2, 4, 4]), data, freq_table)
    assert metrics.per_class == [1., 0., 1., 0., 1.]
    assert metrics.groups == {'rare': 0.5, 'common': 0.5, 'frequent': 1.}
    assert metrics.overall == pytest.approx(0.6)
    assert metrics.instance == pytest.approx(6 / 8)


def test_evaluate_absent_class(freq_table):
    data = _one_hot_data([0, 2, 3, 4])
    with pytest.warns(UserWarning, match="absent"):
        metrics = evaluate(_lookup_model([0, 1, 2, 3, 4]), data, freq_table)
    assert metrics.per_class[1] is None
    assert metrics.groups['rare'] == 1.


def test_gumbel_model_starts_at_solved_bias(toy_dataset):
    cfg = TrainConfig(loss='gumbel')
    model = init_model('gumbel', toy_dataset.feature_dim, 5, cfg, np.random.default_rng(0))
    assert np.all(model.classifier.bias == solve_bias(5))
    assert np.all(model.classifier.weights == 0.001)
    assert model.activation == 'gumbel'
    probs = model.predict_proba(toy_dataset.features[:3])
    assert probs.shape == (3, 5) and np.all((probs > 0) & (probs < 1))


def test_retrain_zero_epochs_is_fresh_init(toy_dataset):
    cfg = TrainConfig(epochs=2, hidden=8, batch_size=16)
    model, _ = train(toy_dataset, cfg)
    freq = ClassFrequencyTable.from_labels(toy_dataset.labels, 5)
    retrained, history, _, _ = retrain_classifier(model, toy_dataset, cfg, freq, Stage2Config(epochs=0))
    assert history == []
    assert np.all(retrained.classifier.weights == 0.001)
    assert np.all(retrained.classifier.bias == solve_bias(5))
    assert retrained.hidden_digest() == model.hidden_digest()
    assert retrained.activation == 'gumbel'


def test_retrain_freezes_hidden_layer(toy_dataset):
    cfg = TrainConfig(epochs=2, hidden=8, batch_size=16)
    model, _ = train(toy_dataset, cfg)
    digest = model.hidden_digest()
    freq = ClassFrequencyTable.from_labels(toy_dataset.labels, 5)
    stage2 = Stage2Config(epochs=3, sampler='random')
    retrained, history, _, counts = retrain_classifier(model, toy_dataset, cfg, freq, stage2)
    assert len(history) == 3
    assert retrained.hidden_digest() == digest
    assert model.hidden_digest() == digest
    assert not np.all(retrained.classifier.weights == 0.001)
    assert counts.sum() == 3 * len(toy_dataset)

    with pytest.raises(InputError, match="stage2 missing"):
        retrain_classifier(model, toy_dataset, cfg, freq)
    with pytest.warns(UserWarning):
        retrain_classifier(model, toy_dataset, TrainConfig(loss='gumbel', hidden=8), freq, Stage2Config(epochs=1))


def test_decoupled_training(toy_dataset):
    cfg = TrainConfig(epochs=2, hidden=8, batch_size=16, stage2={'epochs': 2, 'lr': 0.001})
    _, report = train(toy_dataset, cfg)
    assert report.loss == 'softmax_ce+gumbel'
    assert len(report.stage2_epoch_loss) == 2
    assert report.config['stage2']['epochs'] == 2


def test_divergence(toy_dataset):
    cfg = TrainConfig(loss='sigmoid_bce', epochs=50, batch_size=16, lr=1e10, momentum=0., weight_decay=1.)
    with np.errstate(all='ignore'):
        with pytest.raises(DivergenceError, match="divergence at epoch"):
            train(toy_dataset, cfg)


def test_report_fields(toy_dataset):
    _, report = train(toy_dataset, TrainConfig(loss='gumbel', epochs=2), thresholds=(10, 30))
    doc = report.to_dict()
    for key in RunReport.REQUIRED + ('checksum', 'wall_time', 'weight_norm_cv', 'class_groups'):
        assert key in doc
    assert len(doc['weight_norms']) == 5
    assert set(doc['group_accuracy']) == {'rare', 'common', 'frequent'}
    assert doc['class_groups'][0] == 'frequent'

    again = RunReport.from_dict(doc)
    assert again.checksum() == doc['checksum']
    with pytest.raises(InputError, match="missing key 'epoch_loss'"):
        RunReport.from_dict({k: v for k, v in doc.items() if k != 'epoch_loss'})


def test_config_options():
    cfg = TrainConfig.from_dict({'loss': 'gol', 'lambda': 0.01, 'stage2': {'epochs': 3}})
    assert cfg.lambda_ == 0.01
    assert cfg.stage2 == Stage2Config(epochs=3)
    assert cfg.to_dict()['lambda'] == 0.01
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    with pytest.raises(InputError, match="unknown options"):
        TrainConfig.from_dict({'learning_rate': 0.1})
    with pytest.raises(InputError, match="stage2: unknown options"):
        TrainConfig.from_dict({'stage2': {'lrate': 0.1}})
    for bad in ({'loss': 'focal'}, {'lr': 0.}, {'momentum': 1.}, {'sigma': 0.}, {'sampler': 'balanced'},
                {'batch_size': 0}, {'schedule': 'linear'}):
        with pytest.raises(InputError):
            TrainConfig.from_dict(bad)


def test_lr_schedules():
    cfg = TrainConfig(lr=0.1, schedule='step', milestones=[2, 4], gamma=0.1)
    assert [cfg.lr_at(e) for e in range(5)] == pytest.approx([0.1, 0.1, 0.01, 0.01, 0.001])
    cfg = TrainConfig(lr=0.1, schedule='cosine', epochs=10)
    assert cfg.lr_at(0) == pytest.approx(0.1)
    assert cfg.lr_at(5) == pytest.approx(0.05)
    assert TrainConfig(lr=0.1).lr_at(7) == 0.1
