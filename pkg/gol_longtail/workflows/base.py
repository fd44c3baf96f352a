"""
The base workflow: a template-driven queue of training runs on one dataset
"""
import logging
from abc import abstractmethod
from collections import namedtuple
from itertools import product
from types import SimpleNamespace

import numpy as np

from gol_longtail.common import InputError, EXIT_CODES, CONFIG_SECTIONS, load_config
from gol_longtail.trainer import TrainConfig, train


RunRecord = namedtuple("RunRecord", field_names="label, loss, seed, sigma, model, report")


class ExperimentWorkflow(object):
    """ A workflow training every arm of the experiment on the same data
    """
    OPTIONS_FILES = {
        'default': 'default.yml',
        'minimal': 'minimal.yml',
        'decoupled': 'decoupled.yml',
        'sweep': 'sweep.yml'
    }
    # options of the workflow itself, the rest goes down to the trainer
    OPTIONS_WORKFLOW = ('experiment', 'groups')

    def __init__(self, options=None, template='default'):
        self.options = options or {}
        self.template = self.OPTIONS_FILES.get(template, template)
        self.ctx = SimpleNamespace()
        self.results = []
        self.logger = logging.getLogger(self.__class__.__module__)

    def report(self, msg):
        self.logger.info("%s: %s", self.__class__.__name__, msg)

    def run(self):
        self.init_inputs()
        while self.has_run_to_do():
            self.run_training()
        self.report(f"{len(self.results)} runs finished")
        return EXIT_CODES['SUCCESS']

    def init_inputs(self):
        self.report(f"Using {self.template} as experiment template")
        options = load_config(self.options, self.template)
        self.validate_inputs(options)
        self.ctx.options = options
        self.ctx.thresholds = (options['groups']['rare'], options['groups']['common'])
        self.ctx.dataset = self.get_dataset(options['data'])
        self.report(f"Dataset of {len(self.ctx.dataset)} samples in {self.ctx.dataset.class_count} classes")

        train_options = dict(options['train'])
        train_options['hidden'] = options['model'].get('hidden', 0)
        if options.get('stage2'):
            train_options['stage2'] = options['stage2']
        base = TrainConfig.from_dict(train_options)

        experiment = options.get('experiment') or {}
        arms = experiment.get('arms') or [base.loss]
        seeds = experiment.get('seeds') or [base.seed]
        sigmas = experiment.get('sigmas') or [base.sigma]
        for sigma in sigmas:
            if not sigma > 0:
                raise InputError("experiment.sigmas: temperature sigma must be positive, got %s" % sigma)

        self.ctx.queue = []
        for loss, seed, sigma in product(arms, seeds, sigmas):
            cfg = TrainConfig.from_dict(dict(base.to_dict(), loss=loss, seed=seed, sigma=sigma))
            self.ctx.queue.append((f"{loss}/seed={seed}/sigma={sigma}", cfg))
        self.ctx.running = -1

    def validate_inputs(self, options):
        missing = [key for key in CONFIG_SECTIONS if key not in options]
        if missing:
            raise InputError("config: missing sections %s" % ', '.join(missing))
        for key in ('data', 'model', 'train', 'groups'):
            if not isinstance(options[key], dict):
                raise InputError("config.%s: expected a mapping" % key)
        if 'rare' not in options['groups'] or 'common' not in options['groups']:
            raise InputError("config.groups: rare and common thresholds expected")

    @abstractmethod
    def get_dataset(self, data_options):
        raise NotImplementedError

    def has_run_to_do(self):
        self.ctx.running += 1
        return self.ctx.running < len(self.ctx.queue)

    def run_training(self):
        label, cfg = self.ctx.queue[self.ctx.running]
        self.report(f"{label}: training")
        model, report = train(self.ctx.dataset, cfg, self.ctx.thresholds)
        self.report(f"{label}: overall accuracy {report.overall_accuracy}, rare {report.group_accuracy['rare']}")
        self.results.append(RunRecord(label, cfg.loss, cfg.seed, cfg.sigma, model, report))

    def mean_over_seeds(self, metric):
        """
        Seed-mean of metric(report) per (loss, sigma); None values are skipped
        """
        grouped = {}
        for rec in self.results:
            value = metric(rec.report)
            if value is not None:
                grouped.setdefault((rec.loss, rec.sigma), []).append(value)
        return {key: float(np.mean(values)) for key, values in grouped.items()}
