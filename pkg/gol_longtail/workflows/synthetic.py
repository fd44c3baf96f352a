"""
The workflow on generated long-tailed Gaussian data
"""
from gol_longtail.common import InputError
from gol_longtail.datasets import make_longtail

from gol_longtail.workflows.base import ExperimentWorkflow


class SyntheticWorkflow(ExperimentWorkflow):

    def get_dataset(self, data_options):
        try:
            return make_longtail(
                class_count=data_options['classes'],
                imbalance_factor=data_options['imbalance_factor'],
                n_head=data_options['n_head'],
                feature_dim=data_options.get('feature_dim', 8),
                seed=data_options.get('seed', 0),
                separation=data_options.get('separation', 1.0),
                mean_layout=data_options.get('mean_layout', 'normal')
            )
        except KeyError as ex:
            raise InputError("config.data: missing key %s" % ex)
