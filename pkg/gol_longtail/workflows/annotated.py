"""
The workflow on an annotation table whose objects carry feature vectors;
its models also give the predicted spatial distributions
"""
import numpy as np

from gol_longtail.common import InputError
from gol_longtail.annotations import parse_annotations, joint_grid
from gol_longtail.datasets import SyntheticDataset
from gol_longtail.analysis import category_kl, predicted_probabilities, predicted_joint_grid

from gol_longtail.workflows.base import ExperimentWorkflow


DEFAULT_GRID_SIZE = 32


class AnnotatedWorkflow(ExperimentWorkflow):

    def get_dataset(self, data_options):
        path = data_options.get('annotations')
        if not path:
            raise InputError("config.data.annotations: path expected")
        try:
            with open(path, 'rb') as f:
                table = parse_annotations(f.read())
        except OSError as ex:
            raise InputError("%s: %s" % (path, ex.strerror))
        except InputError as ex:
            raise InputError("%s: %s" % (path, ex))
        if table.features is None:
            raise InputError("%s: missing features, objects need a 'feature' vector" % path)
        self.ctx.table = table

        labels = table.labels()
        sizes = np.bincount(labels, minlength=len(table.categories))
        if np.any(sizes == 0):
            raise InputError("%s: categories without objects" % path)
        means = np.array([table.features[labels == k].mean(axis=0) for k in range(len(sizes))])
        return SyntheticDataset(table.features, labels, sizes, float(sizes.max() / sizes.min()), means)

    def grid_size(self):
        """
        data.grid: 32 or [rows, columns]
        """
        size = self.ctx.options['data'].get('grid', DEFAULT_GRID_SIZE)
        dims = [size, size] if isinstance(size, int) else size
        if not isinstance(dims, list) or len(dims) != 2 or \
                not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in dims):
            raise InputError("config.data.grid: positive size or [rows, columns] expected, got %r" % (size,))
        return tuple(dims)

    def spatial_grids(self, record, grid_h, grid_w):
        """
        Annotated and predicted joint grids of every category, keyed by file stem
        """
        table = self.ctx.table
        probs = predicted_probabilities(record.model, table)
        grids = {}
        for cat_id in table.category_ids:
            grids['joint_%s' % cat_id] = joint_grid(table, cat_id, grid_h, grid_w)
            grids['predicted_joint_%s' % cat_id] = predicted_joint_grid(
                record.model, table, cat_id, grid_h, grid_w, probs=probs)
        return grids

    def spatial_kl(self, record, grid_h, grid_w):
        """
        Per-category KL between the annotated and the predicted joint grids
        """
        return category_kl(record.model, self.ctx.table, grid_h, grid_w)
