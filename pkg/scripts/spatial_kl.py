#!/usr/bin/env python3
"""
Trains softmax and Gumbel classifiers on an annotation file whose objects carry
'feature' vectors and compares their predicted spatial distributions with the
annotated ones, category KL averaged per frequency group

Usage: spatial_kl.py annotations.json [grid]
"""
import sys

import numpy as np

from gol_longtail.datasets import ClassFrequencyTable, GROUP_NAMES
from gol_longtail.workflows import AnnotatedWorkflow


try:
    path = sys.argv[1]
except IndexError:
    sys.exit(__doc__)

try:
    grid = int(sys.argv[2])
except (IndexError, ValueError):
    grid = 32

wf = AnnotatedWorkflow({
    'data': {'annotations': path},
    'experiment': {'arms': ['softmax_ce', 'gumbel']}
}, template='minimal')
wf.run()

freq = ClassFrequencyTable.from_annotations(wf.ctx.table, wf.ctx.thresholds)
groups = freq.groups

for record in wf.results:
    divergences = wf.spatial_kl(record, grid, grid)
    values = np.array([divergences[cat_id].value for cat_id in wf.ctx.table.category_ids])
    by_group = {
        group: float(values[groups == group].mean()) if np.any(groups == group) else None
        for group in GROUP_NAMES
    }
    print("%s: mean KL %.4f, %s" % (record.loss, values.mean(), by_group))
