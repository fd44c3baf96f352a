#!/usr/bin/env python3
"""
Decoupled training at growing imbalance: the softmax-only baseline against
a softmax stage one followed by the classifier re-trained alone with the Gumbel loss;
prints the seed-mean overall and rare accuracy
"""
import logging

from gol_longtail.workflows import SyntheticWorkflow


logging.basicConfig(level=logging.WARNING)

imbalance_factors = [50, 100, 200]
arms = {
    'softmax_ce': None,
    'softmax_ce+gumbel': {'loss': 'gumbel'},
}

print("%6s %20s %10s %10s" % ('IF', 'training', 'overall', 'rare'))
for imbalance in imbalance_factors:
    for label, stage2 in arms.items():
        wf = SyntheticWorkflow({'data': {'imbalance_factor': imbalance}, 'stage2': stage2}, template='decoupled')
        wf.run()
        overall = wf.mean_over_seeds(lambda report: report.overall_accuracy)
        rare = wf.mean_over_seeds(lambda report: report.group_accuracy['rare'])
        key = ('softmax_ce', 1.0)
        print("%6s %20s %10.4f %10.4f" % (imbalance, label, overall[key], rare.get(key, float('nan'))))
