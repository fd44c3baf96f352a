#!/usr/bin/env python3
"""
Trains every loss arm on the same long-tailed data over several seeds and prints
the seed-mean accuracy per frequency group, the weight-norm CV of the classifier
and the mean positive gradient (dB) per group
"""
import sys
import logging

from gol_longtail.workflows import SyntheticWorkflow


logging.basicConfig(level=logging.INFO)

try:
    seeds = list(range(int(sys.argv[1])))
except (IndexError, ValueError):
    seeds = [0, 1, 2]
    print("Default seeds for testing: %s" % seeds)

arms = ['softmax_ce', 'sigmoid_bce', 'eql_sigmoid', 'droploss_sigmoid', 'gumbel', 'eql_gumbel', 'gol']

wf = SyntheticWorkflow({'experiment': {'arms': arms, 'seeds': seeds}}, template='default')
wf.run()

columns = {
    'overall': lambda report: report.overall_accuracy,
    'rare': lambda report: report.group_accuracy['rare'],
    'common': lambda report: report.group_accuracy['common'],
    'frequent': lambda report: report.group_accuracy['frequent'],
    'cv': lambda report: report.weight_norm_cv,
    'rare_db': lambda report: report.group_positive_grad_db['rare'],
    'frequent_db': lambda report: report.group_positive_grad_db['frequent'],
}
table = {name: wf.mean_over_seeds(metric) for name, metric in columns.items()}

print("%-18s" % 'loss' + ''.join("%12s" % name for name in columns))
for loss in arms:
    key = (loss, 1.0)
    print("%-18s" % loss + ''.join(
        "%12.4f" % table[name][key] if key in table[name] else "%12s" % '-' for name in columns
    ))
