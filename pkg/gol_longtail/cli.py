"""
Command-line entry point: gol <command> [options]
Exit status 0 on success, 1 on a failed gradient check,
2 on usage or parse errors, 3 on numerical divergence
"""
import os
import sys
import json
import logging
import argparse

from gol_longtail import __version__
from gol_longtail.common import EXIT_CODES, InputError, DivergenceError, get_template, \
    read_structured, write_json, write_csv, to_jsonable
from gol_longtail.gradcheck import DEFAULT_GRID, TOLERANCE, LOSS_CASES, check_loss, passed
from gol_longtail.initialization import solve_bias, initial_total_gradient
from gol_longtail.annotations import parse_annotations, all_grids, write_grid_csv, grid_to_dict, read_grid
from gol_longtail.analysis import kl_divergence, summarize, DEFAULT_EPS
from gol_longtail.trainer import RunReport
from gol_longtail.workflows import SyntheticWorkflow, AnnotatedWorkflow


logger = logging.getLogger(__name__)

SINGLE_RUN = {'experiment': {'arms': None, 'seeds': None, 'sigmas': None}}


def _floats(value):
    try:
        return [float(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("comma-separated numbers expected, got %s" % value)


def _grid(value):
    """
    32 or 32x16 (rows x columns)
    """
    try:
        dims = [int(v) for v in value.lower().split('x')]
    except ValueError:
        raise argparse.ArgumentTypeError("grid size like 32 or 32x16 expected, got %s" % value)
    if len(dims) == 1:
        dims *= 2
    if len(dims) != 2 or min(dims) < 1:
        raise argparse.ArgumentTypeError("positive grid size expected, got %s" % value)
    return tuple(dims)


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _user_config(path):
    config = get_template(path) if path else {}
    if config is None:
        config = {}
    if not isinstance(config, dict):
        raise InputError("%s: expected a mapping" % path)
    return config


def _workflow(config, template='default'):
    cls = AnnotatedWorkflow if (config.get('data') or {}).get('annotations') else SyntheticWorkflow
    return cls(config, template=template)


def grad_check(args):
    rows = check_loss(args.loss, grid=args.grid, sigma=args.sigma)
    out = _out_dir(args.out)
    write_csv(os.path.join(out, 'gradcheck_%s.csv' % args.loss), rows[0]._fields, rows)
    worst = max(row.rel_error for row in rows)
    print("%s: %s points, max relative error %.3e" % (args.loss, len(rows), worst))
    return EXIT_CODES['SUCCESS'] if passed(rows, TOLERANCE) else EXIT_CODES['CHECK_FAILED']


def init_solve(args):
    bias = solve_bias(args.classes, args.sigma)
    residual = abs(initial_total_gradient(args.classes, bias, args.sigma))
    print("b = %.6f" % bias)
    print("residual gradient = %.3e" % residual)
    return EXIT_CODES['SUCCESS']


def _write_run(out, report):
    write_json(os.path.join(out, 'report.json'), report.to_dict())
    rows = []
    lr = report.config['lr']
    for n, loss in enumerate(report.epoch_loss):
        rows.append((n + 1, 1, loss, lr))
    stage2 = report.config.get('stage2') or {}
    for n, loss in enumerate(report.stage2_epoch_loss):
        rows.append((n + 1, 2, loss, stage2.get('lr')))
    write_csv(os.path.join(out, 'metrics.csv'), ('epoch', 'stage', 'loss', 'base_lr'), rows)


def _write_spatial(out, workflow):
    grid_h, grid_w = workflow.grid_size()
    record = workflow.results[0]
    grid_dir = _out_dir(os.path.join(out, 'grids'))
    for name, grid in workflow.spatial_grids(record, grid_h, grid_w).items():
        write_grid_csv(grid, os.path.join(grid_dir, name + '.csv'))
    divergences = workflow.spatial_kl(record, grid_h, grid_w)
    write_json(os.path.join(out, 'spatial_kl.json'),
               {str(cat_id): result._asdict() for cat_id, result in divergences.items()})


def train_cmd(args):
    config = _user_config(args.config)
    workflow = _workflow(dict(config, **SINGLE_RUN))
    workflow.run()
    report = workflow.results[0].report
    out = _out_dir(args.out)
    _write_run(out, report)
    if isinstance(workflow, AnnotatedWorkflow):
        _write_spatial(out, workflow)
    for key, value in summarize(report).items():
        print("%s: %s" % (key, value))
    return EXIT_CODES['SUCCESS']


def dist(args):
    try:
        with open(args.annotations, 'rb') as f:
            data = f.read()
    except OSError as ex:
        raise InputError("%s: %s" % (args.annotations, ex.strerror))
    try:
        table = parse_annotations(data)
    except InputError as ex:
        raise InputError("%s: %s" % (args.annotations, ex))

    grid_h, grid_w = args.grid
    grids = all_grids(table, grid_h, grid_w)
    out = _out_dir(os.path.join(args.out, 'grids'))
    for name, grid in grids.items():
        write_grid_csv(grid, os.path.join(out, name + '.csv'))
    write_json(os.path.join(args.out, 'grids.json'), {name: grid_to_dict(grid) for name, grid in grids.items()})
    print("%s objects, %s categories, %sx%s grid: %s grids written to %s" % (
        table.object_count, len(table.categories), grid_h, grid_w, len(grids), out))
    return EXIT_CODES['SUCCESS']


def kl(args):
    result = kl_divergence(read_grid(args.p), read_grid(args.q), args.eps)
    out = _out_dir(args.out)
    write_json(os.path.join(out, 'kl.json'), dict(result._asdict(), p=args.p, q=args.q))
    print("%s = %.6g nats" % (result.direction, result.value))
    return EXIT_CODES['SUCCESS']


def sweep_sigma(args):
    config = _user_config(args.config)
    for sigma in args.values:
        if not sigma > 0:
            raise InputError("--values: temperature sigma must be positive, got %s" % sigma)
    config['experiment'] = {'sigmas': args.values}
    workflow = _workflow(config, template='sweep')
    workflow.run()

    header = ('sigma', 'seed', 'overall_accuracy', 'instance_accuracy', 'rare', 'common', 'frequent')
    rows = [(rec.sigma, rec.seed, rec.report.overall_accuracy, rec.report.instance_accuracy,
             rec.report.group_accuracy['rare'], rec.report.group_accuracy['common'],
             rec.report.group_accuracy['frequent']) for rec in workflow.results]
    out = _out_dir(args.out)
    write_csv(os.path.join(out, 'sweep.csv'), header, rows)
    for row in rows:
        print("sigma %.2f seed %s: overall %.4f, rare %s" % (row[0], row[1], row[2], row[4]))
    return EXIT_CODES['SUCCESS']


def report_cmd(args):
    doc = read_structured(args.path)
    report = RunReport.from_dict(doc, path=args.path)
    summary = summarize(report)
    if 'checksum' in doc and doc['checksum'] != report.checksum():
        logger.warning("%s: checksum mismatch, the report was edited", args.path)
    print(json.dumps(to_jsonable(summary), indent=2, sort_keys=True))
    return EXIT_CODES['SUCCESS']


def get_parser():
    parser = argparse.ArgumentParser(prog='gol', description="Gumbel activation for long-tailed classification")
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('-v', '--verbose', action='count', default=0, help="-v for INFO, -vv for DEBUG")
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    cmd = commands.add_parser('grad-check', help="analytic vs finite-difference gradients")
    cmd.add_argument('--loss', required=True, choices=sorted(LOSS_CASES))
    cmd.add_argument('--grid', type=_floats, default=list(DEFAULT_GRID), help="score grid, e.g. -4,0,10")
    cmd.add_argument('--sigma', type=float, default=1.0)
    cmd.add_argument('--out', default='.')
    cmd.set_defaults(func=grad_check)

    cmd = commands.add_parser('init-solve', help="zero-gradient classifier bias")
    cmd.add_argument('--classes', type=int, required=True)
    cmd.add_argument('--sigma', type=float, default=1.0)
    cmd.set_defaults(func=init_solve)

    cmd = commands.add_parser('train', help="train and evaluate on a config")
    cmd.add_argument('--config', help="YAML or JSON config, or a bundled template name")
    cmd.add_argument('--out', default='.')
    cmd.set_defaults(func=train_cmd)

    cmd = commands.add_parser('dist', help="spatial object distributions of an annotation file")
    cmd.add_argument('--annotations', required=True)
    cmd.add_argument('--grid', type=_grid, default=(32, 32), help="32 or 32x16 (rows x columns)")
    cmd.add_argument('--out', default='.')
    cmd.set_defaults(func=dist)

    cmd = commands.add_parser('kl', help="KL divergence between two grids (CSV or JSON)")
    cmd.add_argument('--p', required=True, help="ground-truth grid")
    cmd.add_argument('--q', required=True, help="predicted grid")
    cmd.add_argument('--eps', type=float, default=DEFAULT_EPS)
    cmd.add_argument('--out', default='.')
    cmd.set_defaults(func=kl)

    cmd = commands.add_parser('sweep-sigma', help="accuracy over Gumbel temperatures")
    cmd.add_argument('--values', type=_floats, default=[0.8, 0.9, 1.0, 1.1, 1.2])
    cmd.add_argument('--config')
    cmd.add_argument('--out', default='.')
    cmd.set_defaults(func=sweep_sigma)

    cmd = commands.add_parser('report', help="summarize a report.json")
    cmd.add_argument('path')
    cmd.set_defaults(func=report_cmd)

    return parser


def main(argv=None):
    args = get_parser().parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    try:
        return args.func(args)
    except InputError as ex:
        print("error: %s" % ex, file=sys.stderr)
        return ex.exit_status
    except DivergenceError as ex:
        print("error: %s" % ex, file=sys.stderr)
        return ex.exit_status


if __name__ == '__main__':
    sys.exit(main())
