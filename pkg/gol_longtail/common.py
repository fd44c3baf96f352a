import os
import math
import csv
import json
import hashlib
from copy import deepcopy

import yaml

from gol_longtail import TEMPLATE_DIR


EXIT_CODES = {
    'SUCCESS': 0,
    'CHECK_FAILED': 1,
    'INPUT_ERROR': 2,
    'DIVERGENCE': 3,
}

# config sections besides the training options
CONFIG_SECTIONS = ('data', 'model', 'train', 'groups', 'stage2', 'experiment')


class InputError(ValueError):
    """Invalid input: bad arguments, unparsable or inconsistent files"""
    exit_status = EXIT_CODES['INPUT_ERROR']


class DivergenceError(RuntimeError):
    """Non-finite loss met while training"""
    exit_status = EXIT_CODES['DIVERGENCE']


def get_template(template='default.yml'):
    """
    Templates present the permanent experiment setup
    """
    template_loc = os.path.join(TEMPLATE_DIR, template)
    if not os.path.exists(template_loc):
        template_loc = template

    if not os.path.exists(template_loc):
        raise InputError("%s: no such template or file" % template)

    return read_structured(template_loc)


def read_structured(path):
    """
    Reads a JSON or a YAML document, by extension
    """
    try:
        with open(path) as f:
            if str(path).endswith(".json"):
                return json.load(f)
            return yaml.load(f.read(), Loader=yaml.SafeLoader)
    except OSError as ex:
        raise InputError("%s: %s" % (path, ex.strerror))
    except json.JSONDecodeError as ex:
        raise InputError("%s: invalid JSON: %s" % (path, ex))
    except yaml.YAMLError as ex:
        raise InputError("%s: %s" % (path, str(ex).replace('\n', ' ')))


def recursive_update(target, changes):
    """
    Updates the nested dict in place, returns it for convenience
    """
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(target.get(key), dict):
            recursive_update(target[key], value)
        else:
            target[key] = deepcopy(value)
    return target


def load_config(changes=None, template='default.yml'):
    """
    Merges the user options over the template;
    a flat dict of training options is put under `train`
    """
    config = get_template(template)
    if not changes:
        changes = {}
    if not isinstance(changes, dict):
        raise InputError("config: expected a mapping, got %s" % type(changes).__name__)

    changes = deepcopy(changes)
    flat = {k: changes.pop(k) for k in list(changes) if k not in CONFIG_SECTIONS}
    if flat:
        changes.setdefault('train', {})
        if not isinstance(changes['train'], dict):
            raise InputError("config.train: expected a mapping")
        changes['train'].update(flat)

    recursive_update(config, changes)

    seed = os.getenv('GOL_SEED')
    if seed:
        try:
            seed = int(seed)
        except ValueError:
            raise InputError("GOL_SEED: not an integer: %s" % seed)
        config['train']['seed'] = seed
        config['data']['seed'] = seed

    return config


def write_json(path, obj):
    with open(path, 'w') as f:
        json.dump(obj, f, indent=2, sort_keys=True, allow_nan=False)


def write_csv(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def checksum(obj, cs=hashlib.md5):
    """
    Digest of the canonical JSON representation
    """
    return cs(json.dumps(obj, sort_keys=True, allow_nan=False).encode('utf-8')).hexdigest()


def to_jsonable(value):
    """
    Converts numpy scalars and arrays, non-finite floats become None
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if hasattr(value, 'tolist'):
        return to_jsonable(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value
