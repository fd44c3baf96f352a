"""
keep bundled templates in a throwaway folder and provide a work dir
"""
import os
import tempfile

# must precede the first package import
os.environ.setdefault('GOL_TEMPLATE_DIR', tempfile.mkdtemp())
os.environ.pop('GOL_SEED', None)

import pytest


def pytest_configure(config):
    config.addinivalue_line('markers', "slow: multi-seed runs on the standard synthetic config, deselect with -m 'not slow'")


@pytest.fixture(scope='function')
def out_dir(tmp_path):
    """a fresh output folder per test"""
    return str(tmp_path)
