
import numpy as np
import pytest

from gol_longtail.tests import TEST_DIR


@pytest.fixture
def annotations_10():
    from gol_longtail.annotations import parse_annotations
    with open(TEST_DIR / 'data' / 'annotations_10.json', 'rb') as f:
        return parse_annotations(f.read())


@pytest.fixture
def freq_table():
    """five classes over 200 images: two rare, two common, one frequent"""
    from gol_longtail.datasets import ClassFrequencyTable
    counts = [2, 8, 40, 90, 150]
    return ClassFrequencyTable(counts, counts, 200)


@pytest.fixture
def toy_dataset():
    from gol_longtail.datasets import make_longtail
    return make_longtail(5, 10, 60, feature_dim=4, seed=0, separation=3.0)


def brute_force_counts(table, grid_h, grid_w, category_id=None):
    """
    Counts centers per cell by testing every object against every row and column band
    """
    sizes = {img.id: (img.width, img.height) for img in table.images}
    objects = [obj for obj in table.objects if category_id is None or obj.category_id == category_id]
    nx = np.array([obj.cx / sizes[obj.image_id][0] for obj in objects], dtype=float)
    ny = np.array([obj.cy / sizes[obj.image_id][1] for obj in objects], dtype=float)

    def bands(norm, n):
        scaled = norm * n
        idx = np.arange(n)[:, None]
        inside = (idx <= scaled) & (scaled < idx + 1)
        inside[n - 1] |= scaled >= n
        return inside.astype(float)

    return bands(ny, grid_h) @ bands(nx, grid_w).T


def random_table(rng, max_objects=200, max_categories=6):
    from gol_longtail.annotations import synthesize_table
    return synthesize_table(
        n_images=int(rng.integers(1, 6)),
        n_objects=int(rng.integers(1, max_objects + 1)),
        n_categories=int(rng.integers(1, max_categories + 1)),
        rng=rng
    )


class FixedModel(object):
    """A stand-in model giving preset class probabilities"""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)

    def predict_proba(self, features):
        assert len(features) == len(self.probs)
        return self.probs
