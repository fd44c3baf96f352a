"""
COCO/LVIS-style annotation tables and the spatial object distributions
over a normalized grid: occurrence P(obj,u), class membership P(y|obj,u)
and their product, the joint P(y,u)
"""
import csv
import json
import numbers
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from gol_longtail.common import InputError, write_csv


GRID_KINDS = ('occurrence', 'membership', 'joint')

Image = namedtuple("Image", field_names="id, width, height")
Category = namedtuple("Category", field_names="id, name")
AnnotatedObject = namedtuple("AnnotatedObject", field_names="image_id, category_id, cx, cy")


@dataclass
class AnnotationTable:
    images: tuple
    objects: tuple
    categories: tuple
    # optional per-object feature vectors, row i belongs to objects[i]
    features: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self._image_index = {img.id: n for n, img in enumerate(self.images)}
        self._category_index = {cat.id: n for n, cat in enumerate(self.categories)}

    @property
    def object_count(self):
        return len(self.objects)

    @property
    def category_ids(self):
        return [cat.id for cat in self.categories]

    def category_index(self, category_id):
        if category_id not in self._category_index:
            raise InputError("unknown category_id %s" % category_id)
        return self._category_index[category_id]

    def labels(self):
        """
        Category index of every object
        """
        return np.array([self._category_index[obj.category_id] for obj in self.objects], dtype=int)

    def normalized_centers(self):
        sizes = np.array([self.images[self._image_index[obj.image_id]][1:] for obj in self.objects],
                         dtype=float).reshape(-1, 2)
        centers = np.array([(obj.cx, obj.cy) for obj in self.objects], dtype=float).reshape(-1, 2)
        return centers[:, 0] / sizes[:, 0], centers[:, 1] / sizes[:, 1]

    def with_features(self, features):
        features = np.asarray(features, dtype=float)
        assert len(features) == self.object_count, "One feature vector per object expected"
        return AnnotationTable(self.images, self.objects, self.categories, features=features)


@dataclass
class SpatialGrid:
    cells: np.ndarray
    kind: str
    category_id: Optional[int] = None
    # cells where the value is defined, membership grids only
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise InputError("unknown grid kind %s" % self.kind)
        self.cells = np.asarray(self.cells, dtype=float)
        if self.cells.ndim != 2:
            raise InputError("grid cells must be a matrix")

    @property
    def grid_h(self):
        return self.cells.shape[0]

    @property
    def grid_w(self):
        return self.cells.shape[1]


# parsing

def _number(value, path, positive=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InputError("%s: expected a finite number, got %r" % (path, value))
    if positive and value <= 0:
        raise InputError("%s: expected a positive number, got %r" % (path, value))
    return value


def _identifier(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise InputError("%s: expected an integer or string id, got %r" % (path, value))
    return value


def _require(item, key, path):
    if not isinstance(item, dict):
        raise InputError("%s: expected an object" % path)
    if key not in item:
        raise InputError("%s: missing key '%s'" % (path, key))
    return item[key]


def parse_annotations(data):
    """
    Builds the table from COCO/LVIS JSON (bytes or str);
    object centers are (x + w/2, y + h/2) of the bbox
    """
    if isinstance(data, bytes):
        try:
            data = data.decode('utf-8')
        except UnicodeDecodeError as ex:
            raise InputError("$: not UTF-8: %s" % ex)
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as ex:
        raise InputError("$: invalid JSON: %s" % ex)
    if not isinstance(doc, dict):
        raise InputError("$: expected an object")
    for key in ('images', 'annotations', 'categories'):
        if not isinstance(_require(doc, key, '$'), list):
            raise InputError("%s: expected an array" % key)

    images, seen = [], set()
    for n, item in enumerate(doc['images']):
        path = 'images[%s]' % n
        img_id = _identifier(_require(item, 'id', path), path + '.id')
        if img_id in seen:
            raise InputError("%s.id: duplicate image id %s" % (path, img_id))
        seen.add(img_id)
        images.append(Image(
            img_id,
            _number(_require(item, 'width', path), path + '.width', positive=True),
            _number(_require(item, 'height', path), path + '.height', positive=True)
        ))

    categories, seen = [], set()
    for n, item in enumerate(doc['categories']):
        path = 'categories[%s]' % n
        cat_id = _identifier(_require(item, 'id', path), path + '.id')
        if cat_id in seen:
            raise InputError("%s.id: duplicate category id %s" % (path, cat_id))
        seen.add(cat_id)
        categories.append(Category(cat_id, str(item.get('name', cat_id))))

    sizes = {img.id: (img.width, img.height) for img in images}
    objects, features = [], []
    for n, item in enumerate(doc['annotations']):
        path = 'annotations[%s]' % n
        img_id = _identifier(_require(item, 'image_id', path), path + '.image_id')
        if img_id not in sizes:
            raise InputError("%s.image_id: unknown image_id %s" % (path, img_id))
        cat_id = _identifier(_require(item, 'category_id', path), path + '.category_id')
        if cat_id not in seen:
            raise InputError("%s.category_id: unknown category_id %s" % (path, cat_id))
        bbox = _require(item, 'bbox', path)
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise InputError("%s.bbox: expected [x, y, w, h]" % path)
        x, y, w, h = [_number(v, '%s.bbox[%s]' % (path, k)) for k, v in enumerate(bbox)]
        cx, cy = x + w / 2, y + h / 2
        width, height = sizes[img_id]
        if not (0 <= cx <= width and 0 <= cy <= height):
            raise InputError("%s.bbox: out-of-bounds center (%s, %s) for image %s of %sx%s" % (
                path, cx, cy, img_id, width, height))
        objects.append(AnnotatedObject(img_id, cat_id, cx, cy))
        if 'feature' in item:
            if not isinstance(item['feature'], list):
                raise InputError("%s.feature: expected an array" % path)
            features.append([_number(v, '%s.feature' % path) for v in item['feature']])

    if features and len(features) != len(objects):
        raise InputError("annotations: features given for %s of %s objects" % (len(features), len(objects)))

    return AnnotationTable(tuple(images), tuple(objects), tuple(categories),
                           features=np.array(features, dtype=float) if features else None)


def serialize_annotations(table):
    """
    COCO-style dict; each object becomes a zero-size bbox at its center
    """
    annotations = []
    for n, obj in enumerate(table.objects):
        ann = {'id': n + 1, 'image_id': obj.image_id, 'category_id': obj.category_id,
               'bbox': [obj.cx, obj.cy, 0, 0]}
        if table.features is not None:
            ann['feature'] = table.features[n].tolist()
        annotations.append(ann)
    return {
        'images': [{'id': img.id, 'width': img.width, 'height': img.height} for img in table.images],
        'annotations': annotations,
        'categories': [{'id': cat.id, 'name': cat.name} for cat in table.categories],
    }


def synthesize_table(n_images, n_objects, n_categories, rng, max_size=640):
    """
    Random table with integer image sizes and uniformly placed centers
    """
    sizes = rng.integers(16, max_size + 1, size=(n_images, 2))
    images = tuple(Image(n + 1, int(w), int(h)) for n, (w, h) in enumerate(sizes))
    categories = tuple(Category(n + 1, 'category_%s' % (n + 1)) for n in range(n_categories))
    owners = rng.integers(0, n_images, size=n_objects)
    labels = rng.integers(0, n_categories, size=n_objects)
    objects = tuple(
        AnnotatedObject(images[i].id, categories[c].id,
                        float(rng.uniform(0, images[i].width)), float(rng.uniform(0, images[i].height)))
        for i, c in zip(owners, labels)
    )
    return AnnotationTable(images, objects, categories)


# grids

def _check_grid(grid_h, grid_w):
    if grid_h < 1 or grid_w < 1:
        raise InputError("grid dimensions must be positive, got %sx%s" % (grid_h, grid_w))


def cell_indices(table, grid_h, grid_w):
    """
    Row and column of every object center; the normalized boundary 1.0 maps to the last cell
    """
    _check_grid(grid_h, grid_w)
    nx, ny = table.normalized_centers()
    rows = np.minimum(np.floor(ny * grid_h).astype(int), grid_h - 1)
    cols = np.minimum(np.floor(nx * grid_w).astype(int), grid_w - 1)
    return rows, cols


def _count(rows, cols, grid_h, grid_w, weights=None):
    counts = np.zeros((grid_h, grid_w))
    np.add.at(counts, (rows, cols), 1. if weights is None else weights)
    return counts


def occurrence_grid(table, grid_h, grid_w):
    """
    P(obj,u): share of all M object centers falling into cell u
    """
    rows, cols = cell_indices(table, grid_h, grid_w)
    if not table.object_count:
        raise InputError("no objects")
    return SpatialGrid(_count(rows, cols, grid_h, grid_w) / table.object_count, 'occurrence')


def membership_grid(table, category_id, grid_h, grid_w):
    """
    P(y|obj,u): share of class y among the centers in cell u;
    empty cells are 0 and masked out
    """
    y = table.category_index(category_id)
    rows, cols = cell_indices(table, grid_h, grid_w)
    total = _count(rows, cols, grid_h, grid_w)
    of_class = _count(rows, cols, grid_h, grid_w, weights=(table.labels() == y).astype(float))
    defined = total > 0
    cells = np.where(defined, of_class / np.where(defined, total, 1.), 0.)
    return SpatialGrid(cells, 'membership', category_id=category_id, mask=defined)


def joint_grid(table, category_id, grid_h, grid_w):
    """
    P(y,u) = P(y|obj,u) P(obj,u), evaluated as (class-y centers in u) / M
    """
    y = table.category_index(category_id)
    rows, cols = cell_indices(table, grid_h, grid_w)
    if not table.object_count:
        raise InputError("no objects")
    of_class = _count(rows, cols, grid_h, grid_w, weights=(table.labels() == y).astype(float))
    return SpatialGrid(of_class / table.object_count, 'joint', category_id=category_id)


def weighted_joint_grid(table, category_id, weights, grid_h, grid_w):
    """
    Joint grid with per-object class weights in place of the membership indicator
    """
    rows, cols = cell_indices(table, grid_h, grid_w)
    if not table.object_count:
        raise InputError("no objects")
    cells = _count(rows, cols, grid_h, grid_w, weights=np.asarray(weights, dtype=float))
    return SpatialGrid(cells / table.object_count, 'joint', category_id=category_id)


def all_grids(table, grid_h, grid_w):
    """
    Occurrence plus membership and joint grids of every category, keyed by file stem
    """
    grids = {'occurrence': occurrence_grid(table, grid_h, grid_w)}
    for cat_id in table.category_ids:
        grids['membership_%s' % cat_id] = membership_grid(table, cat_id, grid_h, grid_w)
        grids['joint_%s' % cat_id] = joint_grid(table, cat_id, grid_h, grid_w)
    return grids


# grid io

def write_grid_csv(grid, path):
    write_csv(path, ('grid_h', 'grid_w', 'kind'),
              [(grid.grid_h, grid.grid_w, grid.kind)] + [[float(v) for v in row] for row in grid.cells])


def read_grid_csv(path):
    try:
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
    except OSError as ex:
        raise InputError("%s: %s" % (path, ex.strerror))
    if len(rows) < 2 or rows[0] != ['grid_h', 'grid_w', 'kind']:
        raise InputError("%s: expected the header grid_h,grid_w,kind" % path)
    try:
        grid_h, grid_w, kind = int(rows[1][0]), int(rows[1][1]), rows[1][2]
        cells = np.array([[float(v) for v in row] for row in rows[2:]], dtype=float)
    except (ValueError, IndexError) as ex:
        raise InputError("%s: %s" % (path, ex))
    if cells.shape != (grid_h, grid_w):
        raise InputError("%s: %s cell rows do not match %sx%s" % (path, cells.shape, grid_h, grid_w))
    return SpatialGrid(cells, kind)


def grid_to_dict(grid):
    out = {'grid_h': grid.grid_h, 'grid_w': grid.grid_w, 'kind': grid.kind,
           'category_id': grid.category_id, 'cells': grid.cells.tolist()}
    if grid.mask is not None:
        out['mask'] = grid.mask.tolist()
    return out


def grid_from_dict(doc, path='$'):
    try:
        cells = np.array(doc['cells'], dtype=float)
        grid = SpatialGrid(cells, doc.get('kind', 'joint'), category_id=doc.get('category_id'))
    except (KeyError, TypeError, ValueError) as ex:
        raise InputError("%s: not a grid: %s" % (path, ex))
    if (grid.grid_h, grid.grid_w) != (doc.get('grid_h', grid.grid_h), doc.get('grid_w', grid.grid_w)):
        raise InputError("%s: cells do not match grid_h x grid_w" % path)
    return grid


def read_grid(path):
    """
    Grid from a CSV or JSON file, by extension
    """
    if str(path).endswith('.json'):
        try:
            with open(path) as f:
                doc = json.load(f)
        except OSError as ex:
            raise InputError("%s: %s" % (path, ex.strerror))
        except json.JSONDecodeError as ex:
            raise InputError("%s: invalid JSON: %s" % (path, ex))
        return grid_from_dict(doc, path)
    return read_grid_csv(path)
