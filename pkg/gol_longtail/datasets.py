"""
Class frequency tables and frequency groups, synthetic long-tailed data,
the stratified train/test split and repeat-factor sampling
"""
from dataclasses import dataclass, field

import numpy as np

from gol_longtail.common import InputError


GROUP_NAMES = ('rare', 'common', 'frequent')

# image-count upper bounds of the rare and common groups
DEFAULT_THRESHOLDS = (10, 100)

TEST_SHARE = 0.2

MEAN_LAYOUTS = ('normal', 'halfnormal')


@dataclass
class ClassFrequencyTable:
    image_count: np.ndarray
    instance_count: np.ndarray
    n_images: int
    thresholds: tuple = DEFAULT_THRESHOLDS

    group_names = GROUP_NAMES

    def __post_init__(self):
        self.image_count = np.asarray(self.image_count, dtype=int)
        self.instance_count = np.asarray(self.instance_count, dtype=int)
        assert self.image_count.shape == self.instance_count.shape, "Class counts do not align"
        rare_max, common_max = self.thresholds
        if not 0 <= rare_max < common_max:
            raise InputError("group thresholds must satisfy 0 <= rare < common, got %s" % (self.thresholds,))
        if self.n_images < 1:
            raise InputError("frequency table of an empty dataset")
        self.thresholds = (int(rare_max), int(common_max))

    @property
    def class_count(self):
        return len(self.image_count)

    @property
    def frequencies(self):
        """
        f_j: share of the images containing class j
        """
        return self.image_count / self.n_images

    @property
    def groups(self):
        rare_max, common_max = self.thresholds
        return np.select(
            [self.image_count <= rare_max, self.image_count <= common_max],
            ['rare', 'common'],
            default='frequent'
        )

    def members(self, group):
        assert group in GROUP_NAMES, "Unknown group %s" % group
        return np.flatnonzero(self.groups == group)

    def to_dict(self):
        return {
            'n_images': int(self.n_images),
            'thresholds': list(self.thresholds),
            'image_count': self.image_count.tolist(),
            'instance_count': self.instance_count.tolist(),
            'groups': self.groups.tolist(),
        }

    @classmethod
    def from_labels(cls, labels, class_count, thresholds=DEFAULT_THRESHOLDS):
        """
        Classification data: every sample is an image with a single instance
        """
        counts = np.bincount(np.asarray(labels, dtype=int), minlength=class_count)
        if len(counts) != class_count:
            raise InputError("label out of range [0, %s)" % class_count)
        return cls(counts, counts.copy(), int(counts.sum()), tuple(thresholds))

    @classmethod
    def from_annotations(cls, table, thresholds=DEFAULT_THRESHOLDS):
        labels = table.labels()
        owners = np.array([obj.image_id for obj in table.objects])
        class_count = len(table.categories)
        instances = np.bincount(labels, minlength=class_count)
        images = np.zeros(class_count, dtype=int)
        for k in range(class_count):
            images[k] = len(np.unique(owners[labels == k]))
        return cls(images, instances, len(table.images), tuple(thresholds))


@dataclass
class SyntheticDataset:
    features: np.ndarray
    labels: np.ndarray
    class_sizes: np.ndarray
    imbalance_factor: float
    # per-class cluster centers, shared by all the subsets
    means: np.ndarray = field(repr=False)

    @property
    def class_count(self):
        return len(self.class_sizes)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def __len__(self):
        return len(self.labels)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        labels = self.labels[indices]
        return SyntheticDataset(
            features=self.features[indices],
            labels=labels,
            class_sizes=np.bincount(labels, minlength=self.class_count),
            imbalance_factor=self.imbalance_factor,
            means=self.means
        )

    def sample_features(self, labels, rng):
        """
        Fresh draws from the class clusters
        """
        labels = np.asarray(labels, dtype=int)
        return self.means[labels] + rng.standard_normal((len(labels), self.feature_dim))


def longtail_sizes(class_count, imbalance_factor, n_head):
    """
    Exponential profile: size of class k is round(n_head IF^(-k/(C-1)))
    """
    if class_count < 2:
        raise InputError("degenerate class count: %s" % class_count)
    if not imbalance_factor >= 1:
        raise InputError("imbalance factor must be at least 1, got %s" % imbalance_factor)
    if n_head < class_count:
        raise InputError("n_head %s is below the class count %s" % (n_head, class_count))
    k = np.arange(class_count)
    sizes = np.round(n_head * float(imbalance_factor) ** (-k / (class_count - 1))).astype(int)
    if np.any(sizes < 1):
        raise InputError("class %s gets no samples: n_head %s too small for imbalance factor %s" % (
            int(np.flatnonzero(sizes < 1)[0]), n_head, imbalance_factor))
    return sizes


def make_longtail(class_count, imbalance_factor, n_head, feature_dim=8, seed=0, separation=1.0,
                  mean_layout='normal'):
    """
    Isotropic unit-variance Gaussian clusters around class means drawn from N(0, separation^2),
    samples ordered by class; the halfnormal layout folds the means into the positive orthant
    """
    if feature_dim < 1:
        raise InputError("feature dimension must be positive, got %s" % feature_dim)
    if not separation > 0:
        raise InputError("class separation must be positive, got %s" % separation)
    if mean_layout not in MEAN_LAYOUTS:
        raise InputError("unknown mean layout %s, expected one of %s" % (mean_layout, ", ".join(MEAN_LAYOUTS)))
    sizes = longtail_sizes(class_count, imbalance_factor, n_head)

    rng = np.random.default_rng(seed)
    means = rng.normal(0., separation, size=(class_count, feature_dim))
    if mean_layout == 'halfnormal':
        means = np.abs(means)
    labels = np.repeat(np.arange(class_count), sizes)
    features = means[labels] + rng.standard_normal((len(labels), feature_dim))
    return SyntheticDataset(features, labels, sizes, float(imbalance_factor), means)


def stratified_split(labels, seed=0, test_share=TEST_SHARE):
    """
    Per class n_test = max(1, round(share n)), never the last training sample;
    returns sorted train and test indices
    """
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for k in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == k))
        n_test = min(max(1, int(round(test_share * len(members)))), len(members) - 1)
        test.append(members[:n_test])
        train.append(members[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def category_repeat_factors(freq, threshold):
    """
    r_c = max(1, sqrt(t / f_c))
    """
    if not 0 < threshold <= 1:
        raise InputError("repeat threshold must be within (0, 1], got %s" % threshold)
    f = freq.frequencies
    if np.any(f == 0):
        raise InputError("category %s has zero frequency" % int(np.flatnonzero(f == 0)[0]))
    return np.maximum(1., np.sqrt(threshold / f))


def repeat_factor_sampler(freq, threshold, image_categories):
    """
    Per-image repeat factor: max r_c over the categories of the image;
    image_categories holds one label per image or a collection of labels per image
    """
    factors = category_repeat_factors(freq, threshold)
    if isinstance(image_categories, np.ndarray) and image_categories.ndim == 1:
        return factors[image_categories.astype(int)]
    return np.array([factors[np.asarray(list(cats), dtype=int)].max() if len(cats) else 1.
                     for cats in image_categories])


def expand_indices(repeat_factors, rng):
    """
    Image i appears floor(r_i) times plus once more with probability frac(r_i)
    """
    repeat_factors = np.asarray(repeat_factors, dtype=float)
    whole = np.floor(repeat_factors)
    extra = rng.random(len(repeat_factors)) < repeat_factors - whole
    return np.repeat(np.arange(len(repeat_factors)), (whole + extra).astype(int))
