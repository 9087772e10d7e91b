from dataclasses import dataclass

import numpy as np

from fixnormlab.data.datasets import Dataset
from fixnormlab.settings import ConfigError


TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class SynthSpec:
    classes: int
    dim: int
    separation: float
    sigma: float
    samples_per_class: int
    seed: int = 0
    image_side: int = 0

    def validate(self):
        if self.classes < 2:
            raise ConfigError(f'blob_classes: need at least 2, got {self.classes}')
        if self.dim < self.classes - 1:
            raise ConfigError(f'blob_dim: {self.classes} simplex means need at '
                              f'least {self.classes - 1} dimensions')
        if not self.sigma > 0.0:
            raise ConfigError(f'blob_sigma: must be positive, got {self.sigma}')
        if self.samples_per_class < 2:
            raise ConfigError('blob_samples: need at least 2 per class')
        if self.image_side and self.image_side**2 != self.dim:
            raise ConfigError('blob_image_side: its square must equal blob_dim')
        return self


def blob_means(spec):
    """Vertices of a regular simplex centered at 0, at distance `separation`.

    Returns [C, D]; the simplex lives in the first C - 1 coordinates.
    """
    classes = spec.classes
    vertices = np.eye(classes) - 1.0/classes
    _, _, vt = np.linalg.svd(vertices)
    coords = vertices @ vt[:classes - 1].T
    coords /= np.linalg.norm(coords, axis=1, keepdims=True)
    means = np.zeros((classes, spec.dim))
    means[:, :classes - 1] = spec.separation*coords
    return means


def gen_blobs(spec):
    """Isotropic Gaussian clusters, split 80/20 per class into (train, val)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    means = blob_means(spec)
    n_train = int(round(TRAIN_FRACTION*spec.samples_per_class))
    n_train = min(max(n_train, 1), spec.samples_per_class - 1)

    splits = {'train': ([], []), 'val': ([], [])}
    for c in range(spec.classes):
        points = means[c] + spec.sigma*rng.standard_normal(
            (spec.samples_per_class, spec.dim))
        for split, rows in (('train', points[:n_train]), ('val', points[n_train:])):
            splits[split][0].append(rows)
            splits[split][1].append(np.full(len(rows), c, dtype=np.int64))

    datasets = []
    for split in ('train', 'val'):
        features = np.concatenate(splits[split][0])
        labels = np.concatenate(splits[split][1])
        order = rng.permutation(len(labels))
        features, labels = features[order], labels[order]
        if spec.image_side:
            features = features.reshape(-1, 1, spec.image_side, spec.image_side)
        datasets.append(Dataset(features, labels, spec.classes, split))
    return tuple(datasets)
