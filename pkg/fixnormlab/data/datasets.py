import logging
from pathlib import Path

import numpy as np

from fixnormlab.data.readers import CIFAR_CLASSES, read_cifar10, read_idx
from fixnormlab.settings import ConfigError


MNIST_FILES = {
    'train': ('train-images-idx3-ubyte', 'train-labels-idx1-ubyte'),
    'val': ('t10k-images-idx3-ubyte', 't10k-labels-idx1-ubyte'),
    }
MNIST_CLASSES = 10
CIFAR_DIRNAME = 'cifar-10-batches-bin'
CIFAR_FILES = {
    'train': [f'data_batch_{i}.bin' for i in range(1, 6)],
    'val': ['test_batch.bin'],
    }


class Dataset(object):

    def __init__(self, features, labels, classes, split, stats=None):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) == 0:
            raise ConfigError(f'{split} split is empty')
        if len(features) != len(labels):
            raise ConfigError(f'{split}: {len(features)} samples, {len(labels)} labels')
        if labels.min() < 0 or labels.max() >= classes:
            raise ConfigError(f'{split}: labels outside [0, {classes})')
        self.features = features
        self.labels = labels
        self.classes = classes
        self.split = split
        # (mean, std) per channel, once normalized
        self.stats = stats

    def __len__(self):
        return len(self.labels)

    def __repr__(self):
        return (f'<dataset:{self.split} {len(self)} x {list(self.sample_shape)}, '
                f'{self.classes} classes>')

    @property
    def sample_shape(self):
        return self.features.shape[1:]

    def take(self, indices):
        return Dataset(self.features[indices], self.labels[indices],
                       self.classes, self.split, self.stats)

    def head(self, n):
        """The first n samples (all of them when n is 0 or too large)."""
        if n <= 0 or n >= len(self):
            return self
        return self.take(np.arange(n))


def _channel_axes(features):
    return (0,) if features.ndim == 2 else (0,) + tuple(range(2, features.ndim))


def normalize(train, val):
    """Standardize both splits per channel with statistics of the training split."""
    axes = _channel_axes(train.features)
    mean = train.features.mean(axis=axes)
    std = train.features.std(axis=axes)
    std = np.where(std > 0.0, std, 1.0)
    shape = (1, -1) + (1,)*(train.features.ndim - 2)
    def apply(dataset):
        features = (dataset.features - mean.reshape(shape))/std.reshape(shape)
        return Dataset(features, dataset.labels, dataset.classes, dataset.split,
                       stats=(mean, std))
    return apply(train), apply(val)


def inspect_dataset(dataset):
    axes = _channel_axes(dataset.features)
    return {
        'split': dataset.split,
        'samples': len(dataset),
        'shape': list(dataset.sample_shape),
        'classes': dataset.classes,
        'histogram': np.bincount(dataset.labels, minlength=dataset.classes).tolist(),
        'mean': dataset.features.mean(axis=axes).tolist(),
        'std': dataset.features.std(axis=axes).tolist(),
        }


def _find(directory, name):
    for candidate in (directory/name, directory/(name + '.gz')):
        if candidate.exists():
            return candidate
    raise ConfigError(f'data_dir: {name} not found in {directory}')


def load_mnist(data_dir):
    directory = Path(data_dir)
    datasets = []
    for split, (images, labels) in MNIST_FILES.items():
        datasets.append(Dataset(read_idx(_find(directory, images), 'images'),
                                read_idx(_find(directory, labels), 'labels'),
                                MNIST_CLASSES, split))
    return tuple(datasets)


def load_cifar10(data_dir):
    directory = Path(data_dir)
    if (directory/CIFAR_DIRNAME).is_dir():
        directory = directory/CIFAR_DIRNAME
    datasets = []
    for split, names in CIFAR_FILES.items():
        parts = [read_cifar10(_find(directory, name)) for name in names]
        datasets.append(Dataset(np.concatenate([images for images, _ in parts]),
                                np.concatenate([labels for _, labels in parts]),
                                CIFAR_CLASSES, split))
    return tuple(datasets)


def load_datasets(config):
    """Build the normalized (train, val) pair a training config refers to."""
    from fixnormlab.data.synth import gen_blobs, SynthSpec
    if config.dataset == 'blobs':
        train, val = gen_blobs(SynthSpec(
            classes=config.blob_classes, dim=config.blob_dim,
            separation=config.blob_separation, sigma=config.blob_sigma,
            samples_per_class=config.blob_samples, seed=config.data_seed,
            image_side=config.blob_image_side))
    elif config.dataset == 'mnist':
        train, val = load_mnist(config.data_dir)
    elif config.dataset == 'cifar10':
        train, val = load_cifar10(config.data_dir)
    else:
        raise ConfigError(f'dataset: unknown dataset {config.dataset}')
    train = train.head(config.train_subset)
    logging.info(f'Loaded {train!r} and {val!r}')
    return normalize(train, val)
