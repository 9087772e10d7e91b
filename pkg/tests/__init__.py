import dataclasses
import os
from types import SimpleNamespace

import numpy as np

from fixnormlab.autodiff.tensor import Tensor
from fixnormlab.data.datasets import normalize
from fixnormlab.data.synth import gen_blobs, SynthSpec
from fixnormlab.settings import TrainConfig


SLOW = os.environ.get('FIXNORMLAB_SLOW', '') != ''
NETWORK = os.environ.get('FIXNORMLAB_NETWORK', '') != ''


def get_test_spec(**overrides):
    spec = SynthSpec(classes=3, dim=8, separation=4.0, sigma=1.0,
                     samples_per_class=40, seed=0)
    return dataclasses.replace(spec, **overrides)


def get_test_blobs(**overrides):
    """Normalized (train, val) pair of small blobs: 96 train, 24 val samples."""
    return normalize(*gen_blobs(get_test_spec(**overrides)))


def get_test_image_blobs(**overrides):
    """Blobs shaped as 1x4x4 images, for cnn-small."""
    return get_test_blobs(dim=16, image_side=4, **overrides)


def get_test_config(**overrides):
    """A training config that runs in well under a second on the test blobs."""
    config = TrainConfig(
        mode='FIXNORM_FC', lr=0.2, alpha=1.0, label_smoothing=0.1, epochs=3,
        batch_size=16, warmup_epochs=1, seed=0, model='mlp-blobs',
        mcbr_samples=64, dataset='blobs', blob_classes=3, blob_dim=8,
        blob_separation=4.0, blob_sigma=1.0, blob_samples=40)
    return dataclasses.replace(config, **overrides)


def get_test_image_config(**overrides):
    config = get_test_config(model='cnn-small', blob_dim=16, blob_image_side=4)
    return dataclasses.replace(config, **overrides)


def random_tensor(rng, shape, requires_grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=requires_grad)


def weights(W, g, alpha=None, **kwargs):
    """Stand-in for a head layer: anything with W, g (and alpha) attributes."""
    return SimpleNamespace(W=Tensor(W) if not isinstance(W, Tensor) else W,
                           g=Tensor(g) if not isinstance(g, Tensor) else g,
                           alpha=alpha, **kwargs)


class FixedLogits(object):
    """Network stub whose logits are the given rows, in dataset order."""

    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=np.float64)
        self._start = 0

    def forward(self, x, training):
        rows = self.logits[self._start:self._start + x.shape[0]]
        self._start = (self._start + x.shape[0]) % len(self.logits)
        return Tensor(rows), None
