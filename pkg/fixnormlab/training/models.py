"""Reference networks and the parameter groups each training mode needs."""
import logging

from fixnormlab.layers.blocks import BatchNorm, Conv2d, GlobalAvgPool, Linear, ReLU
from fixnormlab.layers.heads import Fc, FixNormFc, WnFc
from fixnormlab.layers.layer import Network
from fixnormlab.optim.sgd import ParamGroup
from fixnormlab.settings import ConfigError, MODES


MLP_WIDTH = 32
MLP_DEPTH = 2
CNN_CHANNELS = (16, 32, 64)
CNN_STRIDES = (1, 2, 2)

# group holding the weights whose norm is tracked in the metrics
CONV_GROUP = 'conv'
FC_GROUP = 'fc'
JOINT_GROUP = 'conv+fc'
FREE_GROUP = 'free'


def _mlp_body(in_shape, rng):
    if len(in_shape) != 1:
        raise ConfigError(f'model: mlp-blobs needs flat features, got shape {list(in_shape)}')
    body = []
    width = in_shape[0]
    for i in range(MLP_DEPTH):
        body += [Linear(f'linear{i}', width, MLP_WIDTH, rng),
                 BatchNorm(f'bn{i}', MLP_WIDTH),
                 ReLU(f'relu{i}')]
        width = MLP_WIDTH
    return body, width


def _cnn_body(in_shape, rng):
    if len(in_shape) != 3:
        raise ConfigError(f'model: cnn-small needs [C, H, W] images, got shape {list(in_shape)}')
    body = []
    channels = in_shape[0]
    for i, (out, stride) in enumerate(zip(CNN_CHANNELS, CNN_STRIDES)):
        body += [Conv2d(f'conv{i}', channels, out, 3, rng, stride=stride, padding=1),
                 BatchNorm(f'bn{i}', out),
                 ReLU(f'relu{i}')]
        channels = out
    body.append(GlobalAvgPool('gap'))
    return body, channels


PRESET_BODIES = {
    'mlp-blobs': _mlp_body,
    'cnn-small': _cnn_body,
    }


def make_head(mode, in_features, classes, rng, alpha):
    if mode in ('WD', 'ALGO1'):
        return Fc('fc', in_features, classes, rng)
    elif mode == 'WN_FC':
        return WnFc('fc', in_features, classes, rng)
    elif mode == 'FIXNORM_FC':
        return FixNormFc('fc', in_features, classes, rng, alpha)
    else:
        raise ConfigError(f'mode: expected one of {", ".join(MODES)}, got {mode}')


def make_groups(network, mode, weight_decay=0.0, fc_weight_decay=0.0):
    """Split the parameters into the optimizer groups of a training mode.

    Body weights are the layers called "conv" throughout (the hidden linear
    maps of mlp-blobs play the same role). Biases, BN affines and gains are
    never decayed nor norm-fixed.
    """
    body_weights = sum([layer.weights for layer in network.body], [])
    head_weights = list(network.head.weights)
    free = sum([layer.extras for layer in network.layers], [])

    if mode == 'WD':
        groups = [ParamGroup(CONV_GROUP, body_weights, weight_decay=weight_decay),
                  ParamGroup(FC_GROUP, head_weights, weight_decay=weight_decay)]
    elif mode == 'ALGO1':
        groups = [ParamGroup(CONV_GROUP, body_weights, norm_fixed=True),
                  ParamGroup(FC_GROUP, head_weights, weight_decay=fc_weight_decay)]
    elif mode in ('WN_FC', 'FIXNORM_FC'):
        groups = [ParamGroup(JOINT_GROUP, body_weights + head_weights, norm_fixed=True)]
    else:
        raise ConfigError(f'mode: expected one of {", ".join(MODES)}, got {mode}')
    groups.append(ParamGroup(FREE_GROUP, free))
    return groups


def build_model(preset, mode, alpha, rng, in_shape, classes,
                weight_decay=0.0, fc_weight_decay=0.0):
    """Build a preset network with the head of `mode` and its parameter groups.

    Returns (network, groups).
    """
    if preset not in PRESET_BODIES:
        raise ConfigError(f'model: unknown preset {preset}')
    body, features = PRESET_BODIES[preset](tuple(in_shape), rng)
    head = make_head(mode, features, classes, rng, alpha)
    network = Network(body, head)
    groups = make_groups(network, mode, weight_decay=weight_decay,
                         fc_weight_decay=fc_weight_decay)
    logging.debug(f'Built {preset} for {mode}: {groups}')
    return network, groups


def tracked_group(groups):
    """The group whose joint norm the metrics report."""
    for name in (JOINT_GROUP, CONV_GROUP):
        for group in groups:
            if group.name == name:
                return group
    raise ConfigError('model: no conv group to track')
