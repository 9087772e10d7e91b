"""Binary dataset formats.

IDX (MNIST): big-endian uint32 magic 0x00000803 (images) or 0x00000801
(labels), one big-endian uint32 per dimension, then unsigned bytes.
CIFAR-10: fixed 3073-byte records, one label byte followed by 3072 pixels
stored channel-major (1024 red, 1024 green, 1024 blue).
"""
import gzip
import struct
from pathlib import Path

import numpy as np


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073
CIFAR_SHAPE = (3, 32, 32)
CIFAR_CLASSES = 10


class FormatError(Exception):
    pass


class LengthError(FormatError):
    pass


class LabelRangeError(FormatError):
    pass


def read_bytes(path):
    path = Path(path)
    if path.suffix == '.gz':
        with gzip.open(path, 'rb') as fd:
            return fd.read()
    with open(path, 'rb') as fd:
        return fd.read()


def idx_dims(raw, kind='images'):
    """Check magic and payload length of IDX bytes; return (dims, header size)."""
    expected = IDX_IMAGES_MAGIC if kind == 'images' else IDX_LABELS_MAGIC
    if len(raw) < 4:
        raise LengthError('IDX header truncated')
    magic, = struct.unpack('>I', raw[:4])
    if magic != expected:
        raise FormatError(f'IDX magic 0x{magic:08x}, expected 0x{expected:08x} '
                          f'for {kind}')
    ndims = 3 if kind == 'images' else 1
    header = 4 + 4*ndims
    if len(raw) < header:
        raise LengthError('IDX dimension sizes truncated')
    dims = struct.unpack('>' + 'I'*ndims, raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header != count:
        raise LengthError(f'IDX payload has {len(raw) - header} bytes, '
                          f'dimensions {dims} need {count}')
    return dims, header


def parse_idx(raw, kind='images'):
    """Parse IDX bytes; images come back as [N, 1, H, W] in [0, 1]."""
    dims, header = idx_dims(raw, kind)
    payload = np.frombuffer(raw, dtype=np.uint8, offset=header)
    if kind == 'images':
        n, rows, cols = dims
        return payload.reshape(n, 1, rows, cols).astype(np.float64)/255.0
    return payload.astype(np.int64)


def read_idx(path, kind='images'):
    return parse_idx(read_bytes(path), kind)


def parse_cifar10(raw):
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
        raise FormatError(f'CIFAR-10 file of {len(raw)} bytes is not a whole '
                          f'number of {CIFAR_RECORD_BYTES}-byte records')
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.max() >= CIFAR_CLASSES:
        raise LabelRangeError(f'CIFAR-10 label {labels.max()} outside '
                              f'[0, {CIFAR_CLASSES})')
    images = records[:, 1:].reshape((-1,) + CIFAR_SHAPE).astype(np.float64)/255.0
    return images, labels


def read_cifar10(path):
    return parse_cifar10(read_bytes(path))
