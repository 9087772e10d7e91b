import logging
import os
import tarfile
from pathlib import Path
from shutil import rmtree

import requests

from fixnormlab.data.readers import (CIFAR_RECORD_BYTES, FormatError, idx_dims,
                                     read_bytes)
from fixnormlab.data.datasets import CIFAR_DIRNAME, CIFAR_FILES, MNIST_FILES


MNIST_URL = 'https://storage.googleapis.com/cvdf-datasets/mnist/'
CIFAR_URL = 'https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz'
CIFAR_ARCHIVE = 'cifar-10-binary.tar.gz'
CHUNK_BYTES = 1 << 16
TIMEOUT_SECS = 60


class DownloadError(Exception):
    pass


class Downloadable(object):

    def __init__(self, data_dir, dir_name, name):
        self.dir = Path(data_dir)/dir_name
        self.name = name

    def __repr__(self):
        return f'<downloadable:{self.name} {self.dir}>'

    def files(self):
        """List of (url, file name) pairs to fetch into self.dir."""
        return []

    def verify(self):
        """True if self.dir holds a complete, parseable copy."""
        return False

    def unpack(self):
        pass

    def download(self):
        if not self.dir.is_dir():
            os.makedirs(self.dir)
        for child in self.dir.iterdir():
            if child.is_dir():
                rmtree(child)
            else:
                os.remove(child)
        for url, filename in self.files():
            fetch(url, self.dir/filename)
        self.unpack()


def fetch(url, path):
    logging.info(f'Fetching {url}')
    try:
        with requests.get(url, stream=True, timeout=TIMEOUT_SECS) as response:
            response.raise_for_status()
            with open(path, 'wb') as fd:
                for chunk in response.iter_content(chunk_size=CHUNK_BYTES):
                    fd.write(chunk)
    except requests.RequestException as err:
        raise DownloadError(f'{url}: {err}')


class MnistDownload(Downloadable):

    def __init__(self, data_dir):
        super(MnistDownload, self).__init__(data_dir, 'mnist', 'MNIST')

    def files(self):
        names = sum([list(pair) for pair in MNIST_FILES.values()], [])
        return [(f'{MNIST_URL}{name}.gz', f'{name}.gz') for name in names]

    def verify(self):
        for images, labels in MNIST_FILES.values():
            for name, kind in ((images, 'images'), (labels, 'labels')):
                path = self.dir/f'{name}.gz'
                if not path.is_file():
                    return False
                try:
                    idx_dims(read_bytes(path), kind)
                except (FormatError, OSError, EOFError):
                    return False
        return True


class CifarDownload(Downloadable):

    def __init__(self, data_dir):
        super(CifarDownload, self).__init__(data_dir, 'cifar10', 'CIFAR-10')

    def files(self):
        return [(CIFAR_URL, CIFAR_ARCHIVE)]

    def unpack(self):
        archive = self.dir/CIFAR_ARCHIVE
        with tarfile.open(archive, 'r:gz') as tar:
            for member in tar.getmembers():
                if member.name.startswith('/') or '..' in Path(member.name).parts:
                    raise DownloadError(f'unsafe path in archive: {member.name}')
            tar.extractall(self.dir)
        os.remove(archive)

    def verify(self):
        batches = self.dir/CIFAR_DIRNAME
        for names in CIFAR_FILES.values():
            for name in names:
                path = batches/name
                if not path.is_file():
                    return False
                size = path.stat().st_size
                if size == 0 or size % CIFAR_RECORD_BYTES != 0:
                    return False
        return True


def make_datasets(data_dir):
    return {
        'mnist': MnistDownload(data_dir),
        'cifar10': CifarDownload(data_dir),
        }


def fetch_dataset(name, data_dir):
    """Make sure dataset `name` is present under data_dir; return its directory."""
    downloadables = make_datasets(data_dir)
    if name not in downloadables:
        raise DownloadError(f'no download for dataset {name}')
    d = downloadables[name]
    if d.verify():
        logging.info(f'{d.name} already present in {d.dir}')
        return d.dir
    logging.info(f'Downloading {d.name}')
    d.download()
    if not d.verify():
        raise DownloadError(f'{d.name} failed verification after download')
    return d.dir
