import gzip
import io
import tarfile
from pathlib import Path
from shutil import rmtree
from tempfile import mkdtemp
from unittest import main, mock, skipUnless, TestCase

import requests

import tests
from fixnormlab.data.datasets import load_cifar10, load_mnist
from fixnormlab.download import downloads
from fixnormlab.download.downloads import DownloadError, fetch_dataset
from tests.test_datasets import cifar_records, idx_images, idx_labels


def gzipped(raw):
    buffer = io.BytesIO()
    with gzip.GzipFile(fileobj=buffer, mode='wb') as fd:
        fd.write(raw)
    return buffer.getvalue()


def cifar_archive():
    buffer = io.BytesIO()
    with tarfile.open(fileobj=buffer, mode='w:gz') as tar:
        names = sum(downloads.CIFAR_FILES.values(), [])
        for name in names:
            raw = cifar_records([0, 3])
            info = tarfile.TarInfo(f'{downloads.CIFAR_DIRNAME}/{name}')
            info.size = len(raw)
            tar.addfile(info, io.BytesIO(raw))
    return buffer.getvalue()


class FakeResponse(object):

    def __init__(self, content, status=200):
        self.content = content
        self.status = status

    def __enter__(self):
        return self

    def __exit__(self, *args):
        pass

    def raise_for_status(self):
        if self.status != 200:
            raise requests.HTTPError(f'{self.status} error')

    def iter_content(self, chunk_size=1):
        for start in range(0, len(self.content), chunk_size):
            yield self.content[start:start + chunk_size]


def mnist_server(url, **kwargs):
    name = url.rsplit('/', 1)[-1]
    if 'labels' in name:
        return FakeResponse(gzipped(idx_labels([1, 2, 3])))
    return FakeResponse(gzipped(idx_images([[[0, 255]]]*3)))


class TestDownloads(TestCase):

    def setUp(self):
        self.testdir = Path(mkdtemp())

    def tearDown(self):
        rmtree(self.testdir)

    def test_mnist(self):
        with mock.patch('fixnormlab.download.downloads.requests.get',
                        side_effect=mnist_server) as get:
            directory = fetch_dataset('mnist', self.testdir)
            self.assertEqual(get.call_count, 4)
            # a verified copy is not fetched again
            fetch_dataset('mnist', self.testdir)
            self.assertEqual(get.call_count, 4)
        train, val = load_mnist(directory)
        self.assertEqual(train.sample_shape, (1, 1, 2))

    def test_cifar(self):
        archive = cifar_archive()
        with mock.patch('fixnormlab.download.downloads.requests.get',
                        return_value=FakeResponse(archive)):
            directory = fetch_dataset('cifar10', self.testdir)
        self.assertFalse((directory/downloads.CIFAR_ARCHIVE).exists())
        train, val = load_cifar10(directory)
        self.assertEqual((len(train), len(val)), (10, 2))

    def test_http_error(self):
        with mock.patch('fixnormlab.download.downloads.requests.get',
                        return_value=FakeResponse(b'', status=404)):
            with self.assertRaises(DownloadError):
                fetch_dataset('cifar10', self.testdir)

    def test_bad_payload(self):
        with mock.patch('fixnormlab.download.downloads.requests.get',
                        return_value=FakeResponse(gzipped(b'not idx'))):
            with self.assertRaises(DownloadError):
                fetch_dataset('mnist', self.testdir)

    def test_unknown(self):
        with self.assertRaises(DownloadError):
            fetch_dataset('imagenet', self.testdir)


@skipUnless(tests.NETWORK, 'set FIXNORMLAB_NETWORK to download MNIST')
class TestLiveDownload(TestCase):

    def setUp(self):
        self.testdir = Path(mkdtemp())

    def tearDown(self):
        rmtree(self.testdir)

    def test_mnist(self):
        train, val = load_mnist(fetch_dataset('mnist', self.testdir))
        self.assertEqual((len(train), len(val)), (60000, 10000))


if __name__ == '__main__':
    main()
