import io
import math
from pathlib import Path
from shutil import rmtree
from tempfile import mkdtemp
from unittest import main, TestCase

import fixnormlab.settings
import tests
from fixnormlab.settings import ConfigError


class TestExperimentFiles(TestCase):

    def setUp(self):
        self.testdir = Path(mkdtemp())
        self.settings = dict(fixnormlab.settings.DEFAULT_SETTINGS)

    def tearDown(self):
        rmtree(self.testdir)

    def _write(self, text):
        path = self.testdir/'experiment.conf'
        with open(path, 'w') as fd:
            fd.write(text)
        return path

    def test_settings(self):
        testfile = self.testdir/'settings.conf'
        with open(testfile, 'w') as fd:
            fixnormlab.settings.write_settings_to_file(fd, self.settings)
        with open(testfile, 'r') as fd:
            read_settings = fixnormlab.settings.read_settings_from_file(fd)
        self.assertEqual(self.settings, read_settings)

    def test_persistent_settings(self):
        self.settings.update(alpha=math.inf, budgets=[2.0, 10.0], mode='WD',
                             weight_decay=5e-4, data_dir='some dir')
        fixnormlab.settings.save_config(self.testdir/'run', self.settings)
        config = fixnormlab.settings.load_config(
            self.testdir/'run'/fixnormlab.settings.CONFIG_FILENAME)
        self.assertEqual(config.settings, self.settings)
        self.assertEqual(config.train.alpha, math.inf)
        self.assertEqual(config.tuner.budgets, [2.0, 10.0])

    def test_minimal_file(self):
        config = fixnormlab.settings.load_config(self._write('lr = 0.4\nepochs = 10\n'))
        self.assertEqual(config.train.lr, 0.4)
        self.assertEqual(config.train.mode, 'FIXNORM_FC')
        self.assertEqual(config.train.batch_size, 64)
        self.assertIs(config.tuner.template, config.train)
        # no budgets given: one short round, then the full schedule
        self.assertEqual(config.tuner.budgets, [2.0, 10.0])
        self.assertEqual(config.tuner.alphas, [0.5, 1.0, 2.0, 4.0, 8.0, 16.0])

    def test_decay_with_normalized_head(self):
        with self.assertRaises(ConfigError):
            fixnormlab.settings.load_config(
                self._write('mode = WN_FC\nweight_decay = 0.0005\n'))

    def test_lr_range(self):
        with self.assertRaises(ConfigError):
            fixnormlab.settings.load_config(self._write('lr_min = 1.0\nlr_max = 1.0\n'))

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as cm:
            fixnormlab.settings.read_settings_from_file(io.StringIO('learning_rate = 1\n'))
        self.assertIn('learning_rate', str(cm.exception))

    def test_bad_value(self):
        with self.assertRaises(ConfigError) as cm:
            fixnormlab.settings.read_settings_from_file(io.StringIO('epochs = many\n'))
        self.assertIn('epochs', str(cm.exception))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            fixnormlab.settings.load_config(self.testdir/'nothing.conf')

    def test_validate(self):
        bad = [dict(mode='SGD'), dict(lr=0.0), dict(alpha=-1.0), dict(momentum=1.0),
               dict(label_smoothing=1.0), dict(warmup_epochs=3), dict(seed=-1),
               dict(mode='ALGO1', weight_decay=1e-4), dict(mode='WD', fc_weight_decay=1e-4),
               dict(blob_image_side=3), dict(blob_sigma=0.0), dict(dataset='mnist')]
        for overrides in bad:
            with self.assertRaises(ConfigError, msg=str(overrides)):
                tests.get_test_config(**overrides).validate()
        tests.get_test_config(mode='ALGO1', fc_weight_decay=1e-4).validate()
        tests.get_test_config(alpha=math.inf).validate()

    def test_batch_norm_batch_size(self):
        with self.assertRaises(ConfigError) as cm:
            tests.get_test_config(batch_size=1).validate()
        self.assertIn('batch_size', str(cm.exception))
        tests.get_test_config(batch_size=2).validate()
        tests.get_test_image_config(batch_size=1).validate()

    def test_tuner_validate(self):
        config = fixnormlab.settings.load_config(self._write('epochs = 10\n'))
        for key, value in (('budgets', [5.0, 2.0]), ('budgets', []), ('lr_splits', 1),
                           ('alphas', [0.0]), ('parallelism', 0)):
            tuner = config.tuner
            original = getattr(tuner, key)
            setattr(tuner, key, value)
            with self.assertRaises(ConfigError, msg=key):
                tuner.validate()
            setattr(tuner, key, original)

    def test_metrics_file(self):
        record = {key: 1.5 for key in fixnormlab.settings.METRICS_KEYS}
        record.update(epoch=0, step=4, extra='dropped')
        path = self.testdir/fixnormlab.settings.METRICS_FILENAME
        fixnormlab.settings.write_metrics([record, record], path)
        read = fixnormlab.settings.read_metrics(path)
        self.assertEqual(len(read), 2)
        self.assertEqual(list(read[0]), list(fixnormlab.settings.METRICS_KEYS))
        self.assertEqual(read[0]['step'], 4)

    def test_describe(self):
        text = fixnormlab.settings.describe_settings()
        for key in fixnormlab.settings.DEFAULT_SETTINGS:
            self.assertIn(f'  {key} = ', text)


if __name__ == '__main__':
    main()
