from nicereg.scripts.nicereg import main
from nicereg import load_dataset, load_field, load_volume, save_volume, Volume
import json
import os
import tempfile
import numpy as np
import unittest

SPLITS = 'data.n_val=2, data.n_test=2, data.n_blobs=3, data.test_pairs=2'

TINY = ('model.enc_channels={[4, 4, 4, 4, 4]}, '
        'model.dec_channels={[4, 4, 4, 4, 4]}, '
        'train.val_interval=1, train.val_pairs=1, train.checkpoint_interval=2, '
        'train.ncc_window=5')


class NiceRegTester(unittest.TestCase):
    """Unit tests for the nicereg command"""

    @classmethod
    def setUpClass(cls):

        cls.tmp = tempfile.TemporaryDirectory()
        cls.data = os.path.join(cls.tmp.name, 'data')
        cls.run_dir = os.path.join(cls.tmp.name, 'run')
        cls.synth_status = main(['-q', '--set', SPLITS, 'synth', cls.data,
                                 '--n', '6', '--shape', '16,16,16', '--seed', '1'])
        cls.train_status = main(['-q', '--set', SPLITS + ', ' + TINY, 'train',
                                 cls.data, cls.run_dir, '--iterations', '2',
                                 '--L', '2'])
        cls.checkpoint = os.path.join(cls.run_dir, 'ckpt_2.bin')

    @classmethod
    def tearDownClass(cls):

        cls.tmp.cleanup()

    def path(self, *names):

        return os.path.join(self.tmp.name, *names)

    def test_synth(self):
        """nicereg: check synth writes a dataset

        """
        self.assertEqual(self.synth_status, 0, "synth failed.")
        dataset = load_dataset(self.data)
        self.assertEqual(len(dataset), 6, "subject count.")
        self.assertEqual(dataset.n_test, 2, "test split.")
        self.assertTrue(os.path.exists(os.path.join(self.data, 'config.json')),
                        "config not saved.")

    def test_train(self):
        """nicereg: check train writes checkpoints and curves

        """
        self.assertEqual(self.train_status, 0, "train failed.")
        for name in ('ckpt_2.bin', 'metrics.csv', 'validation.csv', 'config.json'):
            self.assertTrue(os.path.exists(os.path.join(self.run_dir, name)),
                            "%s missing." % name)
        with open(os.path.join(self.run_dir, 'config.json')) as f:
            config = json.load(f)
        self.assertEqual(config['model']['L'], 2, "--L not applied to the model.")
        self.assertEqual(config['train']['L'], 2, "--L not applied to training.")

    def test_evaluate(self):
        """nicereg: check evaluate writes a summary

        """
        outdir = self.path('eval')
        status = main(['-q', '--set', SPLITS + ', train.ncc_window=5', 'evaluate',
                       self.checkpoint, self.data, outdir, '--workers', '2'])
        self.assertEqual(status, 0, "evaluate failed.")
        with open(os.path.join(outdir, 'summary.json')) as f:
            summary = json.load(f)
        self.assertEqual(summary['registered']['pairs'], 2, "pair count.")
        self.assertEqual(len(summary['registered']['step_ncc']), 2,
                         "step curve length.")
        self.assertEqual(summary['baseline']['L'], 1, "baseline steps.")
        for name in ('evaluation.csv', 'step_ncc.png'):
            self.assertTrue(os.path.exists(os.path.join(outdir, name)),
                            "%s missing." % name)

        status = main(['-q', 'report', outdir, '--out', self.path('eval_plots')])
        self.assertEqual(status, 0, "report failed.")
        self.assertTrue(os.path.exists(self.path('eval_plots', 'step_ncc.png')),
                        "step plot missing.")

    def test_register(self):
        """nicereg: check register writes fields and metrics

        """
        outdir = self.path('reg')

        def subject(name, k):
            return os.path.join(self.data, '%s_%03d.nii' % (name, k))

        status = main(['-q', 'register', self.checkpoint, subject('vol', 4),
                       subject('vol', 5), outdir,
                       '--fixed-labels', subject('seg', 4),
                       '--moving-labels', subject('seg', 5),
                       '--emit-intermediate'])
        self.assertEqual(status, 0, "register failed.")
        with open(os.path.join(outdir, 'metrics.json')) as f:
            metrics = json.load(f)
        self.assertTrue(0 <= metrics['dsc'] <= 1, "DSC missing.")
        self.assertEqual(len(metrics['step_ncc']), 2, "step NCC missing.")

        field = load_field(os.path.join(outdir, 'field.nii'))
        self.assertEqual(field.shape, (16, 16, 16), "field shape.")
        self.assertEqual(load_field(os.path.join(outdir, 'steps', 'phi_1.nii')).shape,
                         (8, 8, 8), "coarse field shape.")
        labels = load_volume(os.path.join(outdir, 'warped_labels.nii'), labels=True)
        self.assertEqual(labels.shape, (16, 16, 16), "warped labels shape.")

        outdir = self.path('reg_raw')
        status = main(['-q', 'register', self.checkpoint, subject('vol', 4),
                       subject('vol', 5), outdir, '--format', 'raw'])
        self.assertEqual(status, 0, "raw register failed.")
        self.assertTrue(os.path.exists(os.path.join(outdir, 'field.raw.txt')),
                        "raw descriptor missing.")

    def test_register_padded(self):
        """nicereg: check register crops the step outputs of padded inputs

        """
        rng = np.random.default_rng(3)
        names = []
        for name in ('fixed.nii', 'moving.nii'):
            names.append(self.path(name))
            save_volume(Volume(rng.random((20, 24, 18)).astype(np.float32)),
                        names[-1])
        outdir = self.path('reg_padded')
        status = main(['-q', 'register', self.checkpoint, names[0], names[1],
                       outdir, '--emit-intermediate'])
        self.assertEqual(status, 0, "register failed.")

        steps = os.path.join(outdir, 'steps')
        self.assertEqual(load_field(os.path.join(outdir, 'field.nii')).shape,
                         (20, 24, 18), "field shape.")
        self.assertEqual(load_field(os.path.join(steps, 'phi_1.nii')).shape,
                         (10, 12, 9), "coarse field shape.")
        self.assertEqual(load_field(os.path.join(steps, 'phi_2.nii')).shape,
                         (20, 24, 18), "final step field shape.")
        self.assertEqual(load_volume(os.path.join(steps, 'step_2.nii')).shape,
                         (20, 24, 18), "final step volume shape.")

    def test_report(self):
        """nicereg: check report plots training curves

        """
        status = main(['-q', 'report', self.run_dir])
        self.assertEqual(status, 0, "report failed.")
        for name in ('losses.png', 'validation.png'):
            self.assertTrue(os.path.exists(os.path.join(self.run_dir, name)),
                            "%s missing." % name)

    def test_exit_codes(self):
        """nicereg: check errors map to exit codes

        """
        self.assertEqual(main(['-q', 'synth', self.path('bad'), '--n', '6']), 2,
                         "configuration error.")
        self.assertEqual(main(['-q', 'evaluate', self.checkpoint,
                               self.path('missing'), self.path('out')]), 3,
                         "data error.")
        self.assertEqual(main(['-q', 'evaluate', self.path('missing.bin'),
                               self.data, self.path('out')]), 1,
                         "missing file.")
        self.assertEqual(main(['-q', '--set', SPLITS + ', ' + TINY + ', model.L=4',
                               'train', self.data, self.path('run_L'),
                               '--iterations', '1']), 2,
                         "model and training L differ.")
