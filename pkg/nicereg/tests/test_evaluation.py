from nicereg import *
from nicereg.errors import DataError, ShapeError, EmptyEvaluationError
from nicereg.evaluation import ABLATION_COLUMNS
from nicereg.plot import plot_ablation, plot_losses, plot_validation, plot_step_ncc
import csv
import json
import os
import tempfile
import matplotlib
import numpy as np
import torch
import unittest

matplotlib.use('Agg')


def tiny_model(L):

    torch.manual_seed(0)
    return NiceNet(ModelConfig(L=L, enc_channels=[4] * 5, dec_channels=[4] * 5))


class NiceRegTester(unittest.TestCase):
    """Unit tests for metrics and evaluation"""

    @classmethod
    def setUpClass(cls):

        cls.dataset = make_dataset(2, 8, (16, 16, 16), 3, 1.5, n_val=2, n_test=3)
        cls.pairs = draw_pairs(cls.dataset.test, 4, 5)

    def setUp(self):

        self.tmp = tempfile.TemporaryDirectory()
        self.dirname = self.tmp.name

    def tearDown(self):

        self.tmp.cleanup()

    def test_dsc(self):
        """nicereg: check dsc

        """
        a = np.zeros((4, 4, 4), dtype=np.int16)
        b = np.zeros((4, 4, 4), dtype=np.int16)
        a[0, 0:2, :] = 1
        b[0, 1:3, :] = 1
        result = dsc(LabelMap(a), LabelMap(b))
        self.assertEqual(result.mean, 0.5, "half overlap.")
        self.assertEqual(float(result), 0.5, "float conversion.")
        self.assertEqual(dsc(LabelMap(b), LabelMap(a)).mean, 0.5, "not symmetric.")
        self.assertEqual(dsc(LabelMap(a), LabelMap(a)).mean, 1.0, "identical maps.")

        c = np.zeros((4, 4, 4), dtype=np.int16)
        c[3, 3:, :] = 1
        self.assertEqual(dsc(LabelMap(a), LabelMap(c)).mean, 0.0, "disjoint maps.")

        result = dsc(LabelMap(a), LabelMap(b), labels=[1, 5])
        self.assertEqual(result.labels, [1], "absent label not excluded.")

        with self.assertRaises(EmptyEvaluationError):
            dsc(LabelMap(np.zeros((4, 4, 4))), LabelMap(np.zeros((4, 4, 4))))
        with self.assertRaises(ShapeError):
            dsc(LabelMap(a), LabelMap(np.zeros((4, 4, 5), dtype=np.int16)))

    def test_dsc_pooled(self):
        """nicereg: check pooled dsc weights labels by size

        """
        a = np.zeros((4, 4, 4), dtype=np.int16)
        b = np.zeros((4, 4, 4), dtype=np.int16)
        a[0, 0, :] = 1
        b[0, 0, :] = 1
        a[1, 0:2, :] = 2
        b[2, 0:2, :] = 2
        result = dsc(LabelMap(a), LabelMap(b))
        self.assertEqual(result.per_label, {1: 1.0, 2: 0.0}, "per-label values.")
        self.assertEqual(result.mean, 0.5, "mean over labels.")
        result = dsc(LabelMap(a), LabelMap(b), pooled=True)
        self.assertAlmostEqual(result.mean, 8 / 24, places=12, msg="pooled value.")

    def test_evaluate_untrained(self):
        """nicereg: check an untrained model matches the baseline

        """
        model = tiny_model(2)
        report = evaluate(model, self.pairs, window=5)
        baseline = baseline_report(self.pairs, window=5)

        self.assertEqual(len(report.pairs), 4, "pair count.")
        self.assertLess(abs(report.dsc[0] - baseline.dsc[0]), 0.02,
                        "untrained DSC differs from baseline.")
        self.assertEqual(report.njd[0], 0.0, "untrained NJD.")
        self.assertEqual(len(report.step_ncc), 2, "step curve length.")
        self.assertEqual(len(baseline.step_ncc), 1, "baseline curve length.")
        self.assertGreater(report.seconds[0], 0, "time not measured.")
        for pair in report.pairs:
            self.assertLess(pair.mean_disp, 1e-2, "untrained field not small.")

        summary = report.summary()
        self.assertEqual(summary['L'], 2, "summary L.")
        json.dumps(summary)

        filename = os.path.join(self.dirname, 'evaluation.csv')
        report.to_csv(filename)
        with open(filename) as f:
            lines = f.read().splitlines()
        comments = [line for line in lines if line.startswith('#')]
        self.assertEqual(len(comments), len(report.header()), "header comments.")
        self.assertEqual(len(lines), len(comments) + 1 + 4, "table rows.")

    def test_evaluate_options(self):
        """nicereg: check worker threads and timing options

        """
        model = tiny_model(3)
        serial = evaluate(model, self.pairs, window=5)
        threaded = evaluate(model, self.pairs, workers=2, window=5)
        for a, b in zip(serial.pairs, threaded.pairs):
            self.assertEqual(a.dsc, b.dsc, "threaded DSC differs.")
            self.assertEqual(a.njd, b.njd, "threaded NJD differs.")
            self.assertTrue(np.allclose(a.step_ncc, b.step_ncc),
                            "threaded NCC differs.")

        model.reset_counters()
        evaluate(model, self.pairs, workers=4, window=5)
        for name, count in model.invocation_counts().items():
            self.assertEqual(count, len(self.pairs),
                             "%s count wrong after threaded evaluation." % name)

        model.reset_counters()
        network_only = evaluate(model, self.pairs[:1], exclude_preprocessing=True,
                                window=5)
        self.assertTrue(network_only.exclude_preprocessing, "flag not recorded.")
        self.assertEqual(model.invocation_counts()['encode'], 1,
                         "encoder ran more than once.")
        self.assertIn('network only', network_only.header()[2], "timing header.")

        pooled = evaluate(model, self.pairs[:1], window=5, pooled=True)
        self.assertTrue(pooled.pooled, "pooled flag.")

        with self.assertRaises(DataError):
            EvalReport([], 2)
        with self.assertRaises(DataError):
            EvalReport([PairResult(1.0, 0.0, 0.1, [0.5])], 2)

    def test_register_volumes(self):
        """nicereg: check registration of volumes that need padding

        """
        model = tiny_model(2)
        rng = np.random.default_rng(0)
        fixed = Volume(rng.random((10, 16, 17)))
        moving = Volume(rng.random((10, 16, 17)))
        with self.assertWarns(UserWarning):
            output, field = register_volumes(model, fixed, moving)
        self.assertEqual(field.shape, (10, 16, 17), "field not cropped.")
        self.assertEqual(output.field().shape, (16, 16, 32), "padded field shape.")

        with self.assertRaises(DataError):
            register_volumes(model, fixed, Volume(rng.random((10, 16, 16))))

    def test_stepwise(self):
        """nicereg: check step-wise warped volumes

        """
        (fixed, _), (moving, _) = self.pairs[0]
        report = stepwise_report(tiny_model(1), (fixed, moving), window=5)
        self.assertEqual(report.L, 1, "L=1 steps.")
        self.assertEqual(report.shapes, [(16, 16, 16)], "L=1 shapes.")

        out_dir = os.path.join(self.dirname, 'steps')
        report = stepwise_report(tiny_model(3), self.pairs[0], out_dir, window=5)
        self.assertEqual(report.shapes, [(4, 4, 4), (8, 8, 8), (16, 16, 16)],
                         "L=3 shapes.")
        self.assertEqual(len(report.ncc), 3, "NCC per step.")
        for name in ('step_1.nii', 'step_2.nii', 'step_3.nii', 'stepwise.json',
                     'stepwise.png'):
            self.assertTrue(os.path.exists(os.path.join(out_dir, name)),
                            "%s missing." % name)
        vol = load_volume(os.path.join(out_dir, 'step_2.nii'))
        self.assertEqual(vol.shape, (8, 8, 8), "saved step shape.")

    def test_stepwise_cropped(self):
        """nicereg: check step-wise outputs are cropped back to the input levels

        """
        rng = np.random.default_rng(4)
        fixed = Volume(rng.random((20, 24, 18)))
        moving = Volume(rng.random((20, 24, 18)))
        out_dir = os.path.join(self.dirname, 'steps')
        report = stepwise_report(tiny_model(2), (fixed, moving), out_dir, window=3)

        self.assertEqual(report.shapes, [(10, 12, 9), (20, 24, 18)],
                         "warped levels not cropped.")
        self.assertEqual([phi.shape for phi in report.fields],
                         [(10, 12, 9), (20, 24, 18)], "fields not cropped.")
        self.assertEqual([vol.shape for vol in report.fixed],
                         [(10, 12, 9), (20, 24, 18)], "fixed levels not cropped.")
        self.assertTrue(all(np.isfinite(report.ncc)), "NCC not finite.")
        vol = load_volume(os.path.join(out_dir, 'step_2.nii'))
        self.assertEqual(vol.shape, (20, 24, 18), "saved step shape.")

    def test_ablate(self):
        """nicereg: check the ablation table

        """
        cfg = TrainConfig(iterations=2, L=1, lr=1e-3, ncc_window=5,
                          val_interval=1, val_pairs=1, checkpoint_interval=2,
                          prefetch=0)
        model_config = ModelConfig(L=1, enc_channels=[4] * 5, dec_channels=[4] * 5)
        out_dir = os.path.join(self.dirname, 'ablation')
        rows = ablate(cfg, self.dataset.train, self.dataset.val, self.pairs[:2],
                      grid_L=(1, 2), grid_lam=(0.0, ), budget=2, out_dir=out_dir,
                      model_config=model_config)
        self.assertEqual(len(rows), 2, "cell count.")
        for row, L in zip(rows, (1, 2)):
            self.assertEqual(list(row), ABLATION_COLUMNS, "columns.")
            self.assertEqual(row['status'], 'ok', "cell failed: %s" % row['status'])
            self.assertEqual(row['L'], L, "cell L.")
            self.assertTrue(0 <= row['dsc'] <= 1, "cell DSC.")
            self.assertGreater(row['wall_seconds'], 0, "cell time.")
            self.assertEqual(row['device'], 'cpu', "timing device.")

        with open(os.path.join(out_dir, 'ablation.csv'), newline='') as f:
            table = list(csv.DictReader(f))
        self.assertEqual(len(table), 2, "CSV rows.")

        cell_dir = os.path.join(out_dir, 'L2_lam0')
        for filename in (plot_ablation(table, os.path.join(self.dirname, 'a.png')),
                         plot_losses(os.path.join(cell_dir, 'metrics.csv'),
                                     os.path.join(self.dirname, 'l.png')),
                         plot_validation(os.path.join(cell_dir, 'validation.csv'),
                                         os.path.join(self.dirname, 'v.png')),
                         plot_step_ncc([0.2, 0.5], os.path.join(self.dirname, 's.png'),
                                       baseline=0.1)):
            self.assertTrue(os.path.exists(filename), "%s missing." % filename)

        rows = ablate(cfg, self.dataset.train[:1], self.dataset.val, self.pairs[:1],
                      grid_L=(1, ), budget=2,
                      out_dir=os.path.join(self.dirname, 'failed'),
                      model_config=model_config)
        self.assertTrue(rows[0]['status'].startswith('failed'), "failure not recorded.")
        self.assertTrue(np.isnan(rows[0]['dsc']), "failed cell DSC.")
