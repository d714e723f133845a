from nicereg import *
from nicereg.errors import DataError, ShapeError, GenerationError, FormatError
import numpy as np
import tempfile
import unittest


class NiceRegTester(unittest.TestCase):
    """Unit tests for phantoms and synthetic datasets"""

    def test_phantom(self):
        """nicereg: check make_phantom

        """
        vol, labels = make_phantom(3, (16, 16, 32), 4)
        self.assertEqual(vol.shape, (16, 16, 32), "shape incorrect.")
        self.assertEqual(labels.shape, vol.shape, "label shape incorrect.")
        self.assertEqual(float(vol.data.min()), 0.0, "not normalised.")
        self.assertEqual(float(vol.data.max()), 1.0, "not normalised.")
        self.assertEqual(labels.labels(), {1, 2, 3, 4}, "labels incorrect.")

        vol2, labels2 = make_phantom(3, (16, 16, 32), 4)
        self.assertTrue(np.array_equal(vol.data, vol2.data), "not reproducible.")
        self.assertTrue(np.array_equal(labels.data, labels2.data), "not reproducible.")

        vol3, labels3 = make_phantom(4, (16, 16, 32), 4)
        self.assertFalse(np.array_equal(vol.data, vol3.data), "seed ignored.")

        with self.assertRaises(ShapeError):
            make_phantom(0, (16, 16, 20), 4)
        with self.assertRaises(DataError):
            make_phantom(0, (16, 16, 16), 0)

    def test_smooth_field(self):
        """nicereg: check make_smooth_field

        """
        field = make_smooth_field(5, (16, 16, 16), 2.0)
        self.assertAlmostEqual(float(field_magnitude(field).data.max()), 2.0,
                               places=5, msg="maximum displacement incorrect.")
        self.assertEqual(njd_percent(field), 0.0, "field folds.")

        field2 = make_smooth_field(5, (16, 16, 16), 2.0)
        self.assertTrue(np.array_equal(field.data, field2.data), "not reproducible.")

        with self.assertRaises(GenerationError):
            make_smooth_field(5, (16, 16, 16), 50.0, smoothing=1.0, max_tries=1)
        with self.assertRaises(DataError):
            make_smooth_field(5, (16, 16, 16), 0.0)

    def test_dataset(self):
        """nicereg: check make_dataset splits

        """
        dataset = make_dataset(0, 7, (16, 16, 16), 3, 1.5, n_val=2, n_test=2)
        self.assertEqual(len(dataset), 7, "size incorrect.")
        self.assertEqual(dataset.train_indices, [0, 1, 2], "train split incorrect.")
        self.assertEqual(dataset.val_indices, [3, 4], "val split incorrect.")
        self.assertEqual(dataset.test_indices, [5, 6], "test split incorrect.")
        self.assertEqual(len(dataset.train), 3, "train subjects incorrect.")

        vol, labels = dataset.val[0]
        self.assertIsInstance(vol, Volume, "subject volume type.")
        self.assertIsInstance(labels, LabelMap, "subject labels type.")
        self.assertFalse(np.array_equal(dataset.volumes[0].data,
                                        dataset.volumes[1].data),
                         "subjects identical.")
        for labels in dataset.labels:
            self.assertTrue(labels.labels() <= {1, 2, 3}, "unexpected labels.")

        with self.assertRaises(DataError):
            make_dataset(0, 3, (16, 16, 16), 3, 1.5, n_val=2, n_test=2)

    def test_dataset_save_load(self):
        """nicereg: check save_dataset and load_dataset

        """
        dataset = make_dataset(1, 3, (16, 16, 16), 2, 1.0, n_val=1)
        with tempfile.TemporaryDirectory() as dirname:
            save_dataset(dataset, dirname)
            loaded = load_dataset(dirname)

            self.assertEqual(len(loaded), 3, "size incorrect.")
            self.assertEqual(loaded.n_val, 1, "split incorrect.")
            self.assertEqual(loaded.meta['shape'], [16, 16, 16], "meta incorrect.")
            for k in range(3):
                self.assertTrue(np.array_equal(loaded.volumes[k].data,
                                               dataset.volumes[k].data),
                                "volume %d differs." % k)
                self.assertTrue(np.array_equal(loaded.labels[k].data,
                                               dataset.labels[k].data),
                                "labels %d differ." % k)
                self.assertTrue(np.array_equal(loaded.fields[k].data,
                                               dataset.fields[k].data),
                                "field %d differs." % k)

        with tempfile.TemporaryDirectory() as dirname:
            with self.assertRaises(FormatError):
                load_dataset(dirname)
