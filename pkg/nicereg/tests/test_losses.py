from nicereg import *
from nicereg.errors import ShapeError, ConfigError
from nicereg.kernels import pyramid_tensors
from unittest import mock
import numpy as np
import torch
import unittest


def random_volume(seed, shape=(12, 12, 12), scale=10.0):

    return Volume(scale * np.random.default_rng(seed).random(shape))


class NiceRegTester(unittest.TestCase):
    """Unit tests for the loss terms"""

    def test_ncc_identical(self):
        """nicereg: check local NCC of identical images

        """
        a = random_volume(0)
        self.assertGreaterEqual(local_ncc(a, a), 0.99, "NCC of identical images.")
        self.assertGreaterEqual(local_ncc(a, a, window=3), 0.99,
                                "NCC of identical images, window 3.")

    def test_ncc_affine_invariance(self):
        """nicereg: check local NCC is invariant to intensity scaling and offset

        """
        a = random_volume(1)
        b = random_volume(2)
        b2 = Volume(2.5 * b.data + 3.0)
        self.assertAlmostEqual(local_ncc(a, b), local_ncc(a, b2), places=5,
                               msg="NCC changed under affine intensity change.")

        a2 = Volume(0.5 * a.data - 1.0)
        self.assertAlmostEqual(local_ncc(a, a2), local_ncc(a, a), places=5,
                               msg="NCC changed under affine intensity change.")

    def test_ncc_properties(self):
        """nicereg: check local NCC symmetry and range

        """
        a = random_volume(3)
        b = random_volume(4)
        ab = local_ncc(a, b)
        self.assertAlmostEqual(ab, local_ncc(b, a), places=12, msg="NCC not symmetric.")
        self.assertTrue(0 <= ab <= 1, "squared NCC out of range.")
        self.assertLess(ab, 0.2, "NCC of independent noise too high.")

        negated = Volume(-a.data)
        self.assertLess(local_ncc(a, negated, squared=False), -0.99,
                        "signed NCC of negated image.")
        self.assertGreater(local_ncc(a, negated), 0.99,
                           "squared NCC of negated image.")

        with self.assertRaises(ShapeError):
            local_ncc(a, random_volume(5, (12, 12, 10)))
        with self.assertRaises(ValueError):
            local_ncc(a, b, window=4)

    def test_ncc_windows(self):
        """nicereg: check local NCC against a direct per-window sum

        """
        a = random_volume(12, (8, 8, 8)).data.astype(np.float64)
        b = random_volume(13, (8, 8, 8)).data.astype(np.float64)
        total = 0.0
        for z in range(8):
            for y in range(8):
                for x in range(8):
                    window = (slice(max(z - 1, 0), z + 2), slice(max(y - 1, 0), y + 2),
                              slice(max(x - 1, 0), x + 2))
                    wa = a[window] - a[window].mean()
                    wb = b[window] - b[window].mean()
                    cross = (wa * wb).sum()
                    total += cross ** 2 / ((wa ** 2).sum() * (wb ** 2).sum() + 1e-5)
        expected = total / 512
        self.assertAlmostEqual(local_ncc(Volume(a), Volume(b), window=3), expected,
                               delta=1e-6, msg="windowed NCC incorrect.")

    def test_grad_l2_random(self):
        """nicereg: check grad_l2 of a random field against direct differences

        """
        u = np.random.default_rng(14).normal(0, 1, (3, 4, 5, 6))
        total = 0.0
        for axis in (1, 2, 3):
            d = np.diff(u, axis=axis)
            d = np.concatenate([d, np.take(d, [-1], axis=axis)], axis=axis)
            total += (d ** 2).sum()
        self.assertAlmostEqual(grad_l2(DisplacementField(u)), total / 120,
                               delta=1e-6, msg="grad_l2 of random field.")

    def test_ncc_tensor(self):
        """nicereg: check local NCC of tensors is differentiable

        """
        a = random_volume(6).tensor().clone().requires_grad_(True)
        b = random_volume(7).tensor()
        ncc = local_ncc(a, b)
        self.assertIsInstance(ncc, torch.Tensor, "tensor input gives tensor.")
        ncc.backward()
        self.assertTrue(torch.any(a.grad != 0), "no gradient.")

    def test_grad_l2(self):
        """nicereg: check grad_l2

        """
        shape = (5, 6, 7)
        self.assertEqual(grad_l2(DisplacementField.zeros(shape)), 0.0,
                         "grad_l2 of zero field.")
        self.assertEqual(grad_l2(DisplacementField.from_function(
            shape, lambda x, y, z: (1, 2, 3))), 0.0, "grad_l2 of constant field.")

        field = DisplacementField.from_function(shape, lambda x, y, z: (0.1 * x, 0, 0))
        self.assertAlmostEqual(grad_l2(field), 0.01, places=12,
                               msg="grad_l2 of linear field.")

        field = DisplacementField.from_function(
            shape, lambda x, y, z: (0.1 * x, 0.2 * z, -0.3 * y))
        self.assertAlmostEqual(grad_l2(field), 0.14, places=12,
                               msg="grad_l2 of mixed linear field.")

    def test_neg_jac_penalty(self):
        """nicereg: check neg_jac_penalty

        """
        shape = (4, 4, 4)
        self.assertEqual(neg_jac_penalty(DisplacementField.zeros(shape)), 0.0,
                         "penalty of identity.")
        field = DisplacementField.from_function(shape, lambda x, y, z: (-2 * x, 0, 0))
        self.assertAlmostEqual(neg_jac_penalty(field), 1.0, places=12,
                               msg="penalty of folding field.")
        field = DisplacementField.from_function(shape, lambda x, y, z: (-4 * x, 0, 0))
        self.assertAlmostEqual(neg_jac_penalty(field), 3.0, places=12,
                               msg="penalty of folding field.")

    def test_level_weights(self):
        """nicereg: check level_weights

        """
        self.assertEqual(level_weights(1), [1.0], "L=1 weights.")
        self.assertEqual(level_weights(3), [0.25, 0.5, 1.0], "L=3 weights.")
        self.assertEqual(len(level_weights(5)), 5, "L=5 weights.")

    def test_total_loss(self):
        """nicereg: check total_loss combines the level terms

        """
        fixed = build_pyramid(random_volume(8, (16, 16, 16)), 2)
        moving = build_pyramid(random_volume(9, (16, 16, 16)), 2)
        rng = np.random.default_rng(10)
        fields = [DisplacementField(rng.normal(0, 0.5, (3, ) + s))
                  for s in fixed.shapes]

        weights = LossWeights(sigma=0.7, lam=0.5, ncc_window=5)
        report = total_loss(fixed, moving, fields, weights)
        self.assertEqual(report.L, 2, "L incorrect.")
        self.assertEqual(report.weights, [0.5, 1.0], "level weights incorrect.")

        total = 0
        for i in range(2):
            warped = warp_trilinear(moving[i + 1], fields[i])
            sim = -local_ncc(warped, fixed[i + 1], window=5)
            self.assertAlmostEqual(report.sim[i], sim, places=10,
                                   msg="similarity term incorrect.")
            self.assertAlmostEqual(report.smooth[i], grad_l2(fields[i]), places=10,
                                   msg="smoothness term incorrect.")
            self.assertAlmostEqual(report.inv[i], neg_jac_penalty(fields[i]),
                                   places=10, msg="invertibility term incorrect.")
            total += report.weights[i] * (sim + 0.7 * (report.smooth[i] +
                                                       0.5 * report.inv[i]))
        self.assertAlmostEqual(report.total, total, places=10, msg="total incorrect.")
        self.assertEqual(len(report.as_row(7)), len(report.header()),
                         "CSV row and header differ.")

        with self.assertRaises(ShapeError):
            total_loss(fixed, moving, fields[:1], weights)

    def test_total_loss_identity(self):
        """nicereg: check total_loss of identical images and zero fields

        """
        vol = random_volume(11, (16, 16, 16))
        pyramid = build_pyramid(vol, 3)
        fields = [DisplacementField.zeros(s) for s in pyramid.shapes]
        report = total_loss(pyramid, pyramid, fields)
        self.assertTrue(all(s < -0.99 for s in report.sim), "similarity of identity.")
        self.assertEqual(sum(report.smooth) + sum(report.inv), 0.0,
                         "regularisation of identity.")
        self.assertTrue(report.is_finite(), "total not finite.")
        self.assertAlmostEqual(report.total, -sum(level_weights(3)), delta=1e-5,
                               msg="total of identity.")

    def test_lam_zero(self):
        """nicereg: check the penalty has no effect on the total when lam is 0

        """
        fixed = build_pyramid(random_volume(12, (16, 16, 16)), 2)
        moving = build_pyramid(random_volume(13, (16, 16, 16)), 2)
        rng = np.random.default_rng(14)
        fields = [DisplacementField(rng.normal(0, 2.0, (3, ) + s))
                  for s in fixed.shapes]
        weights = LossWeights(sigma=0.7, lam=0.0, ncc_window=5)
        total = total_loss(fixed, moving, fields, weights).total

        for value in (123.0, float('inf')):
            with mock.patch('nicereg.losses.neg_jac_penalty',
                            return_value=torch.tensor(value, dtype=torch.float64)):
                report = total_loss(fixed, moving, fields, weights)
            self.assertEqual(report.total, total,
                             "penalty %s changed the total." % value)

    def test_penalty_njd(self):
        """nicereg: check neg_jac_penalty is zero exactly when NJD is zero

        """
        rng = np.random.default_rng(15)
        fields = [DisplacementField.zeros((6, 6, 6)),
                  DisplacementField.from_function((6, 6, 6),
                                                  lambda x, y, z: (-2 * x, 0, 0))]
        fields += [DisplacementField(rng.normal(0, scale, (3, 6, 6, 6)))
                   for scale in (0.05, 0.2, 1.0, 3.0)]
        fields += [make_smooth_field(seed, (8, 8, 8), 1.0) for seed in range(3)]
        for k, field in enumerate(fields):
            self.assertEqual(neg_jac_penalty(field) == 0, njd_percent(field) == 0,
                             "penalty and NJD disagree for field %d." % k)

    def test_loss_weights(self):
        """nicereg: check LossWeights validation

        """
        with self.assertRaises(ConfigError):
            LossWeights(ncc_window=4)
        with self.assertRaises(ConfigError):
            LossWeights(sigma=-1)

    def test_gradient_check(self):
        """nicereg: check total_loss gradient against finite differences

        """
        torch.manual_seed(0)
        fixed = pyramid_tensors(torch.rand((1, 1, 8, 8, 8), dtype=torch.float64), 2)
        moving = pyramid_tensors(torch.rand((1, 1, 8, 8, 8), dtype=torch.float64), 2)
        phi1 = 0.5 * torch.randn((1, 3, 4, 4, 4), dtype=torch.float64)
        phi2 = 0.5 * torch.randn((1, 3, 8, 8, 8), dtype=torch.float64)
        weights = LossWeights(ncc_window=3)

        def func(u1, u2):
            return total_loss(fixed, moving, [u1, u2], weights).total

        result = check_gradient(func, [phi1, phi2], n_coordinates=400, h=1e-4,
                                rtol=1e-4)
        self.assertGreaterEqual(result.pass_fraction, 0.99,
                                "gradient check failed: %s" % result)

    def test_gradient_check_images(self):
        """nicereg: check local NCC gradient with respect to the images

        """
        torch.manual_seed(1)
        a = torch.rand((1, 1, 8, 8, 8), dtype=torch.float64)
        b = torch.rand((1, 1, 8, 8, 8), dtype=torch.float64)

        def func(x, y):
            return local_ncc(x, y, window=3)

        result = check_gradient(func, [a, b], n_coordinates=100)
        self.assertGreaterEqual(result.pass_fraction, 0.99,
                                "gradient check failed: %s" % result)
