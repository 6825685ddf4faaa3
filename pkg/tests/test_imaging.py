import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vaclab import imaging


def random_image(rng, h=16, w=16, c=3):
    return rng.random((h, w, c))


class TestMakeKernel:
    def test_sigma_zero_is_identity(self):
        k = imaging.make_kernel(0.0)
        assert k.radius == 0
        np.testing.assert_array_equal(k.weights, [1.0])

    def test_sigma_one_closed_form(self):
        # center weight 1 / (1 + 2(e^-0.5 + e^-2 + e^-4.5)) at radius 3
        k = imaging.make_kernel(1.0)
        assert k.radius == 3
        expected = 1.0 / (1.0 + 2.0 * (math.exp(-0.5) + math.exp(-2.0) + math.exp(-4.5)))
        assert k.weights[3] == pytest.approx(expected, abs=1e-12)

    @given(st.floats(min_value=0.01, max_value=16.0))
    @settings(max_examples=50, deadline=None)
    def test_normalized_and_symmetric(self, sigma):
        k = imaging.make_kernel(sigma)
        assert k.radius == math.ceil(3 * sigma)
        assert abs(k.weights.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(k.weights, k.weights[::-1], rtol=0, atol=0)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            imaging.make_kernel(-0.5)


class TestGaussianBlur:
    def test_sigma_zero_bit_exact(self, rng):
        x = random_image(rng)
        out = imaging.gaussian_blur(x, 0.0)
        assert np.array_equal(out, x)
        assert out is not x

    def test_constant_image_fixed_point(self):
        x = np.full((12, 9, 3), 0.37)
        for sigma in (0.5, 1.0, 2.0):
            np.testing.assert_allclose(imaging.gaussian_blur(x, sigma), x, atol=1e-12)

    def test_impulse_gives_outer_product(self):
        k = imaging.make_kernel(1.0)
        n = 2 * k.radius + 9
        x = np.zeros((n, n, 1))
        c = n // 2
        x[c, c, 0] = 1.0
        out = imaging.gaussian_blur(x, 1.0)
        expected = np.zeros((n, n))
        r = k.radius
        expected[c - r : c + r + 1, c - r : c + r + 1] = np.outer(k.weights, k.weights)
        np.testing.assert_allclose(out[:, :, 0], expected, atol=1e-12)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0, 4.0, 8.0])
    def test_separability_matches_direct_2d(self, rng, sigma):
        # blur via two 1-D passes must equal the brute-force 2-D convolution
        for _ in range(20):
            x = random_image(rng)
            k = imaging.make_kernel(sigma)
            kernel2d = np.outer(k.weights, k.weights)
            sep = imaging.gaussian_blur(x, sigma)
            direct = imaging.conv2d_reference(x, kernel2d)
            assert np.abs(sep - direct).max() <= 1e-6

    def test_linearity_on_convex_combination(self, rng):
        x, y = random_image(rng), random_image(rng)
        alpha = 0.3
        mix = alpha * x + (1 - alpha) * y
        lhs = imaging.gaussian_blur(mix, 1.5)
        rhs = alpha * imaging.gaussian_blur(x, 1.5) + (1 - alpha) * imaging.gaussian_blur(y, 1.5)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_range_never_expands(self, rng):
        x = random_image(rng)
        out = imaging.gaussian_blur(x, 2.0)
        for ch in range(3):
            assert out[:, :, ch].max() <= x[:, :, ch].max() + 1e-12
            assert out[:, :, ch].min() >= x[:, :, ch].min() - 1e-12

    def test_mean_preserved_under_mirror_borders(self, rng):
        x = random_image(rng, 15, 11)
        for sigma in (0.7, 1.0, 2.0, 4.0):
            out = imaging.gaussian_blur(x, sigma)
            assert abs(out.mean() - x.mean()) <= 1e-6

    def test_blur_stack_matches_per_image(self, rng):
        stack = rng.random((5, 12, 12, 3))
        batched = imaging.blur_stack(stack, 1.5)
        for i in range(5):
            np.testing.assert_array_equal(batched[i], imaging.gaussian_blur(stack[i], 1.5))


class TestConv2dReference:
    def test_identity_kernel(self, rng):
        x = random_image(rng)
        out = imaging.conv2d_reference(x, np.array([[1.0]]))
        np.testing.assert_allclose(out, x, atol=1e-15)

    def test_uniform_kernel_on_constant(self):
        x = np.full((8, 8, 3), 0.6)
        out = imaging.conv2d_reference(x, np.full((3, 3), 1 / 9))
        np.testing.assert_allclose(out, x, atol=1e-12)

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ValueError):
            imaging.conv2d_reference(random_image(rng), np.ones((2, 2)) / 4)


class TestPsnr:
    def test_identical_is_infinite(self, rng):
        x = random_image(rng)
        assert imaging.psnr(x, x) == math.inf

    def test_known_mse(self):
        a = np.zeros((10, 10))
        b = np.full((10, 10), 0.1)  # mse = 0.01 -> 20 dB
        assert imaging.psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_blur_monotone_on_textured_image(self, rng):
        x = rng.random((32, 32, 3))
        p1 = imaging.psnr(x, imaging.gaussian_blur(x, 1.0))
        p2 = imaging.psnr(x, imaging.gaussian_blur(x, 2.0))
        assert p2 < p1

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            imaging.psnr(rng.random((4, 4)), rng.random((5, 4)))


class TestResize:
    def test_same_size_identical(self, rng):
        x = random_image(rng)
        np.testing.assert_array_equal(imaging.resize_bilinear(x, 16, 16), x)

    def test_constant_stays_constant(self):
        x = np.full((6, 6, 3), 0.25)
        out = imaging.resize_bilinear(x, 13, 9)
        np.testing.assert_allclose(out, 0.25, atol=1e-12)

    def test_checkerboard_corners_preserved_on_2x_upscale(self):
        x = np.array([[0.0, 1.0], [1.0, 0.0]])[:, :, None]
        out = imaging.resize_bilinear(x, 4, 4)[:, :, 0]
        # half-pixel mapping puts dst corners outside src centers -> clamped
        assert out[0, 0] == pytest.approx(0.0)
        assert out[0, 3] == pytest.approx(1.0)
        assert out[3, 0] == pytest.approx(1.0)
        assert out[3, 3] == pytest.approx(0.0)

    def test_nearest_blocks(self):
        x = np.array([[0.0, 1.0], [1.0, 0.0]])[:, :, None]
        out = imaging.resize_nearest(x, 4, 4)[:, :, 0]
        np.testing.assert_array_equal(out[:2, :2], 0.0)
        np.testing.assert_array_equal(out[:2, 2:], 1.0)

    def test_bad_target_rejected(self, rng):
        with pytest.raises(ValueError):
            imaging.resize_bilinear(random_image(rng), 0, 4)
