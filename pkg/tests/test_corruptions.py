import numpy as np
import pytest

from vaclab import corruptions as cor
from vaclab import data, imaging, synth
from vaclab.corruptions import CorruptionKind, CorruptionSpec

ALL_KINDS = list(CorruptionKind)


@pytest.fixture
def image(rng):
    return rng.random((32, 32, 3))


class TestSpec:
    def test_fourteen_kinds_without_gaussian_blur(self):
        assert len(ALL_KINDS) == 14
        assert "gaussian_blur" not in {k.value for k in ALL_KINDS}

    def test_every_family_has_at_least_two_kinds(self):
        for family, members in cor.FAMILIES.items():
            assert len(members) >= 2, family
        covered = {k for members in cor.FAMILIES.values() for k in members}
        assert covered == set(ALL_KINDS)

    def test_severity_validation(self):
        with pytest.raises(ValueError):
            CorruptionSpec(CorruptionKind.FOG, 0, 1)
        with pytest.raises(ValueError):
            CorruptionSpec(CorruptionKind.FOG, 6, 1)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            CorruptionSpec("salt_storm", 1, 1)


class TestDeterminism:
    @pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
    def test_pure_function_of_image_spec_index(self, kind, image):
        spec = CorruptionSpec(kind, 3, seed=99)
        a = cor.apply_corruption(image, spec, index=5)
        b = cor.apply_corruption(image, spec, index=5)
        np.testing.assert_array_equal(a, b)

    def test_index_changes_realization(self, image):
        spec = CorruptionSpec(CorruptionKind.GAUSSIAN_NOISE, 3, seed=99)
        a = cor.apply_corruption(image, spec, index=0)
        b = cor.apply_corruption(image, spec, index=1)
        assert not np.array_equal(a, b)

    def test_output_always_in_unit_interval(self, image):
        for kind in ALL_KINDS:
            out = cor.apply_corruption(image, CorruptionSpec(kind, 5, 7), index=2)
            assert out.min() >= 0.0 and out.max() <= 1.0, kind.value


class TestKindSemantics:
    def test_gaussian_noise_zero_std_is_identity(self, image):
        spec = CorruptionSpec(CorruptionKind.GAUSSIAN_NOISE, 1, 0)
        out = cor.apply_corruption(image, spec, params=0.0)
        np.testing.assert_array_equal(out, image)

    def test_brightness_severity_three_shifts_half_gray_to_point_seven(self):
        gray = np.full((8, 8, 3), 0.5)
        spec = CorruptionSpec(CorruptionKind.BRIGHTNESS, 3, 0)
        assert cor.SEVERITY_TABLE[CorruptionKind.BRIGHTNESS][2] == 0.2
        out = cor.apply_corruption(gray, spec)
        np.testing.assert_allclose(out, 0.7, atol=1e-12)

    def test_impulse_noise_replaces_exact_pixel_count(self):
        gray = np.full((32, 32, 3), 0.5)  # 0.5 is never a salt/pepper value
        spec = CorruptionSpec(CorruptionKind.IMPULSE_NOISE, 4, seed=11)
        fraction = cor.SEVERITY_TABLE[CorruptionKind.IMPULSE_NOISE][3]
        out = cor.apply_corruption(gray, spec, index=0)
        changed = np.any(out != gray, axis=2)
        assert changed.sum() == int(fraction * 32 * 32)
        assert set(np.unique(out[changed])) <= {0.0, 1.0}

    def test_contrast_scales_about_image_mean(self, image):
        spec = CorruptionSpec(CorruptionKind.CONTRAST, 2, 0)
        factor = cor.SEVERITY_TABLE[CorruptionKind.CONTRAST][1]
        out = cor.apply_corruption(image, spec)
        expected = np.clip((image - image.mean()) * factor + image.mean(), 0, 1)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_defocus_disk_is_flat_not_gaussian(self):
        disk = cor.disk_kernel(3.0)
        gauss = imaging.make_kernel(1.0)
        g2d = np.outer(gauss.weights, gauss.weights)
        assert disk.shape == g2d.shape
        # interior disk taps are equal; Gaussian taps are strictly peaked
        center = disk[3, 3]
        assert disk[3, 2] == pytest.approx(center)
        assert g2d[3, 2] < g2d[3, 3]

    def test_line_kernel_mass_and_orientation(self):
        k = cor.line_kernel(7, 0.0)
        assert k.sum() == pytest.approx(1.0)
        assert k[3, :].sum() == pytest.approx(1.0)  # horizontal line
        kv = cor.line_kernel(7, np.pi / 2)
        assert kv[:, 3].sum() == pytest.approx(1.0)

    def test_plasma_fractal_range_and_determinism(self):
        a = cor.plasma_fractal(32, np.random.default_rng(3))
        b = cor.plasma_fractal(32, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)
        assert a.min() == 0.0 and a.max() == 1.0
        with pytest.raises(ValueError):
            cor.plasma_fractal(20, np.random.default_rng(0))

    def test_pixelate_produces_blocks(self, image):
        spec = CorruptionSpec(CorruptionKind.PIXELATE, 5, 0)
        out = cor.apply_corruption(image, spec)
        # 0.20 scale on 32px -> 6px source, so output has long constant runs
        assert len(np.unique(out[0])) < len(np.unique(image[0]))


class TestSuiteGeneration:
    @pytest.fixture
    def clean(self):
        return synth.make_dataset(20, seed=5, split="test")

    def test_cardinality_and_layout(self, clean, tmp_path):
        kinds = ALL_KINDS[:3]
        cor.generate_corrupted_dataset(clean, kinds, (1, 2), seed=9, out_root=tmp_path)
        bins = sorted(p.relative_to(tmp_path).as_posix() for p in tmp_path.rglob("data.bin"))
        assert len(bins) == 6
        assert (tmp_path / "gaussian_noise" / "1" / "data.bin").exists()
        manifest = cor.parse_manifest(tmp_path / "manifest.txt")
        assert manifest["kinds"] == [k.value for k in kinds]
        assert manifest["severities"] == [1, 2]

    def test_labels_preserved(self, clean, tmp_path):
        cor.generate_corrupted_dataset(clean, [CorruptionKind.FOG], (3,), 1, tmp_path)
        back = data.load_records(tmp_path / "fog" / "3" / "data.bin", clean.meta)
        np.testing.assert_array_equal(back.labels, clean.labels)

    def test_same_seed_regenerates_byte_identical(self, clean, tmp_path):
        kinds = [CorruptionKind.GLASS_BLUR, CorruptionKind.SNOW]
        cor.generate_corrupted_dataset(clean, kinds, (2,), 7, tmp_path / "a")
        cor.generate_corrupted_dataset(clean, kinds, (2,), 7, tmp_path / "b")
        for kind in kinds:
            a = (tmp_path / "a" / kind.value / "2" / "data.bin").read_bytes()
            b = (tmp_path / "b" / kind.value / "2" / "data.bin").read_bytes()
            assert a == b

    def test_different_seed_same_labels_different_pixels(self, clean, tmp_path):
        kind = CorruptionKind.GAUSSIAN_NOISE
        cor.generate_corrupted_dataset(clean, [kind], (3,), 7, tmp_path / "a")
        cor.generate_corrupted_dataset(clean, [kind], (3,), 8, tmp_path / "b")
        da = data.load_records(tmp_path / "a" / kind.value / "3" / "data.bin", clean.meta)
        db = data.load_records(tmp_path / "b" / kind.value / "3" / "data.bin", clean.meta)
        np.testing.assert_array_equal(da.labels, db.labels)
        assert not np.array_equal(da.pixels, db.pixels)

    def test_existing_output_needs_overwrite_flag(self, clean, tmp_path):
        cor.generate_corrupted_dataset(clean, [CorruptionKind.FOG], (1,), 1, tmp_path)
        with pytest.raises(cor.SuiteLayoutError):
            cor.generate_corrupted_dataset(clean, [CorruptionKind.FOG], (1,), 1, tmp_path)
        cor.generate_corrupted_dataset(clean, [CorruptionKind.FOG], (1,), 1, tmp_path,
                                       overwrite=True)


class TestCalibration:
    def test_all_kinds_strictly_monotone(self, calib_images):
        report = cor.severity_calibration_report(ALL_KINDS, calib_images, seed=3)
        for kind, psnrs in report.items():
            assert all(a > b for a, b in zip(psnrs, psnrs[1:])), kind.value

    def test_identity_parameters_detected(self, calib_images):
        flat_table = dict(cor.SEVERITY_TABLE)
        flat_table[CorruptionKind.BRIGHTNESS] = (0.1, 0.1, 0.1, 0.1, 0.1)
        with pytest.raises(cor.CalibrationError, match="brightness"):
            cor.severity_calibration_report([CorruptionKind.BRIGHTNESS],
                                            calib_images, seed=3, table=flat_table)

    def test_brightness_severity_five_below_one(self, calib_images):
        report = cor.severity_calibration_report([CorruptionKind.BRIGHTNESS],
                                                 calib_images, seed=3)
        psnrs = report[CorruptionKind.BRIGHTNESS]
        assert psnrs[4] < psnrs[0]

    def test_requires_hundred_images(self, calib_images):
        with pytest.raises(ValueError):
            cor.severity_calibration_report(ALL_KINDS, calib_images[:50])
