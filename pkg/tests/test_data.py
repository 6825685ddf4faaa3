import numpy as np
import pytest

from vaclab import curriculum as cur
from vaclab import data, imaging, synth


@pytest.fixture
def small_set():
    return synth.make_dataset(60, seed=3, split="train")


class TestRecordFormat:
    def test_round_trip_bit_exact(self, small_set, tmp_path):
        path = tmp_path / "data.bin"
        data.save_records(small_set, path)
        back = data.load_records(path, small_set.meta)
        np.testing.assert_array_equal(back.labels, small_set.labels)
        np.testing.assert_array_equal(back.pixels, small_set.pixels)
        assert path.stat().st_size == len(small_set) * small_set.meta.record_bytes

    def test_sidecar_written(self, small_set, tmp_path):
        path = tmp_path / "data.bin"
        checksum = data.save_records(small_set, path)
        sidecar = (tmp_path / "data.meta").read_text()
        assert f"sha256 = {checksum}" in sidecar
        assert "records = 60" in sidecar

    def test_byte_255_maps_to_one(self, small_set):
        ds = data.Dataset(
            np.array([0], dtype=np.uint8),
            np.full((1, 32, 32, 3), 255, dtype=np.uint8),
            small_set.meta,
        )
        assert ds.image(0).max() == 1.0
        assert ds.image(0).min() == 1.0

    def test_planar_channel_layout(self, tmp_path):
        # one record: label 7, R plane all 10, G all 20, B all 30
        meta = data.DatasetMeta(height=2, width=2, channels=3, num_classes=10)
        raw = bytes([7] + [10] * 4 + [20] * 4 + [30] * 4)
        path = tmp_path / "tiny.bin"
        path.write_bytes(raw)
        ds = data.load_records(path, meta)
        assert ds.labels[0] == 7
        np.testing.assert_array_equal(ds.pixels[0, :, :, 0], 10)
        np.testing.assert_array_equal(ds.pixels[0, :, :, 1], 20)
        np.testing.assert_array_equal(ds.pixels[0, :, :, 2], 30)

    def test_truncated_file_rejected(self, small_set, tmp_path):
        path = tmp_path / "data.bin"
        data.save_records(small_set, path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(data.FormatError):
            data.load_records(path, small_set.meta)

    def test_label_out_of_range_rejected(self, tmp_path):
        meta = data.DatasetMeta(height=2, width=2, channels=1, num_classes=3)
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes([9] + [0] * 4))
        with pytest.raises(data.FormatError):
            data.load_records(path, meta)


class TestSubset:
    def test_balanced_stratification(self):
        ds = synth.make_dataset(500, seed=1, split="train")
        sub = data.subset(ds, 100, seed=4)
        counts = np.bincount(sub.labels, minlength=10)
        np.testing.assert_array_equal(counts, 10)

    def test_full_size_is_identity(self, small_set):
        sub = data.subset(small_set, len(small_set), seed=9)
        np.testing.assert_array_equal(sub.labels, small_set.labels)
        np.testing.assert_array_equal(sub.pixels, small_set.pixels)

    def test_deterministic_for_seed(self, small_set):
        a = data.subset(small_set, 20, seed=5)
        b = data.subset(small_set, 20, seed=5)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        c = data.subset(small_set, 20, seed=6)
        assert not np.array_equal(a.pixels, c.pixels)

    def test_uniform_fallback_warns(self):
        ds = synth.make_dataset(40, seed=2, split="train")
        # strip class 9 so stratification cannot fill its quota
        keep = ds.labels != 9
        skewed = data.Dataset(ds.labels[keep], ds.pixels[keep], ds.meta)
        with pytest.warns(UserWarning):
            sub = data.subset(skewed, 30, seed=1)
        assert len(sub) == 30


class TestIterateEpoch:
    def plan(self, ds, epoch=0, batch=16, augment=False):
        return data.plan_epoch(ds, epoch, batch, augment,
                               data_seed=10, blur_seed=20, aug_seed=30)

    def test_zero_policy_no_augment_is_permuted_slices(self, small_set):
        plan = self.plan(small_set)
        batches = list(data.iterate_epoch(small_set, plan, cur.vanilla_policy()))
        got_images = np.concatenate([b for b, _ in batches])
        got_labels = np.concatenate([l for _, l in batches])
        perm = plan.permutation
        expect = small_set.pixels[perm].astype(np.float64) / 255.0
        np.testing.assert_array_equal(got_images, expect.astype(np.float32))
        np.testing.assert_array_equal(got_labels, small_set.labels[perm])

    def test_vac_epoch_zero_blurs_everything_at_sigma_max(self, small_set):
        sched = cur.define_curriculum(cur.CurriculumConfig(50, 2))
        policy = cur.SchedulePolicy(sched)
        plan = self.plan(small_set)
        sigmas = data.epoch_sigmas(plan, policy, len(small_set))
        assert (sigmas == 2.0).all()
        (batch, _), *_ = data.iterate_epoch(small_set, plan, policy)
        idx = plan.permutation[:16]
        expect = imaging.blur_stack(small_set.batch_float(idx), 2.0).astype(np.float32)
        np.testing.assert_array_equal(batch, expect)

    def test_final_segment_replay_frequencies(self):
        sched = cur.define_curriculum(cur.CurriculumConfig(200, 2))
        policy = cur.SchedulePolicy(sched)
        ds = synth.make_dataset(10, seed=1, split="train")
        plan = data.plan_epoch(ds, 150, 16, False, 1, 2, 3)
        sigmas = data.epoch_sigmas(plan, policy, 100_000)
        for sigma, p in ((2.0, 0.065), (1.0, 0.135), (0.0, 0.800)):
            assert abs((sigmas == sigma).mean() - p) <= 0.01

    def test_epoch_fully_determined_by_seeds(self, small_set):
        policy = cur.ConstantBlurPolicy(0.5, 2.0)
        run1 = [
            (b.copy(), l.copy())
            for b, l in data.iterate_epoch(small_set, self.plan(small_set, augment=True), policy)
        ]
        run2 = list(data.iterate_epoch(small_set, self.plan(small_set, augment=True), policy))
        for (b1, l1), (b2, l2) in zip(run1, run2):
            np.testing.assert_array_equal(b1, b2)
            np.testing.assert_array_equal(l1, l2)

    def test_different_epochs_shuffle_differently(self, small_set):
        p0 = self.plan(small_set, epoch=0)
        p1 = self.plan(small_set, epoch=1)
        assert not np.array_equal(p0.permutation, p1.permutation)

    def test_blur_draws_independent_of_augment_flag(self, small_set):
        policy = cur.ConstantBlurPolicy(0.5, 2.0)
        s_plain = data.epoch_sigmas(self.plan(small_set, augment=False), policy, 60)
        s_aug = data.epoch_sigmas(self.plan(small_set, augment=True), policy, 60)
        np.testing.assert_array_equal(s_plain, s_aug)

    def test_blur_applied_before_augmentation(self, small_set):
        # find an epoch whose first delivered image gets flipped
        policy = cur.ConstantBlurPolicy(1.0, 2.0)
        for epoch in range(40):
            plan = self.plan(small_set, epoch=epoch, batch=4, augment=True)
            n = len(small_set)
            offsets, flips = data._epoch_augment_draws(plan, n)
            first = plan.permutation[0]
            if flips[first]:
                break
        else:
            pytest.fail("no flipped first image found in 40 epochs")
        (batch, _), *_ = data.iterate_epoch(small_set, plan, policy)
        raw = small_set.image(first)
        blurred = imaging.gaussian_blur(raw, 2.0)
        dy, dx = offsets[first]
        pad = data.PAD
        canvas = np.pad(blurred, ((pad, pad), (pad, pad), (0, 0)))
        cropped = canvas[dy : dy + 32, dx : dx + 32]
        blur_then_flip = cropped[:, ::-1, :].astype(np.float32)
        np.testing.assert_array_equal(batch[0], blur_then_flip)

        # and it must differ from augment-then-blur on an asymmetric image
        canvas2 = np.pad(raw, ((pad, pad), (pad, pad), (0, 0)))
        flip_then_blur = imaging.gaussian_blur(
            canvas2[dy : dy + 32, dx : dx + 32][:, ::-1, :], 2.0
        ).astype(np.float32)
        assert not np.array_equal(batch[0], flip_then_blur)


class TestSynth:
    def test_balanced_labels(self):
        ds = synth.make_dataset(1000, seed=0, split="train")
        np.testing.assert_array_equal(np.bincount(ds.labels), 100)

    def test_regeneration_identical(self):
        a = synth.make_dataset(50, seed=8, split="test")
        b = synth.make_dataset(50, seed=8, split="test")
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_splits_differ(self):
        a = synth.make_dataset(50, seed=8, split="train")
        b = synth.make_dataset(50, seed=8, split="test")
        assert not np.array_equal(a.pixels, b.pixels)

    def test_fixture_file_round_trip(self, tmp_path):
        ds = synth.write_fixture(tmp_path / "synth.bin", 30, seed=4, split="train")
        back = data.load_records(tmp_path / "synth.bin", ds.meta)
        np.testing.assert_array_equal(back.pixels, ds.pixels)
