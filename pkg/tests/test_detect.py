import numpy as np
import pytest

from colposr.detect import DetectorConfig, detect_sr, dilate_sr
from colposr.imaging import apply_mask, intensity_map, max_intensity, to_u8, to_unit
from conftest import random_mask, random_u8_image


def dilation_oracle(mask, radius):
    """Brute-force neighborhood minimum, O(m n r^2)."""
    m, n = mask.shape
    out = np.ones_like(mask)
    for i in range(m):
        for j in range(n):
            i0, i1 = max(0, i - radius), min(m, i + radius + 1)
            j0, j1 = max(0, j - radius), min(n, j + radius + 1)
            out[i, j] = mask[i0:i1, j0:j1].min()
    return out


def surviving_max(img, mask):
    """Max intensity of the masked image, in 0..255 units."""
    return max_intensity(to_u8(apply_mask(to_unit(img), mask)))


class TestDetect:
    def test_saturated_image_bound(self, rng):
        img = random_u8_image(rng, 16, 16)
        img[5, 5] = 255  # guarantees the 255.0 maximum
        mask = detect_sr(img)
        assert surviving_max(img, mask) <= 0.85 * 255

    def test_fractional_maximum_bound(self, rng):
        img = (random_u8_image(rng, 12, 12) // 2).astype(np.uint8)
        img[3, 3] = (239, 240, 240)  # intensity 239.666..
        mask = detect_sr(img)
        assert surviving_max(img, mask) <= 0.85 * max_intensity(img) + 1e-9

    def test_uniform_image_fully_flagged(self):
        img = np.full((6, 6, 3), 100, dtype=np.uint8)
        assert np.all(detect_sr(img) == 0)

    def test_all_black_image_keeps_everything(self):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        assert np.all(detect_sr(img) == 1)

    def test_brightest_pixel_always_flagged(self, rng):
        for _ in range(20):
            img = random_u8_image(rng, 10, 10)
            if max_intensity(img) == 0:
                continue
            mask = detect_sr(img)
            intensity = intensity_map(img)
            brightest = np.unravel_index(np.argmax(intensity), intensity.shape)
            assert mask[brightest] == 0

    def test_threshold_monotonicity(self, rng):
        img = random_u8_image(rng, 12, 12)
        zero_sets = []
        for tf in (0.95, 0.85, 0.6):
            mask = detect_sr(img, DetectorConfig(threshold_factor=tf))
            zero_sets.append(set(zip(*np.nonzero(mask == 0))))
        assert zero_sets[0] <= zero_sets[1] <= zero_sets[2]

    def test_exact_threshold_pixel_survives(self):
        # max intensity 240 -> threshold 204; a pixel at exactly 204 is kept
        img = np.full((3, 3, 3), 50, dtype=np.uint8)
        img[0, 0] = 240
        img[1, 1] = 204
        img[2, 2] = 205
        mask = detect_sr(img, DetectorConfig(threshold_factor=0.85))
        assert mask[0, 0] == 0 and mask[2, 2] == 0
        assert mask[1, 1] == 1
        assert surviving_max(img, mask) == 204.0

    def test_dilation_applies_through_config(self):
        img = np.full((7, 7, 3), 50, dtype=np.uint8)
        img[3, 3] = 255
        mask = detect_sr(img, DetectorConfig(dilation_radius=1))
        assert (mask[2:5, 2:5] == 0).all()
        assert mask.sum() == 49 - 9

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DetectorConfig(threshold_factor=0.0)
        with pytest.raises(ValueError):
            DetectorConfig(dilation_radius=-1)


class TestDilate:
    def test_radius_zero_is_identity(self, rng):
        mask = random_mask(rng)
        np.testing.assert_array_equal(dilate_sr(mask, 0), mask)

    def test_single_zero_grows_to_block(self):
        mask = np.ones((5, 5), dtype=np.uint8)
        mask[2, 2] = 0
        out = dilate_sr(mask, 1)
        expected = np.ones((5, 5), dtype=np.uint8)
        expected[1:4, 1:4] = 0
        np.testing.assert_array_equal(out, expected)

    def test_clips_at_borders(self):
        mask = np.ones((4, 4), dtype=np.uint8)
        mask[0, 0] = 0
        out = dilate_sr(mask, 1)
        expected = np.ones((4, 4), dtype=np.uint8)
        expected[:2, :2] = 0
        np.testing.assert_array_equal(out, expected)

    def test_matches_bruteforce_oracle(self, rng):
        for _ in range(10):
            mask = random_mask(rng, 9, 7)
            np.testing.assert_array_equal(dilate_sr(mask, 2), dilation_oracle(mask, 2))

    def test_monotone_in_radius(self, rng):
        mask = random_mask(rng, 10, 10, p_zero=0.1)
        prev = dilate_sr(mask, 1)
        for r in (2, 3):
            cur = dilate_sr(mask, r)
            assert np.all(cur <= prev)
            prev = cur

    def test_negative_radius_rejected(self, rng):
        with pytest.raises(ValueError):
            dilate_sr(random_mask(rng), -1)
