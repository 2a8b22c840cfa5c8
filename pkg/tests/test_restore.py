import numpy as np
import pytest

from colposr.dataset import CorpusImage, HiddenRegionPolicy, build_sample, generate_hidden_mask
from colposr.detect import detect_sr
from colposr.imaging import apply_mask, to_unit
from colposr.network import ModelSpec, assemble_input, build_model, forward
from colposr.restore import composite, restore_hidden, restore_sr
from conftest import random_mask, random_u8_image


@pytest.fixture(scope="module")
def model():
    return build_model(ModelSpec(width_multiplier=0.125), init_seed=13)


@pytest.fixture
def corpus_image(rng):
    img = random_u8_image(rng, 16, 16)
    img[2, 3] = 255
    return CorpusImage("ci", "p", img, detect_sr(img))


def test_restore_hidden_routes_through_forward(model, corpus_image):
    hidden = generate_hidden_mask(corpus_image, HiddenRegionPolicy(rng_seed=1))
    sample = build_sample(corpus_image, hidden)
    direct = forward(
        model,
        assemble_input(sample.input_image, sample.retain_mask, sample.restore_mask),
        mode="eval",
    )
    np.testing.assert_array_equal(restore_hidden(model, sample), direct)


def test_restore_sr_mask_roles(model, corpus_image):
    masked = apply_mask(to_unit(corpus_image.image), corpus_image.real_mask)
    direct = forward(
        model,
        assemble_input(masked, np.ones((16, 16), np.uint8), corpus_image.real_mask),
        mode="eval",
    )
    np.testing.assert_array_equal(restore_sr(model, corpus_image), direct)


def test_restore_hidden_with_trivial_mask(model, corpus_image):
    sample = build_sample(corpus_image, np.ones((16, 16), np.uint8))
    out = restore_hidden(model, sample)
    assert out.shape == (16, 16, 3)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_restore_sr_without_specular_pixels(model, rng):
    img = (random_u8_image(rng, 16, 16) // 2).astype(np.uint8)
    ci = CorpusImage("clean", "p", img, np.ones((16, 16), np.uint8))
    out = restore_sr(model, ci)
    assert out.shape == (16, 16, 3)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_eval_determinism(model, corpus_image):
    a = restore_sr(model, corpus_image)
    b = restore_sr(model, corpus_image)
    np.testing.assert_array_equal(a, b)


class TestComposite:
    def test_keep_all(self, rng):
        raw, src = rng.random((5, 5, 3)), rng.random((5, 5, 3))
        np.testing.assert_array_equal(
            composite(raw, src, np.ones((5, 5), np.uint8)), src
        )

    def test_keep_none(self, rng):
        raw, src = rng.random((5, 5, 3)), rng.random((5, 5, 3))
        np.testing.assert_array_equal(
            composite(raw, src, np.zeros((5, 5), np.uint8)), raw
        )

    def test_pixelwise_select_oracle(self, rng):
        raw, src = rng.random((6, 6, 3)), rng.random((6, 6, 3))
        mask = random_mask(rng, 6, 6)
        out = composite(raw, src, mask)
        for i in range(6):
            for j in range(6):
                expected = src[i, j] if mask[i, j] else raw[i, j]
                np.testing.assert_array_equal(out[i, j], expected)

    def test_self_composite_is_identity(self, rng):
        x = rng.random((4, 4, 3))
        mask = random_mask(rng, 4, 4)
        np.testing.assert_array_equal(composite(x, x, mask), x)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            composite(rng.random((4, 4, 3)), rng.random((4, 4, 3)),
                      np.ones((3, 3), np.uint8))
