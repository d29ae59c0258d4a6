import numpy as np
import pytest

from palmscope.prep import (AugmentRanges, AugmentStep, augment_image, normalize_pixels, parse_step,
                            resize_image, sample_steps)


@pytest.fixture
def square(rng):
    return rng.integers(0, 256, size=(31, 31, 3), dtype=np.uint8)


@pytest.fixture
def oblong(rng):
    return rng.integers(0, 256, size=(20, 33, 3), dtype=np.uint8)


def test_resize_identity(rng):
    img = rng.integers(0, 256, size=(300, 300, 3), dtype=np.uint8)
    assert np.array_equal(resize_image(img, 300, 300), img)


def test_resize_constant_image():
    img = np.full((17, 23, 3), (12, 200, 99), dtype=np.uint8)
    out = resize_image(img, 300, 300)
    assert out.shape == (300, 300, 3)
    assert (out == (12, 200, 99)).all()


def test_resize_2x2_to_1x1_is_rounded_mean():
    img = np.zeros((2, 2, 3), dtype=np.uint8)
    img[0, 1] = img[1, 0] = 255
    assert resize_image(img, 1, 1)[0, 0].tolist() == [128, 128, 128]


def test_resize_output_dims(oblong):
    assert resize_image(oblong, 7, 45).shape == (45, 7, 3)


def test_normalize():
    img = np.array([[[255, 0, 51]]], dtype=np.uint8)
    assert normalize_pixels(img).tolist() == [[[1.0, 0.0, 0.2]]]


def test_normalize_bounds(rng):
    out = normalize_pixels(rng.integers(0, 256, size=(10, 10, 3), dtype=np.uint8))
    assert out.min() >= 0.0 and out.max() <= 1.0


@pytest.mark.parametrize("fixture", ["square", "oblong"])
def test_flips_are_involutions(fixture, request):
    img = request.getfixturevalue(fixture)
    assert np.array_equal(augment_image(augment_image(img, ["flip_h"]), ["flip_h"]), img)
    assert np.array_equal(augment_image(augment_image(img, ["flip_v"]), ["flip_v"]), img)
    assert np.array_equal(augment_image(img, ["flip_h"]), img[:, ::-1])
    assert np.array_equal(augment_image(img, ["flip_v"]), img[::-1])


def test_rotate_90_four_times_is_identity(square):
    out = square
    for _ in range(4):
        out = augment_image(out, ["rotate(90)"])
    assert np.array_equal(out, square)
    assert np.array_equal(augment_image(square, ["rotate(90)"]), np.rot90(square))


@pytest.mark.parametrize("fixture", ["square", "oblong"])
def test_rotate_180_is_double_flip(fixture, request):
    img = request.getfixturevalue(fixture)
    assert np.array_equal(augment_image(img, [AugmentStep("rotate", 180)]),
                          augment_image(img, ["flip_h", "flip_v"]))


def test_identity_parameters(oblong):
    steps = [{"op": "zoom", "value": 1.0}, {"op": "shear_h", "value": 0}, {"op": "shear_v", "value": 0},
             {"op": "rotate", "value": 0}]
    assert np.array_equal(augment_image(oblong, steps), oblong)


def test_zoom_must_be_positive():
    with pytest.raises(ValueError):
        AugmentStep("zoom", 0.0)
    with pytest.raises(ValueError):
        parse_step("zoom(-1)")
    with pytest.raises(ValueError):
        parse_step("spin(3)")


def test_fill_replicates_edges():
    img = np.zeros((9, 9, 3), dtype=np.uint8)
    img[:, 0] = 200  # left column bright
    out = augment_image(img, ["zoom(0.5)"])
    # shrinking exposes a border filled from the nearest edge column
    assert (out[:, 0] == 200).all()
    assert out.shape == img.shape


def test_shear_moves_rows():
    img = np.zeros((5, 5, 3), dtype=np.uint8)
    img[:, 2] = 255
    out = augment_image(img, ["shear_h(1)"])
    # dest x = src x + (y - 2): the vertical line becomes a diagonal
    assert [int(np.argmax(out[y, :, 0])) for y in range(5)] == [0, 1, 2, 3, 4]


def test_sample_steps_deterministic():
    a = sample_steps(np.random.default_rng(7), AugmentRanges())
    b = sample_steps(np.random.default_rng(7), AugmentRanges())
    assert a == b
    assert {s.op for s in a} >= {"rotate", "shear_h", "shear_v", "zoom"}
