import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atv_stereo.errors import InputError
from atv_stereo.features import (
    FeatureConfig,
    area_downsample,
    build_feature_pyramid,
    scale_size,
    standardize,
)


def textured(h=48, w=64, seed=0):
    rng = np.random.default_rng(seed)
    from scipy.ndimage import gaussian_filter

    return np.clip(gaussian_filter(rng.uniform(size=(h, w, 3)), (1.5, 1.5, 0)) * 2 - 0.5, 0, 1)


def test_default_channel_counts():
    maps = build_feature_pyramid(textured())
    assert [m.channels for m in maps] == [32, 16, 8]
    assert [m.scale_index for m in maps] == [1, 2, 3]
    assert all(m.values.dtype == np.float32 and np.isfinite(m.values).all() for m in maps)


def test_constant_image_has_no_structure():
    for m in build_feature_pyramid(np.full((32, 40, 3), 0.3)):
        assert not m.values.any()


def test_shift_by_four_pixels_shifts_quarter_scale_by_one():
    cfg = FeatureConfig(boundary="wrap")
    img = textured()
    shifted = np.roll(img, 4, axis=1)
    a = build_feature_pyramid(img, cfg)[0].values
    b = build_feature_pyramid(shifted, cfg)[0].values
    # interior columns only; the wrapped border column is excluded too
    np.testing.assert_allclose(b[2:-2, 3:-2], np.roll(a, 1, axis=1)[2:-2, 3:-2], atol=1e-5)


def test_too_small_image_rejected():
    with pytest.raises(InputError):
        build_feature_pyramid(np.zeros((7, 20, 3)))


def test_deterministic():
    img = textured(seed=3)
    a = build_feature_pyramid(img)
    b = build_feature_pyramid(img.copy())
    for x, y in zip(a, b):
        assert x.values.tobytes() == y.values.tobytes()


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 70), st.integers(8, 70))
def test_sizes_follow_ceiling_formula(w, h):
    img = np.random.default_rng(w * 100 + h).uniform(size=(h, w, 3))
    for m, k in zip(build_feature_pyramid(img), (1, 2, 3)):
        f = {1: 4, 2: 2, 3: 1}[k]
        assert m.shape == (-(-h // f), -(-w // f))
        assert scale_size(w, h, k) == (m.shape[1], m.shape[0])


@settings(max_examples=10, deadline=None)
@given(st.floats(-0.5, 0.5))
def test_brightness_offset_leaves_features_unchanged(c):
    img = textured(seed=1)
    a = build_feature_pyramid(img)
    b = build_feature_pyramid(img + c)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.values, y.values, atol=1e-5)


def test_area_downsample_averages_blocks_including_partial_ones():
    img = np.arange(5 * 6, dtype=np.float64).reshape(5, 6)
    out = area_downsample(img, 4)
    assert out.shape == (2, 2)
    assert out[0, 0] == img[:4, :4].mean()
    assert out[1, 1] == img[4:, 4:].mean()


def test_standardize_unit_moments():
    ch = np.random.default_rng(2).normal(3.0, 2.0, size=(20, 20))
    s = standardize(ch)
    assert abs(s.mean()) < 1e-12 and abs(s.std() - 1) < 1e-12
    assert not standardize(np.full((4, 4), 7.0)).any()
