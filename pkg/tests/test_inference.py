import numpy as np
import pytest
import torch

from adgan.inference import (
    binarize,
    instance_from_ternary,
    interpolate_domains,
    segment,
    semantic_postprocess,
    ternarize,
    translate,
)
from adgan.masksynth import EllipseSpec, MaskSpec, rasterize_instance_mask, rasterize_mask
from adgan.model import domain_label


def test_binarize_threshold():
    y = np.array([-1.0, -0.01, 0.0, 0.01, 1.0])
    assert binarize(y).tolist() == [False, False, False, True, True]


def test_dumbbell_splits_in_two():
    spec = MaskSpec(40, 64, [EllipseSpec(18, 20, 10, 10, 0), EllipseSpec(46, 20, 10, 10, 0)])
    mask = rasterize_mask(spec) > 0
    mask[19:22, 18:46] = True  # bridge thinner than the erosion disk
    labels = semantic_postprocess(mask)
    assert labels.max() == 2
    assert np.array_equal(labels > 0, mask)


def test_separate_blobs_stay_separate():
    spec = MaskSpec(64, 64, [EllipseSpec(15, 15, 8, 8, 0), EllipseSpec(45, 45, 8, 6, 0.5)])
    assert semantic_postprocess(rasterize_mask(spec) > 0).max() == 2
    assert semantic_postprocess(np.zeros((8, 8), bool)).max() == 0


def test_ternarize_bins():
    assert ternarize(np.array([-1.0, -0.2, 0.0, 0.5])).tolist() == [0, 1, 1, 2]


def test_instance_passthrough_of_touching_pair():
    spec = MaskSpec(40, 64, [EllipseSpec(20.0, 20.0, 10.0, 10.0, 0.0), EllipseSpec(40.0, 20.0, 10.0, 10.0, 0.0)])
    tern = rasterize_instance_mask(spec).astype(np.float32)
    labels = instance_from_ternary(tern)
    assert labels.max() == 2
    # every foreground pixel (edge or interior) is assigned
    assert np.array_equal(labels > 0, tern > -0.33)


def test_translate_shape_and_range(desk_gen):
    x = np.random.default_rng(0).uniform(-1, 1, (48, 40)).astype(np.float32)
    y = translate(desk_gen, x, 0, 1)
    assert y.shape == x.shape and np.abs(y).max() <= 1
    with pytest.raises(ValueError):
        translate(desk_gen, x[:46], 0, 1)


def test_translate_matches_forward(desk_gen):
    x = np.random.default_rng(1).uniform(-1, 1, (32, 32)).astype(np.float32)
    with torch.no_grad():
        ref = desk_gen(torch.from_numpy(x)[None, None], domain_label(0), domain_label(1))[0, 0].numpy()
    np.testing.assert_allclose(translate(desk_gen, x, 0, 1), ref, atol=1e-6)


def test_tiling_uniform_image_is_seamless(desk_gen):
    G = desk_gen.double()
    x = np.full((96, 96), 0.3)
    full = translate(G, x, 0, 1).astype(np.float64)
    tiled = translate(G, x, 0, 1, tile=64, overlap=16).astype(np.float64)
    np.testing.assert_allclose(tiled, full, atol=1e-5)


def test_tiling_random_image_interior_close(desk_gen):
    x = np.random.default_rng(2).uniform(-1, 1, (96, 96)).astype(np.float32)
    tiled = translate(desk_gen, x, 0, 1, tile=64, overlap=32)
    assert tiled.shape == x.shape and np.isfinite(tiled).all()
    with pytest.raises(ValueError):
        translate(desk_gen, x, 0, 1, tile=64, overlap=8)


def test_interpolation_endpoints_exact(desk_gen):
    x = np.random.default_rng(3).uniform(-1, 1, (32, 32)).astype(np.float32)
    frames = interpolate_domains(desk_gen, x, 5)
    assert len(frames) == 5
    np.testing.assert_array_equal(frames[0], translate(desk_gen, x, 0, 0))
    np.testing.assert_array_equal(frames[-1], translate(desk_gen, x, 0, 1))
    with pytest.raises(ValueError):
        interpolate_domains(desk_gen, x, 1)


def test_segment_outputs(desk_gen):
    x = np.random.default_rng(4).uniform(-1, 1, (32, 32)).astype(np.float32)
    mask, labels = segment(desk_gen, x)
    assert mask.dtype == bool and labels.shape == x.shape
    assert np.array_equal(labels > 0, mask)
