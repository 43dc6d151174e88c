import os

import numpy as np
import pytest
from PIL import Image

from ctanet.core.errors import ContractError
from ctanet.core.explain import (activation_map, explain_clip, explain_video, gradcam_map, normalize_map, resize_map,
                                 write_pgm)


def test_activation_map_weights_channels():
    """Channel weights are the spatially averaged gradients."""
    activations = np.array([[[1.0, 2.0]], [[3.0, 4.0]]])
    gradients = np.stack([np.full((1, 2), 0.5), np.full((1, 2), 0.25)])
    np.testing.assert_allclose(activation_map(activations, gradients), [[1.25, 2.0]])


def test_activation_map_clips_negative_evidence():
    """Opposing channel weights over equal activations cancel to zero."""
    activations = np.ones((2, 3, 3))
    gradients = np.stack([np.ones((3, 3)), -np.ones((3, 3))])
    np.testing.assert_array_equal(activation_map(activations, gradients), np.zeros((3, 3)))
    np.testing.assert_array_equal(activation_map(activations, -2.0 * np.ones((2, 3, 3))), np.zeros((3, 3)))


def test_normalize_map():
    """Min-max scaling, with constant maps mapped to ones or zeros."""
    np.testing.assert_allclose(normalize_map(np.array([1.0, 2.0, 3.0])), [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(normalize_map(np.full((2, 2), 0.3)), np.ones((2, 2)))
    np.testing.assert_array_equal(normalize_map(np.zeros((2, 2))), np.zeros((2, 2)))


def test_gradcam_map_averages_frames():
    """The stack map is the normalised mean of the per-frame maps."""
    rng = np.random.default_rng(0)
    activations = rng.uniform(size=(3, 4, 2, 2))
    gradients = rng.normal(size=(3, 4, 2, 2))
    expected = normalize_map(np.mean([activation_map(a, g) for a, g in zip(activations, gradients)], axis=0))
    np.testing.assert_allclose(gradcam_map(activations, gradients), expected)
    np.testing.assert_allclose(gradcam_map(activations[0], gradients[0]),
                               normalize_map(activation_map(activations[0], gradients[0])))


def test_resize_map():
    """Resizing yields an S×S map and keeps constant maps constant."""
    out = resize_map(np.full((4, 4), 0.5), 16)
    assert out.shape == (16, 16)
    np.testing.assert_allclose(out, 0.5, atol=1e-6)


def test_write_pgm(tmp_path):
    """Maps are stored as 8-bit grey levels."""
    path = write_pgm(np.array([[0.0, 1.0], [0.5, 2.0]]), str(tmp_path / 'map.pgm'))
    with Image.open(path) as image:
        assert image.mode == 'L'
        pixels = np.asarray(image)
    np.testing.assert_array_equal(pixels, [[0, 255], [128, 255]])


def test_explain_clip_gives_one_map_per_branch(micro_model, random_frames):
    """Three S×S maps in [0, 1]; an unknown class is rejected."""
    maps = explain_clip(micro_model, random_frames, 1)
    assert len(maps) == 3
    for saliency in maps:
        assert saliency.shape == (16, 16)
        assert saliency.min() >= 0.0 and saliency.max() <= 1.0
    with pytest.raises(ContractError):
        explain_clip(micro_model, random_frames, 2)


def test_explain_video_writes_branch_maps(tmp_path, trained_run):
    """One PGM per branch named after its phase; unknown videos are rejected."""
    data_dir, checkpoint = trained_run
    paths = explain_video(checkpoint, data_dir, 0, str(tmp_path / 'maps'), class_id=0)
    assert [os.path.basename(p) for p in paths] == ['branch_0_before.pgm', 'branch_1_during.pgm', 'branch_2_after.pgm']
    for path in paths:
        with Image.open(path) as image:
            assert image.size == (16, 16)
    with pytest.raises(ContractError):
        explain_video(checkpoint, data_dir, 999, str(tmp_path / 'none'))


def test_uniform_evidence_gives_uniform_map():
    """Uniform activations with uniform positive gradients saturate to an all-ones map."""
    np.testing.assert_array_equal(gradcam_map(np.ones((3, 4, 4)), np.full((3, 4, 4), 0.2)), np.ones((4, 4)))


def test_single_channel_peak_is_found():
    """A one-hot activation region is the arg-max of the map."""
    activations = np.zeros((1, 5, 5))
    activations[0, 3, 1] = 2.0
    saliency = gradcam_map(activations, np.ones((1, 5, 5)))
    assert np.unravel_index(np.argmax(saliency), saliency.shape) == (3, 1)
    assert saliency[3, 1] == 1.0
