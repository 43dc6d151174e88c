import os

import numpy as np
import pytest
from PIL import Image

from ctanet.core.dataset import read_dataset
from ctanet.core.errors import ConfigurationError
from ctanet.core.prng import SplitMix64, derive_seed
from ctanet.core.synth import (DIRECTIONS, ClassScript, ClipGeometry, SynthSpec, _point, clip_geometry,
                               default_class_table, export_pgm, generate_dataset, parse_class_table, phase_of,
                               render_clip, synth_generate)


def test_default_benchmark_size():
    """The default benchmark has six classes of forty videos."""
    spec = SynthSpec()
    assert spec.num_videos == 240
    assert default_class_table(6) == '0:amw,0:wma,1:amw,1:wma,2:amw,2:wma'
    assert spec.order_pairs() == [(0, 1), (2, 3), (4, 5)]


def test_generation_is_deterministic(tiny_spec):
    """Equal seeds give identical videos; a different seed changes them."""
    first = synth_generate(tiny_spec)
    assert first == synth_generate(tiny_spec)
    assert first != synth_generate(tiny_spec, seed=4)


def test_generation_independent_of_workers(tiny_spec):
    """Threaded rendering produces the same dataset."""
    assert synth_generate(tiny_spec, workers=3) == synth_generate(tiny_spec, workers=1)


def test_generated_videos_are_balanced_and_valid(tiny_spec):
    """Every class gets its videos, with in-range lengths and pixels."""
    dataset = synth_generate(tiny_spec)
    assert len(dataset) == 20
    assert np.bincount(dataset.labels).tolist() == [5, 5, 5, 5]
    assert [s.video_id for s in dataset] == list(range(20))
    for sample in dataset:
        assert sample.frames.dtype == np.float32
        assert sample.frames.shape[1:] == (1, 16, 16)
        assert 6 <= sample.num_frames <= 9
        assert sample.frames.min() >= 0.0 and sample.frames.max() <= 1.0


@pytest.mark.parametrize('num_frames', [6, 7, 8, 9, 20])
def test_order_pair_shares_frames(tiny_spec, num_frames):
    """Reversing the phase order permutes the same noise-free frames."""
    geometry = ClipGeometry(num_frames, (8, 8), 1, 6)
    forward = render_clip(ClassScript(1, 'amw'), geometry, tiny_spec)
    backward = render_clip(ClassScript(1, 'wma'), geometry, tiny_spec)
    assert forward.shape == backward.shape == (num_frames, 16, 16)
    assert sorted(f.tobytes() for f in forward) == sorted(f.tobytes() for f in backward)
    assert not np.array_equal(forward, backward)
    withdraw_start = next(i for i in range(num_frames) if phase_of(i, num_frames) == 2)
    np.testing.assert_array_equal(backward[0], forward[withdraw_start])


def test_textures_differ(tiny_spec):
    """Classes differing only in texture render different manipulation frames."""
    geometry = ClipGeometry(9, (8, 8), 0, 3)
    horizontal = render_clip(ClassScript(0, 'amw'), geometry, tiny_spec)
    vertical = render_clip(ClassScript(1, 'amw'), geometry, tiny_spec)
    np.testing.assert_array_equal(horizontal[0], vertical[0])
    assert not np.array_equal(horizontal[4], vertical[4])


def test_geometry_validation():
    """A hand or object that does not fit the frame is rejected."""
    with pytest.raises(ConfigurationError):
        SynthSpec(image_size=16, hand_radius=8, object_size=6)
    with pytest.raises(ConfigurationError):
        SynthSpec(image_size=16, hand_radius=2, object_size=10)
    with pytest.raises(ConfigurationError):
        SynthSpec(min_frames=10, max_frames=9)


def test_class_table_validation():
    """Tables need an order pair and a texture pair and must parse."""
    with pytest.raises(ConfigurationError):
        SynthSpec(num_classes=2, class_table='0:amw,1:amw')
    with pytest.raises(ConfigurationError):
        SynthSpec(num_classes=2, class_table='0:amw,0:wma')
    with pytest.raises(ConfigurationError):
        SynthSpec(num_classes=3, class_table='0:amw,0:wma')
    with pytest.raises(ConfigurationError):
        parse_class_table('0-amw')
    with pytest.raises(ConfigurationError):
        parse_class_table('9:amw')
    spec = SynthSpec(num_classes=3, class_table='2:wma, 1:amw, 2:amw')
    assert spec.order_pairs() == [(2, 0)]


def test_generate_dataset_writes_and_exports(tmp_path, tiny_spec):
    """The directory reads back and exported frames are 8-bit greyscale PGMs."""
    out = generate_dataset(str(tmp_path / 'bench'), tiny_spec, export_frames=2)
    dataset = read_dataset(out)
    assert dataset == synth_generate(tiny_spec)
    frames_dir = os.path.join(out, 'frames')
    expected = dataset[0].num_frames + dataset[1].num_frames
    assert len(os.listdir(frames_dir)) == expected
    image = Image.open(os.path.join(frames_dir, 'video_00000_frame_000.pgm'))
    assert image.mode == 'L' and image.size == (16, 16)


def test_export_pgm_scales_pixels(tmp_path, tiny_spec):
    """Pixel values map to round(255 * v)."""
    dataset = synth_generate(tiny_spec)
    (path, *_rest) = export_pgm(dataset, str(tmp_path / 'frames'), 1)
    pixels = np.asarray(Image.open(path))
    np.testing.assert_array_equal(pixels, np.rint(dataset[0].frames[0, 0] * 255.0).astype(np.uint8))


def test_noise_stays_within_amplitude(tiny_spec):
    """Noisy pixels stay within the noise amplitude of the clean render."""
    stream = SplitMix64(derive_seed(tiny_spec.seed, 0))
    geometry = clip_geometry(tiny_spec, stream)
    clean = render_clip(tiny_spec.scripts()[0], geometry, tiny_spec)
    noisy = synth_generate(tiny_spec)[0].frames[:, 0]
    assert noisy.shape == clean.shape
    assert np.max(np.abs(noisy - clean)) <= tiny_spec.noise + 1e-6


def test_direction_table_is_unit_length():
    """Table entries are rounded unit vectors scaled by 1024."""
    assert len(DIRECTIONS) == 16
    for dx, dy in DIRECTIONS:
        assert abs(dx * dx + dy * dy - 1024 * 1024) < 2 * 1024


def test_hand_positions_are_integer_steps(tiny_spec):
    """Hand centres follow the direction table with round-half-up integer division."""
    assert _point((8, 8), 2, 5, 1) == (12, 12)
    assert _point((8, 8), 8, 32, 5) == (2, 8)
    frames = render_clip(ClassScript(0, 'amw'), ClipGeometry(3, (8, 8), 0, 8), tiny_spec)
    approach, withdraw = frames[0], frames[2]
    assert approach[8, 8] == 1.0
    assert withdraw[8, 0] == 1.0 and withdraw[8, 4] == 1.0
    assert withdraw[8, 2] != 1.0
