import numpy as np
import pytest

from ctanet.core.config import RunConfig, parse_run_config
from ctanet.core.glimpse import ConvStage, GlimpseConfig
from ctanet.core.model import CTANet
from ctanet.core.sequence import SequenceConfig
from ctanet.core.synth import SynthSpec, generate_dataset
from ctanet.core.train import TrainConfig, train_model

MICRO_CONFIG = """
# micro architecture used across the tests
glimpse.frames_per_video = 6
glimpse.image_size = 16
glimpse.trunk = 8:3:2
glimpse.head = 4:3:1
sequence.hidden_size = 4
sequence.num_classes = 4
train.frames_per_video = 6
train.epochs = 1
synth.num_classes = 4
synth.videos_per_class = 5
synth.min_frames = 6
synth.max_frames = 9
synth.image_size = 16
synth.hand_radius = 2
synth.object_size = 6
"""


@pytest.fixture
def micro_glimpse_config():
    return GlimpseConfig(num_branches=3,
                         frames_per_video=6,
                         image_size=16,
                         image_channels=1,
                         trunk=[ConvStage(8, 3, 2)],
                         head=ConvStage(4, 3, 1),
                         reduction=8)


@pytest.fixture
def micro_sequence_config():
    return SequenceConfig(hidden_size=4, num_classes=2)


@pytest.fixture
def micro_model(micro_glimpse_config, micro_sequence_config):
    return CTANet(micro_glimpse_config, micro_sequence_config, np.random.default_rng(0))


@pytest.fixture
def tiny_spec():
    return SynthSpec(num_classes=4,
                     videos_per_class=5,
                     min_frames=6,
                     max_frames=9,
                     image_size=16,
                     hand_radius=2,
                     object_size=6,
                     seed=3)


@pytest.fixture
def tiny_dataset_dir(tmp_path, tiny_spec):
    return generate_dataset(str(tmp_path / 'data'), tiny_spec)


@pytest.fixture
def micro_config_file(tmp_path):
    path = tmp_path / 'micro.cfg'
    path.write_text(MICRO_CONFIG)
    return str(path)


@pytest.fixture
def micro_run_config() -> RunConfig:
    return parse_run_config(MICRO_CONFIG)


@pytest.fixture
def micro_train_config():
    return TrainConfig(frames_per_video=6, epochs=2, batch_size=4, seed=0)


@pytest.fixture
def random_frames():
    return np.random.default_rng(11).uniform(0.0, 1.0, size=(6, 1, 16, 16))


@pytest.fixture(scope='session')
def trained_run(tmp_path_factory):
    """A dataset directory and a one-epoch micro checkpoint trained on it."""
    root = tmp_path_factory.mktemp('trained')
    run_config = parse_run_config(MICRO_CONFIG)
    data_dir = generate_dataset(str(root / 'data'), run_config.synth)
    checkpoint = train_model(data_dir, str(root / 'run'), run_config)
    return data_dir, checkpoint
