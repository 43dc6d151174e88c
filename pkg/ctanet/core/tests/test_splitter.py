import numpy as np
import pytest

from ctanet.core.dataset import VideoDataset, VideoSample
from ctanet.core.errors import ConfigurationError
from ctanet.core.splitter import split_hash, train_valid_test_split


@pytest.fixture
def labelled_dataset():
    frames = np.zeros((2, 1, 2, 2), dtype=np.float32)
    return VideoDataset([VideoSample(video_id=i, label=i % 5, frames=frames) for i in range(100)])


def test_split_sizes_and_stratification(labelled_dataset):
    """A 60/20/20 split keeps every class equally represented."""
    split = train_valid_test_split(labelled_dataset, 0.6, 0.2, 0.2, seed=0)
    assert (len(split.train), len(split.valid), len(split.test)) == (60, 20, 20)
    for part, per_class in ((split.train, 12), (split.valid, 4), (split.test, 4)):
        assert np.bincount(part.labels, minlength=5).tolist() == [per_class] * 5


def test_split_is_a_partition(labelled_dataset):
    """Every video lands in exactly one part, in dataset order."""
    split = train_valid_test_split(labelled_dataset, seed=3)
    ids = [[s.video_id for s in part] for part in (split.train, split.valid, split.test)]
    assert sorted(i for part in ids for i in part) == list(range(100))
    assert all(part == sorted(part) for part in ids)


def test_split_hash_is_stable(labelled_dataset):
    """Equal seeds give equal hashes; other seeds give other partitions."""
    first = train_valid_test_split(labelled_dataset, seed=1)
    second = train_valid_test_split(labelled_dataset, seed=1)
    other = train_valid_test_split(labelled_dataset, seed=2)
    assert first.split_hash == second.split_hash
    assert first.split_hash == split_hash((first.train, first.valid, first.test))
    assert first.split_hash != other.split_hash


def test_split_without_validation(labelled_dataset):
    """A zero validation fraction leaves the validation part empty."""
    split = train_valid_test_split(labelled_dataset, 0.8, 0.0, 0.2)
    assert len(split.valid) == 0
    assert len(split.train) == 80


def test_tiny_split_falls_back(caplog):
    """Too few videos per class still split, without stratification."""
    frames = np.zeros((1, 1, 2, 2), dtype=np.float32)
    dataset = VideoDataset([VideoSample(video_id=i, label=i, frames=frames) for i in range(5)])
    split = train_valid_test_split(dataset, 0.6, 0.2, 0.2)
    assert len(split.train) + len(split.valid) + len(split.test) == 5
    assert 'falling back' in caplog.text


@pytest.mark.parametrize('fractions', [(0.5, 0.2, 0.2), (0.0, 0.5, 0.5), (0.8, -0.1, 0.3)])
def test_bad_fractions(labelled_dataset, fractions):
    """Fractions must be non-negative, sum to one and train must be positive."""
    with pytest.raises(ConfigurationError):
        train_valid_test_split(labelled_dataset, *fractions)
