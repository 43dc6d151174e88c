import hashlib
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from sklearn.model_selection import train_test_split

from ctanet.core.dataset import VideoDataset
from ctanet.core.errors import ConfigurationError


logger = logging.getLogger(__name__)


@dataclass
class DatasetSplit:
    """Train / validation / test partitions of one dataset and the hash of their video ids."""
    train: VideoDataset
    valid: VideoDataset
    test: VideoDataset
    split_hash: str


def split_hash(parts: Sequence[VideoDataset]) -> str:
    """SHA-256 of the video ids of every part, in order."""
    digest = hashlib.sha256()
    for name, part in zip(('train', 'valid', 'test'), parts):
        ids = ','.join(str(s.video_id) for s in part)
        digest.update(f"{name}:{ids};".encode('utf-8'))
    return digest.hexdigest()


def _stratified(indices: np.ndarray, labels: np.ndarray, test_size: float, seed: int):
    try:
        return train_test_split(indices, test_size=test_size, random_state=seed, stratify=labels)
    except ValueError as e:
        logger.warning(f"stratified split impossible ({e}); falling back to a seeded random split")
        return train_test_split(indices, test_size=test_size, random_state=seed)


def train_valid_test_split(dataset: VideoDataset,
                           frac_train: float = 0.6,
                           frac_valid: float = 0.2,
                           frac_test: float = 0.2,
                           seed: int = 0) -> DatasetSplit:
    """Seeded, label-stratified split of a video dataset.

    Parameters
    ----------
    dataset: VideoDataset
        Videos to partition.
    frac_train: float
        Fraction of videos used for training.
    frac_valid: float
        Fraction used for validation; may be 0.
    frac_test: float
        Fraction held out for testing; may be 0.
    seed: int
        Seed of the shuffles. Equal seeds give equal splits.

    Returns
    -------
    DatasetSplit
        Partitions keep the dataset order of their videos.
    """
    frac_train, frac_valid, frac_test = float(frac_train), float(frac_valid), float(frac_test)
    if min(frac_train, frac_valid, frac_test) < 0 or frac_train <= 0:
        raise ConfigurationError("split fractions must be non-negative with a positive train fraction")
    if not np.isclose(frac_train + frac_valid + frac_test, 1.0):
        raise ConfigurationError(f"split fractions sum to {frac_train + frac_valid + frac_test}, expected 1")
    labels = dataset.labels
    remaining = np.arange(len(dataset))
    test_idx: Optional[np.ndarray] = None
    valid_idx: Optional[np.ndarray] = None
    if frac_test > 0:
        remaining, test_idx = _stratified(remaining, labels, frac_test, seed)
    if frac_valid > 0:
        share = frac_valid / (frac_train + frac_valid)
        remaining, valid_idx = _stratified(remaining, labels[remaining], share, seed + 1)

    def part(idx: Optional[np.ndarray]) -> VideoDataset:
        chosen: List[int] = [] if idx is None else sorted(int(i) for i in idx)
        return dataset.subset(chosen)

    train, valid, test = part(remaining), part(valid_idx), part(test_idx)
    digest = split_hash((train, valid, test))
    logger.info(f"split {len(dataset)} videos into {len(train)}/{len(valid)}/{len(test)} (split hash {digest[:16]})")
    return DatasetSplit(train=train, valid=valid, test=test, split_hash=digest)
