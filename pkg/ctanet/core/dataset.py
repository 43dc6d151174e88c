"""Video datasets and their on-disk format.

A dataset directory holds ``index.csv`` (columns ``video_id,label,num_frames,file``)
and one binary blob per video::

    b"CTAV1" <u4 L> <u4 C> <u4 S> <f4 pixels> * (L * C * S * S)

Pixels are stored row-major as ``L×C×S×S``.
"""
from dataclasses import dataclass
import hashlib
import logging
import os
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd

from ctanet.core.errors import ContractError, DataFormatError


logger = logging.getLogger(__name__)

VIDEO_MAGIC = b"CTAV1"
INDEX_FILE = 'index.csv'
INDEX_COLUMNS = ['video_id', 'label', 'num_frames', 'file']
BLOB_SUFFIX = '.ctav'
_HEADER_BYTES = len(VIDEO_MAGIC) + 12


@dataclass
class VideoSample:
    """One clip: ``L×C×S×S`` float32 frames in ``[0, 1]`` and its class label."""
    video_id: int
    label: int
    frames: np.ndarray

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def filename(self) -> str:
        return f"video_{self.video_id:05d}{BLOB_SUFFIX}"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VideoSample):
            return NotImplemented
        return (self.video_id == other.video_id and self.label == other.label and
                self.frames.dtype == other.frames.dtype and np.array_equal(self.frames, other.frames))


class VideoDataset:
    """Ordered collection of :class:`VideoSample` sharing one frame geometry."""

    def __init__(self, samples: Sequence[VideoSample]) -> None:
        self.samples: List[VideoSample] = list(samples)
        shapes = {s.frames.shape[1:] for s in self.samples}
        if len(shapes) > 1:
            raise ContractError(f"videos do not share frame geometry: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[VideoSample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> VideoSample:
        return self.samples[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VideoDataset):
            return NotImplemented
        return self.samples == other.samples

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def frame_shape(self) -> Optional[tuple]:
        return self.samples[0].frames.shape[1:] if self.samples else None

    def subset(self, indices: Sequence[int]) -> 'VideoDataset':
        return VideoDataset([self.samples[i] for i in indices])

    def by_id(self) -> Dict[int, VideoSample]:
        return {s.video_id: s for s in self.samples}

    def summary(self) -> pd.DataFrame:
        """Video count and mean length per label."""
        df = pd.DataFrame({'label': self.labels, 'num_frames': [s.num_frames for s in self.samples]})
        return df.groupby('label').agg(videos=('num_frames', 'size'), mean_frames=('num_frames', 'mean')).reset_index()


def encode_video(frames: np.ndarray) -> bytes:
    num_frames, channels, size, _ = frames.shape
    header = np.array([num_frames, channels, size], dtype='<u4').tobytes()
    return VIDEO_MAGIC + header + np.ascontiguousarray(frames, dtype='<f4').tobytes()


def decode_video(buffer: bytes, path: str, video_id: int) -> np.ndarray:
    """Decode one ``CTAV1`` blob.

    Raises
    ------
    DataFormatError
        On a bad magic or a truncated or oversized payload.
    """
    if buffer[:len(VIDEO_MAGIC)] != VIDEO_MAGIC:
        raise DataFormatError(f"{path}: bad magic for video {video_id}, expected {VIDEO_MAGIC!r}")
    if len(buffer) < _HEADER_BYTES:
        raise DataFormatError(f"{path}: truncated header for video {video_id}")
    num_frames, channels, size = (int(v) for v in np.frombuffer(buffer[len(VIDEO_MAGIC):_HEADER_BYTES], dtype='<u4'))
    expected = num_frames * channels * size * size * 4
    payload = len(buffer) - _HEADER_BYTES
    if payload < expected:
        raise DataFormatError(f"{path}: truncated blob for video {video_id} ({payload} of {expected} bytes)")
    if payload > expected:
        raise DataFormatError(f"{path}: {payload - expected} trailing bytes in blob for video {video_id}")
    pixels = np.frombuffer(buffer[_HEADER_BYTES:], dtype='<f4')
    return pixels.reshape(num_frames, channels, size, size).astype(np.float32)


def write_dataset(dataset: VideoDataset, path: str) -> str:
    """Write ``index.csv`` and one blob per video into directory ``path``.

    Blobs left in ``path`` by an earlier dataset are removed first.

    Returns
    -------
    str
        The dataset directory.
    """
    os.makedirs(path, exist_ok=True)
    keep = {sample.filename for sample in dataset}
    for stale in sorted(f for f in os.listdir(path) if f.endswith(BLOB_SUFFIX) and f not in keep):
        logger.info(f"removing stale blob {stale} from {path}")
        os.remove(os.path.join(path, stale))
    rows = []
    for sample in dataset:
        with open(os.path.join(path, sample.filename), 'wb') as f:
            f.write(encode_video(sample.frames))
        rows.append([sample.video_id, sample.label, sample.num_frames, sample.filename])
    pd.DataFrame(rows, columns=INDEX_COLUMNS).to_csv(os.path.join(path, INDEX_FILE), index=False)
    logger.info(f"wrote {len(dataset)} videos to {path}")
    return path


def read_index(path: str) -> pd.DataFrame:
    index_path = os.path.join(path, INDEX_FILE)
    if not os.path.isfile(index_path):
        raise DataFormatError(f"{index_path}: dataset manifest not found")
    index = pd.read_csv(index_path)
    if list(index.columns) != INDEX_COLUMNS:
        raise DataFormatError(f"{index_path}: expected columns {INDEX_COLUMNS}, got {list(index.columns)}")
    return index


def read_dataset(path: str) -> VideoDataset:
    """Load a dataset written by :func:`write_dataset`.

    Raises
    ------
    DataFormatError
        If the manifest is missing, a listed blob is missing, a blob is
        malformed or disagrees with its manifest row, or the directory holds
        blobs the manifest does not list.
    """
    index = read_index(path)
    listed = set(index['file'])
    extra = sorted(f for f in os.listdir(path) if f.endswith(BLOB_SUFFIX) and f not in listed)
    if extra:
        raise DataFormatError(f"{path}: manifest lists {len(index)} videos but found unlisted blobs {extra}")
    samples = []
    for row in index.itertuples(index=False):
        blob_path = os.path.join(path, row.file)
        if not os.path.isfile(blob_path):
            raise DataFormatError(f"missing blob file {blob_path} for video {row.video_id}")
        with open(blob_path, 'rb') as f:
            frames = decode_video(f.read(), blob_path, int(row.video_id))
        if frames.shape[0] != int(row.num_frames):
            raise DataFormatError(f"{blob_path}: video {row.video_id} has {frames.shape[0]} frames, "
                                  f"manifest says {row.num_frames}")
        samples.append(VideoSample(video_id=int(row.video_id), label=int(row.label), frames=frames))
    try:
        return VideoDataset(samples)
    except ContractError as e:
        raise DataFormatError(f"{path}: {e}")


def dataset_fingerprint(path: str) -> str:
    """SHA-256 over the manifest and every blob, in manifest order."""
    digest = hashlib.sha256()
    with open(os.path.join(path, INDEX_FILE), 'rb') as f:
        digest.update(f.read())
    for filename in read_index(path)['file']:
        with open(os.path.join(path, filename), 'rb') as f:
            digest.update(f.read())
    return digest.hexdigest()
