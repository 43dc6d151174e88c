"""Procedural phase-structured videos.

Every clip shows three phases: a solid "hand" disc approaching an object, the
textured object being manipulated with the hand circling it, and a ring
shaped hand withdrawing. A class fixes the object texture and the phase order
(``amw`` = approach, manipulate, withdraw or its reverse ``wma``). A ``wma``
clip is the ``amw`` clip with the first and last phase segments swapped, so
the two orders share the same noise-free frames and differ only in ordering.

Randomness comes from one SplitMix64 stream per ``(seed, video_id)``, so the
output never depends on generation order or worker count.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import os
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from ctanet.core.dataset import VideoDataset, VideoSample, write_dataset
from ctanet.core.errors import ConfigurationError
from ctanet.core.prng import SplitMix64, derive_seed
from ctanet.core.progress_logger import log_progress


logger = logging.getLogger(__name__)

TEXTURES = ('horizontal', 'vertical', 'checker', 'diagonal')
PHASE_ORDERS = ('amw', 'wma')
BACKGROUND = 0.1

# round(1024 * (cos, sin)) of the sixteen compass directions k * 22.5 degrees
DIRECTIONS = ((1024, 0), (946, 392), (724, 724), (392, 946), (0, 1024), (-392, 946), (-724, 724), (-946, 392),
              (-1024, 0), (-946, -392), (-724, -724), (-392, -946), (0, -1024), (392, -946), (724, -724), (946, -392))
DIRECTION_UNIT = 1024


@dataclass(frozen=True)
class ClassScript:
    """Object texture and phase order of one class, written ``texture:order``."""
    texture: int
    order: str

    def __post_init__(self) -> None:
        if not 0 <= self.texture < len(TEXTURES):
            raise ConfigurationError(f"texture id {self.texture} out of range [0, {len(TEXTURES)})")
        if self.order not in PHASE_ORDERS:
            raise ConfigurationError(f"phase order '{self.order}' must be one of {PHASE_ORDERS}")

    def __str__(self) -> str:
        return f"{self.texture}:{self.order}"


def default_class_table(num_classes: int) -> str:
    """Class ``c`` gets texture ``c // 2`` and order ``amw`` for even ``c``, ``wma`` for odd."""
    return ','.join(f"{(c // 2) % len(TEXTURES)}:{PHASE_ORDERS[c % 2]}" for c in range(num_classes))


def parse_class_table(text: str) -> List[ClassScript]:
    scripts = []
    for entry in text.split(','):
        try:
            texture, order = entry.strip().split(':')
            scripts.append(ClassScript(int(texture), order.strip()))
        except ValueError as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(f"class table entry '{entry}' is not of the form texture:order")
    return scripts


@dataclass
class SynthSpec:
    """Parameters of the synthetic benchmark.

    Parameters
    ----------
    num_classes : int
        Number of classes K.
    videos_per_class : int
        Clips generated for every class.
    min_frames, max_frames : int
        Inclusive clip length range.
    image_size : int
        Frame side S.
    image_channels : int
        Frame channels (the grey image is replicated).
    noise : float
        Amplitude of the additive uniform noise.
    seed : int
        Base seed.
    class_table : str, optional
        ``texture:order`` per class, comma separated; defaults to
        :func:`default_class_table`.
    hand_radius : int
        Radius of the hand disc in pixels.
    object_size : int
        Side of the square object patch in pixels.
    """
    num_classes: int = 6
    videos_per_class: int = 40
    min_frames: int = 18
    max_frames: int = 36
    image_size: int = 64
    image_channels: int = 1
    noise: float = 0.02
    seed: int = 7
    class_table: Optional[str] = None
    hand_radius: int = 6
    object_size: int = 20

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.videos_per_class < 1:
            raise ConfigurationError(f"videos_per_class must be >= 1, got {self.videos_per_class}")
        if not 1 <= self.min_frames <= self.max_frames:
            raise ConfigurationError(f"frame range [{self.min_frames}, {self.max_frames}] is empty")
        if self.image_channels < 1 or self.noise < 0:
            raise ConfigurationError("image_channels must be positive and noise non-negative")
        if self.hand_radius < 2 or 2 * self.hand_radius + 1 > self.image_size:
            raise ConfigurationError(f"hand radius {self.hand_radius} does not fit a {self.image_size}px frame")
        if self.object_size < 2 or self.object_size > self.image_size // 2:
            raise ConfigurationError(f"object size {self.object_size} does not fit a {self.image_size}px frame")
        scripts = self.scripts()
        if len(scripts) != self.num_classes:
            raise ConfigurationError(f"class table lists {len(scripts)} classes, num_classes is {self.num_classes}")
        if len(set(scripts)) != len(scripts):
            raise ConfigurationError("class table contains duplicate classes")
        if not self.order_pairs():
            raise ConfigurationError("class table needs a pair of classes differing only in phase order")
        if not any(a.order == b.order and a.texture != b.texture for a in scripts for b in scripts):
            raise ConfigurationError("class table needs a pair of classes differing only in texture")

    def scripts(self) -> List[ClassScript]:
        return parse_class_table(self.class_table or default_class_table(self.num_classes))

    def order_pairs(self) -> List[Tuple[int, int]]:
        """Class pairs ``(amw, wma)`` that share a texture."""
        scripts = self.scripts()
        return [(i, j)
                for i, a in enumerate(scripts)
                for j, b in enumerate(scripts)
                if a.texture == b.texture and a.order == 'amw' and b.order == 'wma']

    @property
    def num_videos(self) -> int:
        return self.num_classes * self.videos_per_class


@dataclass(frozen=True)
class ClipGeometry:
    """Per-clip random layout: length, object centre and hand entry/exit directions.

    Directions index ``DIRECTIONS``.
    """
    num_frames: int
    center: Tuple[int, int]
    entry_direction: int
    exit_direction: int


def texture_patch(texture: int, size: int) -> np.ndarray:
    """``size×size`` binary pattern of the given texture, as 0.35 / 0.75 intensities."""
    width = max(1, size // 5)
    v, u = np.indices((size, size))
    if texture == 0:
        bits = (v // width) % 2
    elif texture == 1:
        bits = (u // width) % 2
    elif texture == 2:
        bits = (u // width + v // width) % 2
    else:
        bits = ((u + v) // width) % 2
    return np.where(bits == 1, 0.75, 0.35)


def phase_of(i: int, num_frames: int) -> int:
    return min(3 * i // num_frames, 2)


def _disc(frame: np.ndarray, cx: int, cy: int, radius: int, ring: bool) -> None:
    v, u = np.indices(frame.shape)
    dist2 = (u - cx)**2 + (v - cy)**2
    mask = dist2 <= radius * radius
    if ring:
        mask &= dist2 > (radius - 2) * (radius - 2)
    frame[mask] = 1.0


def _round_div(numerator: int, denominator: int) -> int:
    return (2 * numerator + denominator) // (2 * denominator)


def _point(center: Tuple[int, int], direction: int, numerator: int, denominator: int) -> Tuple[int, int]:
    """``center`` moved ``numerator / denominator`` pixels along a table direction, in integer arithmetic."""
    dx, dy = DIRECTIONS[direction % len(DIRECTIONS)]
    scale = DIRECTION_UNIT * denominator
    return center[0] + _round_div(dx * numerator, scale), center[1] + _round_div(dy * numerator, scale)


def render_clip(script: ClassScript, geometry: ClipGeometry, spec: SynthSpec) -> np.ndarray:
    """Noise-free ``L×S×S`` grey frames of one clip.

    The hand reaches ``2/5`` of the frame size from the object centre; its
    positions are computed from ``DIRECTIONS`` with integers only.
    """
    size, num_frames = spec.image_size, geometry.num_frames
    counts = [sum(1 for i in range(num_frames) if phase_of(i, num_frames) == p) for p in range(3)]
    cx, cy = geometry.center
    patch = texture_patch(script.texture, spec.object_size)
    half = spec.object_size // 2
    low = spec.hand_radius
    high = size - 1 - spec.hand_radius

    def hand(point: Tuple[int, int]) -> Tuple[int, int]:
        return min(max(point[0], low), high), min(max(point[1], low), high)

    segments: List[List[np.ndarray]] = [[], [], []]
    for phase, count in enumerate(counts):
        for k in range(count):
            frame = np.full((size, size), BACKGROUND)
            if phase == 0:
                point = _point(geometry.center, geometry.entry_direction, 2 * size * (count - k - 1), 5 * count)
                _disc(frame, *hand(point), spec.hand_radius, ring=False)
            elif phase == 1:
                frame[cy - half:cy - half + spec.object_size, cx - half:cx - half + spec.object_size] = patch
                direction = geometry.entry_direction + len(DIRECTIONS) * (k + 1) // count
                point = _point(geometry.center, direction, half + spec.hand_radius, 1)
                _disc(frame, *hand(point), spec.hand_radius, ring=False)
            else:
                point = _point(geometry.center, geometry.exit_direction, 2 * size * (k + 1), 5 * count)
                _disc(frame, *hand(point), spec.hand_radius, ring=True)
            segments[phase].append(frame)
    if script.order == 'wma':
        segments = [segments[2], segments[1], segments[0]]
    return np.stack([frame for segment in segments for frame in segment])


def clip_geometry(spec: SynthSpec, stream: SplitMix64) -> ClipGeometry:
    num_frames = int(stream.integers(spec.min_frames, spec.max_frames)[0])
    margin = spec.object_size // 2 + 1
    jitter = max(0, spec.image_size // 8)
    offsets = stream.integers(-jitter, jitter, 2)
    center = tuple(min(max(spec.image_size // 2 + int(o), margin), spec.image_size - margin) for o in offsets)
    entry, exit_direction = stream.integers(0, len(DIRECTIONS) - 1, 2)
    return ClipGeometry(num_frames, center, int(entry), int(exit_direction))  # type: ignore


def synth_video(spec: SynthSpec, seed: int, video_id: int, label: int) -> VideoSample:
    """Render one clip with its own ``(seed, video_id)`` stream."""
    stream = SplitMix64(derive_seed(seed, video_id))
    geometry = clip_geometry(spec, stream)
    frames = render_clip(spec.scripts()[label], geometry, spec)
    noise = stream.uniform(frames.size, -spec.noise, spec.noise).reshape(frames.shape)
    frames = np.clip(frames + noise, 0.0, 1.0).astype(np.float32)
    frames = np.repeat(frames[:, None], spec.image_channels, axis=1)
    return VideoSample(video_id=video_id, label=label, frames=frames)


def synth_generate(spec: SynthSpec, seed: Optional[int] = None, workers: int = 1) -> VideoDataset:
    """Generate the full benchmark.

    Parameters
    ----------
    spec : SynthSpec
        Benchmark parameters.
    seed : int, optional
        Overrides ``spec.seed``.
    workers : int
        Threads rendering clips; the output is identical for any value.

    Returns
    -------
    VideoDataset
        ``num_classes * videos_per_class`` clips, video ``c * videos_per_class + j``
        being clip ``j`` of class ``c``.
    """
    seed = spec.seed if seed is None else seed
    jobs = [(c * spec.videos_per_class + j, c) for c in range(spec.num_classes) for j in range(spec.videos_per_class)]
    log_progress('generate', 0, f"rendering {len(jobs)} videos with seed {seed}")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(lambda job: synth_video(spec, seed, *job), jobs))
    else:
        samples = [synth_video(spec, seed, video_id, label) for video_id, label in jobs]
    log_progress('generate', 100, f"rendered {len(samples)} videos")
    return VideoDataset(samples)


def export_pgm(dataset: VideoDataset, out_dir: str, count: int) -> List[str]:
    """Write the frames of the first ``count`` videos as 8-bit PGM files."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for sample in dataset.samples[:count]:
        for i, frame in enumerate(sample.frames):
            path = os.path.join(out_dir, f"video_{sample.video_id:05d}_frame_{i:03d}.pgm")
            pixels = np.rint(frame[0] * 255.0).astype(np.uint8)
            Image.fromarray(pixels).save(path)
            paths.append(path)
    logger.info(f"exported {len(paths)} frames to {out_dir}")
    return paths


def generate_dataset(out_dir: str,
                     spec: Optional[SynthSpec] = None,
                     seed: Optional[int] = None,
                     workers: int = 1,
                     export_frames: int = 0) -> str:
    """Generate the benchmark and write it to ``out_dir``.

    Parameters
    ----------
    out_dir : str
        Dataset directory, created when missing.
    spec : SynthSpec, optional
        Benchmark parameters; defaults to ``SynthSpec()``.
    seed : int, optional
        Overrides ``spec.seed``.
    workers : int
        Rendering threads.
    export_frames : int
        Also write the frames of this many videos as PGM under ``out_dir/frames``.

    Returns
    -------
    str
        The dataset directory.
    """
    spec = spec or SynthSpec()
    dataset = synth_generate(spec, seed=seed, workers=workers)
    write_dataset(dataset, out_dir)
    if export_frames > 0:
        export_pgm(dataset, os.path.join(out_dir, 'frames'), export_frames)
    return out_dir
