"""Glimpse sensor: shared convolutional trunk plus one attention head per temporal branch.

A video's T frames all pass through the same trunk. Frame ``t`` is then routed
to branch ``assign_branch(t, T, B)`` (before / during / after for B = 3), where
a self-attention block with a zero-initialised residual scale and a branch
specific convolution produce the glimpse vector ``x_t`` of width D.
"""
from dataclasses import dataclass, field
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ctanet.core import numerics as nx
from ctanet.core.errors import ConfigurationError, ContractError, DimensionError
from ctanet.core.numerics import Parameterized, Tensor


logger = logging.getLogger(__name__)

BRANCH_NAMES = {1: ('all',), 3: ('before', 'during', 'after')}


@dataclass(frozen=True)
class ConvStage:
    """One convolution stage written as ``channels:kernel:stride``.

    Padding is ``kernel // 2`` so odd kernels preserve the spatial size at
    stride 1.
    """
    channels: int
    kernel: int
    stride: int = 1

    def __post_init__(self) -> None:
        if self.channels < 1 or self.kernel < 1 or self.stride < 1:
            raise ConfigurationError(f"conv stage values must be positive, got {self}")

    @property
    def padding(self) -> int:
        return self.kernel // 2

    def output_size(self, size: int) -> int:
        return (size + 2 * self.padding - self.kernel) // self.stride + 1

    @classmethod
    def parse(cls, text: str) -> 'ConvStage':
        try:
            channels, kernel, stride = (int(part) for part in text.strip().split(':'))
        except ValueError:
            raise ConfigurationError(f"conv stage '{text}' is not of the form channels:kernel:stride")
        return cls(channels, kernel, stride)

    def __str__(self) -> str:
        return f"{self.channels}:{self.kernel}:{self.stride}"


def _default_trunk() -> List[ConvStage]:
    return [ConvStage(8, 3, 2), ConvStage(16, 3, 2), ConvStage(32, 3, 2), ConvStage(32, 3, 1)]


@dataclass
class GlimpseConfig:
    """Architecture of the glimpse sensor.

    Parameters
    ----------
    num_branches : int
        Number of coarse temporal branches B.
    frames_per_video : int
        Frames T fed per video.
    image_size : int
        Frame side length S.
    image_channels : int
        Frame channels.
    trunk : list of ConvStage
        Shared stages, each followed by ReLU.
    head : ConvStage
        Per-branch stage; its channel count is the glimpse width D.
    reduction : int
        Query/key channel reduction of the self-attention block.
    """
    num_branches: int = 3
    frames_per_video: int = 12
    image_size: int = 64
    image_channels: int = 1
    trunk: List[ConvStage] = field(default_factory=_default_trunk)
    head: ConvStage = field(default_factory=lambda: ConvStage(128, 3, 1))
    reduction: int = 8

    def __post_init__(self) -> None:
        if self.num_branches < 1:
            raise ConfigurationError(f"num_branches must be >= 1, got {self.num_branches}")
        if self.frames_per_video < self.num_branches:
            raise ConfigurationError(f"frames_per_video ({self.frames_per_video}) must be >= num_branches "
                                     f"({self.num_branches})")
        if self.image_size < 1 or self.image_channels < 1 or self.reduction < 1:
            raise ConfigurationError("image_size, image_channels and reduction must be positive")
        if not self.trunk:
            raise ConfigurationError("the trunk needs at least one conv stage")
        channels, side = self.feature_shape()[0], self.feature_shape()[1]
        if channels < self.reduction:
            raise ConfigurationError(f"trunk output has {channels} channels, fewer than the attention reduction "
                                     f"{self.reduction}")
        if self.head.output_size(side) < 1:
            raise ConfigurationError(f"head stage {self.head} does not fit a {side}x{side} feature map")

    @property
    def feature_dim(self) -> int:
        return self.head.channels

    def feature_shape(self) -> Tuple[int, int]:
        """Channels and side length of the trunk output.

        Raises
        ------
        ConfigurationError
            If a stage would shrink the map below one pixel.
        """
        side = self.image_size
        for stage in self.trunk:
            if stage.kernel > side + 2 * stage.padding:
                raise ConfigurationError(f"stage {stage} does not fit a {side}x{side} input")
            side = stage.output_size(side)
        return self.trunk[-1].channels, side


def assign_branch(t: int, num_frames: int, num_branches: int) -> int:
    """Route frame ``t`` of ``num_frames`` to a branch.

    Returns ``min(floor(t * B / T), B - 1)``: contiguous, ordered blocks
    covering every frame, the last absorbing any remainder.

    Raises
    ------
    ContractError
        If ``t`` is outside ``[0, num_frames)`` or ``num_branches < 1``.
    """
    if num_branches < 1:
        raise ContractError(f"num_branches must be >= 1, got {num_branches}")
    if not 0 <= t < num_frames:
        raise ContractError(f"frame index {t} out of range for {num_frames} frames")
    return min(t * num_branches // num_frames, num_branches - 1)


def branch_partition(num_frames: int, num_branches: int) -> List[List[int]]:
    """Frame indices of every branch, in branch order."""
    parts: List[List[int]] = [[] for _ in range(num_branches)]
    for t in range(num_frames):
        parts[assign_branch(t, num_frames, num_branches)].append(t)
    return parts


def branch_label(branch: int, num_branches: int) -> str:
    names = BRANCH_NAMES.get(num_branches)
    return names[branch] if names else f"part{branch}"


def he_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=tuple(shape))


@dataclass
class AttentionMap:
    """Row-stochastic spatial attention ``theta[target, source]`` of one feature map."""
    theta: np.ndarray

    @property
    def num_positions(self) -> int:
        return self.theta.shape[-1]

    def row_sums(self) -> np.ndarray:
        return self.theta.sum(axis=-1)


class SelfAttention(Parameterized):
    """Spatial self-attention with residual scale ``gamma`` (initialised to 0).

    Query and key are ``1×1`` convolutions to ``C // reduction`` channels, the
    value a ``1×1`` convolution to ``C`` channels.
    """

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator, prefix: str) -> None:
        if channels < reduction:
            raise ConfigurationError(f"self-attention needs at least {reduction} channels, got {channels}")
        inner = channels // reduction
        self.channels = channels
        self.prefix = prefix
        self.query_weight = nx.parameter(he_uniform(rng, (inner, channels, 1, 1), channels))
        self.query_bias = nx.parameter(np.zeros(inner))
        self.key_weight = nx.parameter(he_uniform(rng, (inner, channels, 1, 1), channels))
        self.key_bias = nx.parameter(np.zeros(inner))
        self.value_weight = nx.parameter(he_uniform(rng, (channels, channels, 1, 1), channels))
        self.value_bias = nx.parameter(np.zeros(channels))
        self.gamma = nx.parameter(np.zeros(()))

    def named_parameters(self) -> Dict[str, Tensor]:
        p = self.prefix
        return {
            f"{p}.query.weight": self.query_weight,
            f"{p}.query.bias": self.query_bias,
            f"{p}.key.weight": self.key_weight,
            f"{p}.key.bias": self.key_bias,
            f"{p}.value.weight": self.value_weight,
            f"{p}.value.bias": self.value_bias,
            f"{p}.gamma": self.gamma,
        }

    def _check(self, feat: Tensor) -> None:
        if feat.ndim not in (3, 4) or feat.shape[-3] != self.channels:
            raise DimensionError(f"self-attention expects {self.channels}×H×W maps, got shape {feat.shape}")

    def _theta(self, feat: Tensor) -> Tensor:
        n, _, height, width = feat.shape
        positions = height * width
        query = nx.conv2d(feat, self.query_weight, bias=self.query_bias)
        key = nx.conv2d(feat, self.key_weight, bias=self.key_bias)
        query = nx.reshape(query, (n, -1, positions))
        key = nx.reshape(key, (n, -1, positions))
        logits = nx.matmul(nx.transpose(query, (0, 2, 1)), key)
        return nx.softmax(logits, axis=-1)

    def attention_map(self, feat: Tensor) -> AttentionMap:
        """Attention of an unbatched ``C×H×W`` map, shape ``L×L`` with ``L = H·W``."""
        self._check(feat)
        batch = feat if feat.ndim == 4 else nx.reshape(feat, (1,) + feat.shape)
        with nx.no_grad():
            theta = self._theta(batch).data
        return AttentionMap(theta[0] if feat.ndim == 3 else theta)

    def forward(self, feat: Tensor) -> Tensor:
        """Return ``gamma * attend(feat) + feat`` for a ``C×H×W`` or ``N×C×H×W`` map."""
        self._check(feat)
        batched = feat.ndim == 4
        x = feat if batched else nx.reshape(feat, (1,) + feat.shape)
        n, channels, height, width = x.shape
        theta = self._theta(x)
        value = nx.reshape(nx.conv2d(x, self.value_weight, bias=self.value_bias), (n, channels, height * width))
        attended = nx.matmul(value, nx.transpose(theta, (0, 2, 1)))
        out = nx.add(nx.mul(self.gamma, nx.reshape(attended, (n, channels, height, width))), x)
        return out if batched else nx.reshape(out, feat.shape)


class BranchHead(Parameterized):
    """Self-attention block followed by a ReLU convolution and global average pooling."""

    def __init__(self,
                 channels: int,
                 stage: ConvStage,
                 reduction: int,
                 rng: np.random.Generator,
                 prefix: str,
                 use_self_attention: bool = True) -> None:
        self.prefix = prefix
        self.stage = stage
        self.use_self_attention = use_self_attention
        self.attention = SelfAttention(channels, reduction, rng, f"{prefix}.attn")
        fan_in = channels * stage.kernel * stage.kernel
        self.weight = nx.parameter(he_uniform(rng, (stage.channels, channels, stage.kernel, stage.kernel), fan_in))
        self.bias = nx.parameter(np.zeros(stage.channels))

    def named_parameters(self) -> Dict[str, Tensor]:
        params = self.attention.named_parameters()
        params[f"{self.prefix}.head.weight"] = self.weight
        params[f"{self.prefix}.head.bias"] = self.bias
        return params

    def attend(self, feat: Tensor) -> Tensor:
        return self.attention.forward(feat) if self.use_self_attention else feat

    def project(self, head_input: Tensor) -> Tensor:
        """Convolve, rectify and pool ``N×C×h×w`` head inputs to ``N×D``."""
        out = nx.conv2d(head_input, self.weight, stride=self.stage.stride, padding=self.stage.padding, bias=self.bias)
        return nx.global_avg_pool_2d(nx.relu(out))


class GlimpseModel(Parameterized):
    """Shared trunk parameters and ``num_branches`` independent branch heads.

    Parameters
    ----------
    config : GlimpseConfig
        Architecture.
    rng : np.random.Generator
        Source of the initial weights.
    use_branches : bool
        When false a single head serves every frame.
    use_self_attention : bool
        When false the attention blocks are skipped (their parameters stay).
    """

    def __init__(self,
                 config: GlimpseConfig,
                 rng: np.random.Generator,
                 use_branches: bool = True,
                 use_self_attention: bool = True) -> None:
        self.config = config
        self.use_branches = use_branches
        self.use_self_attention = use_self_attention
        self.num_branches = config.num_branches if use_branches else 1
        self.trunk: List[Tuple[Tensor, Tensor]] = []
        channels = config.image_channels
        for i, stage in enumerate(config.trunk):
            fan_in = channels * stage.kernel * stage.kernel
            weight = nx.parameter(he_uniform(rng, (stage.channels, channels, stage.kernel, stage.kernel), fan_in))
            self.trunk.append((weight, nx.parameter(np.zeros(stage.channels))))
            channels = stage.channels
        self.branches = [
            BranchHead(channels, config.head, config.reduction, rng, f"glimpse.branch.{c}", use_self_attention)
            for c in range(self.num_branches)
        ]

    def named_parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for i, (weight, bias) in enumerate(self.trunk):
            params[f"glimpse.trunk.{i}.weight"] = weight
            params[f"glimpse.trunk.{i}.bias"] = bias
        for branch in self.branches:
            params.update(branch.named_parameters())
        return params

    def _check_frames(self, frames: Tensor) -> None:
        cfg = self.config
        expected = (cfg.image_channels, cfg.image_size, cfg.image_size)
        if frames.ndim != 4 or frames.shape[1:] != expected:
            raise DimensionError(f"expected frames of shape N×{expected[0]}×{expected[1]}×{expected[2]}, "
                                 f"got {frames.shape}")

    def trunk_forward(self, frames: Tensor) -> Tensor:
        """Shared feature maps for an ``N×C×S×S`` frame stack."""
        self._check_frames(frames)
        x = frames
        for stage, (weight, bias) in zip(self.config.trunk, self.trunk):
            x = nx.relu(nx.conv2d(x, weight, stride=stage.stride, padding=stage.padding, bias=bias))
        return x

    def forward(self, frames: Tensor, head_inputs: Optional[List[Tensor]] = None) -> Tensor:
        """Glimpse vectors for the T frames of one video.

        Parameters
        ----------
        frames : Tensor
            ``T×C×S×S`` in temporal order.
        head_inputs : list, optional
            When given, receives each branch's head input (``n_c×C×h×w``,
            gradient retained) in branch order.

        Returns
        -------
        Tensor
            ``T×D`` glimpse vectors in temporal order.
        """
        features = self.trunk_forward(frames)
        num_frames = frames.shape[0]
        outputs = []
        for c, indices in enumerate(branch_partition(num_frames, self.num_branches)):
            if not indices:
                continue
            branch = self.branches[c]
            attended = branch.attend(nx.getitem(features, slice(indices[0], indices[-1] + 1)))
            if head_inputs is not None:
                attended.retain_grad()
                head_inputs.append(attended)
            outputs.append(branch.project(attended))
        return nx.concat(outputs, axis=0)

    def glimpse_forward(self, frame: Tensor, t: int, num_frames: int) -> Tensor:
        """Glimpse vector ``x_t`` of width D for a single ``C×S×S`` frame."""
        c = assign_branch(t, num_frames, self.num_branches)
        if frame.ndim != 3:
            raise DimensionError(f"expected a single C×S×S frame, got shape {frame.shape}")
        features = self.trunk_forward(nx.reshape(frame, (1,) + frame.shape))
        branch = self.branches[c]
        return nx.reshape(branch.project(branch.attend(features)), (self.config.feature_dim,))
