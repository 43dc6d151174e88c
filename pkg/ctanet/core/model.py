"""The assembled network: glimpse sensor followed by the recurrent sequence model."""
from dataclasses import dataclass
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from ctanet.core import numerics as nx
from ctanet.core.glimpse import GlimpseConfig, GlimpseModel
from ctanet.core.numerics import Parameterized, Tensor
from ctanet.core.sequence import SequenceConfig, SequenceModel


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Switches:
    """Ablation switches. Each one only removes computation."""
    use_branches: bool = True
    use_temporal_attention: bool = True
    use_self_attention: bool = True


class CTANet(Parameterized):
    """Glimpse sensor and sequence model trained end to end.

    Parameters
    ----------
    glimpse : GlimpseConfig
        Trunk, branch and frame geometry.
    sequence : SequenceConfig
        LSTM width, class count and gate mode.
    rng : np.random.Generator
        Initialisation randomness. The glimpse parameters are drawn first.
    switches : Switches, optional
        Ablation switches; all on by default.
    """

    def __init__(self,
                 glimpse: GlimpseConfig,
                 sequence: SequenceConfig,
                 rng: np.random.Generator,
                 switches: Optional[Switches] = None) -> None:
        self.switches = switches or Switches()
        self.glimpse = GlimpseModel(glimpse,
                                    rng,
                                    use_branches=self.switches.use_branches,
                                    use_self_attention=self.switches.use_self_attention)
        self.sequence = SequenceModel(sequence,
                                      glimpse.feature_dim,
                                      glimpse.frames_per_video,
                                      rng,
                                      use_temporal_attention=self.switches.use_temporal_attention)

    @property
    def num_classes(self) -> int:
        return self.sequence.config.num_classes

    @property
    def num_frames(self) -> int:
        return self.glimpse.config.frames_per_video

    def named_parameters(self) -> Dict[str, Tensor]:
        params = self.glimpse.named_parameters()
        params.update(self.sequence.named_parameters())
        return params

    def parameter_groups(self) -> Dict[str, List[str]]:
        """Parameter names per group: ``glimpse``, ``lstm``, ``tattn`` and ``cls``."""
        groups: Dict[str, List[str]] = {}
        for name in self.named_parameters():
            groups.setdefault(name.split('.', 1)[0], []).append(name)
        return groups

    def logits(self, frames: Tensor, head_inputs: Optional[List[Tensor]] = None) -> Tensor:
        """Unnormalised class scores for a ``T×C×S×S`` clip."""
        return self.sequence.forward_logits(self.glimpse.forward(frames, head_inputs))

    def forward(self, frames: Tensor) -> Tuple[Tensor, Tensor]:
        """Return ``(logits, probabilities)`` for a ``T×C×S×S`` clip."""
        logits = self.logits(frames)
        return logits, nx.softmax(logits, axis=0)

    def predict(self, frames: np.ndarray) -> int:
        """Arg-max class of a clip, evaluated without recording a graph."""
        with nx.no_grad():
            logits = self.logits(nx.as_tensor(frames))
        return int(np.argmax(logits.data))

    def predict_proba(self, frames: np.ndarray) -> np.ndarray:
        with nx.no_grad():
            _, probabilities = self.forward(nx.as_tensor(frames))
        return probabilities.numpy()
