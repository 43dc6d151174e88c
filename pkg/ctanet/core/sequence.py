"""Recurrent half of the network: LSTM, temporal attention, attention pooling, classifier.

Given glimpse vectors ``x_1..x_T`` the LSTM produces hidden states ``H``
(``T×n``). Temporal attention enriches every state with a gated sum over all
states::

    psi[t, t'] = tanh(W_psi h_t + W_psi' h_t' + b_psi)
    beta[t, t'] = sigmoid(W_g psi[t, t'] + b_g)
    a_t = h_t + sum_t' beta[t, t'] * h_t'

and attention pooling reduces ``A`` to ``s = sum_t softmax(A W_phi + b_phi)_t a_t``
which the classifier maps to class probabilities.
"""
from dataclasses import dataclass
import logging
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ctanet.core import numerics as nx
from ctanet.core.errors import ConfigurationError, ContractError, DimensionError
from ctanet.core.numerics import Parameterized, Tensor


logger = logging.getLogger(__name__)

GATE_MODES = ('scalar', 'vector')


@dataclass
class SequenceConfig:
    """Recurrent head architecture.

    Parameters
    ----------
    hidden_size : int
        LSTM width n.
    num_classes : int
        Activity classes K.
    gate_mode : str
        ``scalar`` for one gate value per frame pair, ``vector`` for an
        elementwise gate (``W_g`` is ``n×n``).
    """
    hidden_size: int = 64
    num_classes: int = 6
    gate_mode: str = 'scalar'

    def __post_init__(self) -> None:
        if self.hidden_size < 1:
            raise ConfigurationError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.gate_mode not in GATE_MODES:
            raise ConfigurationError(f"gate_mode must be one of {GATE_MODES}, got '{self.gate_mode}'")


def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], hidden: int) -> Tensor:
    bound = 1.0 / np.sqrt(hidden)
    return nx.parameter(rng.uniform(-bound, bound, size=shape))


@dataclass
class LSTMState:
    h: Tensor
    cell: Tensor

    @classmethod
    def zeros(cls, hidden_size: int) -> 'LSTMState':
        return cls(Tensor(np.zeros(hidden_size)), Tensor(np.zeros(hidden_size)))


@dataclass
class LSTMParams:
    """Input (``W_*``, n×D), recurrent (``U_*``, n×n) and bias weights of the four gates.

    Gates: ``i`` input, ``f`` forget, ``o`` output, ``c`` candidate.
    """
    W_i: Tensor
    U_i: Tensor
    b_i: Tensor
    W_f: Tensor
    U_f: Tensor
    b_f: Tensor
    W_o: Tensor
    U_o: Tensor
    b_o: Tensor
    W_c: Tensor
    U_c: Tensor
    b_c: Tensor

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1]

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> 'LSTMParams':
        """Uniform ``±1/sqrt(n)`` weights, zero biases except the forget bias (+1)."""
        values = {}
        for gate in 'ifoc':
            values[f"W_{gate}"] = _uniform(rng, (hidden_size, input_size), hidden_size)
            values[f"U_{gate}"] = _uniform(rng, (hidden_size, hidden_size), hidden_size)
            values[f"b_{gate}"] = nx.parameter(np.ones(hidden_size) if gate == 'f' else np.zeros(hidden_size))
        return cls(**values)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> 'LSTMParams':
        values = {}
        for gate in 'ifoc':
            values[f"W_{gate}"] = nx.parameter(np.zeros((hidden_size, input_size)))
            values[f"U_{gate}"] = nx.parameter(np.zeros((hidden_size, hidden_size)))
            values[f"b_{gate}"] = nx.parameter(np.zeros(hidden_size))
        return cls(**values)

    def named(self, prefix: str = 'lstm') -> Dict[str, Tensor]:
        return {f"{prefix}.{name}": value for name, value in vars(self).items()}


def lstm_step(x_t: Tensor, state: LSTMState, params: LSTMParams) -> LSTMState:
    """One fully gated LSTM update.

    Raises
    ------
    DimensionError
        If ``x_t`` is not of width D or the state is not of width n.
    """
    n, d = params.hidden_size, params.input_size
    if x_t.shape != (d,):
        raise DimensionError(f"lstm_step: input of shape {x_t.shape}, expected ({d},)")
    if state.h.shape != (n,) or state.cell.shape != (n,):
        raise DimensionError(f"lstm_step: state of shapes {state.h.shape}/{state.cell.shape}, expected ({n},)")

    def gate(w: Tensor, u: Tensor, b: Tensor) -> Tensor:
        return nx.matmul(w, x_t) + nx.matmul(u, state.h) + b

    i = nx.sigmoid(gate(params.W_i, params.U_i, params.b_i))
    f = nx.sigmoid(gate(params.W_f, params.U_f, params.b_f))
    o = nx.sigmoid(gate(params.W_o, params.U_o, params.b_o))
    g = nx.tanh(gate(params.W_c, params.U_c, params.b_c))
    cell = f * state.cell + i * g
    return LSTMState(h=o * nx.tanh(cell), cell=cell)


@dataclass
class TemporalAttentionParams:
    """Pairwise gate weights and the pooling score weights.

    ``W_g`` is ``1×n`` with scalar ``b_g`` in scalar mode, ``n×n`` with
    ``b_g`` of width n in vector mode.
    """
    W_psi: Tensor
    W_psi_prime: Tensor
    b_psi: Tensor
    W_g: Tensor
    b_g: Tensor
    W_phi: Tensor
    b_phi: Tensor

    @property
    def hidden_size(self) -> int:
        return self.W_psi.shape[0]

    @property
    def gate_mode(self) -> str:
        return 'scalar' if self.W_g.shape[0] == 1 and self.b_g.ndim == 0 else 'vector'

    @classmethod
    def init(cls, hidden_size: int, rng: np.random.Generator, gate_mode: str = 'scalar') -> 'TemporalAttentionParams':
        gate_rows = 1 if gate_mode == 'scalar' else hidden_size
        return cls(
            W_psi=_uniform(rng, (hidden_size, hidden_size), hidden_size),
            W_psi_prime=_uniform(rng, (hidden_size, hidden_size), hidden_size),
            b_psi=nx.parameter(np.zeros(hidden_size)),
            W_g=_uniform(rng, (gate_rows, hidden_size), hidden_size),
            b_g=nx.parameter(np.zeros(()) if gate_mode == 'scalar' else np.zeros(hidden_size)),
            W_phi=_uniform(rng, (hidden_size, 1), hidden_size),
            b_phi=nx.parameter(np.zeros(())),
        )

    @classmethod
    def zeros(cls, hidden_size: int, gate_mode: str = 'scalar') -> 'TemporalAttentionParams':
        gate_rows = 1 if gate_mode == 'scalar' else hidden_size
        return cls(
            W_psi=nx.parameter(np.zeros((hidden_size, hidden_size))),
            W_psi_prime=nx.parameter(np.zeros((hidden_size, hidden_size))),
            b_psi=nx.parameter(np.zeros(hidden_size)),
            W_g=nx.parameter(np.zeros((gate_rows, hidden_size))),
            b_g=nx.parameter(np.zeros(()) if gate_mode == 'scalar' else np.zeros(hidden_size)),
            W_phi=nx.parameter(np.zeros((hidden_size, 1))),
            b_phi=nx.parameter(np.zeros(())),
        )

    def named(self, prefix: str = 'tattn') -> Dict[str, Tensor]:
        return {f"{prefix}.{name}": value for name, value in vars(self).items()}


def _check_states(states: Tensor, hidden_size: int, op: str) -> None:
    if states.ndim != 2 or states.shape[1] != hidden_size or states.shape[0] < 1:
        raise DimensionError(f"{op}: expected T×{hidden_size} states with T >= 1, got {states.shape}")


def pair_gates(states: Tensor, params: TemporalAttentionParams) -> Tensor:
    """Gate values ``beta``: ``T×T`` in scalar mode, ``T×T×n`` in vector mode."""
    _check_states(states, params.hidden_size, 'temporal_attention')
    num_frames, hidden = states.shape
    target = nx.matmul(states, nx.transpose(params.W_psi))
    source = nx.matmul(states, nx.transpose(params.W_psi_prime))
    pairs = nx.reshape(target, (num_frames, 1, hidden)) + nx.reshape(source, (1, num_frames, hidden))
    psi = nx.tanh(pairs + params.b_psi)
    logits = nx.matmul(psi, nx.transpose(params.W_g)) + params.b_g
    if params.gate_mode == 'scalar':
        logits = nx.reshape(logits, (num_frames, num_frames))
    return nx.sigmoid(logits)


def temporal_attention(states: Tensor, params: TemporalAttentionParams) -> Tensor:
    """Context-enriched states ``A`` (``T×n``) from LSTM states ``H``."""
    beta = pair_gates(states, params)
    if beta.ndim == 2:
        context = nx.matmul(beta, states)
    else:
        num_frames, hidden = states.shape
        context = nx.tensor_sum(beta * nx.reshape(states, (1, num_frames, hidden)), axis=1)
    return states + context


def attention_weights(states: Tensor, params: TemporalAttentionParams) -> Tensor:
    """Pooling weights ``w = softmax_t(a_t W_phi + b_phi)`` of length T."""
    _check_states(states, params.hidden_size, 'attention_pool')
    scores = nx.matmul(states, params.W_phi) + params.b_phi
    return nx.softmax(nx.reshape(scores, (states.shape[0],)), axis=0)


def attention_pool(states: Tensor, params: TemporalAttentionParams) -> Tensor:
    """Attention-weighted sum ``s`` (width n) of the rows of ``A``."""
    return nx.matmul(attention_weights(states, params), states)


@dataclass
class ClassifierParams:
    W: Tensor
    b: Tensor

    @property
    def num_classes(self) -> int:
        return self.W.shape[1]

    @classmethod
    def init(cls, hidden_size: int, num_classes: int, rng: np.random.Generator) -> 'ClassifierParams':
        return cls(W=_uniform(rng, (hidden_size, num_classes), hidden_size), b=nx.parameter(np.zeros(num_classes)))

    def named(self, prefix: str = 'cls') -> Dict[str, Tensor]:
        return {f"{prefix}.W": self.W, f"{prefix}.b": self.b}


def class_logits(s: Tensor, params: ClassifierParams) -> Tensor:
    if s.ndim != 1 or s.shape[0] != params.W.shape[0]:
        raise DimensionError(f"classify: representation of shape {s.shape}, classifier expects ({params.W.shape[0]},)")
    return nx.matmul(s, params.W) + params.b


def classify(s: Tensor, params: ClassifierParams) -> Tensor:
    """Class probabilities ``softmax(s W + b)``."""
    return nx.softmax(class_logits(s, params), axis=0)


class SequenceModel(Parameterized):
    """LSTM, temporal attention and classifier over one video's glimpse vectors.

    Parameters
    ----------
    config : SequenceConfig
        Widths and gate mode.
    input_size : int
        Glimpse width D.
    num_frames : int
        Frames T every video must supply.
    rng : np.random.Generator
        Source of the initial weights.
    use_temporal_attention : bool
        When false ``A = H`` and mean pooling replaces attention pooling.
    """

    def __init__(self,
                 config: SequenceConfig,
                 input_size: int,
                 num_frames: int,
                 rng: np.random.Generator,
                 use_temporal_attention: bool = True) -> None:
        self.config = config
        self.num_frames = num_frames
        self.use_temporal_attention = use_temporal_attention
        self.lstm = LSTMParams.init(input_size, config.hidden_size, rng)
        self.tattn = TemporalAttentionParams.init(config.hidden_size, rng, config.gate_mode)
        self.cls = ClassifierParams.init(config.hidden_size, config.num_classes, rng)

    def named_parameters(self) -> Dict[str, Tensor]:
        params = self.lstm.named()
        params.update(self.tattn.named())
        params.update(self.cls.named())
        return params

    def hidden_states(self, inputs: Union[Tensor, Sequence[Tensor]]) -> Tensor:
        """Run the LSTM from a zero state and stack ``h_1..h_T`` into ``T×n``."""
        steps = [nx.getitem(inputs, t) for t in range(inputs.shape[0])] if isinstance(inputs, Tensor) else list(inputs)
        if len(steps) != self.num_frames:
            raise ContractError(f"expected exactly {self.num_frames} glimpse vectors, got {len(steps)}")
        state = LSTMState.zeros(self.config.hidden_size)
        hidden = []
        for x_t in steps:
            state = lstm_step(x_t, state, self.lstm)
            hidden.append(state.h)
        return nx.stack(hidden, axis=0)

    def represent(self, inputs: Union[Tensor, Sequence[Tensor]]) -> Tensor:
        states = self.hidden_states(inputs)
        if not self.use_temporal_attention:
            return nx.tensor_mean(states, axis=0)
        return attention_pool(temporal_attention(states, self.tattn), self.tattn)

    def forward_logits(self, inputs: Union[Tensor, Sequence[Tensor]]) -> Tensor:
        return class_logits(self.represent(inputs), self.cls)

    def forward_video(self, inputs: Union[Tensor, Sequence[Tensor]]) -> Tensor:
        """Class probabilities for T glimpse vectors in temporal order.

        Raises
        ------
        ContractError
            If the number of vectors differs from the configured T.
        """
        return nx.softmax(self.forward_logits(inputs), axis=0)

    def pooling_weights(self, inputs: Union[Tensor, Sequence[Tensor]]) -> Optional[np.ndarray]:
        """Attention pooling weights over frames, or None without temporal attention."""
        if not self.use_temporal_attention:
            return None
        with nx.no_grad():
            states = temporal_attention(self.hidden_states(inputs), self.tattn)
            return attention_weights(states, self.tattn).numpy()
