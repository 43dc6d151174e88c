"""Adam with bias correction and global-norm gradient clipping."""
from dataclasses import dataclass, field
import logging
from typing import Dict, Mapping

import numpy as np

from ctanet.core.errors import ContractError, DimensionError, NumericError
from ctanet.core.numerics import Tensor


logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Per-parameter first and second moments plus the shared step counter."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_parameters(cls, params: Mapping[str, Tensor]) -> 'OptimizerState':
        return cls(m={name: np.zeros_like(p.data) for name, p in params.items()},
                   v={name: np.zeros_like(p.data) for name, p in params.items()})


def adam_step(params: Mapping[str, Tensor],
              grads: Mapping[str, np.ndarray],
              state: OptimizerState,
              lr: float,
              beta1: float = 0.9,
              beta2: float = 0.999,
              eps: float = 1e-8) -> OptimizerState:
    """Apply one bias-corrected Adam update to ``params`` in place.

    Parameters
    ----------
    params : Mapping[str, Tensor]
        Parameters to update.
    grads : Mapping[str, np.ndarray]
        Gradients keyed like ``params``.
    state : OptimizerState
        Moments, updated in place.
    lr : float
        Step size, > 0.

    Returns
    -------
    OptimizerState
        ``state`` after the update.

    Raises
    ------
    NumericError
        If a gradient contains NaN or Inf; nothing is updated and the message
        names the parameter.
    """
    if lr <= 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    for name, grad in grads.items():
        if name not in params:
            raise ContractError(f"gradient for unknown parameter '{name}'")
        if grad.shape != params[name].shape:
            raise DimensionError(f"gradient of '{name}' has shape {grad.shape}, parameter {params[name].shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for parameter '{name}'")
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, grad in grads.items():
        m = state.m.setdefault(name, np.zeros_like(grad))
        v = state.v.setdefault(name, np.zeros_like(grad))
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        params[name].data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``.

    ``max_norm <= 0`` disables clipping. Returns the norm before clipping.
    """
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for grad in grads.values():
            grad *= scale
        logger.info(f"clipped global grad norm {norm:.4f} to {max_norm}")
    return norm
