import logging

import numpy as np
import pytest

from ctanet.core.errors import NumericError
from ctanet.core.numerics import parameter
from ctanet.core.optimizer import OptimizerState, adam_step, clip_grad_norm, global_norm


def test_zero_gradient_is_a_no_op():
    """A zero gradient leaves the parameters untouched."""
    params = {'w': parameter([1.0, -2.0])}
    state = OptimizerState.for_parameters(params)
    adam_step(params, {'w': np.zeros(2)}, state, lr=0.1)
    np.testing.assert_array_equal(params['w'].data, [1.0, -2.0])
    assert state.step == 1


def test_first_step_moves_by_learning_rate():
    """After bias correction the first update has magnitude close to lr."""
    params = {'w': parameter([0.0, 0.0, 0.0])}
    adam_step(params, {'w': np.array([0.3, -20.0, 1e-3])}, OptimizerState.for_parameters(params), lr=0.01)
    np.testing.assert_allclose(params['w'].data, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_two_step_hand_trace():
    """Two updates follow the bias-corrected moment recursion."""
    params = {'w': parameter(0.0)}
    state = OptimizerState.for_parameters(params)
    lr, eps = 0.1, 1e-8
    adam_step(params, {'w': np.array(1.0)}, state, lr=lr, eps=eps)
    first = -lr * 1.0 / (1.0 + eps)
    assert params['w'].item() == pytest.approx(first, abs=1e-15)
    adam_step(params, {'w': np.array(-2.0)}, state, lr=lr, eps=eps)
    m = 0.9 * 0.1 + 0.1 * -2.0
    v = 0.999 * 0.001 + 0.001 * 4.0
    m_hat = m / (1.0 - 0.9**2)
    v_hat = v / (1.0 - 0.999**2)
    assert params['w'].item() == pytest.approx(first - lr * m_hat / (np.sqrt(v_hat) + eps), abs=1e-12)
    assert state.step == 2


def test_non_finite_gradient_updates_nothing():
    """A NaN gradient raises before any parameter or moment changes."""
    params = {'a': parameter([1.0]), 'b': parameter([2.0])}
    state = OptimizerState.for_parameters(params)
    with pytest.raises(NumericError, match="'b'"):
        adam_step(params, {'a': np.array([0.5]), 'b': np.array([np.nan])}, state, lr=0.1)
    assert params['a'].item() == 1.0
    assert state.step == 0
    np.testing.assert_array_equal(state.m['a'], [0.0])


def test_clip_grad_norm(caplog):
    """Gradients above the limit are rescaled jointly and the clip is logged."""
    grads = {'a': np.array([3.0]), 'b': np.array([4.0])}
    with caplog.at_level(logging.INFO, logger='ctanet.core.optimizer'):
        norm = clip_grad_norm(grads, 1.0)
    assert norm == 5.0
    np.testing.assert_allclose(grads['a'], [0.6])
    np.testing.assert_allclose(grads['b'], [0.8])
    assert global_norm(grads) == pytest.approx(1.0)
    assert 'clipped global grad norm' in caplog.text


def test_clip_grad_norm_disabled_or_below_limit():
    """A zero limit or a small norm leaves gradients as they are."""
    grads = {'a': np.array([3.0, 4.0])}
    clip_grad_norm(grads, 0.0)
    np.testing.assert_array_equal(grads['a'], [3.0, 4.0])
    clip_grad_norm(grads, 10.0)
    np.testing.assert_array_equal(grads['a'], [3.0, 4.0])
