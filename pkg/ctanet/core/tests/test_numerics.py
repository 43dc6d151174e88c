import numpy as np
import pytest

from ctanet.core import numerics as nx
from ctanet.core.errors import ConfigurationError, ContractError, DimensionError, NumericError
from ctanet.core.numerics import Tensor, grad_check


def test_matmul_examples():
    """Identity, annihilator and a hand-expanded 2x2 product."""
    m = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(nx.matmul(Tensor(np.eye(3)), Tensor(m)).data, m)
    np.testing.assert_array_equal(nx.matmul(Tensor(np.zeros((2, 3))), Tensor(np.ones((3, 4)))).data, np.zeros((2, 4)))
    out = nx.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5, 6], [7, 8]]))
    np.testing.assert_array_equal(out.data, [[19, 22], [43, 50]])


def test_matmul_shape_mismatch_names_both_shapes():
    """Inner-dimension mismatch is a dimension error naming both shapes."""
    with pytest.raises(DimensionError) as excinfo:
        nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    assert '(2, 3)' in str(excinfo.value) and '(4, 2)' in str(excinfo.value)


def test_matmul_backward_closed_form():
    """Backward gives g·bᵀ and aᵀ·g."""
    rng = np.random.default_rng(0)
    a = nx.parameter(rng.normal(size=(2, 3)))
    b = nx.parameter(rng.normal(size=(3, 4)))
    nx.backward(nx.tensor_sum(nx.matmul(a, b)))
    g = np.ones((2, 4))
    np.testing.assert_allclose(a.grad, g @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ g)


def test_conv2d_examples():
    """Identity kernel, zero kernels and the 3x3 ones / 2x2 ones case."""
    x = np.random.default_rng(1).normal(size=(1, 5, 5))
    identity = nx.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    np.testing.assert_array_equal(identity.data, x)
    zeros = nx.conv2d(Tensor(x), Tensor(np.zeros((2, 1, 3, 3))), padding=1)
    np.testing.assert_array_equal(zeros.data, np.zeros((2, 5, 5)))
    fours = nx.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 2, 2))))
    np.testing.assert_array_equal(fours.data, np.full((1, 2, 2), 4.0))


def test_conv2d_output_size_and_cross_correlation():
    """Output side follows floor((H + 2p - k) / s) + 1 and kernels are not flipped."""
    out = nx.conv2d(Tensor(np.ones((2, 7, 7))), Tensor(np.ones((3, 2, 3, 3))), stride=2, padding=1)
    assert out.shape == (3, 4, 4)
    x = np.arange(9.0).reshape(1, 3, 3)
    k = np.zeros((1, 1, 2, 2))
    k[0, 0, 0, 1] = 1.0
    np.testing.assert_array_equal(nx.conv2d(Tensor(x), Tensor(k)).data[0], [[1, 2], [4, 5]])


def test_conv2d_batched_matches_single():
    """A leading batch axis gives the same result as frame-by-frame calls."""
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 2, 6, 6))
    w = Tensor(rng.normal(size=(4, 2, 3, 3)))
    bias = Tensor(rng.normal(size=4))
    batched = nx.conv2d(Tensor(x), w, stride=2, padding=1, bias=bias).data
    for i in range(3):
        single = nx.conv2d(Tensor(x[i]), w, stride=2, padding=1, bias=bias).data
        np.testing.assert_allclose(batched[i], single, rtol=0, atol=1e-12)


def test_conv2d_kernel_larger_than_padded_input():
    """A kernel that does not fit the padded input is a dimension error."""
    with pytest.raises(DimensionError):
        nx.conv2d(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 1, 5, 5))), padding=1)


def test_softmax_examples():
    """Constant input, the [0, ln 3] closed form and overflow safety."""
    np.testing.assert_allclose(nx.softmax(Tensor(np.full(4, 2.5))).data, np.full(4, 0.25))
    np.testing.assert_allclose(nx.softmax(Tensor([0.0, np.log(3.0)])).data, [0.25, 0.75])
    big = nx.softmax(Tensor([1000.0, 1000.5])).data
    assert np.all(np.isfinite(big))
    assert big[1] == pytest.approx(1.0 / (1.0 + np.exp(-0.5)), abs=1e-12)


def test_softmax_sums_to_one_for_large_inputs():
    """Rows sum to 1 within 1e-9 for inputs up to magnitude 1e4."""
    x = np.random.default_rng(3).uniform(-1e4, 1e4, size=(50, 7))
    out = nx.softmax(Tensor(x), axis=1).data
    assert np.all(out >= 0)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)


def test_pointwise_examples():
    """sigmoid(0), tanh(0) and relu([-1, 2])."""
    assert nx.pointwise('sigmoid', Tensor(0.0)).item() == 0.5
    assert nx.pointwise('tanh', Tensor(0.0)).item() == 0.0
    np.testing.assert_array_equal(nx.pointwise('relu', Tensor([-1.0, 2.0])).data, [0.0, 2.0])


def test_pointwise_unknown_name():
    """An unknown nonlinearity is a configuration error."""
    with pytest.raises(ConfigurationError):
        nx.pointwise('gelu', Tensor(1.0))


def test_relu_derivative_at_zero_is_zero():
    """The ReLU gradient at exactly 0 is 0."""
    x = nx.parameter([0.0, 1.0])
    nx.backward(nx.tensor_sum(nx.relu(x)))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_reduce_examples():
    """mean of [2, 4], global pooling of a constant map, and the sum gradient."""
    assert nx.reduce('mean', Tensor([2.0, 4.0])).item() == 3.0
    pooled = nx.reduce('global_avg_pool_2d', Tensor(np.full((3, 4, 5), 1.5)))
    np.testing.assert_array_equal(pooled.data, np.full(3, 1.5))
    x = nx.parameter([5.0, 7.0])
    nx.backward(nx.reduce('sum', x))
    assert x.grad[0] == 1.0


def test_reduce_axis_out_of_range():
    """An axis beyond the rank is a dimension error."""
    with pytest.raises(DimensionError):
        nx.reduce('sum', Tensor(np.ones((2, 3))), axis=2)


def test_backward_examples():
    """Identity loss gives grad 1 and sum(x²) gives 2x."""
    x = nx.parameter(3.0)
    nx.backward(x)
    assert x.grad == 1.0
    y = nx.parameter([1.0, 2.0])
    nx.backward(nx.tensor_sum(y * y))
    np.testing.assert_array_equal(y.grad, [2.0, 4.0])


def test_backward_accumulates_and_untouched_leaves_stay_zero():
    """Repeated calls accumulate; leaves outside the graph keep a zero gradient."""
    x = nx.parameter([1.0, 2.0])
    unused = nx.parameter([3.0])
    loss = nx.tensor_sum(x * 3.0)
    nx.backward(loss)
    nx.backward(loss)
    np.testing.assert_array_equal(x.grad, [6.0, 6.0])
    np.testing.assert_array_equal(unused.grad, [0.0])


def test_backward_requires_scalar():
    """A non-scalar loss is a contract error."""
    with pytest.raises(ContractError):
        nx.backward(nx.parameter([1.0, 2.0]) * 2.0)


def test_tape_is_topologically_ordered():
    """Every tape entry comes after the producers of its inputs."""
    x = nx.parameter(np.ones((2, 2)))
    h = nx.tanh(nx.matmul(x, x))
    loss = nx.tensor_sum(h + nx.sigmoid(h))
    tape = nx.backward(loss)
    position = {id(node.output): i for i, node in enumerate(tape)}
    for i, node in enumerate(tape):
        for parent in node.inputs:
            if parent._node is not None:
                assert position[id(parent)] < i


def test_non_finite_output_names_the_op():
    """log(0) raises a numeric error naming the op."""
    with pytest.raises(NumericError) as excinfo:
        nx.log(Tensor([0.0, 1.0]))
    assert 'log' in str(excinfo.value)


def test_grad_check_examples():
    """Identity is exact, sum(tanh) is within 1e-6, a relu kink is excluded."""
    assert grad_check(lambda x: x, Tensor(3.0)).max_error <= 1e-9
    report = grad_check(lambda x: nx.tensor_sum(nx.tanh(x)), Tensor([0.3, -0.7, 1.1]))
    assert report.max_error <= 1e-6
    kink = grad_check(lambda x: nx.tensor_sum(nx.relu(x)), Tensor([0.5, 0.0, -0.5]))
    assert ('x', (1,)) in kink.excluded
    assert kink.checked == 2
    assert kink.max_error <= 1e-6


def test_grad_check_composite_conv_sigmoid_sum():
    """conv -> sigmoid -> sum matches central differences within 1e-5."""
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(2, 5, 5)))
    w = Tensor(rng.normal(size=(3, 2, 3, 3)))
    b = Tensor(rng.normal(size=3))

    def f(leaves):
        return nx.tensor_sum(nx.sigmoid(nx.conv2d(leaves['x'], leaves['w'], stride=2, padding=1,
                                                  bias=leaves['b'])))

    assert grad_check(f, {'x': x, 'w': w, 'b': b}, h=1e-5).max_error <= 1e-5


@pytest.mark.parametrize('seed', range(10))
def test_differentiable_ops_pass_grad_check(seed):
    """A graph touching every smooth op passes the gradient check at random points."""
    rng = np.random.default_rng(100 + seed)
    leaves = {
        'a': Tensor(rng.normal(size=(2, 3, 4))),
        'b': Tensor(rng.normal(size=(4, 3))),
        'c': Tensor(rng.uniform(0.5, 2.0, size=(3,))),
    }

    def f(p):
        prod = nx.matmul(p['a'], p['b'])
        soft = nx.softmax(prod, axis=-1)
        mixed = nx.concat([soft, nx.exp(prod * 0.1)], axis=1)
        scaled = nx.div(nx.transpose(mixed, (0, 2, 1)), nx.reshape(p['c'], (1, 3, 1)))
        stacked = nx.stack([nx.tensor_mean(scaled, axis=0), nx.tensor_sum(scaled, axis=0)])
        return nx.tensor_sum(nx.log(p['c'])) + nx.tensor_sum(nx.power(stacked, 2.0)) - nx.tensor_mean(
            nx.reshape(stacked, (-1,))[3:9])

    assert grad_check(f, leaves).max_error <= 1e-5


def test_no_grad_records_nothing():
    """Inside no_grad results carry no graph."""
    x = nx.parameter([1.0])
    with nx.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y.is_leaf
