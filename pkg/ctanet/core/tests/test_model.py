import numpy as np
import pytest

from ctanet.core import numerics as nx
from ctanet.core.model import CTANet, Switches
from ctanet.core.numerics import Tensor, grad_check
from ctanet.core.sequence import SequenceConfig, class_logits


def test_end_to_end_gradients(micro_glimpse_config):
    """Every parameter of the micro network (S=16, T=6, n=4, K=2) passes the gradient check."""
    rng = np.random.default_rng(21)
    model = CTANet(micro_glimpse_config, SequenceConfig(hidden_size=4, num_classes=2), rng)
    for branch in model.glimpse.branches:
        branch.attention.gamma.data[...] = 0.3
    frames = Tensor(rng.uniform(0.0, 1.0, size=(6, 1, 16, 16)))
    leaves = model.named_parameters()

    def loss(_):
        _, probabilities = model.forward(frames)
        return -nx.log(probabilities[1])

    report = grad_check(loss, leaves)
    assert report.checked > 0.9 * model.num_parameters()
    assert report.max_error <= 1e-5


def test_parameter_groups(micro_model):
    """Names split into glimpse, lstm, tattn and cls groups that cover every parameter."""
    groups = micro_model.parameter_groups()
    assert set(groups) == {'glimpse', 'lstm', 'tattn', 'cls'}
    assert sorted(n for names in groups.values() for n in names) == sorted(micro_model.named_parameters())
    assert groups['cls'] == ['cls.W', 'cls.b']


def test_forward_outputs(micro_model, random_frames):
    """Probabilities are a softmax of the logits and predict is their arg-max."""
    logits, probabilities = micro_model.forward(Tensor(random_frames))
    assert logits.shape == (2,)
    assert probabilities.data.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(micro_model.predict_proba(random_frames), probabilities.data)
    assert micro_model.predict(random_frames) == int(np.argmax(logits.data))


def test_single_branch_equals_shared_heads(micro_glimpse_config, micro_sequence_config, random_frames):
    """Three branches holding identical heads behave like the single-branch ablation."""
    single = CTANet(micro_glimpse_config, micro_sequence_config, np.random.default_rng(1),
                    Switches(use_branches=False))
    full = CTANet(micro_glimpse_config, micro_sequence_config, np.random.default_rng(2))
    source = single.named_parameters()
    for name, tensor in full.named_parameters().items():
        if name.startswith('glimpse.branch.'):
            name = 'glimpse.branch.0.' + name.split('.', 3)[3]
        tensor.data[...] = source[name].data
    for branch in full.glimpse.branches:
        branch.attention.gamma.data[...] = 0.2
    single.glimpse.branches[0].attention.gamma.data[...] = 0.2
    np.testing.assert_allclose(full.logits(Tensor(random_frames)).data,
                               single.logits(Tensor(random_frames)).data,
                               rtol=0,
                               atol=1e-12)


def test_temporal_attention_switch_uses_mean_pooling(micro_glimpse_config, micro_sequence_config, random_frames):
    """Without temporal attention the classifier sees the mean hidden state."""
    model = CTANet(micro_glimpse_config, micro_sequence_config, np.random.default_rng(3),
                   Switches(use_temporal_attention=False))
    glimpses = model.glimpse.forward(Tensor(random_frames))
    mean_state = nx.tensor_mean(model.sequence.hidden_states(glimpses), axis=0)
    expected = class_logits(mean_state, model.sequence.cls).data
    np.testing.assert_array_equal(model.logits(Tensor(random_frames)).data, expected)


def test_self_attention_switch_equals_zero_gamma(micro_glimpse_config, micro_sequence_config, random_frames):
    """Disabling self-attention matches a freshly initialised model (gamma = 0)."""
    with_attention = CTANet(micro_glimpse_config, micro_sequence_config, np.random.default_rng(4))
    without = CTANet(micro_glimpse_config, micro_sequence_config, np.random.default_rng(4),
                     Switches(use_self_attention=False))
    assert list(without.named_parameters()) == list(with_attention.named_parameters())
    np.testing.assert_array_equal(with_attention.predict_proba(random_frames), without.predict_proba(random_frames))


def test_disabled_components_get_zero_gradients(micro_glimpse_config, micro_sequence_config, random_frames):
    """Parameters of switched-off components stay in the model with zero gradient."""
    model = CTANet(micro_glimpse_config, micro_sequence_config, np.random.default_rng(5),
                   Switches(use_temporal_attention=False, use_self_attention=False))
    _, probabilities = model.forward(Tensor(random_frames))
    nx.backward(-nx.log(probabilities[0]))
    params = model.named_parameters()
    assert np.all(params['tattn.W_psi'].grad == 0.0)
    assert np.all(params['glimpse.branch.0.attn.gamma'].grad == 0.0)
    assert np.any(params['cls.W'].grad != 0.0)
