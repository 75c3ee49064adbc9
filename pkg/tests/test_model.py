import numpy as np
import pytest

from conftest import numeric_gradient, relative_error
from motenc.errors import ConfigError, ParameterError, ShapeError
from motenc.model import (
    ArchitectureSpec,
    build_network,
    extract_features,
    hierarchy_masks,
    layer_activations,
    predict_window,
)
from motenc.tensor import SeededRng
from motenc.training import OptimizerState, TrainConfig, sgd_momentum_step


@pytest.mark.parametrize("kind", ["S-TE", "C-TE", "H-TE"])
def test_default_architectures_shape_contract(kind):
    net = build_network(ArchitectureSpec(kind=kind))
    out = net.forward(np.zeros((1, 3, 24, 100))).output
    assert out.shape == (1, 7200)
    widths = {tap: net.layers[index].output_width for tap, index in net.taps.items()}
    assert widths == {"lower": 300, "middle": 100, "upper": 300}


def test_ste_layer_widths():
    net = build_network(ArchitectureSpec(kind="ste"))
    assert net.layer_widths() == [7200, 300, 100, 300, 7200]
    assert [l.activation for l in net.layers] == ["sigmoid", "linear", "sigmoid", "linear"]


def test_cte_concatenated_width():
    net = build_network(ArchitectureSpec(kind="cte"))
    # 30 filters each at widths 5, 15, 30 over dt=100: 30 * (96 + 86 + 71)
    assert net.layers[0].output_width == 30 * (96 + 86 + 71)


def test_classifier_layout():
    spec = ArchitectureSpec(kind="classifier", classifier_input=100, num_classes=5)
    clf = build_network(spec, SeededRng(0))
    assert clf.layer_widths() == [100, 50, 20, 5]
    probs = clf.forward(np.random.default_rng(0).normal(size=(4, 100))).output
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_invalid_spec_lists_every_problem():
    spec = ArchitectureSpec(kind="cte", delta_t=10, bottleneck_width=0, conv_specs=((0, 20),), init_std=-1)
    with pytest.raises(ConfigError) as info:
        build_network(spec)
    assert len(info.value.problems) >= 4


def test_unknown_kind():
    with pytest.raises(ConfigError):
        ArchitectureSpec(kind="rnn")


def test_encoder_input_shape_checked(make_spec):
    net = build_network(make_spec(), SeededRng(0))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 3, 23, 4)))
    flat = net.forward(np.zeros((2, 3 * 24 * 4))).output
    assert flat.shape == (2, 3 * 24 * 4)


@pytest.mark.parametrize("kind", ["S-TE", "C-TE", "H-TE"])
def test_network_backward_matches_finite_differences(kind, make_spec):
    spec = make_spec(kind, delta_t=3, conv_specs=((2, 2), (1, 3)), init_std=1.0)
    net = build_network(spec, SeededRng(1))
    gen = np.random.default_rng(2)
    x = gen.normal(0, 0.5, (2, 3, 24, 3))
    direction = gen.normal(0, 1, (2, spec.input_size))

    def loss():
        return float(np.sum(direction * net.forward(x).output))

    grads, grad_input = net.backward(net.forward(x), direction)
    params = net.parameters()
    assert len(grads) == len(params)
    for index in (0, 1, len(params) - 2):
        numeric = numeric_gradient(loss, params[index].value, h=1e-4)
        assert relative_error(grads[index], numeric) < 1e-6, params[index].name
    assert relative_error(grad_input.reshape(x.shape), numeric_gradient(loss, x, h=1e-4)) < 1e-6


def test_hierarchy_masks_block_structure(make_spec):
    spec = make_spec("H-TE", delta_t=2)
    masks, nodes = hierarchy_masks(spec)
    assert nodes == [24, 5, 3, 1]
    assert masks[0].shape == (3 * 24 * 2, 24 * 2)
    # every input unit feeds exactly the units of its own joint node
    assert (masks[0].sum(axis=1) == 2).all()
    # left_leg holds 4 joints of 3 units each; its 3 limb units see 12 joint units
    left_leg = 3
    assert (masks[1][:, left_leg * 3:(left_leg + 1) * 3].sum(axis=0) == 4 * 2).all()


def test_limb_node_is_insensitive_to_other_limbs(make_spec):
    spec = make_spec("H-TE", delta_t=3, init_std=1.0)
    net = build_network(spec, SeededRng(5))
    tree = spec.hierarchy
    width_limb = tree.node_widths[1]
    x = np.random.default_rng(0).normal(0, 0.3, (1, 3, 24, 3))
    base = net.forward(x, stop_at=1).output

    for limb_index, (name, joints) in enumerate(tree.limbs):
        outside = [j for j in range(24) if j not in joints]
        shifted = x.copy()
        shifted[:, :, outside, :] += 0.7
        units = slice(limb_index * width_limb, (limb_index + 1) * width_limb)
        changed = net.forward(shifted, stop_at=1).output
        assert np.max(np.abs(changed[:, units] - base[:, units])) < 1e-12, name
        assert np.max(np.abs(changed - base)) > 0


def test_masked_weights_stay_zero_through_training_steps(make_spec):
    net = build_network(make_spec("H-TE", delta_t=2), SeededRng(0))
    params = net.parameters()
    state = OptimizerState.for_parameters(params)
    config = TrainConfig(lr=0.01, momentum=0.9, weight_decay=0.0005)
    gen = np.random.default_rng(0)
    for _ in range(1000):
        grads = [gen.normal(0, 1, p.value.shape) for p in params]
        sgd_momentum_step(params, grads, state, config)
    for layer in net.layers[:3]:
        assert (layer.weights[layer.mask == 0] == 0.0).all()
        assert np.count_nonzero(layer.weights[layer.mask == 1]) > 0


def test_single_limb_hierarchy_has_dense_upper_levels(make_spec):
    """
    One limb and one group collapse the upper levels to single dense nodes.

    The joint level keeps its 24 nodes, so its mask stays block-diagonal.
    """
    from motenc.skeleton import HierarchySpec

    spec = make_spec("H-TE", delta_t=2, hierarchy=HierarchySpec.single_limb(24, (2, 3, 4, 8)))
    masks, nodes = hierarchy_masks(spec)
    assert nodes == [24, 1, 1, 1]
    assert masks[1].all() and masks[2].all()
    assert (masks[0].sum(axis=1) == 2).all()
    assert not masks[0].all()


def test_predict_and_features(make_spec):
    net = build_network(make_spec(), SeededRng(0))
    windows = np.random.default_rng(0).normal(size=(5, 3, 24, 4))
    assert predict_window(net, windows[0]).shape == (3, 24, 4)
    np.testing.assert_allclose(predict_window(net, windows, batch_size=2),
                               predict_window(net, windows, batch_size=5), rtol=0, atol=1e-12)
    assert extract_features(net, windows, "middle").shape == (5, 4)
    assert layer_activations(net, windows, 0).shape == (5, 8)
    with pytest.raises(ParameterError):
        extract_features(net, windows, "deepest")


@pytest.mark.parametrize("kind", ["S-TE", "C-TE", "H-TE"])
def test_batched_prediction_matches_single_windows(make_spec, kind):
    net = build_network(make_spec(kind, init_std=1.0), SeededRng(3))
    windows = np.random.default_rng(1).normal(size=(7, 3, 24, 4))
    batched = predict_window(net, windows)
    for window, row in zip(windows, batched):
        np.testing.assert_allclose(predict_window(net, window), row, rtol=0, atol=1e-12)


def test_zero_weight_network_predicts_zeros(make_spec):
    net = build_network(make_spec("C-TE"))
    out = predict_window(net, np.ones((3, 24, 4)))
    assert not out.any()


def test_spec_dict_round_trip(make_spec):
    spec = make_spec("H-TE")
    assert ArchitectureSpec.from_dict(spec.to_dict()) == spec


def test_copy_is_independent(make_spec):
    net = build_network(make_spec(), SeededRng(0))
    clone = net.copy()
    clone.layers[0].weights += 1
    assert not np.array_equal(clone.layers[0].weights, net.layers[0].weights)
