import warnings

import numpy as np
import pandas as pd
import pytest

from motenc.errors import EvaluationError, ParameterError
from motenc.feature_engineering import (
    LATENT_METHOD,
    ReducedComponentsWarning,
    latent_trajectory,
    principal_trajectory,
    resolve_layer,
    spike_triggered_average,
)
from motenc.model import build_network, layer_activations
from motenc.tensor import SeededRng


@pytest.fixture
def net(make_spec):
    return build_network(make_spec(init_std=1.0), SeededRng(2))


@pytest.fixture
def windows():
    return np.random.default_rng(0).normal(0, 0.5, (40, 3, 24, 4))


def test_sta_matches_brute_force(net, windows):
    activity = layer_activations(net, windows, 0)[:, 3]
    threshold = float(np.median(activity))
    result = spike_triggered_average(net, windows, "lower", 3, threshold)

    numerator = np.zeros((3, 24, 4))
    denominator, count = 0.0, 0
    for window, a in zip(windows, activity):
        if a > threshold:
            numerator += a * window
            denominator += a
            count += 1
    assert result.count == count == 20
    assert result.layer_index == 0 and result.unit == 3
    np.testing.assert_allclose(result.average, numerator / denominator, rtol=0, atol=1e-12)


def test_sta_of_a_silent_unit_is_empty(net, windows):
    result = spike_triggered_average(net, windows, 0, 0, threshold=1.0)
    assert result.empty
    assert result.average is None


def test_sta_lies_within_its_contributing_windows(net, windows):
    activity = layer_activations(net, windows, 0)[:, 5]
    threshold = float(np.quantile(activity, 0.3))
    result = spike_triggered_average(net, windows, "lower", 5, threshold)

    contributing = windows[activity > threshold]
    assert result.count == len(contributing)
    assert np.all(result.average >= contributing.min(axis=0) - 1e-12)
    assert np.all(result.average <= contributing.max(axis=0) + 1e-12)


def test_sta_needs_a_sigmoid_layer(net, windows):
    with pytest.raises(ParameterError, match="sigmoid"):
        spike_triggered_average(net, windows, "middle", 0)
    with pytest.raises(ParameterError):
        spike_triggered_average(net, windows, "lower", 8)


def test_resolve_layer(net):
    assert resolve_layer(net, 2) == 2
    assert resolve_layer(net, "upper") == 2
    assert resolve_layer(net, "1") == 1
    assert resolve_layer(net, net.layers[3].name) == 3
    with pytest.raises(ParameterError):
        resolve_layer(net, 4)
    with pytest.raises(ParameterError):
        resolve_layer(net, "nowhere")


def test_principal_components_are_sign_fixed():
    features = np.random.default_rng(1).normal(size=(30, 6)) * [3.0, 2.0, 1.0, 0.5, 0.2, 0.1]
    trajectory = principal_trajectory(features, components=3)
    basis = trajectory.components

    assert trajectory.values.shape == (30, 3)
    assert trajectory.components_used == 3
    for row in basis:
        assert row[np.argmax(np.abs(row))] > 0
    np.testing.assert_allclose(basis @ basis.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(trajectory.values, (features - features.mean(axis=0)) @ basis.T, atol=1e-12)
    assert np.all(np.diff(trajectory.explained_variance) <= 0)


def test_reconstruction_error_is_the_discarded_variance():
    features = np.random.default_rng(4).normal(size=(40, 6)) * [3.0, 2.0, 1.5, 1.0, 0.5, 0.2]
    trajectory = principal_trajectory(features, components=2)

    reconstruction = trajectory.values @ trajectory.components + features.mean(axis=0)
    residual = np.sum((features - reconstruction) ** 2) / (len(features) - 1)
    eigenvalues = np.sort(np.linalg.eigvalsh(np.cov(features, rowvar=False)))[::-1]
    assert residual == pytest.approx(eigenvalues[2:].sum(), rel=1e-9)


def test_low_rank_features_warn_and_pad_with_zeros():
    gen = np.random.default_rng(0)
    features = np.outer(gen.normal(size=20), gen.normal(size=5))
    with pytest.warns(ReducedComponentsWarning, match="rank 1"):
        trajectory = principal_trajectory(features, components=3)
    assert trajectory.components_used == 1
    assert not trajectory.values[:, 1:].any()


def test_constant_features_give_zero_trajectory():
    with pytest.warns(ReducedComponentsWarning):
        trajectory = principal_trajectory(np.ones((10, 4)), components=2)
    assert trajectory.components_used == 0
    assert not trajectory.values.any()


def test_full_rank_features_do_not_warn():
    features = np.random.default_rng(3).normal(size=(12, 4))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        principal_trajectory(features, components=3)


def test_trajectory_argument_checks():
    with pytest.raises(ParameterError):
        principal_trajectory(np.ones((5, 2)), components=0)
    with pytest.raises(EvaluationError):
        principal_trajectory(np.ones((2, 4)), components=3)


def test_latent_trajectory_of_a_recording(net, make_recording, tmp_path):
    rec = make_recording(num_frames=30, label="wave")
    trajectory = latent_trajectory(net, rec, "lower", components=3, stride=2)
    assert trajectory.steps.tolist() == list(range(3, 30, 2))
    assert trajectory.values.shape == (14, 3)
    assert trajectory.metadata == {"recording": "s01/000", "tap": "lower", "label": "wave"}

    path = trajectory.to_csv(tmp_path / "latent.csv")
    assert f"# method={LATENT_METHOD}" in path.read_text(encoding="utf-8")
    df = pd.read_csv(path, comment="#")
    assert list(df.columns) == ["t", "pc1", "pc2", "pc3"]
    np.testing.assert_array_equal(df["pc1"].to_numpy(), trajectory.values[:, 0])
