"""
Feature Analysis - What the Units Encode
========================================
Two views on learned features:

1. Spike-triggered average (STA): for one sigmoid unit, the activity-weighted
   mean of the input windows on which the unit's output exceeds a threshold
   (0.8 by default). The result is a pose window that can be stored as a
   motion file.
2. Latent trajectory: tap features of every time step projected onto their
   top principal components. This is a plain PCA stand-in for a smoothed
   factor-analysis trajectory and is labeled as such in its outputs.
"""

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.decomposition import PCA

from motenc.errors import EvaluationError, ParameterError
from motenc.model import extract_features, layer_activations
from motenc.windowing import sequence_windows

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.8
LATENT_METHOD = "principal components (substitute for GPFA)"


class ReducedComponentsWarning(UserWarning):
    """Fewer principal components exist than were requested."""


def resolve_layer(net, layer):
    """
    Layer index from an index, a tap name or a layer name.

    Returns:
        int: Index into ``net.layers``
    """
    if isinstance(layer, (int, np.integer)):
        index = int(layer)
        if not 0 <= index < len(net.layers):
            raise ParameterError(f"layer index {index} out of range [0, {len(net.layers)})")
        return index
    if layer in net.taps:
        return net.taps[layer]
    names = [l.name for l in net.layers]
    if layer in names:
        return names.index(layer)
    if str(layer).isdigit():
        return resolve_layer(net, int(layer))
    raise ParameterError(f"unknown layer '{layer}', expected an index, a tap or one of {names}")


@dataclass
class StaResult:
    """Spike-triggered average of one unit; ``average`` is None when empty."""

    layer: str
    layer_index: int
    unit: int
    average: np.ndarray
    count: int
    threshold: float
    weight_sum: float = 0.0

    @property
    def empty(self):
        return self.count == 0


def _check_sta_target(net, layer, units):
    index = resolve_layer(net, layer)
    target = net.layers[index]
    if target.activation != "sigmoid":
        raise ParameterError(
            f"layer {target.name} is {target.activation}; spike-triggered averages need a sigmoid layer"
        )
    for unit in units:
        if not 0 <= unit < target.output_width:
            raise ParameterError(f"unit {unit} out of range [0, {target.output_width}) in {target.name}")
    return index, target


def spike_triggered_averages(net, batches, layer, units, threshold=DEFAULT_THRESHOLD):
    """
    Spike-triggered averages of several units in one pass over window batches.

    Only the running weighted sums (one window per unit) are kept, so
    ``batches`` can stream any number of recordings.

    Args:
        net (Network): Temporal encoder
        batches (iterable): B x 3 x J x dt window batches
        layer (int | str): Layer index, tap or layer name; must be sigmoid
        units (list): Unit indices in that layer
        threshold (float): Activity threshold

    Returns:
        list: One StaResult per unit, in the order of ``units``

    Raises:
        EvaluationError: ``batches`` holds no window
    """
    units = [int(u) for u in units]
    index, target = _check_sta_target(net, layer, units)
    sums = None
    weight_sums = np.zeros(len(units))
    counts = np.zeros(len(units), dtype=np.int64)
    for batch in batches:
        batch = np.asarray(batch, dtype=np.float64)
        if not len(batch):
            continue
        activity = layer_activations(net, batch, index)[:, units]
        above = activity > threshold
        weights = np.where(above, activity, 0.0)
        if sums is None:
            sums = np.zeros((len(units),) + batch.shape[1:])
        sums += np.tensordot(weights.T, batch, axes=1)
        weight_sums += weights.sum(axis=0)
        counts += above.sum(axis=0)
    if sums is None:
        raise EvaluationError("no input windows for the spike-triggered average")

    results = []
    for k, unit in enumerate(units):
        if counts[k] == 0:
            log.info("Unit %s[%d] never exceeds %.2f", target.name, unit, threshold)
            results.append(StaResult(target.name, index, unit, None, 0, threshold))
            continue
        results.append(StaResult(target.name, index, unit, sums[k] / weight_sums[k], int(counts[k]),
                                 threshold, float(weight_sums[k])))
    return results


def spike_triggered_average(net, windows, layer, unit, threshold=DEFAULT_THRESHOLD):
    """
    Activity-weighted mean of the windows that drive ``unit`` above ``threshold``.

    Args:
        net (Network): Temporal encoder
        windows (Tensor | iterable): B x 3 x J x dt windows, or batches of them
        layer (int | str): Layer index, tap or layer name; must be sigmoid
        unit (int): Unit index in that layer
        threshold (float): Activity threshold

    Returns:
        StaResult: sum(a * window) / sum(a) over qualifying windows, or an empty result
    """
    batches = [windows] if isinstance(windows, np.ndarray) else windows
    return spike_triggered_averages(net, batches, layer, [unit], threshold)[0]


@dataclass
class LatentTrajectory:
    """
    Per-step projection of tap features onto principal components.

    Columns beyond ``components_used`` are zero.
    """

    values: np.ndarray
    steps: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    components_used: int
    metadata: dict = field(default_factory=dict)

    def to_frame(self):
        data = {"t": self.steps}
        for k in range(self.values.shape[1]):
            data[f"pc{k + 1}"] = self.values[:, k]
        return pd.DataFrame(data)

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"method": LATENT_METHOD, "components_used": self.components_used, **self.metadata}
        ratio = ",".join(f"{r:.6f}" for r in self.explained_variance_ratio)
        header = [f"# {k}={v}" for k, v in meta.items()] + [f"# explained_variance_ratio={ratio}"]
        body = self.to_frame().to_csv(index=False, float_format="%.17g", lineterminator="\n")
        path.write_text("\n".join(header) + "\n" + body, encoding="utf-8")
        return path


def principal_trajectory(features, components=3, steps=None):
    """
    Project rows of ``features`` onto their top principal components.

    Components come in descending eigenvalue order; each is sign-fixed so its
    largest-magnitude loading is positive. If the centered features have lower
    rank than requested, the missing columns stay zero and a
    ``ReducedComponentsWarning`` is issued.

    Args:
        features (Tensor): steps x N
        components (int): Requested number of components

    Returns:
        LatentTrajectory: steps x components values
    """
    features = np.asarray(features, dtype=np.float64)
    if components < 1:
        raise ParameterError(f"components must be >= 1, got {components}")
    if features.ndim != 2 or features.shape[0] < components:
        raise EvaluationError(
            f"{features.shape[0]} feature rows cannot give {components} components"
        )
    steps = np.arange(features.shape[0]) if steps is None else np.asarray(steps)
    centered = features - features.mean(axis=0)
    rank = int(np.linalg.matrix_rank(centered)) if np.any(centered) else 0
    used = min(components, rank)
    if used < components:
        warnings.warn(
            f"features have rank {rank}; returning {used} of {components} components",
            ReducedComponentsWarning,
            stacklevel=2,
        )

    width = features.shape[1]
    values = np.zeros((features.shape[0], components))
    basis = np.zeros((components, width))
    variance = np.zeros(components)
    ratio = np.zeros(components)
    if used:
        pca = PCA(n_components=used, svd_solver="full").fit(features)
        basis[:used] = pca.components_
        for k in range(used):
            peak = np.argmax(np.abs(basis[k]))
            if basis[k, peak] < 0:
                basis[k] = -basis[k]
        values[:, :used] = centered @ basis[:used].T
        variance[:used] = pca.explained_variance_
        ratio[:used] = pca.explained_variance_ratio_
    return LatentTrajectory(values, steps, basis, variance, ratio, used)


def latent_trajectory(net, recording, tap, components=3, stride=1):
    """
    Principal-component trajectory of a recording's tap features over time.

    Args:
        net (Network): Temporal encoder
        recording (MotionRecording): Normalized recording
        tap (str): lower, middle or upper
        components (int): Number of components (3 for a 3-D trajectory)

    Returns:
        LatentTrajectory: One row per input window, t = last input frame
    """
    delta_t = net.spec.delta_t
    windows = sequence_windows(recording, delta_t, None, stride)
    features = extract_features(net, windows, tap)
    steps = np.arange(delta_t - 1, recording.num_frames, stride)[:len(windows)]
    trajectory = principal_trajectory(features, components, steps)
    trajectory.metadata.update({"recording": recording.recording_id, "tap": tap,
                                "label": recording.label or "-"})
    return trajectory
