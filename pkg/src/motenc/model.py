"""
Temporal Encoder Models
=======================
Builders for the three temporal encoders (symmetric S-TE, convolutional C-TE,
hierarchical H-TE) and the N-50-20-M feature classifier, plus forward
prediction and layer-feature extraction.

Every encoder maps a 3 x N_joints x dt input window to a flattened
3 * N_joints * dt output (7200 at the defaults) through a linear bottleneck.
Sigmoid everywhere except the bottleneck and the encoder output (linear) and
the classifier output (softmax).
"""

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from motenc.errors import ConfigError, ParameterError, ShapeError
from motenc.layers import ConvBank, DenseLayer, MaskedDenseLayer, TemporalConvLayer, dropout_forward
from motenc.skeleton import HierarchySpec
from motenc.tensor import sample_masked_sparse_gaussian, sample_sparse_gaussian

log = logging.getLogger(__name__)

KIND_ALIASES = {
    "ste": "S-TE", "s-te": "S-TE",
    "cte": "C-TE", "c-te": "C-TE",
    "hte": "H-TE", "h-te": "H-TE",
    "classifier": "classifier", "clf": "classifier",
}
ENCODER_KINDS = ("S-TE", "C-TE", "H-TE")
TAPS = ("lower", "middle", "upper")


def canonical_kind(kind):
    try:
        return KIND_ALIASES[str(kind).lower()]
    except KeyError:
        raise ConfigError(f"unknown architecture kind '{kind}', expected ste, cte, hte or classifier")


@dataclass
class ArchitectureSpec:
    """Everything needed to rebuild a network from scratch."""

    kind: str = "S-TE"
    delta_t: int = 100
    num_joints: int = 24
    outer_width: int = 300
    bottleneck_width: int = 100
    conv_specs: tuple = ((30, 5), (30, 15), (30, 30))
    hierarchy: HierarchySpec = None
    classifier_input: int = 100
    classifier_hidden: tuple = (50, 20)
    num_classes: int = 2
    init_std: float = 1.0
    nonzeros_per_unit: int = 15

    def __post_init__(self):
        self.kind = canonical_kind(self.kind)
        self.conv_specs = tuple((int(n), int(w)) for n, w in self.conv_specs)
        self.classifier_hidden = tuple(int(h) for h in self.classifier_hidden)
        if self.kind == "H-TE" and self.hierarchy is None:
            self.hierarchy = HierarchySpec(num_joints=self.num_joints)

    @property
    def input_size(self):
        return 3 * self.num_joints * self.delta_t

    @property
    def is_encoder(self):
        return self.kind in ENCODER_KINDS

    def problems(self):
        found = []
        if self.init_std <= 0:
            found.append("init_std must be positive")
        if self.nonzeros_per_unit < 1:
            found.append("nonzeros_per_unit must be >= 1")

        if self.kind == "classifier":
            if self.num_classes < 2:
                found.append(f"classifier needs at least 2 classes, got {self.num_classes}")
            if self.classifier_input < 1 or min(self.classifier_hidden, default=1) < 1:
                found.append("classifier widths must be positive")
            return found

        if self.delta_t < 1 or self.num_joints < 1:
            found.append("delta_t and num_joints must be >= 1")
        if not 1 <= self.bottleneck_width < self.input_size:
            found.append(
                f"bottleneck width {self.bottleneck_width} must lie in [1, {self.input_size})"
            )
        if self.outer_width < 1:
            found.append("outer_width must be >= 1")
        if self.kind == "C-TE":
            if not self.conv_specs:
                found.append("C-TE needs at least one convolution branch")
            for num_filters, width in self.conv_specs:
                if num_filters < 1:
                    found.append(f"branch with {num_filters} filters")
                if not 1 <= width <= self.delta_t:
                    found.append(f"filter width {width} must lie in [1, delta_t={self.delta_t}]")
        if self.kind == "H-TE":
            if self.hierarchy.num_joints != self.num_joints:
                found.append(
                    f"hierarchy has {self.hierarchy.num_joints} joints, spec has {self.num_joints}"
                )
            found.extend(self.hierarchy.problems())
        return found

    def validate(self):
        found = self.problems()
        if found:
            raise ConfigError(found)
        return self

    def to_dict(self):
        return {
            "kind": self.kind,
            "delta_t": self.delta_t,
            "num_joints": self.num_joints,
            "outer_width": self.outer_width,
            "bottleneck_width": self.bottleneck_width,
            "conv_specs": [list(c) for c in self.conv_specs],
            "hierarchy": self.hierarchy.to_dict() if self.hierarchy is not None else None,
            "classifier_input": self.classifier_input,
            "classifier_hidden": list(self.classifier_hidden),
            "num_classes": self.num_classes,
            "init_std": self.init_std,
            "nonzeros_per_unit": self.nonzeros_per_unit,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        hierarchy = data.pop("hierarchy", None)
        if hierarchy is not None:
            hierarchy = HierarchySpec.from_dict(hierarchy)
        return cls(hierarchy=hierarchy, **data)


@dataclass
class ForwardTrace:
    """Per-layer inputs and outputs of one forward pass."""

    inputs: list
    outputs: list
    dropout_mask: np.ndarray = None

    @property
    def output(self):
        return self.outputs[-1]


@dataclass
class Network:
    """
    Ordered layer stack with named feature taps.

    ``taps`` maps lower / middle / upper to layer indices; classifiers have none.
    ``metadata`` holds training provenance (epoch, seed, dropout position,
    fine-tune record).
    """

    spec: ArchitectureSpec
    layers: list
    taps: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.spec.is_encoder and list(self.taps.keys()).count("middle") != 1:
            raise ConfigError("an encoder must tag exactly one middle layer")

    @property
    def is_encoder(self):
        return self.spec.is_encoder

    @property
    def output_activation(self):
        return self.layers[-1].activation

    def prepare_input(self, batch):
        """
        Shape a batch for the first layer.

        Encoders accept B x 3 x J x dt (or B x 3*J*dt); a convolution bank keeps
        the 4-D window, dense stacks get it flattened.
        """
        batch = np.asarray(batch, dtype=np.float64)
        if not self.is_encoder:
            if batch.ndim != 2 or batch.shape[1] != self.spec.classifier_input:
                raise ShapeError(
                    f"classifier input must be B x {self.spec.classifier_input}", batch.shape
                )
            return batch
        window = (3, self.spec.num_joints, self.spec.delta_t)
        if batch.shape[1:] == window:
            pass
        elif batch.ndim == 2 and batch.shape[1] == self.spec.input_size:
            batch = batch.reshape((batch.shape[0],) + window)
        else:
            raise ShapeError(f"encoder input must be B x {window}", batch.shape)
        if isinstance(self.layers[0], ConvBank):
            return batch
        return batch.reshape(batch.shape[0], -1)

    def forward(self, batch, training=False, dropout_rate=0.0, rng=None, stop_at=None):
        """
        Run the stack.

        Args:
            batch (Tensor): Input batch
            training (bool): Apply input dropout
            dropout_rate (float): Input dropout rate in training mode
            rng (SeededRng): Dropout randomness
            stop_at (int): Last layer index to evaluate

        Returns:
            ForwardTrace: Layer inputs/outputs
        """
        x = self.prepare_input(batch)
        kept = None
        if training and dropout_rate > 0.0:
            x, kept = dropout_forward(x, dropout_rate, rng, training=True)

        last = len(self.layers) - 1 if stop_at is None else stop_at
        inputs, outputs = [], []
        for layer in self.layers[:last + 1]:
            inputs.append(x)
            x = layer.forward(x)
            outputs.append(x)
        return ForwardTrace(inputs, outputs, kept)

    def backward(self, trace, upstream, upstream_is_preactivation=False):
        """
        Backpropagate through a full trace.

        Returns:
            tuple: (parameter gradients aligned with ``parameters()``, grad w.r.t. the network input)
        """
        grads_per_layer = [None] * len(self.layers)
        grad = upstream
        for index in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[index]
            preact = upstream_is_preactivation and index == len(self.layers) - 1
            grad, layer_grads = layer.backward(trace.inputs[index], trace.outputs[index], grad, preact)
            grads_per_layer[index] = layer_grads
        return [g for layer_grads in grads_per_layer for g in layer_grads], grad

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def buffers(self):
        return [b for layer in self.layers for b in layer.buffers()]

    def parameter_count(self):
        return int(sum(p.value.size for p in self.parameters()))

    def layer_widths(self):
        """Input width followed by every layer's output width."""
        first = self.spec.input_size if self.is_encoder else self.spec.classifier_input
        return [first] + [layer.output_width for layer in self.layers]

    def tap_index(self, tap):
        if not self.taps:
            raise ParameterError("this network has no feature taps")
        if tap not in self.taps:
            raise ParameterError(f"unknown tap '{tap}', expected one of {sorted(self.taps)}")
        return self.taps[tap]

    def copy(self):
        return copy.deepcopy(self)


# =============================================================================
# Builders
# =============================================================================

def _dense_weights(rng, fan_in, fan_out, spec):
    if rng is None:
        return np.zeros((fan_in, fan_out))
    nonzeros = min(spec.nonzeros_per_unit, fan_in)
    return sample_sparse_gaussian(rng, fan_in, fan_out, nonzeros, spec.init_std)


def _dense(rng, fan_in, fan_out, spec, activation, name):
    return DenseLayer(_dense_weights(rng, fan_in, fan_out, spec), np.zeros(fan_out), activation, name)


def _masked(rng, mask, spec, activation, name):
    mask = mask.astype(np.float64)
    if rng is None:
        weights = np.zeros(mask.shape)
    else:
        weights = sample_masked_sparse_gaussian(rng, mask, spec.nonzeros_per_unit, spec.init_std)
    return MaskedDenseLayer(weights, np.zeros(mask.shape[1]), activation, name, mask=mask)


def _decoder(rng, spec, bottleneck_in):
    """Bottleneck -> upper -> output, shared by all three encoders."""
    return [
        _dense(rng, bottleneck_in, spec.bottleneck_width, spec, "linear", "bottleneck"),
        _dense(rng, spec.bottleneck_width, spec.outer_width, spec, "sigmoid", "decoder.upper"),
        _dense(rng, spec.outer_width, spec.input_size, spec, "linear", "decoder.output"),
    ]


def _require_kind(spec, kind):
    if spec.kind != kind:
        raise ConfigError(f"expected a {kind} spec, got {spec.kind}")
    spec.validate()


def build_ste(spec, rng=None):
    """
    Symmetric temporal encoder: input -> 300 -> 100 -> 300 -> input.

    Args:
        spec (ArchitectureSpec): kind S-TE
        rng (SeededRng): Init randomness; zero weights when None

    Returns:
        Network: 4 dense layers, taps lower=0 middle=1 upper=2
    """
    _require_kind(spec, "S-TE")
    layers = [_dense(rng, spec.input_size, spec.outer_width, spec, "sigmoid", "encoder.lower")]
    layers += _decoder(rng, spec, spec.outer_width)
    return Network(spec, layers, {"lower": 0, "middle": 1, "upper": 2})


def build_cte(spec, rng=None):
    """
    Convolutional temporal encoder.

    Parallel temporal convolutions over the whole window, flattened and
    concatenated, then dense lower -> bottleneck -> upper -> output.
    """
    _require_kind(spec, "C-TE")
    branches = []
    for index, (num_filters, width) in enumerate(spec.conv_specs):
        fan_in = 3 * spec.num_joints * width
        filters = np.ascontiguousarray(_dense_weights(rng, fan_in, num_filters, spec).T)
        branches.append(TemporalConvLayer(
            filters, np.zeros(num_filters), width, spec.num_joints, "sigmoid", f"conv{index}.w{width}",
        ))
    bank = ConvBank(branches, spec.delta_t, "encoder.conv")
    layers = [bank, _dense(rng, bank.output_width, spec.outer_width, spec, "sigmoid", "encoder.lower")]
    layers += _decoder(rng, spec, spec.outer_width)
    log.debug("C-TE concatenated convolution width: %d", bank.output_width)
    return Network(spec, layers, {"lower": 1, "middle": 2, "upper": 3})


def hierarchy_masks(spec):
    """
    Connectivity masks for the joints -> limbs -> groups levels.

    A weight (i, j) is kept iff the node owning source unit i is a child of the
    node owning target unit j.

    Returns:
        tuple: (masks list, node counts per level)
    """
    tree = spec.hierarchy
    joints = spec.num_joints
    width_joint, width_limb, width_group, _ = tree.node_widths
    limb_of_joint = np.asarray(tree.limb_of_joint())
    group_of_limb = np.asarray(tree.group_of_limb())
    num_limbs, num_groups = len(tree.limbs), len(tree.groups)

    # input index -> joint, in (coordinate, joint, frame) flattening order
    joint_of_input = np.broadcast_to(
        np.arange(joints)[None, :, None], (3, joints, spec.delta_t)
    ).reshape(-1)
    joint_of_unit = np.repeat(np.arange(joints), width_joint)
    limb_of_unit = np.repeat(np.arange(num_limbs), width_limb)
    group_of_unit = np.repeat(np.arange(num_groups), width_group)

    masks = [
        joint_of_input[:, None] == joint_of_unit[None, :],
        limb_of_joint[joint_of_unit][:, None] == limb_of_unit[None, :],
        group_of_limb[limb_of_unit][:, None] == group_of_unit[None, :],
    ]
    return masks, [joints, num_limbs, num_groups, 1]


def build_hte(spec, rng=None):
    """
    Hierarchical temporal encoder.

    Masked levels: one node per joint, one per limb, one per group (arms,
    legs, trunk), then a dense body layer feeding the linear bottleneck. The
    decoder is dense, as in S-TE.
    """
    _require_kind(spec, "H-TE")
    masks, node_counts = hierarchy_masks(spec)
    body_width = spec.hierarchy.node_widths[3]
    layers = [
        _masked(rng, masks[0], spec, "sigmoid", "hierarchy.joints"),
        _masked(rng, masks[1], spec, "sigmoid", "hierarchy.limbs"),
        _masked(rng, masks[2], spec, "sigmoid", "hierarchy.groups"),
        _dense(rng, masks[2].shape[1], body_width, spec, "sigmoid", "hierarchy.body"),
    ]
    layers += _decoder(rng, spec, body_width)
    net = Network(spec, layers, {"lower": 3, "middle": 4, "upper": 5})
    net.metadata["hierarchy_nodes"] = node_counts
    return net


def build_classifier(spec, rng=None):
    """Feature classifier N -> 50 -> 20 -> M with a softmax output."""
    _require_kind(spec, "classifier")
    widths = [spec.classifier_input, *spec.classifier_hidden]
    layers = [
        _dense(rng, fan_in, fan_out, spec, "sigmoid", f"classifier.hidden{i}")
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]))
    ]
    layers.append(_dense(rng, widths[-1], spec.num_classes, spec, "softmax", "classifier.output"))
    return Network(spec, layers, {})


BUILDERS = {
    "S-TE": build_ste,
    "C-TE": build_cte,
    "H-TE": build_hte,
    "classifier": build_classifier,
}


def build_network(spec, rng=None):
    """Dispatch to the builder for ``spec.kind``."""
    return BUILDERS[spec.kind](spec, rng)


# =============================================================================
# Inference
# =============================================================================

def _batched(net, windows, batch_size, run):
    windows = np.asarray(windows, dtype=np.float64)
    single = windows.ndim == 3
    if single:
        windows = windows[None]
    results = [run(windows[start:start + batch_size]) for start in range(0, len(windows), batch_size)]
    out = np.concatenate(results, axis=0)
    return out[0] if single else out


def predict_window(net, input_window, batch_size=256):
    """
    Predict the next dt frames from the previous dt frames.

    Args:
        net (Network): Trained temporal encoder
        input_window (Tensor): 3 x J x dt, or B x 3 x J x dt

    Returns:
        Tensor: Prediction with the same shape as the input
    """
    if not net.is_encoder:
        raise ParameterError("predict_window needs a temporal encoder")
    window = (3, net.spec.num_joints, net.spec.delta_t)

    def run(chunk):
        if chunk.shape[1:] != window:
            raise ShapeError(f"input window must be {window}", chunk.shape[1:])
        return net.forward(chunk).output.reshape((len(chunk),) + window)

    return _batched(net, input_window, batch_size, run)


def extract_features(net, input_window, tap, batch_size=256):
    """
    Post-activation features of a tapped layer.

    Args:
        net (Network): Temporal encoder
        input_window (Tensor): 3 x J x dt, or B x 3 x J x dt
        tap (str): lower, middle or upper

    Returns:
        Tensor: Feature vector(s) of the tapped layer
    """
    index = net.tap_index(tap)

    def run(chunk):
        return net.forward(chunk, stop_at=index).output

    return _batched(net, input_window, batch_size, run)


def layer_activations(net, windows, layer_index, batch_size=256):
    """Outputs of layer ``layer_index`` for a batch of windows."""
    if not 0 <= layer_index < len(net.layers):
        raise ParameterError(f"layer index {layer_index} out of range")

    def run(chunk):
        return net.forward(chunk, stop_at=layer_index).output

    return _batched(net, windows, batch_size, run)
