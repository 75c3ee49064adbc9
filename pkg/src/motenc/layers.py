"""
Layer Primitives
================
Dense, temporal-convolution and masked-dense layers with hand-derived
forward and backward passes, plus input dropout and the two losses.

Conventions:
- Batches are the leading axis. Dense layers take B x fan_in.
- Temporal convolutions take windows B x 3 x N_joints x dt and slide only along
  time (valid, stride 1, no padding). Filters span all 3 * N_joints channels.
- Weights are stored fan_in x fan_out so that column j belongs to output unit j.
- Backward functions are pure: they return gradients and never touch the layer.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from motenc.errors import ParameterError, ShapeError

ACTIVATIONS = ("sigmoid", "linear", "softmax")


# =============================================================================
# Activations
# =============================================================================

def sigmoid(z):
    """Logistic function, overflow-free for large |z|."""
    return np.exp(-np.logaddexp(0.0, -z))


def softmax(z):
    """Row-wise softmax over the last axis."""
    shifted = z - z.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def activate(z, activation):
    if activation == "sigmoid":
        return sigmoid(z)
    if activation == "linear":
        return z
    if activation == "softmax":
        return softmax(z)
    raise ParameterError(f"unknown activation '{activation}', expected one of {ACTIVATIONS}")


def activation_backward(output, upstream, activation):
    """
    Gradient w.r.t. the pre-activation, given the post-activation ``output``.

    Args:
        output (Tensor): activation(z)
        upstream (Tensor): dL/d output
        activation (str): Activation tag

    Returns:
        Tensor: dL/dz
    """
    if activation == "sigmoid":
        return upstream * output * (1.0 - output)
    if activation == "linear":
        return upstream
    if activation == "softmax":
        return output * (upstream - (upstream * output).sum(axis=-1, keepdims=True))
    raise ParameterError(f"unknown activation '{activation}'")


@dataclass
class Parameter:
    """A trainable tensor together with its connectivity mask and decay flag."""

    name: str
    value: np.ndarray
    mask: np.ndarray = None
    decay: bool = True


# =============================================================================
# Dense and masked dense
# =============================================================================

@dataclass
class DenseLayer:
    """Fully-connected layer: activation(x @ W + b)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "sigmoid"
    name: str = "dense"

    kind = "dense"

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ShapeError(f"{self.name}: weights must be 2-D", self.weights.shape)
        if self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"{self.name}: bias length must equal fan_out", self.bias.shape, self.weights.shape
            )
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"{self.name}: unknown activation '{self.activation}'")

    @property
    def fan_in(self):
        return self.weights.shape[0]

    @property
    def fan_out(self):
        return self.weights.shape[1]

    @property
    def output_width(self):
        return self.fan_out

    def effective_weights(self):
        return self.weights

    def forward(self, x):
        return dense_forward(self, x)

    def backward(self, x, output, upstream, upstream_is_preactivation=False):
        grad_input, grad_weights, grad_bias = dense_backward(
            self, x, upstream, output=output,
            upstream_is_preactivation=upstream_is_preactivation,
        )
        return grad_input, [grad_weights, grad_bias]

    def parameters(self):
        return [
            Parameter(f"{self.name}.weights", self.weights),
            Parameter(f"{self.name}.bias", self.bias, decay=False),
        ]

    def buffers(self):
        return []


@dataclass
class MaskedDenseLayer(DenseLayer):
    """
    Dense layer whose connectivity is restricted by a binary mask.

    Weights are kept exactly zero wherever the mask is zero; the optimizer
    re-applies the mask after every update.
    """

    mask: np.ndarray = None
    name: str = "masked"

    kind = "masked"

    def __post_init__(self):
        super().__post_init__()
        if self.mask is None or self.mask.shape != self.weights.shape:
            raise ShapeError(
                f"{self.name}: mask must match the weights",
                getattr(self.mask, "shape", ()), self.weights.shape,
            )
        self.weights = self.weights * self.mask

    def effective_weights(self):
        return self.weights * self.mask

    def forward(self, x):
        return masked_forward(self, x)

    def backward(self, x, output, upstream, upstream_is_preactivation=False):
        grad_input, grad_weights, grad_bias = masked_backward(
            self, x, upstream, output=output,
            upstream_is_preactivation=upstream_is_preactivation,
        )
        return grad_input, [grad_weights, grad_bias]

    def parameters(self):
        return [
            Parameter(f"{self.name}.weights", self.weights, mask=self.mask),
            Parameter(f"{self.name}.bias", self.bias, decay=False),
        ]

    def buffers(self):
        return [(f"{self.name}.mask", self.mask)]


def _check_dense_input(layer, x):
    if x.ndim != 2 or x.shape[1] != layer.fan_in:
        raise ShapeError(f"{layer.name}: input must be B x {layer.fan_in}", x.shape, layer.weights.shape)


def _affine_backward(layer, x, upstream, output, upstream_is_preactivation):
    _check_dense_input(layer, x)
    weights = layer.effective_weights()
    if output is None:
        output = activate(x @ weights + layer.bias, layer.activation)
    if upstream.shape != output.shape:
        raise ShapeError(f"{layer.name}: upstream gradient shape", upstream.shape, output.shape)

    if upstream_is_preactivation:
        grad_z = upstream
    else:
        grad_z = activation_backward(output, upstream, layer.activation)
    grad_weights = x.T @ grad_z
    grad_bias = grad_z.sum(axis=0)
    grad_input = grad_z @ weights.T
    return grad_input, grad_weights, grad_bias


def dense_forward(layer, x):
    """
    Args:
        layer (DenseLayer): Layer
        x (Tensor): B x fan_in input

    Returns:
        Tensor: B x fan_out, activation(x @ W + b)
    """
    _check_dense_input(layer, x)
    return activate(x @ layer.weights + layer.bias, layer.activation)


def dense_backward(layer, x, upstream, output=None, upstream_is_preactivation=False):
    """
    Gradients of a scalar loss through a dense layer.

    Args:
        layer (DenseLayer): Layer
        x (Tensor): Input the forward pass saw
        upstream (Tensor): dL/d output (or dL/dz when ``upstream_is_preactivation``)
        output (Tensor): Forward output, recomputed when omitted

    Returns:
        tuple: (grad_input, grad_weights, grad_bias)
    """
    return _affine_backward(layer, x, upstream, output, upstream_is_preactivation)


def masked_forward(layer, x):
    """Dense forward with weights := weights * mask."""
    _check_dense_input(layer, x)
    return activate(x @ layer.effective_weights() + layer.bias, layer.activation)


def masked_backward(layer, x, upstream, output=None, upstream_is_preactivation=False):
    """Dense backward with the weight gradient zeroed where the mask is zero."""
    grad_input, grad_weights, grad_bias = _affine_backward(
        layer, x, upstream, output, upstream_is_preactivation
    )
    return grad_input, grad_weights * layer.mask, grad_bias


# =============================================================================
# Temporal convolution
# =============================================================================

@dataclass
class TemporalConvLayer:
    """
    Filters of size 3 x N_joints x width, convolved along the time axis only.

    ``filter_weights`` is N x (3 * N_joints * width), each row flattened in
    (coordinate, joint, frame) order, the same order a window is flattened in.
    """

    filter_weights: np.ndarray
    bias: np.ndarray
    filter_width: int
    num_joints: int
    activation: str = "sigmoid"
    name: str = "conv"

    def __post_init__(self):
        expected = 3 * self.num_joints * self.filter_width
        if self.filter_weights.ndim != 2 or self.filter_weights.shape[1] != expected:
            raise ShapeError(
                f"{self.name}: filters must be N x {expected}", self.filter_weights.shape
            )
        if self.bias.shape != (self.filter_weights.shape[0],):
            raise ShapeError(f"{self.name}: bias length must equal N", self.bias.shape)
        if self.filter_width < 1:
            raise ParameterError(f"{self.name}: filter width must be >= 1")
        if self.activation == "softmax":
            raise ParameterError(f"{self.name}: softmax is not a convolution activation")

    @property
    def num_filters(self):
        return self.filter_weights.shape[0]

    def output_length(self, delta_t):
        return delta_t - self.filter_width + 1


def _window_patches(layer, window):
    if window.ndim != 4 or window.shape[1:3] != (3, layer.num_joints):
        raise ShapeError(
            f"{layer.name}: window must be B x 3 x {layer.num_joints} x dt", window.shape
        )
    delta_t = window.shape[3]
    if layer.filter_width > delta_t:
        raise ParameterError(
            f"{layer.name}: filter width {layer.filter_width} exceeds window length {delta_t}"
        )
    batch = window.shape[0]
    positions = delta_t - layer.filter_width + 1
    # B x 3 x J x P x w  ->  B x P x (3 * J * w)
    patches = sliding_window_view(window, layer.filter_width, axis=3)
    patches = patches.transpose(0, 3, 1, 2, 4).reshape(batch, positions, -1)
    return patches


def temporal_conv_forward(layer, window):
    """
    Args:
        layer (TemporalConvLayer): Layer
        window (Tensor): B x 3 x N_joints x dt

    Returns:
        Tensor: B x N x (dt - width + 1)
    """
    patches = _window_patches(layer, window)
    z = patches @ layer.filter_weights.T + layer.bias
    return np.ascontiguousarray(activate(z, layer.activation).transpose(0, 2, 1))


def temporal_conv_backward(layer, window, upstream, output=None):
    """
    Gradients through a temporal convolution.

    Returns:
        tuple: (grad_window, grad_filters, grad_bias)
    """
    patches = _window_patches(layer, window)
    if output is None:
        output = temporal_conv_forward(layer, window)
    if upstream.shape != output.shape:
        raise ShapeError(f"{layer.name}: upstream gradient shape", upstream.shape, output.shape)

    batch, _, joints, delta_t = window.shape
    width = layer.filter_width
    positions = delta_t - width + 1

    grad_z = activation_backward(output, upstream, layer.activation).transpose(0, 2, 1)
    flat_grad = grad_z.reshape(batch * positions, layer.num_filters)
    grad_filters = flat_grad.T @ patches.reshape(batch * positions, -1)
    grad_bias = flat_grad.sum(axis=0)

    grad_patches = (grad_z @ layer.filter_weights).reshape(batch, positions, 3, joints, width)
    grad_window = np.zeros_like(window)
    for offset in range(width):
        grad_window[:, :, :, offset:offset + positions] += grad_patches[..., offset].transpose(0, 2, 3, 1)
    return grad_window, grad_filters, grad_bias


@dataclass
class ConvBank:
    """
    Parallel temporal convolutions over the same window.

    Branch outputs are flattened (filter-major) and concatenated.
    """

    branches: list = field(default_factory=list)
    delta_t: int = 100
    name: str = "conv_bank"

    kind = "conv_bank"

    @property
    def activation(self):
        return self.branches[0].activation if self.branches else "sigmoid"

    def branch_widths(self):
        return [b.num_filters * b.output_length(self.delta_t) for b in self.branches]

    @property
    def output_width(self):
        return sum(self.branch_widths())

    def forward(self, window):
        batch = window.shape[0]
        outputs = [temporal_conv_forward(b, window).reshape(batch, -1) for b in self.branches]
        return np.concatenate(outputs, axis=1)

    def backward(self, window, output, upstream, upstream_is_preactivation=False):
        if upstream_is_preactivation:
            raise ParameterError(f"{self.name}: cannot be the output layer")
        batch = window.shape[0]
        grad_window = np.zeros_like(window)
        grads = []
        start = 0
        for branch, width in zip(self.branches, self.branch_widths()):
            shape = (batch, branch.num_filters, branch.output_length(self.delta_t))
            branch_out = output[:, start:start + width].reshape(shape)
            branch_up = upstream[:, start:start + width].reshape(shape)
            g_window, g_filters, g_bias = temporal_conv_backward(branch, window, branch_up, branch_out)
            grad_window += g_window
            grads.extend([g_filters, g_bias])
            start += width
        return grad_window, grads

    def parameters(self):
        params = []
        for branch in self.branches:
            params.append(Parameter(f"{branch.name}.filters", branch.filter_weights))
            params.append(Parameter(f"{branch.name}.bias", branch.bias, decay=False))
        return params

    def buffers(self):
        return []


# =============================================================================
# Dropout and losses
# =============================================================================

def dropout_forward(x, rate, rng, training=True):
    """
    Inverted dropout.

    Kept entries are scaled by 1 / (1 - rate) so the expectation is unchanged
    and evaluation needs no rescaling.

    Returns:
        tuple: (output, kept_mask)
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training:
        return x, np.ones(x.shape, dtype=bool)
    kept = rng.random(x.shape) >= rate
    return x * kept / (1.0 - rate), kept


@dataclass
class LossValue:
    """Scalar loss and its gradient w.r.t. the prediction (or logits)."""

    value: float
    gradient: np.ndarray


def mse_loss(prediction, target):
    """
    Mean over all elements of (prediction - target)^2.

    Returns:
        LossValue: gradient 2 (prediction - target) / num_elements
    """
    if prediction.shape != target.shape:
        raise ShapeError("prediction and target differ in shape", prediction.shape, target.shape)
    diff = prediction - target
    return LossValue(float(np.mean(diff * diff)), 2.0 * diff / diff.size)


def softmax_cross_entropy(logits, labels):
    """
    Mean negative log-likelihood of integer labels under softmax(logits).

    Log-sum-exp stabilized. The gradient is taken w.r.t. the logits:
    (softmax - one_hot) / B.
    """
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("logits must be B x M with B labels", logits.shape, labels.shape)
    num_classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ParameterError(f"labels must lie in [0, {num_classes})")

    batch = logits.shape[0]
    rows = np.arange(batch)
    peak = logits.max(axis=1, keepdims=True)
    log_norm = peak + np.log(np.exp(logits - peak).sum(axis=1, keepdims=True))
    log_probs = logits - log_norm
    value = float(-log_probs[rows, labels].mean())

    gradient = np.exp(log_probs)
    gradient[rows, labels] -= 1.0
    return LossValue(value, gradient / batch)
