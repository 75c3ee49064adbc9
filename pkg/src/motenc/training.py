"""
Training
========
SGD with momentum and weight decay, the input-dropout schedule, and the
mini-batch loops for temporal encoders and feature classifiers. Optional
greedy layerwise pretraining and action-specific fine-tuning build on the
same loop.

Every epoch emits one line on the ``motenc.training.epochs`` logger:

    epoch=<k> loss=<float> dropout=<float> lr=<float>
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from motenc.errors import ConfigError, NumericError, ParameterError, ShapeError
from motenc.layers import DenseLayer, mse_loss, softmax_cross_entropy
from motenc.model import Network
from motenc.tensor import SeededRng, sample_sparse_gaussian

log = logging.getLogger(__name__)
epoch_log = logging.getLogger("motenc.training.epochs")

BATCH_RANGE = (300, 500)

# sub-stream keys under the training seed
_SHUFFLE_STREAM = 1
_DROPOUT_STREAM = 2
_PRETRAIN_STREAM = 3


@dataclass
class TrainConfig:
    """Optimizer and schedule settings; defaults follow the published recipe."""

    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 400
    epochs: int = 10
    dropout_start: float = 0.1
    dropout_end: float = 0.3
    seed: int = 0
    pretrain: bool = False
    pretrain_epochs: int = 5
    finetune_lr_factor: float = 0.1
    decay_biases: bool = False
    classifier_dropout: float = 0.0

    def problems(self):
        found = []
        if self.lr < 0:
            found.append(f"lr must be >= 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            found.append(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            found.append(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            found.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            found.append(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout_start <= self.dropout_end < 1.0:
            found.append(
                f"dropout schedule needs 0 <= start <= end < 1, got {self.dropout_start}..{self.dropout_end}"
            )
        if not 0.0 <= self.classifier_dropout < 1.0:
            found.append(f"classifier_dropout must lie in [0, 1), got {self.classifier_dropout}")
        if self.pretrain_epochs < 0:
            found.append(f"pretrain_epochs must be >= 0, got {self.pretrain_epochs}")
        if self.finetune_lr_factor < 0:
            found.append(f"finetune_lr_factor must be >= 0, got {self.finetune_lr_factor}")
        return found

    def validate(self):
        found = self.problems()
        if found:
            raise ConfigError(found)
        return self

    def batch_size_warning(self):
        low, high = BATCH_RANGE
        if not low <= self.batch_size <= high:
            return f"batch size {self.batch_size} is outside the recommended range {low}-{high}"
        return None


@dataclass
class OptimizerState:
    """Per-parameter velocities (zero at start) and the step counter."""

    velocities: list
    step: int = 0

    @classmethod
    def for_parameters(cls, params):
        return cls([np.zeros_like(p.value) for p in params])


@dataclass
class TrainResult:
    net: Network
    loss_history: list = field(default_factory=list)


def sgd_momentum_step(params, grads, state, config, lr=None):
    """
    One in-place update of every parameter.

    v <- momentum * v - lr * (grad + weight_decay * param)
    param <- param + v

    Masked parameters are re-zeroed at masked positions afterwards. Biases
    are not decayed unless ``config.decay_biases``.

    Args:
        params (list): Parameter objects
        grads (list): Gradients aligned with ``params``
        state (OptimizerState): Velocities, updated in place
        config (TrainConfig): momentum / weight_decay (and lr unless given)
        lr (float): Learning rate override
    """
    lr = config.lr if lr is None else lr
    if len(params) != len(grads) or len(params) != len(state.velocities):
        raise ShapeError("parameter, gradient and velocity lists differ in length")
    for param, grad, velocity in zip(params, grads, state.velocities):
        if grad.shape != param.value.shape or velocity.shape != param.value.shape:
            raise ShapeError(f"{param.name}: gradient shape", grad.shape, param.value.shape)
        decay = config.weight_decay if (param.decay or config.decay_biases) else 0.0
        velocity *= config.momentum
        velocity -= lr * (grad + decay * param.value)
        param.value += velocity
        if param.mask is not None:
            param.value *= param.mask
            velocity *= param.mask
    state.step += 1


def dropout_rate_at(epoch, total_epochs, config):
    """
    Input dropout for ``epoch``, linear from ``dropout_start`` to ``dropout_end``.

    Returns:
        float: start at epoch 0, end at the last epoch, start when there is one epoch
    """
    if not 0 <= epoch < total_epochs:
        raise ParameterError(f"epoch {epoch} outside [0, {total_epochs})")
    if total_epochs == 1:
        return config.dropout_start
    fraction = epoch / (total_epochs - 1)
    return config.dropout_start * (1.0 - fraction) + config.dropout_end * fraction


def _check_finite(value, what, epoch, batch_index, lr):
    if not np.isfinite(value):
        raise NumericError(
            f"{what} became {value} at epoch {epoch}, batch {batch_index} (lr={lr}); "
            "try a smaller learning rate or init_std"
        )


def _batches(count, batch_size):
    for start in range(0, count, batch_size):
        yield start, min(start + batch_size, count)


def _run_te_epochs(net, pairs, config, epochs, lr, trainable=None, log_epochs=True, stream_seed=None):
    """
    Shared TE loop: shuffle, input dropout, MSE, backprop, SGD.

    ``trainable`` restricts updates to the parameters of those layer indices.
    """
    seed = config.seed if stream_seed is None else stream_seed
    shuffle_rng = SeededRng.derive(seed, _SHUFFLE_STREAM)
    dropout_rng = SeededRng.derive(seed, _DROPOUT_STREAM)

    layer_params = [layer.parameters() for layer in net.layers]
    selected = range(len(net.layers)) if trainable is None else trainable
    params = [p for i in selected for p in layer_params[i]]
    state = OptimizerState.for_parameters(params)

    history = []
    rate = 0.0
    for epoch in range(epochs):
        rate = dropout_rate_at(epoch, epochs, config)
        order = shuffle_rng.permutation(len(pairs))
        total, seen = 0.0, 0
        for batch_index, (start, stop) in enumerate(_batches(len(order), config.batch_size)):
            batch = [pairs[i] for i in order[start:stop]]
            inputs = np.stack([p.input for p in batch])
            targets = np.stack([p.target for p in batch]).reshape(len(batch), -1)

            trace = net.forward(inputs, training=True, dropout_rate=rate, rng=dropout_rng)
            loss = mse_loss(trace.output, targets)
            _check_finite(loss.value, "training loss", epoch, batch_index, lr)

            grads, _ = net.backward(trace, loss.gradient)
            if trainable is not None:
                grads_by_layer, cursor = [], 0
                for params_of_layer in layer_params:
                    grads_by_layer.append(grads[cursor:cursor + len(params_of_layer)])
                    cursor += len(params_of_layer)
                grads = [g for i in selected for g in grads_by_layer[i]]
            sgd_momentum_step(params, grads, state, config, lr=lr)

            total += loss.value * len(batch)
            seen += len(batch)
        mean_loss = total / seen
        history.append(mean_loss)
        if log_epochs:
            epoch_log.info("epoch=%d loss=%.8g dropout=%.4f lr=%g", epoch, mean_loss, rate, lr)
    return history, rate


def _require_pairs(pairs):
    pairs = list(getattr(pairs, "pairs", pairs))
    if not pairs:
        raise ConfigError("training needs at least one window pair (empty dataset)")
    return pairs


def train_te(net, pairs, config):
    """
    Train a temporal encoder on window pairs.

    Each epoch reshuffles with the seeded rng, applies input dropout at the
    scheduled rate and minimizes the MSE between predicted and target
    windows. Deterministic given ``config.seed``.

    Args:
        net (Network): Temporal encoder, updated in place
        pairs (list | PairDataset): Window pairs
        config (TrainConfig): Optimizer and schedule

    Returns:
        TrainResult: The net and the mean loss of every epoch
    """
    config.validate()
    if not net.is_encoder:
        raise ConfigError("train_te needs a temporal encoder")
    pairs = _require_pairs(pairs)
    warning = config.batch_size_warning()
    if warning:
        log.warning(warning)

    history, rate = _run_te_epochs(net, pairs, config, config.epochs, config.lr)
    net.metadata.update({
        "epoch": int(net.metadata.get("epoch", 0)) + config.epochs,
        "seed": config.seed,
        "dropout_rate": rate,
        "loss_history": history,
    })
    return TrainResult(net, history)


def train_classifier(clf, features, labels, config):
    """
    Train an N-50-20-M classifier with softmax cross-entropy.

    Args:
        clf (Network): Classifier, updated in place
        features (Tensor): n x N feature rows
        labels (array-like): n class indices in [0, M)
        config (TrainConfig): Same optimizer; input dropout ``classifier_dropout``

    Returns:
        TrainResult: The classifier and the mean loss of every epoch
    """
    config.validate()
    if clf.is_encoder:
        raise ConfigError("train_classifier needs a classifier network")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ConfigError(
            f"{features.shape[0] if features.ndim else 0} feature rows but {labels.shape[0]} labels"
        )
    if np.unique(labels).size < 2:
        raise ConfigError("classifier training needs at least two classes")
    if labels.min() < 0 or labels.max() >= clf.spec.num_classes:
        raise ConfigError(f"labels must lie in [0, {clf.spec.num_classes})")

    shuffle_rng = SeededRng.derive(config.seed, _SHUFFLE_STREAM)
    dropout_rng = SeededRng.derive(config.seed, _DROPOUT_STREAM)
    params = clf.parameters()
    state = OptimizerState.for_parameters(params)
    output_layer = clf.layers[-1]

    history = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(labels))
        total = 0.0
        for batch_index, (start, stop) in enumerate(_batches(len(order), config.batch_size)):
            rows = order[start:stop]
            trace = clf.forward(features[rows], training=config.classifier_dropout > 0,
                                dropout_rate=config.classifier_dropout, rng=dropout_rng)
            logits = trace.inputs[-1] @ output_layer.effective_weights() + output_layer.bias
            loss = softmax_cross_entropy(logits, labels[rows])
            _check_finite(loss.value, "classifier loss", epoch, batch_index, config.lr)
            grads, _ = clf.backward(trace, loss.gradient, upstream_is_preactivation=True)
            sgd_momentum_step(params, grads, state, config)
            total += loss.value * len(rows)
        history.append(total / len(labels))
        epoch_log.info("epoch=%d loss=%.8g dropout=%.4f lr=%g", epoch, history[-1],
                       config.classifier_dropout, config.lr)
    clf.metadata.update({"epoch": config.epochs, "seed": config.seed, "loss_history": history})
    return TrainResult(clf, history)


def pretrain_layerwise(net, pairs, config):
    """
    Greedy layerwise pretraining of the encoder half.

    For k = 1..depth (depth = layers up to and including the bottleneck) the
    first k encoder layers plus a throwaway linear decoder back to the window
    size are trained as a shallow temporal encoder for
    ``config.pretrain_epochs``. Only layer k and the throwaway decoder are
    updated at stage k; layers are shared, so the full net keeps the result.
    Joint training is still required afterwards.

    Returns:
        Network: ``net``, updated in place
    """
    config.validate()
    if not net.is_encoder:
        raise ConfigError("layerwise pretraining needs a temporal encoder")
    depth = net.taps["middle"] + 1
    if depth < 2:
        raise ConfigError("layerwise pretraining needs at least two encoder layers")
    pairs = _require_pairs(pairs)
    if config.pretrain_epochs == 0:
        return net

    init_rng = SeededRng.derive(config.seed, _PRETRAIN_STREAM)
    for k in range(1, depth + 1):
        top = net.layers[k - 1]
        fan_in = top.output_width
        nonzeros = min(net.spec.nonzeros_per_unit, fan_in)
        decoder = DenseLayer(
            sample_sparse_gaussian(init_rng, fan_in, net.spec.input_size, nonzeros, net.spec.init_std),
            np.zeros(net.spec.input_size), "linear", f"pretrain.decoder{k}",
        )
        shallow = Network(net.spec, net.layers[:k] + [decoder], {"middle": k - 1})
        history, _ = _run_te_epochs(
            shallow, pairs, config, config.pretrain_epochs, config.lr,
            trainable=[k - 1, k], log_epochs=False, stream_seed=config.seed + k,
        )
        log.info("Pretrained encoder layer %d/%d (%s): loss %.6g -> %.6g",
                 k, depth, top.name, history[0], history[-1])
    net.metadata["pretrained"] = {"levels": depth, "epochs": config.pretrain_epochs}
    return net


def finetune(net, pairs, config, action=None, lr=None):
    """
    Continue training a trained encoder on one action's pairs.

    Uses ``config.lr * config.finetune_lr_factor`` unless ``lr`` is given, with
    a fresh optimizer state. Provenance goes to ``net.metadata["finetune"]``.

    Args:
        net (Network): Trained temporal encoder
        pairs (list | PairDataset): Window pairs
        config (TrainConfig): Schedule settings
        action (str): Keep only pairs with this label
        lr (float): Learning rate override

    Returns:
        TrainResult: The net and the fine-tune loss history
    """
    config.validate()
    if not net.is_encoder:
        raise ConfigError("finetune needs a temporal encoder")
    pairs = list(getattr(pairs, "pairs", pairs))
    if action is not None:
        pairs = [p for p in pairs if p.label == action]
    if not pairs:
        raise ConfigError(f"no window pairs to fine-tune on{f' for action {action}' if action else ''}")
    lr = config.lr * config.finetune_lr_factor if lr is None else lr
    if lr < 0:
        raise ConfigError(f"fine-tune lr must be >= 0, got {lr}")

    base_epoch = int(net.metadata.get("epoch", 0))
    history, rate = _run_te_epochs(net, pairs, config, config.epochs, lr)
    net.metadata.update({
        "epoch": base_epoch + config.epochs,
        "seed": config.seed,
        "dropout_rate": rate,
        "loss_history": history,
        "finetune": {"action": action, "lr": lr, "base_epoch": base_epoch, "epochs": config.epochs},
    })
    return TrainResult(net, history)
