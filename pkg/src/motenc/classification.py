"""
Sequence Classification
=======================
Action classification from temporal-encoder features.

Protocol:
1. Every input window of the training recordings is passed through the
   encoder and the features of one tap (lower / middle / upper) are kept
2. An N-50-20-M softmax classifier is trained on the standardized features
3. A test sequence is classified from its first ``window_seconds`` (8 s):
   every time step is classified, the per-step softmax distributions are
   averaged (or majority-voted) and the argmax wins
4. Results are collected in a confusion matrix with per-class rates
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, confusion_matrix
from sklearn.preprocessing import StandardScaler

from motenc.dataset_split import check_overlap
from motenc.errors import ConfigError, EvaluationError, ParameterError, ValidationError
from motenc.model import ArchitectureSpec, build_classifier, extract_features
from motenc.tensor import SeededRng
from motenc.training import TrainConfig, train_classifier
from motenc.windowing import sequence_windows

log = logging.getLogger(__name__)

AGGREGATIONS = ("mean", "vote")
DEFAULT_WINDOW_SECONDS = 8.0
_CLASSIFIER_INIT_STREAM = 7


@dataclass
class ConfusionMatrix:
    """
    M x M sequence counts; rows are true classes, columns predictions.
    """

    class_names: list
    counts: np.ndarray
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, true, predicted, class_names, metadata=None):
        labels = list(range(len(class_names)))
        counts = confusion_matrix(true, predicted, labels=labels)
        return cls(list(class_names), counts.astype(np.int64), dict(metadata or {}))

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def rate(self):
        """Classification rate: trace / total."""
        if self.total == 0:
            return 0.0
        return float(np.trace(self.counts) / self.total)

    def per_class_rates(self):
        """Correct / total per true class; 0 for classes without sequences."""
        totals = self.counts.sum(axis=1)
        diagonal = np.diag(self.counts).astype(np.float64)
        return {
            name: (float(diagonal[i] / totals[i]) if totals[i] else 0.0)
            for i, name in enumerate(self.class_names)
        }

    def to_frame(self):
        df = pd.DataFrame(self.counts, index=self.class_names, columns=self.class_names)
        df.index.name = "true \\ predicted"
        return df

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = [f"# {k}={v}" for k, v in self.metadata.items()]
        header.append(f"# rate={self.rate!r}")
        body = self.to_frame().to_csv(lineterminator="\n")
        path.write_text("\n".join(header) + "\n" + body, encoding="utf-8")
        return path

    def to_text(self):
        lines = []
        lines.append("=" * 80)
        lines.append("SEQUENCE CLASSIFICATION REPORT")
        lines.append("=" * 80)
        for key, value in self.metadata.items():
            lines.append(f"{key}: {value}")
        lines.append("")
        lines.append("-" * 80)
        lines.append("CONFUSION MATRIX (rows: true action, columns: predicted)")
        lines.append("-" * 80)
        lines.append(self.to_frame().to_string())
        lines.append("")
        lines.append("-" * 80)
        lines.append("CLASSIFICATION RATES")
        lines.append("-" * 80)
        for name, rate in self.per_class_rates().items():
            lines.append(f"{name:<25}: {rate:7.2%}")
        lines.append(f"{'Overall':<25}: {self.rate:7.2%}  ({np.trace(self.counts)}/{self.total} sequences)")
        lines.append("")
        lines.append("=" * 80)
        lines.append("END OF REPORT")
        lines.append("=" * 80)
        return "\n".join(lines) + "\n"


def aggregate_distributions(distributions, rule="mean"):
    """
    Combine per-step class distributions into one decision.

    ``mean`` averages the distributions and takes the argmax; ``vote`` counts
    per-step argmaxes. Ties go to the lowest class index.

    Args:
        distributions (Tensor): steps x M softmax outputs
        rule (str): mean or vote

    Returns:
        int: Winning class index
    """
    distributions = np.asarray(distributions, dtype=np.float64)
    if distributions.ndim != 2 or distributions.shape[0] == 0:
        raise EvaluationError("no per-step distributions to aggregate")
    if rule == "mean":
        return int(np.argmax(distributions.mean(axis=0)))
    if rule == "vote":
        votes = np.bincount(distributions.argmax(axis=1), minlength=distributions.shape[1])
        return int(np.argmax(votes))
    raise ParameterError(f"unknown aggregation '{rule}', expected one of {AGGREGATIONS}")


def _standardize(features, metadata):
    mean = np.asarray(metadata["feature_mean"])
    scale = np.asarray(metadata["feature_scale"])
    return (features - mean) / scale


def sequence_distributions(clf, te_net, recording, tap, window_seconds=DEFAULT_WINDOW_SECONDS):
    """Per-step softmax outputs of the classifier over a sequence's first seconds."""
    windows = sequence_windows(recording, te_net.spec.delta_t, window_seconds)
    features = extract_features(te_net, windows, tap)
    if "feature_mean" in clf.metadata:
        features = _standardize(features, clf.metadata)
    return clf.forward(features).output


def classify_sequence(clf, te_net, recording, tap, window_seconds=DEFAULT_WINDOW_SECONDS, aggregate="mean"):
    """
    Classify a whole sequence from its first ``window_seconds``.

    Returns:
        int: Predicted class index
    """
    return aggregate_distributions(
        sequence_distributions(clf, te_net, recording, tap, window_seconds), aggregate
    )


class SequenceClassifier:
    """
    Classification protocol on one tap of a trained temporal encoder.

    ``fit`` collects tap features of every training window, standardizes
    them and trains the classifier; ``evaluate`` classifies whole test
    sequences and returns a ``ConfusionMatrix``.
    """

    def __init__(self, te_net, tap="middle", train_config=None, window_seconds=DEFAULT_WINDOW_SECONDS,
                 aggregate="mean", stride=1, hidden=(50, 20)):
        if not te_net.is_encoder:
            raise ConfigError("sequence classification needs a temporal encoder")
        if tap not in te_net.taps:
            raise ValidationError(f"tap '{tap}' is not present in the {te_net.spec.kind} network")
        if aggregate not in AGGREGATIONS:
            raise ConfigError(f"aggregate must be one of {AGGREGATIONS}, got '{aggregate}'")
        self.te_net = te_net
        self.tap = tap
        self.train_config = train_config or TrainConfig(classifier_dropout=0.0)
        self.window_seconds = window_seconds
        self.aggregate = aggregate
        self.stride = stride
        self.hidden = tuple(hidden)
        self.clf = None
        self.class_names = []
        self.stats = {}

    def collect_features(self, recordings):
        """
        Tap features of every input window of labeled recordings.

        Returns:
            tuple: (features n x N, label indices n)
        """
        features, labels = [], []
        for rec in recordings:
            if rec.label not in self.class_names:
                raise ValidationError(f"recording {rec.recording_id} has unknown label '{rec.label}'")
            windows = sequence_windows(rec, self.te_net.spec.delta_t, None, self.stride)
            features.append(extract_features(self.te_net, windows, self.tap))
            labels.append(np.full(len(windows), self.class_names.index(rec.label)))
        return np.concatenate(features), np.concatenate(labels)

    def fit(self, recordings):
        """Train the classifier on labeled training recordings."""
        recordings = list(recordings)
        unlabeled = [r.recording_id for r in recordings if not r.label]
        if unlabeled:
            raise ValidationError([f"training recording {rid} has no label" for rid in unlabeled])
        self.class_names = sorted({r.label for r in recordings})
        if len(self.class_names) < 2:
            raise ConfigError("classification needs at least two action labels in the training data")

        features, labels = self.collect_features(recordings)
        scaler = StandardScaler().fit(features)
        scale = np.where(scaler.scale_ > 0, scaler.scale_, 1.0)

        spec = ArchitectureSpec(
            kind="classifier",
            classifier_input=features.shape[1],
            classifier_hidden=self.hidden,
            num_classes=len(self.class_names),
            init_std=self.te_net.spec.init_std,
            nonzeros_per_unit=self.te_net.spec.nonzeros_per_unit,
        )
        self.clf = build_classifier(spec, SeededRng.derive(self.train_config.seed, _CLASSIFIER_INIT_STREAM))
        self.clf.metadata.update({
            "class_names": self.class_names,
            "tap": self.tap,
            "encoder": self.te_net.spec.kind,
            "feature_mean": scaler.mean_.tolist(),
            "feature_scale": scale.tolist(),
        })
        log.info("Training %s-tap classifier on %d windows, %d classes", self.tap, len(labels),
                 len(self.class_names))
        result = train_classifier(self.clf, (features - scaler.mean_) / scale, labels, self.train_config)

        predicted = self.clf.forward((features - scaler.mean_) / scale).output.argmax(axis=1)
        self.stats["train_window_accuracy"] = float(accuracy_score(labels, predicted))
        self.stats["train_windows"] = int(len(labels))
        self.stats["final_loss"] = result.loss_history[-1]
        return self

    @classmethod
    def from_classifier(cls, te_net, clf, **kwargs):
        """Reuse a saved classifier; its tap and class names come from its metadata."""
        missing = [k for k in ("class_names", "tap", "feature_mean", "feature_scale") if k not in clf.metadata]
        if missing:
            raise ValidationError(f"classifier checkpoint lacks {', '.join(missing)}")
        kwargs["tap"] = clf.metadata["tap"]
        protocol = cls(te_net, **kwargs)
        protocol.clf = clf
        protocol.class_names = list(clf.metadata["class_names"])
        width = te_net.layers[te_net.tap_index(protocol.tap)].output_width
        if width != clf.spec.classifier_input:
            raise ValidationError(
                f"classifier expects {clf.spec.classifier_input} features, tap '{protocol.tap}' gives {width}"
            )
        return protocol

    def evaluate(self, recordings, metadata=None):
        """
        Classify every test sequence.

        Returns:
            ConfusionMatrix: Sequence-level results
        """
        if self.clf is None:
            raise EvaluationError("classifier is not trained")
        true, predicted = [], []
        for rec in recordings:
            if rec.label not in self.class_names:
                raise ValidationError(f"test recording {rec.recording_id} has unseen label '{rec.label}'")
            true.append(self.class_names.index(rec.label))
            predicted.append(classify_sequence(self.clf, self.te_net, rec, self.tap,
                                               self.window_seconds, self.aggregate))
        if not true:
            raise EvaluationError("no test sequences")
        meta = {
            "tap": self.tap,
            "aggregate": self.aggregate,
            "window_seconds": self.window_seconds,
            **(metadata or {}),
        }
        return ConfusionMatrix.from_predictions(true, predicted, self.class_names, meta)

    def run(self, train, test, metadata=None):
        """Check for overlap, fit on ``train`` and evaluate on ``test``."""
        check_overlap(train, test)
        self.fit(train)
        return self.evaluate(test, metadata)
