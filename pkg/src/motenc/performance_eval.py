"""
Performance Evaluation - Prediction Horizons
============================================
Prediction error of a temporal encoder at fixed horizons.

A window slides over every recording; each position gives one prediction of
the next dt frames. At every horizon the per-frame error (Euclidean distance
over all 3 * N_joints coordinates, divided by N_joints) is averaged over all
(position, recording) samples.

Horizons are given in milliseconds and map to 1-based frame indices of the
predicted window: round(ms * fps / 1000), ties to even.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from motenc.errors import EvaluationError, ParameterError, ShapeError
from motenc.model import Network, predict_window
from motenc.windowing import make_window_pairs, mask_limb

log = logging.getLogger(__name__)

DEFAULT_HORIZONS_MS = (80, 160, 320, 560, 1000, 1600)
CSV_COLUMNS = ["horizon_ms", "frame_idx", "mean_error", "n"]


def frame_error(pred_frame, gt_frame, n_joints):
    """
    Joint-normalized Euclidean distance between two frames.

    Args:
        pred_frame (Tensor): 3 x N_joints prediction
        gt_frame (Tensor): 3 x N_joints ground truth
        n_joints (int): Normalizer

    Returns:
        float: ||pred - gt||_2 / n_joints

    Raises:
        ShapeError: Frames differ in shape, or there are no joints to normalize by
    """
    pred_frame = np.asarray(pred_frame, dtype=np.float64)
    gt_frame = np.asarray(gt_frame, dtype=np.float64)
    if pred_frame.shape != gt_frame.shape:
        raise ShapeError("frames differ in shape", pred_frame.shape, gt_frame.shape)
    if n_joints < 1 or pred_frame.shape[-1:] == (0,):
        raise ShapeError(f"frame error needs at least one joint, got n_joints={n_joints}", pred_frame.shape)
    return float(np.sqrt(np.sum((pred_frame - gt_frame) ** 2)) / n_joints)


def horizon_frame_index(ms, fps, delta_t=None):
    """
    1-based index into the predicted window for a horizon in milliseconds.

    Raises:
        ParameterError: Non-positive horizon, or an index outside [1, delta_t]
    """
    if ms <= 0:
        raise ParameterError(f"horizon must be positive, got {ms} ms")
    index = round(ms * fps / 1000)
    if index < 1:
        raise ParameterError(f"horizon {ms} ms is shorter than one frame at {fps} fps")
    if delta_t is not None and index > delta_t:
        raise ParameterError(
            f"horizon {ms} ms maps to frame {index}, beyond the {delta_t}-frame window"
        )
    return int(index)


def persistence_baseline(input_window):
    """Zero-motion prediction: the last input frame repeated dt times."""
    window = np.asarray(input_window, dtype=np.float64)
    return np.repeat(window[..., -1:], window.shape[-1], axis=-1)


@dataclass
class HorizonReport:
    """
    Mean prediction error per horizon for one model on one recording set.

    ``n`` is the number of predicted windows every mean is taken over.
    """

    horizons_ms: list
    frame_indices: list
    mean_errors: list
    n: int
    model_id: str = "model"
    set_id: str = "recordings"
    fps: int = 60
    delta_t: int = 100
    masked_limb: str = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.frame_indices, self.frame_indices[1:])):
            raise ParameterError(f"horizon frame indices must increase strictly: {self.frame_indices}")
        if self.n < 1:
            raise EvaluationError("a horizon report needs at least one sample")

    @property
    def label(self):
        if self.masked_limb:
            return f"{self.model_id} (no {self.masked_limb})"
        return self.model_id

    def to_frame(self):
        return pd.DataFrame({
            "horizon_ms": list(self.horizons_ms),
            "frame_idx": list(self.frame_indices),
            "mean_error": list(self.mean_errors),
            "n": [self.n] * len(self.horizons_ms),
        }, columns=CSV_COLUMNS)

    def header_lines(self):
        meta = {
            "model": self.model_id,
            "set": self.set_id,
            "fps": self.fps,
            "delta_t": self.delta_t,
            "masked_limb": self.masked_limb or "-",
            **self.metadata,
        }
        return [f"# {key}={value}" for key, value in meta.items()]

    def to_csv(self, path):
        """Write ``# key=value`` metadata lines, then the delimited table."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        body = self.to_frame().to_csv(index=False, float_format="%.17g", lineterminator="\n")
        path.write_text("\n".join(self.header_lines()) + "\n" + body, encoding="utf-8")
        return path

    def to_table(self):
        """Aligned text table, one horizon per column."""
        return horizon_table([self])


def horizon_table(reports, labels=None):
    """
    Several reports as one aligned table: one row per model, one column per horizon.

    Args:
        reports (list): HorizonReport objects
        labels (list): Row names, defaults to each report's label

    Returns:
        str: Table text
    """
    reports = list(reports)
    labels = labels or [r.label for r in reports]
    rows = {
        label: {f"{ms}ms": err for ms, err in zip(r.horizons_ms, r.mean_errors)}
        for label, r in zip(labels, reports)
    }
    df = pd.DataFrame.from_dict(rows, orient="index")
    df.index.name = "model"
    return df.to_string(float_format=lambda v: f"{v:.4f}")


def _as_predictor(model):
    if isinstance(model, Network):
        return lambda windows: predict_window(model, windows)
    if callable(model):
        return model
    raise ParameterError("model must be a temporal encoder Network or a callable")


def _horizon_indices(horizons_ms, fps, delta_t):
    indices = [horizon_frame_index(ms, fps, delta_t) for ms in horizons_ms]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ParameterError(f"horizons {list(horizons_ms)} do not map to increasing frames at {fps} fps")
    return indices


def _recording_errors(predict, rec, delta_t, indices, limb, batch_size):
    """Sum of per-window errors at each horizon, and the window count."""
    pairs = make_window_pairs(rec, delta_t)
    sums = np.zeros(len(indices))
    if not pairs:
        return sums, 0
    columns = np.asarray(indices) - 1
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start:start + batch_size]
        inputs = np.stack([p.input for p in chunk])
        if limb is not None:
            inputs = mask_limb(inputs, limb, rec.schema)
        targets = np.stack([p.target for p in chunk])
        predictions = predict(inputs)
        diff = predictions[..., columns] - targets[..., columns]
        errors = np.sqrt(np.sum(diff * diff, axis=(1, 2))) / rec.num_joints
        sums += errors.sum(axis=0)
    return sums, len(pairs)


def evaluate_horizons(model, recordings, horizons_ms=DEFAULT_HORIZONS_MS, delta_t=None,
                      limb=None, threads=1, model_id=None, set_id="recordings",
                      batch_size=256, metadata=None):
    """
    Sliding-window evaluation at fixed horizons.

    Args:
        model (Network | callable): Temporal encoder, or a function mapping
            B x 3 x J x dt windows to predictions (e.g. ``persistence_baseline``)
        recordings (list): Normalized recordings sharing one fps
        horizons_ms (list): Increasing horizons in milliseconds
        delta_t (int): Window length; taken from the network when omitted
        limb (str): Zero this limb in every input window (targets untouched)
        threads (int): Recordings evaluated in parallel; reduction order is fixed
        model_id (str): Name for the report

    Returns:
        HorizonReport: Means over every (window, recording)

    Raises:
        EvaluationError: No recording is long enough for a window pair
    """
    if isinstance(model, Network):
        delta_t = model.spec.delta_t if delta_t is None else delta_t
        model_id = model_id or model.spec.kind
    if delta_t is None:
        raise ParameterError("delta_t is required for callable models")
    recordings = list(recordings)
    if not recordings:
        raise EvaluationError("no recordings to evaluate")
    rates = sorted({r.fps for r in recordings})
    if len(rates) != 1:
        raise EvaluationError(f"recordings mix sampling rates {rates}; evaluate one fps per run")
    fps = rates[0]
    if limb is not None:
        for rec in recordings:
            rec.schema.limb_joints(limb)

    indices = _horizon_indices(horizons_ms, fps, delta_t)
    predict = _as_predictor(model)

    def run(rec):
        return _recording_errors(predict, rec, delta_t, indices, limb, batch_size)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, recordings))
    else:
        results = [run(rec) for rec in recordings]

    total = np.zeros(len(indices))
    count = 0
    for sums, n in results:
        total += sums
        count += n
    if count == 0:
        raise EvaluationError(f"no recording is long enough for a {delta_t}-frame window pair")

    return HorizonReport(
        horizons_ms=list(horizons_ms),
        frame_indices=indices,
        mean_errors=(total / count).tolist(),
        n=count,
        model_id=model_id or "model",
        set_id=set_id,
        fps=fps,
        delta_t=delta_t,
        masked_limb=limb,
        metadata=dict(metadata or {}),
    )


def evaluate_missing_limb(model, recordings, limb, horizons_ms=DEFAULT_HORIZONS_MS, **kwargs):
    """``evaluate_horizons`` with ``limb`` zeroed in every input window."""
    if limb is None:
        raise ParameterError("evaluate_missing_limb needs a limb name")
    return evaluate_horizons(model, recordings, horizons_ms, limb=limb, **kwargs)


def evaluate_by_action(model, recordings, horizons_ms=DEFAULT_HORIZONS_MS, **kwargs):
    """
    One report per action label.

    Returns:
        dict: label -> HorizonReport, labels sorted; unlabeled recordings under "-"
    """
    groups = {}
    for rec in recordings:
        groups.setdefault(rec.label or "-", []).append(rec)
    kwargs.pop("set_id", None)
    return {
        label: evaluate_horizons(model, groups[label], horizons_ms, set_id=label, **kwargs)
        for label in sorted(groups)
    }


def missing_limb_sweep(model, recordings, horizons_ms=DEFAULT_HORIZONS_MS, schema=None, **kwargs):
    """
    ``evaluate_missing_limb`` for every limb of the schema.

    Returns:
        dict: limb name -> HorizonReport, in schema order
    """
    recordings = list(recordings)
    if not recordings:
        raise EvaluationError("no recordings to evaluate")
    schema = schema or recordings[0].schema
    return {
        limb: evaluate_missing_limb(model, recordings, limb, horizons_ms, **kwargs)
        for limb in schema.limb_names
    }


class PerformanceEvaluator:
    """
    Horizon evaluation stage: model, optional baseline and limb masking.

    Collects reports in ``reports`` and writes them as CSV files plus one text
    report with every table.
    """

    def __init__(self, net, recordings, horizons_ms=DEFAULT_HORIZONS_MS, threads=1, provenance=None):
        self.net = net
        self.recordings = list(recordings)
        self.horizons_ms = list(horizons_ms)
        self.threads = threads
        self.provenance = dict(provenance or {})
        self.reports = {}
        self.by_action = {}

    def _kwargs(self):
        return {"threads": self.threads, "metadata": self.provenance}

    def run_evaluation(self, mask_limb_name=None, baseline=False, per_action=False, sweep=False):
        """
        Run every requested evaluation.

        Returns:
            dict: name -> HorizonReport
        """
        self.reports["model"] = evaluate_horizons(self.net, self.recordings, self.horizons_ms, **self._kwargs())
        if baseline:
            self.reports["baseline"] = evaluate_horizons(
                persistence_baseline, self.recordings, self.horizons_ms,
                delta_t=self.net.spec.delta_t, model_id="persistence", **self._kwargs(),
            )
        if mask_limb_name:
            self.reports[f"missing_{mask_limb_name}"] = evaluate_missing_limb(
                self.net, self.recordings, mask_limb_name, self.horizons_ms, **self._kwargs()
            )
        if sweep:
            for limb, report in missing_limb_sweep(self.net, self.recordings, self.horizons_ms,
                                                   **self._kwargs()).items():
                self.reports[f"missing_{limb}"] = report
        if per_action:
            self.by_action = evaluate_by_action(self.net, self.recordings, self.horizons_ms, **self._kwargs())
        return self.reports

    def save_report(self, output_dir="outputs/reports"):
        """
        Write one CSV per report and ``horizon_evaluation_report.txt``.

        Returns:
            list: Written paths
        """
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        written = [report.to_csv(output_dir / f"horizons_{name}.csv") for name, report in self.reports.items()]
        for label, report in self.by_action.items():
            written.append(report.to_csv(output_dir / f"horizons_action_{label}.csv"))

        first = next(iter(self.reports.values()))
        lines = []
        lines.append("=" * 80)
        lines.append("HORIZON EVALUATION REPORT")
        lines.append("=" * 80)
        lines.extend(first.header_lines())
        lines.append(f"# recordings={len(self.recordings)} windows={first.n}")
        lines.append("")
        lines.append("-" * 80)
        lines.append("MEAN PREDICTION ERROR PER HORIZON")
        lines.append("-" * 80)
        lines.append(horizon_table(self.reports.values()))
        lines.append("")
        if self.by_action:
            lines.append("-" * 80)
            lines.append("PER ACTION")
            lines.append("-" * 80)
            labels = [f"{first.model_id} [{label}]" for label in self.by_action]
            lines.append(horizon_table(self.by_action.values(), labels))
            lines.append("")
        lines.append("=" * 80)
        lines.append("END OF REPORT")
        lines.append("=" * 80)

        path = output_dir / "horizon_evaluation_report.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
        log.info("Horizon report saved to %s", path)
        return written
