"""
Command Line Interface
======================
    python -m motenc synth    --action walk --count 3
    python -m motenc train    --data data/synthetic --arch hte
    python -m motenc eval     --checkpoint outputs/checkpoints/H-TE.ckpt --data data/synthetic
    python -m motenc classify --te-checkpoint ... --data data/synthetic --tap middle
    python -m motenc sta      --checkpoint ... --data ... --layer lower --units 0,1,2
    python -m motenc predict  --checkpoint ... --input walk_000.motion --at 99
    python -m motenc latent   --checkpoint ... --data ... --tap middle

Every command reads the run configuration (``--config``), lets flags
override it, prints console banners and writes its artifacts under
``output_dir``. Exit codes: 0 success, 2 config/validation, 3 data/parse/I-O,
4 numeric failure.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from motenc.checkpoint import load_checkpoint, save_checkpoint
from motenc.classification import SequenceClassifier
from motenc.config import DEFAULTS, load_config
from motenc.data_cleansing import MotionCleanser
from motenc.dataset_split import StratifiedSplitGenerator, check_overlap
from motenc.errors import (
    ConfigError,
    DataError,
    EvaluationError,
    MotencError,
    ParameterError,
    ValidationError,
    exit_code_for,
)
from motenc.feature_engineering import latent_trajectory, spike_triggered_averages
from motenc.model import build_network, predict_window
from motenc.motion_io import MotionRecording, save_motion_file
from motenc.performance_eval import PerformanceEvaluator, horizon_table
from motenc.performance_visualizations import PerformanceVisualizer
from motenc.synth import ACTIONS, synth_generate
from motenc.tensor import SeededRng
from motenc.training import finetune, pretrain_layerwise, train_te
from motenc.windowing import build_pair_dataset, frame_window, iter_window_batches

log = logging.getLogger(__name__)

_INIT_STREAM = 0


# =============================================================================
# Console helpers
# =============================================================================

def banner(title):
    print("=" * 80)
    print(title)
    print("=" * 80)


def status(tag, message):
    print(f"[{tag}] {message}")


def setup_logging(verbose=False, log_file=None):
    """
    Library loggers go to stderr; the epoch log goes to stdout (and ``log_file``)
    with its bare ``epoch=... loss=...`` format.
    """
    root = logging.getLogger("motenc")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.INFO if verbose else logging.WARNING)

    epochs = logging.getLogger("motenc.training.epochs")
    epochs.handlers.clear()
    epochs.propagate = False
    epochs.setLevel(logging.INFO)
    console = logging.StreamHandler(sys.stdout)
    console.setFormatter(logging.Formatter("%(message)s"))
    epochs.addHandler(console)
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, mode="w", encoding="utf-8")
        file_handler.setFormatter(logging.Formatter("%(message)s"))
        epochs.addHandler(file_handler)


def _default(section, key=None):
    value = DEFAULTS[section] if key is None else DEFAULTS[section][key]
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return value


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


# =============================================================================
# Shared steps
# =============================================================================

def _output_dirs(config):
    root = config.output_dir
    dirs = {name: root / name for name in ("checkpoints", "reports", "visualizations")}
    for path in dirs.values():
        path.mkdir(parents=True, exist_ok=True)
    return dirs


def _load_recordings(config, paths, report_name):
    """Stage A: load, downsample, normalize; writes the cleansing report."""
    data = config["data"]
    schema = config.schema() if config["schema"] else None
    cleanser = MotionCleanser(data["target_fps"], data["normalize"], schema)
    recordings = cleanser.load(paths)
    report = cleanser.generate_report(_output_dirs(config)["reports"] / report_name, config.provenance())
    status("OK", f"Loaded {len(recordings)} recordings "
                 f"(retention {cleanser.retention_rate:.1f}%, report: {report})")
    if not recordings:
        raise DataError("no usable recordings in " + ", ".join(str(p) for p in paths))
    names = {r.schema.joint_names for r in recordings}
    if len(names) != 1:
        raise ValidationError("recordings use different joint lists; give a --schema file")
    return recordings


def _check_compatible(net, recordings):
    problems = []
    for rec in recordings:
        if rec.num_joints != net.spec.num_joints:
            problems.append(
                f"{rec.recording_id} has {rec.num_joints} joints, checkpoint expects {net.spec.num_joints}"
            )
    if problems:
        raise ValidationError(problems)


def _load_encoder(path):
    net = load_checkpoint(path)
    if not net.is_encoder:
        raise ValidationError(f"{path} holds a {net.spec.kind}, a temporal encoder is needed")
    return net


def _data_paths(args, config):
    return args.data or config["data"]["paths"]


def _config_from_args(args, overrides, require_data=False):
    common = {
        "seed": args.seed,
        "output_dir": args.output_dir,
        "threads": args.threads,
        "schema": args.schema,
    }
    if getattr(args, "data", None):
        common["data.paths"] = [str(p) for p in args.data]
    config = load_config(args.config, {**common, **overrides}, require_data=require_data)
    status("OK", f"Config hash {config.config_hash()} seed {config.seed}"
                 + (f" (file: {config.source})" if config.source else ""))
    return config


# =============================================================================
# Commands
# =============================================================================

def cmd_synth(args):
    """Write ``count`` synthetic recordings per action plus a manifest."""
    config = _config_from_args(args, {
        "synth.actions": args.action,
        "synth.duration": args.duration,
        "synth.fps": args.fps,
        "synth.count": args.count,
        "synth.format": args.format,
    })
    synth = config["synth"]
    out_dir = Path(args.out_dir or config.output_dir.parent / "data" / "synthetic")
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".mrec" if synth["format"] == "binary" else ".motion"
    provenance = {k: str(v) for k, v in config.provenance().items()}

    banner("SYNTHETIC MOTION GENERATOR")
    rows = []
    for action in synth["actions"]:
        action_index = ACTIONS.index(action)
        for index in range(synth["count"]):
            rng = SeededRng.derive(config.seed, action_index, index)
            rec = synth_generate(action, synth["duration"], synth["fps"], rng,
                                 subject="synth", trial=f"{action}{index:03d}")
            rec.provenance.update(provenance)
            path = out_dir / f"{action}_{index:03d}{suffix}"
            save_motion_file(rec, path)
            rows.append({"file": path.name, "action": action, "frames": rec.num_frames,
                         "fps": rec.fps, **provenance})

    manifest = pd.DataFrame(rows)
    manifest_path = out_dir / "manifest.csv"
    manifest.to_csv(manifest_path, index=False, lineterminator="\n")
    print(manifest.to_string(index=False))
    status("OK", f"Wrote {len(rows)} recordings to {out_dir} (manifest: {manifest_path})")
    return 0


def cmd_train(args):
    """Train (or fine-tune) a temporal encoder and write its checkpoint."""
    overrides = {
        "architecture.kind": args.arch,
        "train.epochs": args.epochs,
        "train.lr": args.lr,
        "train.momentum": args.momentum,
        "train.weight_decay": args.weight_decay,
        "train.batch_size": args.batch,
        "train.dropout_start": args.dropout_start,
        "train.dropout_end": args.dropout_end,
        "train.pretrain": True if args.pretrain else None,
        "train.stride": args.stride,
    }
    config = _config_from_args(args, overrides, require_data=True)
    dirs = _output_dirs(config)
    setup_logging(args.verbose, args.log_file)
    train_config = config.train_config()

    banner("TEMPORAL ENCODER TRAINING")
    status("INFO", f"lr={train_config.lr} momentum={train_config.momentum} "
                   f"weight_decay={train_config.weight_decay} batch={train_config.batch_size} "
                   f"epochs={train_config.epochs} dropout={train_config.dropout_start}->{train_config.dropout_end}")
    warning = train_config.batch_size_warning()
    if warning:
        status("WARN", warning)

    recordings = _load_recordings(config, _data_paths(args, config), "data_cleansing_report.txt")
    schema = recordings[0].schema

    if args.finetune:
        net = _load_encoder(args.finetune)
        _check_compatible(net, recordings)
        dataset = build_pair_dataset(recordings, net.spec.delta_t, config["train"]["stride"])
        status("INFO", f"Fine-tuning {args.finetune} on {len(dataset)} pairs"
                       + (f" of action {args.action}" if args.action else ""))
        result = finetune(net, dataset, train_config, action=args.action)
        default_name = f"{net.spec.kind}-F{('-' + args.action) if args.action else ''}.ckpt"
    else:
        spec = config.architecture_spec(schema)
        net = build_network(spec, SeededRng.derive(config.seed, _INIT_STREAM))
        dataset = build_pair_dataset(recordings, spec.delta_t, config["train"]["stride"])
        status("INFO", f"{spec.kind}: {net.parameter_count():,} parameters, "
                       f"widths {net.layer_widths()}, {len(dataset)} window pairs")
        if dataset.skipped:
            status("WARN", f"{len(dataset.skipped)} recordings too short for dt={spec.delta_t}")
        if train_config.pretrain:
            pretrain_layerwise(net, dataset, train_config)
            status("OK", "Layerwise pretraining done")
        result = train_te(net, dataset, train_config)
        default_name = f"{spec.kind}.ckpt"

    net.metadata.update(config.provenance())
    net.metadata["fps"] = recordings[0].fps
    out = Path(args.out) if args.out else dirs["checkpoints"] / default_name
    save_checkpoint(net, out)

    history = pd.DataFrame({"epoch": range(len(result.loss_history)), "loss": result.loss_history})
    header = "".join(f"# {k}={v}\n" for k, v in config.provenance().items())
    body = history.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    (dirs["reports"] / f"{out.stem}_loss.csv").write_text(header + body, encoding="utf-8")
    if args.plots:
        PerformanceVisualizer(dirs["visualizations"]).plot_loss_curve(result.loss_history, f"{out.stem}_loss.png")
    status("OK", f"Loss {result.loss_history[0]:.6g} -> {result.loss_history[-1]:.6g}")
    status("OK", f"Checkpoint saved to {out}")
    return 0


def cmd_eval(args):
    """Horizon evaluation, optionally with limb masking and a baseline."""
    config = _config_from_args(args, {
        "eval.horizons": args.horizons,
        "eval.baseline": True if args.baseline else None,
        "eval.per_action": True if args.per_action else None,
    }, require_data=True)
    dirs = _output_dirs(config)
    setup_logging(args.verbose)

    banner("PREDICTION HORIZON EVALUATION")
    net = _load_encoder(args.checkpoint)
    recordings = _load_recordings(config, _data_paths(args, config), "eval_data_cleansing_report.txt")
    _check_compatible(net, recordings)
    if args.mask_limb and args.mask_limb not in recordings[0].schema.limb_names:
        raise ValidationError(
            f"limb '{args.mask_limb}' is not in the schema, expected one of {recordings[0].schema.limb_names}"
        )

    evaluator = PerformanceEvaluator(net, recordings, config["eval"]["horizons"], config.threads,
                                     {**config.provenance(), "checkpoint": Path(args.checkpoint).name})
    reports = evaluator.run_evaluation(
        mask_limb_name=args.mask_limb,
        baseline=config["eval"]["baseline"],
        per_action=config["eval"]["per_action"],
        sweep=args.sweep_limbs,
    )
    out_dir = Path(args.out_dir) if args.out_dir else dirs["reports"]
    written = evaluator.save_report(out_dir)
    print(horizon_table(reports.values()))
    if args.plots:
        PerformanceVisualizer(dirs["visualizations"]).plot_horizon_curves(reports.values())
    status("OK", f"Wrote {len(written)} report files to {out_dir}")
    return 0


def cmd_classify(args):
    """Sequence classification from one tap of a trained encoder."""
    config = _config_from_args(args, {
        "classify.tap": args.tap,
        "classify.aggregate": args.aggregate,
        "classify.window_seconds": args.window_seconds,
        "classify.epochs": args.epochs,
        "classify.lr": args.lr,
        "classify.batch_size": args.batch,
        "classify.stride": args.stride,
    })
    dirs = _output_dirs(config)
    setup_logging(args.verbose)
    classify = config["classify"]

    banner("SEQUENCE CLASSIFICATION")
    te_net = _load_encoder(args.te_checkpoint)
    if classify["tap"] not in te_net.taps:
        raise ValidationError(f"tap '{classify['tap']}' is not present in {args.te_checkpoint}")

    if args.test_data:
        test = _load_recordings(config, args.test_data, "classify_test_cleansing_report.txt")
        train = None
        if args.train_data:
            train = _load_recordings(config, args.train_data, "classify_train_cleansing_report.txt")
    else:
        paths = _data_paths(args, config)
        if not paths:
            raise ConfigError("give --data, or --train-data and --test-data")
        recordings = _load_recordings(config, paths, "classify_cleansing_report.txt")
        splitter = StratifiedSplitGenerator(recordings, SeededRng.derive(config.seed, 11))
        train, test = splitter.split(config["data"]["test_fraction"], config["data"]["holdout_subjects"])
        status("INFO", f"Split per action: {splitter.stats}")

    options = dict(train_config=config.classifier_train_config(), window_seconds=classify["window_seconds"],
                   aggregate=classify["aggregate"], stride=classify["stride"])
    if args.clf_checkpoint:
        clf = load_checkpoint(args.clf_checkpoint)
        protocol = SequenceClassifier.from_classifier(te_net, clf, **options)
        if train is not None:
            check_overlap(train, test)
    else:
        if train is None:
            raise ConfigError("training a classifier needs --train-data (or --data to split)")
        _check_compatible(te_net, train)
        protocol = SequenceClassifier(te_net, classify["tap"], **options)
        check_overlap(train, test)
        protocol.fit(train)
        protocol.clf.metadata.update(config.provenance())
        clf_path = dirs["checkpoints"] / f"classifier_{te_net.spec.kind}_{classify['tap']}.ckpt"
        save_checkpoint(protocol.clf, clf_path)
        status("OK", f"Classifier saved to {clf_path} (train window accuracy "
                     f"{protocol.stats['train_window_accuracy']:.2%})")

    _check_compatible(te_net, test)
    matrix = protocol.evaluate(test, {**config.provenance(), "encoder": te_net.spec.kind})
    stem = f"confusion_{te_net.spec.kind}_{protocol.tap}"
    matrix.to_csv(dirs["reports"] / f"{stem}.csv")
    report_path = dirs["reports"] / f"{stem}.txt"
    report_path.write_text(matrix.to_text(), encoding="utf-8")
    print(matrix.to_frame().to_string())
    if args.plots:
        PerformanceVisualizer(dirs["visualizations"]).plot_confusion_matrix(matrix, f"{stem}.png")
    status("OK", f"Classification rate {matrix.rate:.2%} on {matrix.total} sequences (report: {report_path})")
    return 0


def cmd_sta(args):
    """Spike-triggered averages of selected units, written as motion files."""
    config = _config_from_args(args, {
        "sta.threshold": args.threshold,
        "sta.layer": args.layer,
        "sta.units": args.units,
    }, require_data=True)
    setup_logging(args.verbose)
    sta = config["sta"]

    banner("SPIKE-TRIGGERED AVERAGES")
    net = _load_encoder(args.checkpoint)
    recordings = _load_recordings(config, _data_paths(args, config), "sta_cleansing_report.txt")
    _check_compatible(net, recordings)
    delta_t = net.spec.delta_t
    usable = [r for r in recordings if r.num_frames >= delta_t]
    if not usable:
        raise EvaluationError(f"no recording has at least {delta_t} frames")

    out_dir = Path(args.out_dir) if args.out_dir else config.output_dir / "sta"
    provenance = {k: str(v) for k, v in config.provenance().items()}
    layer = int(sta["layer"]) if str(sta["layer"]).isdigit() else sta["layer"]
    try:
        results = spike_triggered_averages(net, iter_window_batches(usable, delta_t), layer,
                                           sta["units"], sta["threshold"])
    except ParameterError as e:
        raise ValidationError(str(e))

    rows = []
    for result in results:
        unit = result.unit
        row = {"layer": result.layer, "unit": unit, "count": result.count, "file": "-", **provenance}
        if result.empty:
            status("WARN", f"{result.layer}[{unit}] never exceeds {sta['threshold']}: not written")
        else:
            rec = MotionRecording(
                result.average.transpose(2, 0, 1), recordings[0].fps, recordings[0].schema,
                label=None, subject="sta", trial=f"{result.layer}-u{unit}",
                provenance={**provenance, "threshold": str(sta["threshold"]), "count": str(result.count)},
            )
            path = out_dir / f"{result.layer}_unit{unit:04d}.motion"
            save_motion_file(rec, path)
            row["file"] = path.name
        rows.append(row)

    summary = pd.DataFrame(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out_dir / "sta_summary.csv", index=False, lineterminator="\n")
    print(summary.to_string(index=False))
    status("OK", f"{sum(r['file'] != '-' for r in rows)} of {len(rows)} units written to {out_dir}")
    return 0


def cmd_predict(args):
    """Predict the dt frames after frame ``--at``; ``--rollout K`` chains K windows."""
    config = _config_from_args(args, {})
    setup_logging(args.verbose)

    banner("WINDOW PREDICTION")
    net = _load_encoder(args.checkpoint)
    recording = _load_recordings(config, [args.input], "predict_cleansing_report.txt")[0]
    _check_compatible(net, [recording])
    delta_t = net.spec.delta_t

    t = recording.num_frames - 1 if args.at is None else args.at
    if not delta_t - 1 <= t < recording.num_frames:
        raise ParameterError(
            f"--at {t} has no full input window: legal range is [{delta_t - 1}, {recording.num_frames - 1}]"
        )
    window = np.ascontiguousarray(frame_window(recording, t - delta_t + 1, delta_t))
    steps = args.rollout or 1
    predicted = []
    for _ in range(steps):
        window = predict_window(net, window)
        predicted.append(window.transpose(2, 0, 1))
    frames = np.concatenate(predicted)

    provenance = {k: str(v) for k, v in config.provenance().items()}
    provenance.update({"source": recording.recording_id.replace("/", ":"), "at": str(t),
                       "windows": str(steps), "mode": "rollout" if args.rollout else "single"})
    out = Path(args.out) if args.out else config.output_dir / "predictions" / (
        f"{recording.subject}_{recording.trial}_t{t}{'_rollout' + str(steps) if args.rollout else ''}.motion"
    )
    rec = MotionRecording(frames, recording.fps, recording.schema, recording.label, recording.subject,
                          f"{recording.trial}-pred{t}", provenance)
    save_motion_file(rec, out)
    status("OK", f"Wrote {len(frames)} predicted frames to {out}")
    return 0


def cmd_latent(args):
    """Principal-component trajectories of tap features, one CSV per recording."""
    config = _config_from_args(args, {"classify.tap": args.tap}, require_data=True)
    dirs = _output_dirs(config)
    setup_logging(args.verbose)

    banner("LATENT TRAJECTORIES (PCA)")
    net = _load_encoder(args.checkpoint)
    tap = config["classify"]["tap"]
    if tap not in net.taps:
        raise ValidationError(f"tap '{tap}' is not present in {args.checkpoint}")
    recordings = _load_recordings(config, _data_paths(args, config), "latent_cleansing_report.txt")
    _check_compatible(net, recordings)

    out_dir = Path(args.out_dir) if args.out_dir else config.output_dir / "latent"
    visualizer = PerformanceVisualizer(dirs["visualizations"]) if args.plots else None
    written = 0
    for rec in recordings:
        if rec.num_frames < net.spec.delta_t + args.components - 1:
            status("WARN", f"{rec.recording_id} is too short, skipped")
            continue
        trajectory = latent_trajectory(net, rec, tap, args.components, args.stride)
        trajectory.metadata.update(config.provenance())
        stem = f"{rec.subject}_{rec.trial}_{tap}"
        trajectory.to_csv(out_dir / f"{stem}.csv")
        if visualizer:
            visualizer.plot_latent_trajectory(trajectory, f"latent_{stem}.png")
        written += 1
    if written == 0:
        raise EvaluationError(
            f"no recording has the {net.spec.delta_t + args.components - 1} frames a trajectory needs"
        )
    status("OK", f"Wrote {written} trajectories to {out_dir}")
    return 0


# =============================================================================
# Parser
# =============================================================================

def _add_common(parser):
    parser.add_argument("--config", type=Path, help="TOML run configuration")
    parser.add_argument("--seed", type=int, help=f"random seed (default: {_default('seed')})")
    parser.add_argument("--output-dir", help=f"artifact root (default: {_default('output_dir')})")
    parser.add_argument("--threads", type=int,
                        help=f"evaluation threads, 1 is bit-reproducible (default: {_default('threads')})")
    parser.add_argument("--schema", help="skeleton schema TOML (default: 24-joint SMPL)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_data(parser):
    parser.add_argument("--data", nargs="+", type=Path, help="motion files or directories")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="motenc",
        description="Temporal encoders for skeletal motion: synthesis, training, evaluation, analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic labeled recordings")
    _add_common(p)
    p.add_argument("--action", type=_str_list, metavar="ACTION[,ACTION]",
                   help=f"one or more of {', '.join(ACTIONS)} (default: all)")
    p.add_argument("--duration", type=float, help=f"seconds per recording (default: {_default('synth', 'duration')})")
    p.add_argument("--fps", type=int, help=f"sampling rate (default: {_default('synth', 'fps')})")
    p.add_argument("--count", type=int, help=f"recordings per action (default: {_default('synth', 'count')})")
    p.add_argument("--format", choices=("text", "binary"), help="motion file format (default: text)")
    p.add_argument("--out-dir", help="target directory (default: data/synthetic next to output_dir)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train or fine-tune a temporal encoder")
    _add_common(p)
    _add_data(p)
    p.add_argument("--arch", choices=("ste", "cte", "hte"), help="architecture (default: ste)")
    p.add_argument("--epochs", type=int, help=f"(default: {_default('train', 'epochs')})")
    p.add_argument("--lr", type=float, help=f"learning rate (default: {_default('train', 'lr')})")
    p.add_argument("--momentum", type=float, help=f"(default: {_default('train', 'momentum')})")
    p.add_argument("--weight-decay", type=float, help=f"(default: {_default('train', 'weight_decay')})")
    p.add_argument("--batch", type=int, help=f"mini-batch size, 300-500 recommended "
                                             f"(default: {_default('train', 'batch_size')})")
    p.add_argument("--dropout-start", type=float, help=f"input dropout at the first epoch "
                                                       f"(default: {_default('train', 'dropout_start')})")
    p.add_argument("--dropout-end", type=float, help=f"input dropout at the last epoch "
                                                     f"(default: {_default('train', 'dropout_end')})")
    p.add_argument("--stride", type=int, help="step between window pairs (default: 1)")
    p.add_argument("--pretrain", action="store_true", help="greedy layerwise pretraining (experimental)")
    p.add_argument("--finetune", metavar="FROM.ckpt", help="fine-tune this checkpoint at lr * 0.1")
    p.add_argument("--action", help="fine-tune only on recordings with this label")
    p.add_argument("--out", help="checkpoint path (default: <output_dir>/checkpoints/<kind>.ckpt)")
    p.add_argument("--log-file", help="also write the epoch log here")
    p.add_argument("--plots", action="store_true", help="write the loss curve PNG")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="prediction error at fixed horizons")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", required=True, help="temporal encoder checkpoint")
    p.add_argument("--horizons", type=_int_list, help=f"milliseconds (default: {_default('eval', 'horizons')})")
    p.add_argument("--mask-limb", help="zero this limb in every input window")
    p.add_argument("--sweep-limbs", action="store_true", help="evaluate with every limb masked in turn")
    p.add_argument("--baseline", action="store_true", help="add the persistence baseline")
    p.add_argument("--per-action", action="store_true", help="one table per action label")
    p.add_argument("--out-dir", help="report directory (default: <output_dir>/reports)")
    p.add_argument("--plots", action="store_true", help="write the horizon curve PNG")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", help="sequence classification from encoder features")
    _add_common(p)
    _add_data(p)
    p.add_argument("--te-checkpoint", required=True, help="temporal encoder checkpoint")
    p.add_argument("--clf-checkpoint", help="reuse a trained classifier instead of training one")
    p.add_argument("--train-data", nargs="+", type=Path, help="training recordings")
    p.add_argument("--test-data", nargs="+", type=Path, help="test recordings")
    p.add_argument("--tap", choices=("lower", "middle", "upper"), help="feature layer (default: middle)")
    p.add_argument("--aggregate", choices=("mean", "vote"), help="per-step aggregation (default: mean)")
    p.add_argument("--window-seconds", type=float,
                   help=f"classify the first seconds of each sequence (default: {_default('classify', 'window_seconds')})")
    p.add_argument("--epochs", type=int, help=f"classifier epochs (default: {_default('classify', 'epochs')})")
    p.add_argument("--lr", type=float, help=f"classifier learning rate (default: {_default('classify', 'lr')})")
    p.add_argument("--batch", type=int, help=f"classifier batch (default: {_default('classify', 'batch_size')})")
    p.add_argument("--stride", type=int, help="step between training windows (default: 1)")
    p.add_argument("--plots", action="store_true", help="write the confusion heatmap PNG")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sta", help="spike-triggered averages of sigmoid units")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", required=True, help="temporal encoder checkpoint")
    p.add_argument("--layer", help="layer index, tap or layer name (default: lower)")
    p.add_argument("--units", type=_int_list, help="comma-separated unit indices (default: 0)")
    p.add_argument("--threshold", type=float, help=f"activity threshold (default: {_default('sta', 'threshold')})")
    p.add_argument("--out-dir", help="target directory (default: <output_dir>/sta)")
    p.set_defaults(func=cmd_sta)

    p = sub.add_parser("predict", help="predict the next window of a recording")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="temporal encoder checkpoint")
    p.add_argument("--input", required=True, type=Path, help="motion file")
    p.add_argument("--at", type=int, help="last input frame t, earliest dt-1 (default: last frame)")
    p.add_argument("--rollout", type=int, metavar="K",
                   help="open-loop extension: feed predictions back for K windows")
    p.add_argument("--out", help="output motion file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("latent", help="principal-component trajectories of tap features")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", required=True, help="temporal encoder checkpoint")
    p.add_argument("--tap", choices=("lower", "middle", "upper"), help="feature layer (default: middle)")
    p.add_argument("--components", type=int, default=3, help="number of components")
    p.add_argument("--stride", type=int, default=1, help="step between time steps")
    p.add_argument("--out-dir", help="target directory (default: <output_dir>/latent)")
    p.add_argument("--plots", action="store_true", help="write a 3-D trajectory PNG per recording")
    p.set_defaults(func=cmd_latent)
    return parser


def main(argv=None):
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(getattr(args, "verbose", False))
    try:
        return args.func(args)
    except ConfigError as e:
        status("ERROR", "invalid configuration:")
        for problem in e.problems:
            print(f"  - {problem}")
        return exit_code_for(e)
    except (MotencError, OSError) as e:
        status("ERROR", str(e))
        return exit_code_for(e)
