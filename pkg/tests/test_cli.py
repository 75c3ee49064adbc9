"""End-to-end runs of the command-line interface on tiny synthetic data."""

import logging

import numpy as np
import pandas as pd
import pytest

from motenc.checkpoint import load_checkpoint, save_checkpoint
from motenc.cli import main
from motenc.data_cleansing import normalize_recording
from motenc.model import ArchitectureSpec, build_network
from motenc.motion_io import load_motion_file

SMALL_CONFIG = """\
[architecture]
delta_t = 10
outer_width = 16
bottleneck_width = 8
node_widths = [2, 3, 4, 8]
conv_specs = [[2, 3], [2, 10]]
nonzeros_per_unit = 5
init_std = 0.1

[train]
epochs = 2
batch_size = 20
lr = 0.1

[classify]
epochs = 3
batch_size = 50
lr = 0.1
window_seconds = 1.0
"""


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    for name in ("motenc", "motenc.training.epochs"):
        logger = logging.getLogger(name)
        logger.handlers.clear()
        logger.propagate = True


@pytest.fixture
def workspace(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text(SMALL_CONFIG, encoding="utf-8")
    out = tmp_path / "outputs"
    data = tmp_path / "data"
    code = main(["synth", "--config", str(config), "--output-dir", str(out), "--out-dir", str(data),
                 "--action", "walk,wave", "--count", "2", "--duration", "1.0"])
    assert code == 0
    return {"config": str(config), "out": out, "data": data, "root": tmp_path}


def _common(ws):
    return ["--config", ws["config"], "--output-dir", str(ws["out"])]


def _zero_checkpoint(ws):
    spec = ArchitectureSpec(kind="S-TE", delta_t=10, outer_width=16, bottleneck_width=8,
                            init_std=0.1, nonzeros_per_unit=5)
    path = ws["root"] / "zero.ckpt"
    save_checkpoint(build_network(spec), path)
    return str(path)


@pytest.fixture
def trained(workspace):
    code = main(["train", *_common(workspace), "--data", str(workspace["data"])])
    assert code == 0
    return str(workspace["out"] / "checkpoints" / "S-TE.ckpt")


def test_synth_writes_files_and_manifest(workspace):
    names = sorted(p.name for p in workspace["data"].iterdir())
    assert names == ["manifest.csv", "walk_000.motion", "walk_001.motion", "wave_000.motion", "wave_001.motion"]
    rec = load_motion_file(workspace["data"] / "wave_001.motion")
    assert (rec.num_frames, rec.label, rec.trial) == (60, "wave", "wave001")
    assert set(rec.provenance) == {"seed", "config_hash"}
    manifest = pd.read_csv(workspace["data"] / "manifest.csv")
    assert manifest["frames"].tolist() == [60] * 4


def test_synth_is_reproducible(workspace):
    again = workspace["root"] / "again"
    main(["synth", *_common(workspace), "--out-dir", str(again),
          "--action", "walk,wave", "--count", "2", "--duration", "1.0"])
    for path in workspace["data"].glob("*.motion"):
        assert (again / path.name).read_bytes() == path.read_bytes()


def test_synth_binary_format(workspace):
    target = workspace["root"] / "binary"
    code = main(["synth", *_common(workspace), "--out-dir", str(target), "--action", "box",
                 "--duration", "0.5", "--format", "binary"])
    assert code == 0
    assert load_motion_file(target / "box_000.mrec").num_frames == 30


def test_unknown_action_is_a_config_error(workspace, capsys):
    code = main(["synth", *_common(workspace), "--action", "dance"])
    assert code == 2
    assert "[ERROR] invalid configuration:" in capsys.readouterr().out


def test_train_writes_checkpoint_loss_and_epoch_log(capsys, workspace, trained):
    out = capsys.readouterr().out
    assert "epoch=0 loss=" in out and "epoch=1 loss=" in out
    assert "[WARN] batch size 20 is outside the recommended range 300-500" in out
    assert "lr=0.1 momentum=0.9 weight_decay=0.0005" in out

    net = load_checkpoint(trained)
    assert net.spec.delta_t == 10 and net.metadata["epoch"] == 2
    assert net.metadata["seed"] == 0 and len(net.metadata["config_hash"]) == 16

    loss = (workspace["out"] / "reports" / "S-TE_loss.csv").read_text(encoding="utf-8").splitlines()
    assert loss[0] == "# seed=0"
    assert loss[2] == "epoch,loss"
    assert len(loss) == 5
    assert (workspace["out"] / "reports" / "data_cleansing_report.txt").exists()


def test_train_log_file_and_flag_overrides(workspace, capsys):
    log_file = workspace["root"] / "epochs.log"
    code = main(["train", *_common(workspace), "--data", str(workspace["data"]), "--arch", "hte",
                 "--epochs", "1", "--batch", "1000", "--log-file", str(log_file)])
    assert code == 0
    assert "[WARN] batch size 1000" in capsys.readouterr().out
    assert log_file.read_text(encoding="utf-8").startswith("epoch=0 loss=")
    assert load_checkpoint(workspace["out"] / "checkpoints" / "H-TE.ckpt").metadata["epoch"] == 1


def test_finetune_on_one_action(workspace, trained):
    code = main(["train", *_common(workspace), "--data", str(workspace["data"]),
                 "--finetune", trained, "--action", "wave", "--epochs", "1"])
    assert code == 0
    net = load_checkpoint(workspace["out"] / "checkpoints" / "S-TE-F-wave.ckpt")
    assert net.metadata["finetune"]["action"] == "wave"
    assert net.metadata["finetune"]["lr"] == pytest.approx(0.01)
    assert net.metadata["epoch"] == 3


def test_eval_of_a_zero_model_matches_hand_computation(workspace, capsys):
    checkpoint = _zero_checkpoint(workspace)
    source = workspace["data"] / "walk_000.motion"
    code = main(["eval", *_common(workspace), "--checkpoint", checkpoint, "--data", str(source),
                 "--horizons", "16,33,50", "--baseline"])
    assert code == 0
    assert "16ms" in capsys.readouterr().out

    rec = normalize_recording(load_motion_file(source))
    expected = []
    for index in (1, 2, 3):
        errors = [np.linalg.norm(rec.frames[t + index]) / 24 for t in range(9, 50)]
        expected.append(np.mean(errors))
    df = pd.read_csv(workspace["out"] / "reports" / "horizons_model.csv", comment="#")
    assert df["frame_idx"].tolist() == [1, 2, 3]
    assert (df["n"] == 41).all()
    np.testing.assert_allclose(df["mean_error"].to_numpy(), expected, rtol=1e-12)
    assert (workspace["out"] / "reports" / "horizons_baseline.csv").exists()


def test_eval_with_masked_limb_and_sweep(workspace, trained):
    code = main(["eval", *_common(workspace), "--checkpoint", trained, "--data", str(workspace["data"]),
                 "--horizons", "16,33,50", "--mask-limb", "left_leg", "--sweep-limbs", "--per-action"])
    assert code == 0
    reports = workspace["out"] / "reports"
    for name in ("model", "missing_left_leg", "missing_right_arm", "action_walk", "action_wave"):
        assert (reports / f"horizons_{name}.csv").exists()
    assert "END OF REPORT" in (reports / "horizon_evaluation_report.txt").read_text(encoding="utf-8")


def test_eval_rejects_unknown_limb(workspace, trained):
    code = main(["eval", *_common(workspace), "--checkpoint", trained, "--data", str(workspace["data"]),
                 "--horizons", "16,33,50", "--mask-limb", "tail"])
    assert code == 2


def test_eval_exit_codes_for_bad_inputs(workspace, trained):
    broken = workspace["root"] / "broken.motion"
    broken.write_text("#motenc v1\nfps=60\n", encoding="utf-8")
    assert main(["eval", *_common(workspace), "--checkpoint", trained, "--data", str(broken)]) == 3

    corrupt = workspace["root"] / "corrupt.ckpt"
    corrupt.write_bytes(b"MTEC" + b"\x00" * 10)
    assert main(["eval", *_common(workspace), "--checkpoint", str(corrupt),
                 "--data", str(workspace["data"])]) == 3

    missing = str(workspace["root"] / "missing")
    assert main(["eval", *_common(workspace), "--checkpoint", trained, "--data", missing]) == 2


def test_classify_trains_then_reuses_the_classifier(workspace, trained, capsys):
    code = main(["classify", *_common(workspace), "--te-checkpoint", trained, "--data", str(workspace["data"]),
                 "--tap", "middle"])
    assert code == 0
    reports = workspace["out"] / "reports"
    assert (reports / "confusion_S-TE_middle.csv").exists()
    assert "SEQUENCE CLASSIFICATION REPORT" in (reports / "confusion_S-TE_middle.txt").read_text(encoding="utf-8")
    clf_path = workspace["out"] / "checkpoints" / "classifier_S-TE_middle.ckpt"
    assert load_checkpoint(clf_path).metadata["class_names"] == ["walk", "wave"]
    assert "Classification rate" in capsys.readouterr().out

    code = main(["classify", *_common(workspace), "--te-checkpoint", trained, "--clf-checkpoint", str(clf_path),
                 "--test-data", str(workspace["data"] / "wave_000.motion")])
    assert code == 0


def test_classify_needs_an_encoder(workspace, trained):
    clf = workspace["root"] / "clf.ckpt"
    save_checkpoint(build_network(ArchitectureSpec(kind="classifier", classifier_input=8, num_classes=2)), clf)
    code = main(["classify", *_common(workspace), "--te-checkpoint", str(clf), "--data", str(workspace["data"])])
    assert code == 2


def test_sta_writes_pose_windows(workspace, trained, capsys):
    code = main(["sta", *_common(workspace), "--checkpoint", trained, "--data", str(workspace["data"]),
                 "--layer", "lower", "--units", "0,1", "--threshold", "0.0"])
    assert code == 0
    sta_dir = workspace["out"] / "sta"
    rec = load_motion_file(sta_dir / "encoder.lower_unit0001.motion")
    assert rec.num_frames == 10
    assert rec.provenance["count"] == str(4 * 51)
    summary = pd.read_csv(sta_dir / "sta_summary.csv", dtype={"config_hash": str})
    assert summary["count"].tolist() == [204, 204]
    assert summary["seed"].tolist() == [0, 0]
    assert summary["config_hash"].tolist() == [rec.provenance["config_hash"]] * 2

    code = main(["sta", *_common(workspace), "--checkpoint", trained, "--data", str(workspace["data"]),
                 "--units", "2", "--threshold", "0.999", "--out-dir", str(workspace["root"] / "silent")])
    assert code == 0
    assert "[WARN]" in capsys.readouterr().out
    assert not list((workspace["root"] / "silent").glob("*.motion"))


def test_sta_on_a_linear_layer_is_rejected(workspace, trained):
    code = main(["sta", *_common(workspace), "--checkpoint", trained, "--data", str(workspace["data"]),
                 "--layer", "middle"])
    assert code == 2


def test_predict_single_window_and_rollout(workspace, trained):
    source = str(workspace["data"] / "walk_000.motion")
    assert main(["predict", *_common(workspace), "--checkpoint", trained, "--input", source, "--at", "9"]) == 0
    single = load_motion_file(workspace["out"] / "predictions" / "synth_walk000_t9.motion")
    assert single.num_frames == 10
    assert single.provenance["at"] == "9" and single.provenance["mode"] == "single"

    target = workspace["root"] / "rollout.motion"
    assert main(["predict", *_common(workspace), "--checkpoint", trained, "--input", source,
                 "--rollout", "3", "--out", str(target)]) == 0
    rollout = load_motion_file(target)
    assert rollout.num_frames == 30
    assert rollout.provenance["at"] == "59"


def test_predict_needs_a_full_input_window(workspace, trained):
    source = str(workspace["data"] / "walk_000.motion")
    assert main(["predict", *_common(workspace), "--checkpoint", trained, "--input", source, "--at", "8"]) == 2
    assert main(["predict", *_common(workspace), "--checkpoint", trained, "--input", source, "--at", "60"]) == 2


def test_latent_writes_one_trajectory_per_recording(workspace, trained):
    code = main(["latent", *_common(workspace), "--checkpoint", trained, "--data", str(workspace["data"]),
                 "--tap", "middle"])
    assert code == 0
    files = sorted((workspace["out"] / "latent").glob("*.csv"))
    assert len(files) == 4
    df = pd.read_csv(files[0], comment="#")
    assert list(df.columns) == ["t", "pc1", "pc2", "pc3"]
    assert len(df) == 51 and df["t"].iloc[0] == 9


@pytest.fixture
def short_data(workspace):
    target = workspace["root"] / "short"
    code = main(["synth", *_common(workspace), "--out-dir", str(target), "--action", "walk,wave",
                 "--count", "2", "--duration", "0.1"])
    assert code == 0
    return str(target)


def test_sta_without_a_full_window_is_an_evaluation_error(workspace, trained, short_data, capsys):
    capsys.readouterr()
    code = main(["sta", *_common(workspace), "--checkpoint", trained, "--data", short_data, "--units", "0"])
    assert code == 3
    assert "no recording has at least 10 frames" in capsys.readouterr().out
    assert not (workspace["out"] / "sta").exists()


def test_latent_without_a_long_enough_recording_fails(workspace, trained, short_data, capsys):
    capsys.readouterr()
    code = main(["latent", *_common(workspace), "--checkpoint", trained, "--data", short_data])
    assert code == 3
    out = capsys.readouterr().out
    assert out.count("[WARN]") == 4
    assert "[ERROR]" in out and "[OK] Wrote" not in out


def test_help_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    assert "synth" in capsys.readouterr().out
