import numpy as np
import pandas as pd
import pytest

from motenc.errors import EvaluationError, ParameterError, ShapeError
from motenc.model import build_network
from motenc.performance_eval import (
    CSV_COLUMNS,
    PerformanceEvaluator,
    evaluate_by_action,
    evaluate_horizons,
    evaluate_missing_limb,
    frame_error,
    horizon_frame_index,
    horizon_table,
    missing_limb_sweep,
    persistence_baseline,
)
from motenc.tensor import SeededRng
from motenc.windowing import mask_limb

HORIZONS = [16, 33, 50]


def _damped_reverse(windows):
    return 0.5 * windows[..., ::-1]


def test_three_four_five_frame_error():
    pred = np.zeros((3, 24))
    gt = np.zeros((3, 24))
    gt[:, 7] = (3.0, 4.0, 0.0)
    assert frame_error(pred, gt, 24) == 5 / 24
    with pytest.raises(ShapeError):
        frame_error(np.zeros((3, 24)), np.zeros((3, 23)), 24)


@pytest.mark.parametrize("n_joints, shape", [(0, (3, 24)), (24, (3, 0)), (-1, (3, 24))])
def test_frame_error_needs_joints(n_joints, shape):
    with pytest.raises(ShapeError, match="at least one joint"):
        frame_error(np.zeros(shape), np.ones(shape), n_joints)


def test_frame_error_is_a_metric_on_random_poses():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a, b, c = rng.normal(size=(3, 3, 24))
        assert frame_error(a, a, 24) == 0.0
        assert frame_error(a, b, 24) == pytest.approx(frame_error(b, a, 24), rel=1e-15)
        assert frame_error(a, c, 24) <= frame_error(a, b, 24) + frame_error(b, c, 24) + 1e-12


def test_persistence_error_grows_linearly_under_constant_velocity(make_recording):
    rec = make_recording(num_frames=20)
    velocity = np.random.default_rng(3).normal(0.0, 0.01, (3, 24))
    frames = rec.frames[:1] + np.arange(20.0)[:, None, None] * velocity
    rec = rec.replace(frames=frames)

    report = evaluate_horizons(persistence_baseline, [rec], HORIZONS, delta_t=4)

    step = np.sqrt(np.sum(velocity ** 2)) / 24
    np.testing.assert_allclose(report.mean_errors, [step, 2 * step, 3 * step], rtol=1e-9)
    assert report.mean_errors[0] < report.mean_errors[1] < report.mean_errors[2]


@pytest.mark.parametrize("ms, fps, expected", [(80, 60, 5), (160, 60, 10), (1000, 60, 60),
                                               (1600, 60, 96), (10, 60, 1), (50, 50, 2)])
def test_horizon_frame_index(ms, fps, expected):
    assert horizon_frame_index(ms, fps) == expected


@pytest.mark.parametrize("ms, delta_t", [(0, None), (-80, None), (5, None), (1700, 100)])
def test_horizon_frame_index_out_of_range(ms, delta_t):
    with pytest.raises(ParameterError):
        horizon_frame_index(ms, 60, delta_t)


def test_matches_brute_force(make_recording):
    recs = [make_recording(num_frames=15, trial="a", seed=1), make_recording(num_frames=11, trial="b", seed=2)]
    delta_t = 4
    report = evaluate_horizons(_damped_reverse, recs, HORIZONS, delta_t=delta_t, model_id="reverse")

    expected, count = np.zeros(3), 0
    for rec in recs:
        for t in range(delta_t - 1, rec.num_frames - delta_t):
            window = rec.frames[t - delta_t + 1:t + 1].transpose(1, 2, 0)
            prediction = _damped_reverse(window)
            for k, index in enumerate((1, 2, 3)):
                expected[k] += frame_error(prediction[:, :, index - 1], rec.frames[t + index], 24)
            count += 1
    assert report.n == count == 8 + 4
    assert report.frame_indices == [1, 2, 3]
    np.testing.assert_allclose(report.mean_errors, expected / count, rtol=0, atol=1e-12)


def test_persistence_baseline_on_constant_recording(make_recording):
    rec = make_recording(num_frames=12)
    rec = rec.replace(frames=np.repeat(rec.frames[:1], 12, axis=0))
    report = evaluate_horizons(persistence_baseline, [rec], HORIZONS, delta_t=4)
    assert report.mean_errors == [0.0, 0.0, 0.0]
    window = np.arange(6.0).reshape(1, 1, 2, 3)
    np.testing.assert_array_equal(persistence_baseline(window)[..., 1], window[..., 2])


def test_threads_give_identical_means(make_spec, make_recording):
    net = build_network(make_spec(), SeededRng(0))
    recs = [make_recording(num_frames=20, trial=str(i), seed=i) for i in range(6)]
    single = evaluate_horizons(net, recs, HORIZONS, threads=1)
    pooled = evaluate_horizons(net, recs, HORIZONS, threads=4)
    assert single.mean_errors == pooled.mean_errors
    assert single.model_id == "S-TE"


def test_masked_limb_only_touches_inputs(make_recording):
    rec = make_recording(num_frames=12)
    seen = []

    def spy(windows):
        seen.append(windows)
        return np.zeros_like(windows)

    masked = evaluate_missing_limb(spy, [rec], "left_arm", HORIZONS, delta_t=4)
    plain = evaluate_horizons(lambda w: np.zeros_like(w), [rec], HORIZONS, delta_t=4)
    joints = list(rec.schema.limb_joints("left_arm"))
    assert not seen[0][:, :, joints, :].any()
    # a zero predictor scores the same whatever its inputs were
    assert masked.mean_errors == plain.mean_errors
    assert masked.label == "model (no left_arm)"
    np.testing.assert_array_equal(mask_limb(seen[0], "left_arm", rec.schema), seen[0])


def test_unknown_limb_is_rejected(make_recording):
    with pytest.raises(ParameterError):
        evaluate_missing_limb(persistence_baseline, [make_recording()], "tail", HORIZONS, delta_t=4)


def test_rejects_bad_recording_sets(make_recording):
    with pytest.raises(EvaluationError, match="sampling rates"):
        evaluate_horizons(persistence_baseline, [make_recording(fps=60), make_recording(fps=120)],
                          HORIZONS, delta_t=4)
    with pytest.raises(EvaluationError):
        evaluate_horizons(persistence_baseline, [], HORIZONS, delta_t=4)
    with pytest.raises(EvaluationError, match="long enough"):
        evaluate_horizons(persistence_baseline, [make_recording(num_frames=7)], HORIZONS, delta_t=4)
    with pytest.raises(ParameterError):
        evaluate_horizons(persistence_baseline, [make_recording()], [33, 16], delta_t=4)


def test_by_action_and_sweep(make_recording):
    recs = [make_recording(num_frames=12, label="wave", trial="1"),
            make_recording(num_frames=12, label="box", trial="2", seed=3)]
    by_action = evaluate_by_action(persistence_baseline, recs, HORIZONS, delta_t=4)
    assert list(by_action) == ["box", "wave"]
    assert by_action["box"].set_id == "box" and by_action["box"].n == 5

    sweep = missing_limb_sweep(persistence_baseline, recs, HORIZONS, delta_t=4)
    assert list(sweep) == ["trunk", "left_arm", "right_arm", "left_leg", "right_leg"]


def test_report_csv_and_table(make_recording, tmp_path):
    report = evaluate_horizons(persistence_baseline, [make_recording(num_frames=12)], HORIZONS, delta_t=4,
                               model_id="persistence", metadata={"seed": 3})
    path = report.to_csv(tmp_path / "h.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[:2] == ["# model=persistence", "# set=recordings"]
    assert "# seed=3" in lines
    df = pd.read_csv(path, comment="#")
    assert list(df.columns) == CSV_COLUMNS
    assert df["frame_idx"].tolist() == [1, 2, 3]
    assert (df["n"] == 5).all()
    np.testing.assert_array_equal(df["mean_error"].to_numpy(), report.mean_errors)

    table = horizon_table([report])
    assert "16ms" in table and "50ms" in table and "persistence" in table


def test_performance_evaluator_writes_reports(make_spec, make_recording, tmp_path):
    net = build_network(make_spec(), SeededRng(0))
    recs = [make_recording(num_frames=14, label="walk", trial="1"),
            make_recording(num_frames=14, label="wave", trial="2", seed=5)]
    evaluator = PerformanceEvaluator(net, recs, HORIZONS, threads=2, provenance={"seed": 0})
    reports = evaluator.run_evaluation(mask_limb_name="left_leg", baseline=True, per_action=True)
    assert list(reports) == ["model", "baseline", "missing_left_leg"]

    written = evaluator.save_report(tmp_path)
    names = sorted(p.name for p in written)
    assert names == sorted([
        "horizons_model.csv", "horizons_baseline.csv", "horizons_missing_left_leg.csv",
        "horizons_action_walk.csv", "horizons_action_wave.csv", "horizon_evaluation_report.txt",
    ])
    text = (tmp_path / "horizon_evaluation_report.txt").read_text(encoding="utf-8")
    assert "# recordings=2 windows=14" in text
    assert "PER ACTION" in text and "END OF REPORT" in text
