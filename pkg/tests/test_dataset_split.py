import pytest

from motenc.dataset_split import StratifiedSplitGenerator, check_overlap, recordings_table
from motenc.errors import ParameterError, ValidationError
from motenc.tensor import SeededRng


@pytest.fixture
def recordings(make_recording):
    recs = []
    for label in ("walk", "wave", "box"):
        for i in range(8):
            recs.append(make_recording(num_frames=5, label=label, subject=f"s{i % 4}", trial=f"{label}{i}"))
    return recs


def test_every_label_in_both_sets(recordings):
    generator = StratifiedSplitGenerator(recordings, SeededRng(0))
    train, test = generator.split(test_fraction=0.25)
    assert len(train) == 18 and len(test) == 6
    for label in ("walk", "wave", "box"):
        assert generator.stats[label] == {"test": 2, "train": 6}
    assert not {r.recording_id for r in train} & {r.recording_id for r in test}


def test_split_is_seeded(recordings):
    first = StratifiedSplitGenerator(recordings, SeededRng(5)).split()
    again = StratifiedSplitGenerator(recordings, SeededRng(5)).split()
    assert [r.recording_id for r in first[1]] == [r.recording_id for r in again[1]]


def test_subject_holdout(recordings):
    train, test = StratifiedSplitGenerator(recordings, SeededRng(0)).split(holdout_subjects=["s3"])
    assert {r.subject for r in test} == {"s3"}
    assert "s3" not in {r.subject for r in train}
    assert len(test) == 6


def test_single_recording_label_stays_in_training(make_recording):
    recs = [make_recording(label="walk", trial=str(i)) for i in range(4)] + [make_recording(label="box", trial="x")]
    train, test = StratifiedSplitGenerator(recs, SeededRng(0)).split(test_fraction=0.5)
    assert "box" not in {r.label for r in test}
    assert len(test) == 2


@pytest.mark.parametrize("kwargs", [{"test_fraction": 0.0}, {"test_fraction": 1.0}, {"holdout_subjects": ["nobody"]}])
def test_bad_split_arguments(recordings, kwargs):
    with pytest.raises(ParameterError):
        StratifiedSplitGenerator(recordings, SeededRng(0)).split(**kwargs)


def test_overlap_lists_every_shared_id(recordings):
    with pytest.raises(ValidationError) as info:
        check_overlap(recordings[:3], recordings[1:5])
    assert len(info.value.problems) == 2


def test_recordings_table_columns(recordings):
    df = recordings_table(recordings)
    assert list(df.columns) == ['position', 'recording_id', 'label', 'subject', 'frames']
    assert len(df) == 24
