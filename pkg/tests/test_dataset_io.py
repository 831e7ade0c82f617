import numpy as np
import pytest

from dstgnn.dataset_io import (
    CHANNELS, PUBLISHED_SUBJECTS, Dataset, Label, Recording, SubjectLabel, SynthComponent,
    SynthSpec, TaskId, load_dataset, planted_dataset, read_recording_csv, subject_table,
    synth_recording, write_dataset, write_recording_csv,
)
from dstgnn.errors import (
    ChannelOrderWarning, FrequencyOutOfRange, LabelMismatch, MissingFile, NonNumericCell,
    ShapeMismatch,
)


def test_task_ids():
    assert len(TaskId) == 9
    assert [t for t in TaskId if t.duration_s == 120] == [TaskId.ET]
    assert TaskId.ET.expected_samples() == 30000
    assert TaskId.EC.expected_samples() == 15000


def test_published_subject_table():
    assert len(PUBLISHED_SUBJECTS) == 14
    assert sum(s.label is Label.ADDICTED for s in PUBLISHED_SUBJECTS) == 7
    assert PUBLISHED_SUBJECTS[0] == SubjectLabel("S1", Label.ADDICTED, "Male")


def test_synth_variance_matches_closed_form():
    amp = 2.5
    rec = synth_recording(SynthSpec([SynthComponent(10.0, amp)], noise_sd=0.0, duration_s=60))
    # 600 whole cycles, so the discrete variance equals amp^2/2 up to rounding
    var = rec.data[:, 0].var()
    assert abs(var - amp ** 2 / 2) / (amp ** 2 / 2) < 1e-6


def test_synth_deterministic():
    spec = SynthSpec([SynthComponent(7.0, 1.0, np.linspace(0, 1, 19))], noise_sd=0.3, seed=9)
    a, b = synth_recording(spec), synth_recording(spec)
    assert np.array_equal(a.data, b.data)


def test_synth_rejects_above_nyquist():
    with pytest.raises(FrequencyOutOfRange):
        synth_recording(SynthSpec([SynthComponent(200.0)]))


def _small_tree(tmp_path, n_subjects=2, tasks=(TaskId.EC,)):
    ds = planted_dataset(n_subjects, tasks, seed=1, duration_s=2.0)
    write_dataset(ds, tmp_path)
    return ds


def test_roundtrip_bit_exact(tmp_path, rng):
    rec = Recording("S1", TaskId.EC, rng.normal(size=(50, 19)) * 1e3)
    write_recording_csv(rec, tmp_path / "x.csv")
    back = read_recording_csv(tmp_path / "x.csv", "S1", TaskId.EC)
    assert np.array_equal(back.data, rec.data)


def test_headerless_csv(tmp_path, rng):
    rec = Recording("S1", TaskId.EC, rng.normal(size=(20, 19)))
    write_recording_csv(rec, tmp_path / "x.csv", header=False)
    back = read_recording_csv(tmp_path / "x.csv", "S1", TaskId.EC)
    assert np.array_equal(back.data, rec.data)


def test_header_mismatch_warns(tmp_path, rng):
    rec = Recording("S1", TaskId.EC, rng.normal(size=(5, 19)))
    rec = Recording("S1", TaskId.EC, rec.data, channel_names=tuple(reversed(CHANNELS)))
    write_recording_csv(rec, tmp_path / "x.csv")
    with pytest.warns(ChannelOrderWarning):
        read_recording_csv(tmp_path / "x.csv", "S1", TaskId.EC)


def test_load_small_tree(tmp_path):
    ds = _small_tree(tmp_path)
    back = load_dataset(tmp_path, tasks=["EC"], strict_rows=False)
    assert back.subjects == ["S1", "S2"]
    assert np.array_equal(back.get("S1", "EC").data, ds.get("S1", "EC").data)
    assert len(subject_table(back)) == 2


def test_strict_rows_rejects_short_files(tmp_path):
    _small_tree(tmp_path)
    with pytest.raises(ShapeMismatch):
        load_dataset(tmp_path, tasks=["EC"])


def test_missing_file_names_subject_and_task(tmp_path):
    _small_tree(tmp_path, tasks=(TaskId.EC, TaskId.ET))
    (tmp_path / "S2" / "ET.csv").unlink()
    with pytest.raises(MissingFile) as exc:
        load_dataset(tmp_path, tasks=["EC", "ET"], strict_rows=False)
    assert (exc.value.subject, exc.value.task) == ("S2", "ET")


def test_wrong_column_count(tmp_path, rng):
    np.savetxt(tmp_path / "EC.csv", rng.normal(size=(4, 18)), delimiter=",")
    with pytest.raises(ShapeMismatch) as exc:
        read_recording_csv(tmp_path / "EC.csv", "S1", TaskId.EC)
    assert exc.value.expected == 19 and exc.value.got == 18


def test_non_numeric_cell_reports_position(tmp_path, rng):
    rows = [",".join(CHANNELS)] + [",".join(["1.0"] * 19) for _ in range(3)]
    bad = rows[2].split(",")
    bad[4] = "abc"
    rows[2] = ",".join(bad)
    (tmp_path / "EC.csv").write_text("\n".join(rows) + "\n")
    with pytest.raises(NonNumericCell) as exc:
        read_recording_csv(tmp_path / "EC.csv", "S1", TaskId.EC)
    assert (exc.value.row, exc.value.col) == (2, 4)


def test_unknown_subject_in_labels(tmp_path):
    _small_tree(tmp_path)
    with open(tmp_path / "labels.csv", "a") as fh:
        fh.write("S99,Addicted,\n")
    with pytest.raises(LabelMismatch):
        load_dataset(tmp_path, tasks=["EC"], strict_rows=False)


def test_published_labels_used_without_labels_file(tmp_path):
    ds = planted_dataset(14, (TaskId.EC,), seed=0, duration_s=1.0)
    write_dataset(ds, tmp_path)
    (tmp_path / "labels.csv").unlink()
    back = load_dataset(tmp_path, tasks=["EC"], strict_rows=False)
    rows = subject_table(back)
    assert len(rows) == 14
    assert rows[0] == ("S1", "Male", Label.ADDICTED)
    assert sum(r[2] is Label.ADDICTED for r in rows) == 7


def test_full_grid_has_126_recordings(tmp_path):
    ds = planted_dataset(14, tuple(TaskId), seed=0, duration_s=None)
    assert len(ds.recordings) == 126
    labels = [s.label for s in ds.labels]
    assert labels.count(Label.ADDICTED) == labels.count(Label.NOT_ADDICTED) == 7
    assert ds.get("S3", "ET").n_samples == 30000


def test_dataset_requires_complete_grid():
    rec = Recording("S1", TaskId.EC, np.zeros((10, 19)))
    with pytest.raises(MissingFile):
        Dataset({("S1", TaskId.EC): rec}, (SubjectLabel("S1", Label.ADDICTED),),
                (TaskId.EC, TaskId.EO))
