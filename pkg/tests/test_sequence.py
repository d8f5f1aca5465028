import numpy as np
import pytest

from neoheb.tasks import sequence as sq

SMALL = sq.SeqTaskConfig(n_in=12, n_hidden=30, n_out=3, frames=40, samples_per_class=10, epochs=1)


def test_noise_free_samples_share_profile():
    ds = sq.generate_sequence_dataset(sq.SeqTaskConfig(noise=0.0, samples_per_class=4))
    first = ds.labels[:, 0]
    same = np.flatnonzero(first == first[0])
    assert np.array_equal(ds.features[same[0]], ds.features[same[1]])


def test_balanced_deterministic_dataset():
    a = sq.generate_sequence_dataset(SMALL)
    b = sq.generate_sequence_dataset(SMALL)
    assert np.array_equal(a.spikes, b.spikes)
    assert np.bincount(a.labels[:, 0]).tolist() == [10, 10, 10]
    assert set(np.unique(a.spikes)) <= {0, 1}


def test_split_is_disjoint():
    ds = sq.generate_sequence_dataset(SMALL)
    tr, te = ds.split(0.8)
    assert len(tr) == 24 and len(te) == 6
    rows = {r.tobytes() for r in tr.features}
    assert not any(r.tobytes() in rows for r in te.features)


def test_feature_file_round_trip(tmp_path):
    ds = sq.generate_sequence_dataset(SMALL)
    path = tmp_path / "f.csv"
    sq.write_feature_file(ds, path)
    back = sq.load_feature_file(path, SMALL, n_classes=3)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.spikes, ds.spikes)


def test_empty_feature_file(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("")
    with pytest.raises(sq.FeatureFileError, match="line 1"):
        sq.load_feature_file(path)


def test_ragged_row_reports_line(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("frame,label,f0,f1\n0,0,0.1,0.2\n1,0,0.3\n")
    with pytest.raises(sq.FeatureFileError, match="line 3"):
        sq.load_feature_file(path)


def test_unknown_label(tmp_path):
    path = tmp_path / "u.csv"
    path.write_text("frame,label,f0\n0,5,0.1\n")
    with pytest.raises(sq.SchemaError):
        sq.load_feature_file(path, n_classes=3)


def test_wide_file_shapes_propagate(tmp_path):
    rng = np.random.default_rng(0)
    lines = ["frame,label," + ",".join(f"f{i}" for i in range(39))]
    for s in range(2):
        if s:
            lines.append("")
        for t in range(5):
            lines.append(f"{t},{(s * 5 + t) % 61}," + ",".join(f"{v:.3f}" for v in rng.random(39)))
    path = tmp_path / "w.csv"
    path.write_text("\n".join(lines) + "\n")
    ds = sq.load_feature_file(path, n_classes=61)
    assert ds.n_in == 39 and ds.n_classes == 61
    cfg = sq.SeqTaskConfig(n_in=ds.n_in, n_out=ds.n_classes, n_hidden=10, frames=5)
    trainer = sq.SeqTrainer(cfg)
    assert trainer.net.w_i.shape == (39, 10) and trainer.net.w_o.shape == (10, 61)


@pytest.mark.parametrize("mode", ["ideal", "hardware"])
def test_training_is_deterministic(mode):
    a = sq.run_sequence(SMALL, mode, seed=3)
    b = sq.run_sequence(SMALL, mode, seed=3)
    assert a == b


def test_per_step_path_matches_fused_without_temperature_coefficient():
    ds = sq.generate_sequence_dataset(SMALL)
    tr, te = ds.split()
    res = []
    for per_step in (False, True):
        trainer = sq.SeqTrainer(SMALL, "hardware", sq.HardwareConfig(per_step=per_step), seed=1)
        res.append(trainer.fit(tr.subset(np.arange(6)), te))
    assert res[0].test_acc == pytest.approx(res[1].test_acc, abs=1e-12)


def test_ideal_training_reaches_target_accuracy():
    res = sq.run_sequence(sq.SeqTaskConfig(), "ideal", seed=0)
    assert res.final_test >= 0.90


def test_unknown_mode():
    with pytest.raises(ValueError):
        sq.SeqTrainer(SMALL, "quantum")
