import hashlib
import os

import numpy as np
import pytest

from brain_decoder import fileio, lstm, synth
from brain_decoder.cli import main
from brain_decoder.errors import ConfigError, ParseError
from brain_decoder.features import extract_features, row_normalize, shift_labels


SYNTH_CFG = "n_subjects=6\nn_train=3\nn_val=1\nn_test=2\nt=90\nk=5\ns_vox=40\n"
TRAIN_CFG = "hidden_size=6\nmax_steps=30\neval_every=10\nbatch_size=4\n"


def _tree_digest(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = hashlib.sha256(fh.read()).hexdigest()
    return out


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "synth.cfg").write_text(SYNTH_CFG)
    (tmp_path / "train.cfg").write_text(TRAIN_CFG)
    return tmp_path


def _pipeline():
    assert main(["synth", "--config", "synth.cfg", "--out", "data", "--seed", "4"]) == 0
    assert main(["featurize", "--dataset", "data", "--out", "feats"]) == 0
    assert main(["train", "--train", "feats/train", "--val", "feats/val",
                 "--config", "train.cfg", "--out", "model"]) == 0
    assert main(["predict", "--model", "model/model.lstm", "--features", "feats/test",
                 "--out", "pred"]) == 0
    assert main(["baseline", "--train", "feats/train", "--val", "feats/val",
                 "--test", "feats/test", "--trees", "3,5", "--min-leaf", "3", "--out", "rf"]) == 0
    assert main(["eval", "--pred", "pred", "--pred-b", "rf", "--truth", "feats/test",
                 "--name-a", "lstm", "--name-b", "forest", "--out", "eval"]) == 0
    assert main(["sensitivity", "--model", "model/model.lstm", "--features", "feats/test",
                 "--out", "sens"]) == 0


def test_pipeline_outputs_and_manifests(workdir):
    _pipeline()
    for d in ("data", "feats", "model", "pred", "rf", "eval", "sens"):
        kv = fileio.read_kv(workdir / d / "manifest.txt")
        assert kv["tool_version"] and kv["command"]
    assert sorted(os.listdir(workdir / "data")) == ["loadings.csv", "manifest.txt", "test",
                                                    "train", "val"]
    assert len(os.listdir(workdir / "data" / "train")) == 3
    head = (workdir / "model" / "train_log.csv").read_text().splitlines()
    assert head[0] == "step,lr,train_loss,val_metric" and len(head) == 4
    assert (workdir / "eval" / "stats.csv").read_text().splitlines()[0] == \
        "model_a,model_b,n,w,p_two_sided,degenerate"
    assert (workdir / "sens" / "top_fns.csv").read_text().splitlines()[0] == "rank,fn_index"
    changes, header = fileio.read_matrix(workdir / "sens" / "change_matrix.csv", header=True)
    assert changes.shape == (5, 2) and header == ["subject_004", "subject_005"]
    assert len((workdir / "eval" / "states.txt").read_text().split()) == 4


def test_pipeline_matches_library_calls(workdir):
    _pipeline()
    params = lstm.load_checkpoint(workdir / "model" / "model.lstm")
    f, _ = fileio.read_matrix(workdir / "feats/test/subject_004/features.csv", header=True)
    pred = fileio.read_labels(workdir / "pred/subject_004/predictions.csv")
    np.testing.assert_array_equal(pred, lstm.predict(f, params))
    cfg = synth.SynthConfig(n_subjects=6, t=90, k=5, s_vox=40, seed=4)
    subject = synth.generate(cfg)[4]
    expected, labels = synth.featurize(subject, 8)
    np.testing.assert_allclose(f, expected, rtol=0, atol=1e-9)
    np.testing.assert_array_equal(fileio.read_labels(workdir / "feats/test/subject_004/labels.csv"),
                                  labels)


def test_synth_manifest_records_full_scale_split(workdir):
    assert main(["synth", "--config", "synth.cfg", "--out", "d"]) == 0
    kv = fileio.read_kv(workdir / "d" / "manifest.txt")
    assert (kv["config.full_scale_split_train"], kv["config.full_scale_split_val"],
            kv["config.full_scale_split_test"]) == ("400", "50", "40")


def test_synth_single_subject_warns(workdir, caplog):
    with caplog.at_level("WARNING"):
        assert main(["synth", "--config", "synth.cfg", "--n-subjects", "1", "--out", "d"]) == 0
    assert os.listdir(workdir / "d" / "train") == ["subject_000"]
    assert os.listdir(workdir / "d" / "val") == [] and os.listdir(workdir / "d" / "test") == []
    assert any("val" in r.message for r in caplog.records)


def test_synth_deterministic(workdir):
    assert main(["synth", "--config", "synth.cfg", "--out", "a"]) == 0
    os.makedirs("b_root")
    os.chdir("b_root")
    assert main(["synth", "--config", "../synth.cfg", "--out", "a"]) == 0
    os.chdir("..")
    da, db = _tree_digest("a"), _tree_digest("b_root/a")
    da.pop("manifest.txt")
    db.pop("manifest.txt")
    assert da == db


def test_synth_rejects_unknown_key(workdir, capsys):
    (workdir / "bad.cfg").write_text("n_subjects=2\nwobble=3\n")
    assert main(["synth", "--config", "bad.cfg", "--out", "d"]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error=config code=2") and "wobble" in err and "\n" not in err


def _write_subject(d, scan, fn, labels):
    os.makedirs(d, exist_ok=True)
    fileio.write_matrix(os.path.join(d, "scan.csv"), scan)
    fileio.write_matrix(os.path.join(d, "fn.csv"), fn)
    fileio.write_labels(os.path.join(d, "labels.csv"), labels)


def test_featurize_identity_networks(workdir, rng):
    scan = rng.normal(size=(12, 4))
    labels = rng.integers(0, 3, 12)
    _write_subject("s", scan, np.eye(4), labels)
    assert main(["featurize", "--scan", "s/scan.csv", "--fn", "s/fn.csv",
                 "--labels", "s/labels.csv", "--out", "o"]) == 0
    f, header = fileio.read_matrix("o/features.csv", header=True)
    assert header == ["fn_0", "fn_1", "fn_2", "fn_3"]
    np.testing.assert_array_equal(f, scan)
    np.testing.assert_array_equal(fileio.read_labels("o/labels.csv"), shift_labels(labels, 8))
    assert fileio.read_kv("o/manifest.txt")["config.shift"] == "8"


def test_featurize_round_trip_matches_memory(workdir, rng):
    scan = rng.normal(size=(20, 9)) * 1e3
    fn = rng.uniform(0, 1, size=(3, 9))
    labels = rng.integers(0, 2, 20)
    _write_subject("s", scan, fn, labels)
    assert main(["featurize", "--scan", "s/scan.csv", "--fn", "s/fn.csv",
                 "--labels", "s/labels.csv", "--shift", "2", "--out", "o"]) == 0
    f, _ = fileio.read_matrix("o/features.csv", header=True)
    np.testing.assert_allclose(f, extract_features(scan, row_normalize(fn)), rtol=0, atol=1e-9)


def test_featurize_malformed_csv_reports_line(workdir, capsys):
    _write_subject("s", np.ones((3, 2)), np.eye(2), [0, 0, 1])
    with open("s/scan.csv", "a") as fh:
        fh.write("1.0,abc\n")
    assert main(["featurize", "--scan", "s/scan.csv", "--fn", "s/fn.csv",
                 "--labels", "s/labels.csv", "--shift", "0", "--out", "o"]) == 3
    assert "scan.csv:4" in capsys.readouterr().err
    with open("s/fn.csv", "a") as fh:
        fh.write("1.0,2.0,3.0\n")
    with open("s/scan.csv", "w") as fh:
        fh.write("1,2\n3,4\n5,6\n")
    assert main(["featurize", "--scan", "s/scan.csv", "--fn", "s/fn.csv",
                 "--labels", "s/labels.csv", "--shift", "0", "--out", "o"]) == 3
    assert "fn.csv:3" in capsys.readouterr().err


def test_featurize_shape_mismatch_exit_code(workdir, capsys):
    _write_subject("s", np.ones((3, 2)), np.eye(3), [0, 0, 1])
    assert main(["featurize", "--scan", "s/scan.csv", "--fn", "s/fn.csv",
                 "--labels", "s/labels.csv", "--shift", "0", "--out", "o"]) == 3
    assert capsys.readouterr().err.startswith("error=shape code=3")


def test_eval_identical_files(workdir):
    fileio.write_labels("t.csv", [0, 1, 1, 2, 2, 2])
    assert main(["eval", "--pred", "t.csv", "--truth", "t.csv", "--out", "e"]) == 0
    np.testing.assert_array_equal(fileio.read_matrix("e/confusion_model_a.csv"), np.eye(3))
    acc = (workdir / "e" / "accuracy.csv").read_text().splitlines()[1].split(",")
    assert float(acc[1]) == 1.0 and float(acc[2]) == 0.0


def test_baseline_defaults_to_full_grid(workdir):
    rng = np.random.default_rng(0)
    for split in ("tr", "va"):
        os.makedirs(f"{split}/s0")
        fileio.write_matrix(f"{split}/s0/features.csv", rng.normal(size=(12, 2)),
                            header=["fn_0", "fn_1"])
        fileio.write_labels(f"{split}/s0/labels.csv", [0] * 6 + [1] * 6)
    assert main(["baseline", "--train", "tr", "--val", "va", "--out", "rf"]) == 0
    grid = (workdir / "rf" / "grid.csv").read_text().splitlines()[1:]
    assert len(grid) == 12
    kv = fileio.read_kv("rf/manifest.txt")
    assert kv["config.trees"] == "100,200,500,1000" and kv["config.min_leaf"] == "3,5,10"


def test_exit_codes(workdir, capsys):
    assert main(["predict", "--model", "missing.lstm", "--features", ".", "--out", "o"]) == 5
    assert capsys.readouterr().err.startswith("error=io code=5")
    (workdir / "junk.lstm").write_bytes(b"NOTACKPT\x01")
    os.makedirs("f/s0")
    fileio.write_matrix("f/s0/features.csv", np.zeros((4, 2)), header=["fn_0", "fn_1"])
    fileio.write_labels("f/s0/labels.csv", [0, 0, 1, 1])
    assert main(["predict", "--model", "junk.lstm", "--features", "f", "--out", "o"]) == 3
    assert capsys.readouterr().err.startswith("error=checkpoint code=3")
    lstm.save_checkpoint("m.lstm", lstm.DecoderParams.zeros(3, 2, 2))
    assert main(["predict", "--model", "m.lstm", "--features", "f", "--out", "o"]) == 3
    assert capsys.readouterr().err.startswith("error=shape code=3")
    assert main(["frobnicate"]) == 2
    assert main(["train", "--out", "x"]) == 2
    assert capsys.readouterr().err.startswith("error=usage code=2")
    p = lstm.DecoderParams.zeros(2, 2, 2)
    p.b_s[0] = np.inf
    lstm.save_checkpoint("inf.lstm", p)
    assert main(["predict", "--model", "inf.lstm", "--features", "f", "--out", "o"]) == 4
    assert capsys.readouterr().err.startswith("error=numeric code=4")


def test_commands_do_not_modify_inputs(workdir):
    assert main(["synth", "--config", "synth.cfg", "--out", "data"]) == 0
    before = _tree_digest("data")
    assert main(["featurize", "--dataset", "data", "--out", "feats"]) == 0
    assert _tree_digest("data") == before


def test_flags_override_config_file(workdir):
    assert main(["synth", "--config", "synth.cfg", "--out", "data"]) == 0
    assert main(["featurize", "--dataset", "data", "--out", "feats"]) == 0
    assert main(["train", "--train", "feats/train", "--val", "feats/val", "--config", "train.cfg",
                 "--max-steps", "10", "--seed", "3", "--out", "m"]) == 0
    kv = fileio.read_kv("m/manifest.txt")
    assert kv["config.max_steps"] == "10" and kv["config.seed"] == "3"
    assert kv["config.hidden_size"] == "6"


def test_kv_and_config_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nt = 50\nblock_len_range=3,7\ntemporal_ambiguity=false\n")
    cfg, _ = fileio.config_from_kv(synth.SynthConfig, fileio.read_kv(path))
    assert cfg.t == 50 and cfg.block_len_range == (3, 7) and cfg.temporal_ambiguity is False
    path.write_text("no equals sign\n")
    with pytest.raises(ParseError):
        fileio.read_kv(path)
    with pytest.raises(ConfigError):
        fileio.config_from_kv(synth.SynthConfig, {"t": "many"})


def test_matrix_round_trip_is_exact(tmp_path, rng):
    m = rng.normal(size=(5, 3)) * 10.0 ** rng.integers(-20, 20, size=(5, 3))
    fileio.write_matrix(tmp_path / "m.csv", m)
    assert fileio.read_matrix(tmp_path / "m.csv").tobytes() == m.tobytes()


def test_label_file_rejects_non_integers(tmp_path):
    (tmp_path / "l.csv").write_text("0\n1\nx\n")
    with pytest.raises(ParseError, match="l.csv:3"):
        fileio.read_labels(tmp_path / "l.csv")
