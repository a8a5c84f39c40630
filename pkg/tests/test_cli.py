import json

import numpy as np
import pytest

from camotion.cli import CONFIG_ENV, invariance_suite, main
from camotion.clip import Clip, save_clip_dir
from camotion.features import read_stack
from camotion.pgm import write_pgm


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    doc = json.loads(err.strip().splitlines()[-1])
    assert set(doc) == {"error", "message"}
    return doc["error"]


def test_mask_gen_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        code, _, _ = run(["mask", "gen", "--size", "32x48", "--seed", 7, "--out", tmp_path / f"{name}.pgm"], capsys)
        assert code == 0
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    code, out, _ = run(["mask", "report", "--mask", tmp_path / "a.pgm"], capsys)
    assert code == 0
    assert {"min_magnitude", "mean_magnitude", "fraction_below_threshold", "broadband"} <= set(json.loads(out))


def test_parameter_error_json(tmp_path, capsys):
    code, _, err = run(["mask", "gen", "--size", "4", "--out", tmp_path / "m.pgm"], capsys)
    assert code == 1
    assert error_of(err) == "parameter"


def test_missing_file_is_io_error(tmp_path, capsys):
    code, _, err = run(["attack", "leak", "--scene", tmp_path / "none.pgm", "--ca", tmp_path / "none.pgm"], capsys)
    assert code == 1
    assert error_of(err) == "io"


def test_config_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 1, "stride": {"strides": [2], "bogus": 3}}))
    code, _, err = run(["mask", "gen", "--size", 16, "--out", tmp_path / "m.pgm", "--config", cfg], capsys)
    assert code == 1
    assert error_of(err) == "schema"


def test_config_seed_and_env_override(tmp_path, capsys, monkeypatch):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"seed": 5}))
    run(["mask", "gen", "--size", 16, "--out", tmp_path / "cfg.pgm", "--config", good], capsys)
    run(["mask", "gen", "--size", 16, "--out", tmp_path / "flag.pgm", "--seed", 5], capsys)
    assert (tmp_path / "cfg.pgm").read_bytes() == (tmp_path / "flag.pgm").read_bytes()
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    monkeypatch.setenv(CONFIG_ENV, str(bad))
    code, _, err = run(["mask", "gen", "--size", 16, "--out", tmp_path / "x.pgm", "--config", good], capsys)
    assert code == 1 and error_of(err) == "schema"


def test_sim_capture_and_leak(tmp_path, capsys, rng):
    run(["mask", "gen", "--size", 32, "--seed", 1, "--out", tmp_path / "m.pgm"], capsys)
    write_pgm(tmp_path / "s.pgm", rng.random((32, 32)))
    code, _, _ = run(["sim", "capture", "--mask", tmp_path / "m.pgm", "--input", tmp_path / "s.pgm",
                      "--out", tmp_path / "d.pgm"], capsys)
    assert code == 0
    code, out, _ = run(["attack", "leak", "--scene", tmp_path / "s.pgm", "--ca", tmp_path / "d.pgm"], capsys)
    assert code == 0
    assert -1 <= json.loads(out)["autocorr_similarity"] <= 1
    write_pgm(tmp_path / "small.pgm", rng.random((16, 16)))
    code, _, err = run(["attack", "leak", "--scene", tmp_path / "s.pgm", "--ca", tmp_path / "small.pgm"], capsys)
    assert code == 1 and error_of(err) == "dimension"


def test_feat_extract_table_shape(tmp_path, capsys, rng):
    save_clip_dir(Clip(rng.random((13, 256, 256))), tmp_path / "clip", bit_depth=16)
    code, out, _ = run(["feat", "extract", "--clip", tmp_path / "clip", "--strides", "2,3,4,6", "--clip-len", 13,
                        "--out", tmp_path / "f.mstr"], capsys)
    assert code == 0
    stack = read_stack(tmp_path / "f.mstr")
    assert stack.tensor.shape == (30, 224, 224)


def test_feat_extract_too_short(tmp_path, capsys, rng):
    save_clip_dir(Clip(rng.random((5, 32, 32))), tmp_path / "clip")
    code, _, err = run(["feat", "extract", "--clip", tmp_path / "clip", "--clip-len", 13, "--strides", "2",
                        "--out", tmp_path / "f.mstr"], capsys)
    assert code == 1 and error_of(err) == "parameter"


def test_synth_train_eval(tmp_path, capsys):
    bench = tmp_path / "bench"
    code, _, _ = run(["synth", "gen", "--classes", "still,translate-h", "--per-class", 6, "--size", 32,
                      "--length", 9, "--seed", 2, "--out", bench], capsys)
    assert code == 0
    args = ["learn", "train", "--data", bench, "--strides", "2", "--clip-len", 5, "--epochs", 2, "--pool", 2,
            "--input", "t", "--lr", "1e-2", "--seed", 3]
    assert run(args + ["--out", tmp_path / "m1.json"], capsys)[0] == 0
    assert run(args + ["--out", tmp_path / "m2.json"], capsys)[0] == 0
    assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()
    assert (tmp_path / "m1.epochs.csv").exists() and (tmp_path / "m1.report.json").exists()
    code, out, _ = run(["learn", "eval", "--model", tmp_path / "m1.json", "--data", bench,
                        "--scales", "32,36,40", "--starts", 5], capsys)
    assert code == 0
    assert json.loads(out)["clips_per_video"] == [15] * 2


def test_verify_invariance_small(capsys):
    code, out, _ = run(["verify", "invariance", "--masks", 2, "--shifts", 3, "--size", 64], capsys)
    doc = json.loads(out)
    assert doc["cases"] == 6
    assert code == (0 if doc["pass"] else 1)
    assert doc["argmax_agreement"] == 1.0


def test_invariance_suite_deterministic():
    assert invariance_suite(1, 2, 32, seed=4) == invariance_suite(1, 2, 32, seed=4)


def test_threads_do_not_change_results(tmp_path, capsys, rng):
    save_clip_dir(Clip(rng.random((5, 32, 32))), tmp_path / "clip")
    for n in (1, 2):
        run(["feat", "extract", "--clip", tmp_path / "clip", "--strides", "2", "--clip-len", 5, "--threads", n,
             "--out", tmp_path / f"f{n}.mstr"], capsys)
    assert np.array_equal(read_stack(tmp_path / "f1.mstr").tensor, read_stack(tmp_path / "f2.mstr").tensor)


def test_usage_error_exits_nonzero():
    with pytest.raises(SystemExit) as info:
        main(["mask"])
    assert info.value.code != 0
