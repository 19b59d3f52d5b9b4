import csv
import json
import hashlib

import numpy as np
import pytest

from hardwall.cli import (ConfigError, CSV_HEADER, ExperimentSpec, RunManifest,
                          main, read_frames, replay_manifest, run_config,
                          validate_config, write_frames)


def test_validate_unknown_kind():
    with pytest.raises(ConfigError, match="kind"):
        validate_config({"kind": "teleport", "seed": 0, "params": {}})


def test_validate_schema_version():
    with pytest.raises(ConfigError, match="schema"):
        validate_config({"schema": 99, "kind": "prob", "seed": 0, "params": {}})


def test_validate_seed():
    with pytest.raises(ConfigError, match="seed"):
        validate_config({"kind": "prob", "seed": -1, "params": {}})


def test_validate_error_paths_are_precise():
    with pytest.raises(ConfigError, match=r"params\.L: must be odd"):
        validate_config({"kind": "prob", "seed": 0, "params": {"L": 4}})
    with pytest.raises(ConfigError, match=r"params\.N_list\[1\]"):
        validate_config({"kind": "repulsion_scaling", "seed": 0,
                         "params": {"N_list": [8, 2]}})
    with pytest.raises(ConfigError, match=r"params\.wall\.family"):
        validate_config({"kind": "sample", "seed": 0,
                         "params": {"wall": {"family": "lava"}}})
    with pytest.raises(ConfigError, match=r"params\.method"):
        validate_config({"kind": "capacity", "seed": 0, "params": {"method": "psychic"}})


def test_validate_fills_defaults():
    cfg = validate_config({"kind": "prob", "seed": 3, "params": {}})
    assert cfg["params"]["L"] == 5
    assert cfg["params"]["method"] == "both"
    assert cfg["schema"] == 1


def test_experiment_spec_invariants():
    with pytest.raises(ConfigError):
        ExperimentSpec(kind="nope")
    with pytest.raises(ConfigError):
        ExperimentSpec(kind="repulsion_scaling", N_list=(2,))
    with pytest.raises(ConfigError):
        ExperimentSpec(kind="repulsion_scaling", N_list=(8,), replicates=0)
    spec = ExperimentSpec(kind="repulsion_scaling", N_list=(8, 16), replicates=3)
    assert spec.N_list == (8, 16)


def test_frames_roundtrip(tmp_path):
    arr = np.arange(12.0).reshape(3, 4)
    path = tmp_path / "f.bin"
    write_frames(path, arr)
    back = read_frames(path)
    assert np.array_equal(back, arr)
    raw = path.read_bytes()
    assert raw[:8] == b"HWFIELD\x00"
    with pytest.raises(ValueError, match="magic"):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"NOTMAGIC" + raw[8:])
        read_frames(bad)


def _run_prob(tmp_path, name, threads=1, seed=5):
    cfg = {"kind": "prob", "seed": seed,
           "params": {"L": 1, "samples": 5000, "wall_level": 0.5}}
    return run_config(cfg, tmp_path / name, threads=threads)


def test_manifest_contents(tmp_path):
    m = _run_prob(tmp_path, "run1")
    assert isinstance(m, RunManifest)
    j = json.loads((tmp_path / "run1" / "manifest.json").read_text())
    for key in ("schema", "tool_version", "kind", "seed", "config", "config_hash",
                "started", "finished", "outputs", "inputs", "warnings", "summary"):
        assert key in j
    assert set(j["outputs"]) == {"prob.csv", "summary.json"}
    # recorded hashes match the files on disk
    for name, digest in j["outputs"].items():
        data = (tmp_path / "run1" / name).read_bytes()
        assert hashlib.sha256(data).hexdigest() == digest


def test_csv_long_format(tmp_path):
    _run_prob(tmp_path, "run1")
    with open(tmp_path / "run1" / "prob.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == CSV_HEADER
    assert all(len(r) == 5 for r in rows)
    float(rows[1][3])  # value column parses


def test_replay_byte_identical_across_threads(tmp_path):
    m = _run_prob(tmp_path, "run1")
    for threads in (1, 2):
        res = replay_manifest(tmp_path / "run1" / "manifest.json",
                              out_dir=tmp_path / f"replay{threads}", threads=threads)
        assert res["match"], res["diff"]


def test_replay_detects_config_tampering(tmp_path):
    _run_prob(tmp_path, "run1")
    path = tmp_path / "run1" / "manifest.json"
    j = json.loads(path.read_text())
    j["config"]["seed"] = 999
    path.write_text(json.dumps(j))
    with pytest.raises(ValueError, match="integrity"):
        replay_manifest(path, out_dir=tmp_path / "replay")


def test_replay_reports_seed_drift(tmp_path):
    # a different seed recorded consistently (hash updated) replays fine
    # but produces different outputs than the recorded hashes
    m = _run_prob(tmp_path, "run1")
    path = tmp_path / "run1" / "manifest.json"
    j = json.loads(path.read_text())
    other = _run_prob(tmp_path, "run2", seed=6)
    j["outputs"] = json.loads((tmp_path / "run2" / "manifest.json").read_text())["outputs"]
    path.write_text(json.dumps(j))
    res = replay_manifest(path, out_dir=tmp_path / "replay")
    assert not res["match"] and res["diff"]


def test_threaded_study_is_thread_count_invariant(tmp_path):
    cfg = {"kind": "repulsion_scaling", "seed": 1, "params": {
        "N_list": [3, 4], "replicates": 2, "burn_in": 40, "thinning": 2,
        "n_samples": 20}}
    m1 = run_config(cfg, tmp_path / "t1", threads=1)
    m2 = run_config(cfg, tmp_path / "t2", threads=2)
    assert m1.outputs == m2.outputs


def test_failed_run_leaves_no_partial_outputs(tmp_path):
    cfg = {"kind": "sample", "seed": 0, "params": {
        "N": 3, "wall": {"family": "flat", "c": 80.0},
        "burn_in": 5, "thinning": 1, "n_samples": 2, "init_height": 0.0}}
    out = tmp_path / "boom"
    with pytest.raises(Exception):
        run_config(cfg, out)
    leftovers = [p for p in out.glob("*") if p.is_file()]
    assert leftovers == []


def test_cli_main_green(tmp_path, capsys):
    rc = main(["green", "--L", "3", "--out-dir", str(tmp_path / "g")])
    assert rc == 0
    consts = json.loads((tmp_path / "g" / "constants.json").read_text())
    assert consts["G_diag"] == pytest.approx(1.5163860591, abs=1e-4)
    assert consts["G_L"]["2"] == 1.0


def test_cli_main_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "prob", "seed": 0, "params": {"L": 4}}))
    rc = main(["run", str(bad), "--out-dir", str(tmp_path / "out")])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_cli_main_replay(tmp_path, capsys):
    _run_prob(tmp_path, "run1")
    rc = main(["replay", str(tmp_path / "run1" / "manifest.json"),
               "--out-dir", str(tmp_path / "rep")])
    assert rc == 0
    assert "replay OK" in capsys.readouterr().out


def test_wall_file_input_hash_checked(tmp_path):
    from hardwall.lattice import ShapeSpec, build_domain
    from hardwall.wall import WallSpec, sample_wall, save_wall
    dom = build_domain(ShapeSpec(kind="ball", radius=1.0), 3, 3)
    wall = sample_wall(WallSpec(family="gaussian", seed=2), dom)
    wf = tmp_path / "wall.csv"
    save_wall(wall, wf)
    cfg = {"kind": "sample", "seed": 2, "params": {
        "N": 3, "wall": {"family": "gaussian", "seed": 2}, "wall_file": str(wf),
        "burn_in": 20, "thinning": 1, "n_samples": 3, "init_height": 1.0}}
    m = run_config(cfg, tmp_path / "out")
    assert str(wf.resolve()) in m.inputs
    wf.write_text(wf.read_text().replace("0", "1", 1))
    with pytest.raises(ValueError, match="input changed"):
        replay_manifest(tmp_path / "out" / "manifest.json", out_dir=tmp_path / "rep")
