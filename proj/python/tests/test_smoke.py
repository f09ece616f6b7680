import json
import os
import subprocess

import numpy as np
import pytest

import focus_sim


def test_cycle_formulas():
    assert focus_sim.gemm_tile_cycles(1024, 3584, 32, 32, 32, 32) == 114688
    assert focus_sim.sorter_cycles(6272, 2509, 32) == 491764
    assert focus_sim.attention_cycles(6272, 109, 128, 28, 32, 32) == 140075712
    assert focus_sim.matcher_cycles(1024) == 8192


def test_top_k_and_offsets():
    s = np.array([0.1, 0.9, 0.5, 0.9, 0.2], dtype=np.float32)
    assert focus_sim.top_k_select(s, 2) == [1, 3]
    idx = [0, 3, 4, 10]
    enc = focus_sim.encode_offsets(idx)
    assert len(enc) == len(idx)
    assert focus_sim.decode_offsets(enc) == idx


def test_trace_round_trip(tmp_path):
    g = focus_sim.generate_trace(2, 3, 3, 8, text=2, temporal=0.5, seed=4)
    assert g["image"].shape == (18, 8)
    assert g["text"].shape == (2, 8)
    path = tmp_path / "t.fctr"
    focus_sim.write_trace(path, g["image"], g["text"], 2, 3, 3)
    back = focus_sim.read_trace(path)
    np.testing.assert_array_equal(back["image"], g["image"])
    np.testing.assert_array_equal(back["text"], g["text"])


def test_run_dense_matches_oracle(tmp_path):
    g = focus_sim.generate_trace(2, 4, 4, 16, text=2, seed=1)
    path = tmp_path / "t.fctr"
    focus_sim.write_trace(path, g["image"], g["text"], 2, 4, 4)
    cfg = json.dumps({"tile": {"m": 16, "n": 8, "k": 8, "a": 8, "b": 8}, "sim_threshold": "disabled"})
    r = focus_sim.run(cfg, path, oracle=True)
    assert r["max_abs_error"] == 0.0
    report = json.loads(r["report"])
    assert report["sparsity"] == 0.0
    assert r["output"].shape == (34, 16)


def test_validation_error_maps_to_value_error(tmp_path):
    path = tmp_path / "bad.fctr"
    path.write_bytes(b"FCTX")
    with pytest.raises(ValueError):
        focus_sim.read_trace(path)


def test_cli_in_process_and_binary(tmp_path):
    out = tmp_path / "t.fctr"
    code, _, _ = focus_sim.cli(["gen", "--frames", "2", "--hw", "2x2", "--dmodel", "8", "-o", str(out)])
    assert code == 0 and out.exists()
    code, _, err = focus_sim.cli(["gen", "--temporal", "2", "-o", str(out)])
    assert code == 2
    exe = os.environ.get("FOCUS_CLI")
    if exe:
        assert subprocess.run([exe, "--help"], capture_output=True).returncode == 0
