import csv
import io
import subprocess
import sys

import pytest

from heightpack.cli import build_parser, dispatch


def run(capsys, *argv):
    code = dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_heuristic_ordered(capsys):
    code, out, _ = run(capsys, "heuristic", "--experiment", "2", "--strategy", "desc-height")
    assert code == 0
    assert "coverage 100.00/100.00" in out
    assert "skipped none" in out


def test_heuristic_unordered_half_board(capsys):
    code, out, _ = run(capsys, "heuristic", "--experiment", "2", "--strategy", "none")
    assert code == 0
    assert "coverage 100.00/50.00" in out
    assert "skipped P3x16" in out
    board1 = out.split("board 1")[1].splitlines()[1:9]
    assert board1[:4] == ["44444444"] * 4 and board1[4:] == ["........"] * 4


@pytest.mark.parametrize("heuristic", ["bfdh", "nfdh"])
def test_level_heuristics(capsys, heuristic):
    code, out, _ = run(capsys, "heuristic", "--experiment", "4", "--heuristic", heuristic)
    assert code == 0 and heuristic in out


def test_heuristic_artifacts_and_replay(capsys, tmp_path):
    code, _, _ = run(capsys, "heuristic", "--experiment", "3", "--strategy", "asc-height",
                     "--out", str(tmp_path), "--plot")
    assert code == 0
    result = tmp_path / "exp3_maxrect-bl_asc-height.json"
    assert result.exists()
    assert (tmp_path / "exp3_maxrect-bl_asc-height.svg").read_text().startswith("<svg")
    code, out, _ = run(capsys, "replay", "--experiment", "3", "--result", str(result))
    assert code == 0
    assert out.rstrip().endswith("invalid 0")
    assert "reward=-8" not in out


def test_train_twice_identical(capsys, tmp_path):
    args = ["train", "--experiment", "1", "--agent", "ppo", "--steps", "1000", "--seed", "7"]
    assert run(capsys, *args, "--out", str(tmp_path / "a"))[0] == 0
    assert run(capsys, *args, "--out", str(tmp_path / "b"), "--plot")[0] == 0
    for name in ("exp1_ppo_seed7.jsonl", "exp1_ppo_seed7.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "b" / "exp1_ppo_seed7_reward.svg").exists()

    ckpt = tmp_path / "a" / "exp1_ppo_seed7.ckpt"
    code, out, _ = run(capsys, "evaluate", "--checkpoint", str(ckpt), "--experiment", "1",
                       "--episodes", "10", "--deterministic")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and rows[0]["episodes"] == "10"
    again = run(capsys, "evaluate", "--checkpoint", str(ckpt), "--experiment", "1",
                "--episodes", "10", "--deterministic")[1]
    assert again == out
    # a checkpoint for 8x8 boards cannot drive a 7x7 experiment
    assert run(capsys, "evaluate", "--checkpoint", str(ckpt), "--experiment", "4")[0] == 1


def test_report_small(capsys, tmp_path):
    args = ["report", "--experiment", "mini", "--agent", "a2c", "--seeds", "2", "--steps", "64",
            "--out", str(tmp_path), "--plot"]
    code, out, _ = run(capsys, *args)
    assert code == 0
    first = (tmp_path / "summary.csv").read_bytes()
    assert b"mini,a2c,placement_rate" in first
    assert (tmp_path / "mini_mean_reward.svg").exists()
    code, out2, _ = run(capsys, *args)
    assert out2 == out and (tmp_path / "summary.csv").read_bytes() == first


def test_env_demo(capsys):
    code, out, _ = run(capsys, "env-demo", "--experiment", "mini", "--seed", "3", "--steps", "5")
    assert code == 0
    assert out.count("\nt=") + out.startswith("t=") == 5
    assert run(capsys, "env-demo", "--experiment", "mini", "--seed", "3", "--steps", "5")[1] == out


@pytest.mark.parametrize("argv", [
    [], ["bogus"], ["heuristic", "--strategy", "sideways"], ["train", "--agent", "dqn"],
    ["heuristic", "--experiment", "9"], ["heuristic", "--unknown-flag"],
    ["evaluate", "--experiment", "1"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert "error" in err


def test_runtime_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"HPACKPOL" + b"\x01\x00\x00\x00\x05\x00\x00\x00")
    code, _, err = run(capsys, "evaluate", "--checkpoint", str(bad), "--experiment", "1")
    assert code == 2 and "runtime error" in err


def test_help_lists_flags():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    assert set(sub) == {"heuristic", "train", "evaluate", "replay", "report", "env-demo"}
    assert "--strategy" in sub["heuristic"].format_help()
    for flag in ("--agent", "--steps", "--seed", "--out", "--plot"):
        assert flag in sub["train"].format_help()
    assert "--deterministic" in sub["evaluate"].format_help()
    assert "--seeds" in sub["report"].format_help()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "heightpack", "heuristic", "--experiment", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "coverage 100.00/100.00" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "heightpack", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 1
