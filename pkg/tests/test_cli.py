import io
import json

import pandas as pd
import pytest

from main import main

HONEST_RUN = """
[field]
order = 2^8

[protocol]
rounds = 6
bit = 1

[spacetime]
distance_m = 100000

[run]
seed = 3
mode = honest
"""

TIMING_AUDIT = HONEST_RUN.replace("mode = honest", "mode = timing-audit\ninjections = 3:2x")

CHSH3 = """
[field]
order = 3

[game]
alice_probs = 1/3, 1/3, 1/3
"""


@pytest.fixture(autouse=True)
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def last_error(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_no_command_prints_help(capsys):
    assert main([]) == 0
    assert "params" in capsys.readouterr().out


def test_params_headline(capsys):
    assert main(["params", "--epsilon-exp", "128", "--q", "2^340", "--distance", "100000", "--format", "csv"]) == 0
    frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert frame.rounds.iloc[0] == pytest.approx(3e12, rel=0.1)
    assert frame.total_years.iloc[0] == pytest.approx(30, rel=0.2)


def test_params_minimum_distance(capsys):
    assert main(["params", "--processing-time", "1e-6", "--signal-speed", "3e8"]) == 0
    assert "minimum distance for 1e-06s processing: 300 m" in capsys.readouterr().out


def test_run_and_verify_transcript(workspace, capsys):
    (workspace / "honest.ini").write_text(HONEST_RUN, encoding="utf-8")
    assert main(["run", "honest.ini", "--out", "honest.jsonl"]) == 0
    assert "verdict: accept" in capsys.readouterr().out

    assert main(["verify-transcript", "honest.jsonl"]) == 0
    assert "verdict: accept" in capsys.readouterr().out


def test_verify_reports_tampered_round(workspace, capsys):
    (workspace / "honest.ini").write_text(HONEST_RUN, encoding="utf-8")
    main(["run", "honest.ini", "--out", "honest.jsonl"])
    path = workspace / "honest.jsonl"
    lines = path.read_text(encoding="utf-8").splitlines()
    body = json.loads(lines[4])
    body["response_hex"] = format(int(body["response_hex"], 16) ^ 0x80, "02x")
    lines[4] = json.dumps(body, sort_keys=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    capsys.readouterr()

    assert main(["verify-transcript", "honest.jsonl"]) == 1
    out = capsys.readouterr().out
    assert "verdict: reject" in out
    assert "failing_round: 4" in out


def test_timing_audit_exit_code(workspace, capsys):
    (workspace / "audit.ini").write_text(TIMING_AUDIT, encoding="utf-8")
    assert main(["run", "audit.ini"]) == 1
    assert "violation_rounds: [3]" in capsys.readouterr().out


def test_attack_opt_with_replay(workspace, capsys):
    args = ["attack-opt", "--q", "2", "--rounds", "1", "--out", "witness.json", "--replay-config", "replay.ini", "--trials", "200"]
    assert main(args) == 0
    out = capsys.readouterr().out
    assert "epsilon: 1/2" in out
    assert "bound_holds: True" in out
    assert (workspace / "witness.json").exists()

    assert main(["run", "replay.ini"]) == 0
    assert "'expected': '3/4'" in capsys.readouterr().out


def test_game_value(workspace, capsys):
    (workspace / "chsh3.ini").write_text(CHSH3, encoding="utf-8")
    assert main(["game-value", "chsh3.ini", "--out", "chsh3.json"]) == 0
    assert "value: 2/3" in capsys.readouterr().out
    assert json.loads((workspace / "chsh3.json").read_text(encoding="utf-8"))["g"] == [0, 0, 1]


def test_missing_config_is_a_structured_error(capsys):
    assert main(["game-value", "missing.ini"]) == 2
    assert last_error(capsys)["error"] == "BAD_CONFIG"


def test_oversized_attack_is_refused(capsys):
    assert main(["attack-opt", "--q", "4", "--rounds", "3"]) == 2
    error = last_error(capsys)
    assert error["error"] == "INSTANCE_TOO_LARGE"
    assert error["q"] == 4


def test_invalid_field_order(capsys):
    assert main(["attack-opt", "--q", "6"]) == 2
    assert last_error(capsys)["error"] == "INVALID_INPUT"
