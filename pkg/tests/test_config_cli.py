import csv
import json
import subprocess
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from socialsense.cli import main, run_scenario
from socialsense.config import ParseError, ValidationError, parse_config

SCENARIOS = Path(str(resources.files("socialsense") / "scenarios"))

QD_SOCIAL = """\
scenario = qd-social
seed = 1
model.transition = 1 0; 0.05 0.95
model.obs_likelihood = 0.9 0.1; 0.1 0.9
model.costs = 4.57 5.57; 2.57 0
model.prior = 0.5 0.5
detection.delay = 1.05
detection.false_alarm = 3
"""


def write(tmp_path, text, name="s.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --- parsing -------------------------------------------------------------------------

def test_minimal_qd_social_config(tmp_path):
    cfg = parse_config(write(tmp_path, QD_SOCIAL))
    assert cfg.kind == "qd-social" and cfg.seed == 1
    np.testing.assert_array_equal(cfg.model.transition, [[1, 0], [0.05, 0.95]])
    assert cfg.values["solver.grid_size"] == 1000


def test_bad_transition_row_is_named(tmp_path):
    text = QD_SOCIAL.replace("0.05 0.95", "0.05 0.85")
    with pytest.raises(ValidationError) as exc:
        parse_config(write(tmp_path, text))
    assert any("transition row 2" in p for p in exc.value.problems)


def test_all_problems_are_reported(tmp_path):
    text = QD_SOCIAL.replace("0.05 0.95", "0.05 0.85").replace("= 0.5 0.5", "= 0.7 0.7")
    text = text.replace("detection.delay = 1.05", "detection.delay = -1")
    with pytest.raises(ValidationError) as exc:
        parse_config(write(tmp_path, text))
    probs = " | ".join(exc.value.problems)
    assert "transition row 2" in probs and "prior" in probs and "penalties" in probs


def test_unknown_kind_is_parse_error(tmp_path):
    with pytest.raises(ParseError) as exc:
        parse_config(write(tmp_path, "scenario = weather\n"))
    assert exc.value.lineno == 1


@pytest.mark.parametrize(
    "text,line",
    [
        ("scenario = game\nthis is not a pair\n", 2),
        ("scenario = game\nseed = 1\nseed = 2\n", 3),
        ("scenario = game\nmodel.bogus = 1\n", 2),
    ],
)
def test_parse_errors_carry_line(tmp_path, text, line):
    with pytest.raises(ParseError) as exc:
        parse_config(write(tmp_path, text))
    assert exc.value.lineno == line


def test_unparseable_value_is_validation_error(tmp_path):
    with pytest.raises(ValidationError, match="detection.delay"):
        parse_config(write(tmp_path, QD_SOCIAL.replace("1.05", "fast")))


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        parse_config(tmp_path / "nope.cfg")


def test_comments_and_blank_lines(tmp_path):
    text = "# header\n\n" + QD_SOCIAL.replace("seed = 1", "seed = 1  # trailing")
    assert parse_config(write(tmp_path, text)).seed == 1


def test_game_utility_size_checked(tmp_path):
    text = "scenario = game\ngame.actions = 2 2\ngame.utility.1 = 1 0 0 1\ngame.utility.2 = 1 0 0\ngame.steps = 10\n"
    with pytest.raises(ValidationError, match="game.utility.2"):
        parse_config(write(tmp_path, text))


# --- bundled scenarios ------------------------------------------------------------------

BUNDLED = {
    "qd-social.cfg": "qd-social",
    "qd-classic.cfg": "qd-classic",
    "cascade.cfg": "social-learning",
    "herding.cfg": "social-learning",
    "two-agent-loop.cfg": "reputation",
    "privacy.cfg": "privacy",
    "coordination.cfg": "game",
    "anticoordination.cfg": "game",
    "congestion.cfg": "game",
}


def test_every_bundled_config_is_covered():
    assert {p.name for p in SCENARIOS.glob("*.cfg")} == set(BUNDLED)


@pytest.mark.parametrize("name,kind", sorted(BUNDLED.items()))
def test_bundled_config_runs(tmp_path, name, kind):
    assert main([kind, "--config", str(SCENARIOS / name), "--out", str(tmp_path)]) == 0
    manifest = (tmp_path / "manifest.txt").read_text()
    for line in manifest.split("[outputs]")[1].split("[summary]")[0].strip().splitlines():
        fname, rows = line.split()
        _, body = read_csv(tmp_path / fname)
        assert int(rows.split("=")[1]) == len(body)
    assert (SCENARIOS / name).read_text().strip() in manifest


def test_qd_social_output(tmp_path):
    main(["qd-social", "--config", str(SCENARIOS / "qd-social.cfg"), "--out", str(tmp_path)])
    header, rows = read_csv(tmp_path / "policy.csv")
    assert header == ["pi2", "decision", "value"] and len(rows) == 1000
    d = [int(r[1]) for r in rows]
    assert sum(1 for a, b in zip(d, d[1:]) if (a, b) == (1, 2)) == 3
    assert all(format(float(r[2]), ".17g") == r[2] for r in rows)
    assert float(rows[500][0]) == np.linspace(0, 1, 1000)[500]


def test_qd_classic_output(tmp_path):
    main(["qd-classic", "--config", str(SCENARIOS / "qd-classic.cfg"), "--out", str(tmp_path)])
    _, rows = read_csv(tmp_path / "policy.csv")
    d = [int(r[1]) for r in rows]
    assert sum(1 for a, b in zip(d, d[1:]) if a != b) == 1


def test_two_agent_loop_graph_weights(tmp_path):
    main(["reputation", "--config", str(SCENARIOS / "two-agent-loop.cfg"), "--out", str(tmp_path)])
    header, rows = read_csv(tmp_path / "weights.csv")
    got = {int(r[0]): [int(v) for v in r[1:] if v != ""] for r in rows}
    assert got == {2: [0], 3: [1, 1], 4: [1, 1, 0], 5: [-1, -1, 1, 1]}
    header, trace = read_csv(tmp_path / "trace.csv")
    assert header[-1] == "achievable" and all(r[-1] == "1" for r in trace)


def test_cascade_and_herding_traces(tmp_path):
    main(["social-learning", "--config", str(SCENARIOS / "cascade.cfg"), "--out", str(tmp_path / "c")])
    main(["social-learning", "--config", str(SCENARIOS / "herding.cfg"), "--out", str(tmp_path / "h")])
    assert "cascade_at = none" not in (tmp_path / "c" / "manifest.txt").read_text()
    assert "cascade_at = none" in (tmp_path / "h" / "manifest.txt").read_text()
    header, rows = read_csv(tmp_path / "c" / "trace.csv")
    assert header == ["k", "x", "y", "a", "pi1", "pi2"] and len(rows) == 200
    assert {r[1] for r in rows} <= {"1", "2"}


def test_privacy_summary(tmp_path):
    main(["privacy", "--config", str(SCENARIOS / "privacy.cfg"), "--out", str(tmp_path)])
    text = (tmp_path / "manifest.txt").read_text()
    assert "revealed_after_herd = false" in text
    assert "herd_intervals = [0," in text and "] [" not in text


def test_game_regrets_checkpoints(tmp_path):
    main(["game", "--config", str(SCENARIOS / "coordination.cfg"), "--out", str(tmp_path)])
    header, rows = read_csv(tmp_path / "regrets.csv")
    assert header == ["n", "max_regret1", "max_regret2", "ce_violation"]
    assert [int(r[0]) for r in rows] == [100, 1000, 10000, 100000]


@pytest.mark.parametrize("name,kind", [("herding.cfg", "social-learning"), ("two-agent-loop.cfg", "reputation"), ("congestion.cfg", "game")])
def test_repeated_seed_gives_identical_bytes(tmp_path, name, kind):
    for d in ("a", "b"):
        assert main([kind, "--config", str(SCENARIOS / name), "--out", str(tmp_path / d), "--seed", "77"]) == 0
    for f in (tmp_path / "a").glob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_seed_override_changes_trace(tmp_path):
    cfg = str(SCENARIOS / "herding.cfg")
    main(["social-learning", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["social-learning", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "b" / "trace.csv").read_bytes()


# --- errors and exit codes ---------------------------------------------------------------

def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, QD_SOCIAL.replace("0.05 0.95", "0.05 0.85"))
    out = tmp_path / "out"
    assert main(["qd-social", "--config", str(cfg), "--out", str(out)]) == 2
    rec = json.loads(capsys.readouterr().err.strip())
    assert rec["kind"] == "config" and any("transition row 2" in p for p in rec["problems"])
    assert json.loads((out / "error.json").read_text()) == rec
    assert not (out / "manifest.txt").exists()


def test_kind_mismatch_is_config_error(tmp_path):
    assert main(["qd-classic", "--config", str(write(tmp_path, QD_SOCIAL)), "--out", str(tmp_path)]) == 2


def test_model_error_exit_code(tmp_path, capsys):
    # the full six-node graph is not achievable at node 6
    text = (SCENARIOS / "two-agent-loop.cfg").read_text().replace("reputation.nodes = 5", "reputation.nodes = 6")
    cfg = write(tmp_path, text)
    (tmp_path / "two-agent-loop.edges").write_text((SCENARIOS / "two-agent-loop.edges").read_text())
    out = tmp_path / "out"
    assert main(["reputation", "--config", str(cfg), "--out", str(out)]) == 3
    rec = json.loads(capsys.readouterr().err.strip())
    assert rec["kind"] == "model" and rec["type"] == "NotAchievable"
    assert not (out / "manifest.txt").exists() and not (out / "weights.csv").exists()


def test_console_script_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "socialsense.cli", "qd-classic", "--config", str(SCENARIOS / "qd-classic.cfg"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "manifest.txt").exists()


def test_run_scenario_returns_manifest(tmp_path):
    cfg = parse_config(SCENARIOS / "qd-classic.cfg")
    m = run_scenario(cfg, tmp_path)
    assert m.files == [("policy.csv", 1000), ("value.csv", 1000)]
    assert m.summary["switches_total"] == "1"
