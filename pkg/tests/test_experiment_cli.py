import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from nashq.cli import main
from nashq.core import load_game
from nashq.envs import RandomGameSpec, generate_random_game
from nashq.equilibrium import SolverFailure
from nashq.experiment import ConfigError, compare_learners, load_config, parse_config
from nashq.learning.trace import CHECKPOINT_COLUMNS, TRACE_COLUMNS

SMALL_ENV = {"kind": "random_game", "d1": 2, "d2": 3, "d_s": 3, "seed": 4}


def write_config(path, **overrides):
    cfg = {"version": 1, "environment": SMALL_ENV, "n_steps": 400, "seed": 1}
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def files_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_run_writes_artifacts(tmp_path):
    cfg = write_config(tmp_path / "c.json", checkpoint_every=100)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert names == {"config.resolved.json", "trace.csv", "checkpoints.csv", "certificate.json",
                     "tables.json"}
    trace = read_csv(out / "trace.csv")
    assert tuple(trace[0]) == TRACE_COLUMNS and len(trace) == 401
    ck = read_csv(out / "checkpoints.csv")
    assert tuple(ck[0]) == CHECKPOINT_COLUMNS and [r[0] for r in ck[1:]] == ["100", "200", "300", "400"]
    cert = json.loads((out / "certificate.json").read_text())
    for key in ("gap_1", "gap_2", "tolerance", "passed", "reconstruction", "fingerprint"):
        assert key in cert
    assert cert["passed"] == (max(cert["gap_1"], cert["gap_2"]) <= cert["tolerance"])
    assert {"residual_1", "iterations_1"} <= set(cert["reconstruction"])
    tables = json.loads((out / "tables.json").read_text())
    assert np.array(tables["tables"][0]).shape == (3, 2)


def test_run_is_byte_identical_and_snapshot_reproduces(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["run", cfg, "--out", str(a)]) == 0
    assert main(["run", cfg, "--out", str(b)]) == 0
    assert files_bytes(a) == files_bytes(b)
    # the resolved snapshot alone regenerates everything
    assert main(["run", str(a / "config.resolved.json"), "--out", str(c)]) == 0
    assert files_bytes(a) == files_bytes(c)


def test_zero_game_config(tmp_path):
    cfg = write_config(tmp_path / "z.json", environment={"kind": "canonical", "name": "zero"})
    out = tmp_path / "z"
    assert main(["run", cfg, "--out", str(out), "--require-pass"]) == 0
    cert = json.loads((out / "certificate.json").read_text())
    tables = json.loads((out / "tables.json").read_text())
    assert cert["gap_1"] == 0.0 and cert["gap_2"] == 0.0
    assert not np.any(tables["tables"][0]) and not np.any(tables["tables"][1])


@pytest.mark.parametrize("bad, field", [
    ({"environment": dict(SMALL_ENV, gamma_1=1.2)}, "environment.gamma_1"),
    ({"n_steps": 0}, "n_steps"),
    ({"bogus": 1}, "bogus"),
    ({"learners": ["full_info", "partial_info"]}, "learners"),
    ({"version": 2}, "version"),
    ({"schedule": {"kind": "stairs"}}, "schedule"),
    ({"environment": {"kind": "json", "path": "missing.json"}}, "environment.path"),
])
def test_config_errors_name_the_field(tmp_path, capsys, bad, field):
    cfg = write_config(tmp_path / "bad.json", **bad)
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_syntax_error_reports_position(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "version": 1,\n  "n_steps": ,\n}')
    assert main(["run", str(p)]) == 2
    assert "broken.json:3:" in capsys.readouterr().err


def test_argparse_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["compare"]) == 2
    assert main(["verify", "a"]) == 2


def test_require_pass_and_solver_failure(tmp_path, monkeypatch):
    # matching pennies has no pure equilibrium, and after 5 steps the greedy
    # profile is pure, so certification must fail
    cfg = write_config(tmp_path / "c.json", n_steps=5, certify_tol=1e-6,
                       environment={"kind": "canonical", "name": "matching_pennies"})
    out = str(tmp_path / "o")
    assert main(["run", cfg, "--out", out, "--require-pass"]) == 4
    cert = json.loads((tmp_path / "o" / "certificate.json").read_text())
    assert not cert["passed"]
    assert main(["run", cfg, "--out", out]) == 0
    # the verify verb reaches the same verdict from the files
    game_path = str(tmp_path / "mp.json")
    assert main(["gen-game", cfg, "-o", game_path]) == 0
    tables = str(tmp_path / "o" / "tables.json")
    assert main(["verify", tables, game_path, "--tol", "1e-6", "--require-pass"]) == 4
    assert main(["verify", tables, game_path, "--tol", "1e-6"]) == 0

    import nashq.cli as cli

    def failing(cfg, out=None):
        raise SolverFailure("no equilibrium")

    monkeypatch.setattr(cli, "run_experiment", failing)
    assert main(["run", cfg, "--out", out]) == 3


def test_verify_verb(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    out = tmp_path / "run"
    assert main(["run", cfg, "--out", str(out)]) == 0
    game_path = tmp_path / "game.json"
    assert main(["gen-game", cfg, "-o", str(game_path)]) == 0
    cert_path = tmp_path / "cert.json"
    code = main(["verify", str(out / "tables.json"), str(game_path), "--tol", "0.05",
                 "-o", str(cert_path), "--require-pass"])
    run_cert = json.loads((out / "certificate.json").read_text())
    cert = json.loads(cert_path.read_text())
    assert cert["gap_1"] == run_cert["gap_1"] and cert["gap_2"] == run_cert["gap_2"]
    assert code == (0 if cert["passed"] else 4)
    assert cert["marginal_consistency"] == run_cert["marginal_consistency"]
    assert main(["verify", str(out / "tables.json"), str(game_path), "--tol", "-1"]) == 2
    assert main(["verify", str(tmp_path / "nope.json"), str(game_path)]) == 2


def test_gen_game_lossless(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "random_game", "seed": 12}))
    out = tmp_path / "g.json"
    assert main(["gen-game", str(spec), "-o", str(out)]) == 0
    g = load_game(out)
    ref = generate_random_game(RandomGameSpec(seed=12))
    assert np.array_equal(g.reward_1, ref.reward_1) and np.array_equal(g.transition, ref.transition)
    # a json environment pinned by hash reproduces the generated game
    cfg = write_config(tmp_path / "j.json",
                       environment={"kind": "json", "path": "g.json", "sha256": g.fingerprint()})
    assert load_config(cfg).environment["kind"] == "json"
    bad = write_config(tmp_path / "k.json",
                       environment={"kind": "json", "path": "g.json", "sha256": "0" * 64})
    with pytest.raises(ConfigError):
        load_config(bad)


def test_compare_outputs(tmp_path):
    a = write_config(tmp_path / "a.json", name="partial")
    b = write_config(tmp_path / "b.json", name="full", learners=["full_info", "full_info"])
    out = tmp_path / "cmp"
    assert main(["compare", a, b, "--seeds", "2", "--out", str(out)]) == 0
    runs = read_csv(out / "runs.csv")
    assert runs[0][:4] == ["config", "seed", "gap_1", "gap_2"] and len(runs) == 5
    summary = read_csv(out / "summary.csv")
    assert [r[0] for r in summary[1:]] == ["partial", "full"]
    assert (out / "timing.csv").exists()
    first = (out / "runs.csv").read_bytes()
    assert main(["compare", a, b, "--seeds", "2", "--out", str(out)]) == 0
    assert (out / "runs.csv").read_bytes() == first
    assert main(["compare", a, "--seeds", "0"]) == 2


def test_compare_rejects_mixed_environments(tmp_path):
    a = load_config(write_config(tmp_path / "a.json"))
    b = load_config(write_config(tmp_path / "b.json", environment=dict(SMALL_ENV, seed=5)))
    with pytest.raises(ConfigError):
        compare_learners([a, b], 1, str(tmp_path))


def test_random_pair_on_zero_game(tmp_path):
    cfg = parse_config({"version": 1, "environment": {"kind": "canonical", "name": "zero"},
                        "learners": ["random", "random"], "n_steps": 200})
    rows, _ = compare_learners([cfg], 1, str(tmp_path))
    assert rows[0][7] == 0.0 and rows[0][8] == 0.0


def test_dominant_action_beats_random_baseline(tmp_path):
    env = {"kind": "canonical", "name": "prisoners_dilemma"}
    learner = parse_config({"version": 1, "environment": env, "n_steps": 2000, "name": "learner",
                            "learners": ["partial_info", "random"]})
    baseline = parse_config({"version": 1, "environment": env, "n_steps": 2000, "name": "base",
                             "learners": ["random", "random"]})
    compare_learners([learner, baseline], 3, str(tmp_path))
    summary = read_csv(tmp_path / "summary.csv")
    col = summary[0].index("late_reward_1_mean")
    late = {line[0]: float(line[col]) for line in summary[1:]}
    assert late["learner"] >= late["base"]


def test_episodic_gridworld_config(tmp_path):
    cfg = write_config(tmp_path / "g.json", n_steps=None, n_episodes=30,
                       environment={"kind": "gridworld", "width": 3, "height": 3,
                                    "start_1": [0, 0], "start_2": [2, 0], "target_1": [2, 2],
                                    "target_2": [0, 2]},
                       observation=["full", "blind"], eval_rollouts=5)
    raw = json.loads(open(cfg).read())
    raw.pop("n_steps")
    open(cfg, "w").write(json.dumps(raw))
    parsed = load_config(cfg)
    assert parsed.checkpoint_every == 100 and parsed.schedule == {"kind": "constant", "value": 0.5}
    out = tmp_path / "grid"
    assert main(["run", cfg, "--out", str(out)]) == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["evaluation"]["rollouts"] == 5
    assert len(read_csv(out / "trace.csv")) == 31


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path / "c.json", n_steps=50)
    proc = subprocess.run([sys.executable, "-m", "nashq", "run", cfg, "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.count("\n") == 1
