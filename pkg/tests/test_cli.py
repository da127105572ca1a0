"""End-to-end tests of the command-line interface via subprocesses.

Each test drives `python -m rmdp.cli` exactly as a user would and checks
exit codes, JSON payloads, and CSV layouts.  Most tests pin
RMDP_BACKEND=numpy so the suite does not depend on JIT compilation; one
bench test runs under the default backend to cover that path too.
"""

import json

import numpy as np
import pytest

from rmdp import (
    LiquidationParams,
    build_liquidation,
    build_spiral,
    mdp_to_spec,
    spiral_state_id,
)

NP_ENV = {"RMDP_BACKEND": "numpy"}

SMALL = ["--z-min", "100", "--z-max", "110", "--z0", "105"]

TWO_CYCLE_SPEC = {
    "states": 3,
    "actions": 1,
    "discount": 0.9,
    "mask": [[0], [0], [0]],
    "transitions": [
        {"x": 0, "u": 0, "xp": 1, "p": 1.0, "r": 1.0},
        {"x": 1, "u": 0, "xp": 0, "p": 0.5, "r": 0.0},
        {"x": 1, "u": 0, "xp": 2, "p": 0.5, "r": 0.0},
        {"x": 2, "u": 0, "xp": 2, "p": 1.0, "r": 0.0},
    ],
}


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def test_solve_liquidation_rvi_payload(cli):
    proc = cli(
        "solve", "--domain", "liquidation", "--q-max", "5", *SMALL,
        env_extra=NP_ENV,
    )
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    params = LiquidationParams(q_max=5, z_min=100, z_max=110, z0=105)
    mdp, _, decomp = build_liquidation(params)
    assert len(payload["v"]) == mdp.state_count
    assert len(payload["policy"]) == mdp.state_count
    assert payload["stats"]["sweeps"] == 1
    assert payload["stats"]["converged"] is True
    sizes = mdp.mask_sizes()
    transient = np.ones(mdp.state_count, dtype=bool)
    transient[decomp.absorbing] = False
    assert payload["stats"]["q_updates"] == int(sizes[transient].sum())
    v = np.asarray(payload["v"])
    assert np.all(np.isfinite(v))
    assert np.all(v[decomp.absorbing] == 0.0)


def test_solve_spiral_value_and_policy(cli):
    proc = cli("solve", "--domain", "spiral", env_extra=NP_ENV)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    v = payload["v"]
    assert v[spiral_state_id(0, 0)] == pytest.approx(-4.0, abs=1e-12)
    assert v[spiral_state_id(2, 2)] == 0.0
    for x, y in ((2, 0), (2, 1), (2, 3)):
        assert payload["policy"][spiral_state_id(x, y)] == 4


def test_solve_writes_out_file(cli, tmp_path):
    out = tmp_path / "result.json"
    proc = cli(
        "solve", "--domain", "fig2a", "--out", str(out), env_extra=NP_ENV
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout == ""
    payload = json.loads(out.read_text())
    assert len(payload["v"]) == 4


def test_solve_each_solver_agrees_on_fig2b(cli):
    values = {}
    for solver in ("rvi", "qvi-random", "qvi-reversed", "bvi"):
        proc = cli(
            "solve", "--domain", "fig2b", "--solver", solver,
            "--discount", "0.9", env_extra=NP_ENV,
        )
        # fig2b ignores --discount (fixed chain); just check the solver runs.
        assert proc.returncode == 0, proc.stderr
        values[solver] = json.loads(proc.stdout)["v"]
    ref = np.asarray(values["rvi"])
    for solver, v in values.items():
        np.testing.assert_allclose(np.asarray(v), ref, rtol=0, atol=1e-8)


def test_solve_requires_exactly_one_model_source(cli, tmp_path):
    neither = cli("solve", env_extra=NP_ENV)
    assert neither.returncode == 2
    model = write_json(tmp_path / "m.json", TWO_CYCLE_SPEC)
    both = cli(
        "solve", "--model", model, "--domain", "spiral", env_extra=NP_ENV
    )
    assert both.returncode == 2


def test_solve_rvi_rejects_non_reductive_model(cli, tmp_path):
    model = write_json(tmp_path / "cycle.json", TWO_CYCLE_SPEC)
    proc = cli("solve", "--model", model, "--solver", "rvi", env_extra=NP_ENV)
    assert proc.returncode == 3
    assert "reductive" in proc.stderr.lower()


def test_qvi_still_solves_non_reductive_model(cli, tmp_path):
    model = write_json(tmp_path / "cycle.json", TWO_CYCLE_SPEC)
    proc = cli(
        "solve", "--model", model, "--solver", "qvi-random", env_extra=NP_ENV
    )
    assert proc.returncode == 0, proc.stderr
    v = json.loads(proc.stdout)["v"]
    assert np.all(np.isfinite(v))


def test_verify_reports_violations_on_cycle(cli, tmp_path):
    model = write_json(tmp_path / "cycle.json", TWO_CYCLE_SPEC)
    proc = cli("verify", "--model", model, env_extra=NP_ENV)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["reductive"] is False
    edges = {(rec["x"], rec["xp"]) for rec in payload["violations"]}
    assert edges == {(0, 1), (1, 0)}
    assert all(rec["kind"] for rec in payload["violations"])
    assert "order" not in payload


def test_verify_fig2b_payload(cli):
    proc = cli("verify", "--domain", "fig2b", env_extra=NP_ENV)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["reductive"] is True
    assert payload["violations"] == []
    assert sorted(payload["order"]) == [0, 1, 2, 3, 4]


def test_verify_model_file_roundtrip(cli, tmp_path):
    mdp, _, _ = build_spiral()
    model = write_json(tmp_path / "spiral.json", mdp_to_spec(mdp))
    proc = cli("verify", "--model", model, env_extra=NP_ENV)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["reductive"] is True
    assert sorted(payload["order"]) == list(range(25))


def test_broken_models_exit_2(cli, tmp_path):
    bad_sum = dict(TWO_CYCLE_SPEC)
    bad_sum["transitions"] = [
        {"x": 0, "u": 0, "xp": 1, "p": 0.9, "r": 0.0},
        {"x": 1, "u": 0, "xp": 2, "p": 1.0, "r": 0.0},
        {"x": 2, "u": 0, "xp": 2, "p": 1.0, "r": 0.0},
    ]
    model = write_json(tmp_path / "bad_sum.json", bad_sum)
    assert cli("verify", "--model", model, env_extra=NP_ENV).returncode == 2

    unknown = dict(TWO_CYCLE_SPEC, flavor="salted")
    model = write_json(tmp_path / "unknown.json", unknown)
    assert cli("verify", "--model", model, env_extra=NP_ENV).returncode == 2

    missing = str(tmp_path / "nope.json")
    assert cli("verify", "--model", missing, env_extra=NP_ENV).returncode == 2

    notjson = tmp_path / "garbage.json"
    notjson.write_text("{not json")
    assert cli("verify", "--model", str(notjson), env_extra=NP_ENV).returncode == 2


def test_bench_csv_layout(cli):
    proc = cli(
        "bench", "--q-max", "4,6", "--solvers", "rvi,bvi", "--repeats", "2",
        "--z-min", "100", "--z-max", "106", "--z0", "103",
        env_extra=NP_ENV,
    )
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.splitlines()
    assert lines[0] == "solver,q_max,states,q_updates,sweeps,wall_nanos,vmax_err"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 2 * 2 * 2
    for row in rows:
        assert row[0] in ("rvi", "bvi")
        assert int(row[1]) in (4, 6)
        assert int(row[2]) == (int(row[1]) + 1) * 7
        assert int(row[3]) > 0
        assert int(row[4]) >= 1
        assert int(row[5]) > 0
        if row[0] == "rvi":
            assert float(row[6]) == 0.0


def test_bench_default_backend_smoke(cli):
    proc = cli("bench", "--q-max", "4", "--solvers", "rvi", *SMALL)
    assert proc.returncode == 0, proc.stderr
    assert len(proc.stdout.splitlines()) == 2


def test_bench_without_rvi_is_rejected(cli):
    proc = cli("bench", "--solvers", "bvi", *SMALL, env_extra=NP_ENV)
    assert proc.returncode == 2
    assert "rvi" in proc.stderr


def test_bench_sweep_starved_solver_exits_4(cli):
    proc = cli(
        "bench", "--q-max", "6", "--solvers", "rvi,qvi-reversed",
        "--max-sweeps", "2", "--z-min", "100", "--z-max", "106", "--z0", "103",
        env_extra=NP_ENV,
    )
    assert proc.returncode == 4


def test_simulate_csv_is_deterministic_and_absorbs(cli):
    args = (
        "simulate", "--q-max", "5", *SMALL, "--w1", "0.1,0.2",
        "--trials", "50", "--horizon", "60", "--seed", "3",
    )
    first = cli(*args, env_extra=NP_ENV)
    second = cli(*args, env_extra=NP_ENV)
    assert first.returncode == 0, first.stderr
    assert first.stdout == second.stdout
    lines = first.stdout.splitlines()
    assert lines[0] == "w1,t,mean_q,stderr_q"
    assert len(lines) == 1 + 2 * 61
    for w1 in (0.1, 0.2):
        block = [
            parts
            for parts in (ln.split(",") for ln in lines[1:])
            if float(parts[0]) == w1
        ]
        assert len(block) == 61
        means = [float(r[2]) for r in block]
        assert means[0] == 5.0
        assert all(a >= b for a, b in zip(means, means[1:]))
        # every admissible action sells at least one unit, so inventory 5
        # is gone after at most five steps in every trial
        assert means[5] == 0.0
        assert float(block[-1][2]) == 0.0


def test_policy_grid_csv(cli):
    proc = cli(
        "policy-grid", "--q-max", "3",
        "--z-min", "100", "--z-max", "104", "--z0", "102",
        env_extra=NP_ENV,
    )
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.splitlines()
    assert lines[0] == "q,z,u,reachable"
    rows = [tuple(int(c) for c in ln.split(",")) for ln in lines[1:]]
    assert len(rows) == 4 * 5
    assert [(q, z) for q, z, _, _ in rows] == [
        (q, z) for q in range(4) for z in range(100, 105)
    ]
    for q, z, u, reach in rows:
        assert reach in (0, 1)
        if q == 0:
            assert u == 0
            assert reach == 1
        else:
            assert 1 <= u <= q
    start = [r for r in rows if (r[0], r[1]) == (3, 102)]
    assert start[0][3] == 1


def test_config_file_supplies_values_and_flags_override(cli, tmp_path):
    cfg = write_json(
        tmp_path / "cfg.json",
        {
            "q_max": "4",
            "solvers": "rvi",
            "repeats": 2,
            "z_min": 100,
            "z_max": 106,
            "z0": 103,
        },
    )
    from_config = cli("bench", "--config", cfg, env_extra=NP_ENV)
    assert from_config.returncode == 0, from_config.stderr
    rows = from_config.stdout.splitlines()[1:]
    assert len(rows) == 2
    assert all(r.split(",")[1] == "4" for r in rows)

    overridden = cli(
        "bench", "--config", cfg, "--repeats", "1", "--q-max", "5",
        env_extra=NP_ENV,
    )
    assert overridden.returncode == 0, overridden.stderr
    rows = overridden.stdout.splitlines()[1:]
    assert len(rows) == 1
    assert rows[0].split(",")[1] == "5"


def test_shrink_multiplicative_payload(cli):
    args = ("shrink", "--trials", "200", "--steps", "80", "--seed", "5")
    first = cli(*args, env_extra=NP_ENV)
    second = cli(*args, env_extra=NP_ENV)
    assert first.returncode == 0, first.stderr
    assert first.stdout == second.stdout
    payload = json.loads(first.stdout)
    assert payload["mode"] == "Multiplicative"
    assert payload["trials"] == 200
    assert payload["steps"] == 80
    assert payload["delta"] is None
    assert payload["all_monotone"] is True
    assert 0.0 <= payload["max_final"] < 1e-10
    assert 0.0 <= payload["mean_final"] <= payload["max_final"]


def test_shrink_delta_interval_hits_zero(cli):
    proc = cli(
        "shrink", "--mode", "DeltaInterval", "--delta", "0.25",
        "--trials", "100", "--steps", "50", env_extra=NP_ENV,
    )
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["mode"] == "DeltaInterval"
    assert payload["delta"] == 0.25
    assert payload["max_final"] == 0.0


def test_shrink_bad_delta_exits_2(cli):
    proc = cli(
        "shrink", "--mode", "DeltaInterval", "--delta", "-0.5",
        env_extra=NP_ENV,
    )
    assert proc.returncode == 2


def test_unknown_subcommand_exits_2(cli):
    proc = cli("transmogrify", env_extra=NP_ENV)
    assert proc.returncode == 2


def test_out_files_use_unix_newlines(cli, tmp_path):
    out = tmp_path / "bench.csv"
    proc = cli(
        "bench", "--q-max", "4", "--solvers", "rvi", *SMALL,
        "--out", str(out), env_extra=NP_ENV,
    )
    assert proc.returncode == 0, proc.stderr
    raw = out.read_bytes()
    assert b"\r" not in raw
    assert raw.endswith(b"\n")
