import json

import pytest

from apow.sim import cli
from apow.sim.config import ConfigError, SimConfig, load_config
from apow.sim.engine import MetricsReport, read_events, replay, run
from apow.sim.experiments import (
    experiment_no_reward_auditing, experiment_recursive_audit, experiment_timestamp_rolling, wilson_interval,
)

from helpers import SCENARIOS


def small(**changes):
    base = {
        "name": "small", "seed": 11, "rounds": 15, "d": 8, "share_difficulty": 3, "hash_scheme": "sha256",
        "unit_size": 4096, "external_hashrate": 32,
        "miners": [{"name": "h", "strategy": "honest", "hashrate": 32, "count": 2},
                   {"name": "w", "strategy": "withholder", "hashrate": 32}],
        "audit": {"coverage": 1.0, "max_age": 1000, "granule": 64},
        "penalty": {"ban": False},
    }
    base.update(changes)
    return SimConfig.from_dict(base)


# config

def test_count_expands_roster():
    cfg = small()
    assert [m.name for m in cfg.miners] == ["h0", "h1", "w"]


@pytest.mark.parametrize("changes", [
    {"share_difficulty": 9}, {"rounds": 0}, {"bogus": 1}, {"audit": {"coverage": 2}},
    {"audit": {"nope": 1}}, {"payout": {"scheme": "PROP"}},
    {"miners": [{"name": "a", "strategy": "selfish"}]}, {"miners": [{"name": "a", "hashrate": 0}]},
    {"miners": [{"name": "a"}, {"name": "a"}]}, {"miners": []},
    {"miners": [{"name": "c", "strategy": "colluder"}]},
    {"miners": [{"name": "w", "strategy": "withholder"}], "external_hashrate": 0},
])
def test_invalid_configs(changes):
    with pytest.raises(ConfigError):
        small(**changes)


def test_replace_with_dotted_keys():
    cfg = small().replace(**{"audit.coverage": 0.5, "rounds": 3})
    assert cfg.audit.coverage == 0.5 and cfg.rounds == 3
    with pytest.raises(ConfigError):
        small().replace(**{"audit.zzz": 1})


def test_shipped_scenarios_load():
    names = sorted(p.stem for p in SCENARIOS.glob("*.yaml"))
    assert {"all_honest", "withholder", "roller", "colluder", "recursive"} <= set(names)
    for n in names:
        assert load_config(SCENARIOS / f"{n}.yaml").name == n


# runs

@pytest.fixture(scope="module")
def small_run():
    return run(small())


def test_small_run_is_clean(small_run):
    report, sim = small_run
    assert report.ok, report["violations"]
    assert report["height"] == 15
    assert report["chain"]["blocks"] + report["chain"]["vblocks"] == 15
    assert set(report["guilty"]) <= {m for m, k in report["suppressed"].items() if k}
    assert report["detected"] <= report["suppressed_auditable"]
    assert report["suppressed"]["h0"] == report["suppressed"]["h1"] == 0


def test_determinism(small_run):
    report, sim = small_run
    again, sim2 = run(small())
    assert again.to_json() == report.to_json()
    assert sim2.event_log() == sim.event_log()
    other, _ = run(small(seed=12))
    assert other.to_json() != report.to_json()


def test_replay_from_written_log(small_run, tmp_path):
    report, sim = small_run
    path = tmp_path / "events.jsonl"
    path.write_text(sim.event_log())
    acct = replay(sim.cfg, read_events(path))
    assert acct.ledger.snapshot() == report["ledger"]


def test_events_reverify(small_run):
    _, sim = small_run
    kinds = {json.loads(line)["type"] for line in sim.event_log().splitlines()}
    assert {"template", "share", "block"} <= kinds


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert wilson_interval(0, 0) == (0.0, 1.0)


# experiments at small scale

def test_rolling_experiment_directions():
    cfg = small(miners=[{"name": "h", "hashrate": 32, "count": 2},
                        {"name": "r", "strategy": "roller", "hashrate": 32}], rounds=20,
                audit={"coverage": 0.5, "max_age": 1000, "granule": 64})
    res = experiment_timestamp_rolling(cfg)
    assert not res.violations
    rows = {r["rolling_allowed"]: r for r in res.rows}
    assert rows[True]["rolls"] > 0 and rows[True]["detected"] == 0
    assert rows[False]["rolls"] == 0 and rows[False]["rolls_refused"] > 0
    assert rows[False]["false_accusations"] == rows[True]["false_accusations"] == 0


def test_recursive_experiment_small():
    cfg = small(rounds=40, miners=[{"name": "h", "hashrate": 32, "count": 2},
                                   {"name": "v", "strategy": "vmining_withholder", "hashrate": 32}],
                audit={"coverage": 1.0, "recursive": True, "recursive_coverage": 1.0, "max_age": 1000, "granule": 64})
    res = experiment_recursive_audit(cfg)
    assert not res.violations
    row = res.rows[0]
    assert row["v_audited"] > 0 and row["v_detected"] == row["v_audited"]
    assert row["false_accusations"] == 0


def test_no_reward_experiment_small():
    cfg = small(miners=[{"name": "h", "hashrate": 32, "count": 3}],
                payout={"vblock_reward": 0}, chain={"vblocks": "none"})
    res = experiment_no_reward_auditing(cfg)
    assert not res.violations
    assert res.rows[0]["vblocks"] == 0


# command line

def write_cfg(tmp_path, **changes):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(small(**changes).to_dict()))
    return path


def test_cli_run(tmp_path, capsys):
    cfg = write_cfg(tmp_path, rounds=5)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["violations"] == [] and report["height"] == 5
    assert (out / "events.jsonl").read_text().count("\n") > 10
    assert cli.main(["run", str(cfg), "--rounds", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["height"] == 3


def test_cli_errors(tmp_path, monkeypatch):
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("rounds: 0\nminers: [{name: a}]\n")
    assert cli.main(["run", str(bad)]) == 2
    cfg = write_cfg(tmp_path, rounds=2)
    monkeypatch.setattr(cli, "run", lambda c: (MetricsReport({"violations": ["conservation"]}), None))
    assert cli.main(["run", str(cfg)]) == 1


def test_cli_experiment(tmp_path):
    cfg = write_cfg(tmp_path, miners=[{"name": "h", "hashrate": 32, "count": 2}],
                    payout={"vblock_reward": 0}, chain={"vblocks": "none"})
    assert cli.main(["experiment", "no_reward", str(cfg), "--rounds", "5", "--out", str(tmp_path)]) == 0
    header = (tmp_path / "no_reward.csv").read_text().splitlines()[0]
    assert "vblocks" in header


def test_cli_analytics(capsys):
    assert cli.main(["analytics", "caching"]) == 0
    out = capsys.readouterr().out
    assert "3840000000000000000" in out.replace(".0", "").replace("e+18", "") or "3.84e+18" in out
    assert cli.main(["analytics", "escape", "--share-rate", "1", "--solution-rate", "0.0016",
                     "--lifetime", "30", "--trials", "1000"]) == 0
    assert "escape_probability" in capsys.readouterr().out
