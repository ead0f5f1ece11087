from __future__ import annotations

import json
import subprocess
import sys

import pytest

from intentdefense.cli import main
from intentdefense.simulation.env import EpisodeTrace

from helpers import scenario_intents

BAD_KB = """\
property produces offensive Generate
artifact File requires path
offensive_technique T1 "Thing" {
    produces Ghost;
}
"""


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestExitCodes:
    def test_run_happy_path(self, capsys):
        code, out, _ = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "greedy", "--seed", "7")
        assert code == 0
        lines = [json.loads(line) for line in out.splitlines()]
        assert lines[0]["type"] == "header" and lines[-1]["type"] == "metrics"
        assert all(line["schema"] == "intentdefense.trace/1" for line in lines)

    def test_unknown_flag(self, capsys):
        code, out, err = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--bogus")
        assert code == 2 and out == ""
        assert "usage:" in err and "--planner" in err

    def test_missing_subcommand(self, capsys):
        code, _, err = run_cli(capsys)
        assert code == 2 and "usage:" in err

    def test_dangling_reference(self, capsys, tmp_path):
        kb = tmp_path / "bad.kb"
        kb.write_text(BAD_KB)
        code, out, err = run_cli(capsys, "ontology", "validate", str(kb))
        assert code == 1
        assert "Ghost" in err
        assert json.loads(out)["valid"] is False

    def test_valid_kb(self, capsys):
        code, out, _ = run_cli(capsys, "ontology", "validate", "fig3.kb")
        assert code == 0 and json.loads(out) == {"kb": "fig3.kb", "valid": True, "violations": []}

    def test_missing_file_is_error(self, capsys, tmp_path):
        code, out, err = run_cli(capsys, "replay", str(tmp_path / "nope.jsonl"))
        assert code == 1 and out == "" and err.startswith("error:")

    def test_bad_scenario(self, capsys):
        code, _, err = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--override", '{"horizon": 0}')
        assert code == 1 and "horizon" in err

    def test_q_without_policy(self, capsys):
        code, _, err = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "q")
        assert code == 2 and "--policy" in err

    def test_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "intentdefense", "--nope"], capture_output=True, text=True)
        assert proc.returncode == 2 and proc.stdout == ""


class TestQueries:
    def test_eqclass(self, capsys):
        code, out, _ = run_cli(capsys, "ontology", "query", "eqclass", "--kb", "fig3.kb", "--dt", "HostReboot")
        assert code == 0 and "ProcessTermination" in json.loads(out)["equivalence_class"]

    def test_counters(self, capsys):
        code, out, _ = run_cli(capsys, "ontology", "query", "counters", "--ot", "T1568",
                               "--property", "produces", "--artifact", "OutboundInternetDNSLookupTraffic")
        assert code == 0
        assert "DNSDenylisting" in {row["defensive"] for row in json.loads(out)}

    def test_counters_half_restriction(self, capsys):
        code, _, _ = run_cli(capsys, "ontology", "query", "counters", "--ot", "T1568", "--property", "produces")
        assert code == 2

    def test_unknown_technique(self, capsys):
        code, _, err = run_cli(capsys, "ontology", "query", "counters", "--ot", "T9999")
        assert code == 1 and "T9999" in err

    def test_table_format(self, capsys):
        code, out, _ = run_cli(capsys, "ontology", "query", "eqclass", "--dt", "ProcessTermination",
                               "--format", "table")
        assert code == 0 and out.splitlines()[0].split() == ["member"]


class TestIntentDerive:
    def test_sorted_and_deterministic(self, capsys, tmp_path, fig4):
        alerts = [
            {"id": "a1", "technique_id": "T1053.003",
             "metadata": {"host": "srv1", "job": "maljob", "script_path": "/tmp/malicious.sh"}},
            {"id": "a2", "technique_id": "T1568",
             "metadata": {"host": "srv1", "process": "malicious.sh", "dest_domain": "c2.malicious.com"}},
        ]
        path = tmp_path / "obs.json"
        path.write_text(json.dumps(alerts))
        code, out, _ = run_cli(capsys, "intent", "derive", "--scenario", "fig4.scenario", "--observation", str(path))
        assert code == 0
        rows = json.loads(out)
        assert {r["dt"] for r in rows} >= {"NetworkTrafficFiltering", "FileEviction"}
        code2, out2, _ = run_cli(capsys, "intent", "derive", "--scenario", "fig4.scenario", "--observation", str(path))
        assert out2 == out

    def test_malformed_alert(self, capsys, tmp_path):
        path = tmp_path / "obs.json"
        path.write_text('[{"id": "a1"}]')
        code, out, err = run_cli(capsys, "intent", "derive", "--scenario", "fig4.scenario", "--observation", str(path))
        assert code == 1 and out == "" and "technique_id" in err

    def test_needs_source(self, capsys, tmp_path):
        path = tmp_path / "obs.json"
        path.write_text("[]")
        code, _, _ = run_cli(capsys, "intent", "derive", "--observation", str(path))
        assert code == 2


class TestWorkflows:
    def test_run_reproducible(self, capsys, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for path in (a, b):
            code, out, _ = run_cli(capsys, "run", "--scenario", "pam.scenario", "--planner", "random",
                                   "--seed", "3", "--out", str(path))
            assert code == 0 and "mitigation_success" in json.loads(out)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_trace(self, capsys):
        _, first, _ = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "random", "--seed", "1")
        _, second, _ = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "random", "--seed", "2")
        assert first != second

    def test_default_seed_is_scenario_seed(self, capsys):
        _, implicit, _ = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "random")
        _, explicit, _ = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "random", "--seed", "7")
        assert implicit == explicit

    def test_replay_check(self, capsys, tmp_path):
        trace = tmp_path / "t.jsonl"
        run_cli(capsys, "run", "--scenario", "dns_denylist.scenario", "--planner", "greedy", "--out", str(trace))
        code, out, _ = run_cli(capsys, "replay", str(trace), "--check", "--scenario", "dns_denylist.scenario")
        assert code == 0 and "total_return" in json.loads(out)
        tampered = trace.read_text().replace('"reward":', '"reward": ', 1)
        trace.write_text(tampered)
        code, _, err = run_cli(capsys, "replay", str(trace), "--check", "--scenario", "dns_denylist.scenario")
        assert code == 1 and "diverged" in err

    def test_replay_check_needs_scenario(self, capsys, tmp_path):
        trace = tmp_path / "t.jsonl"
        run_cli(capsys, "run", "--scenario", "fig4.scenario", "--out", str(trace))
        code, _, _ = run_cli(capsys, "replay", str(trace), "--check")
        assert code == 2

    def test_train_then_evaluate(self, capsys, tmp_path):
        policy = tmp_path / "policy.json"
        code, out, _ = run_cli(capsys, "train", "--scenario", "fig4.scenario", "--episodes", "50",
                               "--seed", "1", "--out", str(policy))
        assert code == 0 and json.loads(out)["episodes"] == 50
        first = policy.read_bytes()
        run_cli(capsys, "train", "--scenario", "fig4.scenario", "--episodes", "50", "--seed", "1", "--out", str(policy))
        assert policy.read_bytes() == first
        code, out, _ = run_cli(capsys, "evaluate", "--scenario", "fig4.scenario", "--policy", str(policy),
                               "--episodes", "20", "--seed", "2")
        result = json.loads(out)
        assert code == 0 and result["planner"] == "q" and result["episodes"] == 20
        code, out, _ = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "q",
                               "--policy", str(policy), "--format", "json")
        assert code == 0 and "total_return" in json.loads(out)

    def test_evaluate_reproducible(self, capsys):
        argv = ("evaluate", "--scenario", "fig4.scenario", "--planner", "greedy", "--episodes", "10", "--seed", "5")
        _, a, _ = run_cli(capsys, *argv)
        _, b, _ = run_cli(capsys, *argv)
        assert a == b

    def test_enforce(self, capsys, tmp_path, fig4):
        intent = scenario_intents(fig4)["NetworkTrafficFiltering"]
        path = tmp_path / "intent.json"
        path.write_text(json.dumps(intent.to_dict()))
        code, out, _ = run_cli(capsys, "enforce", "--scenario", "fig4.scenario", "--intent", str(path))
        result = json.loads(out)
        assert code == 0 and result["status"]["status"] == "enforced"
        assert "c2.malicious.com" in result["infrastructure"]["block_rules"]

    def test_enforce_permission_failure(self, capsys, tmp_path, fig4):
        intent = scenario_intents(fig4)["FileEviction"]
        path = tmp_path / "intent.json"
        path.write_text(json.dumps(intent.to_dict()))
        override = json.dumps({"infrastructure": {"hosts": [{"name": "srv1", "attacker_privileged": True}]}})
        code, out, _ = run_cli(capsys, "enforce", "--scenario", "fig4.scenario", "--override", override,
                               "--intent", str(path))
        result = json.loads(out)
        assert code == 0
        assert (result["status"]["status"], result["status"]["reason"]) == ("failed", "permission")

    def test_report(self, capsys, tmp_path):
        trace = tmp_path / "t.jsonl"
        run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "oracle", "--out", str(trace))
        code, out, _ = run_cli(capsys, "report", str(trace), "--out", str(tmp_path / "figs"))
        figures = json.loads(out)["figures"]
        assert code == 0 and len(figures) == 3
        for f in figures:
            assert open(f, "rb").read(8) == b"\x89PNG\r\n\x1a\n"

    def test_run_table(self, capsys):
        code, out, _ = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "oracle", "--format", "table")
        assert code == 0 and "mitigation_success" in out

    def test_run_figures(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, "run", "--scenario", "fig4.scenario", "--planner", "oracle",
                               "--figures", str(tmp_path))
        assert code == 0
        EpisodeTrace.from_jsonl(out)
        assert len(list(tmp_path.glob("*.png"))) == 3
