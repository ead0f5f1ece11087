from __future__ import annotations

from intentdefense.decision import OraclePlanner
from intentdefense.report import format_table, render_figures, round_rows, summary_rows
from intentdefense.simulation.env import run_episode

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def oracle_trace(scenario, seed=7):
    return run_episode(scenario, OraclePlanner(scenario.planner["oracle"]), seed)


def test_figures_written(fig4, tmp_path):
    paths = render_figures(oracle_trace(fig4), tmp_path / "out")
    assert [p.name for p in paths] == [
        "fig4_oracle_7_rewards.png", "fig4_oracle_7_belief.png", "fig4_oracle_7_conditions.png"]
    for p in paths:
        assert p.read_bytes()[:8] == PNG_MAGIC and p.stat().st_size > 1000


def test_figures_reproducible(pam, tmp_path):
    trace = oracle_trace(pam)
    first = [p.read_bytes() for p in render_figures(trace, tmp_path / "a")]
    second = [p.read_bytes() for p in render_figures(trace, tmp_path / "b")]
    assert first == second


def test_prefix(dns, tmp_path):
    paths = render_figures(oracle_trace(dns), tmp_path, prefix="x")
    assert all(p.name.startswith("x_") for p in paths)


def test_round_rows_cover_every_round(fig4):
    trace = oracle_trace(fig4)
    rows = round_rows(trace)
    assert [r["round"] for r in rows] == [r["round"] for r in trace.records]
    assert {"metric", "value"} <= set(summary_rows(trace)[0])


def test_format_table():
    text = format_table([{"a": 1, "b": 0.123456}, {"a": None, "b": "long value"}])
    lines = text.splitlines()
    assert lines[0].split() == ["a", "b"]
    assert lines[2].split() == ["1", "0.1235"]
    assert lines[3].split() == ["-", "long", "value"]
    assert format_table([]) == "(no rows)\n"
