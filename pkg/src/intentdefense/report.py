"""Figures and tables for episode traces."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

from .simulation.env import EpisodeTrace, metrics  # noqa: E402

CONDITION_ORDER = ("persistence", "execution", "c2", "objective")
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    for ax in fig.axes[:1]:
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_rewards(trace: EpisodeTrace, path: Path) -> Path:
    rounds = [r["round"] for r in trace.records]
    rewards = np.array(trace.rewards, dtype=float)
    discounts = trace.discount ** np.arange(len(rewards))
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar(rounds, rewards, color="tab:blue", alpha=0.6, label="round reward")
    ax.plot(rounds, np.cumsum(rewards * discounts), color="tab:red", marker="o", ms=3,
            label="discounted return so far")
    ax.axhline(0.0, color="grey", lw=0.5)
    ax.set_xlabel("round")
    ax.set_ylabel("reward")
    ax.set_title(f"{trace.scenario} / {trace.planner} / seed {trace.seed}")
    ax.legend(loc="lower right", fontsize=8)
    return _save(fig, path)


def plot_belief(trace: EpisodeTrace, path: Path) -> Path:
    states = list(trace.records[0]["belief"]) if trace.records else []
    grid = np.array([[r["belief"][s] for s in states] for r in trace.records]).T if states else np.zeros((1, 1))
    fig, ax = plt.subplots(figsize=(6, 0.4 * max(len(states), 3) + 1.2))
    im = ax.imshow(grid, aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0, interpolation="nearest",
                   extent=(0.5, len(trace.records) + 0.5, len(states) - 0.5, -0.5))
    ax.set_yticks(range(len(states)), states, fontsize=7)
    ax.set_xlabel("round")
    ax.set_title("belief over abstract states")
    fig.colorbar(im, ax=ax, fraction=0.05)
    return _save(fig, path)


def plot_conditions(trace: EpisodeTrace, path: Path) -> Path:
    rounds = [r["round"] for r in trace.records]
    fig, ax = plt.subplots(figsize=(6, 2.6))
    for i, cond in enumerate(CONDITION_ORDER):
        active = [r["round"] for r in trace.records if r["conditions"][cond]]
        ax.scatter(active, [i] * len(active), marker="s", s=40, color="tab:red")
    acted = [r["round"] for r in trace.records if r["action"]["type"] != "noop"]
    ax.scatter(acted, [-1] * len(acted), marker="^", s=40, color="tab:green")
    ax.set_yticks(range(-1, len(CONDITION_ORDER)), ("action",) + CONDITION_ORDER)
    ax.set_xlim(0.5, max(rounds, default=1) + 0.5)
    ax.set_xlabel("round")
    ax.set_title("active attack conditions at round end")
    return _save(fig, path)


def render_figures(trace: EpisodeTrace, out_dir: str | Path, prefix: str | None = None) -> list[Path]:
    """Write reward, belief and condition figures; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = prefix or f"{trace.scenario}_{trace.planner}_{trace.seed}"
    return [
        plot_rewards(trace, out / f"{stem}_rewards.png"),
        plot_belief(trace, out / f"{stem}_belief.png"),
        plot_conditions(trace, out / f"{stem}_conditions.png"),
    ]


def format_table(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    """Plain aligned text table."""
    if not rows:
        return "(no rows)\n"
    columns = list(columns or rows[0].keys())
    cells = [[_cell(row.get(c)) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in cells]
    return "\n".join(lines) + "\n"


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    if value is None:
        return "-"
    return str(value)


def round_rows(trace: EpisodeTrace) -> list[dict]:
    rows = []
    for r in trace.records:
        action = r["action"]
        target = action.get("intent") or action.get("new")
        rows.append({
            "round": r["round"],
            "alerts": ",".join(a["technique_id"] for a in r["observation"]) or "-",
            "candidates": len(r["candidates"]),
            "action": action["type"] + (f":{target['dt']}" if target else ""),
            "reward": r["reward"],
            "active": ",".join(c for c in CONDITION_ORDER if r["conditions"][c]) or "-",
        })
    return rows


def summary_rows(trace: EpisodeTrace) -> list[dict]:
    return [{"metric": k, "value": v} for k, v in metrics(trace).items()]
