"""Side-by-side comparison of reports with best-per-column marks."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from ..errors import IncomparableScenarios
from .report import Report, mean_std

# column -> True when larger is better
COLUMNS = {
    "model": True,
    "total_training_time_s": False,
    "communication_rounds": False,
    "communication_bytes": False,
    "peak_memory_bytes": False,
}


@dataclass
class Row:
    label: str
    values: dict
    model_std: float
    repeats: int


@dataclass
class ComparisonTable:
    scenario: str
    metric: str | None
    rows: list[Row]
    best: dict[str, list[str]]
    note: str | None = None
    dominators: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "metric": self.metric, "note": self.note, "dominators": self.dominators,
            "best": self.best,
            "rows": [{"label": r.label, "repeats": r.repeats, "model_std": r.model_std, **r.values}
                     for r in self.rows],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["label", "repeats", "model_mean", "model_std", *list(COLUMNS)[1:]])
        for r in self.rows:
            w.writerow([r.label, r.repeats, r.values["model"], r.model_std,
                        *[r.values[c] for c in list(COLUMNS)[1:]]])
        return buf.getvalue()

    def to_text(self) -> str:
        head = ["framework", f"{self.metric or 'model'}", "time (s)", "rounds", "bytes", "peak mem (B)"]
        body = []
        for r in self.rows:
            cells = [r.label]
            for col in COLUMNS:
                v = r.values[col]
                if col == "model":
                    text = "-" if v is None else f"{v:.2f}±{r.model_std:.2f}"
                elif isinstance(v, float):
                    text = f"{v:.2f}"
                else:
                    text = str(v)
                if r.label in self.best.get(col, []):
                    text += " *"
                cells.append(text)
            body.append(cells)
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in [head] + body]
        lines.append("* best in column")
        if self.note:
            lines.append(self.note)
        return "\n".join(lines)


def _label(rep: Report) -> str:
    p = rep.provenance
    parts = [p.get("engine"), p.get("algorithm"), p.get("model")]
    base = "/".join(str(x) for x in parts if x) or p.get("run_id", "run")
    return f"{base}@{p['config_hash'][:8]}" if p.get("config_hash") else base


def compare(reports: list[Report]) -> ComparisonTable:
    """Reports sharing a config hash fold into one row (model perf as mean±std over all their repeats)."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    scenarios = {r.provenance.get("scenario") for r in reports}
    if len(scenarios) != 1:
        raise IncomparableScenarios(f"reports cover different scenarios: {sorted(map(str, scenarios))}")
    metrics = {r.model_perf.get("metric") for r in reports} - {None}
    metric = next(iter(metrics), None)
    groups: dict[str, list[Report]] = {}
    for rep in reports:
        key = rep.provenance.get("config_hash") or _label(rep) + str(len(groups))
        groups.setdefault(key, []).append(rep)
    rows = []
    seen: dict[str, int] = {}
    for reps in groups.values():
        values = [v for rep in reps for v in rep.model_perf.get("values", [])]
        mean, std = mean_std(values)
        sysvals = {c: sum(rep.system_perf[c] for rep in reps) / len(reps) for c in list(COLUMNS)[1:]}
        label = _label(reps[0])
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}#{seen[label]}"
        rows.append(Row(label, {"model": mean, **sysvals}, std, len(values)))

    higher_better = {"model": metric != "mse", **{c: False for c in list(COLUMNS)[1:]}}
    best: dict[str, list[str]] = {}
    for col, up in higher_better.items():
        vals = [r.values[col] for r in rows if r.values[col] is not None]
        if not vals:
            best[col] = []
            continue
        target = max(vals) if up else min(vals)
        best[col] = [r.label for r in rows if r.values[col] == target]
    dominators = [r.label for r in rows if all(r.label in best[c] for c in COLUMNS)]
    note = None if dominators else "no dominator: no row is best in every column"
    return ComparisonTable(str(next(iter(scenarios))), metric, rows, best, note, dominators)
