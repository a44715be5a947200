"""Framework selection: hard filters on functionality, then ordering by resource priority.

Branch order (a reconstruction; only two paths of the original tree are
published): setting and model kind, deployment tier, each privacy need,
differential privacy, ML backend.  Survivors are ordered by the ordinal
performance tags for (setting, model) in the requested priority order,
then by DP capability when the DP answer is "unsure", then by name.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import yaml

from ..errors import InvalidSpec, NoMatch
from .matrix import FeatureMatrix

SETTINGS = ("horizontal", "vertical")
MODELS = ("regression", "neural_network", "tree")
TIERS = ("single_host", "multi_host", "cross_device")
RESOURCES = ("time", "communication", "memory")
DP_ANSWERS = ("yes", "no", "unsure")
_MODEL_ALIASES = {"nn": "neural_network", "neural network": "neural_network", "tree-based": "tree",
                  "gbdt": "tree", "lr": "regression"}


@dataclass
class Requirement:
    setting: str
    model: str
    deployment: str = "single_host"
    privacy: list[str] = field(default_factory=list)
    priority: list[str] = field(default_factory=lambda: list(RESOURCES))
    backend: str | None = None
    dp: str = "unsure"

    def validate(self) -> None:
        if self.setting not in SETTINGS:
            raise InvalidSpec(f"setting must be one of {SETTINGS}")
        if self.model not in MODELS:
            raise InvalidSpec(f"model must be one of {MODELS}")
        if self.deployment not in TIERS:
            raise InvalidSpec(f"deployment must be one of {TIERS}")
        if sorted(self.priority) != sorted(RESOURCES):
            raise InvalidSpec(f"priority must be a permutation of {RESOURCES}")
        if self.dp not in DP_ANSWERS:
            raise InvalidSpec(f"dp must be one of {DP_ANSWERS}")


@dataclass
class Recommendation:
    framework: str
    rank: int
    trace: list[str]
    sort_key: tuple


def requirement_from_dict(raw: dict) -> Requirement:
    raw = dict(raw)
    model = str(raw.get("model", "")).lower()
    raw["model"] = _MODEL_ALIASES.get(model, model)
    prio = list(raw.get("priority", RESOURCES))
    # a partial ranking is completed with the remaining resources in default order
    raw["priority"] = prio + [r for r in RESOURCES if r not in prio]
    req = Requirement(**raw)
    req.validate()
    return req


def load_requirement(path: str | os.PathLike) -> Requirement:
    with open(path, encoding="utf-8") as fh:
        return requirement_from_dict(yaml.safe_load(fh) or {})


def _filter(survivors: list[str], matrix: FeatureMatrix, attr: str, label: str,
            trace: list[str]) -> list[str]:
    kept = [f for f in survivors if matrix.flag(f, attr) == "yes"]
    dropped = [f"{f} ({matrix.flag(f, attr)})" for f in survivors if f not in kept]
    trace.append(f"{label}: require {attr} = yes; kept {', '.join(kept) or 'none'}"
                 + (f"; dropped {', '.join(dropped)}" if dropped else ""))
    if not kept:
        rows = "; ".join(f"{f}: {attr} = {matrix.flag(f, attr)}" for f in survivors)
        raise NoMatch(f"no framework satisfies {label} ({rows})", trace)
    return kept


def select(req: Requirement, matrix: FeatureMatrix) -> list[Recommendation]:
    """Ranked frameworks meeting every hard constraint, each with its decision trace."""
    req.validate()
    trace: list[str] = []
    survivors = sorted(matrix.frameworks)
    survivors = _filter(survivors, matrix, f"model.{req.setting}.{req.model}",
                        f"{req.setting} setting with {req.model} models", trace)
    survivors = _filter(survivors, matrix, f"deployment.{req.deployment}", f"{req.deployment} deployment", trace)
    for need in sorted(req.privacy):
        attr = need if need.startswith("privacy.") else f"privacy.{need}"
        if attr not in matrix.attributes:
            raise InvalidSpec(f"unknown privacy requirement {need!r}")
        survivors = _filter(survivors, matrix, attr, f"privacy need {need}", trace)
    if req.dp == "yes":
        survivors = _filter(survivors, matrix, "dp.central", "differential privacy required", trace)
    elif req.dp == "unsure":
        trace.append("differential privacy unsure: no filter; DP-capable frameworks rank ahead on ties")
    else:
        trace.append("differential privacy not needed: no filter")
    if req.backend:
        want = req.backend.lower()
        kept = [f for f in survivors if want in (b.lower() for b in matrix.info(f, "ml_backend"))]
        dropped = [f for f in survivors if f not in kept]
        trace.append(f"ML backend {req.backend}: kept {', '.join(kept) or 'none'}"
                     + (f"; dropped {', '.join(dropped)}" if dropped else ""))
        if not kept:
            raise NoMatch(f"no surviving framework uses {req.backend} as an ML backend", trace)
        survivors = kept

    group = f"{req.setting}/{req.model}"
    trace.append(f"order by {' > '.join(req.priority)} using measured ranks for {group} (unmeasured last)")
    recs = []
    for f in survivors:
        ranks = [matrix.tag(f, group, factor) for factor in req.priority]
        dp_key = 0 if (req.dp != "unsure" or matrix.flag(f, "dp.central") == "yes") else 1
        key = tuple(math.inf if r is None else r for r in ranks) + (dp_key, f)
        shown = ", ".join(f"{factor} rank {'-' if r is None else r}" for factor, r in zip(req.priority, ranks))
        recs.append(Recommendation(f, 0, [], key + (shown,)))
    recs.sort(key=lambda r: r.sort_key[:-1])
    for i, r in enumerate(recs, 1):
        r.rank = i
        r.trace = trace + [f"#{i} {r.framework}: {r.sort_key[-1]}"
                           + ("" if req.dp != "unsure" else f", dp.central = {matrix.flag(r.framework, 'dp.central')}")]
        r.sort_key = r.sort_key[:-1]
    return recs


def format_recommendations(recs: list[Recommendation]) -> str:
    lines = ["decision trace:"]
    lines += [f"  {step}" for step in recs[0].trace[:-1]] if recs else []
    lines.append("ranking:")
    lines += [f"  {r.trace[-1]}" for r in recs]
    return "\n".join(lines)
