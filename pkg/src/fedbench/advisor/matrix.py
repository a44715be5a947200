"""The framework feature matrix: functionality and usability flags plus ordinal performance tags."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import SchemaError

FLAG_VALUES = ("yes", "no", "claimed-but-broken", "n/a")
FORMAT = "fedbench-feature-matrix"


@dataclass
class FeatureMatrix:
    attributes: list[str]
    info_fields: list[str]
    tag_factors: list[str]
    frameworks: dict[str, dict]

    def names(self) -> list[str]:
        return sorted(self.frameworks)

    def flag(self, framework: str, attribute: str) -> str:
        return self.frameworks[framework]["flags"][attribute]

    def info(self, framework: str, field: str):
        return self.frameworks[framework]["info"][field]

    def tag(self, framework: str, group: str, factor: str) -> int | None:
        return self.frameworks[framework].get("tags", {}).get(group, {}).get(factor)

    def without(self, framework: str) -> "FeatureMatrix":
        fws = {k: v for k, v in self.frameworks.items() if k != framework}
        return FeatureMatrix(list(self.attributes), list(self.info_fields), list(self.tag_factors), fws)

    def to_dict(self) -> dict:
        return {"format": FORMAT, "version": 1, "attributes": list(self.attributes),
                "info_fields": list(self.info_fields), "tag_factors": list(self.tag_factors),
                "frameworks": copy.deepcopy(self.frameworks)}


def matrix_from_dict(obj: dict) -> FeatureMatrix:
    for key in ("attributes", "info_fields", "tag_factors", "frameworks"):
        if key not in obj:
            raise SchemaError(f"matrix lacks top-level field {key!r}")
    if obj.get("format") != FORMAT:
        raise SchemaError(f"not a {FORMAT} file")
    attrs, info, factors = obj["attributes"], obj["info_fields"], obj["tag_factors"]
    for name, row in obj["frameworks"].items():
        flags = row.get("flags", {})
        for a in attrs:
            if a not in flags:
                raise SchemaError(f"{name}: missing attribute {a!r}")
            if flags[a] not in FLAG_VALUES:
                raise SchemaError(f"{name}: {a} = {flags[a]!r} is not one of {FLAG_VALUES}")
        extra = set(flags) - set(attrs)
        if extra:
            raise SchemaError(f"{name}: undeclared attributes {sorted(extra)}")
        for f in info:
            if f not in row.get("info", {}):
                raise SchemaError(f"{name}: missing attribute {f!r}")
        for group, tags in row.get("tags", {}).items():
            for factor, rank in tags.items():
                if factor not in factors or not isinstance(rank, int) or rank < 1:
                    raise SchemaError(f"{name}: bad tag {group}/{factor} = {rank!r}")
    return FeatureMatrix(list(attrs), list(info), list(factors), copy.deepcopy(obj["frameworks"]))


def load_matrix(path: str | os.PathLike | None = None) -> FeatureMatrix:
    """Load and validate a matrix file; without a path, the shipped one."""
    if path is None:
        text = resources.files("fedbench.advisor").joinpath("data/frameworks.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"matrix is not valid JSON: {exc}") from exc
    return matrix_from_dict(obj)


def save_matrix(matrix: FeatureMatrix, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(matrix.to_dict(), indent=1) + "\n", encoding="utf-8")
