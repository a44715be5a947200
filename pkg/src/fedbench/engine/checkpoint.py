"""Versioned JSON model checkpoints."""

from __future__ import annotations

import json
import os
from dataclasses import asdict

import numpy as np

from .gbdt import Tree, TreeEnsemble
from .models import DenseParams, GBDTParams, ModelSpec

FORMAT = "fedbench-model"
VERSION = 1


def model_to_dict(spec: ModelSpec, params) -> dict:
    out = {"format": FORMAT, "version": VERSION,
           "spec": {"kind": spec.kind, "hidden_layers": list(spec.hidden_layers),
                    "gbdt_params": asdict(spec.gbdt_params)}}
    if isinstance(params, DenseParams):
        out["dense"] = {"task": params.task, "shapes": [list(s) for s in params.shapes],
                        "values": params.flat().tolist()}
    else:
        out["ensemble"] = {"task": params.task, "num_classes": params.num_classes,
                           "trees": [{"output": t.output, "root": t.to_record()} for t in params.trees]}
    return out


def model_from_dict(obj: dict):
    if obj.get("format") != FORMAT or obj.get("version") != VERSION:
        raise ValueError("not a fedbench model checkpoint of a supported version")
    s = obj["spec"]
    spec = ModelSpec(s["kind"], list(s["hidden_layers"]), GBDTParams(**s["gbdt_params"]))
    if "dense" in obj:
        d = obj["dense"]
        shapes = [tuple(x) for x in d["shapes"]]
        skeleton = DenseParams([np.zeros(sh) for sh in shapes], [np.zeros(sh[1]) for sh in shapes], d["task"])
        return spec, skeleton.with_flat(np.array(d["values"], dtype=np.float64))
    e = obj["ensemble"]
    ens = TreeEnsemble(e["task"], e["num_classes"], spec.gbdt_params)
    ens.trees = [Tree.from_record(t["root"], t["output"]) for t in e["trees"]]
    return spec, ens


def save_model(path: str | os.PathLike, spec: ModelSpec, params) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(spec, params), fh)


def load_model(path: str | os.PathLike):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
