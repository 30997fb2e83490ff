"""On-disk cache of constructed modules and field blocks.

Modules are stored as JSON (exact entries as strings) keyed by a hash of
algebra data, weight label, cutoff and numeric mode. Field blocks are stored
as ``.npz`` archives next to them.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import _linalg
from .algebra import AlgebraData, format_label
from .module import BasisState, FockModule, GradedModule, _Level

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


def module_key(alg: AlgebraData, label, cutoff: int, mode: str, kind: str = "graded") -> str:
    blob = json.dumps([alg.digest, format_label(label), alg.level, int(cutoff), mode, kind,
                       FORMAT_VERSION]).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def _mat_to_json(B, m):
    r, c = B.shape(m)
    if B.exact:
        return {"shape": [r, c], "entries": [str(x) for x in m.entries()]}
    return {"shape": [r, c], "entries": [repr(float(x)) for x in np.asarray(m).ravel()]}


def _mat_from_json(B, doc):
    r, c = doc["shape"]
    if B.exact:
        import flint

        vals = []
        for s in doc["entries"]:
            num, _, den = s.partition("/")
            vals.append(flint.fmpq(int(num), int(den or 1)))
        return flint.fmpq_mat(r, c, vals)
    return np.array([float(x) for x in doc["entries"]], dtype=float).reshape(r, c)


def module_to_json(mod: GradedModule) -> dict:
    B = mod.B
    levels = []
    for lv in mod._levels:
        levels.append({
            "states": [[list(map(list, s.decoration)), s.hw_component, s.canonical] for s in lv.states],
            "sel": [list(x) if x is not None else None for x in lv.sel],
            "gram": _mat_to_json(B, lv.gram),
            "creators": [[list(k), _mat_to_json(B, v)] for k, v in lv.creators.items()],
            "annihilators": [[list(k), _mat_to_json(B, v)] for k, v in lv.annihilators.items()],
            "zero": [[k, _mat_to_json(B, v)] for k, v in lv.zero.items()],
            "raw_candidates": lv.raw_candidates,
        })
    return {"format": FORMAT_VERSION, "summary": mod.summary(), "algebra": mod.alg.to_json(),
            "label": format_label(mod.label), "cutoff": mod.cutoff, "mode": mod.mode, "levels": levels}


def module_from_json(alg: AlgebraData, doc: dict) -> GradedModule:
    mod = GradedModule(alg, doc["label"], doc["cutoff"], doc["mode"])
    B = mod.B
    mod._levels = []
    for lv in doc["levels"]:
        states = [BasisState(mod.label, comp, tuple(tuple(x) for x in deco), canon)
                  for deco, comp, canon in lv["states"]]
        new = _Level(states, [tuple(x) if x is not None else None for x in lv["sel"]],
                     _mat_from_json(B, lv["gram"]), raw_candidates=lv["raw_candidates"])
        new.creators = {tuple(k): _mat_from_json(B, v) for k, v in lv["creators"]}
        new.annihilators = {tuple(k): _mat_from_json(B, v) for k, v in lv["annihilators"]}
        new.zero = {int(k): _mat_from_json(B, v) for k, v in lv["zero"]}
        mod._levels.append(new)
    return mod


class ModuleCache:
    """Directory-backed cache; ``hits`` and ``builds`` count what happened."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.builds = 0

    def path(self, key: str, suffix: str = ".json") -> Path:
        return self.root / f"{key}{suffix}"

    def graded_module(self, alg: AlgebraData, label, cutoff: int, mode: str = "rational",
                      build_to: int | None = None) -> GradedModule:
        key = module_key(alg, label, cutoff, mode)
        p = self.path(key)
        target = cutoff if build_to is None else build_to
        if p.exists():
            mod = module_from_json(alg, json.loads(p.read_text()))
            if mod.built_levels() >= target:
                self.hits += 1
                return mod
        else:
            mod = GradedModule(alg, label, cutoff, mode)
        mod.ensure(target)
        self.builds += 1
        p.write_text(json.dumps(module_to_json(mod), sort_keys=True))
        log.info("cached module %s at %s", format_label(label), p)
        return mod

    def fock_module(self, alg: AlgebraData, label, cutoff: int, mode: str = "rational") -> FockModule:
        key = module_key(alg, label, cutoff, mode, kind="fock")
        p = self.path(key)
        mod = FockModule(alg, label, cutoff, mode)
        if p.exists():
            self.hits += 1
        else:
            self.builds += 1
            p.write_text(json.dumps({"format": FORMAT_VERSION, "summary": mod.summary()}, sort_keys=True))
        return mod

    def module(self, alg: AlgebraData, label, cutoff: int, mode: str = "rational", fast: bool = True):
        if alg.kind == "heisenberg" and fast:
            return self.fock_module(alg, label, cutoff, mode)
        return self.graded_module(alg, label, cutoff, mode)

    def save_blocks(self, key: str, modes, max_level: int):
        arrays = {f"b_{lt}_{ls}": modes.block(lt, ls)
                  for lt in range(max_level + 1) for ls in range(max_level + 1)}
        np.savez(self.path(key, ".npz"), **arrays)

    def load_blocks(self, key: str, modes) -> bool:
        p = self.path(key, ".npz")
        if not p.exists():
            return False
        with np.load(p) as data:
            for name in data.files:
                _, lt, ls = name.split("_")
                k = getattr(modes.spec, "component", 0)
                if isinstance(modes._blocks, dict):
                    modes._blocks[(int(lt), int(ls), k) if hasattr(modes, "rep") else (int(lt), int(ls))] = data[name]
        self.hits += 1
        return True

    def file_digest(self, key: str, suffix: str = ".json") -> str | None:
        p = self.path(key, suffix)
        if not p.exists():
            return None
        return hashlib.sha256(p.read_bytes()).hexdigest()[:16]


def field_key(spec, cutoff: int, mode: str, route: str) -> str:
    blob = json.dumps([spec.to_json(), int(cutoff), mode, route, FORMAT_VERSION], sort_keys=True).encode()
    return "field-" + hashlib.sha256(blob).hexdigest()[:20]
