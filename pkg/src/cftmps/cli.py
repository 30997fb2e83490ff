"""Command-line front end: ``cftmps {module-build,correlator,convergence,bounds,verify}``.

Every subcommand reads one JSON config (``--config``); flags override its keys.
Exit codes: 0 success, 2 validation failure, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import format_label, load_algebra, validate_algebra
from .bounds import (PartitionTable, bond_dim_bound, counted_bond_dim, fixed_eps_sqrt_fit,
                     invert_bounds_to_scaling, log_bond_dim_bound, log_siegel_bound)
from .cache import ModuleCache, module_key
from .errors import (AlgebraValidationError, ChainError, CutoffError, IntegrabilityError,
                     NonConvergenceError, NotIntegrableError)
from .fields import PrimaryFieldSpec, build_mode_blocks, build_vertex_operator_blocks, cross_validate
from .module import FockModule, GradedModule, character_dimensions
from .mps import CorrelatorRequest, Workspace, assemble_mps, required_cutoff
from .oracle import free_boson_n_point, mode_resummation

log = logging.getLogger("cftmps")

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGENCE = 0, 2, 3

DEFAULTS = {
    "algebra": "heisenberg",
    "level": 1,
    "fields": [[1, 0], [-1, 0]],
    "chain": None,
    "d": 1.0,
    "d0": 0.0,
    "N": 12,
    "M": 30,
    "mode": "rational",
    "seed": 0,
    "out": "out",
    "module_cache": None,
    "jobs": 1,
    "d_grid": [0.5, 1.0, 2.0],
    "N_grid": [2, 4, 6, 8, 10, 12],
    "eps_grid": [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12],
    "mmax": 500,
    "dmax": 8,
    "labels": None,
    "memory_budget_gb": 64.0,
    "norm_ladder": None,
    "certify": True,
}


class ConfigError(ValueError):
    pass


def load_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(json.loads(Path(args.config).read_text()))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key in ("d_grid", "N_grid", "eps_grid"):
        if not cfg[key]:
            raise ConfigError(f"{key} must be nonempty")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps({k: v for k, v in cfg.items() if k not in ("out", "module_cache", "jobs")},
                      sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def stamp(cfg: dict) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg["seed"], "version": __version__}


def _algebra(cfg):
    alg = load_algebra(cfg["algebra"], cfg["level"])
    rep = validate_algebra(alg)
    rep.raise_if_failed()
    return alg


def _request(cfg, alg, **over) -> CorrelatorRequest:
    kw = dict(alg=alg, fields=cfg["fields"], d=float(cfg["d"]), d0=float(cfg["d0"]), N=int(cfg["N"]),
              M=int(cfg["M"]), chain=cfg["chain"], mode=cfg["mode"], norm_ladder=cfg["norm_ladder"],
              certify=bool(cfg["certify"]))
    kw.update(over)
    return CorrelatorRequest(**kw)


def _workspace(cfg) -> Workspace:
    cache = ModuleCache(cfg["module_cache"]) if cfg["module_cache"] else None
    return Workspace(cache)


def preflight(cfg, alg, n: int, N: int):
    """Refuse runs whose bond-dimension bound exceeds the memory budget."""
    need = 8.0 * bond_dim_bound(n, N, alg.dim, as_float=True)
    budget = float(cfg["memory_budget_gb"]) * 2**30
    if need > budget:
        raise ConfigError(f"bond-dimension bound predicts {need / 2**30:.3g} GiB, "
                          f"above the {cfg['memory_budget_gb']} GiB budget")


def _check_cutoff(req):
    need = required_cutoff(req)
    if req.M < need:
        raise ConfigError(f"module cutoff M={req.M} below the required bond level {need}")


def _write_json(path: Path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------


def cmd_module_build(cfg) -> dict:
    alg = _algebra(cfg)
    M = int(cfg["M"])
    labels = cfg["labels"]
    if labels is None:
        req = _request(cfg, alg)
        labels = [format_label(x) for x in dict.fromkeys(req.chain)]
        preflight(cfg, alg, req.n, req.N)
    cache = ModuleCache(cfg["module_cache"] or Path(cfg["out"]) / "cache")
    out = {"modules": [], **stamp(cfg)}
    for lab in labels:
        mod = cache.module(alg, lab, M, cfg["mode"])
        dims = [mod.graded_dimension(m) for m in range(M + 1)]
        kind = "fock" if isinstance(mod, FockModule) else "graded"
        entry = {"label": format_label(lab), "cutoff": M, "graded_dimensions": dims,
                 "cache_digest": cache.file_digest(module_key(alg, lab, M, cfg["mode"], kind))}
        try:
            entry["character_dimensions"] = character_dimensions(alg, lab, M)
            entry["matches_character"] = entry["character_dimensions"] == dims
        except NotImplementedError:
            entry["character_dimensions"] = None
        out["modules"].append(entry)
    out["cache_hits"], out["cache_builds"] = cache.hits, cache.builds
    _write_json(Path(cfg["out"]) / "module_build.json", out)
    return out


def cmd_correlator(cfg) -> dict:
    alg = _algebra(cfg)
    req = _request(cfg, alg)
    req.validate()
    _check_cutoff(req)
    preflight(cfg, alg, req.n, req.N)
    res = assemble_mps(req, _workspace(cfg))
    doc = res.to_json()
    doc["certified_bound"] = res.certified_bound
    doc["structural_zero"] = res.structural_zero
    doc["request"] = req.to_json()
    doc.update(stamp(cfg))
    _write_json(Path(cfg["out"]) / "correlator.json", doc)
    return doc


CONVERGENCE_COLUMNS = ["d", "q", "N", "value_re", "value_im", "oracle_re", "oracle_im", "measured_error",
                       "replacement_bound", "chain_bound", "certified_bound", "bond_dim", "cumulative_dim",
                       "bond_dim_bound", "config_hash", "seed", "version"]


def _convergence_rows(cfg, d: float) -> list[list]:
    alg = _algebra(cfg)
    ws = _workspace(cfg)
    rows = []
    ref = None
    Ns = sorted(int(x) for x in cfg["N_grid"])
    results = []
    for N in Ns:
        req = _request(cfg, alg, d=float(d), N=N)
        req.validate()
        _check_cutoff(req)
        results.append((N, req, assemble_mps(req, ws)))
    if alg.kind != "heisenberg":
        ref = results[-1][2].contraction
    st = stamp(cfg)
    for N, req, res in results:
        if alg.kind == "heisenberg":
            orc = free_boson_n_point([f.charge for f in req.fields], res.points) * res.prefactor
            err = abs(res.contraction - orc)
            o_re, o_im = orc.real, orc.imag
        else:
            o_re = o_im = ""
            err = abs(res.contraction - ref)
        eps = [error_bound_for(res, j, req) for j in range(req.n)] if res.norm_estimates else []
        cum = max(sum(character_dimensions(alg, lab, req.n * N)) for lab in req.chain)
        rows.append([d, res.q, N, res.contraction, 0.0, o_re, o_im, err,
                     max(eps) if eps else "", res.contraction_bound if res.contraction_bound is not None else "",
                     res.certified_bound if res.certified_bound is not None else "",
                     res.bond_dim, cum, float(bond_dim_bound(req.n, N, alg.dim)),
                     st["config_hash"], st["seed"], st["version"]])
    return rows


def error_bound_for(res, j, req):
    from .regularization import error_bound_single

    b, _ = res.norm_estimates[j]
    return error_bound_single(res.q, res.N, req.safety * b.value)


def cmd_convergence(cfg) -> list:
    alg = _algebra(cfg)
    n = len(cfg["fields"])
    preflight(cfg, alg, n, max(int(x) for x in cfg["N_grid"]))
    grid = [float(x) for x in cfg["d_grid"]]
    if int(cfg["jobs"]) > 1:
        with ProcessPoolExecutor(max_workers=int(cfg["jobs"])) as ex:
            chunks = list(ex.map(_convergence_rows, [cfg] * len(grid), grid))
    else:
        chunks = [_convergence_rows(cfg, d) for d in grid]
    rows = [r for c in chunks for r in c]
    path = Path(cfg["out"]) / "convergence.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONVERGENCE_COLUMNS)
        w.writerows(rows)
    return rows


def cmd_bounds(cfg) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    st = stamp(cfg)
    mmax, dmax = int(cfg["mmax"]), int(cfg["dmax"])
    table = PartitionTable(mmax, dmax)
    violations = 0
    with open(out / "partition_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m"] + [f"p_d{d}" for d in range(1, dmax + 1)] + ["siegel_ok", "config_hash", "seed", "version"])
        for row in table.rows():
            m = row[0]
            ok = all(math.log(row[d]) <= log_siegel_bound(m, d) + 1e-12 for d in range(1, dmax + 1))
            violations += not ok
            w.writerow(row + [int(ok), st["config_hash"], st["seed"], st["version"]])
    with open(out / "bond_dim_bounds.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "N", "dim_g", "log_bond_dim_bound", "bond_dim_bound", "counted_states",
                    "config_hash", "seed", "version"])
        for dim_g in (1, 3):
            for n in (1, 2, 3, 4):
                for N in range(0, 9):
                    b = bond_dim_bound(n, N, dim_g)
                    w.writerow([n, N, dim_g, log_bond_dim_bound(n, N, dim_g), str(b),
                                counted_bond_dim(n, N, dim_g), st["config_hash"], st["seed"], st["version"]])
    fits = {}
    with open(out / "scaling.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "n", "dim_g", "eps", "N_min", "log_bond_dim_bound", "counted_states",
                    "config_hash", "seed", "version"])
        for d in cfg["d_grid"]:
            sm = invert_bounds_to_scaling(cfg["eps_grid"], 2, float(d), 3)
            for e, N, lD, c in zip(sm.eps, sm.N_min, sm.log_D_bound, sm.D_counted):
                w.writerow([d, 2, 3, e, N, lD, c, st["config_hash"], st["seed"], st["version"]])
            fits[str(d)] = {"N_per_log_inv_eps": sm.N_fit.slope, "N_stderr": sm.N_fit.stderr,
                            "expected": 4 / float(d), "logD_per_log_inv_eps": sm.D_fit.slope,
                            "logD_stderr": sm.D_fit.stderr, "kappa_empirical": sm.kappa}
    sq = fixed_eps_sqrt_fit(list(range(6000, 120001, 6000)), 3)
    fits["sqrt_slope"] = {"slope": sq.slope, "stderr": sq.stderr,
                          "expected": 2 * math.pi * math.sqrt(3 / 6)}
    doc = {"siegel_violations": violations, "fits": fits, **st}
    _write_json(out / "bounds_fits.json", doc)
    return doc


def cmd_verify(cfg) -> dict:
    from .algebra import heisenberg, su2

    h = heisenberg()
    ws = _workspace(cfg)
    report = []

    def add(name, deviation, tol):
        report.append({"instance": name, "deviation": deviation, "tolerance": tol,
                       "passed": bool(deviation <= tol)})

    for charges, tol in (([1, -1], 1e-3), ([1, -1, 1, -1], 1e-2)):
        req = CorrelatorRequest(h, charges, d=1.0, N=12, M=30, certify=False)
        res = assemble_mps(req, ws)
        ex = free_boson_n_point(charges, res.points).real
        add(f"free boson {charges}", abs(res.value / ex - 1), tol)
    req = CorrelatorRequest(h, [1, -1], d=1.0, N=12, M=20, certify=False)
    fl = [ws.field(s, 20) for s in req.specs()]
    pts = assemble_mps(req, ws).points
    rs = mode_resummation(fl, pts, 20)
    ex = free_boson_n_point([1, -1], pts)
    add("mode resummation [1, -1]", abs(rs.value - ex), rs.meta["tail"] + 1e-12 * abs(ex))
    s = GradedModule(h, 0, 6)
    t = GradedModule(h, 1, 6)
    rec = build_mode_blocks(PrimaryFieldSpec.make(h, 0, 1, 1), s, t)
    cf = build_vertex_operator_blocks(1, FockModule(h, 0, 6), FockModule(h, 1, 6))
    add("recursive vs closed form", cross_validate(rec, cf), 1e-10)
    a = su2(1)
    zreq = CorrelatorRequest(a, [("1/2", 1), ("1/2", 0)], d=1.0, N=2, M=2, chain=[0, 1, 0], certify=False)
    zres = assemble_mps(zreq, ws)
    add("forbidden fusion is structural zero", abs(zres.contraction) + (0.0 if zres.structural_zero else 1.0), 0.0)
    doc = {"instances": report, "passed": all(r["passed"] for r in report), **stamp(cfg)}
    _write_json(Path(cfg["out"]) / "verify.json", doc)
    return doc


# ---------------------------------------------------------------------------


def _json_arg(s):
    return json.loads(s)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cftmps", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its keys")
    common.add_argument("--algebra")
    common.add_argument("--level", type=int)
    common.add_argument("--fields", type=_json_arg, help='JSON list, e.g. [[1,0],[-1,0]]')
    common.add_argument("--chain", type=_json_arg)
    common.add_argument("--d", type=float)
    common.add_argument("--d0", type=float)
    common.add_argument("--N", type=int)
    common.add_argument("--M", type=int)
    common.add_argument("--mode", choices=["rational", "float"])
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--module-cache", dest="module_cache")
    common.add_argument("--jobs", type=int)
    common.add_argument("--memory-budget-gb", dest="memory_budget_gb", type=float)
    common.add_argument("--d-grid", dest="d_grid", type=float, nargs="+")
    common.add_argument("--N-grid", dest="N_grid", type=int, nargs="+")
    common.add_argument("--eps-grid", dest="eps_grid", type=float, nargs="+")
    common.add_argument("--mmax", type=int)
    common.add_argument("--dmax", type=int)
    common.add_argument("--labels", type=_json_arg)
    for name in ("module-build", "correlator", "convergence", "bounds", "verify"):
        sub.add_parser(name, parents=[common])
    return p


COMMANDS = {
    "module-build": cmd_module_build,
    "correlator": cmd_correlator,
    "convergence": cmd_convergence,
    "bounds": cmd_bounds,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        t0 = time.perf_counter()
        result = COMMANDS[args.command](cfg)
        log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (AlgebraValidationError, NotIntegrableError, IntegrabilityError, ChainError, CutoffError,
            ConfigError, ValueError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if isinstance(result, dict):
        print(json.dumps(result, indent=2, sort_keys=True, default=str))
        if args.command == "verify" and not result["passed"]:
            return EXIT_VALIDATION
    else:
        print(f"wrote {len(result)} rows to {Path(cfg['out']) / 'convergence.csv'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
