"""Matrix product state assembly and evaluation of chiral correlators.

Insertion ``j`` of an equispaced chain sits, after the exponential map, at
``w_j = e^{-d0} q^{2j-1}`` with ``q = e^{-d}``: each regularized site operator
carries one factor ``q^{L0}`` on each side, so consecutive insertions are two
powers of ``q`` apart. The vacuum contraction of the regularized operators
equals ``prod_j w_j^{h_j} f(w_1, ..., w_n)``; ``value`` reports ``f`` and
``contraction`` the raw matrix element.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .algebra import AlgebraData, conformal_weight, format_label, fusion_allowed, load_algebra, parse_label
from .errors import ChainError, CutoffError, NotIntegrableError
from .fields import PrimaryFieldModes, PrimaryFieldSpec, VertexOperatorModes
from .module import FockModule, GradedModule, character_dimensions
from .regularization import (NormEstimate, RegularizedField, error_bound_chain, error_bound_single,
                             estimate_norm)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InsertionMap:
    q: float
    prefactor: float
    points: tuple  # points represented by the site-operator contraction
    theta: tuple  # images e^{-(j d + d0)} of the equispaced grid


def map_insertions(d: float, d0: float, n: int, weights) -> InsertionMap:
    """Spacing and offset to ``q``, represented points and covariance prefactor."""
    if d <= 0:
        raise ValueError("spacing d must be positive")
    if d0 < 0:
        raise ValueError("offset d0 must be nonnegative")
    weights = [float(w) for w in weights]
    if len(weights) != n:
        raise ValueError("need one weight per insertion")
    q = math.exp(-d)
    pts = tuple(math.exp(-d0) * q ** (2 * j - 1) for j in range(1, n + 1))
    theta = tuple(math.exp(-d0) * q**j for j in range(1, n + 1))
    pref = math.exp(-d0 * sum(weights)) * math.prod(q ** ((2 * j - 1) * h) for j, h in enumerate(weights, 1))
    return InsertionMap(q, pref, pts, theta)


@dataclass(frozen=True)
class FieldInsertion:
    charge: object
    component: int = 0


def _as_insertion(f) -> FieldInsertion:
    if isinstance(f, FieldInsertion):
        return FieldInsertion(parse_label(f.charge), int(f.component))
    if isinstance(f, dict):
        return FieldInsertion(parse_label(f["charge"]), int(f.get("component", 0)))
    if isinstance(f, (list, tuple)):
        return FieldInsertion(parse_label(f[0]), int(f[1]) if len(f) > 1 else 0)
    return FieldInsertion(parse_label(f), 0)


@dataclass
class CorrelatorRequest:
    """``<v0| φ_1 ... φ_n |vn>`` with ``φ_j : M_{μ_j} -> M_{μ_{j-1}}``.

    ``chain`` lists ``μ_0, ..., μ_n``; for heisenberg it may be omitted and is
    then inferred from charge conservation ending in the vacuum. Boundaries are
    ``"vacuum"`` or dicts ``{level: orthonormal coordinates}``.
    """

    alg: AlgebraData
    fields: list
    d: float
    N: int
    M: int
    d0: float = 0.0
    chain: list | None = None
    left: object = "vacuum"
    right: object = "vacuum"
    mode: str = "rational"
    heisenberg_route: str = "closed"
    norm_ladder: list | None = None
    safety: float = 2.0
    certify: bool = True

    def __post_init__(self):
        if isinstance(self.alg, str):
            self.alg = load_algebra(self.alg)
        self.fields = [_as_insertion(f) for f in self.fields]
        if self.chain is None:
            if self.alg.kind != "heisenberg":
                raise ChainError("module chain must be given for non-abelian algebras")
            ch = [parse_label(0)]
            for f in reversed(self.fields):
                ch.append(ch[-1] + f.charge)
            self.chain = ch[::-1]
        self.chain = [parse_label(x) for x in self.chain]

    @property
    def n(self) -> int:
        return len(self.fields)

    def specs(self) -> list[PrimaryFieldSpec]:
        return [PrimaryFieldSpec(self.alg, self.chain[j + 1], self.chain[j], f.charge, f.component)
                for j, f in enumerate(self.fields)]

    def validate(self):
        if self.n < 1:
            raise ChainError("need at least one insertion")
        if len(self.chain) != self.n + 1:
            raise ChainError(f"chain must list {self.n + 1} modules, got {len(self.chain)}")
        if self.left == "vacuum" and self.chain[0] != 0 or self.right == "vacuum" and self.chain[-1] != 0:
            raise ChainError("vacuum boundaries require the chain to start and end in the vacuum module")
        if self.N < 0 or self.M < 0:
            raise ValueError("N and M must be nonnegative")

    def to_json(self) -> dict:
        return {
            "algebra": self.alg.name, "level": self.alg.level, "algebra_hash": self.alg.digest,
            "fields": [[format_label(f.charge), f.component] for f in self.fields],
            "chain": [format_label(x) for x in self.chain],
            "d": self.d, "d0": self.d0, "N": self.N, "M": self.M, "mode": self.mode,
        }


class Workspace:
    """Caches modules, field blocks and norm estimates shared between requests."""

    def __init__(self, cache=None):
        self.cache = cache
        self.modules: dict = {}
        self.fields: dict = {}
        self.norms: dict = {}

    def module(self, alg: AlgebraData, label, cutoff: int, mode: str = "rational", fast: bool = True):
        key = (alg.digest, str(parse_label(label)), int(cutoff), mode, fast)
        if key not in self.modules:
            if self.cache is not None:
                self.modules[key] = self.cache.module(alg, label, cutoff, mode, fast)
            elif alg.kind == "heisenberg" and fast:
                self.modules[key] = FockModule(alg, label, cutoff, mode)
            else:
                self.modules[key] = GradedModule(alg, label, cutoff, mode)
        return self.modules[key]

    def field(self, spec: PrimaryFieldSpec, cutoff: int, mode: str = "rational", route: str = "closed"):
        closed = spec.alg.kind == "heisenberg" and route == "closed"
        key = (spec, cutoff, mode, closed)
        if key not in self.fields:
            src = self.module(spec.alg, spec.source, cutoff, mode, fast=closed)
            tgt = self.module(spec.alg, spec.target, cutoff, mode, fast=closed)
            if closed:
                self.fields[key] = VertexOperatorModes(spec.charge, src, tgt)
            else:
                self.fields[key] = PrimaryFieldModes(spec, src, tgt)
        return self.fields[key]

    def norm(self, modes, q: float, ladder) -> NormEstimate:
        key = (id(modes), round(q, 15), tuple(ladder))
        if key not in self.norms:
            self.norms[key] = estimate_norm(RegularizedField(modes, q, max(ladder)), ladder)
        return self.norms[key]


@dataclass
class MpsApproximation:
    q: float
    N: int
    n: int
    windows: list
    bond_dims: list  # effective dimension of each bond window
    bond_dim: int  # max_j sum_{m <= nN} d_m(μ_j) along the chain
    bond_dim_source: str
    prefactor: float
    contraction: float
    value: float
    certified_bound: float | None
    contraction_bound: float | None
    structural_zero: bool
    points: tuple
    tensors: list | None = None
    norm_estimates: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "value_re": float(np.real(self.value)), "value_im": float(np.imag(self.value)),
            "contraction": float(self.contraction), "prefactor": self.prefactor,
            "certified_bound": self.certified_bound, "contraction_bound": self.contraction_bound,
            "bond_dim": self.bond_dim, "bond_dim_source": self.bond_dim_source,
            "effective_bond_dims": self.bond_dims, "q": self.q, "N": self.N, "n": self.n,
            "points": list(self.points), "structural_zero": self.structural_zero,
            "timings": self.timings,
        }


def bond_windows(n: int, N: int, left_reach: int = 0, right_reach: int = 0) -> list[int]:
    """Highest level reachable on each bond ``0..n``.

    Starting from boundary levels, each truncated operator changes the level by
    at most ``N``; levels above the window cannot reach the opposite boundary.
    """
    out = []
    for b in range(n + 1):
        out.append(min(n * N + min(left_reach, right_reach), left_reach + b * N, right_reach + (n - b) * N))
    return out


def required_cutoff(request: CorrelatorRequest) -> int:
    lr, rr = _boundary_reach(request.left), _boundary_reach(request.right)
    return max(bond_windows(request.n, request.N, lr, rr))


def _boundary_reach(b) -> int:
    if isinstance(b, str):
        return 0
    return max(b)


def _boundary_vector(module, b) -> dict:
    if isinstance(b, str):
        if b != "vacuum":
            raise ValueError(f"unknown boundary {b!r}")
        v = np.zeros(module.graded_dimension(0))
        v[0] = 1.0
        return {0: v}
    return {int(k): np.asarray(v, dtype=float) for k, v in b.items()}


def accounted_bond_dimension(request: CorrelatorRequest, modules=None) -> tuple[int, str]:
    """``max_j sum_{m <= nN} d_m(μ_j)``; Gram ranks when built that far, the character otherwise."""
    top = request.n * request.N
    best, src = 0, "gram"
    for j, lab in enumerate(request.chain):
        mod = modules[j] if modules else None
        if mod is not None and mod.cutoff >= top:
            dims = [mod.graded_dimension(m) for m in range(top + 1)]
        else:
            dims = character_dimensions(request.alg, lab, top)
            src = "character"
        best = max(best, sum(dims))
    return best, src


def _site_fields(request, ws):
    route = request.heisenberg_route
    return [ws.field(s, request.M, request.mode, route) for s in request.specs()]


def assemble_mps(request: CorrelatorRequest, workspace: Workspace | None = None, evaluate: bool = True,
                 keep_tensors: bool = False, projection: str = "window",
                 direction: str = "right") -> MpsApproximation:
    """Build the truncated, projected site operators and contract them with the boundaries.

    ``projection="window"`` keeps only bond levels that can still reach both
    boundaries; ``"full"`` keeps every level ``<= min(nN, M)`` (the plain
    weight projection) and is used to check that the smaller window is exact.
    """
    request.validate()
    ws = workspace or Workspace()
    t0 = time.perf_counter()
    n, N = request.n, request.N
    specs = request.specs()
    weights = [float(conformal_weight(request.alg, s.charge)) for s in specs]
    imap = map_insertions(request.d, request.d0, n, weights)
    q = imap.q
    zero = not all(s.allowed for s in specs)
    lr, rr = _boundary_reach(request.left), _boundary_reach(request.right)
    windows = bond_windows(n, N, lr, rr)
    if projection == "full":
        windows = [lr] + [min(n * N + min(lr, rr), request.M)] * (n - 1) + [rr]
    need = max(windows)
    if need > request.M:
        raise CutoffError(f"module cutoff {request.M} below required bond level {need}")

    if zero:
        try:
            D, src = accounted_bond_dimension(request)
        except NotIntegrableError:
            D, src = 1, "structural-zero"
        return MpsApproximation(q, N, n, windows, [0] * (n + 1), D, src, imap.prefactor, 0.0, 0.0, 0.0, 0.0,
                                True, imap.points, timings={"total": time.perf_counter() - t0})

    modes = _site_fields(request, ws)
    mods = [modes[0].target] + [m.source for m in modes]
    D, src = accounted_bond_dimension(request, mods)
    sites = [RegularizedField(m, q, request.M, N) for m in modes]
    bond_dims = [mods[b].cumulative_dimension(windows[b]) for b in range(n + 1)]
    t1 = time.perf_counter()

    contraction = None
    if evaluate:
        left = _boundary_vector(mods[0], request.left)
        right = _boundary_vector(mods[-1], request.right)
        if direction == "right":
            vec = right
            for j in range(n, 0, -1):
                vec = sites[j - 1].apply(vec, range(windows[j - 1] + 1))
            contraction = sum(float(left[m] @ vec[m]) for m in left if m in vec)
        else:
            vec = left
            for j in range(1, n + 1):
                vec = _apply_transpose(sites[j - 1], vec, range(windows[j] + 1))
            contraction = sum(float(right[m] @ vec[m]) for m in right if m in vec)
    t2 = time.perf_counter()

    tensors = None
    if keep_tensors:
        tensors = [site_tensor(sites[j], windows[j], windows[j + 1]) for j in range(n)]

    cert = cbound = None
    norms = []
    vacuum = request.left == "vacuum" and request.right == "vacuum"
    if request.certify and vacuum:
        ladder = request.norm_ladder or default_ladder(request.M)
        eps, nrm = [], []
        for m in modes:
            b = ws.norm(m, math.sqrt(q), ladder)
            w = ws.norm(m, q, ladder)
            norms.append((b, w))
            e = error_bound_single(q, N, request.safety * b.value)
            eps.append(e)
            # |W^N| <= |W| + eps covers the truncated factors of the telescoping sum
            nrm.append((request.safety * w.value, request.safety * w.value + e))
        cbound = error_bound_chain(eps, nrm)
        cert = cbound / imap.prefactor
    t3 = time.perf_counter()
    value = contraction / imap.prefactor if contraction is not None else None
    return MpsApproximation(q, N, n, windows, bond_dims, D, src, imap.prefactor,
                            contraction, value, cert, cbound, False, imap.points, tensors, norms,
                            {"build": t1 - t0, "contract": t2 - t1, "norms": t3 - t2, "total": t3 - t0})


def default_ladder(M: int) -> list[int]:
    top = min(M, 16)
    return sorted({max(1, top // 2), max(1, (3 * top) // 4), top})


def _apply_transpose(site: RegularizedField, vec: dict, levels) -> dict:
    out = {}
    for ls in levels:
        acc = np.zeros(site.source.graded_dimension(ls))
        for lt, v in vec.items():
            if site.keeps(lt, ls):
                acc = acc + site.block(lt, ls).T @ v
        out[ls] = acc
    return out


def site_tensor(site: RegularizedField, w_left: int, w_right: int, components=None) -> np.ndarray:
    """``A[k]`` on bond windows: array of shape ``(dim V, D_left, D_right)``."""
    modes = site.modes
    ncomp = getattr(getattr(modes, "rep", None), "dim", 1)
    comps = range(ncomp) if components is None else components
    ot = site.target.level_offsets(w_left)
    os_ = site.source.level_offsets(w_right)
    out = np.zeros((len(comps), ot[-1], os_[-1]))
    for c, k in enumerate(comps):
        for lt in range(w_left + 1):
            for ls in range(w_right + 1):
                if site.keeps(lt, ls):
                    blk = modes.block(lt, ls, k) if ncomp > 1 else modes.block(lt, ls)
                    out[c, ot[lt]:ot[lt + 1], os_[ls]:os_[ls + 1]] = site.weight(lt, ls) * blk
    return out


def evaluate_renormalized(request: CorrelatorRequest, workspace: Workspace | None = None):
    """``(value, certified_bound)`` of the renormalized correlator."""
    res = assemble_mps(request, workspace)
    return res.value, res.certified_bound


def contract_tensors(tensors, components, left: np.ndarray, right: np.ndarray) -> float:
    """Plain matrix product of the chosen tensor components between boundary vectors."""
    v = right
    for A, k in zip(reversed(tensors), reversed(components)):
        v = A[k] @ v
    return float(left @ v)


def trace_value(request: CorrelatorRequest, workspace: Workspace | None = None) -> float:
    """``Tr[A^1 ... A^n]`` over the full weight-``<= nN`` bond space (small cases only)."""
    request.validate()
    if request.chain[0] != request.chain[-1]:
        raise ChainError("trace mode needs a closed module chain")
    ws = workspace or Workspace()
    top = request.n * request.N
    if top > request.M:
        raise CutoffError(f"trace mode needs cutoff >= nN = {top}")
    imap = map_insertions(request.d, request.d0, request.n,
                          [float(conformal_weight(request.alg, s.charge)) for s in request.specs()])
    modes = _site_fields(request, ws)
    sites = [RegularizedField(m, imap.q, request.M, request.N) for m in modes]
    prod = None
    for s, f in zip(sites, request.fields):
        A = site_tensor(s, top, top, [f.component])[0]
        prod = A if prod is None else prod @ A
    return float(np.trace(prod))


@dataclass
class FcsApproximation:
    value: float
    kraus_shapes: list
    chiral: MpsApproximation


def apply_channel(kraus: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``sum_k A_k X A_k^dagger``."""
    return np.einsum("kij,jl,kml->im", kraus, X, kraus.conj())


def fcs_evaluate(request: CorrelatorRequest, workspace: Workspace | None = None,
                 antichiral: list | None = None) -> FcsApproximation:
    """Diagonal full-CFT value ``Tr[Ω E_1 ∘ ... ∘ E_n(Ω)]`` from the chiral tensors.

    Each ``E_j`` has Kraus operators ``A^j_k`` over every component ``k`` of the
    charge rep; ``antichiral`` optionally supplies separate tensors for the
    second factor (they must match the chiral shapes).
    """
    res = assemble_mps(request, workspace, keep_tensors=True)
    tensors = res.tensors
    if antichiral is not None:
        if [t.shape for t in antichiral] != [t.shape for t in tensors]:
            raise ValueError("chiral and antichiral tensor shapes differ")
    mods_right = _boundary_vector(_right_module(request, workspace), request.right)
    omega_r = _projector(mods_right, tensors[-1].shape[2])
    X = omega_r
    for j in range(request.n - 1, -1, -1):
        A = tensors[j]
        if antichiral is None:
            X = apply_channel(A, X)
        else:
            X = np.einsum("kij,jl,kml->im", A, X, antichiral[j].conj())
    left = _boundary_vector(_right_module(request, workspace, left=True), request.left)
    omega_l = _projector(left, tensors[0].shape[1])
    val = float(np.real(np.trace(omega_l @ X)))
    return FcsApproximation(val, [t.shape for t in tensors], res)


def _right_module(request, ws, left=False):
    ws = ws or Workspace()
    spec = request.specs()[0 if left else -1]
    f = ws.field(spec, request.M, request.mode, request.heisenberg_route)
    return f.target if left else f.source


def _projector(vec: dict, dim: int) -> np.ndarray:
    flat = np.zeros(dim)
    start = 0
    for m in sorted(vec):
        v = vec[m]
        flat[start:start + len(v)] = v
        start += len(v)
    return np.outer(flat, flat)


def write_mps(path, mps: MpsApproximation, extra: dict | None = None):
    """Binary export: ``<u64 header length><JSON header><float64 payload>``, little endian.

    The header lists each tensor's shape and byte offset into the payload; tensors
    are stored in C order.
    """
    if mps.tensors is None:
        raise ValueError("assemble with keep_tensors=True before exporting")
    header = mps.to_json()
    header.update(extra or {})
    entries, offset = [], 0
    for t in mps.tensors:
        entries.append({"shape": list(t.shape), "offset": offset, "dtype": "<f8"})
        offset += t.size * 8
    header["tensors"] = entries
    header["byte_order"] = "little"
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for t in mps.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def read_mps(path) -> tuple[dict, list]:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen))
        payload = fh.read()
    tensors = []
    for e in header["tensors"]:
        count = int(np.prod(e["shape"]))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=e["offset"])
        tensors.append(arr.reshape(e["shape"]).copy())
    return header, tensors
