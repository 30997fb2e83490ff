"""Grade-shift-resolved matrix blocks of primary fields.

A block ``B[(l_t, l_s)]`` holds ``<e_t, φ(1) e_s>`` between orthonormal level
bases of the target and source modules; its grade shift is ``δ = l_s - l_t``
and the mode expansion reads ``φ(z) = sum_δ [φ]_δ z^{-δ-h}`` with
``h = wt λ1 + wt λ3 - wt λ2``.

Two constructions are provided. The recursive one works for any algebra: it
starts from a g-intertwiner on the top levels and peels creation modes off
bra and ket using ``[a(n), φ_v(z)] = z^n φ_{a v}(z)``. The closed form is the
normal-ordered exponential for Heisenberg vertex operators.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import _linalg
from .algebra import (AlgebraData, conformal_weight, format_label, fusion_allowed, irrep,
                      parse_label)
from .errors import CutoffError
from .module import FockModule, _right_solve_lower_T
from .partitions import partition_list, z_factor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PrimaryFieldSpec:
    """Field ``V_{λ3} -> Hom(M_{λ1}, M_{λ2})`` evaluated on one basis vector of ``V_{λ3}``.

    ``component`` indexes the ladder (weight) basis of the charge rep; 0 is the
    highest-weight component.
    """

    alg: AlgebraData
    source: object
    target: object
    charge: object
    component: int = 0
    normalization: str = "unit-highest-amplitude"

    @classmethod
    def make(cls, alg, source, target, charge, component=0):
        return cls(alg, parse_label(source), parse_label(target), parse_label(charge), int(component))

    @property
    def allowed(self) -> bool:
        return fusion_allowed(self.alg, self.source, self.target, self.charge)

    @property
    def charge_weight(self):
        """Conformal weight of the field itself (``wt λ3``), used for covariance."""
        return conformal_weight(self.alg, self.charge)

    @property
    def scaling_dimension(self):
        a = self.alg
        return conformal_weight(a, self.source) + conformal_weight(a, self.charge) - conformal_weight(a, self.target)

    def to_json(self) -> dict:
        return {"algebra": self.alg.digest, "source": format_label(self.source),
                "target": format_label(self.target), "charge": format_label(self.charge),
                "component": self.component, "normalization": self.normalization}


class FieldModes:
    """Common interface of primary-field block families."""

    spec: PrimaryFieldSpec
    source: object
    target: object
    structural_zero: bool = False

    @property
    def max_level(self) -> int:
        return min(self.source.cutoff, self.target.cutoff)

    def _check(self, lt: int, ls: int):
        if lt > self.target.cutoff or ls > self.source.cutoff:
            raise CutoffError(f"block ({lt}, {ls}) outside cutoffs "
                              f"({self.target.cutoff}, {self.source.cutoff})")

    def block(self, lt: int, ls: int, component=None) -> np.ndarray:
        raise NotImplementedError

    def blocks_by_shift(self, delta: int, max_level: int | None = None) -> dict:
        """All blocks with grade shift ``δ = l_s - l_t`` inside the cutoffs."""
        top = self.max_level if max_level is None else max_level
        out = {}
        for ls in range(top + 1):
            lt = ls - delta
            if 0 <= lt <= self.target.cutoff and ls <= self.source.cutoff:
                out[(lt, ls)] = self.block(lt, ls)
        return out

    def metadata(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "scaling_dimension": str(self.spec.scaling_dimension),
            "mode_label_offset": 0,
            "source_cutoff": self.source.cutoff,
            "target_cutoff": self.target.cutoff,
            "structural_zero": self.structural_zero,
        }

    def dense(self, max_target: int, max_source: int) -> np.ndarray:
        """Assemble the full matrix on levels ``<= max_target`` x ``<= max_source``."""
        ot = self.target.level_offsets(max_target)
        os_ = self.source.level_offsets(max_source)
        out = np.zeros((ot[-1], os_[-1]))
        for lt in range(max_target + 1):
            for ls in range(max_source + 1):
                out[ot[lt]:ot[lt + 1], os_[ls]:os_[ls + 1]] = self.block(lt, ls)
        return out


def intertwiner(alg: AlgebraData, source, target, charge):
    """g-equivariant map ``V_{λ3} ⊗ V_{λ1} -> V_{λ2}`` in ladder coordinates.

    Returns ``t[k]`` (matrices ``dim V2 x dim V1``) solving
    ``ρ2(a) t(v ⊗ w) = t(ρ3(a) v ⊗ w) + t(v ⊗ ρ1(a) w)``, or None if no such
    map exists. The kernel is computed exactly and the first nonzero entry of
    the top row (smallest source index, then smallest charge index) is set to 1.
    """
    B = _linalg.EXACT
    r1, r2, r3 = (irrep(alg, x) for x in (source, target, charge))
    d1, d2, d3 = r1.dim, r2.dim, r3.dim

    def var(i, k, l):
        return (i * d3 + k) * d1 + l

    nvar = d1 * d2 * d3
    rows = []
    for a in range(alg.dim):
        for i in range(d2):
            for k in range(d3):
                for l in range(d1):
                    row = {}
                    for i2 in range(d2):
                        c = r2.rho[a][i][i2]
                        if c:
                            row[var(i2, k, l)] = row.get(var(i2, k, l), 0) + c
                    for l2 in range(d1):
                        c = r1.rho[a][l2][l]
                        if c:
                            row[var(i, k, l2)] = row.get(var(i, k, l2), 0) - c
                    for k2 in range(d3):
                        c = r3.rho[a][k2][k]
                        if c:
                            row[var(i, k2, l)] = row.get(var(i, k2, l), 0) - c
                    if any(v != 0 for v in row.values()):
                        rows.append(row)
    mat = B.from_entries(len(rows), nvar, [(r, j, v) for r, row in enumerate(rows) for j, v in row.items()])
    ker = B.nullspace(mat) if rows else B.eye(nvar)
    if ker.ncols() == 0:
        return None
    if ker.ncols() > 1:
        log.warning("intertwiner space has dimension %d; using the first kernel vector", ker.ncols())
    vec = [ker[j, 0] for j in range(nvar)]
    lead = None
    for l in range(d1):
        for k in range(d3):
            if vec[var(0, k, l)] != 0:
                lead = (k, l)
                break
        if lead:
            break
    if lead is None:
        # top row vanishes; fall back to the first nonzero entry
        j = next(j for j in range(nvar) if vec[j] != 0)
        scale = vec[j]
        lead = ((j // d1) % d3, j % d1)
    else:
        scale = vec[var(0, *lead)]
    t = []
    for k in range(d3):
        t.append(B.from_entries(d2, d1, [(i, l, vec[var(i, k, l)] / scale)
                                         for i in range(d2) for l in range(d1)]))
    return t, lead


class PrimaryFieldModes(FieldModes):
    """Recursively constructed blocks of a primary field between two modules.

    Internally stores, for every charge component ``k``, the matrices of inner
    products ``E_k[(l_t, l_s)][i, j] = <u_i, φ_k u_j>`` between selected bases.
    """

    def __init__(self, spec: PrimaryFieldSpec, source, target, scale=1):
        if source.B is not target.B:
            raise ValueError("source and target modules must use the same numeric mode")
        self.spec = spec
        self.source = source
        self.target = target
        self.B = source.B
        self.rep = irrep(spec.alg, spec.charge)
        self.structural_zero = not spec.allowed
        self._E: dict = {}
        self._blocks: dict = {}
        self.scale = scale
        self.lead = None
        if not self.structural_zero:
            res = intertwiner(spec.alg, spec.source, spec.target, spec.charge)
            if res is None:
                self.structural_zero = True
            else:
                t, self.lead = res
                g2 = target.gram(0)
                self._E[(0, 0)] = [self.B.matmul(g2, self._convert(tk)) for tk in t]
        if self.structural_zero:
            log.info("fusion %s x %s -> %s forbidden; all blocks vanish",
                     format_label(spec.charge), format_label(spec.source), format_label(spec.target))

    def _convert(self, m):
        if self.B.exact:
            return m
        return _linalg.EXACT.to_numpy(m)

    @property
    def orth_scale(self) -> float:
        """Factor giving unit highest amplitude between orthonormal top vectors."""
        if self.lead is None:
            return 0.0
        k, l = self.lead
        return math.sqrt(float(self.rep.norms[k]) * float(self.source.irrep.norms[l]))

    def inner(self, lt: int, ls: int) -> list:
        """``E_k`` for all charge components ``k`` (selected bases)."""
        self._check(lt, ls)
        key = (lt, ls)
        if key in self._E:
            return self._E[key]
        B = self.B
        d3 = self.rep.dim
        dt, ds = self.target.graded_dimension(lt), self.source.graded_dimension(ls)
        if self.structural_zero:
            out = [B.zeros(dt, ds) for _ in range(d3)]
        elif lt == 0:
            out = self._ket_step(ls)
        else:
            out = self._bra_step(lt, ls)
        self._E[key] = out
        return out

    def _ket_step(self, ls: int) -> list:
        # <u', φ_k c(-p) u> = -sum_k' ρ3(c)[k', k] <u', φ_k' u>  for top-level bra
        B, rho = self.B, self.rep.rho
        d3 = self.rep.dim
        cols = [[] for _ in range(d3)]
        for s in range(self.source.graded_dimension(ls)):
            c, p, j = self.source.tail(ls, s)
            prev = self.inner(0, ls - p)
            for k in range(d3):
                col = None
                for k2 in range(d3):
                    coef = rho[c][k2][k]
                    if coef:
                        term = B.take_cols(prev[k2], [j]) * B.scalar(-coef)
                        col = term if col is None else col + term
                cols[k].append(col if col is not None else B.zeros(self.target.graded_dimension(0), 1))
        d0 = self.target.graded_dimension(0)
        return [B.hstack(c, d0) for c in cols]

    def _bra_step(self, lt: int, ls: int) -> list:
        # <c(-p) u', φ_k w> = σ_c (<u', φ_k τc(p) w> + sum_k' ρ3(τc)[k', k] <u', φ_k' w>)
        B, alg, rho = self.B, self.spec.alg, self.rep.rho
        d3 = self.rep.dim
        ds = self.source.graded_dimension(ls)
        rows = [[] for _ in range(d3)]
        for s in range(self.target.graded_dimension(lt)):
            c, p, i = self.target.tail(lt, s)
            tc, sc = alg.adjoint[c]
            same = self.inner(lt - p, ls)
            lower = self.inner(lt - p, ls - p) if ls >= p else None
            ann = self.source.annihilator(tc, p, ls) if ls >= p else None
            for k in range(d3):
                row = B.zeros(1, ds)
                if lower is not None:
                    row = row + B.matmul(B.take_rows(lower[k], [i]), ann)
                for k2 in range(d3):
                    coef = rho[tc][k2][k]
                    if coef:
                        row = row + B.take_rows(same[k2], [i]) * B.scalar(coef)
                rows[k].append(row * B.scalar(sc))
        return [B.vstack(r, ds) for r in rows]

    def coords(self, lt: int, ls: int, component=None):
        """Block in selected coordinates of the target (``G_t^{-1} E``)."""
        k = self.spec.component if component is None else component
        return self.B.solve(self.target.gram(lt), self.inner(lt, ls)[k])

    def block(self, lt: int, ls: int, component=None) -> np.ndarray:
        k = self.spec.component if component is None else component
        key = (lt, ls, k)
        if key not in self._blocks:
            e = self.B.to_numpy(self.inner(lt, ls)[k])
            lt_f, ls_f = self.target.orth(lt), self.source.orth(ls)
            if e.size:
                from scipy.linalg import solve_triangular

                e = solve_triangular(lt_f, e, lower=True)
                e = _right_solve_lower_T(e, ls_f)
            fac = self.scale * self.orth_scale / math.sqrt(float(self.rep.norms[k]))
            self._blocks[key] = e * fac
        return self._blocks[key]


def build_mode_blocks(spec: PrimaryFieldSpec, source, target, reach: int | None = None,
                      scale=1) -> PrimaryFieldModes:
    """Recursive construction; ``reach`` eagerly builds blocks up to that level on both sides."""
    modes = PrimaryFieldModes(spec, source, target, scale=scale)
    if reach is not None:
        for lt in range(reach + 1):
            for ls in range(reach + 1):
                modes.block(lt, ls)
    return modes


def _multiplicities(lam) -> Counter:
    return Counter(lam)


@lru_cache(maxsize=None)
def _fock_norms(level: int, k: int) -> np.ndarray:
    return np.array([float(z_factor(m) * k ** len(m)) for m in partition_list(level)])


class VertexOperatorModes(FieldModes):
    """Closed form ``V_α(1) = exp(α/k sum a(-n)/n) exp(-α/k sum a(n)/n)`` between Fock modules.

    In the power-sum picture the annihilation factor shifts ``p_n -> p_n - α``
    and the creation factor multiplies by ``sum_ν (α/k)^{len ν} p_ν / z_ν``.
    """

    def __init__(self, alpha, source: FockModule, target: FockModule, scale=1):
        alg = source.alg
        self.alpha = parse_label(alpha)
        self.spec = PrimaryFieldSpec(alg, source.label, target.label, self.alpha, 0)
        self.source = source
        self.target = target
        self.scale = scale
        a = float(self.alpha)
        self._a = a
        self._k = alg.level
        self.structural_zero = not fusion_allowed(alg, source.label, target.label, self.alpha)
        self._plus: dict = {}
        self._minus: dict = {}
        self._blocks: dict = {}

    def e_plus(self, j: int, ls: int) -> sp.csr_matrix:
        """Orthonormal-basis matrix of the annihilation exponential, level ``ls`` -> ``j``."""
        key = (j, ls)
        if key not in self._plus:
            rows, cols, base, power, shape = _plus_structure(j, ls, self._k)
            vals = base * (-self._a) ** power
            self._plus[key] = sp.csr_matrix((vals, (rows, cols)), shape=shape)
        return self._plus[key]

    def e_minus(self, lt: int, j: int) -> sp.csr_matrix:
        """Orthonormal-basis matrix of the creation exponential, level ``j`` -> ``lt``."""
        key = (lt, j)
        if key not in self._minus:
            rows, cols, base, power, shape = _minus_structure(lt, j, self._k)
            vals = base * (self._a / self._k) ** power
            self._minus[key] = sp.csr_matrix((vals, (rows, cols)), shape=shape)
        return self._minus[key]

    def block(self, lt: int, ls: int, component=None) -> np.ndarray:
        self._check(lt, ls)
        key = (lt, ls)
        if key not in self._blocks:
            dt, ds = self.target.graded_dimension(lt), self.source.graded_dimension(ls)
            if self.structural_zero:
                out = np.zeros((dt, ds))
            else:
                top = min(lt, ls) + 1
                left = sp.hstack([self.e_minus(lt, j) for j in range(top)], format="csr")
                right = sp.vstack([self.e_plus(j, ls) for j in range(top)], format="csc")
                out = (left @ right).toarray() * self.scale
            self._blocks[key] = out
        return self._blocks[key]


# The exponential factors depend on the charge only through a power per entry,
# so their sparsity pattern and combinatorial weights are shared between fields.


@lru_cache(maxsize=4096)
def _plus_structure(j: int, ls: int, k: int):
    rows, cols, base, power = _plus_level(ls, k).get(j, ([], [], [], []))
    return (np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(base, dtype=float),
            np.array(power, dtype=int), (len(partition_list(j)), len(partition_list(ls))))


@lru_cache(maxsize=64)
def _plus_level(ls: int, k: int) -> dict:
    """Entries of the annihilation exponential out of level ``ls``, grouped by target level."""
    ns = np.sqrt(_fock_norms(ls, k))
    index, norms = {}, {}
    out: dict = {}
    for col, lam in enumerate(partition_list(ls)):
        mult = _multiplicities(lam)
        parts = sorted(mult)
        # choose how many copies r_n of each part survive
        for kept in itertools.product(*(range(mult[n] + 1) for n in parts)):
            j = sum(n * r for n, r in zip(parts, kept))
            if j not in index:
                index[j] = {mu: i for i, mu in enumerate(partition_list(j))}
                norms[j] = np.sqrt(_fock_norms(j, k))
            mu = tuple(n for n, r in sorted(zip(parts, kept), reverse=True) for _ in range(r))
            coef, removed = 1, 0
            for n, r in zip(parts, kept):
                coef *= math.comb(mult[n], r)
                removed += mult[n] - r
            row = index[j][mu]
            entry = out.setdefault(j, ([], [], [], []))
            entry[0].append(row)
            entry[1].append(col)
            entry[2].append(coef * norms[j][row] / ns[col])
            entry[3].append(removed)
    return out


@lru_cache(maxsize=4096)
def _minus_structure(lt: int, j: int, k: int):
    src = partition_list(j)
    idx = {lam: i for i, lam in enumerate(partition_list(lt))}
    nt = np.sqrt(_fock_norms(lt, k))
    ns = np.sqrt(_fock_norms(j, k))
    rows, cols, base, power = [], [], [], []
    for nu in partition_list(lt - j):
        w = 1.0 / z_factor(nu)
        for col, mu in enumerate(src):
            r = idx[tuple(sorted(mu + nu, reverse=True))]
            rows.append(r)
            cols.append(col)
            base.append(w * nt[r] / ns[col])
            power.append(len(nu))
    return (np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(base), np.array(power),
            (len(idx), len(src)))


def build_vertex_operator_blocks(alpha, source: FockModule, target: FockModule,
                                 reach: int | None = None) -> VertexOperatorModes:
    modes = VertexOperatorModes(alpha, source, target)
    if modes.structural_zero:
        log.info("charge mismatch: %s + %s != %s", format_label(source.label),
                 format_label(modes.alpha), format_label(target.label))
    if reach is not None:
        for lt in range(reach + 1):
            for ls in range(reach + 1):
                modes.block(lt, ls)
    return modes


def cross_validate(first: FieldModes, second: FieldModes, max_level: int | None = None) -> float:
    """Largest elementwise deviation between two block families, aligned by basis decoration."""
    top = min(first.max_level, second.max_level) if max_level is None else max_level
    dev = 0.0
    for lt in range(top + 1):
        pt = _alignment(first.target, second.target, lt)
        for ls in range(top + 1):
            ps = _alignment(first.source, second.source, ls)
            a = first.block(lt, ls)
            b = second.block(lt, ls)
            if a.shape != b.shape:
                raise ValueError(f"block ({lt}, {ls}) shapes differ: {a.shape} vs {b.shape}")
            if a.size:
                dev = max(dev, float(np.max(np.abs(a - b[np.ix_(pt, ps)]))))
    return dev


def _alignment(m1, m2, level: int) -> list[int]:
    keys2 = {(s.decoration, s.hw_component): i for i, s in enumerate(m2.states(level))}
    s1 = m1.states(level)
    if len(s1) != len(keys2):
        raise ValueError(f"level {level} dimensions differ: {len(s1)} vs {len(keys2)}")
    try:
        return [keys2[(s.decoration, s.hw_component)] for s in s1]
    except KeyError as exc:
        raise ValueError(f"level {level} bases are not labelled by the same monomials") from exc
