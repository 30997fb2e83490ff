"""Integrable highest-weight modules, built level by level.

A level-``l`` vector is written in a *selected basis*: a maximal independent
family of vectors ``b(-p) u_i`` with ``u_i`` running over the selected basis
of level ``l - p``. Independence is decided on the Gram matrix of the
contravariant form, so the selected basis spans the quotient of the Fock
construction by its null vectors. All mode matrices are stored in selected
coordinates (exact rationals by default); orthonormal versions are derived
from a Cholesky factor of the Gram matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from . import _linalg
from .algebra import (AlgebraData, FiniteIrrep, conformal_weight, format_label, integrable,
                      irrep, parse_label)
from .errors import CutoffError, IntegrabilityError, NotIntegrableError
from .partitions import coloured_partitions, multipartition_column, partition_list, z_factor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BasisState:
    """Monomial ``b_1(-m_1) ... b_k(-m_k) v_c`` with decoration ``((m_1, b_1), ...)``.

    ``canonical`` is False when the monomial is not in PBW order; such states
    only appear if the canonical candidates fail to span a level.
    """

    hw_label: object
    hw_component: int
    decoration: tuple
    canonical: bool = True

    @property
    def level(self) -> int:
        return sum(m for m, _ in self.decoration)

    def sort_key(self):
        return (self.decoration, -self.hw_component)


def enumerate_basis(alg: AlgebraData, label, level: int) -> list[BasisState]:
    """All canonical monomials of the given level over every hw component."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    lam = parse_label(label)
    dim_v = irrep(alg, lam).dim
    out = []
    for deco in coloured_partitions(level, alg.dim):
        for c in range(dim_v):
            out.append(BasisState(lam, c, deco))
    return out


def character_dimensions(alg: AlgebraData, label, m_max: int) -> list[int]:
    """Graded dimensions from the specialized Weyl-Kac character (test oracle and D accounting)."""
    lam = parse_label(label)
    if alg.kind == "heisenberg":
        return multipartition_column(m_max, 1)
    if alg.name != "su2":
        raise NotImplementedError(f"character formula not available for {alg.name!r}")
    if not integrable(alg, lam):
        raise NotIntegrableError(f"spin {lam} not integrable at level {alg.level}")
    two_j1 = int(2 * Fraction(lam)) + 1
    kk = alg.level + 2
    num = [0] * (m_max + 1)
    n = 0
    while True:
        hit = False
        for s in ((n, -n) if n else (0,)):
            e = s * two_j1 + s * s * kk
            if e <= m_max:
                num[e] += two_j1 + 2 * s * kk
                hit = True
        if not hit and n > 0:
            break
        n += 1
    inv_eta3 = multipartition_column(m_max, 3)
    return [sum(num[i] * inv_eta3[m - i] for i in range(m + 1)) for m in range(m_max + 1)]


def orth_factor(gram: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``gram = L L^T``, computed on the Jacobi-scaled matrix."""
    n = gram.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    diag = np.diag(gram)
    if np.any(~np.isfinite(diag)) or np.any(diag <= 0):
        raise IntegrabilityError("Gram matrix has a nonpositive diagonal entry")
    s = np.sqrt(diag)
    try:
        c = np.linalg.cholesky(gram / np.outer(s, s))
    except np.linalg.LinAlgError as exc:
        raise IntegrabilityError("Gram matrix is not positive definite") from exc
    return s[:, None] * c


@dataclass
class _Level:
    states: list
    sel: list  # (b, p, i) per selected state; None at level 0
    gram: object
    creators: dict = field(default_factory=dict)  # (b, p) -> d_l x d_{l-p}
    annihilators: dict = field(default_factory=dict)  # (a, n) -> d_{l-n} x d_l
    zero: dict = field(default_factory=dict)  # a -> d_l x d_l
    raw_candidates: int = 0


class _ModuleBase:
    """Shared accessors for both module realizations."""

    alg: AlgebraData
    label: object
    cutoff: int
    B: object

    def _check(self, level: int):
        if level > self.cutoff:
            raise CutoffError(f"level {level} exceeds module cutoff {self.cutoff}")
        if level < 0:
            raise ValueError("negative level")

    @property
    def conformal_weight(self):
        return self.wt

    def energy(self, level: int) -> float:
        """L0 eigenvalue on a level."""
        return float(self.wt) + level

    def cumulative_dimension(self, m: int) -> int:
        return sum(self.graded_dimension(x) for x in range(m + 1))

    def level_offsets(self, m: int) -> list[int]:
        off = [0]
        for x in range(m + 1):
            off.append(off[-1] + self.graded_dimension(x))
        return off

    def mode_matrix(self, a: int, n: int, level: int):
        """Selected-coordinate matrix of ``a(n)`` from ``level`` to ``level - n``."""
        tgt = level - n
        self._check(level)
        self._check(max(tgt, 0))
        if tgt < 0:
            return self.B.zeros(0, self.graded_dimension(level))
        if n > 0:
            return self.annihilator(a, n, level)
        if n == 0:
            return self.zero_mode(a, level)
        return self.creator(a, -n, level)

    def act_mode(self, a: int, n: int, vec, level: int, basis: str = "selected"):
        """Apply ``a(n)`` to a vector on ``level``; returns a vector on ``level - n``."""
        if basis == "orthonormal":
            m = self.orthonormal_mode(a, n, level)
            return m @ np.asarray(vec, dtype=float)
        m = self.mode_matrix(a, n, level)
        if self.B.exact:
            v = self.B.from_rows([[x] for x in vec], len(vec), 1)
            out = self.B.matmul(m, v)
            return [_linalg.fmpq_to_fraction(x) for x in out.entries()]
        return m @ np.asarray(vec, dtype=float)

    def gram_float(self, level: int) -> np.ndarray:
        return self.B.to_numpy(self.gram(level))

    def orth(self, level: int) -> np.ndarray:
        if level not in self._orth:
            self._orth[level] = orth_factor(self.gram_float(level))
        return self._orth[level]

    def orthonormal_mode(self, a: int, n: int, level: int) -> np.ndarray:
        """``<e_t, a(n) e_s>`` in orthonormal bases: ``L_t^T M L_s^{-T}``."""
        tgt = level - n
        if tgt < 0:
            return np.zeros((0, self.graded_dimension(level)))
        m = self.B.to_numpy(self.mode_matrix(a, n, level))
        lt, ls = self.orth(tgt), self.orth(level)
        return _right_solve_lower_T(lt.T @ m, ls)

    def to_orthonormal(self, vec, level: int) -> np.ndarray:
        """Selected coordinates to orthonormal coordinates."""
        return self.orth(level).T @ np.asarray(vec, dtype=float)

    def hw_state_label(self) -> str:
        return format_label(self.label)


def _right_solve_lower_T(x: np.ndarray, lower: np.ndarray) -> np.ndarray:
    """``x @ inv(lower.T)`` for lower-triangular ``lower``."""
    if lower.shape[0] == 0 or x.shape[0] == 0:
        return np.zeros((x.shape[0], lower.shape[0]))
    from scipy.linalg import solve_triangular

    return solve_triangular(lower, x.T, lower=True).T


class GradedModule(_ModuleBase):
    """Integrable highest-weight module ``M_{k, λ}`` realized as a Gram-kernel quotient.

    Levels are constructed lazily on first use and never beyond ``cutoff``.
    ``mode`` selects exact rationals (``"rational"``) or float64 (``"float"``).
    """

    def __init__(self, alg: AlgebraData, label, cutoff: int, mode: str = "rational",
                 check_integrable: bool = True):
        self.alg = alg
        self.label = parse_label(label)
        self.cutoff = int(cutoff)
        self.mode = mode
        self.B = _linalg.backend(mode)
        if check_integrable and not integrable(alg, self.label):
            raise NotIntegrableError(f"weight {format_label(self.label)} is not integrable "
                                     f"at level {alg.level}")
        self.irrep: FiniteIrrep = irrep(alg, self.label)
        self.wt = conformal_weight(alg, self.label) if check_integrable else None
        self._levels: list[_Level] = []
        self._orth: dict[int, np.ndarray] = {}
        self._build_level0()

    # -- construction -----------------------------------------------------

    def _build_level0(self):
        B, rep = self.B, self.irrep
        d = rep.dim
        gram = B.from_entries(d, d, [(i, i, rep.norms[i]) for i in range(d)])
        zero = {a: B.from_rows(rep.rho[a], d, d) for a in range(self.alg.dim)}
        states = [BasisState(self.label, c, ()) for c in range(d)]
        self._levels.append(_Level(states, [None] * d, gram, zero=zero, raw_candidates=d))

    def built_levels(self) -> int:
        return len(self._levels) - 1

    def ensure(self, level: int):
        self._check(level)
        while len(self._levels) <= level:
            self._build_next()

    def _build_next(self):
        B, alg = self.B, self.alg
        ell = len(self._levels)
        lv = self._levels
        dims = [len(x.states) for x in lv]
        gens = range(alg.dim)
        # candidates in natural (p, b, i) order
        cands = [(b, p, i) for p in range(1, ell + 1) for b in gens for i in range(dims[ell - p])]
        blocks = [(b, p) for p in range(1, ell + 1) for b in gens]
        ncand = len(cands)

        def decoration(c):
            b, p, i = c
            return ((p, b),) + lv[ell - p].states[i].decoration

        def is_canonical(c):
            b, p, i = c
            st = lv[ell - p].states[i]
            return st.canonical and (not st.decoration or st.decoration[0] <= (p, b))

        # T[(a, n)] : annihilation of every candidate, d_{l-n} x ncand
        T = {}
        for a in gens:
            for n in range(1, ell + 1):
                cols = []
                for b, p in blocks:
                    src = ell - p
                    tgt = ell - n
                    blk = B.zeros(dims[tgt], dims[src])
                    if n <= src:
                        blk = blk + B.matmul(lv[tgt].creators[(b, p)], lv[src].annihilators[(a, n)])
                    for c, coef in alg.bracket(a, b).items():
                        s = B.scalar(coef)
                        if n > p:
                            blk = blk + lv[src].annihilators[(c, n - p)] * s
                        elif n == p:
                            blk = blk + lv[src].zero[c] * s
                        else:
                            blk = blk + lv[tgt].creators[(c, p - n)] * s
                    if n == p and alg.form(a, b) != 0:
                        blk = blk + B.eye(dims[src]) * B.scalar(n * alg.level * alg.form(a, b))
                    cols.append(blk)
                T[(a, n)] = B.hstack(cols, dims[ell - n])

        # Gram rows indexed like candidates: row (c, r, j) = sign_c * G_{l-r} T[(tau c, r)]
        rows = []
        for c, r in blocks:
            tc, sc = alg.adjoint[c]
            rows.append(B.matmul(lv[ell - r].gram, T[(tc, r)]) * B.scalar(sc))
        gram_full = B.vstack(rows, ncand)

        order = sorted(range(ncand), key=lambda x: (not is_canonical(cands[x]),
                                                     _desc_key(decoration(cands[x]), cands[x])))
        g_perm = B.take_cols(B.take_rows(gram_full, order), order)
        piv = [order[x] for x in B.pivot_columns(g_perm)]

        states = []
        for x in piv:
            b, p, i = cands[x]
            root = lv[ell - p].states[i]
            states.append(BasisState(self.label, root.hw_component, decoration(cands[x]),
                                     is_canonical(cands[x])))
        perm = sorted(range(len(piv)), key=lambda t: states[t].sort_key(), reverse=True)
        sel_idx = [piv[t] for t in perm]
        states = [states[t] for t in perm]
        if not all(s.canonical for s in states):
            log.warning("level %d of %s uses non-PBW-ordered basis monomials", ell, self.hw_state_label())

        gram_sel_rows = B.take_rows(gram_full, sel_idx)
        gram = B.take_cols(gram_sel_rows, sel_idx)
        self._check_positive(gram, ell)
        coords = B.solve(gram, gram_sel_rows)  # every candidate in selected coordinates
        d = len(sel_idx)

        new = _Level(states, [cands[x] for x in sel_idx], gram, raw_candidates=ncand)
        start = 0
        for b, p in blocks:
            w = dims[ell - p]
            new.creators[(b, p)] = B.take_cols(coords, list(range(start, start + w)))
            start += w
        for key, t in T.items():
            new.annihilators[key] = B.take_cols(t, sel_idx)
        for a in gens:
            cols = []
            for b, p, i in new.sel:
                col = B.matmul(new.creators[(b, p)], B.take_cols(lv[ell - p].zero[a], [i]))
                for c, coef in alg.bracket(a, b).items():
                    col = col + B.take_cols(new.creators[(c, p)], [i]) * B.scalar(coef)
                cols.append(col)
            new.zero[a] = B.hstack(cols, d) if cols else B.zeros(0, 0)
        self._levels.append(new)
        log.debug("built level %d: %d candidates, dimension %d", ell, ncand, d)

    def _check_positive(self, gram, ell):
        g = self.B.to_numpy(gram)
        if g.shape[0] == 0:
            return
        try:
            orth_factor(g)
        except IntegrabilityError as exc:
            raise IntegrabilityError(f"contravariant form is indefinite at level {ell} of "
                                     f"M_{format_label(self.label)}") from exc

    # -- accessors --------------------------------------------------------

    def level_data(self, level: int) -> _Level:
        self.ensure(level)
        return self._levels[level]

    def states(self, level: int) -> list[BasisState]:
        return self.level_data(level).states

    def graded_dimension(self, m: int) -> int:
        return len(self.level_data(m).states)

    def gram(self, level: int):
        return self.level_data(level).gram

    def creator(self, b: int, p: int, level: int):
        """``b(-p)`` from ``level`` to ``level + p``."""
        return self.level_data(level + p).creators[(b, p)]

    def annihilator(self, a: int, n: int, level: int):
        """``a(n)`` from ``level`` to ``level - n`` (``n >= 1``)."""
        if n > level:
            return self.B.zeros(0, self.graded_dimension(level))
        return self.level_data(level).annihilators[(a, n)]

    def zero_mode(self, a: int, level: int):
        return self.level_data(level).zero[a]

    def tail(self, level: int, s: int):
        """``(b, p, i)`` with selected state ``s = b(-p) u_i``; None at level 0."""
        return self.level_data(level).sel[s]

    def raw_vectors(self, level: int):
        """Canonical raw monomials of a level, as columns in selected coordinates."""
        B = self.B
        raw = enumerate_basis(self.alg, self.label, level)
        cols = [self._monomial_coords(st.decoration, st.hw_component) for st in raw]
        return raw, (B.hstack(cols, self.graded_dimension(level)) if cols
                     else B.zeros(self.graded_dimension(level), 0))

    def _monomial_coords(self, deco, comp):
        B = self.B
        d0 = self.graded_dimension(0)
        v = B.from_entries(d0, 1, [(comp, 0, 1)])
        level = 0
        for p, b in reversed(deco):
            v = B.matmul(self.creator(b, p, level), v)
            level += p
        return v

    def gram_and_quotient(self, level: int):
        """Raw Gram matrix, quotient map (raw -> orthonormal) and quotient dimension.

        The quotient map ``Q`` satisfies ``Q^T Q = G_raw`` so that the rows of ``Q``
        give the orthonormal coordinates of each raw monomial.
        """
        B = self.B
        raw, X = self.raw_vectors(level)
        g_raw = B.matmul(B.T(X), B.matmul(self.gram(level), X))
        q = self.orth(level).T @ B.to_numpy(X)
        return g_raw, q, self.graded_dimension(level)

    def summary(self) -> dict:
        return {
            "algebra": self.alg.name,
            "level_k": self.alg.level,
            "label": format_label(self.label),
            "cutoff": self.cutoff,
            "conformal_weight": str(self.wt),
            "graded_dimensions": [len(x.states) for x in self._levels],
        }


def _desc_key(deco, cand):
    # sort helper giving descending decoration order under ascending sort
    return tuple((-p, -b) for p, b in deco), len(deco)


class FockModule(_ModuleBase):
    """Heisenberg module of charge ``α`` in the power-sum (partition) basis.

    ``a(-n)`` multiplies by ``p_n`` and ``a(n)`` acts as ``n k d/dp_n``; the
    Gram matrix is diagonal with entries ``z_λ k^{len λ}``. Everything is lazy
    and sparse, so levels in the thirties are cheap.
    """

    def __init__(self, alg: AlgebraData, charge, cutoff: int, mode: str = "rational"):
        if alg.kind != "heisenberg":
            raise ValueError("FockModule requires the heisenberg algebra")
        self.alg = alg
        self.label = parse_label(charge)
        self.cutoff = int(cutoff)
        self.mode = mode
        self.B = _linalg.backend(mode)
        self.wt = conformal_weight(alg, self.label)
        self.irrep = irrep(alg, self.label)
        self._orth = {}
        self._index: dict[int, dict] = {}
        self._sparse: dict = {}

    def partitions(self, level: int) -> tuple:
        self._check(level)
        return partition_list(level)

    def index(self, level: int) -> dict:
        if level not in self._index:
            self._index[level] = {lam: i for i, lam in enumerate(self.partitions(level))}
        return self._index[level]

    def states(self, level: int) -> list[BasisState]:
        return [BasisState(self.label, 0, tuple((p, 0) for p in lam)) for lam in self.partitions(level)]

    def graded_dimension(self, m: int) -> int:
        return len(self.partitions(m))

    def ensure(self, level: int):
        self._check(level)

    def norms(self, level: int) -> np.ndarray:
        k = self.alg.level
        return np.array([float(z_factor(lam) * k ** len(lam)) for lam in self.partitions(level)])

    def gram(self, level: int):
        k = self.alg.level
        lams = self.partitions(level)
        return self.B.from_entries(len(lams), len(lams),
                                   [(i, i, z_factor(lam) * k ** len(lam)) for i, lam in enumerate(lams)])

    def orth(self, level: int) -> np.ndarray:
        if level not in self._orth:
            self._orth[level] = np.diag(np.sqrt(self.norms(level)))
        return self._orth[level]

    def _creator_entries(self, p: int, level: int):
        idx = self.index(level + p)
        for j, lam in enumerate(self.partitions(level)):
            yield idx[tuple(sorted(lam + (p,), reverse=True))], j, 1

    def _annihilator_entries(self, n: int, level: int):
        idx = self.index(level - n)
        k = self.alg.level
        for j, lam in enumerate(self.partitions(level)):
            mult = lam.count(n)
            if mult:
                rest = list(lam)
                rest.remove(n)
                yield idx[tuple(rest)], j, n * k * mult

    def creator(self, b: int, p: int, level: int):
        self._check(level + p)
        return self.B.from_entries(self.graded_dimension(level + p), self.graded_dimension(level),
                                   self._creator_entries(p, level))

    def annihilator(self, a: int, n: int, level: int):
        if n > level:
            return self.B.zeros(0, self.graded_dimension(level))
        return self.B.from_entries(self.graded_dimension(level - n), self.graded_dimension(level),
                                   self._annihilator_entries(n, level))

    def zero_mode(self, a: int, level: int):
        d = self.graded_dimension(level)
        return self.B.from_entries(d, d, [(i, i, self.label) for i in range(d)])

    def sparse_mode(self, n: int, level: int) -> sp.csr_matrix:
        """Orthonormal-basis sparse matrix of ``a(n)`` from ``level``."""
        key = (n, level)
        if key not in self._sparse:
            tgt = level - n
            self._check(level)
            self._check(max(tgt, 0))
            d_s = self.graded_dimension(level)
            if tgt < 0:
                m = sp.csr_matrix((0, d_s))
            else:
                d_t = self.graded_dimension(tgt)
                if n < 0:
                    ent = list(self._creator_entries(-n, level))
                elif n > 0:
                    ent = list(self._annihilator_entries(n, level))
                else:
                    ent = [(i, i, float(self.label)) for i in range(d_s)]
                st, ss = np.sqrt(self.norms(tgt)), np.sqrt(self.norms(level))
                rows = np.array([e[0] for e in ent], dtype=int)
                cols = np.array([e[1] for e in ent], dtype=int)
                vals = np.array([float(e[2]) for e in ent])
                if ent:
                    vals = vals * st[rows] / ss[cols]
                m = sp.csr_matrix((vals, (rows, cols)), shape=(d_t, d_s))
            self._sparse[key] = m
        return self._sparse[key]

    def orthonormal_mode(self, a: int, n: int, level: int) -> np.ndarray:
        return self.sparse_mode(n, level).toarray()

    def tail(self, level: int, s: int):
        if level == 0:
            return None
        lam = self.partitions(level)[s]
        return 0, lam[0], self.index(level - lam[0])[lam[1:]]

    def summary(self) -> dict:
        return {
            "algebra": self.alg.name,
            "level_k": self.alg.level,
            "label": format_label(self.label),
            "cutoff": self.cutoff,
            "conformal_weight": str(self.wt),
            "graded_dimensions": [self.graded_dimension(m) for m in range(self.cutoff + 1)],
        }


def build_module(alg: AlgebraData, label, cutoff: int, mode: str = "rational", fast: bool = True):
    """Module factory: the partition-basis fast path for heisenberg, Gram quotient otherwise."""
    if alg.kind == "heisenberg" and fast:
        return FockModule(alg, label, cutoff, mode)
    return GradedModule(alg, label, cutoff, mode)
