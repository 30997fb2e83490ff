"""Regularized fields ``W_q = q^{L0} φ(1) q^{L0}``, their truncations, norms and error bounds."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError

log = logging.getLogger(__name__)


class RegularizedField:
    """``W_q`` restricted to levels ``<= cutoff`` on both sides, evaluated blockwise.

    Block ``(l_t, l_s)`` equals ``q^{wt_t + l_t} q^{wt_s + l_s} B[(l_t, l_s)]``.
    ``truncation`` discards every block whose grade shift exceeds it in absolute value.
    """

    def __init__(self, modes, q: float, cutoff: int | None = None, truncation: int | None = None):
        if not 0 < q < 1:
            raise ValueError(f"regularization needs 0 < q < 1, got {q}")
        self.modes = modes
        self.q = float(q)
        self.cutoff = modes.max_level if cutoff is None else int(cutoff)
        if self.cutoff > modes.max_level:
            modes._check(self.cutoff, self.cutoff)
        self.truncation = truncation
        self.wt_source = float(modes.source.wt)
        self.wt_target = float(modes.target.wt)

    @property
    def source(self):
        return self.modes.source

    @property
    def target(self):
        return self.modes.target

    def keeps(self, lt: int, ls: int) -> bool:
        return self.truncation is None or abs(ls - lt) <= self.truncation

    def weight(self, lt: int, ls: int) -> float:
        return self.q ** (self.wt_target + lt + self.wt_source + ls)

    def block(self, lt: int, ls: int) -> np.ndarray:
        if not self.keeps(lt, ls):
            return np.zeros((self.target.graded_dimension(lt), self.source.graded_dimension(ls)))
        return self.weight(lt, ls) * self.modes.block(lt, ls)

    def discarded_block(self, lt: int, ls: int) -> np.ndarray:
        """Part of the untruncated block removed by the truncation."""
        if self.keeps(lt, ls):
            return np.zeros((self.target.graded_dimension(lt), self.source.graded_dimension(ls)))
        return self.weight(lt, ls) * self.modes.block(lt, ls)

    def matrix(self, max_target: int | None = None, max_source: int | None = None) -> np.ndarray:
        mt = self.cutoff if max_target is None else max_target
        ms = self.cutoff if max_source is None else max_source
        ot = self.target.level_offsets(mt)
        os_ = self.source.level_offsets(ms)
        out = np.zeros((ot[-1], os_[-1]))
        for lt in range(mt + 1):
            for ls in range(ms + 1):
                if self.keeps(lt, ls):
                    out[ot[lt]:ot[lt + 1], os_[ls]:os_[ls + 1]] = self.block(lt, ls)
        return out

    def apply(self, vec: dict, target_levels) -> dict:
        """Apply to a level-indexed vector ``{level: array}``; returns the same layout."""
        out = {}
        for lt in target_levels:
            acc = np.zeros(self.target.graded_dimension(lt), dtype=np.result_type(*vec.values(), float))
            for ls, v in vec.items():
                if self.keeps(lt, ls):
                    acc = acc + self.block(lt, ls) @ v
            out[lt] = acc
        return out

    def truncate(self, N: int) -> "RegularizedField":
        if N < 0:
            raise ValueError("truncation must be nonnegative")
        return RegularizedField(self.modes, self.q, self.cutoff, int(N))

    def restricted(self, cutoff: int) -> "RegularizedField":
        return RegularizedField(self.modes, self.q, cutoff, self.truncation)


def regularize(modes, q: float, cutoff: int | None = None) -> RegularizedField:
    return RegularizedField(modes, q, cutoff)


def truncate(W: RegularizedField, N: int) -> RegularizedField:
    return W.truncate(N)


@dataclass
class NormEstimate:
    """Largest singular value of ``W`` at increasing cutoffs; a lower bound on the operator norm."""

    value: float
    rungs: list
    per_rung: list
    iterations: list
    increment: float
    lower_bound: bool = True
    method: str = "power iteration on W^T W"
    meta: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.increment < 0.01


def power_iteration_norm(mat: np.ndarray, tol: float = 1e-12, max_iter: int = 20000,
                         seed: int = 0) -> tuple[float, int]:
    """Largest singular value by power iteration on ``A^T A``."""
    if mat.size == 0:
        return 0.0, 0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mat.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for it in range(1, max_iter + 1):
        w = mat.T @ (mat @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0, it
        v = w / lam
        new = math.sqrt(lam)
        if abs(new - sigma) <= tol * new:
            return new, it
        sigma = new
    raise NonConvergenceError(f"power iteration did not converge in {max_iter} steps")


def estimate_norm(W: RegularizedField, ladder, tol: float = 1e-12, max_iter: int = 20000) -> NormEstimate:
    """Norm estimates on a ladder of increasing cutoffs ``M1 < M2 < ...``."""
    ladder = sorted(int(m) for m in ladder)
    if not ladder:
        raise ValueError("empty cutoff ladder")
    vals, its = [], []
    for m in ladder:
        s, it = power_iteration_norm(W.restricted(m).matrix(), tol=tol, max_iter=max_iter)
        vals.append(s)
        its.append(it)
    inc = abs(vals[-1] - vals[-2]) / vals[-1] if len(vals) > 1 and vals[-1] > 0 else 0.0
    return NormEstimate(max(vals), ladder, vals, its, inc, meta={"q": W.q, "truncation": W.truncation})


def error_bound_single(q: float, N: int, b_sqrt_q: float) -> float:
    """Replacement bound ``q^{N/4} sqrt(3) b(sqrt q) / (1 - sqrt q)`` for one field."""
    if not 0 < q < 1:
        raise ValueError("need 0 < q < 1")
    return q ** (N / 4) * math.sqrt(3) * b_sqrt_q / (1 - math.sqrt(q))


def error_bound_chain(eps, norms) -> float:
    """Telescoped bound ``sum_j eps_j prod_{i != j} norm_i``.

    Entries of ``norms`` may be pairs ``(|W_i|, |W_i^N|)``; their maximum is used.
    """
    eps = [float(e) for e in eps]
    nrm = [max(x) if isinstance(x, (tuple, list)) else float(x) for x in norms]
    if len(eps) != len(nrm):
        raise ValueError("need one norm per operator")
    total = 0.0
    for j, e in enumerate(eps):
        prod = 1.0
        for i, x in enumerate(nrm):
            if i != j:
                prod *= x
        total += e * prod
    return total


def random_interior_vectors(module, max_level: int, samples: int, seed: int) -> list[dict]:
    """Uniform unit vectors on the span of levels ``<= max_level`` (orthonormal coordinates)."""
    rng = np.random.default_rng(seed)
    dims = [module.graded_dimension(m) for m in range(max_level + 1)]
    out = []
    for _ in range(samples):
        v = rng.standard_normal(sum(dims))
        v /= np.linalg.norm(v)
        parts, start = {}, 0
        for m, d in enumerate(dims):
            parts[m] = v[start:start + d]
            start += d
        out.append(parts)
    return out


def replacement_errors(W: RegularizedField, Ns, vectors, max_target: int) -> dict:
    """``max_v |W v - W^N v|`` for each ``N``, computed from the discarded blocks directly."""
    out = {}
    src_levels = sorted(vectors[0])
    # samples as columns, one stacked matrix per source level
    stacked = {ls: np.stack([v[ls] for v in vectors], axis=1) for ls in src_levels}
    for N in Ns:
        T = W.truncate(N)
        sq = np.zeros(len(vectors))
        for lt in range(max_target + 1):
            acc = None
            for ls in src_levels:
                if T.keeps(lt, ls):
                    continue
                part = T.discarded_block(lt, ls) @ stacked[ls]
                acc = part if acc is None else acc + part
            if acc is not None:
                sq += np.einsum("ij,ij->j", acc, acc)
        out[N] = float(np.sqrt(sq.max()))
    return out


@dataclass
class SweepRow:
    q: float
    N: int
    measured_error: float
    replacement_bound: float
    chain_bound: float
    norm_estimate: float
    cutoff: int

    def as_list(self):
        return [self.q, self.N, self.measured_error, self.replacement_bound, self.chain_bound,
                self.norm_estimate, self.cutoff]


SWEEP_COLUMNS = ["q", "N", "measured_error", "replacement_bound", "chain_bound", "norm_estimate", "cutoff"]


def replacement_sweep(modes, qs, Ns, cutoff: int, samples: int = 100, seed: int = 0,
                      ladder=None, safety: float = 2.0, chain_partner=None) -> list[SweepRow]:
    """Measured replacement errors against the single-field bound for every ``(q, N)``.

    ``chain_partner`` optionally gives a second field family; the chain column then
    holds the two-field telescoped bound.
    """
    if ladder is None:
        ladder = [max(2, cutoff // 2), cutoff - cutoff // 4, cutoff]
    half = cutoff // 2
    vectors = random_interior_vectors(modes.source, half, samples, seed)
    rows = []
    for q in qs:
        W = regularize(modes, q, cutoff)
        b_half = estimate_norm(regularize(modes, math.sqrt(q), max(ladder)), ladder)
        if not b_half.converged:
            log.warning("norm ladder increment %.3g above 1%% at q=%g", b_half.increment, math.sqrt(q))
        w_norm = estimate_norm(W, ladder).value
        fields = [(modes, w_norm, b_half.value)]
        if chain_partner is not None:
            bp = estimate_norm(regularize(chain_partner, math.sqrt(q), max(ladder)), ladder).value
            wp = estimate_norm(regularize(chain_partner, q, max(ladder)), ladder).value
            fields.append((chain_partner, wp, bp))
        errs = replacement_errors(W, Ns, vectors, cutoff)
        for N in Ns:
            single = error_bound_single(q, N, safety * b_half.value)
            eps = [error_bound_single(q, N, safety * b) for _, _, b in fields]
            chain = error_bound_chain(eps, [(safety * w, safety * w + e) for (_, w, _), e in zip(fields, eps)])
            rows.append(SweepRow(q, N, errs[N], single, chain, b_half.value, cutoff))
    return rows


def write_sweep_csv(path, rows, extra: dict | None = None):
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS + list(extra))
        for r in rows:
            w.writerow(r.as_list() + list(extra.values()))
