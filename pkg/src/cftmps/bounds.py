"""Multipartition counting, the sub-exponential bond-dimension bound and scaling fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy import stats

from .partitions import multipartition_column
from .regularization import error_bound_chain, error_bound_single

BOUND_PRECISION_BITS = 96


@lru_cache(maxsize=64)
def _column(m_max: int, d: int) -> tuple:
    return tuple(multipartition_column(m_max, d))


def multipartition_count(m: int, d: int) -> int:
    """Number of ``d``-tuples of partitions with total size ``m`` (exact)."""
    if m < 0 or d < 0:
        raise ValueError("m and d must be nonnegative")
    if d == 0:
        return 1 if m == 0 else 0
    return _column(m, d)[m]


@dataclass
class PartitionTable:
    """``p(m, d)`` for ``m <= m_max`` and ``d <= d_max`` (``d >= 1``)."""

    m_max: int
    d_max: int
    table: dict = field(default_factory=dict)

    def __post_init__(self):
        for d in range(1, self.d_max + 1):
            self.table[d] = multipartition_column(self.m_max, d)

    def __call__(self, m: int, d: int) -> int:
        return self.table[d][m]

    def rows(self):
        for m in range(self.m_max + 1):
            yield [m] + [self.table[d][m] for d in range(1, self.d_max + 1)]


def siegel_bound(m: int, d: int) -> float:
    """``exp(2 pi sqrt(d m / 6))``, an upper bound on ``p(m, d)``."""
    return math.exp(2 * math.pi * math.sqrt(d * m / 6))


def log_siegel_bound(m: int, d: int) -> float:
    return 2 * math.pi * math.sqrt(d * m / 6)


def bond_dim_bound(n: int, N: int, dim_g: int, as_float: bool = False):
    """``dim_g n N exp(2 pi sqrt(n N dim_g / 6))`` in high precision.

    For ``N = 0`` the formula vanishes while the bond space still holds the
    vacuum; the returned value is then clamped to 1.
    """
    with mpmath.workprec(BOUND_PRECISION_BITS):
        val = mpmath.mpf(dim_g) * n * N * mpmath.exp(2 * mpmath.pi * mpmath.sqrt(mpmath.mpf(n * N * dim_g) / 6))
        val = max(val, mpmath.mpf(1))
        return float(val) if as_float else val


def log_bond_dim_bound(n: int, N: int, dim_g: int) -> float:
    with mpmath.workprec(BOUND_PRECISION_BITS):
        return float(mpmath.log(bond_dim_bound(n, N, dim_g)))


def counted_bond_dim(n: int, N: int, dim_g: int) -> int:
    """``sum_{m <= nN} p(m, dim_g)``: the raw state count the bound dominates."""
    return sum(_column(n * N, dim_g)) if n * N >= 0 else 0


@dataclass
class LinearFit:
    slope: float
    intercept: float
    stderr: float
    rvalue: float
    residual_rms: float

    @classmethod
    def of(cls, x, y) -> "LinearFit":
        x, y = np.asarray(x, float), np.asarray(y, float)
        r = stats.linregress(x, y)
        res = y - (r.slope * x + r.intercept)
        return cls(float(r.slope), float(r.intercept), float(r.stderr), float(r.rvalue),
                   float(np.sqrt(np.mean(res**2))))

    def interval(self, z: float = 1.96) -> tuple[float, float]:
        return self.slope - z * self.stderr, self.slope + z * self.stderr


@dataclass
class ScalingModel:
    """Empirical scaling of the sufficient truncation and bond dimension with accuracy.

    ``kappa`` is a fitted stand-in for the unspecified constant of the
    fixed-``(n, d)`` regime: ``log D ~ kappa C_V (n / d) log(1/eps)``.
    """

    n: int
    d: float
    dim_g: int
    eps: list
    N_min: list
    log_D_bound: list
    D_counted: list
    N_fit: LinearFit
    D_fit: LinearFit
    kappa: float
    label: str = "empirical"


def minimal_truncation(eps: float, n: int, q: float, b_sqrt_q: float, w_norm: float,
                       N_max: int = 100000) -> int:
    """Smallest ``N`` with identical-operator chain bound ``<= eps``."""
    def chain(N):
        e = error_bound_single(q, N, b_sqrt_q)
        return error_bound_chain([e] * n, [(w_norm, w_norm + e)] * n)

    const = error_bound_chain([error_bound_single(q, 0, b_sqrt_q)] * n, [w_norm] * n)
    if chain(0) <= eps:
        return 0
    # without the truncated-norm correction the bound is const * q^{N/4}, which
    # gives a starting point that cannot overshoot; confirm on the integer grid
    N = max(0, int(math.floor(4 * math.log(const / eps) / -math.log(q))) - 1)
    while chain(N) > eps:
        N += 1
        if N > N_max:
            raise ValueError("no truncation reaches the requested accuracy")
    return N


def invert_bounds_to_scaling(eps_targets, n: int, d: float, dim_g: int, b_sqrt_q: float = 1.0,
                             w_norm: float = 1.0) -> ScalingModel:
    """Minimal ``N`` and bond dimension per target accuracy, with log-linear fits."""
    eps = sorted(float(e) for e in eps_targets)
    if math.log10(eps[-1] / eps[0]) < 2:
        raise ValueError("accuracy targets must span at least two decades")
    q = math.exp(-d)
    Ns = [minimal_truncation(e, n, q, b_sqrt_q, w_norm) for e in eps]
    # accuracies ascend, so the truncations must not increase
    if any(a < b for a, b in zip(Ns, Ns[1:])):
        raise ValueError("non-monotone truncation sweep")
    logD = [log_bond_dim_bound(n, N, dim_g) for N in Ns]
    counted = [counted_bond_dim(n, N, dim_g) for N in Ns]
    x = [math.log(1 / e) for e in eps]
    nfit = LinearFit.of(x, Ns)
    dfit = LinearFit.of(x, logD)
    kappa = dfit.slope * d / (dim_g * n)
    return ScalingModel(n, d, dim_g, eps, Ns, logD, counted, nfit, dfit, kappa)


def fixed_eps_sqrt_fit(nN_values, dim_g: int) -> LinearFit:
    """Fit ``log D_bound`` against ``sqrt(nN)``; the slope tends to ``2 pi sqrt(dim_g / 6)``."""
    xs = [math.sqrt(v) for v in nN_values]
    ys = [log_bond_dim_bound(1, v, dim_g) for v in nN_values]
    return LinearFit.of(xs, ys)
