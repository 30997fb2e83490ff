"""Two interchangeable dense linear-algebra backends.

``EXACT`` works over the rationals (python-flint ``fmpq_mat``); ``FLOAT`` works
over float64 numpy arrays. Module and field construction is written against
this small surface so that ranks can be computed exactly while the same code
still runs in floating point when requested.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational

import flint
import numpy as np

FLOAT_RANK_TOL = 1e-10


def to_fmpq(x) -> flint.fmpq:
    if isinstance(x, flint.fmpq):
        return x
    if isinstance(x, (int, flint.fmpz)):
        return flint.fmpq(x)
    if isinstance(x, Rational):
        return flint.fmpq(int(x.numerator), int(x.denominator))
    if isinstance(x, float) and np.isfinite(x):
        # floats are dyadic rationals, so this conversion is exact
        f = Fraction(x)
        return flint.fmpq(f.numerator, f.denominator)
    raise TypeError(f"exact arithmetic needs a rational scalar, got {x!r}")


def fmpq_to_fraction(x: flint.fmpq) -> Fraction:
    return Fraction(int(x.p), int(x.q))


class ExactBackend:
    name = "rational"
    exact = True

    @staticmethod
    def scalar(x):
        return to_fmpq(x)

    @staticmethod
    def zeros(r: int, c: int):
        return flint.fmpq_mat(r, c)

    @staticmethod
    def eye(n: int):
        m = flint.fmpq_mat(n, n)
        for i in range(n):
            m[i, i] = 1
        return m

    @staticmethod
    def from_rows(rows, r=None, c=None):
        rows = [list(row) for row in rows]
        r = len(rows) if r is None else r
        c = (len(rows[0]) if rows else 0) if c is None else c
        return flint.fmpq_mat(r, c, [to_fmpq(x) for row in rows for x in row])

    @staticmethod
    def from_entries(r: int, c: int, entries):
        """Sparse constructor from ``(i, j, value)`` triples."""
        m = flint.fmpq_mat(r, c)
        for i, j, v in entries:
            m[i, j] += to_fmpq(v)
        return m

    @staticmethod
    def shape(a):
        return a.nrows(), a.ncols()

    @staticmethod
    def matmul(a, b):
        return a * b

    @staticmethod
    def T(a):
        return a.transpose()

    @staticmethod
    def take_rows(a, idx):
        tab = a.table()
        return flint.fmpq_mat(len(idx), a.ncols(), [x for i in idx for x in tab[i]])

    @staticmethod
    def take_cols(a, idx):
        tab = a.table()
        return flint.fmpq_mat(a.nrows(), len(idx), [row[j] for row in tab for j in idx])

    @staticmethod
    def hstack(blocks, nrows: int):
        ncols = sum(b.ncols() for b in blocks)
        tabs = [b.table() for b in blocks]
        return flint.fmpq_mat(nrows, ncols, [x for i in range(nrows) for t in tabs for x in t[i]])

    @staticmethod
    def vstack(blocks, ncols: int):
        nrows = sum(b.nrows() for b in blocks)
        return flint.fmpq_mat(nrows, ncols, [x for b in blocks for row in b.table() for x in row])

    @staticmethod
    def solve(a, b):
        if a.nrows() == 0:
            return flint.fmpq_mat(0, b.ncols())
        return a.solve(b)

    @staticmethod
    def inv(a):
        if a.nrows() == 0:
            return flint.fmpq_mat(0, 0)
        return a.inv()

    @staticmethod
    def pivot_columns(a) -> list[int]:
        """Indices of a maximal independent set of columns, chosen greedily left to right."""
        if a.nrows() == 0 or a.ncols() == 0:
            return []
        rr, rank = a.rref()
        tab = rr.table()
        piv = []
        for i in range(rank):
            row = tab[i]
            for j, x in enumerate(row):
                if x != 0:
                    piv.append(j)
                    break
        return piv

    @staticmethod
    def rank(a) -> int:
        if a.nrows() == 0 or a.ncols() == 0:
            return 0
        return a.rank()

    @staticmethod
    def nullspace(a):
        """Basis of the right kernel as columns of a matrix."""
        n = a.ncols()
        if a.nrows() == 0:
            return ExactBackend.eye(n)
        rr, rank = a.rref()
        tab = rr.table()
        piv = []
        for i in range(rank):
            for j, x in enumerate(tab[i]):
                if x != 0:
                    piv.append(j)
                    break
        free = [j for j in range(n) if j not in set(piv)]
        basis = flint.fmpq_mat(n, len(free))
        for col, f in enumerate(free):
            basis[f, col] = 1
            for i, p in enumerate(piv):
                basis[p, col] = -tab[i][f]
        return basis

    @staticmethod
    def to_numpy(a) -> np.ndarray:
        r, c = a.nrows(), a.ncols()
        if r == 0 or c == 0:
            return np.zeros((r, c))
        return np.array([float(x) for x in a.entries()], dtype=float).reshape(r, c)

    @staticmethod
    def is_zero(a) -> bool:
        return all(x == 0 for x in a.entries())

    @staticmethod
    def max_abs(a) -> float:
        e = a.entries()
        return max((abs(float(x)) for x in e), default=0.0)


class FloatBackend:
    name = "float"
    exact = False

    @staticmethod
    def scalar(x):
        return float(x)

    @staticmethod
    def zeros(r: int, c: int):
        return np.zeros((r, c))

    @staticmethod
    def eye(n: int):
        return np.eye(n)

    @staticmethod
    def from_rows(rows, r=None, c=None):
        arr = np.array([[float(x) for x in row] for row in rows], dtype=float)
        if arr.size == 0:
            return np.zeros((r or 0, c or 0))
        return arr

    @staticmethod
    def from_entries(r: int, c: int, entries):
        m = np.zeros((r, c))
        for i, j, v in entries:
            m[i, j] += float(v)
        return m

    @staticmethod
    def shape(a):
        return a.shape

    @staticmethod
    def matmul(a, b):
        return a @ b

    @staticmethod
    def T(a):
        return a.T.copy()

    @staticmethod
    def take_rows(a, idx):
        return a[list(idx), :]

    @staticmethod
    def take_cols(a, idx):
        return a[:, list(idx)]

    @staticmethod
    def hstack(blocks, nrows: int):
        if not blocks:
            return np.zeros((nrows, 0))
        return np.hstack(blocks)

    @staticmethod
    def vstack(blocks, ncols: int):
        if not blocks:
            return np.zeros((0, ncols))
        return np.vstack(blocks)

    @staticmethod
    def solve(a, b):
        if a.shape[0] == 0:
            return np.zeros((0, b.shape[1]))
        return np.linalg.solve(a, b)

    @staticmethod
    def inv(a):
        if a.shape[0] == 0:
            return np.zeros((0, 0))
        return np.linalg.inv(a)

    @staticmethod
    def pivot_columns(a) -> list[int]:
        # greedy pivoted Cholesky on a PSD Gram matrix, in column order
        n = a.shape[0]
        if n == 0:
            return []
        scale = max(float(np.max(np.abs(np.diag(a)))), 1e-300)
        basis: list[int] = []
        R = np.zeros((0, n))
        for j in range(n):
            resid = a[j, j] - R[:, j] @ R[:, j]
            if resid > FLOAT_RANK_TOL * scale:
                row = (a[j, :] - R[:, j] @ R) / np.sqrt(resid)
                R = np.vstack([R, row])
                basis.append(j)
        return basis

    @staticmethod
    def rank(a) -> int:
        if a.size == 0:
            return 0
        s = np.linalg.svd(a, compute_uv=False)
        return int(np.sum(s > FLOAT_RANK_TOL * max(s[0], 1e-300)))

    @staticmethod
    def nullspace(a):
        n = a.shape[1]
        if a.shape[0] == 0:
            return np.eye(n)
        _, s, vt = np.linalg.svd(a)
        tol = FLOAT_RANK_TOL * max(s[0] if s.size else 0.0, 1e-300)
        rank = int(np.sum(s > tol))
        return vt[rank:].T.copy()

    @staticmethod
    def to_numpy(a) -> np.ndarray:
        return np.asarray(a, dtype=float)

    @staticmethod
    def is_zero(a) -> bool:
        return not np.any(a)

    @staticmethod
    def max_abs(a) -> float:
        return float(np.max(np.abs(a))) if a.size else 0.0


EXACT = ExactBackend()
FLOAT = FloatBackend()


def backend(mode: str):
    if mode in ("rational", "exact"):
        return EXACT
    if mode == "float":
        return FLOAT
    raise ValueError(f"unknown numeric mode {mode!r}")
