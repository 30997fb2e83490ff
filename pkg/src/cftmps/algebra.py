"""Lie-algebraic input data: structure constants, invariant form, irreps, weights.

Two presets ship with the package: the rank-one Heisenberg algebra and su(2)
in the ladder basis ``(J3, J+, J-)`` with ``[J3, J±] = ±J±`` and
``[J+, J-] = 2 J3``. The invariant form is the trace form of the defining
representation, ``κ(J3, J3) = 1/2`` and ``κ(J+, J-) = 1``, which puts the
integrable weights of level ``k`` at spins ``j <= k/2``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

from ._linalg import EXACT, fmpq_to_fraction
from .errors import AlgebraValidationError, NotIntegrableError

Label = Union[Fraction, float]


def parse_label(x) -> Label:
    """Parse a weight label (spin or charge) from JSON-ish input."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("boolean is not a weight label")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        fx = Fraction(x).limit_denominator(10**6)
        return fx if float(fx) == x else x
    raise TypeError(f"cannot parse weight label {x!r}")


def format_label(x) -> str:
    x = parse_label(x)
    return str(x) if isinstance(x, Fraction) else repr(float(x))


def _frac(x) -> Fraction:
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


@dataclass(frozen=True)
class AlgebraData:
    """Generators, brackets and invariant form of a finite Lie algebra at level ``k``.

    ``structure_constants[a][b][c]`` is ``f^c_{ab}`` so that
    ``[t_a, t_b] = sum_c f^c_{ab} t_c``. ``adjoint[a] = (b, s)`` encodes
    ``t_a(n)^dagger = s * t_b(-n)``.
    """

    name: str
    kind: str
    dim: int
    structure_constants: tuple
    kappa: tuple
    adjoint: tuple
    level: int
    generator_names: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("simple", "heisenberg"):
            raise ValueError(f"unknown algebra kind {self.kind!r}")
        if self.level <= 0 or int(self.level) != self.level:
            raise ValueError("level must be a positive integer")

    def f(self, a: int, b: int, c: int) -> Fraction:
        return self.structure_constants[a][b][c]

    def bracket(self, a: int, b: int) -> dict[int, Fraction]:
        row = self.structure_constants[a][b]
        return {c: v for c, v in enumerate(row) if v != 0}

    def form(self, a: int, b: int) -> Fraction:
        return self.kappa[a][b]

    def tau(self, a: int) -> int:
        return self.adjoint[a][0]

    def sign(self, a: int) -> int:
        return self.adjoint[a][1]

    def with_level(self, k: int) -> "AlgebraData":
        return AlgebraData(self.name, self.kind, self.dim, self.structure_constants,
                           self.kappa, self.adjoint, int(k), self.generator_names)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "dim": self.dim,
            "f": [[[str(v) for v in row] for row in plane] for plane in self.structure_constants],
            "kappa": [[str(v) for v in row] for row in self.kappa],
            "adjoint": [list(p) for p in self.adjoint],
            "level": self.level,
            "generators": list(self.generator_names),
        }

    @cached_property
    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @cached_property
    def kappa_inverse(self) -> tuple:
        inv = EXACT.inv(EXACT.from_rows(self.kappa))
        return tuple(tuple(fmpq_to_fraction(inv[i, j]) for j in range(self.dim))
                     for i in range(self.dim))


def algebra_from_json(doc: dict) -> AlgebraData:
    dim = int(doc["dim"])
    f = tuple(tuple(tuple(_frac(v) for v in row) for row in plane) for plane in doc["f"])
    kappa = tuple(tuple(_frac(v) for v in row) for row in doc["kappa"])
    adj = []
    for entry in doc["adjoint"]:
        if isinstance(entry, (list, tuple)):
            adj.append((int(entry[0]), int(entry[1])))
        else:
            adj.append((int(entry), 1))
    names = tuple(doc.get("generators", ())) or tuple(f"t{i}" for i in range(dim))
    return AlgebraData(doc.get("name", "custom"), doc["kind"], dim, f, kappa, tuple(adj),
                       int(doc.get("level", 1)), names)


def heisenberg(level: int = 1) -> AlgebraData:
    return AlgebraData(
        name="heisenberg",
        kind="heisenberg",
        dim=1,
        structure_constants=(((Fraction(0),),),),
        kappa=((Fraction(1),),),
        adjoint=((0, 1),),
        level=level,
        generator_names=("a",),
    )


def su2(level: int = 1) -> AlgebraData:
    z, one, two = Fraction(0), Fraction(1), Fraction(2)
    f = [[[z] * 3 for _ in range(3)] for _ in range(3)]
    # generator order: 0 = J3, 1 = J+, 2 = J-
    f[0][1][1], f[1][0][1] = one, -one
    f[0][2][2], f[2][0][2] = -one, one
    f[1][2][0], f[2][1][0] = two, -two
    kappa = ((Fraction(1, 2), z, z), (z, z, one), (z, one, z))
    return AlgebraData(
        name="su2",
        kind="simple",
        dim=3,
        structure_constants=tuple(tuple(tuple(r) for r in plane) for plane in f),
        kappa=kappa,
        adjoint=((0, 1), (2, 1), (1, 1)),
        level=level,
        generator_names=("J3", "J+", "J-"),
    )


PRESETS = {"heisenberg": heisenberg, "su2": su2}


def load_algebra(spec: Union[str, dict, Path], level: int | None = None) -> AlgebraData:
    """Resolve a preset name, a JSON document, or a path to one."""
    if isinstance(spec, dict):
        alg = algebra_from_json(spec)
    elif isinstance(spec, str) and spec in PRESETS:
        alg = PRESETS[spec]()
    else:
        path = Path(spec)
        if not path.is_file():
            raise AlgebraValidationError(f"unknown algebra {str(spec)!r}: not a preset "
                                         f"({', '.join(sorted(PRESETS))}) and not a file")
        alg = algebra_from_json(json.loads(path.read_text()))
    return alg.with_level(level) if level is not None else alg


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    passed: bool
    checks: dict[str, bool]
    first_failure: str | None = None

    def raise_if_failed(self):
        if not self.passed:
            raise AlgebraValidationError(self.first_failure)


def validate_algebra(alg: AlgebraData) -> ValidationReport:
    """Check antisymmetry, Jacobi, invariance of κ and compatibility of the adjoint map."""
    n = alg.dim
    f = alg.structure_constants
    checks: dict[str, bool] = {}
    failure: list[str] = []

    def fail(name: str, msg: str):
        checks[name] = False
        if not failure:
            failure.append(f"{name}: {msg}")

    for name in ("shape", "antisymmetry", "jacobi", "kappa_symmetric", "kappa_invariant",
                 "adjoint_involution", "adjoint_bracket", "adjoint_form", "heisenberg"):
        checks[name] = True

    if len(f) != n or any(len(p) != n or any(len(r) != n for r in p) for p in f) \
            or len(alg.kappa) != n or len(alg.adjoint) != n:
        fail("shape", f"expected {n}x{n}x{n} structure constants and {n}x{n} form")
        return ValidationReport(False, checks, failure[0])

    for a in range(n):
        for b in range(n):
            for c in range(n):
                if f[a][b][c] != -f[b][a][c]:
                    fail("antisymmetry", f"f^{c}_({a},{b}) = {f[a][b][c]} but f^{c}_({b},{a}) = {f[b][a][c]}")

    # [[a,b],c] + [[b,c],a] + [[c,a],b] = 0
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for e in range(n):
                    s = sum(f[a][b][d] * f[d][c][e] + f[b][c][d] * f[d][a][e] + f[c][a][d] * f[d][b][e]
                            for d in range(n))
                    if s != 0:
                        fail("jacobi", f"generators ({a},{b},{c}) component {e}: residual {s}")

    k = alg.kappa
    for a in range(n):
        for b in range(n):
            if k[a][b] != k[b][a]:
                fail("kappa_symmetric", f"kappa({a},{b}) != kappa({b},{a})")
    # kappa([a,b],c) + kappa(b,[a,c]) = 0
    for a in range(n):
        for b in range(n):
            for c in range(n):
                s = sum(f[a][b][d] * k[d][c] + f[a][c][d] * k[b][d] for d in range(n))
                if s != 0:
                    fail("kappa_invariant", f"generators ({a},{b},{c}): residual {s}")

    for a in range(n):
        t, s = alg.adjoint[a]
        if alg.adjoint[t][0] != a or alg.adjoint[t][1] * s != 1:
            fail("adjoint_involution", f"tau(tau({a})) != {a}")
    # ([a,b])^dagger = [b^dagger, a^dagger]
    for a in range(n):
        for b in range(n):
            ta, sa = alg.adjoint[a]
            tb, sb = alg.adjoint[b]
            for e in range(n):
                lhs = sa * sb * f[tb][ta][e]
                rhs = sum(f[a][b][c] * alg.adjoint[c][1] for c in range(n) if alg.adjoint[c][0] == e)
                if lhs != rhs:
                    fail("adjoint_bracket", f"generators ({a},{b}) component {e}")
            if k[a][b] != sa * sb * k[tb][ta]:
                fail("adjoint_form", f"kappa({a},{b}) incompatible with adjoint map")

    if alg.kind == "heisenberg":
        if n != 1 or f[0][0][0] != 0 or k[0][0] != 1:
            fail("heisenberg", "heisenberg data must have dim 1, zero brackets and kappa = 1")

    passed = all(checks.values())
    return ValidationReport(passed, checks, failure[0] if failure else None)


# ---------------------------------------------------------------------------
# finite-dimensional irreps


@dataclass(frozen=True)
class FiniteIrrep:
    """Irrep ``V_λ`` in an orthogonal weight basis, exact.

    ``rho[a][i][j]`` is the coefficient of basis vector ``i`` in ``t_a · v_j``;
    ``norms[i] = <v_i, v_i>``. The basis starts at the highest weight vector.
    """

    label: Label
    dim: int
    rho: tuple
    norms: tuple
    weights: tuple = ()

    def matrix(self, a: int) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.rho[a]])

    def orthonormal(self, a: int) -> np.ndarray:
        """Generator matrix in the normalized weight basis."""
        s = np.sqrt(np.array([float(x) for x in self.norms]))
        return (s[:, None] * self.matrix(a)) / s[None, :]


def _su2_irrep(j: Fraction) -> FiniteIrrep:
    two_j = 2 * j
    if two_j.denominator != 1 or two_j < 0:
        raise NotIntegrableError(f"su(2) spin must be a nonnegative half-integer, got {j}")
    d = int(two_j) + 1
    z = Fraction(0)
    J3 = [[z] * d for _ in range(d)]
    Jp = [[z] * d for _ in range(d)]
    Jm = [[z] * d for _ in range(d)]
    # v_i = (J-)^i v_0
    for i in range(d):
        J3[i][i] = j - i
        if i + 1 < d:
            Jm[i + 1][i] = Fraction(1)
        if i > 0:
            Jp[i - 1][i] = Fraction(i) * (two_j - i + 1)
    norms = [Fraction(1)]
    for i in range(1, d):
        norms.append(norms[-1] * i * (two_j - i + 1))
    rho = tuple(tuple(tuple(r) for r in m) for m in (J3, Jp, Jm))
    return FiniteIrrep(j, d, rho, tuple(norms), tuple(j - i for i in range(d)))


def irrep(alg: AlgebraData, label) -> FiniteIrrep:
    lam = parse_label(label)
    if alg.kind == "heisenberg":
        c = lam if isinstance(lam, Fraction) else float(lam)
        return FiniteIrrep(lam, 1, (((c,),),), (Fraction(1),), (c,))
    if alg.name == "su2":
        return _su2_irrep(Fraction(lam))
    raise NotImplementedError(f"irreps of {alg.name!r} are not available; "
                              "only su2 and heisenberg ship with highest-weight data")


def theta_pairing(alg: AlgebraData, label) -> Fraction:
    """``<θ, λ>`` for the maximal root θ."""
    lam = parse_label(label)
    if alg.kind == "heisenberg":
        return Fraction(0)
    if alg.name == "su2":
        return 2 * Fraction(lam)
    raise NotImplementedError(f"maximal-root pairing not available for {alg.name!r}")


def integrable(alg: AlgebraData, label) -> bool:
    lam = parse_label(label)
    if alg.kind == "heisenberg":
        return True
    if alg.name == "su2":
        lam = Fraction(lam)
        if lam < 0 or (2 * lam).denominator != 1:
            return False
    return theta_pairing(alg, lam) <= alg.level


def casimir(alg: AlgebraData, rep: FiniteIrrep):
    """Eigenvalue of ``sum_ab κ^{ab} ρ(a) ρ(b)`` on the highest weight vector."""
    kinv = alg.kappa_inverse
    total = 0
    for a in range(alg.dim):
        for b in range(alg.dim):
            if kinv[a][b] == 0:
                continue
            ra, rb = rep.rho[a], rep.rho[b]
            total += kinv[a][b] * sum(ra[0][i] * rb[i][0] for i in range(rep.dim))
    return total


def dual_coxeter(alg: AlgebraData) -> Fraction:
    if alg.kind == "heisenberg":
        return Fraction(0)
    n = alg.dim
    f = alg.structure_constants
    kinv = alg.kappa_inverse
    # ad(a)[c][b] = f^c_{ab}; Casimir is scalar on the adjoint, read off entry (0, 0)
    total = Fraction(0)
    for a in range(n):
        for b in range(n):
            if kinv[a][b]:
                total += kinv[a][b] * sum(f[a][i][0] * f[b][0][i] for i in range(n))
    return total / 2


def conformal_weight(alg: AlgebraData, label):
    """L0 eigenvalue of the highest-weight vector, ``C2(λ) / (2 (k + h∨))``."""
    lam = parse_label(label)
    if not integrable(alg, lam):
        raise NotIntegrableError(f"weight {format_label(lam)} is not integrable at level {alg.level}")
    rep = irrep(alg, lam)
    c2 = casimir(alg, rep)
    return c2 / (2 * (alg.level + dual_coxeter(alg)))


def fusion_allowed(alg: AlgebraData, source, target, charge) -> bool:
    """Whether a nonzero primary field ``V_charge -> Hom(M_source, M_target)`` exists."""
    l1, l2, l3 = (parse_label(x) for x in (source, target, charge))
    if alg.kind == "heisenberg":
        return abs(float(l2) - float(l1) - float(l3)) < 1e-14 if not all(
            isinstance(x, Fraction) for x in (l1, l2, l3)) else l2 == l1 + l3
    if not all(integrable(alg, x) for x in (l1, l2, l3)):
        return False
    if alg.name != "su2":
        raise NotImplementedError(f"fusion rules not available for {alg.name!r}")
    j1, j2, j3 = (Fraction(x) for x in (l1, l2, l3))
    if (j1 + j2 + j3).denominator != 1:
        return False
    return abs(j1 - j3) <= j2 <= min(j1 + j3, alg.level - j1 - j3)
