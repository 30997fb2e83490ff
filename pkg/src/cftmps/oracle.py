"""Reference correlators: free-boson closed form, mode resummation and exponent fits."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import CutoffError, NonConvergenceError


@dataclass
class OracleResult:
    value: complex
    method: str
    meta: dict = field(default_factory=dict)


def free_boson_n_point(charges, points, tol: float = 1e-12) -> complex:
    """``prod_{i<j} (z_i - z_j)^{α_i α_j}`` for a neutral charge set, 0 otherwise.

    Positive real separations are required when every point is real, so that
    principal branches are unambiguous.
    """
    charges = [float(a) for a in charges]
    points = [complex(z) for z in points]
    if len(charges) != len(points):
        raise ValueError("need one point per charge")
    if abs(sum(charges)) > tol:
        return 0j
    out = 1 + 0j
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            sep = points[i] - points[j]
            if sep == 0:
                raise ValueError(f"coincident insertion points {i} and {j}")
            if all(z.imag == 0 for z in points) and sep.real <= 0:
                raise ValueError("real insertion points must be strictly decreasing")
            out *= cmath.exp(charges[i] * charges[j] * cmath.log(sep))
    return out


@dataclass
class ExponentFit:
    two_h: float
    stderr: float
    intercept: float
    points: int


def two_point_exponent_fit(separations, values, converged=None) -> ExponentFit:
    """Slope of ``log|value|`` against ``log(separation)``; returns ``2h = -slope``."""
    sep = np.asarray(separations, float)
    val = np.abs(np.asarray(values, complex))
    if len(sep) < 5:
        raise ValueError("need at least five spacings")
    if converged is not None and not all(converged):
        raise NonConvergenceError("exponent fit given non-converged correlator values")
    if np.any(val <= 0) or np.any(sep <= 0):
        raise ValueError("separations and values must be nonzero")
    r = stats.linregress(np.log(sep), np.log(val))
    return ExponentFit(-float(r.slope), float(r.stderr), float(r.intercept), len(sep))


def mode_resummation(fields, points, R: int, left=None, right=None) -> OracleResult:
    """``<v0| φ_1(z_1) ... φ_n(z_n) |vn>`` summed over intermediate levels ``<= R``.

    ``fields`` are block families with ``block(l_t, l_s)`` in orthonormal bases;
    block ``(l_t, l_s)`` of ``φ(z)`` carries ``z^{l_t - l_s - h}``. The tail
    estimate extrapolates the last increment geometrically with ratio
    ``max_j |z_{j+1} / z_j|``.
    """
    n = len(fields)
    if len(points) != n:
        raise ValueError("need one point per field")
    for f in fields:
        if R > f.max_level:
            raise CutoffError(f"resummation cutoff {R} exceeds module cutoff {f.max_level}")
    hs = [float(f.spec.scaling_dimension) for f in fields]
    if any(f.structural_zero for f in fields):
        return OracleResult(0j, "mode-resummation", {"R": R, "tail": 0.0, "structural_zero": True})

    def run(top: int) -> complex:
        vec = right if right is not None else {0: _unit(fields[-1].source.graded_dimension(0))}
        for j in range(n - 1, -1, -1):
            f, z, h = fields[j], complex(points[j]), hs[j]
            levels = range(top + 1) if j > 0 else [0]
            out = {}
            for lt in levels:
                acc = np.zeros(f.target.graded_dimension(lt), dtype=complex)
                for ls, v in vec.items():
                    acc = acc + (z ** (lt - ls - h)) * (f.block(lt, ls) @ v)
                out[lt] = acc
            vec = out
        lv = left if left is not None else {0: _unit(fields[0].target.graded_dimension(0))}
        return complex(sum(lv[m] @ vec[m] for m in lv if m in vec))

    val = run(R)
    prev = run(R - 1) if R > 0 else 0j
    ratio = max((abs(points[j + 1] / points[j]) for j in range(n - 1)), default=0.0)
    tail = abs(val - prev) * ratio / (1 - ratio) if ratio < 1 else math.inf
    return OracleResult(val, "mode-resummation", {"R": R, "tail": tail, "ratio": ratio,
                                                   "increment": abs(val - prev)})


def _unit(d: int) -> np.ndarray:
    v = np.zeros(d)
    v[0] = 1.0
    return v
