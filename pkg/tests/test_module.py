from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cftmps import _linalg
from cftmps.algebra import load_algebra
from cftmps.errors import CutoffError, IntegrabilityError, NotIntegrableError
from cftmps.module import (FockModule, GradedModule, build_module, character_dimensions,
                           enumerate_basis, orth_factor)
from cftmps.partitions import multipartition_column

EX = _linalg.EXACT


def exact(m):
    return [[Fraction(int(x.p), int(x.q)) for x in row] for row in m.tolist()]


@pytest.fixture(scope="module")
def vac1(su2_1):
    mod = GradedModule(su2_1, 0, 6)
    mod.ensure(6)
    return mod


@pytest.fixture(scope="module")
def half1(su2_1):
    mod = GradedModule(su2_1, "1/2", 6)
    mod.ensure(6)
    return mod


@pytest.fixture(scope="module")
def heis_mod(heis):
    return GradedModule(heis, 0, 8)


def test_enumerate_counts(heis, su2_1):
    assert len(enumerate_basis(heis, 0, 0)) == 1
    decos = {s.decoration for s in enumerate_basis(heis, 0, 2)}
    assert decos == {((2, 0),), ((1, 0), (1, 0))}
    assert len(enumerate_basis(su2_1, 0, 2)) == 9
    assert len(enumerate_basis(su2_1, "1/2", 3)) == 2 * 22
    for s in enumerate_basis(su2_1, 0, 4):
        assert list(s.decoration) == sorted(s.decoration, reverse=True)
        assert s.level == 4


def test_heisenberg_level_two_gram(heis_mod):
    raw, X = heis_mod.raw_vectors(2)
    g_raw, Q, d = heis_mod.gram_and_quotient(2)
    assert d == 2
    assert exact(g_raw) == [[2, 0], [0, 2]]
    assert np.allclose(Q.T @ Q, EX.to_numpy(g_raw))


def test_level_zero_gram_is_hw_pairing(half1, su2_2):
    assert exact(half1.gram(0)) == [[1, 0], [0, 1]]
    # ladder basis of spin one has norms 1, 2
    mod = GradedModule(su2_2, 1, 1)
    assert exact(mod.gram(0)) == [[1, 0, 0], [0, 2, 0], [0, 0, 4]]


def test_heisenberg_dimensions(heis_mod):
    assert [heis_mod.graded_dimension(m) for m in range(9)] == multipartition_column(8, 1)


def test_su2_level_two_rank(su2_1, vac1):
    g_raw, Q, d = vac1.gram_and_quotient(2)
    assert g_raw.nrows() == 9
    assert EX.rank(g_raw) == d == character_dimensions(su2_1, 0, 2)[2] == 4


@pytest.mark.parametrize("label", [0, "1/2"])
def test_su2_dimensions_match_character(su2_1, label, vac1, half1):
    mod = vac1 if label == 0 else half1
    dims = [mod.graded_dimension(m) for m in range(7)]
    assert dims == character_dimensions(su2_1, label, 6)
    col = multipartition_column(6, 3)
    assert all(d <= col[m] * mod.irrep.dim for m, d in enumerate(dims))


def test_character_known_values(su2_1, su2_2):
    assert character_dimensions(su2_1, 0, 6) == [1, 3, 4, 7, 13, 19, 29]
    assert character_dimensions(su2_1, "1/2", 6) == [2, 2, 6, 8, 14, 20, 34]
    # level-2 vacuum: level 1 is the adjoint, level 2 has 9 states
    assert character_dimensions(su2_2, 0, 2) == [1, 3, 9]


def test_generic_heisenberg_matches_fock(heis, heis_mod):
    fock = FockModule(heis, 0, 6)
    for m in range(7):
        a = {s.decoration: i for i, s in enumerate(heis_mod.states(m))}
        b = {s.decoration: i for i, s in enumerate(fock.states(m))}
        assert set(a) == set(b)
        perm = [a[s.decoration] for s in fock.states(m)]
        g = EX.to_numpy(heis_mod.gram(m))[np.ix_(perm, perm)]
        assert np.allclose(g, EX.to_numpy(fock.gram(m)))


def test_mode_examples(heis_mod, half1):
    # a(1) a(-1) v = v
    v1 = heis_mod.act_mode(0, -1, [Fraction(1)], 0)
    assert heis_mod.act_mode(0, 1, v1, 1) == [1]
    # annihilators kill the hw space
    assert heis_mod.act_mode(0, 2, [Fraction(1)], 0) == []
    out = half1.act_mode(0, 0, [Fraction(1), Fraction(0)], 0)
    assert out == [Fraction(1, 2), 0]


def test_cutoff_is_enforced(su2_1):
    mod = GradedModule(su2_1, 0, 2)
    with pytest.raises(CutoffError):
        mod.graded_dimension(3)
    with pytest.raises(CutoffError):
        mod.mode_matrix(0, -2, 1)


def test_non_integrable_rejected(su2_1):
    with pytest.raises(NotIntegrableError):
        GradedModule(su2_1, 1, 2)


def test_indefinite_form_detected(su2_1):
    # spin 1 at level 1 is not integrable: the null vector J+(-1) v has negative norm
    mod = GradedModule(su2_1, 1, 2, check_integrable=False)
    with pytest.raises(IntegrabilityError):
        mod.ensure(1)


def test_orth_factor():
    g = np.array([[4.0, 2.0], [2.0, 3.0]])
    L = orth_factor(g)
    assert np.allclose(L @ L.T, g)
    with pytest.raises(IntegrabilityError):
        orth_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


def _pairs(mod, top):
    alg = mod.alg
    for a in range(alg.dim):
        for n in range(1, top + 1):
            for lev in range(n, top + 1):
                yield a, n, lev


@pytest.mark.parametrize("which", ["vac1", "half1"])
def test_adjointness_exact(which, request):
    # G_{l-n} M[a(n)] = sign * (G_l M[τa(-n)])^T in selected coordinates
    mod = request.getfixturevalue(which)
    alg = mod.alg
    for a, n, lev in _pairs(mod, 5):
        ta, sa = alg.adjoint[a]
        lhs = EX.matmul(mod.gram(lev - n), mod.mode_matrix(a, n, lev))
        rhs = EX.T(EX.matmul(mod.gram(lev), mod.mode_matrix(ta, -n, lev - n))) * EX.scalar(sa)
        assert EX.is_zero(lhs - rhs)


def test_adjointness_orthonormal(vac1):
    for a, n, lev in _pairs(vac1, 5):
        ta, sa = vac1.alg.adjoint[a]
        m = vac1.orthonormal_mode(a, n, lev)
        mt = vac1.orthonormal_mode(ta, -n, lev - n)
        assert np.max(np.abs(m - sa * mt.T), initial=0.0) <= 1e-12


def _commutator_residual(mod, a, n, b, m, lev):
    """a(n) b(m) - b(m) a(n) - [a,b](n+m) - n k κ(a,b) δ on one level (exact)."""
    alg = mod.alg
    mid1, mid2, top = lev - m, lev - n, lev - n - m
    lhs = EX.matmul(mod.mode_matrix(a, n, mid1), mod.mode_matrix(b, m, lev)) \
        - EX.matmul(mod.mode_matrix(b, m, mid2), mod.mode_matrix(a, n, lev))
    rhs = EX.zeros(mod.graded_dimension(top), mod.graded_dimension(lev))
    for c, coef in alg.bracket(a, b).items():
        rhs = rhs + mod.mode_matrix(c, n + m, lev) * EX.scalar(coef)
    if n + m == 0 and alg.form(a, b):
        rhs = rhs + EX.eye(mod.graded_dimension(lev)) * EX.scalar(n * alg.level * alg.form(a, b))
    return lhs - rhs


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.integers(-2, 2), st.integers(0, 2), st.integers(-2, 2), st.integers(0, 4))
def test_commutator_closure(a, n, b, m, lev):
    mod = _closure_module()
    if min(lev - n, lev - m, lev - n - m) < 0 or max(lev - n, lev - m, lev - n - m) > mod.cutoff:
        return
    assert EX.is_zero(_commutator_residual(mod, a, n, b, m, lev))


_CACHE = {}


def _closure_module():
    if "m" not in _CACHE:
        _CACHE["m"] = GradedModule(load_algebra("su2", 1), "1/2", 6)
    return _CACHE["m"]


def test_gram_positive(vac1, half1, su2_2):
    mods = [vac1, half1, GradedModule(su2_2, 1, 4)]
    for mod in mods:
        for lev in range(5):
            ev = np.linalg.eigvalsh(mod.gram_float(lev))
            assert ev.min() > 0


def test_float_mode_matches_rational(su2_1, vac1):
    fl = GradedModule(su2_1, 0, 4, mode="float")
    for lev in range(5):
        assert np.allclose(fl.gram(lev), EX.to_numpy(vac1.gram(lev)), atol=1e-10)


def test_build_module_factory(heis, su2_1):
    assert isinstance(build_module(heis, 0, 3), FockModule)
    assert isinstance(build_module(heis, 0, 3, fast=False), GradedModule)
    assert isinstance(build_module(su2_1, 0, 3), GradedModule)


def test_fock_sparse_mode_adjoint(heis):
    fock = FockModule(heis, 1, 8)
    for n in range(1, 4):
        for lev in range(n, 9):
            down = fock.sparse_mode(n, lev).toarray()
            up = fock.sparse_mode(-n, lev - n).toarray()
            assert np.allclose(down, up.T)


def test_energy(half1):
    assert half1.energy(3) == pytest.approx(3.25)
