import numpy as np

from cftmps import _linalg
from cftmps.cache import ModuleCache, field_key, module_from_json, module_to_json
from cftmps.fields import PrimaryFieldSpec, build_mode_blocks
from cftmps.module import FockModule, GradedModule


def test_round_trip_exact(su2_1):
    mod = GradedModule(su2_1, "1/2", 3)
    mod.ensure(3)
    back = module_from_json(su2_1, module_to_json(mod))
    for lev in range(4):
        assert back.gram(lev) == mod.gram(lev)
        assert back.states(lev) == mod.states(lev)
        assert back.annihilator(1, 1, lev) == mod.annihilator(1, 1, lev) if lev >= 1 else True


def test_round_trip_float(su2_1):
    mod = GradedModule(su2_1, 0, 3, mode="float")
    mod.ensure(3)
    back = module_from_json(su2_1, module_to_json(mod))
    assert np.array_equal(back.gram(3), mod.gram(3))


def test_cache_hits_and_digests(su2_1, tmp_path):
    cache = ModuleCache(tmp_path)
    a = cache.graded_module(su2_1, 0, 3)
    assert (cache.hits, cache.builds) == (0, 1)
    again = ModuleCache(tmp_path)
    b = again.graded_module(su2_1, 0, 3)
    assert (again.hits, again.builds) == (0 + 1, 0)
    assert [b.graded_dimension(m) for m in range(4)] == [a.graded_dimension(m) for m in range(4)]
    # blocks built from the cached module are identical
    spec = PrimaryFieldSpec.make(su2_1, 0, "1/2", "1/2")
    half = cache.graded_module(su2_1, "1/2", 3)
    f1 = build_mode_blocks(spec, a, half)
    f2 = build_mode_blocks(spec, b, half)
    for lt in range(4):
        for ls in range(4):
            assert np.array_equal(f1.block(lt, ls), f2.block(lt, ls))


def test_fock_cache(heis, tmp_path):
    cache = ModuleCache(tmp_path)
    m = cache.module(heis, 1, 5)
    assert isinstance(m, FockModule)
    cache.module(heis, 1, 5)
    assert (cache.hits, cache.builds) == (1, 1)


def test_block_save_load(heis, tmp_path):
    cache = ModuleCache(tmp_path)
    spec = PrimaryFieldSpec.make(heis, 0, 1, 1)
    f = build_mode_blocks(spec, GradedModule(heis, 0, 3), GradedModule(heis, 1, 3))
    key = field_key(spec, 3, "rational", "recursive")
    cache.save_blocks(key, f, 3)
    g = build_mode_blocks(spec, GradedModule(heis, 0, 3), GradedModule(heis, 1, 3))
    assert cache.load_blocks(key, g)
    assert np.array_equal(g.block(2, 3), f.block(2, 3))
    assert not cache.load_blocks("missing", g)


def test_key_sensitivity(su2_1, su2_2):
    from cftmps.cache import module_key

    keys = {module_key(su2_1, 0, 4, "rational"), module_key(su2_2, 0, 4, "rational"),
            module_key(su2_1, 0, 5, "rational"), module_key(su2_1, 0, 4, "float"),
            module_key(su2_1, "1/2", 4, "rational")}
    assert len(keys) == 5
    assert _linalg.EXACT.exact and not _linalg.FLOAT.exact
