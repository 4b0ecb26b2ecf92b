import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schelling_stability.lattice import TorusGrid
from schelling_stability.scheduler import (SchedulerFileError, contagion_row, contagion_scheduler,
                                           custom_scheduler, load_scheduler_file, next_pair,
                                           rows_from_dict, sample_pair, uniform_scheduler, validate,
                                           write_scheduler_file)


def frequencies_ok(counts, probs, draws):
    """Every entry within 5 sigma and at least 95% of entries within 3 sigma."""
    probs = np.asarray(probs, dtype=float)
    expected = draws * probs
    sigma = np.sqrt(draws * probs * (1 - probs))
    z = np.abs(counts - expected) / np.where(sigma > 0, sigma, 1)
    return bool(np.all(z <= 5) and np.mean(z <= 3) >= 0.95), z


def kinds(violations):
    return sorted({v.kind for v in violations})


# -- built-ins ----------------------------------------------------------------


def test_uniform_rows(grid3):
    spec = uniform_scheduler(grid3)
    rows = spec.rows()
    assert rows.indptr.shape == (37,)
    for e in range(36):
        idx, w = rows.row(e)
        assert idx.tolist() == list(range(36))
        assert np.allclose(w, 1 / 36, rtol=0, atol=1e-15)


@pytest.mark.parametrize("n", range(3, 9))
@pytest.mark.parametrize("w", [0.1, 0.5])
def test_builtins_validate(n, w):
    grid = TorusGrid(n)
    assert validate(contagion_scheduler(grid, w)) == []
    if w == 0.1:
        assert validate(uniform_scheduler(grid)) == []


def test_contagion_support_example(grid3):
    e = grid3.pair_index(((0, 0), (1, 1)))
    support = {grid3.pair_at(int(k)) for k in contagion_row(grid3, e)}
    assert len(support) == 15
    assert all((0, 0) in p or (1, 1) in p for p in support)
    assert ((0, 0), (1, 1)) in support


def test_contagion_self_weight(grid3):
    spec = contagion_scheduler(grid3, 0.2)
    rows = spec.rows()
    for e in range(36):
        idx, w = rows.row(e)
        d = dict(zip(idx.tolist(), w.tolist()))
        assert d[e] == 0.2
        others = [x for k, x in d.items() if k != e]
        assert len(others) == 14 and np.allclose(others, 0.8 / 14)


def test_contagion_default_self_weight_is_uniform_over_support(grid4):
    spec = contagion_scheduler(grid4)
    idx, w = spec.rows().row(5)
    assert len(idx) == spec.support_size == 2 * 16 - 3
    assert np.allclose(w, 1 / spec.support_size)


@pytest.mark.parametrize("w", [0.0, 1.0, -0.1, 1.5])
def test_contagion_rejects_bad_weight(grid3, w):
    with pytest.raises(ValueError):
        contagion_scheduler(grid3, w)


def test_support_symmetry_by_transpose(grid4):
    mat = contagion_scheduler(grid4, 0.3).rows().to_csr()
    support = (mat > 0).astype(np.int8)
    assert (support != support.T).nnz == 0


# -- violations ---------------------------------------------------------------


def _rows(grid, acc):
    return custom_scheduler(grid, rows_from_dict(grid.num_pairs, acc))


def _uniform_dict(p):
    return {e: {f: 1 / p for f in range(p)} for e in range(p)}


def test_missing_self_support(grid3):
    acc = _uniform_dict(36)
    del acc[4][4]
    acc[4] = {f: 1 / 35 for f in acc[4]}
    found = validate(_rows(grid3, acc))
    assert kinds(found) == ["MissingSelfSupport"]
    assert found[0].pairs == (4,)


def test_asymmetric_support(grid3):
    acc = _uniform_dict(36)
    acc[7] = {7: 0.5, 9: 0.5}
    acc[9] = {f: 1 / 36 for f in range(36)}
    found = validate(_rows(grid3, acc))
    asym = [v for v in found if v.kind == "AsymmetricSupport"]
    # every pair except 7 and 9 now points at 7 without a reverse edge
    assert (3, 7) in {v.pairs for v in asym}
    assert all(v.pairs[1] == 7 for v in asym)
    assert len(asym) == 34


def test_non_stochastic_row(grid3):
    acc = _uniform_dict(36)
    acc[2] = {f: 1 / 30 for f in range(36)}
    found = validate(_rows(grid3, acc))
    assert [v.kind for v in found] == ["NonStochasticRow"]
    assert found[0].pairs == (2,)
    acc[2] = {f: (2 / 36 if f == 0 else 1 / 36) for f in range(36)}
    acc[2][1] = -1 / 36
    assert "NonStochasticRow" in kinds(validate(_rows(grid3, acc)))


def test_disconnected_support(grid3):
    acc = {e: {e: 1.0} for e in range(36)}
    found = validate(_rows(grid3, acc))
    assert kinds(found) == ["DisconnectedSupport"]


def test_describe_names_pairs(grid3):
    acc = _uniform_dict(36)
    acc[0] = {f: 1 / 35 for f in range(1, 36)}
    (v,) = validate(_rows(grid3, acc))
    assert v.describe(grid3) == "MissingSelfSupport(((0,0),(0,1)))"


# -- sampling -----------------------------------------------------------------


def test_uniform_sampling_histogram(grid3):
    spec = uniform_scheduler(grid3)
    rng = np.random.default_rng(11)
    draws = 10**6
    u = rng.random(draws)
    picks = np.array([sample_pair(spec, 0, x) for x in u])
    counts = np.bincount(picks, minlength=36)
    ok, z = frequencies_ok(counts, np.full(36, 1 / 36), draws)
    assert ok, z.max()


@pytest.mark.parametrize("scheduler", ["contagion", "table"])
def test_row_frequencies(grid3, scheduler):
    spec = contagion_scheduler(grid3, 0.2)
    if scheduler == "table":
        rng = np.random.default_rng(3)
        acc = {}
        for e in range(36):
            w = rng.random(36) + 0.05
            acc[e] = dict(enumerate((w / w.sum()).tolist()))
        spec = _rows(grid3, acc)
    e = grid3.pair_index(((0, 0), (1, 1)))
    idx, w = spec.rows().row(e)
    probs = np.zeros(36)
    probs[idx] = w
    rng = np.random.default_rng(12)
    draws = 10**6
    counts = np.bincount([next_pair(spec, e, rng) for _ in range(draws)], minlength=36)
    assert np.all(counts[probs == 0] == 0)
    ok, z = frequencies_ok(counts[probs > 0], probs[probs > 0], draws)
    assert ok, z.max()


def test_single_entry_row_is_deterministic(grid3):
    acc = _uniform_dict(36)
    spec = _rows(grid3, acc)
    acc[5] = {5: 1.0}
    spec = _rows(grid3, acc)
    rng = np.random.default_rng(0)
    assert all(next_pair(spec, 5, rng) == 5 for _ in range(200))


def test_next_pair_reproducible(grid4):
    spec = contagion_scheduler(grid4, 0.3)

    def walk(seed):
        rng = np.random.default_rng(seed)
        e, out = 0, []
        for _ in range(1000):
            e = next_pair(spec, e, rng)
            out.append(e)
        return out

    assert walk(7) == walk(7)
    assert walk(7) != walk(8)


@settings(max_examples=300)
@given(st.integers(3, 7), st.data())
def test_contagion_sample_in_support(n, data):
    grid = TorusGrid(n)
    spec = contagion_scheduler(grid, data.draw(st.floats(0.01, 0.99)))
    e = data.draw(st.integers(0, grid.num_pairs - 1))
    u = data.draw(st.floats(0, 1, exclude_max=True))
    f = sample_pair(spec, e, u)
    a, b = grid.pair_at(e)
    assert a in grid.pair_at(f) or b in grid.pair_at(f)


def test_contagion_closed_form_matches_table(grid4):
    """The closed-form sampler visits each sharing pair on an equal slice of [0, 1)."""
    spec = contagion_scheduler(grid4, 0.25)
    e = 17
    u = (np.arange(4000) + 0.5) / 4000
    counts = np.bincount([sample_pair(spec, e, x) for x in u], minlength=grid4.num_pairs)
    idx, w = spec.rows().row(e)
    assert set(np.flatnonzero(counts)) == set(idx.tolist())
    assert np.allclose(counts[idx] / 4000, w, atol=1 / 4000 + 1e-12)


# -- files --------------------------------------------------------------------


def test_file_roundtrip(tmp_path, grid3):
    spec = contagion_scheduler(grid3, 0.3)
    path = tmp_path / "s.txt"
    write_scheduler_file(spec, path)
    back = load_scheduler_file(path)
    assert back.grid.n == 3
    assert validate(back) == []
    a, b = spec.rows().to_csr(), back.rows().to_csr()
    assert abs(a - b).max() < 1e-15


def test_file_canonicalizes_and_renormalizes(tmp_path):
    grid = TorusGrid(3)
    lines = ["# n = 3"]
    for e in range(36):
        (a, b) = grid.pair_at(e)
        for f in range(36):
            c, d = grid.pair_at(f)
            # write e reversed so the loader must canonicalize it
            w = 1 / 36 * (1 + 5e-11)
            lines.append(f"{b[0]} {b[1]} {a[0]} {a[1]} {c[0]} {c[1]} {d[0]} {d[1]} {w!r}  # entry")
    path = tmp_path / "u.txt"
    path.write_text("\n".join(lines) + "\n")
    spec = load_scheduler_file(path)
    assert validate(spec) == []
    assert np.allclose(spec.rows().weights, 1 / 36, atol=1e-16)


def test_file_row_far_from_one_is_flagged(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# n = 3\n0 0 0 1 0 0 0 1 0.5\n")
    found = validate(load_scheduler_file(path))
    assert "NonStochasticRow" in kinds(found)


@pytest.mark.parametrize("text", ["0 0 0 1 0 0 0 1\n", "0 0 0 0 0 0 0 1 1.0\n", "0 0 0 1 0 0 0 x 1\n",
                                  "0 0 0 1 0 0 0 9 1.0\n"])
def test_file_errors(tmp_path, text):
    path = tmp_path / "e.txt"
    path.write_text("# n = 3\n" + text)
    with pytest.raises(SchedulerFileError):
        load_scheduler_file(path)
