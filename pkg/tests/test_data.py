import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entfed.data import (
    assign_data_types, default_families, dirichlet_partition, generate_family, load_csv,
    make_family, save_csv,
)
from entfed.errors import ContractError
from entfed.model import LocalDataset


def _pool(classes, per_class, seed=0):
    fam = make_family("t", 3, classes, "linear", seed=seed)
    return generate_family(fam, per_class, seed)


def _shares(pool, plan, classes):
    out = []
    for ix in plan.indices:
        counts = np.bincount(pool.labels[ix], minlength=classes)
        out.append(counts / counts.sum())
    return np.array(out)


def test_zero_noise_samples_equal_class_means():
    fam = make_family("t", 4, 3, "linear", noise_scale=0.0, seed=1)
    pool = generate_family(fam, 5, 0)
    np.testing.assert_array_equal(pool.features, fam.class_means[pool.labels])


def test_pool_size_and_balance():
    fam = make_family("t", 4, 7, "linear", seed=1)
    pool = generate_family(fam, 11, 0)
    assert pool.size == 77
    assert np.all(np.bincount(pool.labels) == 11)


def test_generate_rejects_empty():
    with pytest.raises(ContractError):
        generate_family(make_family("t", 2, 2, "linear"), 0, 0)


def test_families_have_distinct_means():
    fams = default_families(0)
    assert len({f.tag for f in fams}) == 3
    a, b = fams[1], fams[2]
    pa, pb = generate_family(a, 200, 1), generate_family(b, 200, 2)
    # Welch-style z statistic per coordinate; at least one coordinate must differ clearly.
    diff = pa.features.mean(0) - pb.features.mean(0)
    se = np.sqrt(pa.features.var(0, ddof=1) / pa.size + pb.features.var(0, ddof=1) / pb.size)
    assert np.max(np.abs(diff / se)) > 5


def test_partition_single_enterprise_gets_everything():
    pool = _pool(4, 10)
    plan = dirichlet_partition(pool, 1, 0.1, 0)
    np.testing.assert_array_equal(plan.indices[0], np.arange(pool.size))


def test_partition_large_alpha_is_near_uniform():
    pool = _pool(10, 2000)
    plan = dirichlet_partition(pool, 10, 1e6, 0)
    shares = _shares(pool, plan, 10)
    assert np.abs(shares - 0.1).max() <= 0.05


def test_partition_small_alpha_is_skewed():
    pool = _pool(10, 100)
    hits = 0
    for seed in range(50):
        shares = _shares(pool, dirichlet_partition(pool, 10, 0.1, seed), 10)
        top2 = np.sort(shares, axis=1)[:, -2:].sum(axis=1)
        hits += bool((top2 >= 0.5).any())
    assert hits >= 45


def test_skew_monotone_in_alpha():
    pool = _pool(10, 100)
    means = []
    for alpha in (0.1, 1.0, 1e6):
        vals = [_shares(pool, dirichlet_partition(pool, 10, alpha, s), 10).max(axis=1).mean()
                for s in range(20)]
        means.append(np.mean(vals))
    assert means[0] >= means[1] >= means[2]


def test_partition_rejects_bad_alpha():
    with pytest.raises(ContractError):
        dirichlet_partition(_pool(2, 5), 2, 0.0, 0)


def test_partition_top_up_reaches_min_size():
    pool = _pool(2, 200)
    plan = dirichlet_partition(pool, 33, 0.1, 0, max_attempts=1, min_size=5)
    assert min(plan.sizes) >= 5
    assert sum(plan.sizes) == pool.size


def test_partition_impossible_raises():
    with pytest.raises(ContractError):
        dirichlet_partition(_pool(2, 2), 5, 0.1, 0, min_size=1)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(1, 30), st.integers(1, 12),
       st.sampled_from([0.05, 0.5, 5.0]), st.integers(0, 10**6))
def test_partition_is_set_partition(classes, per_class, n, alpha, seed):
    pool = _pool(classes, per_class)
    if pool.size < n:
        return
    plan = dirichlet_partition(pool, n, alpha, seed)
    allix = np.concatenate(plan.indices)
    assert allix.size == pool.size
    np.testing.assert_array_equal(np.sort(allix), np.arange(pool.size))
    assert min(plan.sizes) >= 1
    assert sum(plan.sizes) == pool.size


def test_assign_types_uses_all_families():
    fams = default_families(0)
    m = assign_data_types(range(100), fams, 3)
    assert set(m) == set(range(100))
    assert set(m.values()) == {f.tag for f in fams}
    assert m == assign_data_types(range(100), fams, 3)


def test_assign_single_family():
    m = assign_data_types(range(5), ["only"], 0)
    assert set(m.values()) == {"only"}


def test_assign_no_family_raises():
    with pytest.raises(ContractError):
        assign_data_types(range(3), [], 0)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    data = LocalDataset(rng.normal(size=(6, 3)), rng.integers(0, 4, 6), "fashion")
    path = tmp_path / "d.csv"
    save_csv(data, path)
    back = load_csv(path)
    np.testing.assert_array_equal(back.features, data.features)
    np.testing.assert_array_equal(back.labels, data.labels)
    assert back.data_type == "fashion"
    assert path.read_text().splitlines()[0] == "x0,x1,x2,label,family"
