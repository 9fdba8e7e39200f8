from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpbridge.core import (
    Dataset,
    KernelConfig,
    NormRecord,
    ReferenceParams,
    RngSpec,
    TimeGrid,
    auto_n_jumps,
    denormalize,
    load_csv,
    load_dataset,
    normalize,
    save_dataset,
)
from jumpbridge.errors import DomainError, NormalizationError, ParseError, SizeError, StateError

from conftest import make_dataset


def write_wide(path, n_rows, d=2):
    lines = [",".join(f"f{p}" for p in range(d))]
    lines += [",".join(str(1.0 + r + 0.1 * p) for p in range(d)) for r in range(n_rows)]
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------- grid


def test_grid_rejects_bad_dates():
    with pytest.raises(SizeError):
        TimeGrid((0.0,))
    with pytest.raises(DomainError):
        TimeGrid((0.1, 0.2))
    with pytest.raises(DomainError):
        TimeGrid((0.0, 0.2, 0.2))
    with pytest.raises(DomainError):
        TimeGrid((0.0, 1.0), substeps=0)


def test_subgrid_endpoints():
    g = TimeGrid((0.0, 0.5, 2.0), substeps=4)
    sub = g.subgrid(1)
    assert sub[0] == 0.5 and sub[-1] == 2.0 and sub.size == 5
    assert g.max_dt == 1.5 and not g.is_uniform


# ---------------------------------------------------------------- ingestion


def test_load_csv_window_count(tmp_path):
    # windows hold window_len + 1 dates, so 30 rows give 30 - 25 + 1 windows
    ds = load_csv(write_wide(tmp_path / "a.csv", 30), window_len=24, stride=1)
    assert ds.n_series == 6 and ds.values.shape == (6, 25, 2)
    ds = load_csv(write_wide(tmp_path / "b.csv", 25), window_len=24, stride=1)
    assert ds.n_series == 1


def test_load_csv_stride_and_names(tmp_path):
    ds = load_csv(write_wide(tmp_path / "a.csv", 30), window_len=4, stride=3)
    assert ds.n_series == len(range(0, 26, 3))
    assert ds.feature_names == ("f0", "f1")
    np.testing.assert_array_equal(ds.values[1, 0], [4.0, 4.1])


def test_load_csv_too_few_rows(tmp_path):
    with pytest.raises(SizeError):
        load_csv(write_wide(tmp_path / "a.csv", 24), window_len=24)


def test_load_csv_parse_error_location(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(ParseError) as info:
        load_csv(p, window_len=1)
    assert info.value.row == 3 and info.value.column == "b"


def test_load_csv_is_deterministic(tmp_path):
    p = write_wide(tmp_path / "a.csv", 40)
    a, b = load_csv(p, window_len=10), load_csv(p, window_len=10)
    assert a.values.tobytes() == b.values.tobytes()


def test_skip_first_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("date,x\n2020-01-01,1\n2020-01-02,2\n2020-01-03,4\n")
    ds = load_csv(p, window_len=2, skip_first_column=True)
    np.testing.assert_array_equal(ds.values[0, :, 0], [1, 2, 4])


def test_save_load_round_trip(tmp_path):
    ds = normalize(make_dataset(np.random.default_rng(0).uniform(1, 2, (3, 6, 2))), "base_one")
    back = load_dataset(save_dataset(ds, tmp_path / "x.csv"))
    np.testing.assert_array_equal(back.values, ds.values)
    assert back.grid == ds.grid and back.feature_names == ds.feature_names
    np.testing.assert_array_equal(back.norm_meta[0].params["first"], ds.norm_meta[0].params["first"])


# ---------------------------------------------------------------- normalization


def test_base_one_example():
    ds = normalize(make_dataset([[5.0, 6.0, 7.0]]), "base_one")
    np.testing.assert_allclose(ds.values[0, :, 0], [1.0, 1.2, 1.4], rtol=1e-15)


def test_standard_gives_zero_mean_unit_std():
    ds = normalize(make_dataset([[0.0, 1.0, 2.0, 3.0], [0.0, 3.0, 2.0, 1.0]]), "standard")
    body = ds.values[:, 1:, 0]
    assert abs(body.mean()) < 1e-15 and abs(body.std() - 1.0) < 1e-15
    assert np.all(ds.values[:, 0, :] == 0.0)


def test_denormalize_examples():
    std_rec = NormRecord("standard", {"mean": np.array([1.0]), "std": np.array([1.0]), "start": np.array([[1.0]])})
    ds = Dataset(np.array([[[1.0], [0.0], [1.0], [2.0]]]), TimeGrid.uniform(3, 1.0), (std_rec,))
    np.testing.assert_allclose(denormalize(ds).values[0, 1:, 0], [1.0, 2.0, 3.0])
    base = NormRecord("base_one", {"first": np.array([[5.0]])})
    ds = Dataset(np.array([[[1.0], [1.2]]]), TimeGrid.uniform(1, 1.0), (base,))
    np.testing.assert_allclose(denormalize(ds).values[0, :, 0], [5.0, 6.0])
    ds = normalize(make_dataset([[1.0, 2.0]]), "none")
    np.testing.assert_array_equal(denormalize(ds).values, ds.values)


def test_denormalize_without_metadata():
    with pytest.raises(StateError):
        denormalize(make_dataset([[1.0, 2.0]]))


@pytest.mark.parametrize("kind", ["base_one", "standard", "increments_rescale"])
@pytest.mark.parametrize("scope", ["pooled", "per_series"])
def test_normalize_round_trip(kind, scope):
    v = np.random.default_rng(3).uniform(0.5, 2.0, (4, 7, 3))
    ds = make_dataset(v)
    chained = normalize(normalize(ds, "base_one"), kind, scope)
    np.testing.assert_allclose(denormalize(chained).values, v, rtol=1e-12)


def test_normalization_errors_name_location():
    v = np.ones((2, 3, 2))
    v[1, 0, 1] = 0.0
    with pytest.raises(NormalizationError, match="series 1, dimension 1"):
        normalize(make_dataset(v), "base_one")
    with pytest.raises(NormalizationError, match="dimension 0"):
        normalize(make_dataset(np.ones((2, 3, 1))), "standard")


def test_increments_rescale_variance():
    v = np.cumsum(np.random.default_rng(1).normal(0, 3, (50, 20, 1)), axis=1)
    ds = make_dataset(v, dt=0.25)
    inc = np.diff(normalize(ds, "increments_rescale").values, axis=1)
    assert abs(inc.var() - 0.25) < 1e-12


def test_pooled_standard_inverts_on_new_series():
    v = np.random.default_rng(2).uniform(1, 2, (5, 4, 1))
    v[:, 0] = 1.0
    ds = normalize(make_dataset(v), "standard")
    fresh = ds.with_values(np.zeros((9, 4, 1)))
    assert denormalize(fresh).values.shape == (9, 4, 1)


# ---------------------------------------------------------------- configuration


def test_reference_params_validation():
    with pytest.raises(DomainError):
        ReferenceParams(1.0, -1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        ReferenceParams(1.0, 1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        ReferenceParams(0.0, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        ReferenceParams(0.5, 1.0, 0.0, 1.0, pure_jump=True)
    with pytest.raises(SizeError):
        ReferenceParams((1.0, 2.0), 1.0, (0.0, 0.0, 0.0), 1.0)
    p = ReferenceParams((1.0, 2.0), 1.0, 0.0, 0.5)
    assert p.c == (0.0, 0.0) and p.gamma == (0.5, 0.5)


def test_auto_truncation_tail():
    from scipy import stats

    for lam, dt in [(70.0, 1 / 252), (1000.0, 1 / 252), (1.0, 1.0)]:
        n = auto_n_jumps(lam, dt)
        assert stats.poisson.sf(n, lam * dt) < 1e-10
        assert n == 0 or stats.poisson.sf(n - 1, lam * dt) >= 1e-10
    assert auto_n_jumps(0.0, 1.0) == 0 and auto_n_jumps(0.0, 1.0, pure_jump=True) == 1
    assert ReferenceParams(1.0, 70.0, 0.0, 1.0).resolved(1 / 252, override=30).n_jumps_trunc == 30


def test_kernel_config_validation():
    with pytest.raises(DomainError):
        KernelConfig(0.0)
    with pytest.raises(DomainError):
        KernelConfig(0.3, 0)
    with pytest.raises(DomainError):
        KernelConfig(0.3, 5).check_grid(4)


# ---------------------------------------------------------------- rng


def test_substreams_are_reproducible_and_distinct():
    spec = RngSpec(42)
    a = spec.generator("path", 3, 7).random(4)
    np.testing.assert_array_equal(a, RngSpec(42).generator("path", 3, 7).random(4))
    keys = [(p, m, i) for p in ("path", "disc") for m in range(20) for i in range(20)]
    firsts = {RngSpec(42).generator(*k).integers(0, 2**63) for k in keys}
    assert len(firsts) == len(keys)
    assert not np.array_equal(a, RngSpec(43).generator("path", 3, 7).random(4))


def test_child_spec_differs_from_parent():
    spec = RngSpec(5)
    child = spec.child("lambda0", 2)
    assert child.master_seed != spec.master_seed
    assert child == spec.child("lambda0", 2) and child != spec.child("lambda0", 3)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 10.0), min_size=3, max_size=8))
def test_base_one_standard_round_trip_property(xs):
    v = np.array(xs)[None, :, None]
    ds = make_dataset(v)
    out = normalize(ds, "base_one")
    if np.ptp(out.values[:, 1:]) > 1e-9:
        out = normalize(out, "standard")
    np.testing.assert_allclose(denormalize(out).values, v, rtol=1e-10)


def test_norm_record_json_round_trip():
    rec = NormRecord("standard", {"mean": np.array([1.0, 2.0]), "std": np.array([0.5, 3.0]), "start": np.zeros((2, 2))})
    back = NormRecord.from_json(json.loads(json.dumps(rec.to_json())))
    assert back.kind == "standard"
    np.testing.assert_array_equal(back.params["std"], rec.params["std"])
