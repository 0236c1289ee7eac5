"""Logged-dataset container, reference weights, validation, JSONL round trip."""

import io

import numpy as np
import pytest

from iswerm_lab.data import (LoggedDataset, ReferenceWeight, load_jsonl,
                             save_jsonl, validate_dataset)


def make_ds(T=6, K=2, d=1, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(T, d))
    A = rng.integers(0, K, size=T)
    A[:K] = np.arange(K)  # honor the every-arm-sampled invariant
    Y = rng.standard_normal(T)
    EPS = np.full(T, 0.5)
    G = np.where(rng.random(T) < 0.5, 0.25, 0.75)
    return LoggedDataset(X=X, A=A, Y=Y, G=G, EPS=EPS, K=K, beta=0.0, seed=seed)


def test_fields_and_shapes():
    ds = make_ds()
    assert ds.T == 6 and ds.d == 1 and len(ds) == 6
    assert ds.X.dtype == np.float64 and ds.A.dtype == np.int64
    r = ds.record(2)
    assert r.t == 3  # t is 1-based
    assert r.a == ds.A[2] and r.g == ds.G[2]
    assert [rec.t for rec in ds.records()] == list(range(1, 7))


def test_arrays_read_only():
    ds = make_ds()
    with pytest.raises(ValueError):
        ds.Y[0] = 99.0


def test_validate_clean_dataset():
    assert validate_dataset(make_ds()) == []


def test_validate_flags_bad_propensity():
    ds = make_ds()
    G = ds.G.copy()
    G[3] = 0.0
    bad = LoggedDataset(X=ds.X, A=ds.A, Y=ds.Y, G=G, EPS=ds.EPS, K=ds.K,
                        beta=ds.beta)
    msgs = validate_dataset(bad)
    assert any("propensity" in m for m in msgs)


def test_validate_flags_floor_violation():
    # propensity below eps/K breaks the greedy-mixture floor
    ds = make_ds()
    G = ds.G.copy()
    G[4] = 0.2  # eps/K = 0.25
    bad = LoggedDataset(X=ds.X, A=ds.A, Y=ds.Y, G=G, EPS=ds.EPS, K=ds.K,
                        beta=ds.beta)
    assert any("floor" in m or "eps" in m for m in validate_dataset(bad))


def test_validate_flags_missing_arm():
    ds = make_ds()
    A = np.zeros(ds.T, dtype=np.int64)  # arm 1 never sampled
    bad = LoggedDataset(X=ds.X, A=A, Y=ds.Y, G=ds.G, EPS=ds.EPS, K=ds.K,
                        beta=ds.beta)
    assert any("arm" in m for m in validate_dataset(bad))


def test_jsonl_round_trip_bit_exact():
    ds = make_ds(T=9, K=3, d=2, seed=5)
    buf = io.StringIO()
    save_jsonl(ds, buf)
    buf.seek(0)
    back = load_jsonl(buf)
    assert back.K == ds.K and back.beta == ds.beta and back.seed == ds.seed
    for name in ("X", "A", "Y", "G", "EPS"):
        assert np.array_equal(getattr(back, name), getattr(ds, name)), name


def test_reference_weight_densities():
    one = ReferenceWeight.constant_one()
    uni = ReferenceWeight.uniform()
    dir2 = ReferenceWeight.dirac(2)
    assert np.array_equal(one.arm_values(4), np.ones(4))
    assert np.array_equal(uni.arm_values(4), np.full(4, 0.25))
    assert np.array_equal(dir2.arm_values(4), [0.0, 0.0, 1.0, 0.0])
    assert one.sup_density(4) == 1.0
    assert uni.sup_density(4) == 0.25
    assert dir2.sup_density(4) == 1.0


def test_reference_weight_validation():
    with pytest.raises(ValueError):
        ReferenceWeight("nope")
    with pytest.raises(ValueError):
        ReferenceWeight.dirac(-1)
    with pytest.raises(ValueError):
        ReferenceWeight.dirac(5).arm_values(3)
