import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npergm.combine import (
    CurveFamily,
    band_depth,
    combine,
    evaluate_curve_family,
    mean_curve,
    mean_model,
    modified_band_depth,
    select_median,
    write_combined_json,
    write_curves_csv,
)
from npergm.errors import DegenerateFamilyError, EmptySummaryError
from npergm.npfit import CONVERGED, NO_FIT, NpModel, fit_np_all
from oracles import brute_band_depths


def _model(round, theta0, u, zeroed=(False, False), status=CONVERGED, x_max=(40.0, 10.0)):
    u = np.asarray(u, dtype=float)
    return NpModel(round, status, theta0, u, np.ones(2), np.ones(2, dtype=int),
                   np.asarray(zeroed), np.asarray(x_max))


def _family(F):
    F = np.asarray(F, dtype=float)
    return CurveFamily([np.arange(F.shape[1] - 1.0)], F, np.arange(1, len(F) + 1))


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_depths_match_pair_enumeration(seed, ties):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(8, 6)).cumsum(axis=1)
    if ties:
        F = np.round(F)
        F[3] = F[5]
    d = modified_band_depth(F)
    bd, mbd = brute_band_depths(F)
    assert np.array_equal(d.bd, bd)
    assert np.allclose(d.mbd, mbd, rtol=0, atol=1e-15)


def test_nested_constants_select_middle():
    f = _family([[0.0] * 4, [1.0] * 4, [2.0] * 4])
    d = modified_band_depth(f)
    assert d.bd[1] > d.bd[0] and d.bd[1] > d.bd[2]
    models = [_model(k, 0.0, np.zeros((2, 20))) for k in (1, 2, 3)]
    assert select_median(f, models).round == 2


def test_duplicates_get_equal_depths():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(7, 5))
    F[6] = F[2]
    d = modified_band_depth(F)
    assert d.bd[6] == d.bd[2] and d.mbd[6] == d.mbd[2]


def test_mbd_sum_is_constant_without_ties():
    rng = np.random.default_rng(1)
    m, T = 9, 12
    sums = set()
    for _ in range(5):
        F = rng.normal(size=(m, T))
        sums.add(round(modified_band_depth(F).mbd.sum(), 12))
    assert len(sums) == 1


def test_depth_invariances():
    rng = np.random.default_rng(2)
    F = rng.normal(size=(10, 8)).cumsum(axis=1)
    base = modified_band_depth(F)
    for G in (np.exp(F), 3.0 * F + 1.0, F[:, ::-1]):
        d = modified_band_depth(G)
        assert np.array_equal(d.bd, base.bd) and np.allclose(d.mbd, base.mbd)


def test_selection_is_permutation_invariant():
    rng = np.random.default_rng(3)
    F = rng.normal(size=(12, 6)).cumsum(axis=1)
    models = [_model(k, 0.0, np.zeros((2, 20))) for k in range(1, 13)]
    f = _family(F)
    want = select_median(f, models).round
    perm = rng.permutation(12)
    g = CurveFamily(f.grids, F[perm], f.round_ids[perm])
    assert select_median(g, models).round == want
    scaled = CurveFamily(f.grids, 2.5 * F, f.round_ids)
    assert select_median(scaled, models).round == want


def test_ties_broken_by_lowest_round():
    F = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [2.0, 2.0]])
    models = [_model(k, 0.0, np.zeros((2, 20))) for k in (4, 7, 2, 9)]
    f = CurveFamily([np.arange(1.0)], F, [4, 7, 2, 9])
    assert select_median(f, models).round == 2


def test_too_few_curves():
    with pytest.raises(DegenerateFamilyError):
        modified_band_depth(np.ones((2, 3)))


def test_band_depth_is_not_constant_sum():
    # band depth with J = 2 need not sum to a constant, unlike MBD
    a = band_depth(np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]]))
    b = band_depth(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))
    assert a.sum() != b.sum()


def test_curve_family_rows(basis):
    rng = np.random.default_rng(4)
    u1 = np.abs(rng.normal(size=(2, 20)))
    u2 = np.vstack([np.zeros(20), np.abs(rng.normal(size=20))])
    models = [
        _model(1, -2.0, u1), _model(2, -1.0, u2, zeroed=(True, False), x_max=(60.0, 5.0)),
        _model(3, 0.0, u1, status=NO_FIT),
    ]
    f = evaluate_curve_family(models, basis, G=50)
    assert f.m == 2 and list(f.round_ids) == [1, 2]
    assert f.grids[0][-1] == 60.0 and f.grids[1][-1] == 10.0
    assert f.curves[0, 0] == -2.0
    assert np.max(np.abs(f.segment(1)[0] - basis.values(f.grids[1]) @ u1[1])) < 1e-12
    assert np.all(f.segment(0)[1] == 0.0)
    with pytest.raises(EmptySummaryError):
        evaluate_curve_family(models[2:], basis)
    one = evaluate_curve_family(models[:1], basis)
    assert one.m == 1


def test_mean_curve_equals_curve_of_mean_coefficients(basis):
    rng = np.random.default_rng(5)
    models = [_model(k, rng.normal(), np.abs(rng.normal(size=(2, 20)))) for k in range(1, 6)]
    f = evaluate_curve_family(models, basis, G=30)
    mm = mean_model(models)
    direct = np.concatenate([[mm.theta0]] + [basis.values(g) @ mm.u[l] for l, g in enumerate(f.grids)])
    assert np.max(np.abs(mean_curve(f) - direct)) < 1e-12
    two = CurveFamily(f.grids, np.vstack([np.zeros(61), np.full(61, 3.0)]), [1, 2])
    assert np.allclose(mean_curve(two), 1.5)


def test_combine_outputs(tmp_path, geo100, basis):
    models, _ = fit_np_all(geo100)
    c = combine(models, basis, G=40)
    assert c.median.model.status == CONVERGED
    assert c.median.round == c.family.round_ids[c.median.index]
    write_combined_json(c, basis, tmp_path / "c.json")
    rec = json.loads((tmp_path / "c.json").read_text())
    assert rec["median_round"] == c.median.round
    assert len(rec["depths"]) == c.family.m and len(rec["mean"]) == 81
    write_curves_csv(c, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "curve,term,x,value"
    assert len(lines) == 1 + (c.family.m + 2) * 81
    write_curves_csv(None, tmp_path / "e.csv")
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 1
