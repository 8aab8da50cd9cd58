import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from regime_kit.data import (
    CohortDataset,
    DataError,
    Rescaler,
    Trajectory,
    build_stage_sample,
    pseudo_missingness_indicator,
    read_cohort_csv,
    rescale_covariates,
    write_cohort_csv,
)
from regime_kit.simgen import ScenarioSpec, generate_scenario


def _two_stage(patterns):
    n = len(patterns)
    X1 = np.arange(2 * n, dtype=float).reshape(n, 2)
    X2 = np.arange(2 * n, dtype=float).reshape(n, 2) + 100
    for i, (r1, r2) in enumerate(patterns):
        if not r1:
            X1[i, 1] = np.nan
        if not r2:
            X2[i, 0] = np.nan
    A = np.tile([1, -1], (n, 1))
    Y = np.ones((n, 2))
    return CohortDataset([X1, X2], A, Y)


def test_full_cohort_when_nothing_missing():
    c = _two_stage([(1, 1)] * 5)
    assert build_stage_sample(c, 1).n == 5
    assert build_stage_sample(c, 2).n == 5


def test_stage_sample_membership():
    c = _two_stage([(1, 1), (1, 0), (0, 1)])
    S2 = build_stage_sample(c, 2)
    assert S2.ids.tolist() == [0]
    S1 = build_stage_sample(c, 1)
    assert S1.ids.tolist() == [0, 1]


def test_history_layout_and_names():
    c = _two_stage([(1, 1)] * 3)
    S = build_stage_sample(c, 2)
    assert S.names == ["X1_1", "X1_2", "A1", "Y1", "X2_1", "X2_2"]
    assert np.array_equal(S.H[:, 2], c.A[:, 0])
    assert np.array_equal(S.H[:, 4:], c.X[1])


def test_pseudo_missingness_indicator():
    c = _two_stage([(1, 1), (1, 0), (1, 1), (0, 1)])
    assert pseudo_missingness_indicator(c, 1).tolist() == [1, 0, 1]
    assert pseudo_missingness_indicator(c, 2).tolist() == [1, 1]


def test_nesting_and_membership_on_simulated_cohort():
    c, _ = generate_scenario(ScenarioSpec("SIM2", 2000, seed=3))
    r1 = set(build_stage_sample(c, 1).rows.tolist())
    r2 = set(build_stage_sample(c, 2).rows.tolist())
    assert r2 <= r1
    R = c.R
    assert r2 == set(np.flatnonzero(R.min(axis=1) == 1).tolist())


def test_sim1_complete_case_size():
    c, _ = generate_scenario(ScenarioSpec("SIM1", 100_000, seed=1))
    frac = build_stage_sample(c, 1).n / c.n
    assert abs(frac - (1 - 0.132)) < 0.005


def test_sim2_pseudo_missing_rate_matches_generator():
    # Monte Carlo oracle: average of the true stage-2 response probability over S_1
    c, truth = generate_scenario(ScenarioSpec("SIM2", 100_000, seed=4))
    S = build_stage_sample(c, 1)
    zeros = 1 - pseudo_missingness_indicator(c, 1).mean()
    expected = 1 - truth.pi_pseudo[S.rows].mean()
    assert abs(zeros - expected) < 0.006


def test_rescaling_examples():
    rs = Rescaler.fit(np.array([[0.0], [2.0]]))
    assert rs.transform(np.array([[0.0], [2.0]])).ravel().tolist() == [0.0, 1.0]
    assert rs.transform(np.array([[3.0]]))[0, 0] == 1.0
    const = Rescaler.fit(np.array([[4.0], [4.0], [4.0]]))
    assert const.degenerate.tolist() == [True]
    assert np.all(const.transform(np.array([[4.0], [7.0]])) == 0.5)


def test_binary_treatment_columns_map_to_unit():
    c = _two_stage([(1, 1)] * 4)
    S = build_stage_sample(c, 2)
    assert np.array_equal(S.unit[:, 2], (c.A[:, 0] + 1) / 2)


@given(arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3)))
def test_rescaling_round_trip(H):
    rs = Rescaler.fit(H)
    back = rs.inverse(rs.transform(H))
    ok = ~rs.degenerate
    assert np.allclose(back[:, ok], H[:, ok], rtol=0, atol=1e-12 * max(1.0, np.abs(H).max()))
    Z = rs.transform(H)
    assert Z.min() >= 0 and Z.max() <= 1


def test_rescale_covariates_refits_record():
    c = _two_stage([(1, 1)] * 4)
    S = rescale_covariates(build_stage_sample(c, 1))
    assert S.unit.min() == 0 and S.unit.max() == 1


def test_structural_errors():
    with pytest.raises(DataError):
        CohortDataset([np.zeros((3, 2))], np.array([1, 0, 1]), np.zeros(3))
    with pytest.raises(DataError):
        CohortDataset([np.zeros((3, 2)), np.zeros((2, 2))], np.ones((3, 2)), np.zeros((3, 2)))
    with pytest.raises(DataError):
        build_stage_sample(_two_stage([(1, 1)]), 3)


def test_trajectory_round_trip():
    c = _two_stage([(1, 1), (0, 1), (1, 0)])
    trajs = c.trajectories()
    assert trajs[1].complete == (0, 1)
    back = CohortDataset.from_trajectories(trajs)
    assert np.array_equal(back.R, c.R)
    assert np.array_equal(back.A, c.A)
    with pytest.raises(DataError):
        CohortDataset.from_trajectories([trajs[0], Trajectory(9, (np.zeros(2),), (1,), (0.0,))])


def test_csv_round_trip(tmp_path):
    c, _ = generate_scenario(ScenarioSpec("SIM2", 50, seed=2))
    p = tmp_path / "c.csv"
    write_cohort_csv(c, p)
    back = read_cohort_csv(p)
    for x, y in zip(c.X, back.X):
        assert np.array_equal(np.isnan(x), np.isnan(y))
        assert np.allclose(np.nan_to_num(x), np.nan_to_num(y))
    assert np.array_equal(back.Y, c.Y)


def test_csv_rejects_missing_treatment(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,X1_1,A1,Y1\n0,1.0,,2.0\n")
    with pytest.raises(DataError):
        read_cohort_csv(p)
