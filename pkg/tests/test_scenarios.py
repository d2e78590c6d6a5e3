import numpy as np
import pytest

from abc_optimal.scenarios import (
    SCENARIOS,
    TABLE_SCHEMES,
    compare_to_reference,
    compute_row,
    get_scenario,
    reference_table,
)

REF = reference_table()


def published(case, scheme):
    cell = REF["cases"][case][scheme]
    return cell["A"], cell["B"], cell["omega"]


def assert_row_matches(case, scheme):
    _, r = compute_row(get_scenario(case), scheme)
    A, B, omega = published(case, scheme)
    tol = REF["tolerance"]
    assert abs(r.A - A) <= tol["A"]
    assert abs(r.B - B) <= tol["B"]
    assert abs(r.omega - omega) <= tol["omega"]


@pytest.mark.parametrize("scheme", TABLE_SCHEMES)
def test_case_i_column(scheme):
    assert_row_matches("I", scheme)


def test_case_ii_optimal_row():
    assert_row_matches("II", "optimal")


def test_case_iii_posterior_row():
    assert_row_matches("III", "posterior")


def test_reference_file_is_complete():
    assert set(REF["cases"]) == set(SCENARIOS)
    for case in REF["cases"].values():
        assert set(case) == set(TABLE_SCHEMES)


def test_posterior_rows_have_unit_B():
    for key, scenario in SCENARIOS.items():
        _, r = compute_row(scenario, "posterior")
        assert r.B == pytest.approx(1.0, abs=2e-6)


def test_compare_flags_bad_cells():
    _, r = compute_row(get_scenario("I"), "posterior")
    fake = dict(REF, cases={"I": {"posterior": {"A": 3.0, "B": 1.0, "omega": 3.57}}})
    cells = compare_to_reference([("I", "posterior", r)], fake)
    flags = {column: ok for _, _, column, _, _, _, ok in cells}
    assert flags == {"A": False, "B": True, "omega": True}


def test_unknown_scenario():
    with pytest.raises(KeyError, match="IV"):
        get_scenario("IV")


def curve_values(case, theta):
    s = get_scenario(case)
    theta = np.atleast_1d(theta)
    out = {"posterior": s.posterior.pdf(theta)}
    for scheme in ("beaumont_kde", "geometric_mean", "bounded", "optimal"):
        out[scheme] = s.proposal(scheme).density.pdf(theta)
    return out


def test_case_i_peak_ordering():
    v = curve_values("I", 0.0)
    assert v["optimal"] > v["bounded"] > v["geometric_mean"] > v["beaumont_kde"]


def test_case_i_optimal_tail_heavier_than_posterior():
    v = curve_values("I", 6.0)
    assert v["optimal"] > v["posterior"]


def test_case_ii_curves_positive_between_modes():
    for values in curve_values("II", np.linspace(-1, 1, 21)).values():
        assert np.all(np.isfinite(values)) and np.all(values > 0)


def test_case_iii_proposals_live_on_prior_support():
    v = curve_values("III", np.array([-1.0, 31.0]))
    for scheme in ("beaumont_kde", "geometric_mean", "bounded", "optimal"):
        assert np.all(v[scheme] == 0)
