import numpy as np

from abc_optimal.verify import (
    GroupResult,
    check_holder,
    check_jensen,
    random_pair,
    run_invariants,
)


def test_group_result_reports_first_failure():
    g = GroupResult("demo")
    g.check(True, "fine")
    g.check(False, "broken 1")
    g.check(False, "broken 2")
    assert not g.passed and g.checks == 3
    assert g.line() == "[FAIL] demo: 3 checks, 2 failed; first: broken 1"


def test_random_pairs_have_wider_prior():
    rng = np.random.default_rng(1)
    for _ in range(30):
        p, prior = random_pair(rng)
        assert prior.var >= p.var * (1 - 1e-12)


def test_jensen_sweep_has_fifty_cases():
    g = check_jensen(np.random.default_rng(2), 50)
    assert g.passed and g.checks == 100


def test_corrupted_a_bar_fails_only_holder():
    assert check_holder().passed
    assert not check_holder(corrupt_A_bar=True).passed


def test_all_groups_pass_for_other_seeds():
    assert all(g.passed for g in run_invariants(seed=7))
