import json

import pytest

from ecs.verify import CHECKS, CheckResult, VerifyConfig, run_suite, suite_passed

FAST = ["rel", "veps", "theta_bound", "schur", "generating"]


@pytest.fixture(scope="module")
def fast_results():
    return run_suite(VerifyConfig(particles=(2,)), FAST)


def test_fast_subset_passes(fast_results):
    assert [r.name for r in fast_results] == FAST
    assert suite_passed(fast_results)
    for r in fast_results:
        assert r.residual <= r.tolerance


def test_records_serialize(fast_results):
    for r in fast_results:
        doc = r.as_dict()
        json.dumps(doc)
        assert doc["passed"] is True


def test_same_seed_same_residuals():
    a = run_suite(VerifyConfig(seed=3), ["rel", "theta_bound"])
    b = run_suite(VerifyConfig(seed=3), ["rel", "theta_bound"])
    assert [r.residual for r in a] == [r.residual for r in b]


def test_unknown_check():
    with pytest.raises(KeyError):
        run_suite(VerifyConfig(), ["nope"])


def test_informational_checks_do_not_gate():
    bad = CheckResult("x", "t", 2.0, 1.0, False, asserted=False)
    good = CheckResult("y", "t", 0.0, 1.0, True)
    assert suite_passed([bad, good])
    assert not suite_passed([CheckResult("z", "t", 2.0, 1.0, False), good])


def test_bound_checks_report_all_three():
    names = [r.name for r in run_suite(VerifyConfig(), ["phi_g_bounds"])]
    assert names == ["phi_bound", "g_bound", "phi_conjecture"]


@pytest.mark.slow
def test_full_suite():
    res = run_suite(VerifyConfig())
    assert set(CHECKS) <= {r.name for r in res} | {"phi_g_bounds"}
    assert suite_passed(res), [r.as_dict() for r in res if not r.passed]
