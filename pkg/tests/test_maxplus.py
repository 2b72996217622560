import numpy as np
import pytest

from xylab.core.errors import SearchTooLargeError
from xylab.services import transfer
from xylab.services.maxplus import limit_marginal, periodic_orbit_oracle, solve_maxplus, uniqueness_probe


def test_zero_potential(zero, grid32):
    sub = solve_maxplus(zero, grid32)
    assert sub.beta_f == 0.0
    assert np.all(sub.V == 0.0)


def test_cosine_has_constant_subaction(cosine_sub):
    assert cosine_sub.beta_f == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(cosine_sub.V, 0.0, atol=1e-12)
    assert cosine_sub.calibration_residual < 1e-12


def test_pinned_xy_fixed_point(pinned_sub):
    assert pinned_sub.beta_f == pytest.approx(1.5, abs=1e-10)
    assert pinned_sub.calibration_residual < 1e-9
    assert pinned_sub.V[pinned_sub.reference_state] == 0.0
    assert np.min(pinned_sub.r_plus) >= -1e-9


@pytest.mark.parametrize("name", ["cosine", "xy_pair", "xy_pinned"])
def test_policy_iteration_agrees(name, request, grid32):
    pot = request.getfixturevalue(name)
    value = solve_maxplus(pot, grid32)
    policy = solve_maxplus(pot, grid32, method="policy")
    assert policy.beta_f == pytest.approx(value.beta_f, abs=1e-9)
    assert policy.calibration_residual < 1e-9
    if name == "xy_pinned":
        assert np.allclose(policy.V, value.V, atol=1e-8)


def test_additive_covariance(xy_pinned, grid32):
    base = solve_maxplus(xy_pinned, grid32)
    moved = solve_maxplus(xy_pinned.shifted(0.7), grid32)
    assert moved.beta_f == pytest.approx(base.beta_f + 0.7, abs=1e-9)
    assert np.allclose(moved.V, base.V, atol=1e-9)
    assert moved.argmax_policy == base.argmax_policy


def test_unknown_method(cosine, grid32):
    with pytest.raises(ValueError):
        solve_maxplus(cosine, grid32, method="simplex")


def test_orbit_oracle(zero, cosine, xy_pinned, grid32):
    best, orbit = periodic_orbit_oracle(zero, grid32, 2)
    assert best == 0.0
    best, orbit = periodic_orbit_oracle(cosine, grid32, 3)
    assert best == pytest.approx(1.0)
    assert orbit.periodic_tail == (0.0,)
    best, orbit = periodic_orbit_oracle(xy_pinned, grid32, 3)
    assert best == pytest.approx(1.5)
    assert orbit.periodic_tail == (0.0,)


@pytest.mark.parametrize("max_period", [1, 2, 3])
def test_beta_dominates_orbit_oracle(xy_pinned, pinned_sub, grid64, max_period):
    best, _ = periodic_orbit_oracle(xy_pinned, grid64, max_period)
    assert pinned_sub.beta_f >= best - 1e-10


def test_orbit_oracle_guard(cosine, grid64):
    with pytest.raises(SearchTooLargeError):
        periodic_orbit_oracle(cosine, grid64, 5)


def test_uniqueness_cosine(cosine_sub):
    report = uniqueness_probe(cosine_sub)
    assert report.unique
    assert report.verdict == "uniqueness plausible"
    assert report.recurrent_classes == [[0]]
    assert report.support_angles == [[0.0]]


def test_uniqueness_pinned(pinned_sub):
    report = uniqueness_probe(pinned_sub)
    assert report.unique
    assert report.support_states == [0]


def test_xy_pair_is_degenerate(xy_pair, grid32):
    report = uniqueness_probe(solve_maxplus(xy_pair, grid32))
    assert report.degenerate
    assert report.verdict == "degenerate"
    assert sorted(report.recurrent_classes) == [[s] for s in range(32)]


def test_zero_is_degenerate(zero, grid32):
    report = uniqueness_probe(solve_maxplus(zero, grid32))
    assert report.degenerate
    assert report.recurrent_classes == [list(range(32))]


def test_limit_marginal_is_point_mass(cosine_sub):
    marginal = limit_marginal(cosine_sub, uniqueness_probe(cosine_sub))
    assert marginal[0] == 1.0
    assert marginal.sum() == 1.0


def test_vanishing_temperature_subaction(cosine, cosine_sub, grid128):
    es = transfer.leading_eigensystem(transfer.build_kernel(cosine, 200.0, grid128))
    V_c = es.log_h / es.c
    diff = V_c - cosine_sub.V
    assert np.max(diff) - np.min(diff) < 0.05


def test_pinned_subaction_matches_small_temperature(xy_pinned, pinned_sub, grid64):
    es = transfer.leading_eigensystem(transfer.build_kernel(xy_pinned, 200.0, grid64))
    diff = es.log_h / es.c - pinned_sub.V
    assert np.max(diff) - np.min(diff) < 0.1
