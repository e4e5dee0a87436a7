import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridhj.errors import RegionViolation, TransferUndefined
from hybridhj.export import dumps
from hybridhj.verify import (
    PASS_TOL_FD,
    Region,
    SolutionFamily,
    TransferMap,
    antisymmetric_norm,
    closedness_defect,
    complete_solution_check,
    delta_relatedness_check,
    lift_defect,
    momentum_rows,
    residual_conservative,
    residual_forced,
    residual_nonholonomic,
)
from hybridhj.scenarios import billiard, disk, particle, rigid_body
from hybridhj.scenarios.base import box_points, make_impacts

from .oracles import nh_param_jacobian, nh_xy_determinant

UNIT_DISK = [Region(0, lambda q: float(q @ q) < 1.0)]


def constant_family(n, regions=UNIT_DISK):
    return SolutionFamily(regions, lambda k, q, lam: np.array(lam[:n], dtype=float), n,
                          jacobian=lambda k, q, lam: np.zeros((n, n)),
                          param_jacobian=lambda k, q, lam: np.eye(n))


def disk_points(count):
    return box_points([-1, -1], [1, 1], count, 0, keep=lambda q: q @ q < 0.98)


# --- conservative ------------------------------------------------------------------


def test_billiard_constant_covector_is_a_solution():
    rep = residual_conservative(billiard.model(), constant_family(2), 0, [0.3, -1.2], disk_points(200))
    assert rep.channels == {"hj": 0.0, "closedness": 0.0}
    assert rep.passed


def test_non_closed_form_is_flagged():
    fam = SolutionFamily(UNIT_DISK, lambda k, q, lam: np.array([q[1], 0.0]), 0,
                         jacobian=lambda k, q, lam: np.array([[0.0, 1.0], [0.0, 0.0]]))
    rep = residual_conservative(billiard.model(), fam, 0, [], disk_points(50))
    assert rep.channels["closedness"] == 1.0
    assert not rep.passed


def test_disk_constant_covector_is_a_solution():
    sc = disk.build()
    rep = residual_conservative(sc.model, sc.family, 0, [0.4, -0.3, 1.2], sc.samples(0, 200))
    assert rep.max_residual == 0.0


def test_region_violation():
    with pytest.raises(RegionViolation):
        residual_conservative(billiard.model(), constant_family(2), 0, [1, 0], [np.array([2.0, 0.0])])


def test_finite_difference_mode_uses_loose_tolerance():
    fam = SolutionFamily(UNIT_DISK, lambda k, q, lam: np.array([np.cos(q[0]), 0.0]), 0)
    rep = residual_conservative(billiard.model(), fam, 0, [], disk_points(20))
    assert rep.tolerance == PASS_TOL_FD
    # H o gamma = cos(x)^2 / 2 is not constant
    assert rep.channels["hj"] > 0.1 and rep.channels["closedness"] <= 1e-8


@given(st.floats(-2, 2), st.floats(-2, 2), st.sampled_from([2.0, 10.0]))
def test_scaling_of_energy(a, b, s):
    m = billiard.model()
    q = np.array([0.2, 0.1])
    assert m.H(q, s * np.array([a, b])) == pytest.approx(s * s * m.H(q, np.array([a, b])), rel=1e-12, abs=1e-300)


# --- forced ------------------------------------------------------------------------


def test_forced_disk_family_is_a_solution():
    sc = disk.build(forced=True)
    rep = residual_forced(sc.model, sc.family, 0, sc.lam0, sc.samples(0, 300))
    assert rep.max_residual <= 1e-14


def test_zero_force_reduces_to_conservative():
    forced = disk.build(forced=True, B=0.0)
    plain = disk.build()
    pts = plain.samples(0, 50)
    lam = [0.3, 0.7, -0.2]
    a = residual_forced(forced.model, forced.family, 0, lam, pts)
    b = residual_conservative(plain.model, plain.family, 0, lam, pts)
    assert a.channels == b.channels


def test_wrong_slope_gives_predicted_residual():
    m_, B, dB = 1.0, 0.1, 0.05
    sc = disk.build(forced=True, B=B, slope_perturbation=dB)
    Bp = B * m_ + dB
    b = 0.4
    for y in (1.2, 1.5, 1.9):
        rep = residual_forced(sc.model, sc.family, 0, [0.1, b, 0.3], [np.array([0.0, y, 0.0])])
        expected = abs(Bp / m_ * (Bp * y + b) - B * (Bp * y + b))
        assert rep.channels["hj"] == pytest.approx(expected, rel=1e-12)


def test_residual_forced_needs_force():
    with pytest.raises(ValueError):
        residual_forced(billiard.model(), constant_family(2), 0, [1, 0], disk_points(3))


# --- nonholonomic ---------------------------------------------------------------------


def test_nh_family_all_channels():
    sc = particle.build()
    pts = box_points([-5, -5, -5], [5, 5, 5], 1000, 3)
    for lam in ([1.0, 1.0, 1.0], [-0.7, 2.0, -1.0]):
        rep = residual_nonholonomic(sc.model, sc.family, 0, lam, pts, check_region=False)
        assert set(rep.channels) == {"energy", "membership", "dgamma_D"}
        assert rep.max_residual <= 1e-10
        assert rep.details["energy_level"] == pytest.approx(lam[1], rel=1e-12)


def test_rigid_body_family_channels():
    sc = rigid_body.build()
    body = rigid_body.BodyFamily([1, 2, 3], [1, 1, 1])
    for lam1 in (-1.0, 0.3, 2.0):
        lam = [lam1, body.lambda2_from_energy(5.0, lam1, -1.0)]
        for k in (0, 1):
            rep = residual_nonholonomic(sc.model, sc.family, k, lam, sc.samples(k, 300))
            assert rep.channels["energy"] <= 1e-10 and rep.channels["membership"] <= 1e-10
            assert rep.channels["dgamma_D"] == 0.0
        assert body.energy(lam) == pytest.approx(5.0, rel=1e-12)


def test_membership_violation_is_detected():
    sc = particle.build()
    fam = SolutionFamily([Region(0, lambda q: True)], lambda k, q, lam: lam[0] * np.array([1.0, 0.0, 0.0]), 1)
    rep = residual_nonholonomic(sc.model, fam, 0, [2.0], [np.array([0.0, 0.5, 0.0])], check_region=False)
    assert rep.channels["membership"] == pytest.approx(1.0)
    assert not rep.passed


def test_flipped_sign_rigid_body_gamma_leaves_the_constraint():
    body = rigid_body.BodyFamily([1, 2, 3], [1, 1, 1])
    g = body.flipped_sign([0.5, 1.0])
    assert abs(np.array([1, 1, 1]) @ (g / np.array([1, 2, 3]))) > 0.1
    assert abs(np.array([1, 1, 1]) @ (body([0.5, 1.0]) / np.array([1, 2, 3]))) <= 1e-15


# --- closedness helpers ----------------------------------------------------------------


@given(arrays(float, (4, 4), elements=st.floats(-10, 10)))
def test_closedness_matches_antisymmetric_part(J):
    assert abs(closedness_defect(J) - antisymmetric_norm(J)) <= 1e-12


def test_closedness_of_symmetric_jacobian():
    J = np.array([[1.0, 2.0], [2.0, 3.0]])
    assert closedness_defect(J) == 0.0


# --- delta relatedness -----------------------------------------------------------------


def test_billiard_transfer_residual_vanishes():
    sc = billiard.build()
    rep = delta_relatedness_check(sc.spec, sc.family, sc.transfer, sc.impact_samples(100))
    assert rep.max_residual == 0.0


def test_billiard_transfer_displayed_relation():
    rng = np.random.default_rng(1)
    for th, a, b in zip(rng.uniform(-np.pi, np.pi, 20), rng.normal(size=20), rng.normal(size=20)):
        x, y = np.cos(th), np.sin(th)
        expected = [a - 2 * x * (x * a + y * b), b - 2 * y * (x * a + y * b)]
        assert np.allclose(billiard.build().transfer(0, 0, [a, b], [x, y]), expected, rtol=0, atol=1e-15)


def test_disk_transfer_residual_vanishes():
    sc = disk.build()
    rep = delta_relatedness_check(sc.spec, sc.family, sc.transfer, sc.impact_samples(100))
    assert rep.max_residual <= 1e-15


def test_rigid_body_identity_transfer():
    sc = rigid_body.build(eps=1.0)
    rep = delta_relatedness_check(sc.spec, sc.family, sc.transfer, sc.impact_samples(50))
    assert rep.max_residual == 0.0


def test_undefined_transfer_raises():
    sc = rigid_body.build(mu3=2.0, eps=2.0)
    with pytest.raises(TransferUndefined):
        delta_relatedness_check(sc.spec, sc.family, sc.transfer, sc.impact_samples(5))


def test_delta_residual_is_monotone_in_samples():
    sc = particle.build()
    bad = TransferMap(lambda k, l, lam, q: particle.transfer_plus_coefficient(lam, 0.8))
    samples = sc.impact_samples(60)
    small = delta_relatedness_check(sc.spec, sc.family, bad, samples[:10]).max_residual
    large = delta_relatedness_check(sc.spec, sc.family, bad, samples).max_residual
    assert large >= small > 0


# --- complete solutions -----------------------------------------------------------------


def test_billiard_family_is_complete():
    sc = billiard.build()
    rep = complete_solution_check(sc.spec, sc.family, sc.transfer, sc.parameter_grid(30), sc.impact_samples(30))
    assert rep.passed and rep.details["min_abs_det"] == 1.0


def test_rigid_body_without_transfer_is_not_complete():
    sc = rigid_body.build(mu3=2.0, eps=2.0)
    rep = complete_solution_check(sc.spec, sc.family, sc.transfer, sc.parameter_grid(10), sc.impact_samples(10))
    assert rep.error == "TransferUndefined" and not rep.passed
    assert rep.details["diffeo_passed"]


def test_rigid_body_identity_reset_is_complete():
    sc = rigid_body.build(eps=1.0, mu1=0.7, mu2=-0.4, mu3=2.5)
    rep = complete_solution_check(sc.spec, sc.family, sc.transfer, sc.parameter_grid(20), sc.impact_samples(20))
    assert rep.passed


@given(st.floats(0.01, 0.99), st.floats(-1.5, 1.5), st.floats(0.05, 2.0), st.sampled_from([1.0, -1.0]))
def test_nh_parameter_jacobian_matches_symbolic(y, lam, extra, sigma):
    E = 0.5 * lam * lam + extra
    q = np.array([0.0, y, 0.0])
    P = particle.gamma_param_jacobian(q, [lam, E, sigma])
    assert np.allclose(P, nh_param_jacobian(q, lam, E, sigma), rtol=1e-12, atol=1e-12)
    assert np.linalg.det(P[:2]) == pytest.approx(nh_xy_determinant(y, lam, E, sigma), rel=1e-12)


def test_nh_family_is_a_local_diffeomorphism_where_normal_speed_is_nonzero():
    sc = particle.build()
    rep = complete_solution_check(sc.spec, sc.family, sc.transfer, sc.parameter_grid(40), sc.impact_samples(40))
    assert rep.passed and rep.details["min_abs_det"] > 1e-10
    degenerate = [(0, np.array([0.0, 0.5, 0.0]), np.array([1.0, 0.5, 1.0]))]
    rep = complete_solution_check(sc.spec, sc.family, sc.transfer, degenerate, [])
    assert rep.error == "NotLocalDiffeomorphism"


def test_momentum_rows_span_the_constraint_fibre():
    sc = particle.build()
    for y in (0.0, 0.5, 3.0):
        rows = momentum_rows(sc.model, np.array([0.0, y, 0.0]))
        assert len(rows) == 2 and 1 in rows


# --- lifted curves ---------------------------------------------------------------------


def test_lift_defect_small_for_solutions_large_otherwise():
    sc = particle.build()
    good = lift_defect(sc.model, sc.family, 0, [1.0, 1.5, 1.0], np.array([0.0, 0.2, 0.0]), 0.5)
    assert good <= 10 * 1e-4 ** 2 * 10
    bogus = SolutionFamily([Region(0, lambda q: True)], lambda k, q, lam: np.array([1.0, q[0]]), 0)
    bad = lift_defect(billiard.model(), bogus, 0, [], np.array([0.0, 0.0]), 0.5)
    assert bad > 0.1


def test_forced_lift_defect():
    sc = disk.build(forced=True)
    assert lift_defect(sc.model, sc.family, 0, sc.lam0, sc.q0, 0.5) <= 1e-6


def test_report_serialises():
    sc = billiard.build()
    rep = residual_conservative(sc.model, sc.family, 0, sc.lam0, sc.samples(0, 5))
    text = dumps(rep.to_dict())
    assert '"passed": true' in text and '"sample_count": 5' in text


def test_make_impacts_labels():
    imps = make_impacts([[1.0, 0.0]], 0, 1, [[0.5, 0.5]])
    assert imps[0].from_region == 0 and imps[0].to_region == 1
