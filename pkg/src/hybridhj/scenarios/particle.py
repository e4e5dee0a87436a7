"""Nonholonomic particle in R^3 with constraint zdot = y xdot, bouncing between the planes y = 0 and y = a.

Family parameters are ``(lam, E, sigma)``: ``lam`` and the energy ``E`` are
continuous, ``sigma = +-1`` selects the branch of ``gamma_y``.
"""

from __future__ import annotations

import numpy as np

from ..errors import BadParameters
from ..hybrid import GuardSpec, HybridSystemSpec, ResetMap
from ..phase import ConstraintSet, DynamicsModel, PhasePoint
from ..verify import Region, SolutionFamily, TransferMap
from .base import OracleEvent, PiecewiseOracle, Scenario, box_points, make_impacts, resolve_params

DEFAULTS = {"a": 1.0, "e": 0.8}


def _normal_speed(lam: float, E: float) -> float:
    d = 2.0 * E - lam * lam
    if d < 0:
        if d > -1e-14 * max(1.0, abs(E)):
            return 0.0
        raise BadParameters(f"need 2E >= lam^2, got E={E}, lam={lam}")
    return float(np.sqrt(d))


def gamma(q, lam_vec) -> np.ndarray:
    lam, E = lam_vec[0], lam_vec[1]
    sigma = lam_vec[2] if len(lam_vec) > 2 else 1.0
    y = q[1]
    r = np.sqrt(1.0 + y * y)
    return np.array([lam / r, sigma * _normal_speed(lam, E), lam * y / r])


def gamma_jacobian(q, lam_vec) -> np.ndarray:
    lam = lam_vec[0]
    y = q[1]
    r3 = (1.0 + y * y) ** 1.5
    J = np.zeros((3, 3))
    J[0, 1] = -lam * y / r3
    J[2, 1] = lam / r3
    return J


def gamma_param_jacobian(q, lam_vec) -> np.ndarray:
    lam, E = lam_vec[0], lam_vec[1]
    sigma = lam_vec[2] if len(lam_vec) > 2 else 1.0
    y = q[1]
    r = np.sqrt(1.0 + y * y)
    A = _normal_speed(lam, E)
    P = np.zeros((3, 2))
    P[0, 0] = 1.0 / r
    P[2, 0] = y / r
    if A > 0:
        P[1, 0] = -sigma * lam / A
        P[1, 1] = sigma / A
    else:
        P[1, :] = np.nan
    return P


def transfer(lam_vec, e: float) -> np.ndarray:
    """``lam' = lam``, ``E' = e^2 E + (1 - e^2) lam^2 / 2`` and a branch flip.

    The energy update is what ``sqrt(2E' - lam^2) = e sqrt(2E - lam^2)`` gives
    after squaring.
    """
    lam, E = lam_vec[0], lam_vec[1]
    sigma = lam_vec[2] if len(lam_vec) > 2 else 1.0
    return np.array([lam, e * e * E + 0.5 * (1 - e * e) * lam * lam, -sigma])


def transfer_plus_coefficient(lam_vec, e: float) -> np.ndarray:
    """Energy update with coefficient ``(1 + e^2) / 2``; kept to show it breaks the matching."""
    lam, E = lam_vec[0], lam_vec[1]
    sigma = lam_vec[2] if len(lam_vec) > 2 else 1.0
    return np.array([lam, e * e * E + 0.5 * (1 + e * e) * lam * lam, -sigma])


def flow(t, q0, lam: float, A: float) -> np.ndarray:
    """Closed-form base curve after time ``t`` from ``q0`` with normal speed ``A``."""
    x0, y0, z0 = q0
    if A != 0.0:
        y = A * t + y0
        x = lam / A * (np.arcsinh(y) - np.arcsinh(y0)) + x0
        z = lam / A * (np.sqrt(y * y + 1) - np.sqrt(y0 * y0 + 1)) + z0
        return np.array([x, y, z])
    r0 = np.sqrt(1.0 + y0 * y0)
    return np.array([lam * t / r0 + x0, y0, lam * y0 * t / r0 + z0])


def oracle_for(a: float, e: float):
    def oracle(q0, lam0, horizon: float) -> PiecewiseOracle:
        q = np.asarray(q0, dtype=float)
        lv = np.array([lam0[0], lam0[1], lam0[2] if len(lam0) > 2 else 1.0], dtype=float)
        t = 0.0
        pieces, events = [], []
        while True:
            lam = lv[0]
            A = lv[2] * _normal_speed(lv[0], lv[1])

            def state(s, t0=t, q0=q.copy(), lv=lv.copy(), lam=lam, A=A):
                qq = flow(s - t0, q0, lam, A)
                return np.concatenate([qq, gamma(qq, lv)])

            pieces.append((t, state))
            if A > 0:
                dt = (a - q[1]) / A
            elif A < 0:
                dt = -q[1] / A
            else:
                break
            if t + dt > horizon:
                break
            xm = state(t + dt)
            t += dt
            q = xm[:3].copy()
            q[1] = a if A > 0 else 0.0
            lv = transfer(lv, e)
            events.append(OracleEvent(t, xm, np.concatenate([q, gamma(q, lv)])))
        return PiecewiseOracle(pieces, events)

    return oracle


def build(**overrides) -> Scenario:
    params = resolve_params("nh_particle", DEFAULTS, overrides)
    a, e = params["a"], params["e"]
    if not a > 0:
        raise BadParameters(f"wall distance a must be positive, got {a}")
    if not 0 < e <= 1:
        raise BadParameters(f"e must lie in (0, 1], got {e}")

    def dmu(q):
        d = np.zeros((1, 3, 3))
        d[0, 0, 1] = -1.0
        return d

    model = DynamicsModel(
        n=3,
        H=lambda q, p: 0.5 * float(p @ p),
        dH_dq=lambda q, p: np.zeros(3),
        dH_dp=lambda q, p: np.array(p, dtype=float),
        constraints=ConstraintSet(1, lambda q: np.array([[-q[1], 0.0, 1.0]]), dmu),
        mass_matrix=lambda q: np.eye(3),
        constant_metric=True,
    )
    guards = [
        GuardSpec(lambda q, p: q[1], "decreasing", 0),
        GuardSpec(lambda q, p: a - q[1], "decreasing", 1),
    ]
    spec = HybridSystemSpec(model, guards,
                            ResetMap(lambda x: PhasePoint(x.q, np.array([x.p[0], -e * x.p[1], x.p[2]]))))

    family = SolutionFamily(
        regions=[Region(0, lambda q: 0.0 < q[1] < a, "between the planes")],
        gamma=lambda k, q, lam: gamma(q, lam),
        param_dim=2,
        jacobian=lambda k, q, lam: gamma_jacobian(q, lam),
        param_jacobian=lambda k, q, lam: gamma_param_jacobian(q, lam),
    )

    def check_lambda(lam):
        if len(lam) < 2:
            raise BadParameters("nh_particle family needs (lam, E[, sigma])")
        _normal_speed(lam[0], lam[1])
        if len(lam) > 2 and abs(lam[2]) != 1.0:
            raise BadParameters(f"branch sign must be +1 or -1, got {lam[2]}")

    def samples(k, count, seed=0):
        return box_points([-5.0, 1e-3 * a, -5.0], [5.0, a * (1 - 1e-3), 5.0], count, seed)

    def random_lambdas(rng, count):
        lam = rng.uniform(-2, 2, count)
        E = 0.5 * lam ** 2 + rng.uniform(0.1, 2.0, count)
        sigma = np.where(rng.uniform(size=count) < 0.5, -1.0, 1.0)
        return np.column_stack([lam, E, sigma])

    def impact_samples(count, seed=0):
        rng = np.random.default_rng(seed)
        walls = np.where(np.arange(count) < count // 2, 0.0, a)
        qs = np.column_stack([rng.uniform(-5, 5, count), walls, rng.uniform(-5, 5, count)])
        return make_impacts(qs, 0, 0, random_lambdas(rng, count))

    def parameter_grid(count, seed=0):
        rng = np.random.default_rng(seed)
        return [(0, q, lam) for q, lam in zip(samples(0, count, seed), random_lambdas(rng, count))]

    q0 = np.array([0.0, 0.5 * a, 0.0])
    lam0 = np.array([1.0, 1.0, 1.0])
    return Scenario(
        name="nh_particle",
        params=params,
        schema=dict(DEFAULTS),
        spec=spec,
        x0=PhasePoint(q0, gamma(q0, lam0)),
        family=family,
        transfer=TransferMap(lambda k, l, lam, q: transfer(lam, e)),
        q0=q0,
        lam0=lam0,
        constants={},
        non_constants={"H": lambda x: 0.5 * float(x.p @ x.p)},
        samples=samples,
        impact_samples=impact_samples,
        parameter_grid=parameter_grid,
        oracle=oracle_for(a, e),
        description="nonholonomic particle (zdot = y xdot) between the planes y = 0 and y = a",
        check_lambda=check_lambda,
    )
