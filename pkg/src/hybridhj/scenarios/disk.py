"""Rolling disk bouncing between two rough horizontal walls, optionally with a force on p_y.

Coordinates are the disk centre ``(x, y)`` and the rotation angle ``theta``.
The centre touches the walls at ``y = R`` and ``y = h - R`` with ``h = alpha R``.
"""

from __future__ import annotations

import numpy as np

from ..errors import BadParameters
from ..hybrid import ADM_TOL, GuardSpec, HybridSystemSpec, ResetMap
from ..phase import DynamicsModel, PhasePoint, SemibasicForce
from ..verify import Region, SolutionFamily, TransferMap
from .base import Scenario, box_points, make_impacts, resolve_params

DEFAULTS = {"m": 1.0, "k": 1.0, "R": 1.0, "alpha": 3.0, "e": 0.8}
FORCED_DEFAULTS = {**DEFAULTS, "B": 0.1, "slope_perturbation": 0.0}


def check(params: dict) -> None:
    if not params["alpha"] > 1:
        raise BadParameters(f"alpha must exceed 1, got {params['alpha']}")
    if not 0 <= params["e"] <= 1:
        raise BadParameters(f"e must lie in [0, 1], got {params['e']}")
    for name in ("m", "k", "R"):
        if not params[name] > 0:
            raise BadParameters(f"{name} must be positive, got {params[name]}")


def impact_momenta(p, m_, k, R, e) -> np.ndarray:
    """Rolling-without-sliding impact with restitution ``e`` on the normal momentum."""
    px, py, pt = p
    s = k * k + R * R
    return np.array([(R * R * px + k * k * R * pt) / s, -e * py, (R * px + k * k * pt) / s])


def wall_transfer(lam, y_star, slope, k, R, e) -> np.ndarray:
    """Parameters after an impact at height ``y_star`` for ``gamma = a dx + (slope y + b) dy + c dtheta``.

    Matching ``slope y* + b' = -e (slope y* + b)`` gives ``b' = -(1 + e) slope y* - e b``.
    """
    a, b, c = lam[:3]
    s = k * k + R * R
    return np.array([(R * R * a + k * k * R * c) / s, -(1 + e) * slope * y_star - e * b, (R * a + k * k * c) / s])


def wall_coordinate_transfer(lam, wall: str, params: dict) -> np.ndarray:
    """Transfer written with wall coordinates ``y = 0`` and ``y = h`` instead of the contact heights."""
    a, b, c = lam[:3]
    k, R, e = params["k"], params["R"], params["e"]
    Bm = params.get("B", 0.0) * params["m"]
    h = params["alpha"] * R
    s = k * k + R * R
    b_new = -e * b if wall == "bottom" else -(e + 1) * Bm * h - e * b
    return np.array([(R * R * a + k * k * R * c) / s, b_new, (R * a + k * k * c) / s])


def build(forced: bool = False, **overrides) -> Scenario:
    name = "forced_disk" if forced else "rolling_disk"
    params = resolve_params(name, FORCED_DEFAULTS if forced else DEFAULTS, overrides)
    check(params)
    m_, k, R, e = params["m"], params["k"], params["R"], params["e"]
    h = params["alpha"] * R
    B = params.get("B", 0.0)
    # the family's dy slope; the force is F = -B p_y dy so that slope B m solves the forced equation
    slope = B * m_ + params.get("slope_perturbation", 0.0) if forced else 0.0

    def H(q, p):
        return (p[0] ** 2 + p[1] ** 2) / (2 * m_) + p[2] ** 2 / (2 * m_ * k * k)

    model = DynamicsModel(
        n=3,
        H=H,
        dH_dq=lambda q, p: np.zeros(3),
        dH_dp=lambda q, p: np.array([p[0] / m_, p[1] / m_, p[2] / (m_ * k * k)]),
        force=SemibasicForce(lambda q, p: np.array([0.0, -B * p[1], 0.0])) if forced else None,
        angle_indices=(2,),
    )

    def admissible(q, p):
        return abs(p[0] - R * p[2] / (k * k)) <= ADM_TOL

    guards = [
        GuardSpec(lambda q, p: q[1] - R, "decreasing", 0, admissible),
        GuardSpec(lambda q, p: (h - R) - q[1], "decreasing", 1, admissible),
    ]
    spec = HybridSystemSpec(model, guards, ResetMap(lambda x: PhasePoint(x.q, impact_momenta(x.p, m_, k, R, e))))

    def gamma(kk, q, lam):
        return np.array([lam[0], slope * q[1] + lam[1], lam[2]])

    def jac(kk, q, lam):
        J = np.zeros((3, 3))
        J[1, 1] = slope
        return J

    family = SolutionFamily(
        regions=[Region(0, lambda q: R < q[1] < h - R, "between the walls")],
        gamma=gamma,
        param_dim=3,
        jacobian=jac,
        param_jacobian=lambda kk, q, lam: np.eye(3),
    )
    transfer = TransferMap(lambda kk, l, lam, q: wall_transfer(lam, q[1], slope, k, R, e))

    y0 = 0.5 * h
    q0 = np.array([0.0, y0, 0.0])
    lam0 = np.array([0.5, 1.0 - slope * y0, 0.5 * k * k / R])
    lo = [-5.0, R + 1e-3 * (h - 2 * R), -np.pi]
    hi = [5.0, h - R - 1e-3 * (h - 2 * R), np.pi]

    def samples(kk, count, seed=0):
        return box_points(lo, hi, count, seed)

    def impact_samples(count, seed=0):
        rng = np.random.default_rng(seed)
        half = count // 2
        walls = np.where(np.arange(count) < half, R, h - R)
        qs = np.column_stack([rng.uniform(-5, 5, count), walls, rng.uniform(-np.pi, np.pi, count)])
        return make_impacts(qs, 0, 0, rng.uniform(-2, 2, (count, 3)))

    def parameter_grid(count, seed=0):
        rng = np.random.default_rng(seed)
        return [(0, q, lam) for q, lam in zip(samples(0, count, seed), rng.uniform(-2, 2, (count, 3)))]

    constants, non_constants = {}, {"p_y": lambda x: float(x.p[1])}
    energy = lambda x: float(H(x.q, x.p))  # noqa: E731
    # the tangential part of the reset fixes admissible momenta only when k == 1
    if not forced and e == 1.0 and k == 1.0:
        constants["H"] = energy
    else:
        non_constants["H"] = energy

    return Scenario(
        name=name,
        params=params,
        schema=dict(FORCED_DEFAULTS if forced else DEFAULTS),
        spec=spec,
        x0=PhasePoint(q0, gamma(0, q0, lam0)),
        family=family,
        transfer=transfer,
        q0=q0,
        lam0=lam0,
        constants=constants,
        non_constants=non_constants,
        samples=samples,
        impact_samples=impact_samples,
        parameter_grid=parameter_grid,
        description=("rolling disk between rough walls with force -B p_y dy" if forced
                     else "rolling disk between rough walls"),
    )
