"""Free particle in the unit disk with specular reflection at the circle."""

from __future__ import annotations

import numpy as np

from ..hybrid import GuardSpec, HybridSystemSpec, ResetMap
from ..phase import DynamicsModel, PhasePoint
from ..verify import Region, SolutionFamily, TransferMap
from .base import OracleEvent, PiecewiseOracle, Scenario, box_points, make_impacts, resolve_params

DEFAULTS: dict = {}
Q0 = (0.1, -0.3)
LAMBDA0 = (0.6, 0.8)


def reflect(q, p) -> np.ndarray:
    """Billiard impact map on momenta at the wall point ``q``."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return p - 2.0 * q * (q @ p)


def model() -> DynamicsModel:
    return DynamicsModel(
        n=2,
        H=lambda q, p: 0.5 * float(p @ p),
        dH_dq=lambda q, p: np.zeros(2),
        dH_dp=lambda q, p: np.array(p, dtype=float),
    )


def oracle(q0, lam0, horizon: float) -> PiecewiseOracle:
    """Exact piecewise-linear billiard path from ``(q0, p0 = lam0)``."""
    q = np.asarray(q0, dtype=float)
    p = np.asarray(lam0, dtype=float)
    t = 0.0
    pieces, events = [], []
    while True:
        pieces.append((t, lambda s, t0=t, q0=q.copy(), p0=p.copy(): np.concatenate([q0 + (s - t0) * p0, p0])))
        a = float(p @ p)
        if a == 0.0:
            break
        b = float(q @ p)
        c = float(q @ q) - 1.0
        dt = (-b + np.sqrt(b * b - a * c)) / a
        if t + dt > horizon:
            break
        t += dt
        q = q + dt * p
        pm = p
        p = reflect(q, p)
        events.append(OracleEvent(t, np.concatenate([q, pm]), np.concatenate([q, p])))
    return PiecewiseOracle(pieces, events)


def build(**overrides) -> Scenario:
    params = resolve_params("billiard", DEFAULTS, overrides)
    m = model()
    guard = GuardSpec(lambda q, p: 1.0 - float(q @ q), "decreasing", 0)
    spec = HybridSystemSpec(m, [guard], ResetMap(lambda x: PhasePoint(x.q, reflect(x.q, x.p))))

    inside = Region(0, lambda q: float(q @ q) < 1.0, "open unit disk")
    family = SolutionFamily(
        regions=[inside],
        gamma=lambda k, q, lam: np.array(lam[:2], dtype=float),
        param_dim=2,
        jacobian=lambda k, q, lam: np.zeros((2, 2)),
        param_jacobian=lambda k, q, lam: np.eye(2),
    )
    transfer = TransferMap(lambda k, l, lam, q: reflect(q, lam[:2]))

    def samples(k, count, seed=0):
        return box_points([-1, -1], [1, 1], count, seed, keep=lambda q: q @ q < 0.999 ** 2)

    def impact_samples(count, seed=0):
        rng = np.random.default_rng(seed)
        th = rng.uniform(-np.pi, np.pi, count)
        qs = np.column_stack([np.cos(th), np.sin(th)])
        return make_impacts(qs, 0, 0, rng.uniform(-2, 2, (count, 2)))

    def parameter_grid(count, seed=0):
        rng = np.random.default_rng(seed)
        return [(0, q, lam) for q, lam in zip(samples(0, count, seed), rng.uniform(-2, 2, (count, 2)))]

    q0 = np.array(Q0)
    lam0 = np.array(LAMBDA0)
    return Scenario(
        name="billiard",
        params=params,
        schema=dict(DEFAULTS),
        spec=spec,
        x0=PhasePoint(q0, lam0),
        family=family,
        transfer=transfer,
        q0=q0,
        lam0=lam0,
        constants={
            "H": lambda x: 0.5 * float(x.p @ x.p),
            "angular_momentum": lambda x: float(x.q[0] * x.p[1] - x.q[1] * x.p[0]),
        },
        non_constants={"p_x": lambda x: float(x.p[0]), "p_y": lambda x: float(x.p[1])},
        samples=samples,
        impact_samples=impact_samples,
        parameter_grid=parameter_grid,
        oracle=oracle,
        description="free particle in the unit disk, specular reflection at the circle",
    )
