"""Rigid body on SO(3) with a left-invariant constraint ``<mu, xi> = 0``, impacting at alpha = 0.

The chart is ZYX Euler angles ``(alpha, beta, phi)`` with rotation
``Rz(phi) Ry(beta) Rx(alpha)``; the fibre coordinates are the body momenta
``eta``, which stay constant between impacts. Body angular velocity is
``xi = eta / I``. The energy is ``sum (eta_i / I_ii)^2 / 2``, the form in which
the solution family is written.
"""

from __future__ import annotations

import numpy as np

from ..errors import BadParameters, ChartSingularity, TransferUndefined
from ..hybrid import GuardSpec, HybridSystemSpec, ResetMap
from ..phase import ConstraintSet, DynamicsModel, PhasePoint
from ..verify import Region, SolutionFamily, TransferMap
from .base import Scenario, box_points, make_impacts, resolve_params

DEFAULTS = {"I11": 1.0, "I22": 2.0, "I33": 3.0, "mu1": 1.0, "mu2": 1.0, "mu3": 1.0, "eps": 0.9}
CHART_MARGIN = 1e-3
SYMMETRY_TOL = 1e-12


def euler_rates(q, xi) -> np.ndarray:
    """Chart velocity ``(alpha', beta', phi')`` from body angular velocity ``xi``."""
    a, b = q[0], q[1]
    if np.pi / 2 - abs(b) < CHART_MARGIN:
        raise ChartSingularity(f"beta={b} is within {CHART_MARGIN} of the chart singularity")
    sa, ca = np.sin(a), np.cos(a)
    w1, w2, w3 = xi
    u = w2 * sa + w3 * ca
    return np.array([w1 + u * np.tan(b), w2 * ca - w3 * sa, u / np.cos(b)])


def rotation(q) -> np.ndarray:
    a, b, f = q
    ca, sa, cb, sb, cf, sf = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(f), np.sin(f)
    return np.array([
        [cb * cf, sa * sb * cf - ca * sf, ca * sb * cf + sa * sf],
        [cb * sf, sa * sb * sf + ca * cf, ca * sb * sf - sa * cf],
        [-sb, sa * cb, ca * cb],
    ])


class BodyFamily:
    """``gamma = lam1 e^1 + g2 e^2 + g3 e^3`` solving energy and constraint for given inertia and ``mu``.

    ``g2 = I22 (mu3 lam2 - mu1 mu2 lam1 / I11) / S`` and
    ``g3 = I33 (-mu2 lam2 - mu1 mu3 lam1 / I11) / S`` with ``S = mu2^2 + mu3^2``.
    """

    def __init__(self, I, mu):
        self.I = np.asarray(I, dtype=float)
        self.mu = np.asarray(mu, dtype=float)
        self.S = float(self.mu[1] ** 2 + self.mu[2] ** 2)
        I11, I22, I33 = self.I
        m1, m2, m3 = self.mu
        self.P = np.array([
            [1.0, 0.0],
            [-I22 * m1 * m2 / (I11 * self.S), I22 * m3 / self.S],
            [-I33 * m1 * m3 / (I11 * self.S), -I33 * m2 / self.S],
        ])

    def __call__(self, lam) -> np.ndarray:
        return self.P @ np.asarray(lam[:2], dtype=float)

    def flipped_sign(self, lam) -> np.ndarray:
        """Variant with ``+mu2 lam2`` in the third component; it leaves the constraint unsatisfied."""
        I11, I22, I33 = self.I
        m1, m2, m3 = self.mu
        l1, l2 = lam[0], lam[1]
        return np.array([l1, I22 * (m3 * l2 - m1 * m2 * l1 / I11) / self.S,
                         I33 * (m2 * l2 - m1 * m3 * l1 / I11) / self.S])

    def energy(self, lam) -> float:
        return 0.5 * float(np.sum((self(lam) / self.I) ** 2))

    def lambda2_from_energy(self, E: float, lam1: float, sign: float = 1.0) -> float:
        d = 2 * E * self.S - (lam1 / self.I[0]) ** 2 * float(self.mu @ self.mu)
        if d < 0:
            raise BadParameters(f"energy {E} is too small for lam1={lam1}")
        return sign * float(np.sqrt(d))


def transfer_params(lam, mu, I11: float, eps: float) -> np.ndarray:
    """``lam1 -> eps lam1`` and the matching ``lam2`` update when it exists."""
    l1, l2 = lam[0], lam[1]
    m1, m2, m3 = mu
    if eps == 1.0:
        return np.array([l1, l2], dtype=float)
    if abs(abs(m3) - abs(m2)) <= SYMMETRY_TOL * max(abs(m2), abs(m3)) and m3 != 0.0:
        return np.array([eps * l1, l2 + (eps - 1) * m1 * m2 / (m3 * I11) * l1])
    raise TransferUndefined(f"the two lam2 conditions disagree for mu={np.asarray(mu, dtype=float).tolist()} and eps={eps}")


def build(**overrides) -> Scenario:
    params = resolve_params("rigid_body", DEFAULTS, overrides)
    I = np.array([params["I11"], params["I22"], params["I33"]])
    mu = np.array([params["mu1"], params["mu2"], params["mu3"]])
    eps = params["eps"]
    if np.any(I <= 0):
        raise BadParameters(f"inertia must be positive, got {I.tolist()}")
    if mu[1] == 0.0 and mu[2] == 0.0:
        raise BadParameters("mu2 and mu3 cannot both vanish")

    model = DynamicsModel(
        n=3,
        H=lambda q, p: 0.5 * float(np.sum((np.asarray(p) / I) ** 2)),
        dH_dq=lambda q, p: np.zeros(3),
        dH_dp=lambda q, p: np.asarray(p, dtype=float) / I ** 2,
        constraints=ConstraintSet(1, lambda q: mu.reshape(1, 3), lambda q: np.zeros((1, 3, 3))),
        mass_matrix=lambda q: np.diag(I),
        constant_metric=True,
        velocity=lambda q, p: euler_rates(q, np.asarray(p, dtype=float) / I),
        frozen_momenta=True,
        angle_indices=(0, 1, 2),
    )
    guard = GuardSpec(lambda q, p: q[0], "decreasing", 0)
    spec = HybridSystemSpec(model, [guard],
                            ResetMap(lambda x: PhasePoint(x.q, np.array([eps * x.p[0], x.p[1], x.p[2]]))))

    body = BodyFamily(I, mu)
    family = SolutionFamily(
        regions=[Region(0, lambda q: q[0] > 0, "alpha > 0"), Region(1, lambda q: q[0] < 0, "alpha < 0")],
        gamma=lambda k, q, lam: body(lam),
        param_dim=2,
        jacobian=lambda k, q, lam: np.zeros((3, 3)),
        param_jacobian=lambda k, q, lam: body.P.copy(),
    )
    transfer = TransferMap(lambda k, l, lam, q: transfer_params(lam, mu, I[0], eps))

    lo_b, hi_b = -np.pi / 2 + 0.1, np.pi / 2 - 0.1

    def samples(k, count, seed=0):
        if k == 0:
            return box_points([1e-3, lo_b, -np.pi], [np.pi, hi_b, np.pi], count, seed)
        return box_points([-np.pi, lo_b, -np.pi], [-1e-3, hi_b, np.pi], count, seed)

    def impact_samples(count, seed=0):
        rng = np.random.default_rng(seed)
        qs = np.column_stack([np.zeros(count), rng.uniform(lo_b, hi_b, count), rng.uniform(-np.pi, np.pi, count)])
        return make_impacts(qs, 0, 1, rng.uniform(-2, 2, (count, 2)))

    def parameter_grid(count, seed=0):
        rng = np.random.default_rng(seed)
        out = []
        for i, lam in enumerate(rng.uniform(-2, 2, (count, 2))):
            k = i % 2
            out.append((k, samples(k, 1, seed + i)[0], lam))
        return out

    q0 = np.array([0.3, 0.1, 0.0])
    lam0 = np.array([-1.0, 0.5])
    return Scenario(
        name="rigid_body",
        params=params,
        schema=dict(DEFAULTS),
        spec=spec,
        x0=PhasePoint(q0, body(lam0)),
        family=family,
        transfer=transfer,
        q0=q0,
        lam0=lam0,
        constants={},
        non_constants={"eta1": lambda x: float(x.p[0])},
        samples=samples,
        impact_samples=impact_samples,
        parameter_grid=parameter_grid,
        description="rigid body with a left-invariant nonholonomic constraint, impact at alpha = 0",
    )
