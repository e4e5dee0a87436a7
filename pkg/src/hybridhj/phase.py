"""Phase-space data model and the vector fields of (forced, constrained) Hamiltonian systems.

Everything lives in global Darboux coordinates ``(q, p)``; Hamilton's equations
are written out directly instead of going through the symplectic form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    ConstraintViolation,
    NonFiniteDerivative,
    SingularMultiplierSystem,
)

CONSTRAINT_TOL = 1e-9
COND_TOL = 1e12
RANK_TOL = 1e-10

ScalarFn = Callable[[np.ndarray, np.ndarray], float]
VectorFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def fd_step(q: np.ndarray) -> float:
    """Default finite-difference step, scaled with the size of ``q``."""
    return 1e-6 * (1.0 + float(np.linalg.norm(q)))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PhasePoint:
    """A point of T*Q: configuration ``q`` and momenta ``p``."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q, p = _frozen(self.q), _frozen(self.p)
        if q.shape != p.shape or q.size == 0:
            raise ValueError(f"q and p must be non-empty with equal length, got {q.shape} and {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase point has non-finite components")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, x) -> "PhasePoint":
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return cls(x[:n], x[n:])


def split(x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(q, p)`` from a PhasePoint or a flat state vector."""
    if isinstance(x, PhasePoint):
        return x.q, x.p
    x = np.asarray(x, dtype=float)
    n = x.size // 2
    return x[:n], x[n:]


@dataclass(frozen=True)
class SemibasicForce:
    """External force ``F = F_i(q, p) dq^i``; ``F`` returns the n components."""

    F: VectorFn


@dataclass(frozen=True)
class ConstraintSet:
    """Linear velocity constraints ``mu^a_i(q) qdot^i = 0``.

    ``mu(q)`` returns a k x n matrix. ``dmu_dq(q)``, when given, returns the
    k x n x n array ``d mu^a_i / d q^j``; otherwise it is approximated by
    central differences.
    """

    k: int
    mu: Callable[[np.ndarray], np.ndarray]
    dmu_dq: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def matrix(self, q: np.ndarray) -> np.ndarray:
        m = np.atleast_2d(np.asarray(self.mu(q), dtype=float))
        if m.shape[0] != self.k:
            raise ValueError(f"mu(q) has {m.shape[0]} rows, expected k={self.k}")
        return m


@dataclass(frozen=True)
class DynamicsModel:
    """Hamiltonian with analytic partials plus an optional force or constraint set.

    ``velocity`` overrides ``dH_dp`` as the configuration velocity; it is used by
    models whose fibre coordinates are not canonical momenta (body momenta of a
    rigid body in an Euler-angle chart). ``frozen_momenta`` declares that the
    fibre coordinates stay constant along the continuous flow.
    """

    n: int
    H: ScalarFn
    dH_dq: VectorFn
    dH_dp: VectorFn
    force: Optional[SemibasicForce] = None
    constraints: Optional[ConstraintSet] = None
    mass_matrix: Optional[Callable[[np.ndarray], np.ndarray]] = None
    constant_metric: bool = False
    velocity: Optional[VectorFn] = None
    frozen_momenta: bool = False
    angle_indices: tuple[int, ...] = ()
    _ginv: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("configuration dimension must be >= 1")
        if self.force is not None and self.constraints is not None:
            raise ValueError("a model may carry a force or constraints, not both")
        if self.constraints is not None:
            if self.mass_matrix is None:
                raise ValueError("constrained models need a mass matrix")
            if not 1 <= self.constraints.k < self.n:
                raise ValueError("need 1 <= k < n constraints")

    @property
    def kind(self) -> str:
        if self.constraints is not None:
            return "nonholonomic"
        if self.force is not None:
            return "forced"
        return "hamiltonian"


def _finite(name: str, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFiniteDerivative(f"{name} is not finite: {v}")
    return v


def _qdot(model: DynamicsModel, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    if model.velocity is not None:
        return _finite("velocity", model.velocity(q, p))
    return _finite("dH/dp", model.dH_dp(q, p))


def hamiltonian_field(model: DynamicsModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Hamilton's equations: ``qdot = dH/dp``, ``pdot = -dH/dq``."""
    q, p = split(x)
    qdot = _qdot(model, q, p)
    if model.frozen_momenta:
        return qdot, np.zeros_like(p)
    return qdot, -_finite("dH/dq", model.dH_dq(q, p))


def forced_field(model: DynamicsModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Forced Hamilton's equations: ``pdot = -dH/dq - F``."""
    if model.force is None:
        raise ValueError("forced_field needs a model with a force")
    q, p = split(x)
    qdot, pdot = hamiltonian_field(model, np.concatenate([q, p]))
    return qdot, pdot - _finite("F", model.force.F(q, p))


def inverse_metric(model: DynamicsModel, q: np.ndarray) -> np.ndarray:
    if model.constant_metric and model._ginv is not None:
        return model._ginv
    g = np.asarray(model.mass_matrix(q), dtype=float)
    try:
        c = scipy.linalg.cho_factor(g)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"mass matrix is not positive definite at q={q}") from exc
    ginv = scipy.linalg.cho_solve(c, np.eye(g.shape[0]))
    if model.constant_metric:
        # q-independent metric: factor once, the cached value is never mutated
        ginv.setflags(write=False)
        object.__setattr__(model, "_ginv", ginv)
    return ginv


def _check_rank(mu: np.ndarray) -> None:
    s = np.linalg.svd(mu, compute_uv=False)
    if s.size == 0 or s[-1] <= RANK_TOL * s[0]:
        raise SingularMultiplierSystem(f"constraint matrix is rank deficient (singular values {s})")


def constraint_residual(model: DynamicsModel, x) -> float:
    q, p = split(x)
    mu = model.constraints.matrix(q)
    return float(np.max(np.abs(mu @ inverse_metric(model, q) @ p)))


def is_on_constraint(model: DynamicsModel, x, tol: float = CONSTRAINT_TOL) -> tuple[bool, float]:
    """Membership of ``x`` in M: residual ``max_a |mu^a_i g^ij p_j|`` against ``tol``."""
    if model.constraints is None or model.mass_matrix is None:
        raise ValueError("is_on_constraint needs constraints and a mass matrix")
    r = constraint_residual(model, x)
    return r <= tol, r


def multipliers(model: DynamicsModel, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Lagrange multipliers that keep ``mu(q) qdot`` identically zero.

    Solves ``(mu g^-1 mu^T) lam = D_q[mu(q) dH/dp(q, p)] qdot - mu g^-1 dH/dq``.
    The directional derivative uses analytic ``dmu_dq`` when the constraint set
    supplies it and a central difference along ``qdot`` otherwise.
    """
    cs = model.constraints
    mu = cs.matrix(q)
    ginv = inverse_metric(model, q)
    qdot = _qdot(model, q, p)
    dHq = _finite("dH/dq", model.dH_dq(q, p))

    A = mu @ ginv @ mu.T
    if cs.k == 1:
        # a single row has full rank iff it is nonzero; the 1x1 system is well conditioned
        if not np.any(mu) or not A[0, 0] > 0:
            raise SingularMultiplierSystem("constraint row vanishes")
    else:
        _check_rank(mu)
        if np.linalg.cond(A) > COND_TOL:
            raise SingularMultiplierSystem(f"multiplier system condition number exceeds {COND_TOL:g}")

    speed = float(np.linalg.norm(qdot))
    if speed == 0.0:
        drift = np.zeros(cs.k)
    elif cs.dmu_dq is not None:
        drift = np.einsum("aij,i,j->a", np.asarray(cs.dmu_dq(q), dtype=float), qdot, qdot)
        if not model.constant_metric:
            eps = fd_step(q) / speed
            dv = (_qdot(model, q + eps * qdot, p) - _qdot(model, q - eps * qdot, p)) / (2 * eps)
            drift = drift + mu @ dv
    else:
        eps = fd_step(q) / speed

        def c(qq):
            return cs.matrix(qq) @ _qdot(model, qq, p)

        drift = (c(q + eps * qdot) - c(q - eps * qdot)) / (2 * eps)

    b = drift - mu @ ginv @ dHq
    if cs.k == 1:
        return b / A[0, 0]
    return np.linalg.solve(A, b)


def nonholonomic_field(model: DynamicsModel, x, check: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Constrained Hamiltonian field; returns ``(qdot, pdot, lam)``.

    ``check=False`` skips the membership precondition; integrators use it at
    Runge-Kutta stage points, which sit slightly off M by construction.
    """
    if model.constraints is None:
        raise ValueError("nonholonomic_field needs a model with constraints")
    q, p = split(x)
    if check:
        ok, r = is_on_constraint(model, np.concatenate([q, p]))
        if not ok:
            raise ConstraintViolation(f"state is off the constraint codistribution (residual {r:.3e})")
    qdot = _qdot(model, q, p)
    if model.frozen_momenta:
        return qdot, np.zeros_like(p), np.zeros(model.constraints.k)
    lam = multipliers(model, q, p)
    mu = model.constraints.matrix(q)
    pdot = -_finite("dH/dq", model.dH_dq(q, p)) - mu.T @ lam
    return qdot, pdot, lam


def vector_field(model: DynamicsModel, kind: Optional[str] = None) -> Callable[[np.ndarray], np.ndarray]:
    """Flat ``x -> xdot`` closure for the integrators."""
    kind = kind or model.kind
    if kind == "hamiltonian":
        def f(x):
            return np.concatenate(hamiltonian_field(model, x))
    elif kind == "forced":
        def f(x):
            return np.concatenate(forced_field(model, x))
    elif kind == "nonholonomic":
        def f(x):
            qdot, pdot, _ = nonholonomic_field(model, x, check=False)
            return np.concatenate([qdot, pdot])
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    return f


def projected_field(model: DynamicsModel, gamma: Callable[[np.ndarray], np.ndarray], q) -> np.ndarray:
    """Base vector field ``T pi_Q o X o gamma``.

    The configuration part is the same for the Hamiltonian, forced and
    nonholonomic fields, so a single formula serves all three.
    """
    q = np.asarray(q, dtype=float)
    p = _finite("gamma(q)", gamma(q))
    return _qdot(model, q, p)


def wrap_angles(q, angle_indices: Sequence[int]) -> np.ndarray:
    """Reduce the listed coordinates to (-pi, pi]; used for output only."""
    q = np.array(q, dtype=float, copy=True)
    for i in angle_indices:
        r = np.pi - np.remainder(np.pi - q[..., i], 2 * np.pi)
        q[..., i] = r
    return q


def check_partials(model: DynamicsModel, points: Sequence, step: float = 1e-5) -> float:
    """Largest relative mismatch between the supplied partials of H and central differences.

    The error at each point is ``|fd - analytic|_inf / max(|analytic|_inf, 1)``.
    """
    worst = 0.0
    for x in points:
        q, p = split(x)
        n = q.size
        fq = np.empty(n)
        fp = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = step
            fq[i] = (model.H(q + e, p) - model.H(q - e, p)) / (2 * step)
            fp[i] = (model.H(q, p + e) - model.H(q, p - e)) / (2 * step)
        an = np.concatenate([model.dH_dq(q, p), model.dH_dp(q, p)])
        fd = np.concatenate([fq, fp])
        err = float(np.max(np.abs(fd - an)) / max(float(np.max(np.abs(an))), 1.0))
        worst = max(worst, err)
    return worst
