"""Numerical checks of candidate Hamilton-Jacobi solution families.

A solution family assigns to each region ``U_k`` of configuration space a
parameterised one-form ``gamma_k(q; lam)``. The checks here evaluate, on
sample points, how far each ``gamma_k`` is from solving the conservative,
forced or nonholonomic HJ equation, whether solutions on either side of an
impact are related by the reset map, and whether the family is complete.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import RegionViolation, TransferUndefined
from .hybrid import HybridSystemSpec
from .integrate import StepPolicy, integrate
from .phase import (
    DynamicsModel,
    PhasePoint,
    constraint_residual,
    fd_step,
    inverse_metric,
    projected_field,
    vector_field,
)

PASS_TOL_ANALYTIC = 1e-8
PASS_TOL_FD = 1e-5
DIFFEO_TOL = 1e-10


@dataclass(frozen=True)
class Region:
    id: int
    contains: Callable[[np.ndarray], bool]
    name: str = ""


@dataclass(frozen=True)
class SolutionFamily:
    """One-forms ``gamma(k, q, lam)`` on the regions of configuration space.

    ``lam`` holds ``param_dim`` continuous parameters, optionally followed by
    discrete ones (such as a branch sign) that are never differentiated.
    ``jacobian(k, q, lam)`` returns ``J[j, i] = d gamma_j / d q^i`` and
    ``param_jacobian(k, q, lam)`` the n x param_dim matrix
    ``d gamma / d lam``; both fall back to central differences.
    """

    regions: tuple
    gamma: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    param_dim: int
    jacobian: Optional[Callable] = None
    param_jacobian: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))

    @property
    def analytic(self) -> bool:
        return self.jacobian is not None

    def region(self, k: int) -> Region:
        for r in self.regions:
            if r.id == k:
                return r
        raise KeyError(f"no region with id {k}")

    def regions_containing(self, q) -> list[int]:
        return [r.id for r in self.regions if r.contains(np.asarray(q, dtype=float))]

    def __call__(self, k: int, q, lam) -> np.ndarray:
        return np.asarray(self.gamma(k, np.asarray(q, dtype=float), np.asarray(lam, dtype=float)), dtype=float)

    def at(self, k: int, lam) -> Callable[[np.ndarray], np.ndarray]:
        lam = np.asarray(lam, dtype=float)
        return lambda q: self(k, q, lam)

    def jac(self, k: int, q, lam) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(k, q, np.asarray(lam, dtype=float)), dtype=float)
        return fd_jacobian(self.at(k, lam), q)

    def pjac(self, k: int, q, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.param_jacobian is not None:
            return np.asarray(self.param_jacobian(k, q, lam), dtype=float)
        m = self.param_dim
        cols = []
        for i in range(m):
            h = 1e-6 * (1.0 + abs(lam[i]))
            lp, lm = lam.copy(), lam.copy()
            lp[i] += h
            lm[i] -= h
            cols.append((self(k, q, lp) - self(k, q, lm)) / (2 * h))
        return np.column_stack(cols)


@dataclass(frozen=True)
class TransferMap:
    """Parameter update across an impact: ``tau(from_region, to_region, lam, q_star)``."""

    tau: Callable[[int, int, np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, k: int, l: int, lam, q_star) -> np.ndarray:
        return np.asarray(self.tau(k, l, np.asarray(lam, dtype=float), np.asarray(q_star, dtype=float)), dtype=float)


@dataclass(frozen=True)
class ImpactSample:
    q: np.ndarray
    from_region: int
    to_region: int
    lam: np.ndarray


@dataclass
class ResidualReport:
    check: str
    channels: dict
    locations: dict
    sample_count: int
    tolerance: float
    error: Optional[str] = None
    details: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.channels.values()) if self.channels else 0.0

    @property
    def passed(self) -> bool:
        return self.error is None and all(v <= self.tolerance for v in self.channels.values())

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "channels": dict(self.channels),
            "locations": {k: np.asarray(v).tolist() for k, v in self.locations.items()},
            "max_residual": self.max_residual,
            "sample_count": self.sample_count,
            "tolerance": self.tolerance,
            "error": self.error,
            "passed": self.passed,
            "details": self.details,
        }


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], q: np.ndarray) -> np.ndarray:
    """``J[j, i] = d fn_j / d q^i`` by central differences with ``fd_step(q)``."""
    h = fd_step(q)
    cols = []
    for i in range(q.size):
        e = np.zeros(q.size)
        e[i] = h
        cols.append((fn(q + e) - fn(q - e)) / (2 * h))
    return np.column_stack(cols)


def closedness_defect(J: np.ndarray) -> float:
    """``max_{i<j} |d_j gamma_i - d_i gamma_j|`` computed pair by pair."""
    n = J.shape[0]
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            worst = max(worst, abs(J[i, j] - J[j, i]))
    return worst


def antisymmetric_norm(J: np.ndarray) -> float:
    """Largest entry of ``J - J^T``; the same quantity as :func:`closedness_defect`."""
    return float(np.max(np.abs(J - J.T))) if J.size else 0.0


def _tolerance(family: SolutionFamily, tol: Optional[float]) -> float:
    if tol is not None:
        return tol
    return PASS_TOL_ANALYTIC if family.analytic else PASS_TOL_FD


def _check_region(family: SolutionFamily, k: int, samples) -> None:
    region = family.region(k)
    for q in samples:
        if not region.contains(np.asarray(q, dtype=float)):
            raise RegionViolation(f"sample {np.asarray(q).tolist()} is outside region {k}")


class _Max:
    def __init__(self):
        self.values: dict = {}
        self.where: dict = {}

    def add(self, name: str, v: float, q) -> None:
        if name not in self.values or v > self.values[name]:
            self.values[name] = float(v)
            self.where[name] = np.array(q, dtype=float)


def _gradient_residual(model: DynamicsModel, family: SolutionFamily, k: int, lam, q, with_force: bool):
    gam = family(k, q, lam)
    J = family.jac(k, q, lam)
    grad = np.asarray(model.dH_dq(q, gam)) + J.T @ np.asarray(model.dH_dp(q, gam))
    if with_force:
        grad = grad + np.asarray(model.force.F(q, gam))
    return float(np.max(np.abs(grad))), closedness_defect(J)


def residual_conservative(model: DynamicsModel, family: SolutionFamily, k: int, lam, samples,
                          tol: Optional[float] = None, check_region: bool = True) -> ResidualReport:
    """``|grad_q H(q, gamma(q))|_inf`` and the closedness defect over ``samples``."""
    samples = [np.asarray(q, dtype=float) for q in samples]
    if check_region:
        _check_region(family, k, samples)
    acc = _Max()
    for q in samples:
        r, c = _gradient_residual(model, family, k, lam, q, with_force=False)
        acc.add("hj", r, q)
        acc.add("closedness", c, q)
    return ResidualReport("conservative", acc.values, acc.where, len(samples), _tolerance(family, tol))


def residual_forced(model: DynamicsModel, family: SolutionFamily, k: int, lam, samples,
                    tol: Optional[float] = None, check_region: bool = True) -> ResidualReport:
    """``|grad_q H(q, gamma(q)) + F(q, gamma(q))|_inf`` and the closedness defect."""
    if model.force is None:
        raise ValueError("residual_forced needs a model with a force")
    samples = [np.asarray(q, dtype=float) for q in samples]
    if check_region:
        _check_region(family, k, samples)
    acc = _Max()
    for q in samples:
        r, c = _gradient_residual(model, family, k, lam, q, with_force=True)
        acc.add("hj", r, q)
        acc.add("closedness", c, q)
    return ResidualReport("forced", acc.values, acc.where, len(samples), _tolerance(family, tol))


def distribution_basis(model: DynamicsModel, q) -> np.ndarray:
    """Orthonormal basis (columns) of the allowed velocities ``ker mu(q)``."""
    return scipy.linalg.null_space(model.constraints.matrix(np.asarray(q, dtype=float)))


def dgamma_on(J: np.ndarray, basis: np.ndarray) -> float:
    """Largest ``|d gamma(v, w)|`` over pairs of basis vectors.

    ``d gamma(v, w) = sum_ij (d_i gamma_j - d_j gamma_i) v^i w^j``.
    """
    W = J.T - J
    worst = 0.0
    m = basis.shape[1]
    for a in range(m):
        for b in range(a + 1, m):
            worst = max(worst, abs(float(basis[:, a] @ W @ basis[:, b])))
    return worst


def residual_nonholonomic(model: DynamicsModel, family: SolutionFamily, k: int, lam, samples,
                          tol: Optional[float] = None, check_region: bool = True) -> ResidualReport:
    """Energy constancy, membership of ``Im gamma`` in M, and ``d gamma`` restricted to D.

    The energy level is the sample mean of ``H o gamma``, so the energy channel
    also detects non-constant energy.
    """
    if model.constraints is None:
        raise ValueError("residual_nonholonomic needs a constrained model")
    samples = [np.asarray(q, dtype=float) for q in samples]
    if check_region:
        _check_region(family, k, samples)
    acc = _Max()
    energies = []
    for q in samples:
        gam = family(k, q, lam)
        energies.append(float(model.H(q, gam)))
        acc.add("membership", constraint_residual(model, np.concatenate([q, gam])), q)
        acc.add("dgamma_D", dgamma_on(family.jac(k, q, lam), distribution_basis(model, q)), q)
    energies = np.array(energies)
    mean = float(np.mean(energies)) if energies.size else 0.0
    for q, e in zip(samples, energies):
        acc.add("energy", abs(e - mean), q)
    return ResidualReport("nonholonomic", acc.values, acc.where, len(samples), _tolerance(family, tol),
                          details={"energy_level": mean})


def residual_for(model: DynamicsModel, family: SolutionFamily, k: int, lam, samples, **kw) -> ResidualReport:
    """Dispatch to the residual matching the model's kind."""
    fn = {"hamiltonian": residual_conservative, "forced": residual_forced,
          "nonholonomic": residual_nonholonomic}[model.kind]
    return fn(model, family, k, lam, samples, **kw)


def delta_relatedness_check(spec: HybridSystemSpec, family: SolutionFamily, transfer: TransferMap,
                            impact_samples: Sequence[ImpactSample], tol: Optional[float] = None) -> ResidualReport:
    """``|gamma_l(q*; tau(lam)) - p(Reset(q*, gamma_k(q*; lam)))|_inf`` at impact points.

    Raises :class:`TransferUndefined` when the transfer map has no value.
    """
    acc = _Max()
    for s in impact_samples:
        q = np.asarray(s.q, dtype=float)
        xm = PhasePoint(q, family(s.from_region, q, s.lam))
        xp = spec.reset(xm)
        lam_new = transfer(s.from_region, s.to_region, s.lam, q)
        acc.add("delta", float(np.max(np.abs(family(s.to_region, q, lam_new) - xp.p))), q)
    return ResidualReport("delta_relatedness", acc.values, acc.where, len(impact_samples), _tolerance(family, tol))


def momentum_rows(model: DynamicsModel, q) -> np.ndarray:
    """Indices of momentum coordinates that parameterise the fibre of M at ``q``.

    Greedy column pivoting (pivoted QR) on a basis of ``ker(mu g^-1)``.
    """
    q = np.asarray(q, dtype=float)
    A = model.constraints.matrix(q) @ inverse_metric(model, q)
    N = scipy.linalg.null_space(A)
    _, _, piv = scipy.linalg.qr(N.T, pivoting=True, mode="economic")
    return np.sort(piv[: N.shape[1]])


def complete_solution_check(spec: HybridSystemSpec, family: SolutionFamily, transfer: TransferMap,
                            sample_grid: Sequence[tuple], impact_samples: Sequence[ImpactSample],
                            tol: Optional[float] = None, diffeo_tol: float = DIFFEO_TOL) -> ResidualReport:
    """Local-diffeomorphism test of ``lam -> gamma(q; lam)`` plus the transfer residual.

    ``sample_grid`` holds ``(k, q, lam)`` triples. For constrained models the
    Jacobian is restricted to ``param_dim`` momentum rows spanning M. A
    transfer map without a value is reported as an error, never raised.
    """
    model = spec.model
    m = family.param_dim
    worst_det, where_det = np.inf, None
    for k, q, lam in sample_grid:
        q = np.asarray(q, dtype=float)
        P = family.pjac(k, q, lam)
        if model.kind == "nonholonomic":
            P = P[momentum_rows(model, q)]
        if P.shape != (m, m):
            raise ValueError(f"parameter Jacobian has shape {P.shape}, expected {(m, m)}")
        d = abs(float(np.linalg.det(P)))
        if not np.isfinite(d):
            d = 0.0
        if d < worst_det:
            worst_det, where_det = d, q
    details = {"min_abs_det": worst_det if sample_grid else None, "diffeo_tol": diffeo_tol,
               "diffeo_passed": bool(worst_det > diffeo_tol) if sample_grid else True}
    channels, locations = {}, {}
    error = None
    try:
        tr = delta_relatedness_check(spec, family, transfer, impact_samples, tol)
        channels.update(tr.channels)
        locations.update(tr.locations)
    except TransferUndefined as exc:
        error = "TransferUndefined"
        details["transfer_error"] = str(exc)
    if sample_grid:
        locations["diffeo"] = where_det
        if not details["diffeo_passed"]:
            error = error or "NotLocalDiffeomorphism"
    return ResidualReport("complete_solution", channels, locations, len(sample_grid),
                          _tolerance(family, tol), error, details)


def lift_defect(model: DynamicsModel, family: SolutionFamily, k: int, lam, q0, duration: float,
                n_times: int = 200, h: float = 1e-3, delta: float = 1e-4) -> float:
    """Mismatch between a lifted base curve and the full vector field.

    Integrates ``qdot = projected_field`` from ``q0``, lifts the curve through
    ``gamma_k``, differentiates the lift by central differences at
    ``n_times`` interior times, and returns the largest deviation from the
    full field evaluated on the lift. Small for HJ solutions, order one
    otherwise.
    """
    gam = family.at(k, lam)
    seg = integrate(lambda q: projected_field(model, gam, q), q0, 0.0, duration, StepPolicy(h=h))
    f = vector_field(model)
    worst = 0.0
    for t in np.linspace(2 * delta, duration - 2 * delta, n_times):
        lifted = [np.concatenate([q, gam(q)]) for q in (seg(t - delta), seg(t + delta))]
        deriv = (lifted[1] - lifted[0]) / (2 * delta)
        q = seg(t)
        worst = max(worst, float(np.max(np.abs(deriv - f(np.concatenate([q, gam(q)]))))))
    return worst
