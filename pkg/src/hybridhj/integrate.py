"""Classic RK4 with optional step doubling, cubic Hermite dense output and event bisection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BracketLost, NonFiniteState, StepUnderflow
from .phase import DynamicsModel, vector_field

Field = Callable[[np.ndarray], np.ndarray]

GUARD_TOL = 1e-10
TIME_TOL = 1e-12


@dataclass(frozen=True)
class StepPolicy:
    h: float = 1e-3
    adaptive: bool = False
    h_min: float = 1e-12
    local_tol: float = 1e-10

    def __post_init__(self):
        if not self.h > 0 or not self.h_min > 0 or not self.local_tol > 0:
            raise ValueError("step sizes and tolerances must be positive")


def rk4_step(f: Field, x: np.ndarray, h: float, fx: Optional[np.ndarray] = None) -> np.ndarray:
    k1 = f(x) if fx is None else fx
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def hermite(ta, xa, fa, tb, xb, fb, t):
    """Cubic Hermite interpolant through two states and their derivatives."""
    dt = tb - ta
    if dt == 0.0:
        return np.array(xa, copy=True)
    s = (t - ta) / dt
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * xa + h10 * dt * fa + h01 * xb + h11 * dt * fb


class Segment:
    """Samples of one continuous arc, usable as a dense evaluator ``seg(t)``.

    With derivative samples ``f`` the evaluator is piecewise cubic Hermite;
    a custom ``evaluator`` takes precedence (lifted trajectories use one).
    Times outside the sampled span are extrapolated from the end intervals.
    """

    def __init__(self, t, x, f=None, evaluator: Optional[Callable[[float], np.ndarray]] = None):
        self.t = np.asarray(t, dtype=float)
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        self.f = None if f is None else np.atleast_2d(np.asarray(f, dtype=float))
        self.evaluator = evaluator
        if self.t.ndim != 1 or self.x.shape[0] != self.t.size:
            raise ValueError("segment times and states disagree in length")

    def __len__(self) -> int:
        return self.t.size

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    def __call__(self, t: float) -> np.ndarray:
        if self.evaluator is not None:
            return self.evaluator(t)
        if self.t.size == 1:
            return self.x[0].copy()
        if self.f is None:
            raise ValueError("segment has no derivative samples for dense evaluation")
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        i = min(max(i, 0), self.t.size - 2)
        # zero-length intervals appear when an event lands on a grid point
        while i > 0 and self.t[i + 1] == self.t[i]:
            i -= 1
        return hermite(self.t[i], self.x[i], self.f[i], self.t[i + 1], self.x[i + 1], self.f[i + 1], t)


class Stepper:
    """Advances one RK4 step at a time on a fixed grid or with step doubling."""

    def __init__(self, f: Field, policy: StepPolicy, t0: float):
        self.f = f
        self.policy = policy
        self.t0 = t0
        self.h = policy.h

    def advance(self, t: float, x: np.ndarray, fx: np.ndarray, t_end: float) -> tuple[float, np.ndarray]:
        pol = self.policy
        if not pol.adaptive:
            # next point of the grid t0 + j*h strictly after t; events land between grid points
            j = math.floor((t - self.t0) / pol.h + 1e-9) + 1
            t_new = self.t0 + j * pol.h
            if t_new >= t_end - 1e-9 * pol.h:
                t_new = t_end
            x_new = rk4_step(self.f, x, t_new - t, fx)
        else:
            while True:
                h = min(self.h, t_end - t)
                if h < pol.h_min and t + h < t_end:
                    raise StepUnderflow(f"adaptive step {h:.3e} fell below h_min={pol.h_min:.3e} at t={t}")
                full = rk4_step(self.f, x, h, fx)
                half = rk4_step(self.f, x, 0.5 * h, fx)
                two = rk4_step(self.f, half, 0.5 * h)
                err = float(np.max(np.abs(two - full))) / 15.0
                scale = pol.local_tol * (1.0 + float(np.max(np.abs(x))))
                if err <= scale or h <= pol.h_min:
                    factor = 2.0 if err == 0.0 else min(2.0, max(0.2, 0.9 * (scale / err) ** 0.2))
                    self.h = min(max(h * factor, pol.h_min), pol.h)
                    t_new, x_new = (t_end if h == t_end - t else t + h), two
                    break
                self.h = max(h * max(0.2, 0.9 * (scale / err) ** 0.2), pol.h_min * 0.5)
                if self.h < pol.h_min:
                    raise StepUnderflow(f"adaptive step fell below h_min={pol.h_min:.3e} at t={t}")
        if not np.all(np.isfinite(x_new)):
            raise NonFiniteState(f"state became non-finite at t={t_new}")
        return t_new, x_new


def integrate(f: Field, x0, t0: float, t_end: float, policy: StepPolicy = StepPolicy()) -> Segment:
    """Integrate ``xdot = f(x)`` from ``t0`` to ``t_end`` and return the sampled arc."""
    x = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("initial state is not finite")
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    stepper = Stepper(f, policy, t0)
    fx = f(x)
    ts, xs, fs = [t0], [x], [fx]
    t = t0
    while t < t_end:
        t, x = stepper.advance(t, x, fx, t_end)
        fx = f(x)
        ts.append(t)
        xs.append(x)
        fs.append(fx)
    return Segment(ts, xs, fs)


def integrate_segment(model: DynamicsModel, x0, t0: float, t_end: float,
                      policy: StepPolicy = StepPolicy(), kind: Optional[str] = None) -> Segment:
    """Integrate the model's vector field (or the one named by ``kind``) over ``[t0, t_end]``."""
    x0 = x0.as_array() if hasattr(x0, "as_array") else x0
    return integrate(vector_field(model, kind), x0, t0, t_end, policy)


def _oriented(direction: str, value_at_start: float) -> float:
    if direction == "decreasing":
        return 1.0
    if direction == "increasing":
        return -1.0
    if direction == "either":
        return 1.0 if value_at_start > 0 else -1.0
    raise ValueError(f"unknown guard direction {direction!r}")


def bisect_crossing(phi: Callable[[float], float], ta: float, tb: float,
                    guard_tol: float = GUARD_TOL, time_tol: float = TIME_TOL) -> float:
    """Locate a zero of ``phi`` given ``phi(ta) > 0 >= phi(tb)``.

    Bisects until the bracket is shorter than ``time_tol * (1 + |t|)`` and the
    better endpoint satisfies ``|phi| <= guard_tol`` (or floating point stops
    the refinement). Returns that endpoint.
    """
    pa, pb = phi(ta), phi(tb)
    if abs(pa) <= guard_tol:
        return ta
    if not (pa > 0 >= pb):
        raise BracketLost(f"no sign change on [{ta}, {tb}]: {pa:.3e}, {pb:.3e}")
    while (tb - ta > time_tol * (1.0 + abs(tb))) or min(abs(pa), abs(pb)) > guard_tol:
        tm = 0.5 * (ta + tb)
        if tm <= ta or tm >= tb:
            break
        pm = phi(tm)
        if pm > 0:
            ta, pa = tm, pm
        else:
            tb, pb = tm, pm
    return ta if abs(pa) < abs(pb) else tb


def locate_event(dense: Callable[[float], np.ndarray], guard, bracket: tuple[float, float],
                 guard_tol: float = GUARD_TOL, time_tol: float = TIME_TOL) -> float:
    """Crossing time of ``guard`` inside ``bracket`` along the dense trajectory.

    ``guard`` is a :class:`~hybridhj.hybrid.GuardSpec`; its direction decides
    which sign change counts. A guard already on its surface at the bracket
    start yields that start time.
    """
    ta, tb = bracket
    n = dense(ta).size // 2

    def g(t):
        x = dense(t)
        return float(guard.g(x[:n], x[n:]))

    ga = g(ta)
    if abs(ga) <= guard_tol:
        return ta
    sign = _oriented(guard.direction, ga)
    return bisect_crossing(lambda t: sign * g(t), ta, tb, guard_tol, time_tol)


def earliest_event(dense: Callable[[float], np.ndarray], guards: Sequence, bracket: tuple[float, float],
                   guard_tol: float = GUARD_TOL, time_tol: float = TIME_TOL) -> Optional[tuple[float, int]]:
    """Earliest qualifying crossing among ``guards``; ``None`` if no guard crosses."""
    ta, tb = bracket
    n = dense(ta).size // 2
    best = None
    for guard in guards:
        xa, xb = dense(ta), dense(tb)
        ga = float(guard.g(xa[:n], xa[n:]))
        gb = float(guard.g(xb[:n], xb[n:]))
        sign = _oriented(guard.direction, ga)
        if abs(ga) > guard_tol and not (sign * ga > 0 >= sign * gb):
            continue
        t = locate_event(dense, guard, bracket, guard_tol, time_tol)
        if best is None or (t, guard.id) < best:
            best = (t, guard.id)
    return best
