"""Event-driven execution of simple hybrid systems.

Continuous arcs are integrated with RK4, guard crossings are located by
bisection on the cubic Hermite interpolant of the current step, and the reset
map is applied with the post-impact (x+) convention: the trajectory value at an
impact time is the reset state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConstraintViolation, HybridHJError, ResetOffConstraint
from .integrate import GUARD_TOL, TIME_TOL, Segment, StepPolicy, Stepper, bisect_crossing, hermite
from .phase import CONSTRAINT_TOL, DynamicsModel, PhasePoint, is_on_constraint, split, vector_field

log = logging.getLogger(__name__)

ADM_TOL = 1e-8
DIRECTIONS = ("decreasing", "increasing", "either")


@dataclass(frozen=True)
class GuardSpec:
    """Guard function ``g(q, p)``; an impact fires when ``g`` crosses zero in ``direction``.

    ``decreasing`` means the surface is approached from ``g > 0``.
    ``admissibility(q, p)`` is an extra membership test for the impact surface;
    crossings where it is false are flown through.
    """

    g: Callable[[np.ndarray, np.ndarray], float]
    direction: str = "decreasing"
    id: int = 0
    admissibility: Optional[Callable[[np.ndarray, np.ndarray], bool]] = None

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")

    def value(self, x) -> float:
        q, p = split(x)
        return float(self.g(q, p))

    def admissible(self, x) -> bool:
        if self.admissibility is None:
            return True
        q, p = split(x)
        return bool(self.admissibility(q, p))


@dataclass(frozen=True)
class ResetMap:
    """Impact map on phase points; usually keeps ``q`` and transforms ``p``."""

    delta: Callable[[PhasePoint], PhasePoint]

    def __call__(self, x: PhasePoint) -> PhasePoint:
        return self.delta(x)


@dataclass(frozen=True)
class ZenoPolicy:
    max_impacts: int = 10_000
    zeno_dt: float = 1e-9


@dataclass(frozen=True)
class HybridSystemSpec:
    model: DynamicsModel
    guards: tuple = ()
    reset: Optional[ResetMap] = None
    zeno: ZenoPolicy = ZenoPolicy()

    def __post_init__(self):
        object.__setattr__(self, "guards", tuple(self.guards))
        if self.guards and self.reset is None:
            raise ValueError("a hybrid system with guards needs a reset map")
        ids = [g.id for g in self.guards]
        if len(set(ids)) != len(ids):
            raise ValueError(f"guard ids must be unique, got {ids}")


@dataclass(frozen=True)
class SimPolicy:
    step: StepPolicy = StepPolicy()
    guard_tol: float = GUARD_TOL
    time_tol: float = TIME_TOL
    adm_tol: float = ADM_TOL
    constraint_tol: float = CONSTRAINT_TOL

    def __post_init__(self):
        for name in ("guard_tol", "time_tol", "adm_tol", "constraint_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ImpactEvent:
    t: float
    guard_id: int
    x_minus: PhasePoint
    x_plus: PhasePoint
    cleared: bool = True


class HybridTrajectory:
    """Continuous segments separated by impact events.

    ``segments[k]`` covers ``[events[k-1].t, events[k].t]``; at an impact time
    :meth:`state_at` returns the post-impact state.
    """

    def __init__(self, segments: list, events: list, termination: str, n: int):
        self.segments = list(segments)
        self.events = list(events)
        self.termination = termination
        self.n = n

    @property
    def t_start(self) -> float:
        return self.segments[0].t0

    @property
    def t_end(self) -> float:
        return self.segments[-1].t1

    def segment_index(self, t: float) -> int:
        # later segments win ties, which gives the x+ convention at impacts
        for i in range(len(self.segments) - 1, -1, -1):
            if t >= self.segments[i].t0:
                return i
        return 0

    def state_at(self, t: float) -> PhasePoint:
        return PhasePoint.from_array(self.segments[self.segment_index(t)](t))

    def samples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All stored samples as ``(t, x, segment_index)`` arrays."""
        ts = np.concatenate([s.t for s in self.segments])
        xs = np.vstack([s.x for s in self.segments])
        idx = np.concatenate([np.full(len(s), i, dtype=int) for i, s in enumerate(self.segments)])
        return ts, xs, idx

    def impact_times(self) -> np.ndarray:
        return np.array([e.t for e in self.events])


# ---------------------------------------------------------------------------
# guard tracking shared with the reconstruction on the base space


@dataclass
class GuardTrack:
    """Crossing bookkeeping for one guard evaluated on integrator states.

    ``sign`` is the sign of the last guard value farther than ``tol`` from
    zero (0 when unknown). A guard is armed when that sign lies on the
    approach side. ``launching`` marks the guard that just fired: its state
    starts on the surface and must first move clear of it.
    """

    id: int
    direction: str
    value: Callable[[np.ndarray], float]
    admissible: Callable[[np.ndarray], bool]
    sign: int = 0
    launching: bool = False
    orient: float = 1.0

    def orientation(self) -> float:
        if self.direction == "decreasing":
            return 1.0
        if self.direction == "increasing":
            return -1.0
        return float(self.sign) if self.sign else self.orient

    def armed(self) -> bool:
        if self.direction == "either":
            return self.sign != 0
        return self.sign == (1 if self.direction == "decreasing" else -1)

    def observe(self, v: float, tol: float) -> None:
        if abs(v) > tol:
            self.sign = 1 if v > 0 else -1


def tracks_for(guards: Sequence[GuardSpec], lift: Optional[Callable] = None) -> list[GuardTrack]:
    """Guard tracks on phase-space states, or on base states lifted by ``lift(q) -> x``."""
    out = []
    for gs in guards:
        if lift is None:
            value, adm = gs.value, gs.admissible
        else:
            value = (lambda gs_: lambda q: gs_.value(lift(q)))(gs)
            adm = (lambda gs_: lambda q: gs_.admissible(lift(q)))(gs)
        out.append(GuardTrack(gs.id, gs.direction, value, adm))
    return out


def _launch(track: GuardTrack, dense, ta: float, tb: float, vb: float,
            guard_tol: float, time_tol: float) -> tuple[Optional[float], int]:
    """Follow a guard that fired at ``ta`` through the first step after the reset.

    Returns ``(crossing_time, sign)``. The departure side comes from the
    guard's rate at ``ta``: moving to the approach side is a bounce, and a
    return through zero within the step is a new crossing (located on the
    sign change alone, so excursions smaller than ``guard_tol`` still count).
    Moving to the other side is a pass-through. A state that does not move
    off the surface re-impacts at ``ta``.
    """
    s = track.orient
    phi = lambda t: s * track.value(dense(t))  # noqa: E731
    dt = tb - ta
    d = 1e-4 * dt
    rate = (phi(ta + d) - phi(ta - d)) / (2 * d)
    if rate < 0:
        return None, -int(s)
    if s * vb > guard_tol:
        return None, int(s)
    if rate == 0 and abs(vb) <= guard_tol:
        return ta, 0
    probes = [ta + dt * 2.0 ** -j for j in range(60, 0, -1)]
    probes = [t for t in probes if ta < t < tb] + [tb]
    vals = [phi(t) for t in probes]
    i = next((k for k, v in enumerate(vals) if v > 0), None)
    if i is None:
        # the excursion never rises above the reset state's offset
        return ta, 0
    j = next((k for k in range(i + 1, len(vals)) if vals[k] <= 0), None)
    if j is None:
        return None, int(s)
    return bisect_crossing(phi, probes[j - 1], probes[j], 0.0, time_tol), 0


def _crossing_in_step(track: GuardTrack, va: float, vb: float, dense, ta: float, tb: float,
                      guard_tol: float, time_tol: float) -> Optional[float]:
    """Crossing time of an armed guard inside a single step, or ``None``."""
    if not track.armed():
        return None
    s = track.orientation()
    if s * vb > 0:
        return None
    if s * va <= guard_tol:
        return ta
    phi = lambda t: s * track.value(dense(t))  # noqa: E731
    return bisect_crossing(phi, ta, tb, guard_tol, time_tol)


@dataclass
class Hit:
    t: float
    guard_id: int
    x: np.ndarray
    orient: float


def march(f: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, t0: float, t_end: float,
          tracks: list[GuardTrack], policy: SimPolicy, stepper: Optional[Stepper] = None
          ) -> tuple[Segment, Optional[Hit]]:
    """Integrate until ``t_end`` or the earliest admissible guard crossing.

    Returns the arc up to the stopping time (its last sample is the
    pre-impact state) and the crossing, if any. Inadmissible crossings are
    flown through with a warning.
    """
    step = stepper or Stepper(f, policy.step, t0)
    x = np.asarray(x0, dtype=float)
    fx = f(x)
    ts, xs, fs = [t0], [x], [fx]
    vals = [tr.value(x) for tr in tracks]
    t = t0
    while t < t_end:
        t_new, x_new = step.advance(t, x, fx, t_end)
        f_new = f(x_new)
        ta, xa, fa = t, x, fx

        def dense(s, ta=ta, xa=xa, fa=fa, tb=t_new, xb=x_new, fb=f_new):
            return hermite(ta, xa, fa, tb, xb, fb, s)

        new_vals = [tr.value(x_new) for tr in tracks]
        best = None
        launched = {}
        for tr, va, vb in zip(tracks, vals, new_vals):
            if tr.launching:
                tc, sign = _launch(tr, dense, ta, t_new, vb, policy.guard_tol, policy.time_tol)
                launched[tr.id] = sign
                orient = tr.orient
            else:
                tc = _crossing_in_step(tr, va, vb, dense, ta, t_new, policy.guard_tol, policy.time_tol)
                orient = tr.orientation()
            if tc is None:
                continue
            xc = dense(tc) if tc > ta else xa
            if not tr.admissible(xc):
                log.warning("guard %d reached at t=%.17g but the crossing is not admissible; "
                            "continuing through the surface", tr.id, tc)
                launched[tr.id] = 0
                tr.sign = 0
                continue
            if best is None or (tc, tr.id) < (best.t, best.guard_id):
                best = Hit(tc, tr.id, xc, orient)
        if best is not None:
            if best.t > ta:
                ts.append(best.t)
                xs.append(best.x)
                fs.append(f(best.x))
            return Segment(ts, xs, fs), best
        for tr, vb in zip(tracks, new_vals):
            if tr.id in launched:
                tr.launching = False
                tr.sign = launched[tr.id]
            tr.observe(vb, policy.guard_tol)
        t, x, fx, vals = t_new, x_new, f_new, new_vals
        ts.append(t)
        xs.append(x)
        fs.append(fx)
    return Segment(ts, xs, fs), None


def clearance_rate(value: Callable[[np.ndarray], float], f, x: np.ndarray, orient: float) -> float:
    """Oriented rate of change of a guard along the flow at ``x`` (central difference).

    A zero rate means the reset state lingers on the surface and would
    re-trigger; either sign moves it off (bouncing back or passing through).
    """
    v = f(x)
    speed = float(np.linalg.norm(v))
    if speed == 0.0:
        return 0.0
    eps = 1e-7 * (1.0 + float(np.linalg.norm(x))) / speed
    return orient * (value(x + eps * v) - value(x - eps * v)) / (2 * eps)


def start_tracks(tracks: list[GuardTrack], x0: np.ndarray, policy: SimPolicy) -> None:
    """Initialise guard signs at the initial state; reject states on an admissible surface."""
    for tr in tracks:
        v = tr.value(x0)
        if abs(v) <= policy.guard_tol and tr.admissible(x0):
            raise ValueError(f"initial state lies on the impact surface of guard {tr.id}")
        tr.observe(v, policy.guard_tol)
        tr.orient = float(tr.sign) if tr.sign else 1.0


def relaunch(tracks: list[GuardTrack], hit: Hit) -> None:
    for tr in tracks:
        if tr.id == hit.guard_id:
            tr.launching = True
            tr.orient = hit.orient
            tr.sign = 0


def zeno_reason(zeno: ZenoPolicy, event_times: list[float]) -> Optional[str]:
    if len(event_times) > zeno.max_impacts:
        return f"impact count exceeded max_impacts={zeno.max_impacts}"
    if len(event_times) >= 2 and event_times[-1] - event_times[-2] < zeno.zeno_dt:
        return f"consecutive impacts closer than zeno_dt={zeno.zeno_dt:g}"
    return None


def simulate_hybrid(spec: HybridSystemSpec, x0, horizon: float, policy: SimPolicy = SimPolicy(),
                    t0: float = 0.0) -> HybridTrajectory:
    """Run the hybrid flow from ``x0`` for ``horizon`` time units.

    Termination is ``horizon_reached`` or ``zeno_guard``. Errors raised during
    the run carry the trajectory computed so far as ``exc.partial``.
    """
    model = spec.model
    x0 = x0 if isinstance(x0, PhasePoint) else PhasePoint.from_array(x0)
    if x0.n != model.n:
        raise ValueError(f"initial state has dimension {x0.n}, model has {model.n}")
    if horizon < 0 or not math.isfinite(horizon):
        raise ValueError("horizon must be finite and non-negative")
    x = x0.as_array()
    if model.kind == "nonholonomic":
        ok, r = is_on_constraint(model, x, policy.constraint_tol)
        if not ok:
            raise ConstraintViolation(f"initial state is off the constraint codistribution (residual {r:.3e})")
    f = vector_field(model)
    tracks = tracks_for(spec.guards)
    start_tracks(tracks, x, policy)

    t_stop = t0 + horizon
    segments: list[Segment] = []
    events: list[ImpactEvent] = []
    if horizon == 0:
        return HybridTrajectory([Segment([t0], [x], [f(x)])], [], "horizon_reached", model.n)

    stepper = Stepper(f, policy.step, t0)
    t = t0
    termination = "horizon_reached"
    try:
        while True:
            seg, hit = march(f, x, t, t_stop, tracks, policy, stepper)
            segments.append(seg)
            if hit is None:
                break
            gs = next(g for g in spec.guards if g.id == hit.guard_id)
            xm = PhasePoint.from_array(hit.x)
            xp = spec.reset(xm)
            xp_arr = xp.as_array()
            if model.kind == "nonholonomic":
                ok, r = is_on_constraint(model, xp_arr, policy.constraint_tol)
                if not ok:
                    raise ResetOffConstraint(
                        f"reset at t={hit.t:.17g} leaves the constraint codistribution (residual {r:.3e})")
            cleared = (not gs.admissible(xp_arr)) or abs(clearance_rate(gs.value, f, xp_arr, hit.orient)) > 0
            if not cleared:
                log.warning("post-impact state at t=%.17g does not move away from guard %d", hit.t, gs.id)
            events.append(ImpactEvent(hit.t, hit.guard_id, xm, xp, cleared))
            relaunch(tracks, hit)
            t, x = hit.t, xp_arr
            reason = zeno_reason(spec.zeno, [e.t for e in events])
            if reason is not None:
                log.info("stopping at t=%.17g: %s", t, reason)
                segments.append(Segment([t], [x], [f(x)]))
                termination = "zeno_guard"
                break
            if t >= t_stop:
                segments.append(Segment([t], [x], [f(x)]))
                break
    except HybridHJError as exc:
        if segments:
            exc.partial = HybridTrajectory(segments, events, "error", model.n)
        raise
    return HybridTrajectory(segments, events, termination, model.n)


@dataclass
class ConstantReport:
    max_drift: float
    t_at_max: float
    reference: float
    sample_count: int
    drifts: np.ndarray = field(repr=False, default=None)


def check_hybrid_constant(spec: HybridSystemSpec, f: Callable[[PhasePoint], float],
                          trajectory: HybridTrajectory) -> ConstantReport:
    """Largest deviation of ``f`` from its initial value over every stored sample."""
    ts, xs, _ = trajectory.samples()
    vals = np.array([f(PhasePoint.from_array(x)) for x in xs])
    d = np.abs(vals - vals[0])
    i = int(np.argmax(d))
    return ConstantReport(float(d[i]), float(ts[i]), float(vals[0]), len(ts), d)
