"""Hybrid trajectories rebuilt from a complete HJ solution, and comparison with direct runs.

Only the base dynamics ``qdot = dH/dp(q, gamma_k(q; lam))`` are integrated.
At each impact the parameters are transferred, the next region is found by a
short forward probe, and every base sample is lifted through ``gamma``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import HybridHJError, IncomparableHorizons, RegionAmbiguous, RegionViolation
from .hybrid import (
    HybridSystemSpec,
    HybridTrajectory,
    ImpactEvent,
    SimPolicy,
    march,
    relaunch,
    start_tracks,
    tracks_for,
    zeno_reason,
)
from .integrate import Segment, Stepper
from .phase import PhasePoint, projected_field
from .verify import SolutionFamily, TransferMap, residual_for

log = logging.getLogger(__name__)

LIFT_TOL = 1e-8
ADVISORY_TOL = 1e-6


@dataclass
class BaseSegment:
    t: np.ndarray
    q: np.ndarray
    region: int
    lam: np.ndarray


@dataclass
class TransferRecord:
    t: float
    guard_id: int
    from_region: int
    to_region: int
    lam_before: np.ndarray
    lam_after: np.ndarray
    lift_mismatch: float

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "guard_id": self.guard_id,
            "from_region": self.from_region,
            "to_region": self.to_region,
            "lambda_before": np.asarray(self.lam_before).tolist(),
            "lambda_after": np.asarray(self.lam_after).tolist(),
            "lift_mismatch": self.lift_mismatch,
        }


@dataclass
class ReconstructionRun:
    base_segments: list
    lifted: HybridTrajectory
    transfer_log: list

    @property
    def max_lift_mismatch(self) -> float:
        return max((r.lift_mismatch for r in self.transfer_log), default=0.0)


def _lifted_segment(base: Segment, gam) -> Segment:
    xs = np.array([np.concatenate([q, gam(q)]) for q in base.x])

    def evaluate(t, base=base, gam=gam):
        q = base(t)
        return np.concatenate([q, gam(q)])

    return Segment(base.t, xs, evaluator=evaluate)


def reconstruct(spec: HybridSystemSpec, family: SolutionFamily, transfer: TransferMap, q0, lam0,
                region0: int, horizon: float, policy: SimPolicy = SimPolicy(), t0: float = 0.0,
                lift_tol: float = LIFT_TOL) -> ReconstructionRun:
    """Rebuild the hybrid trajectory through ``(q0, gamma_region0(q0; lam0))``.

    Guards are evaluated on the lifted state so momentum-dependent
    admissibility tests work unchanged. The region after each impact is the
    unique region containing ``q* + qdot(x+) * probe_dt``; anything else raises
    :class:`RegionAmbiguous`.
    """
    model = spec.model
    q = np.asarray(q0, dtype=float)
    lam = np.asarray(lam0, dtype=float)
    k = region0
    if not family.region(k).contains(q):
        raise RegionViolation(f"initial point {q.tolist()} is outside region {k}")
    pre = residual_for(model, family, k, lam, [q], check_region=False)
    if pre.max_residual > ADVISORY_TOL:
        log.warning("initial one-form misses the HJ equation by %.3e; reconstructing anyway", pre.max_residual)

    current = {"gam": family.at(k, lam)}

    def lift(qq):
        return np.concatenate([qq, current["gam"](qq)])

    tracks = tracks_for(spec.guards, lift)
    start_tracks(tracks, q, policy)

    base_segments, lifted_segments, events, log_ = [], [], [], []
    t_stop = t0 + horizon
    termination = "horizon_reached"
    if horizon <= 0:
        gam = current["gam"]
        seg = Segment([t0], [q])
        base_segments.append(BaseSegment(seg.t, seg.x, k, lam))
        lifted_segments.append(_lifted_segment(seg, gam))
        return ReconstructionRun(base_segments, HybridTrajectory(lifted_segments, [], termination, model.n), [])

    t = t0
    try:
        while True:
            gam = current["gam"]

            def f(qq, gam=gam):
                return projected_field(model, gam, qq)

            seg, hit = march(f, q, t, t_stop, tracks, policy, Stepper(f, policy.step, t0))
            base_segments.append(BaseSegment(seg.t, seg.x, k, lam))
            lifted_segments.append(_lifted_segment(seg, gam))
            if hit is None:
                break
            q_star = hit.x
            xm = PhasePoint(q_star, gam(q_star))
            xp = spec.reset(xm)
            probe_dt = 10 * policy.time_tol * (1.0 + abs(hit.t))
            probe = q_star + projected_field(model, lambda _q: xp.p, q_star) * probe_dt
            found = family.regions_containing(probe)
            if len(found) != 1:
                raise RegionAmbiguous(f"after the impact at t={hit.t:.17g} the probe {probe.tolist()} "
                                      f"lies in regions {found}")
            l = found[0]
            lam_new = transfer(k, l, lam, q_star)
            p_new = family(l, q_star, lam_new)
            mismatch = float(np.max(np.abs(p_new - xp.p)))
            if mismatch > lift_tol:
                log.warning("lifted post-impact momenta differ from the reset by %.3e at t=%.17g", mismatch, hit.t)
            log_.append(TransferRecord(hit.t, hit.guard_id, k, l, lam, lam_new, mismatch))
            events.append(ImpactEvent(hit.t, hit.guard_id, xm, PhasePoint(q_star, p_new)))
            relaunch(tracks, hit)
            k, lam, t, q = l, lam_new, hit.t, q_star
            current["gam"] = family.at(k, lam)
            reason = zeno_reason(spec.zeno, [e.t for e in events])
            if reason is not None or t >= t_stop:
                seg = Segment([t], [q])
                base_segments.append(BaseSegment(seg.t, seg.x, k, lam))
                lifted_segments.append(_lifted_segment(seg, current["gam"]))
                if reason is not None:
                    log.info("stopping at t=%.17g: %s", t, reason)
                    termination = "zeno_guard"
                break
    except HybridHJError as exc:
        if lifted_segments:
            exc.partial = ReconstructionRun(
                base_segments, HybridTrajectory(lifted_segments, events, "error", model.n), log_)
        raise
    return ReconstructionRun(base_segments, HybridTrajectory(lifted_segments, events, termination, model.n), log_)


@dataclass
class ComparisonReport:
    sup_discrepancy: float
    per_segment: list
    impact_time_diffs: list
    count_mismatch: bool
    direct_impacts: int
    lifted_impacts: int
    details: dict = field(default_factory=dict)

    @property
    def max_impact_time_diff(self) -> float:
        return max(self.impact_time_diffs, default=0.0)

    def to_dict(self) -> dict:
        return {
            "sup_discrepancy": self.sup_discrepancy,
            "per_segment": list(self.per_segment),
            "impact_time_diffs": list(self.impact_time_diffs),
            "max_impact_time_diff": self.max_impact_time_diff,
            "count_mismatch": self.count_mismatch,
            "direct_impacts": self.direct_impacts,
            "lifted_impacts": self.lifted_impacts,
            **self.details,
        }


def compare(direct: HybridTrajectory, lifted: HybridTrajectory, horizon_tol: float = 1e-9) -> ComparisonReport:
    """Segment-by-segment sup-norm distance, evaluating the lifted run on the direct run's sample times."""
    span_d = direct.t_end - direct.t_start
    span_l = lifted.t_end - lifted.t_start
    if abs(direct.t_start - lifted.t_start) > horizon_tol or abs(span_d - span_l) > horizon_tol * (1 + abs(span_d)):
        raise IncomparableHorizons(
            f"direct run covers [{direct.t_start}, {direct.t_end}], lifted run [{lifted.t_start}, {lifted.t_end}]")
    per_segment = []
    for sd, sl in zip(direct.segments, lifted.segments):
        worst = 0.0
        for t, x in zip(sd.t, sd.x):
            worst = max(worst, float(np.max(np.abs(x - sl(t)))))
        per_segment.append(worst)
    diffs = [abs(a.t - b.t) for a, b in zip(direct.events, lifted.events)]
    return ComparisonReport(
        max(per_segment, default=0.0),
        per_segment,
        diffs,
        len(direct.events) != len(lifted.events),
        len(direct.events),
        len(lifted.events),
    )
