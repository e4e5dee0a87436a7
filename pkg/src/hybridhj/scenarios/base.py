"""Common container for shipped scenarios and their parameter handling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from ..errors import BadParameters
from ..hybrid import HybridSystemSpec
from ..phase import DynamicsModel, PhasePoint
from ..verify import ImpactSample, SolutionFamily, TransferMap


def resolve_params(name: str, defaults: dict, overrides: dict) -> dict:
    unknown = sorted(set(overrides) - set(defaults))
    if unknown:
        raise BadParameters(f"unknown parameter(s) for {name}: {', '.join(unknown)}; "
                            f"accepted: {', '.join(sorted(defaults)) or 'none'}")
    out = dict(defaults)
    for k, v in overrides.items():
        try:
            out[k] = float(v)
        except (TypeError, ValueError):
            raise BadParameters(f"parameter {k} of {name} must be a number, got {v!r}") from None
        if not np.isfinite(out[k]):
            raise BadParameters(f"parameter {k} of {name} must be finite")
    return out


def box_points(lo, hi, count: int, seed: int = 0, keep: Optional[Callable] = None) -> np.ndarray:
    """Quasi-random (scrambled Halton) points in a box, optionally filtered by ``keep``."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    sampler = qmc.Halton(d=lo.size, seed=seed)
    out = []
    while len(out) < count:
        for u in sampler.random(max(count, 16)):
            q = lo + u * (hi - lo)
            if keep is None or keep(q):
                out.append(q)
                if len(out) == count:
                    break
    return np.array(out)


@dataclass
class Scenario:
    """A hybrid system plus everything the HJ checks and reconstruction need.

    ``samples(k, count, seed)`` draws base points inside region ``k``;
    ``impact_samples(count, seed)`` draws points of the impact surface with
    region labels and family parameters; ``parameter_grid(count, seed)``
    draws ``(k, q, lam)`` triples for the completeness check. ``oracle``,
    when present, maps ``(q0, lam0, horizon)`` to an exact piecewise solution.
    """

    name: str
    params: dict
    schema: dict
    spec: HybridSystemSpec
    x0: PhasePoint
    family: Optional[SolutionFamily] = None
    transfer: Optional[TransferMap] = None
    q0: Optional[np.ndarray] = None
    lam0: Optional[np.ndarray] = None
    region0: int = 0
    constants: dict = field(default_factory=dict)
    non_constants: dict = field(default_factory=dict)
    samples: Optional[Callable] = None
    impact_samples: Optional[Callable[..., list]] = None
    parameter_grid: Optional[Callable[..., list]] = None
    oracle: Optional[Callable] = None
    region_lambdas: dict = field(default_factory=dict)
    description: str = ""
    check_lambda: Optional[Callable[[np.ndarray], None]] = None

    @property
    def model(self) -> DynamicsModel:
        return self.spec.model

    def lift(self, q, lam=None, k=None) -> PhasePoint:
        lam = self.lam0 if lam is None else np.asarray(lam, dtype=float)
        k = self.region0 if k is None else k
        q = np.asarray(q, dtype=float)
        return PhasePoint(q, self.family(k, q, lam))

    def lambda_for(self, k: int) -> np.ndarray:
        return np.asarray(self.region_lambdas.get(k, self.lam0), dtype=float)

    def descriptor(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "parameters": {k: {"type": "number", "default": v} for k, v in self.schema.items()},
            "state_dimension": self.model.n,
            "field": self.model.kind,
            "guards": [{"id": g.id, "direction": g.direction} for g in self.spec.guards],
            "has_family": self.family is not None,
            "param_dim": None if self.family is None else self.family.param_dim,
            "regions": [] if self.family is None else [{"id": r.id, "name": r.name} for r in self.family.regions],
            "angle_indices": list(self.model.angle_indices),
            "default_q0": None if self.q0 is None else self.q0.tolist(),
            "default_lambda0": None if self.lam0 is None else self.lam0.tolist(),
            "default_region0": self.region0,
        }


def phase_samples(points: np.ndarray, momenta_scale: float, seed: int = 0) -> list:
    """Random phase points over given base points, for derivative checks."""
    rng = np.random.default_rng(seed)
    return [np.concatenate([q, momenta_scale * rng.standard_normal(q.size)]) for q in points]


def make_impacts(qs, k: int, l: int, lams) -> list:
    return [ImpactSample(np.asarray(q, dtype=float), k, l, np.asarray(lam, dtype=float)) for q, lam in zip(qs, lams)]


@dataclass
class OracleEvent:
    t: float
    x_minus: np.ndarray
    x_plus: np.ndarray


@dataclass
class PiecewiseOracle:
    """Exact hybrid solution: ``pieces[i] = (t_start, state_fn)`` plus the impact list.

    ``state(t)`` follows the post-impact convention at impact times.
    """

    pieces: list
    events: list

    def state(self, t: float) -> np.ndarray:
        for t_start, fn in reversed(self.pieces):
            if t >= t_start:
                return fn(t)
        return self.pieces[0][1](t)

    def state_in(self, piece: int, t: float) -> np.ndarray:
        """State on a given piece, so pre-impact endpoints can be compared too."""
        return self.pieces[piece][1](t)

    def sup_error(self, traj) -> float:
        """Largest state difference to the samples of a hybrid trajectory, piece by piece."""
        ts, xs, idx = traj.samples()
        if len(traj.segments) > len(self.pieces):
            raise ValueError(f"trajectory has {len(traj.segments)} segments, oracle only {len(self.pieces)}")
        return max((float(np.max(np.abs(x - self.state_in(int(i), t)))) for t, x, i in zip(ts, xs, idx)),
                   default=0.0)

    @property
    def event_times(self) -> np.ndarray:
        return np.array([e.t for e in self.events])
