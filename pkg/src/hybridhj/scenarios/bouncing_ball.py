"""Inelastic ball bouncing on the floor under constant gravity; impacts accumulate in finite time."""

from __future__ import annotations

import numpy as np

from ..errors import BadParameters
from ..hybrid import GuardSpec, HybridSystemSpec, ResetMap
from ..phase import DynamicsModel, PhasePoint
from .base import Scenario, resolve_params

DEFAULTS = {"e": 0.5, "gravity": 1.0, "height": 1.0}


def accumulation_time(height: float, gravity: float, e: float) -> float:
    """Time at which the impacts of a ball dropped from rest at ``height`` accumulate."""
    v = np.sqrt(2 * gravity * height)
    return v / gravity + 2 * v / gravity * e / (1 - e)


def build(**overrides) -> Scenario:
    params = resolve_params("bouncing_ball", DEFAULTS, overrides)
    e, g, h = params["e"], params["gravity"], params["height"]
    if not 0 <= e < 1:
        raise BadParameters(f"e must lie in [0, 1), got {e}")
    if not g > 0 or not h > 0:
        raise BadParameters("gravity and height must be positive")
    model = DynamicsModel(
        n=1,
        H=lambda q, p: 0.5 * float(p[0] ** 2) + g * float(q[0]),
        dH_dq=lambda q, p: np.array([g]),
        dH_dp=lambda q, p: np.array([p[0]]),
    )
    spec = HybridSystemSpec(model, [GuardSpec(lambda q, p: q[0], "decreasing", 0)],
                            ResetMap(lambda x: PhasePoint(x.q, -e * x.p)))
    return Scenario(
        name="bouncing_ball",
        params=params,
        schema=dict(DEFAULTS),
        spec=spec,
        x0=PhasePoint([h], [0.0]),
        non_constants={"H": lambda x: model.H(x.q, x.p)},
        description="inelastic bouncing ball (Zeno accumulation of impacts)",
    )
