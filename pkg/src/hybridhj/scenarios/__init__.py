"""Registry of shipped scenarios."""

from __future__ import annotations

from ..errors import BadParameters
from . import billiard, bouncing_ball, disk, particle, rigid_body
from .base import PiecewiseOracle, Scenario

_BUILDERS = {
    "billiard": billiard.build,
    "rolling_disk": lambda **kw: disk.build(forced=False, **kw),
    "forced_disk": lambda **kw: disk.build(forced=True, **kw),
    "nh_particle": particle.build,
    "rigid_body": rigid_body.build,
    "bouncing_ball": bouncing_ball.build,
}


def names() -> list[str]:
    return sorted(_BUILDERS)


def get(name: str, **params) -> Scenario:
    """Build the named scenario with parameter overrides; unknown names raise ``KeyError``."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(names())}") from None
    return builder(**params)


def billiard_scenario(**kw) -> Scenario:
    return billiard.build(**kw)


def rolling_disk(forced: bool = False, **kw) -> Scenario:
    return disk.build(forced=forced, **kw)


def nonholonomic_particle(**kw) -> Scenario:
    return particle.build(**kw)


def rigid_body_so3(**kw) -> Scenario:
    return rigid_body.build(**kw)


__all__ = ["BadParameters", "PiecewiseOracle", "Scenario", "billiard_scenario", "get", "names",
           "nonholonomic_particle", "rigid_body_so3", "rolling_disk"]
