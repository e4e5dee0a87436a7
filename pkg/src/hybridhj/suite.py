"""Run every applicable HJ check for a scenario's solution family and collect one report."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import TransferUndefined
from .scenarios import Scenario
from .verify import complete_solution_check, delta_relatedness_check, residual_for


def verify_scenario(sc: Scenario, lam=None, samples: int = 1000, impact_samples: int = 100,
                    grid_samples: int = 50, seed: int = 0, pass_tol: Optional[float] = None) -> dict:
    """Region residuals at ``lam``, the transfer residual and the completeness check.

    The result is a plain dict ready for JSON export; ``passed`` is true only
    when every channel is within tolerance and nothing raised.
    """
    if sc.family is None:
        raise ValueError(f"scenario {sc.name} has no solution family")
    lam = sc.lam0 if lam is None else np.asarray(lam, dtype=float)
    if sc.check_lambda is not None:
        sc.check_lambda(lam)
    out: dict = {"scenario": sc.name, "parameters": dict(sc.params), "lambda": lam, "residuals": []}
    ok = True
    for r in sc.family.regions:
        rep = residual_for(sc.model, sc.family, r.id, lam, sc.samples(r.id, samples, seed), tol=pass_tol)
        d = rep.to_dict()
        d["region"] = r.id
        out["residuals"].append(d)
        ok = ok and rep.passed

    impacts = sc.impact_samples(impact_samples, seed)
    try:
        delta = delta_relatedness_check(sc.spec, sc.family, sc.transfer, impacts, tol=pass_tol)
        out["delta_relatedness"] = delta.to_dict()
        ok = ok and delta.passed
    except TransferUndefined as exc:
        out["delta_relatedness"] = {"check": "delta_relatedness", "error": "TransferUndefined",
                                    "message": str(exc), "passed": False}
        ok = False

    comp = complete_solution_check(sc.spec, sc.family, sc.transfer, sc.parameter_grid(grid_samples, seed),
                                   impacts, tol=pass_tol)
    out["complete_solution"] = comp.to_dict()
    ok = ok and comp.passed
    out["passed"] = bool(ok)
    return out
