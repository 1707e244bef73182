"""Numerical tolerances, stated once and overridable per run."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Mapping


@dataclass(frozen=True)
class Tolerances:
    membership: float = 1e-9           # |F_a(x)| accepted as "on the submanifold"
    coisotropy: float = 1e-8           # inclusion residual for coisotropy verdicts
    rank: float = 1e-10                # relative singular-value cut in subspace calculus
    solve_fixed_point: float = 1e-13   # implicit midpoint fixed-point stop
    solve_residual: float = 1e-12      # accepted constraint residual of a solved pair
    closure: float = 1e-9              # |X[N] - X[0]| accepted for periodic pairs
    transport_pre: float = 1e-8        # max constraint residual accepted by transport
    twist: float = 1e-9                # residual of the straightened linear equation
    characteristic_match: float = 1e-7 # gauge span vs orthogonal space, at N = 32

    def with_overrides(self, overrides: Mapping[str, float]) -> "Tolerances":
        known = {f.name for f in fields(self)}
        bad = set(overrides) - known
        if bad:
            raise KeyError(f"unknown tolerance keys: {sorted(bad)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})


DEFAULT_TOLS = Tolerances()
