from __future__ import annotations

import numpy as np

from coisolab.paths import solve_compatible
from coisolab.scenario import Scenario, get_scenario


def scenario_pair(name: str, n: int, seed: int = 0):
    """Builtin scenario plus its solved base pair on an N-cell grid."""
    scn = get_scenario(name)
    eta = scn.realize_eta(n, np.random.default_rng(seed))
    pair = solve_compatible(scn.pi, scn.x0, eta, periodic=scn.periodic)
    return scn, pair


def interval_poisson_names() -> list[str]:
    return ["zero-pi-r2", "symplectic-r2", "symplectic-r4", "so3-lie-poisson",
            "zero-pi-intersecting-lines"]


def coisotropic_names() -> list[str]:
    return interval_poisson_names() + ["circle-so3"]
