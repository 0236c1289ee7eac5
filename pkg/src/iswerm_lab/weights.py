"""Importance-weight schemes for weighted ERM on logged bandit data.

Each scheme maps a logged dataset (propensities ``g_t`` and exploration
rates ``eps_t``) to one non-negative weight per record.  ``floor_t =
eps_t / K`` is the smallest propensity the eps-greedy logger can assign, so
floor-based schemes depend only on the schedule, not on which arm was
drawn.

Schemes (``SCHEMES`` lists the canonical names):

- ``unweighted``      w_t = 1
- ``iswerm``          w_t = g*(a_t) / g_t          (inverse propensity)
- ``isfloor``         w_t = g*(a_t) / floor_t
- ``sqrtis``          w_t = g*(a_t)^(1/2) / g_t^(1/2)
- ``sqrtisfloor``     w_t = g*(a_t)^(1/2) / floor_t^(1/2)
- ``mrdr``            w_t = g*(a_t) (1 - g_t) / g_t^2
- ``mrdrfloor``       w_t = g*(a_t) (1 - floor_t) / floor_t^2

With the constant-one reference (the default), these reduce to the familiar
propensity-only forms 1/g, 1/floor, g^(-1/2), floor^(-1/2), (1-g)/g^2 and
(1-floor)/floor^2.
"""

from __future__ import annotations

import numpy as np

from .data import LoggedDataset, ReferenceWeight

__all__ = ["SCHEMES", "compute_weights"]

SCHEMES = (
    "unweighted",
    "iswerm",
    "isfloor",
    "sqrtis",
    "sqrtisfloor",
    "mrdr",
    "mrdrfloor",
)


def compute_weights(scheme: str, ds: LoggedDataset,
                    gstar: ReferenceWeight | None = None) -> np.ndarray:
    """Per-record weights for one scheme.

    Parameters
    ----------
    scheme : str
        One of :data:`SCHEMES`.
    ds : LoggedDataset
        Logged run with exact propensities.
    gstar : ReferenceWeight, optional
        Reference density in the ratio numerator; defaults to constant one.

    Raises
    ------
    ValueError
        On an unknown scheme, or any non-positive propensity / exploration
        rate (weights would be undefined or wrong).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown weight scheme: {scheme!r} "
                         f"(valid: {', '.join(SCHEMES)})")
    if gstar is None:
        gstar = ReferenceWeight.constant_one()
    g = ds.G
    if np.any(g <= 0.0):
        bad = int(np.argmax(g <= 0.0))
        raise ValueError(f"record {bad}: propensity {g[bad]!r} is not positive")
    if np.any(ds.EPS <= 0.0):
        bad = int(np.argmax(ds.EPS <= 0.0))
        raise ValueError(f"record {bad}: epsilon {ds.EPS[bad]!r} is not positive")

    if scheme == "unweighted":
        return np.ones(ds.T, dtype=np.float64)

    num = gstar.arm_values(ds.K)[ds.A]
    floor = ds.EPS / ds.K
    if scheme == "iswerm":
        return num / g
    if scheme == "isfloor":
        return num / floor
    if scheme == "sqrtis":
        return np.sqrt(num) / np.sqrt(g)
    if scheme == "sqrtisfloor":
        return np.sqrt(num) / np.sqrt(floor)
    if scheme == "mrdr":
        return num * (1.0 - g) / (g * g)
    return num * (1.0 - floor) / (floor * floor)
