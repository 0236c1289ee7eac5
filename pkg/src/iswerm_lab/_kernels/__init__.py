"""Kernel backend selection.

The compiled Cython module is used when available; otherwise the pure-Python
mirror in :mod:`.reference` takes over.  Set ``ISWERM_LAB_PURE_PYTHON=1`` to
force the fallback (useful for benchmarking and equivalence testing).  Both
backends implement identical arithmetic, so results do not depend on which
one is active.
"""

from __future__ import annotations

import os

import numpy as np

from . import reference

_force_pure = os.environ.get("ISWERM_LAB_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    _impl = reference
    BACKEND = "pure-python (forced)"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = reference
        BACKEND = "pure-python"

__all__ = ["BACKEND", "collect_eps_greedy", "sup_process_rounds", "reference"]


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def collect_eps_greedy(X, mu, sd, eps, u_act, z, jitter: float = 1e-8):
    """Backend dispatch for the eps-greedy collection loop.

    See :func:`iswerm_lab._kernels.reference.collect_eps_greedy` for the
    contract; inputs are coerced to contiguous float64 here so both backends
    see identical bytes.
    """
    X = _f64(X)
    mu = _f64(mu)
    sd = _f64(sd)
    eps = _f64(eps)
    u_act = _f64(u_act)
    z = _f64(z)
    T = X.shape[0]
    if not (mu.shape[0] == sd.shape[0] == eps.shape[0] == u_act.shape[0]
            == z.shape[0] == T):
        raise ValueError("round-wise inputs must share the same length")
    if mu.shape != sd.shape:
        raise ValueError("mu and sd must have the same (T, K) shape")
    return _impl.collect_eps_greedy(X, mu, sd, eps, u_act, z, float(jitter))


def sup_process_rounds(s_idx, mu, sd, eps, u_act, z, xi, cref, gstar_arm):
    """Backend dispatch for the adaptive empirical-process simulator.

    See :func:`iswerm_lab._kernels.reference.sup_process_rounds`.
    """
    s_idx = np.ascontiguousarray(s_idx, dtype=np.int64)
    mu = _f64(mu)
    sd = _f64(sd)
    eps = _f64(eps)
    u_act = _f64(u_act)
    z = _f64(z)
    xi = _f64(xi)
    cref = _f64(cref)
    gstar_arm = _f64(gstar_arm)
    if xi.ndim != 3 or xi.shape[1:] != mu.shape:
        raise ValueError("xi must be (F, S, K) matching mu's (S, K)")
    if cref.shape[0] != xi.shape[0]:
        raise ValueError("cref must have one entry per function table")
    if gstar_arm.shape[0] != mu.shape[1]:
        raise ValueError("gstar_arm must have one entry per arm")
    return _impl.sup_process_rounds(s_idx, mu, sd, eps, u_act, z, xi, cref,
                                    gstar_arm)
