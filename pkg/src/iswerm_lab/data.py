"""Logged bandit datasets, reference action densities, and JSONL round-trip IO.

A logged dataset is the record of one adaptive data-collection run: at each
round ``t`` a context ``x_t`` was observed, an arm ``a_t`` was sampled from
the logging policy with probability ``g_t``, an outcome ``y_t`` came back,
and the exploration rate ``eps_t`` in force at that round was recorded.
Everything downstream (importance weights, weighted learners, diagnostics)
consumes this structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterator

import numpy as np

__all__ = [
    "LoggedRecord",
    "LoggedDataset",
    "ReferenceWeight",
    "validate_dataset",
    "save_jsonl",
    "load_jsonl",
]


@dataclass(frozen=True)
class LoggedRecord:
    """One round of logged interaction.

    Attributes
    ----------
    t : int
        1-based round index.
    x : np.ndarray
        Context vector, shape ``(d,)``.
    a : int
        Sampled arm, in ``[0, K)``.
    y : float
        Observed outcome.
    g : float
        Logging propensity ``g_t(a_t | x_t)`` of the sampled arm.
    eps : float
        Exploration rate in force at round ``t`` (1.0 during warm-start).
    """

    t: int
    x: np.ndarray
    a: int
    y: float
    g: float
    eps: float


@dataclass(frozen=True)
class ReferenceWeight:
    """Reference action density ``g*`` used in importance ratios.

    Three shapes cover everything the library needs:

    - ``"one"``: constant 1 per arm (counting reference; ratios become
      plain inverse propensities),
    - ``"uniform"``: uniform density ``1/K``,
    - ``"dirac"``: point mass on a single arm ``a_star``.

    The density is context-independent by construction.
    """

    kind: str
    a_star: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("one", "uniform", "dirac"):
            raise ValueError(f"unknown reference weight kind: {self.kind!r}")
        if self.kind == "dirac" and (self.a_star is None or self.a_star < 0):
            raise ValueError("dirac reference requires a non-negative a_star")

    @classmethod
    def constant_one(cls) -> "ReferenceWeight":
        return cls("one")

    @classmethod
    def uniform(cls) -> "ReferenceWeight":
        return cls("uniform")

    @classmethod
    def dirac(cls, a_star: int) -> "ReferenceWeight":
        return cls("dirac", a_star)

    def density(self, a: int, K: int) -> float:
        """Value of ``g*(a)`` for one arm."""
        if self.kind == "one":
            return 1.0
        if self.kind == "uniform":
            return 1.0 / K
        return 1.0 if a == self.a_star else 0.0

    def arm_values(self, K: int) -> np.ndarray:
        """Vector of ``g*(a)`` over all ``K`` arms."""
        if self.kind == "dirac" and self.a_star >= K:
            raise ValueError(f"dirac arm {self.a_star} out of range for K={K}")
        return np.array([self.density(a, K) for a in range(K)], dtype=np.float64)

    def sup_density(self, K: int) -> float:
        """``sup_a g*(a)``, the numerator of the exploration ratio."""
        return 1.0 / K if self.kind == "uniform" else 1.0


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LoggedDataset:
    """Column-oriented store of a full collection run.

    Immutable after construction (the arrays are marked read-only), so a
    dataset can be shared freely across threads and replications.

    Attributes
    ----------
    X : np.ndarray
        Contexts, shape ``(T, d)``.
    A : np.ndarray
        Sampled arms, shape ``(T,)``, integer.
    Y : np.ndarray
        Outcomes, shape ``(T,)``.
    G : np.ndarray
        Logging propensities of the sampled arms, shape ``(T,)``.
    EPS : np.ndarray
        Exploration rates, shape ``(T,)``.
    K : int
        Number of arms.
    beta : float
        Exploration decay exponent used during collection (metadata).
    seed : int or None
        Collection seed (metadata; None when unknown, e.g. external logs).
    t_index : np.ndarray
        1-based round indices, shape ``(T,)``.  The collector always emits
        ``1..T``; external files may not, which validation flags.
    """

    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    G: np.ndarray
    EPS: np.ndarray
    K: int
    beta: float
    seed: int | None = None
    t_index: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be 2-D (T, d)")
        T = X.shape[0]
        t_index = self.t_index
        if t_index is None:
            t_index = np.arange(1, T + 1, dtype=np.int64)
        cols = {
            "X": _as_readonly(X),
            "A": _as_readonly(np.asarray(self.A, dtype=np.int64)),
            "Y": _as_readonly(np.asarray(self.Y, dtype=np.float64)),
            "G": _as_readonly(np.asarray(self.G, dtype=np.float64)),
            "EPS": _as_readonly(np.asarray(self.EPS, dtype=np.float64)),
            "t_index": _as_readonly(np.asarray(t_index, dtype=np.int64)),
        }
        for name in ("A", "Y", "G", "EPS", "t_index"):
            if cols[name].shape != (T,):
                raise ValueError(f"{name} must have shape ({T},)")
        for name, arr in cols.items():
            object.__setattr__(self, name, arr)

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.T

    def record(self, i: int) -> LoggedRecord:
        """Row ``i`` (0-based) as a :class:`LoggedRecord`."""
        return LoggedRecord(
            t=int(self.t_index[i]),
            x=self.X[i],
            a=int(self.A[i]),
            y=float(self.Y[i]),
            g=float(self.G[i]),
            eps=float(self.EPS[i]),
        )

    def records(self) -> Iterator[LoggedRecord]:
        for i in range(self.T):
            yield self.record(i)


def validate_dataset(ds: LoggedDataset) -> list[str]:
    """Collect every contract violation in a dataset.

    Returns a list of human-readable messages, one per violation, each
    naming the offending record where applicable.  An empty list means the
    dataset is valid.  Checks: propensities in (0, 1] and at or above the
    exploration floor ``eps/K``; exploration rates in (0, 1]; arms in
    ``[0, K)``; every arm sampled at least once; finite contexts and
    outcomes; round indices consecutive from 1.
    """
    problems: list[str] = []
    T, K = ds.T, ds.K
    if T == 0:
        return ["dataset is empty"]
    if K < 1:
        problems.append(f"K must be >= 1, got {K}")
        return problems

    for i in range(T):
        t = int(ds.t_index[i])
        g = float(ds.G[i])
        eps = float(ds.EPS[i])
        a = int(ds.A[i])
        if not (0.0 < g <= 1.0):
            problems.append(f"record {i} (t={t}): propensity {g!r} outside (0, 1]")
        if not (0.0 < eps <= 1.0):
            problems.append(f"record {i} (t={t}): epsilon {eps!r} outside (0, 1]")
        elif g < eps / K:
            problems.append(
                f"record {i} (t={t}): propensity {g!r} below floor eps/K = {eps / K!r}"
            )
        if not (0 <= a < K):
            problems.append(f"record {i} (t={t}): arm {a} outside [0, {K})")
        if not np.all(np.isfinite(ds.X[i])):
            problems.append(f"record {i} (t={t}): non-finite context")
        if not np.isfinite(ds.Y[i]):
            problems.append(f"record {i} (t={t}): non-finite outcome")
        if t != i + 1:
            problems.append(f"record {i}: round index {t}, expected {i + 1}")

    seen = np.zeros(K, dtype=bool)
    valid_arms = ds.A[(ds.A >= 0) & (ds.A < K)]
    seen[valid_arms] = True
    for a in range(K):
        if not seen[a]:
            problems.append(f"arm {a} never sampled")
    return problems


# ---------------------------------------------------------------------------
# JSONL round-trip
# ---------------------------------------------------------------------------
#
# Line 1 is a header object {"K", "d", "beta", "seed"}; every following line
# is one record {"t", "x", "a", "y", "g", "eps"} in that key order.  Floats
# are written with repr-level precision so save -> load -> save is
# byte-identical.


def save_jsonl(ds: LoggedDataset, fp: IO[str] | str) -> None:
    """Write a dataset to a JSONL file or open text handle."""
    if isinstance(fp, str):
        with open(fp, "w", encoding="utf-8") as handle:
            save_jsonl(ds, handle)
        return
    header = {"K": ds.K, "d": ds.d, "beta": ds.beta, "seed": ds.seed}
    fp.write(json.dumps(header) + "\n")
    for r in ds.records():
        rec = {
            "t": r.t,
            "x": [float(v) for v in r.x],
            "a": r.a,
            "y": r.y,
            "g": r.g,
            "eps": r.eps,
        }
        fp.write(json.dumps(rec) + "\n")


def load_jsonl(fp: IO[str] | str) -> LoggedDataset:
    """Read a dataset written by :func:`save_jsonl` (or any conforming file)."""
    if isinstance(fp, str):
        with open(fp, "r", encoding="utf-8") as handle:
            return load_jsonl(handle)
    lines = [line for line in fp if line.strip()]
    if not lines:
        raise ValueError("empty dataset file")
    header = json.loads(lines[0])
    for key in ("K", "d", "beta"):
        if key not in header:
            raise ValueError(f"dataset header missing {key!r}")
    K, d = int(header["K"]), int(header["d"])
    seed = header.get("seed")
    T = len(lines) - 1
    X = np.empty((T, d), dtype=np.float64)
    A = np.empty(T, dtype=np.int64)
    Y = np.empty(T, dtype=np.float64)
    G = np.empty(T, dtype=np.float64)
    EPS = np.empty(T, dtype=np.float64)
    t_index = np.empty(T, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        rec = json.loads(line)
        x = rec["x"]
        if len(x) != d:
            raise ValueError(f"record {i}: context has {len(x)} dims, header says {d}")
        X[i] = x
        A[i] = rec["a"]
        Y[i] = rec["y"]
        G[i] = rec["g"]
        EPS[i] = rec["eps"]
        t_index[i] = rec["t"]
    return LoggedDataset(
        X=X, A=A, Y=Y, G=G, EPS=EPS, K=K,
        beta=float(header["beta"]),
        seed=None if seed is None else int(seed),
        t_index=t_index,
    )
