"""Weighted ERM learners: least squares / ridge, lasso, CART, and policies.

All fits minimize an importance-weighted empirical risk; the weights come
from :mod:`iswerm_lab.weights` but any non-negative vector works.  Solvers
are deterministic: same inputs, same outputs, no internal randomness.

Feature maps
------------
``linear_interacted``
    ``concat[(1, x), onehot(a) (x) (1, x)]``, dimension (K+1)(d+1); a global
    intercept-augmented block plus one interacted copy per arm.  Index 0 is
    the global intercept (unpenalized by default).
``tree_concat``
    ``concat[x, onehot(a)]``, dimension d+K; the natural input for tree
    learners.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import LoggedDataset

__all__ = [
    "FeatureMap",
    "build_features",
    "LinearModel",
    "TreeNode",
    "TreeModel",
    "TreeOutcomeModel",
    "fit_wls",
    "LassoFit",
    "fit_lasso_cd",
    "lasso_objective",
    "CVResult",
    "cv_select_lambda",
    "fit_cart",
    "predict",
    "ConstantPolicy",
    "StumpPolicy",
    "TablePolicy",
    "TreePolicy",
    "FinitePolicyClass",
    "TreePolicyClass",
    "PolicyFit",
    "fit_policy_iswerm",
    "model_to_dict",
    "model_from_dict",
]


# ---------------------------------------------------------------------------
# Feature maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureMap:
    """Maps a (context, arm) pair to a feature vector."""

    mode: str
    d: int
    K: int

    def __post_init__(self) -> None:
        if self.mode not in ("linear_interacted", "tree_concat"):
            raise ValueError(f"unknown feature map mode: {self.mode!r}")
        if self.d < 1 or self.K < 1:
            raise ValueError("d and K must be >= 1")

    @property
    def out_dim(self) -> int:
        if self.mode == "linear_interacted":
            return (self.K + 1) * (self.d + 1)
        return self.d + self.K

    def design_matrix(self, X: np.ndarray, A: np.ndarray) -> np.ndarray:
        """Feature rows for many (context, arm) pairs at once."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        A = np.asarray(A, dtype=np.int64)
        n = X.shape[0]
        if X.shape[1] != self.d:
            raise ValueError(f"contexts have {X.shape[1]} dims, map expects {self.d}")
        if A.shape != (n,):
            raise ValueError("A must be (n,)")
        if np.any((A < 0) | (A >= self.K)):
            raise ValueError("arm out of range")
        if self.mode == "tree_concat":
            out = np.zeros((n, self.out_dim))
            out[:, :self.d] = X
            out[np.arange(n), self.d + A] = 1.0
            return out
        base = np.column_stack([np.ones(n), X])          # (n, d+1)
        out = np.zeros((n, self.out_dim))
        out[:, :self.d + 1] = base
        block = self.d + 1
        offs = (A + 1) * block
        for j in range(block):
            out[np.arange(n), offs + j] = base[:, j]
        return out


def build_features(x: np.ndarray, a: int, fmap: FeatureMap) -> np.ndarray:
    """Feature vector for a single (context, arm) pair."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return fmap.design_matrix(x, np.array([a]))[0]


# ---------------------------------------------------------------------------
# Linear models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    """Linear scorer over a feature map."""

    coef: np.ndarray
    feature_map: FeatureMap

    def __post_init__(self) -> None:
        coef = np.asarray(self.coef, dtype=np.float64)
        if coef.shape != (self.feature_map.out_dim,):
            raise ValueError("coefficient dimension does not match feature map")
        object.__setattr__(self, "coef", coef)

    def predict_pairs(self, X: np.ndarray, A: np.ndarray) -> np.ndarray:
        return self.feature_map.design_matrix(X, A) @ self.coef

    def predict_all_arms(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        n, K = X.shape[0], self.feature_map.K
        out = np.empty((n, K))
        for a in range(K):
            out[:, a] = self.predict_pairs(X, np.full(n, a))
        return out


@dataclass(frozen=True)
class TreeOutcomeModel:
    """A fitted tree routed through a feature map, so it scores (x, a) pairs
    like a linear outcome model does."""

    tree: "TreeModel"
    feature_map: FeatureMap

    def predict_pairs(self, X: np.ndarray, A: np.ndarray) -> np.ndarray:
        return self.tree.predict(self.feature_map.design_matrix(X, A))

    def predict_all_arms(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        n, K = X.shape[0], self.feature_map.K
        out = np.empty((n, K))
        for a in range(K):
            out[:, a] = self.predict_pairs(X, np.full(n, a))
        return out


def _check_weights(y: np.ndarray, w: np.ndarray) -> None:
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if not np.any(w > 0):
        raise ValueError("at least one weight must be positive")
    if y.shape != w.shape:
        raise ValueError("y and w must have the same shape")


def fit_wls(phi: np.ndarray, y: np.ndarray, w: np.ndarray,
            ridge_lambda: float = 0.0,
            unpenalized: tuple[int, ...] = (0,)) -> np.ndarray:
    """Weighted least squares / ridge via the normal equations.

    Minimizes ``sum_i w_i (y_i - theta . phi_i)^2 + ridge_lambda *
    ||theta_penalized||^2`` where the columns in ``unpenalized`` (the
    intercept, by default) carry no penalty.  A singular unpenalized system
    returns the minimum-norm solution.
    """
    phi = np.asarray(phi, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] != y.shape[0]:
        raise ValueError("phi must be (n, p) matching y")
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be >= 0")
    _check_weights(y, w)
    p = phi.shape[1]
    A = phi.T @ (phi * w[:, None])
    b = phi.T @ (w * y)
    if ridge_lambda > 0:
        pen = np.ones(p)
        pen[list(unpenalized)] = 0.0
        A = A + ridge_lambda * np.diag(pen)
    try:
        theta = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(A) @ b
    resid = A @ theta - b
    if not np.all(np.isfinite(theta)) or \
            np.linalg.norm(resid) > 1e-8 * max(1.0, np.linalg.norm(b)):
        return np.linalg.pinv(A) @ b
    return theta


def wls_objective(phi, y, w, coef, ridge_lambda=0.0,
                  unpenalized: tuple[int, ...] = (0,)) -> float:
    """Objective minimized by :func:`fit_wls`, for diagnostics and tests."""
    r = y - phi @ coef
    pen = np.ones(len(coef))
    pen[list(unpenalized)] = 0.0
    return float(w @ (r * r) + ridge_lambda * np.sum(pen * coef * coef))


# ---------------------------------------------------------------------------
# Weighted lasso by cyclic coordinate descent
# ---------------------------------------------------------------------------


def lasso_objective(phi, y, w, coef, lam,
                    unpenalized: tuple[int, ...] = (0,)) -> float:
    """``(1/sum w) sum_i w_i (y_i - theta.phi_i)^2 + 2 lam ||theta_pen||_1``."""
    r = y - phi @ coef
    pen = np.ones(len(coef))
    pen[list(unpenalized)] = 0.0
    return float((w @ (r * r)) / w.sum() + 2.0 * lam * np.sum(pen * np.abs(coef)))


@dataclass(frozen=True)
class LassoFit:
    """Coordinate-descent result with its convergence record."""

    coef: np.ndarray
    sweeps: int
    converged: bool
    objective_trace: tuple[float, ...]


def fit_lasso_cd(phi: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float,
                 tol: float = 1e-10, max_iter: int = 1000,
                 unpenalized: tuple[int, ...] = (0,)) -> LassoFit:
    """Weighted lasso via cyclic coordinate descent on the Gram system.

    Minimizes ``(1/sum w) sum_i w_i (y_i - theta.phi_i)^2 +
    2 lam ||theta_penalized||_1``; the intercept (column 0 by default) is
    unpenalized.  Convergence: max coordinate change in a sweep < ``tol``.
    Non-convergence within ``max_iter`` sweeps is reported as a warning and
    the current iterate returned.
    """
    phi = np.asarray(phi, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    _check_weights(y, w)
    n, p = phi.shape
    W = float(w.sum())
    G = phi.T @ (phi * w[:, None])
    c = phi.T @ (w * y)
    yy = float(w @ (y * y))
    is_pen = np.ones(p, dtype=bool)
    is_pen[list(unpenalized)] = False

    theta = np.zeros(p)
    Gtheta = np.zeros(p)
    trace: list[float] = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        delta_max = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue  # identically-zero column under the weights
            # correlation of feature j with the partial residual
            zj = (c[j] - Gtheta[j] + gjj * theta[j]) / W
            if is_pen[j]:
                new = np.sign(zj) * max(abs(zj) - lam, 0.0) * W / gjj
            else:
                new = zj * W / gjj
            if new != theta[j]:
                Gtheta += G[:, j] * (new - theta[j])
                delta_max = max(delta_max, abs(new - theta[j]))
                theta[j] = new
        Gtheta = G @ theta  # refresh the running product to kill drift
        trace.append((yy - 2.0 * theta @ c + theta @ Gtheta) / W
                     + 2.0 * lam * float(np.sum(np.abs(theta[is_pen]))))
        if delta_max < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"lasso coordinate descent: no convergence in {max_iter} sweeps "
            f"(last max coordinate change {delta_max:.3e})", RuntimeWarning)
    return LassoFit(coef=theta, sweeps=sweeps, converged=converged,
                    objective_trace=tuple(trace))


# ---------------------------------------------------------------------------
# Cross-validated penalty selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CVResult:
    lam: float
    coef: np.ndarray
    grid: tuple[float, ...]
    cv_errors: tuple[float, ...]


def cv_select_lambda(learner: str, phi: np.ndarray, y: np.ndarray,
                     w: np.ndarray, lambda_grid, folds: int = 4,
                     unpenalized: tuple[int, ...] = (0,)) -> CVResult:
    """Pick a penalty by contiguous-block cross-validation in time order.

    Rows are split into ``folds`` contiguous blocks (the data is a time
    series, so shuffling would leak adaptivity across the cut).  For each
    candidate, each block is scored with weighted squared error using a fit
    on the remaining rows; the score is normalized by total held-out weight.
    Ties prefer the smaller penalty; the winner is refit on all rows.
    """
    if learner not in ("ridge", "lasso"):
        raise ValueError("learner must be 'ridge' or 'lasso'")
    grid = sorted(set(float(v) for v in lambda_grid))
    if not grid:
        raise ValueError("empty lambda grid")
    phi = np.asarray(phi, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = phi.shape[0]
    if n < folds:
        raise ValueError(f"need at least {folds} rows for {folds}-fold CV")

    bounds = [(i * n // folds, (i + 1) * n // folds) for i in range(folds)]

    def fit(px, py, pw, lam):
        if learner == "ridge":
            return fit_wls(px, py, pw, ridge_lambda=lam, unpenalized=unpenalized)
        return fit_lasso_cd(px, py, pw, lam, unpenalized=unpenalized).coef

    W_all = float(w.sum())
    errors = []
    for lam in grid:
        total = 0.0
        for lo, hi in bounds:
            mask = np.ones(n, dtype=bool)
            mask[lo:hi] = False
            coef = fit(phi[mask], y[mask], w[mask], lam)
            r = y[lo:hi] - phi[lo:hi] @ coef
            total += float(w[lo:hi] @ (r * r))
        errors.append(total / W_all)

    best = 0
    for i in range(1, len(grid)):
        if errors[i] < errors[best]:
            best = i
    lam = grid[best]
    return CVResult(lam=lam, coef=fit(phi, y, w, lam), grid=tuple(grid),
                    cv_errors=tuple(errors))


# ---------------------------------------------------------------------------
# Weighted CART regression
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    value: float
    weight: float
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True)
class TreeModel:
    """Axis-aligned regression tree with weighted-mean leaves."""

    root: TreeNode
    max_depth: int
    min_leaf_weight: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out

    @property
    def depth(self) -> int:
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))
        return d(self.root)

    def leaf_count(self) -> int:
        def c(node):
            return 1 if node.is_leaf else c(node.left) + c(node.right)
        return c(self.root)


def _best_split(X, y, w, min_leaf_weight):
    """Best (reduction, feature, threshold); ties prefer the lowest feature
    index, then the lowest threshold."""
    n, p = X.shape
    tot_w = w.sum()
    tot_wy = w @ y
    base = tot_wy * tot_wy / tot_w
    best = (0.0, -1, 0.0)
    for j in range(p):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cw = np.cumsum(w[order])
        cwy = np.cumsum((w * y)[order])
        lw, ly = cw[:-1], cwy[:-1]
        rw, ry = tot_w - lw, tot_wy - ly
        valid = (xs[:-1] < xs[1:]) & (lw >= min_leaf_weight) & (rw >= min_leaf_weight)
        if not np.any(valid):
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            red = ly * ly / lw + ry * ry / rw - base
        red = np.where(valid, red, -np.inf)
        i = int(np.argmax(red))  # first max: lowest threshold wins ties
        if red[i] > best[0]:
            best = (float(red[i]), j, float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _grow(X, y, w, depth, max_depth, min_leaf_weight):
    tot_w = float(w.sum())
    node = TreeNode(value=float((w @ y) / tot_w), weight=tot_w)
    if depth >= max_depth or tot_w < 2.0 * min_leaf_weight:
        return node
    red, j, tau = _best_split(X, y, w, min_leaf_weight)
    if j < 0 or red <= 0.0:
        return node
    go_left = X[:, j] <= tau
    node.feature = j
    node.threshold = tau
    node.left = _grow(X[go_left], y[go_left], w[go_left],
                      depth + 1, max_depth, min_leaf_weight)
    node.right = _grow(X[~go_left], y[~go_left], w[~go_left],
                       depth + 1, max_depth, min_leaf_weight)
    return node


def fit_cart(phi: np.ndarray, y: np.ndarray, w: np.ndarray,
             max_depth: int = 6, min_leaf_weight: float = 1.0) -> TreeModel:
    """Weighted CART regression by greedy recursive binary splitting.

    Split criterion: maximize the weighted-SSE reduction over all features
    and midpoints of consecutive distinct sorted values.  Stops at
    ``max_depth``, when node weight drops below ``2 * min_leaf_weight``, or
    when no split reduces the SSE.  Zero-weight rows are dropped up front,
    so a fit with weights supported on a subset equals the unweighted fit on
    that subset.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_weights(y, w)
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    keep = w > 0
    return TreeModel(root=_grow(phi[keep], y[keep], w[keep], 0, max_depth,
                                min_leaf_weight),
                     max_depth=max_depth, min_leaf_weight=min_leaf_weight)


def predict(model, x: np.ndarray, a: int | None = None):
    """Evaluate a fitted model at one point.

    Linear outcome models take (x, a) and route through their feature map;
    tree models take the raw feature row (pass the already-mapped features).
    """
    if isinstance(model, LinearModel):
        if a is None:
            raise ValueError("linear outcome models need an arm")
        return float(model.predict_pairs(np.atleast_2d(x), np.array([a]))[0])
    if isinstance(model, TreeModel):
        return float(model.predict(np.atleast_2d(x))[0])
    raise TypeError(f"unsupported model type: {type(model).__name__}")


# ---------------------------------------------------------------------------
# Policies and policy classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantPolicy:
    arm: int

    def assign(self, X: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(X).shape[0], self.arm, dtype=np.int64)


@dataclass(frozen=True)
class StumpPolicy:
    """``x[feature] <= threshold`` plays ``left_arm``, else ``right_arm``."""

    feature: int
    threshold: float
    left_arm: int
    right_arm: int

    def assign(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.where(X[:, self.feature] <= self.threshold,
                        self.left_arm, self.right_arm).astype(np.int64)


@dataclass(frozen=True)
class TablePolicy:
    """Assigns each context the arm of its nearest anchor row.

    Nearest-anchor matching (ties: lowest index) avoids exact float
    comparisons when contexts come from a finite support.
    """

    anchors: tuple
    arms: tuple

    @classmethod
    def from_arrays(cls, anchors: np.ndarray, arms) -> "TablePolicy":
        anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
        return cls(anchors=tuple(map(tuple, anchors.tolist())),
                   arms=tuple(int(a) for a in arms))

    def assign(self, X: np.ndarray) -> np.ndarray:
        anchors = np.asarray(self.anchors)
        arms = np.asarray(self.arms, dtype=np.int64)
        X = np.atleast_2d(X)
        d2 = ((X[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2)
        return arms[np.argmin(d2, axis=1)]


@dataclass(frozen=True)
class TreePolicy:
    """Axis-threshold decision tree with arm-valued leaves.

    ``node`` is either an int (leaf arm) or a tuple
    ``(feature, threshold, left_node, right_node)``.
    """

    node: object

    def assign(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)

        def walk(node, rows):
            if isinstance(node, int):
                out[rows] = node
                return
            j, tau, left, right = node
            go_left = X[rows, j] <= tau
            walk(left, rows[go_left])
            walk(right, rows[~go_left])

        out = np.empty(X.shape[0], dtype=np.int64)
        walk(self.node, np.arange(X.shape[0]))
        return out


@dataclass(frozen=True)
class FinitePolicyClass:
    """Explicit list of deterministic policies."""

    members: tuple

    def __post_init__(self) -> None:
        if len(self.members) == 0:
            raise ValueError("policy class is empty")

    def __len__(self) -> int:
        return len(self.members)

    @classmethod
    def all_assignments(cls, anchors: np.ndarray, K: int,
                        fixed: dict[int, int] | None = None):
        """Every arm assignment over anchor rows, optionally pinning some.

        ``fixed`` maps anchor index -> arm for rows excluded from the
        product (useful to keep class size at K^(S - len(fixed))).
        """
        anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
        S = anchors.shape[0]
        fixed = fixed or {}
        free = [i for i in range(S) if i not in fixed]
        members = []
        for code in range(K ** len(free)):
            arms = [0] * S
            for i, a in fixed.items():
                arms[i] = a
            rem = code
            for i in free:
                arms[i] = rem % K
                rem //= K
            members.append(TablePolicy.from_arrays(anchors, arms))
        return cls(members=tuple(members))


class TreePolicyClass:
    """All depth-limited axis trees on a quantile threshold grid.

    Depth 0 enumerates the constant policies; depth 1 adds every stump on
    the grid; deeper levels nest recursively.  The class is materialized at
    construction so ERM can scan it exhaustively; a size guard protects
    against accidental explosions.
    """

    def __init__(self, thresholds: list[np.ndarray], K: int, depth: int = 1,
                 max_members: int = 500_000):
        if depth < 0:
            raise ValueError("depth must be >= 0")
        self.K = K
        self.depth = depth
        self.thresholds = [np.asarray(t, dtype=np.float64) for t in thresholds]

        def count(dep):
            if dep == 0:
                return K
            c = count(dep - 1)
            n_splits = sum(len(t) for t in self.thresholds)
            return K + n_splits * c * c

        if count(depth) > max_members:
            raise ValueError(
                f"tree policy class would have {count(depth)} members "
                f"(> {max_members}); reduce depth or the threshold grid")

        def enum(dep):
            nodes: list = list(range(K))
            if dep == 0:
                return nodes
            subs = enum(dep - 1)
            for j, taus in enumerate(self.thresholds):
                for tau in taus:
                    for left in subs:
                        for right in subs:
                            nodes.append((j, float(tau), left, right))
            return nodes

        self.members = tuple(
            TreePolicy(node=n) if not isinstance(n, int) else ConstantPolicy(n)
            for n in enum(depth)
        )

    def __len__(self) -> int:
        return len(self.members)

    @classmethod
    def from_data(cls, X: np.ndarray, K: int, depth: int = 1,
                  n_quantiles: int = 16, max_members: int = 500_000):
        """Threshold grid = interior quantiles of each feature's data."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        qs = np.linspace(0.0, 1.0, n_quantiles + 2)[1:-1]
        thresholds = [np.unique(np.quantile(X[:, j], qs))
                      for j in range(X.shape[1])]
        return cls(thresholds, K, depth=depth, max_members=max_members)


# ---------------------------------------------------------------------------
# JSON-friendly model / policy serialization
# ---------------------------------------------------------------------------


def _tree_node_to_dict(node: TreeNode) -> dict:
    out = {"value": node.value, "weight": node.weight}
    if not node.is_leaf:
        out.update(feature=node.feature, threshold=node.threshold,
                   left=_tree_node_to_dict(node.left),
                   right=_tree_node_to_dict(node.right))
    return out


def _tree_node_from_dict(d: dict) -> TreeNode:
    node = TreeNode(value=float(d["value"]), weight=float(d["weight"]))
    if "feature" in d:
        node.feature = int(d["feature"])
        node.threshold = float(d["threshold"])
        node.left = _tree_node_from_dict(d["left"])
        node.right = _tree_node_from_dict(d["right"])
    return node


def model_to_dict(model) -> dict:
    """Serialize a fitted outcome model or policy to plain JSON types."""
    if isinstance(model, LinearModel):
        fm = model.feature_map
        return {"kind": "linear", "mode": fm.mode, "d": fm.d, "K": fm.K,
                "coef": model.coef.tolist()}
    if isinstance(model, TreeOutcomeModel):
        fm = model.feature_map
        return {"kind": "cart", "mode": fm.mode, "d": fm.d, "K": fm.K,
                "max_depth": model.tree.max_depth,
                "min_leaf_weight": model.tree.min_leaf_weight,
                "root": _tree_node_to_dict(model.tree.root)}
    if isinstance(model, ConstantPolicy):
        return {"kind": "constant_policy", "arm": model.arm}
    if isinstance(model, StumpPolicy):
        return {"kind": "stump_policy", "feature": model.feature,
                "threshold": model.threshold, "left_arm": model.left_arm,
                "right_arm": model.right_arm}
    if isinstance(model, TablePolicy):
        return {"kind": "table_policy", "anchors": [list(a) for a in model.anchors],
                "arms": list(model.arms)}
    if isinstance(model, TreePolicy):
        def enc(node):
            if isinstance(node, int):
                return node
            j, tau, left, right = node
            return {"feature": j, "threshold": tau,
                    "left": enc(left), "right": enc(right)}
        return {"kind": "tree_policy", "node": enc(model.node)}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    """Inverse of :func:`model_to_dict`."""
    kind = d["kind"]
    if kind == "linear":
        fmap = FeatureMap(d["mode"], int(d["d"]), int(d["K"]))
        return LinearModel(coef=np.asarray(d["coef"], dtype=np.float64),
                           feature_map=fmap)
    if kind == "cart":
        fmap = FeatureMap(d["mode"], int(d["d"]), int(d["K"]))
        tree = TreeModel(root=_tree_node_from_dict(d["root"]),
                         max_depth=int(d["max_depth"]),
                         min_leaf_weight=float(d["min_leaf_weight"]))
        return TreeOutcomeModel(tree=tree, feature_map=fmap)
    if kind == "constant_policy":
        return ConstantPolicy(arm=int(d["arm"]))
    if kind == "stump_policy":
        return StumpPolicy(feature=int(d["feature"]),
                           threshold=float(d["threshold"]),
                           left_arm=int(d["left_arm"]),
                           right_arm=int(d["right_arm"]))
    if kind == "table_policy":
        return TablePolicy.from_arrays(np.asarray(d["anchors"]), d["arms"])
    if kind == "tree_policy":
        def dec(node):
            if isinstance(node, int):
                return node
            return (int(node["feature"]), float(node["threshold"]),
                    dec(node["left"]), dec(node["right"]))
        return TreePolicy(node=dec(d["node"]))
    raise ValueError(f"unknown serialized model kind: {kind!r}")


@dataclass(frozen=True)
class PolicyFit:
    policy: object
    index: int
    risk: float
    risks: tuple[float, ...] = field(repr=False, default=())


def fit_policy_iswerm(ds: LoggedDataset, w: np.ndarray,
                      policy_class) -> PolicyFit:
    """Exhaustive weighted ERM over a finite policy class.

    The empirical risk of a policy h is ``(1/T) sum_t w_t y_t 1{h(x_t) =
    a_t}`` (cost convention: y is a loss, so matching a high-cost logged
    action is penalized).  Returns the argmin; ties go to the first member
    in enumeration order.
    """
    members = policy_class.members
    if len(members) == 0:
        raise ValueError("policy class is empty")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (ds.T,):
        raise ValueError("weights must have one entry per record")
    wy = w * ds.Y
    risks = []
    best, best_risk = 0, np.inf
    for i, h in enumerate(members):
        risk = float(np.sum(wy * (h.assign(ds.X) == ds.A)) / ds.T)
        risks.append(risk)
        if risk < best_risk:
            best, best_risk = i, risk
    return PolicyFit(policy=members[best], index=best, risk=best_risk,
                     risks=tuple(risks))
