# Nested function classes over state-action pairs: pointwise evaluation,
# squared-loss ERM, and complexity measures. Three variants: an explicit
# finite list of tables, a state-abstraction (block) class, and a linear
# class over a feature map with ridge-regularized least squares.
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mdp import Policy

ABSTRACTION_QUANTUM = 1.0 / 16.0   # declared value grid for complexity accounting
DEFAULT_RIDGE_SCALE = 1e-6         # lambda = scale * n


class FunctionClassError(ValueError):
    pass


def _clip(values: np.ndarray, clip_high: float | None) -> np.ndarray:
    if clip_high is None:
        return values
    return np.clip(values, 0.0, clip_high)


class QFunction:
    """An evaluable (state, action) -> value map.

    Evaluation is deterministic. In clipped mode (the default for RL use)
    outputs are restricted to [0, clip_high].
    """

    class_index: int = 0

    def raw_values(self, xs, as_) -> np.ndarray:
        raise NotImplementedError

    def values(self, xs, as_) -> np.ndarray:
        return _clip(self.raw_values(xs, as_), self.clip_high)

    def max_values(self, xs) -> np.ndarray:
        """f(x) = max_a f(x, a), in clipped mode."""
        raise NotImplementedError


@dataclass(frozen=True)
class TableQ(QFunction):
    table: np.ndarray                 # (S, A)
    clip_high: float | None = None
    class_index: int = 0

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def raw_values(self, xs, as_):
        return self.table[np.asarray(xs, dtype=int), np.asarray(as_, dtype=int)]

    def max_values(self, xs):
        return _clip(self.table, self.clip_high).max(axis=1)[np.asarray(xs, dtype=int)]

    def as_table(self):
        return _clip(self.table, self.clip_high)


@dataclass(frozen=True)
class BlockQ(QFunction):
    block_values: np.ndarray          # (B, A)
    blocks: np.ndarray                # (S,) state -> block id
    clip_high: float | None = None
    class_index: int = 0

    def raw_values(self, xs, as_):
        return self.block_values[self.blocks[np.asarray(xs, dtype=int)], np.asarray(as_, dtype=int)]

    def max_values(self, xs):
        per_block = _clip(self.block_values, self.clip_high).max(axis=1)
        return per_block[self.blocks[np.asarray(xs, dtype=int)]]

    def as_table(self):
        return _clip(self.block_values[self.blocks], self.clip_high)


@dataclass(frozen=True)
class LinearQ(QFunction):
    weights: np.ndarray               # (d,)
    feature_fn: Callable = None       # (xs, as_) -> (n, D) ambient features
    dim: int = 0                      # coordinate prefix actually used
    num_actions: int = 0
    clip_high: float | None = None
    class_index: int = 0

    def raw_values(self, xs, as_):
        phi = self.feature_fn(xs, as_)[:, : self.dim]
        return phi @ self.weights

    def max_values(self, xs):
        xs = np.asarray(xs)
        cols = [self.values(xs, np.full(len(xs), a, dtype=int)) for a in range(self.num_actions)]
        return np.max(np.column_stack(cols), axis=1)


class FunctionClass:
    """One member of a nested sequence: evaluation domain, ERM, and complexity."""

    variant: str
    complexity: float
    clip_high: float | None

    def zero(self) -> QFunction:
        raise NotImplementedError

    def erm(self, xs, as_, ys) -> QFunction:
        """Member minimizing the empirical squared loss; ties break to the
        lowest member index."""
        raise NotImplementedError

    def population_erm(self, weights: np.ndarray, target: np.ndarray) -> QFunction:
        """Minimizer of the weights-weighted squared distance to an (S, A) target."""
        raise NotImplementedError

    def _check_samples(self, xs, ys):
        if len(xs) == 0:
            raise FunctionClassError("ERM requires a nonempty sample list")
        if len(xs) != len(ys):
            raise FunctionClassError("sample/target length mismatch")


@dataclass(frozen=True)
class FiniteClass(FunctionClass):
    tables: tuple                     # member (S, A) tables, index order fixed
    clip_high: float | None = None
    class_index: int = 0
    variant: str = field(default="finite", init=False)

    def __post_init__(self):
        tabs = tuple(np.asarray(t, dtype=float) for t in self.tables)
        if not tabs:
            raise FunctionClassError("finite class must be nonempty")
        shape = tabs[0].shape
        if any(t.shape != shape for t in tabs):
            raise FunctionClassError("all member tables must share one shape")
        if not any(np.all(t == 0.0) for t in tabs):
            raise FunctionClassError("finite class must contain the zero function")
        for t in tabs:
            t.setflags(write=False)
        object.__setattr__(self, "tables", tabs)

    @property
    def complexity(self) -> float:
        return math.log(len(self.tables))

    def zero(self):
        for t in self.tables:
            if np.all(t == 0.0):
                return TableQ(t, self.clip_high, self.class_index)
        raise AssertionError("validated at construction")

    def erm(self, xs, as_, ys):
        self._check_samples(xs, ys)
        xs = np.asarray(xs, dtype=int)
        as_ = np.asarray(as_, dtype=int)
        ys = np.asarray(ys, dtype=float)
        losses = [float(np.mean((t[xs, as_] - ys) ** 2)) for t in self.tables]
        best = int(np.argmin(losses))
        return TableQ(self.tables[best], self.clip_high, self.class_index)

    def population_erm(self, weights, target):
        losses = [float((weights * (t - target) ** 2).sum()) for t in self.tables]
        best = int(np.argmin(losses))
        return TableQ(self.tables[best], self.clip_high, self.class_index)


@dataclass(frozen=True)
class AbstractionClass(FunctionClass):
    """All tables constant on blocks of a state partition.

    ERM is the exact per-(block, action) mean of the targets, clipped to
    [0, clip_high]. For complexity accounting the class is bridged to a
    finite class of tables quantized to ABSTRACTION_QUANTUM.
    """

    blocks: np.ndarray                # (S,) state -> block id in [0, B)
    num_actions: int = 1
    clip_high: float | None = None
    class_index: int = 0
    variant: str = field(default="abstraction", init=False)

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=int)
        if b.min() != 0 or b.max() + 1 != len(np.unique(b)):
            raise FunctionClassError("block ids must be contiguous from 0")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def num_blocks(self) -> int:
        return int(self.blocks.max()) + 1

    @property
    def complexity(self) -> float:
        return self.num_blocks * self.num_actions * math.log(1.0 / ABSTRACTION_QUANTUM)

    def zero(self):
        return BlockQ(np.zeros((self.num_blocks, self.num_actions)), self.blocks,
                      self.clip_high, self.class_index)

    def erm(self, xs, as_, ys):
        self._check_samples(xs, ys)
        xs = np.asarray(xs, dtype=int)
        as_ = np.asarray(as_, dtype=int)
        ys = np.asarray(ys, dtype=float)
        B, A = self.num_blocks, self.num_actions
        cell = self.blocks[xs] * A + as_
        sums = np.bincount(cell, weights=ys, minlength=B * A)
        counts = np.bincount(cell, minlength=B * A)
        means = np.divide(sums, counts, out=np.zeros(B * A), where=counts > 0)
        vals = _clip(means.reshape(B, A), self.clip_high)
        return BlockQ(vals, self.blocks, self.clip_high, self.class_index)

    def population_erm(self, weights, target):
        B, A = self.num_blocks, self.num_actions
        w = np.zeros((B, A))
        s = np.zeros((B, A))
        np.add.at(w, self.blocks, weights)
        np.add.at(s, self.blocks, weights * target)
        vals = np.divide(s, w, out=np.zeros((B, A)), where=w > 0)
        return BlockQ(_clip(vals, self.clip_high), self.blocks, self.clip_high, self.class_index)


@dataclass(frozen=True)
class LinearClass(FunctionClass):
    """Linear predictors over the first `dim` coordinates of a feature map.

    ERM is ridge regression with lambda = ridge_scale * n; clipping (when
    clip_high is set) applies at evaluation time only, never inside the
    normal equations.
    """

    feature_fn: Callable              # (xs, as_) -> (n, D) with D >= dim
    dim: int = 1
    num_actions: int = 1
    ridge_scale: float = DEFAULT_RIDGE_SCALE
    clip_high: float | None = None
    class_index: int = 0
    variant: str = field(default="linear", init=False)

    @property
    def complexity(self) -> float:
        return float(self.dim)

    def zero(self):
        return LinearQ(np.zeros(self.dim), self.feature_fn, self.dim,
                       self.num_actions, self.clip_high, self.class_index)

    def erm(self, xs, as_, ys):
        self._check_samples(xs, ys)
        ys = np.asarray(ys, dtype=float)
        phi = self.feature_fn(xs, as_)[:, : self.dim]
        lam = self.ridge_scale * len(ys)
        gram = phi.T @ phi + lam * np.eye(self.dim)
        w = np.linalg.solve(gram, phi.T @ ys)
        return LinearQ(w, self.feature_fn, self.dim, self.num_actions,
                       self.clip_high, self.class_index)

    def population_erm(self, weights, target):
        S, A = weights.shape
        xs, as_ = np.divmod(np.arange(S * A), A)
        phi = self.feature_fn(xs, as_)[:, : self.dim]
        w_flat = weights.reshape(-1)
        gram = phi.T @ (w_flat[:, None] * phi) + self.ridge_scale * np.eye(self.dim)
        w = np.linalg.solve(gram, phi.T @ (w_flat * target.reshape(-1)))
        return LinearQ(w, self.feature_fn, self.dim, self.num_actions,
                       self.clip_high, self.class_index)


def empirical_sq_loss(f: QFunction, xs, as_, ys) -> float:
    """Mean squared residual of f against targets, f evaluated in clipped mode."""
    if len(xs) == 0:
        raise FunctionClassError("empirical loss requires a nonempty sample list")
    ys = np.asarray(ys, dtype=float)
    return float(np.mean((f.values(xs, as_) - ys) ** 2))


def greedy_policy(q_funcs: Sequence[QFunction], num_states: int, num_actions: int) -> Policy:
    """Deterministic argmax policy from per-step Q-functions; ties -> lowest action."""
    H = len(q_funcs)
    tables = np.zeros((H, num_states, num_actions))
    xs_grid, as_grid = np.divmod(np.arange(num_states * num_actions), num_actions)
    for h, f in enumerate(q_funcs):
        tables[h] = f.values(xs_grid, as_grid).reshape(num_states, num_actions)
    return Policy.deterministic(tables.argmax(axis=2), num_actions)


@dataclass(frozen=True)
class NestedSequence:
    """Ordered classes F_1 subset ... subset F_M with non-decreasing complexity."""

    classes: tuple

    def __post_init__(self):
        cls = tuple(self.classes)
        if not cls:
            raise FunctionClassError("nested sequence must be nonempty")
        variants = {c.variant for c in cls}
        if len(variants) > 1:
            raise FunctionClassError("nested sequence must use a single class variant")
        comp = [c.complexity for c in cls]
        if any(b < a for a, b in zip(comp, comp[1:])):
            raise FunctionClassError("complexity must be non-decreasing along the sequence")
        for small, large in zip(cls, cls[1:]):
            _check_nested_pair(small, large)
        for i, c in enumerate(cls):
            object.__setattr__(c, "class_index", i + 1)
        object.__setattr__(self, "classes", cls)

    def __len__(self):
        return len(self.classes)

    def __getitem__(self, k: int) -> FunctionClass:
        """1-based class access, matching the selection loop's indexing."""
        if not 1 <= k <= len(self.classes):
            raise IndexError(f"class index {k} outside [1, {len(self.classes)}]")
        return self.classes[k - 1]


def _check_nested_pair(small: FunctionClass, large: FunctionClass) -> None:
    if small.variant == "finite":
        for t in small.tables:
            if not any(t.shape == u.shape and np.array_equal(t, u) for u in large.tables):
                raise FunctionClassError("finite classes are not nested (missing member)")
    elif small.variant == "abstraction":
        # the larger class's partition must refine the smaller's
        for blk in range(large.num_blocks):
            coarse = np.unique(small.blocks[large.blocks == blk])
            if len(coarse) > 1:
                raise FunctionClassError("abstraction partitions do not refine in order")
    elif small.variant == "linear":
        if small.feature_fn is not large.feature_fn:
            raise FunctionClassError("linear classes must share one feature map")
        if small.dim > large.dim:
            raise FunctionClassError("linear feature prefixes must be non-decreasing")


# ---------------------------------------------------------------------------
# Plain-text description of a nested sequence. Schema (one class per stanza):
#   classes M
#   class finite S A members m      followed by m lines of S*A table values
#   class abstraction S A blocks B  followed by one line of S block ids
#   class linear dim d              (feature map bound programmatically)
# '#' lines are comments. clip_high is supplied by the loader.


def save_sequence(seq: NestedSequence, path: str) -> None:
    lines = [f"classes {len(seq)}"]
    for c in seq.classes:
        if c.variant == "finite":
            S, A = c.tables[0].shape
            lines.append(f"class finite {S} {A} members {len(c.tables)}")
            for t in c.tables:
                lines.append(" ".join(repr(float(v)) for v in t.reshape(-1)))
        elif c.variant == "abstraction":
            lines.append(f"class abstraction {len(c.blocks)} {c.num_actions} blocks {c.num_blocks}")
            lines.append(" ".join(str(int(b)) for b in c.blocks))
        else:
            lines.append(f"class linear dim {c.dim}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_sequence(path: str, clip_high: float | None = None,
                  feature_fn: Callable | None = None,
                  num_actions: int | None = None) -> NestedSequence:
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0].split()[0] != "classes":
        raise FunctionClassError(f"{path}:1: expected 'classes M' header")
    m = int(rows[0].split()[1])
    classes: list[FunctionClass] = []
    i = 1
    for _ in range(m):
        if i >= len(rows):
            raise FunctionClassError(f"{path}: truncated file, expected {m} classes")
        head = rows[i].split()
        if head[0] != "class":
            raise FunctionClassError(f"{path}: line {i + 1}: expected a 'class' stanza")
        if head[1] == "finite":
            S, A, nm = int(head[2]), int(head[3]), int(head[5])
            tabs = []
            for j in range(nm):
                vals = [float(t) for t in rows[i + 1 + j].split()]
                if len(vals) != S * A:
                    raise FunctionClassError(f"{path}: line {i + 2 + j}: expected {S * A} values")
                tabs.append(np.array(vals).reshape(S, A))
            classes.append(FiniteClass(tuple(tabs), clip_high))
            i += 1 + nm
        elif head[1] == "abstraction":
            S, A = int(head[2]), int(head[3])
            blocks = np.array([int(t) for t in rows[i + 1].split()])
            if len(blocks) != S:
                raise FunctionClassError(f"{path}: line {i + 2}: expected {S} block ids")
            classes.append(AbstractionClass(blocks, A, clip_high))
            i += 2
        elif head[1] == "linear":
            if feature_fn is None or num_actions is None:
                raise FunctionClassError(
                    f"{path}: linear classes need a feature map bound at load time")
            classes.append(LinearClass(feature_fn, int(head[3]), num_actions,
                                       clip_high=clip_high))
            i += 1
        else:
            raise FunctionClassError(f"{path}: line {i + 1}: unknown variant {head[1]!r}")
    return NestedSequence(tuple(classes))
