# Model selection over a nested class sequence via a one-sided generalization
# test on shared regression targets: train/validation split, per-(k, k', h)
# retraining, tolerance schedule (theoretical constants or the practical
# complexity/n rule), and full trace recording.
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basealg import DELTA_MAX, BaseAlgorithm, QSequence, fitted_q_discounted
from .dataset import OfflineDataset, StepData, split_dataset
from .funcclass import FunctionClass, NestedSequence, QFunction, greedy_policy
from .mdp import Policy

ZETA_CONSTANT = 96.0
ALPHA_CONSTANT = 200.0


class SelectionError(ValueError):
    pass


def zeta(horizon: int, num_classes: int, delta: float, n_valid: int) -> float:
    """Validation-side concentration width: 96 H^2 ln(16 M^2 H / delta) / n_valid."""
    if not 0.0 < delta <= DELTA_MAX:
        raise SelectionError(f"delta must lie in (0, 1/e], got {delta}")
    if n_valid < 1:
        raise SelectionError("n_valid must be at least 1")
    return ZETA_CONSTANT * horizon ** 2 * \
        math.log(16.0 * num_classes ** 2 * horizon / delta) / n_valid


@dataclass(frozen=True)
class ToleranceSchedule:
    """Tol(k, k') accessor in either theoretical or practical mode.

    theoretical: Tol = 2 alpha(k') + 2 zeta + omega_{n_train, delta/4M}(F_k)
    with alpha(k') = max(omega_{n_train, delta/4M}(F_k'),
                         200 H^2 ln(8 M^2 H |F_k'| / delta) / n_train).
    practical:   Tol = complexity(F_k') / n.
    """

    mode: str
    classes: NestedSequence
    horizon: int
    delta: float
    n_train: int
    n_valid: int
    n_total: int
    omega: Callable[[int, float, FunctionClass], float] | None = None
    zeta_value: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.mode not in ("theoretical", "practical"):
            raise SelectionError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "theoretical":
            if self.omega is None:
                raise SelectionError("theoretical schedule requires the base algorithm's omega")
            z = zeta(self.horizon, len(self.classes), self.delta, self.n_valid)
            object.__setattr__(self, "zeta_value", z)

    def _omega_at(self, k: int) -> float:
        return self.omega(self.n_train, self.delta / (4 * len(self.classes)), self.classes[k])

    def alpha(self, k_prime: int) -> float:
        m = len(self.classes)
        explicit = ALPHA_CONSTANT * self.horizon ** 2 * (
            self.classes[k_prime].complexity
            + math.log(8.0 * m ** 2 * self.horizon / self.delta)) / self.n_train
        return max(self._omega_at(k_prime), explicit)

    def tol(self, k: int, k_prime: int) -> float:
        if self.mode == "practical":
            return self.classes[k_prime].complexity / self.n_total
        return 2.0 * self.alpha(k_prime) + 2.0 * self.zeta_value + self._omega_at(k)


def regress_to_targets(fclass: FunctionClass, step: StepData,
                       next_values: np.ndarray) -> QFunction:
    """ERM over fclass of ((x, a) -> r + f_{h+1}(x')) on one training slot."""
    return fclass.erm(step.x, step.a, step.r + next_values)


def validation_loss(f: QFunction, step: StepData, next_values: np.ndarray) -> float:
    """Mean squared residual of f against r + f_{h+1}(x') on a validation slot."""
    if len(step) == 0:
        raise SelectionError("empty validation slot")
    return float(np.mean((f.values(step.x, step.a) - step.r - next_values) ** 2))


def generalization_test(loss_g: float, loss_f: float, tol: float) -> bool:
    """True (reject the current class) iff loss_g < loss_f - tol, strictly."""
    return loss_g < loss_f - tol


@dataclass(frozen=True)
class TraceEvent:
    k: int
    k_prime: int
    h: int
    loss_g: float
    loss_f: float
    tol: float
    reject: bool

    def to_line(self) -> str:
        outcome = "reject" if self.reject else "keep"
        return (f"event {self.k} {self.k_prime} {self.h} "
                f"{self.loss_g!r} {self.loss_f!r} {self.tol!r} {outcome}")


@dataclass
class SelectionTrace:
    """Full audit record of one selection run."""

    k_hat: int
    qseq: QSequence
    policy: Policy | None
    events: list
    base_calls: int
    erm_calls: int
    seed: int
    mode: str

    def to_text(self) -> str:
        lines = [e.to_line() for e in self.events]
        lines += [
            f"selected_k {self.k_hat}",
            f"base_calls {self.base_calls}",
            f"erm_calls {self.erm_calls}",
            f"seed {self.seed}",
            f"schedule {self.mode}",
        ]
        return "\n".join(lines) + "\n"


def _tabular_shape(classes: NestedSequence) -> tuple[int, int] | None:
    c = classes[len(classes)]
    if c.variant == "finite":
        return c.tables[0].shape
    if c.variant == "abstraction":
        return len(c.blocks), c.num_actions
    return None


def modbe(dataset: OfflineDataset, base: BaseAlgorithm, classes: NestedSequence,
          delta: float, schedule: str = "theoretical", seed: int = 0) -> SelectionTrace:
    """Select a class index and policy from nested classes on offline data.

    Starting from k = 1, runs the base algorithm on the training split, then
    retrains every larger class k' on the same per-step regression targets and
    rejects k (incrementing by one) as soon as some (k', h) beats the base
    functions' validation loss by more than Tol(k, k'). All H comparisons for
    a (k, k') pair are recorded even after the first failure.
    """
    if not 0.0 < delta <= DELTA_MAX:
        raise SelectionError(f"delta must lie in (0, 1/e], got {delta}")
    M = len(classes)
    H = dataset.horizon
    split = split_dataset(dataset, seed)
    sched = ToleranceSchedule(schedule, classes, H, delta,
                              split.train.n, split.valid.n, dataset.n, base.omega)
    events: list[TraceEvent] = []
    base_calls = 0
    erm_calls = 0
    k = 1
    fseq: QSequence | None = None
    fitted_k = 0
    while k < M:
        fseq = base.fit(split.train.steps, classes[k])
        base_calls += 1
        fitted_k = k
        rejected = False
        for k_prime in range(k + 1, M + 1):
            tol = sched.tol(k, k_prime)
            any_fail = False
            for h in range(1, H + 1):
                train_step = split.train.steps[h - 1]
                valid_step = split.valid.steps[h - 1]
                g_h = regress_to_targets(classes[k_prime], train_step,
                                         fseq.next_state_values(h, train_step.x_next))
                erm_calls += 1
                next_valid = fseq.next_state_values(h, valid_step.x_next)
                loss_g = validation_loss(g_h, valid_step, next_valid)
                loss_f = validation_loss(fseq.func(h), valid_step, next_valid)
                rej = generalization_test(loss_g, loss_f, tol)
                events.append(TraceEvent(k, k_prime, h, loss_g, loss_f, tol, rej))
                any_fail = any_fail or rej
            if any_fail:
                k += 1
                rejected = True
                break
        if not rejected:
            break
    if fitted_k != k:
        # k reached M through a rejection (or M = 1): the returned policy must
        # come from a class that was actually trained on.
        fseq = base.fit(split.train.steps, classes[k])
        base_calls += 1
    shape = _tabular_shape(classes)
    policy = greedy_policy(fseq.funcs, *shape) if shape is not None else None
    return SelectionTrace(k, fseq, policy, events, base_calls, erm_calls, seed, schedule)


def modbe_discounted(data: StepData, classes: NestedSequence, gamma: float,
                     delta: float = 0.1, schedule: str = "practical", seed: int = 0,
                     iterations: int = 30,
                     base_fit: Callable[[StepData, FunctionClass], QFunction] | None = None,
                     ) -> SelectionTrace:
    """Discounted single-loss variant on a flat transition list.

    The comparator for class k is the same-class re-regression g^k (not the
    base algorithm's own output): reject k iff
    L(g^{k'}) < L(g^k) - Tol(k, k') on the validation split, where both sides
    regress onto the shared targets r + gamma * f^k(x').
    """
    if not 0.0 <= gamma < 1.0:
        raise SelectionError(f"gamma must lie in [0, 1), got {gamma}")
    if base_fit is None:
        base_fit = lambda step, fclass: fitted_q_discounted(step, fclass, gamma, iterations)
    M = len(classes)
    ds = OfflineDataset((data,), {"seed": seed, "generator": "flat"})
    split = split_dataset(ds, seed)
    train, valid = split.train.steps[0], split.valid.steps[0]
    cap = 1.0 / (1.0 - gamma)
    # single-loss schedule: the discounted variant has one regression problem,
    # so the theoretical constants are used with an effective horizon of 1
    omega = None
    if schedule == "theoretical":
        omega = lambda n, d, fclass: ALPHA_CONSTANT * (fclass.complexity
                                                       + math.log(16.0 / d)) / n
    sched = ToleranceSchedule(schedule, classes, 1, delta,
                              len(train), len(valid), len(data), omega)
    events: list[TraceEvent] = []
    base_calls = 0
    erm_calls = 0
    k = 1
    f_k: QFunction | None = None
    fitted_k = 0
    while k < M:
        f_k = base_fit(train, classes[k])
        base_calls += 1
        fitted_k = k
        if gamma == 0.0:
            train_targets = train.r
            valid_targets = valid.r
        else:
            train_targets = train.r + gamma * np.clip(f_k.max_values(train.x_next), 0.0, cap)
            valid_targets = valid.r + gamma * np.clip(f_k.max_values(valid.x_next), 0.0, cap)
        g_k = classes[k].erm(train.x, train.a, train_targets)
        erm_calls += 1
        loss_gk = float(np.mean((g_k.values(valid.x, valid.a) - valid_targets) ** 2))
        rejected = False
        for k_prime in range(k + 1, M + 1):
            g_kp = classes[k_prime].erm(train.x, train.a, train_targets)
            erm_calls += 1
            loss_gkp = float(np.mean((g_kp.values(valid.x, valid.a) - valid_targets) ** 2))
            tol = sched.tol(k, k_prime)
            rej = generalization_test(loss_gkp, loss_gk, tol)
            events.append(TraceEvent(k, k_prime, 1, loss_gkp, loss_gk, tol, rej))
            if rej:
                k += 1
                rejected = True
                break
        if not rejected:
            break
    if fitted_k != k:
        f_k = base_fit(train, classes[k])
        base_calls += 1
    qseq = QSequence((f_k,), k, "fitted_q_discounted")
    shape = _tabular_shape(classes)
    policy = greedy_policy(qseq.funcs, *shape) if shape is not None else None
    return SelectionTrace(k, qseq, policy, events, base_calls, erm_calls, seed, schedule)
