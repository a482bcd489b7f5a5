# Ground-truth diagnostics (completeness errors, concentrability, regret),
# hold-out and hindsight-oracle baselines, and the two benchmark experiment
# families: a stochastic-chain tabular study with nested state abstractions
# and a linear contextual-bandit study with truncated feature classes.
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basealg import BaseAlgorithm, QSequence, make_fqi
from .dataset import OfflineDataset, StepData, generate_from_mu, split_dataset
from .funcclass import (ABSTRACTION_QUANTUM, AbstractionClass, FiniteClass, FunctionClass,
                        LinearClass, NestedSequence, greedy_policy)
from .mdp import TabularMDP, bellman_backup, concentrability, regret
from .selection import modbe, modbe_discounted, validation_loss

ENUMERATION_CAP = 200_000   # largest member set enumerated for Approx / xi


class EvalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Completeness diagnostics


def _enumerate_members(fclass: FunctionClass, cap: int = ENUMERATION_CAP):
    """Member tables of an enumerable class, or None when not enumerable."""
    if fclass.variant == "finite":
        return list(fclass.tables)
    if fclass.variant == "abstraction":
        high = fclass.clip_high if fclass.clip_high is not None else 1.0
        grid = np.arange(0.0, high + ABSTRACTION_QUANTUM / 2, ABSTRACTION_QUANTUM)
        cells = fclass.num_blocks * fclass.num_actions
        if len(grid) ** cells > cap:
            return None
        members = []
        for combo in itertools.product(grid, repeat=cells):
            vals = np.array(combo).reshape(fclass.num_blocks, fclass.num_actions)
            members.append(vals[fclass.blocks])
        return members
    return None


def _projection_error(fclass: FunctionClass, target: np.ndarray, weights: np.ndarray) -> float:
    """min_{f in class} ||f - target||^2_weights, exactly."""
    if fclass.variant == "finite":
        return min(float((weights * (t - target) ** 2).sum()) for t in fclass.tables)
    if fclass.variant == "abstraction":
        proj = fclass.population_erm(weights, target)
        S, A = target.shape
        xs, as_ = np.divmod(np.arange(S * A), A)
        table = proj.values(xs, as_).reshape(S, A)
        return float((weights * (table - target) ** 2).sum())
    raise EvalError(f"projection not computable for variant {fclass.variant!r}")


def _completeness_error(inner: FunctionClass, outer: FunctionClass,
                        mdp: TabularMDP, mu: np.ndarray) -> float | None:
    """max over h and outer members f' of min over inner f of ||f - T*_h f'||^2_mu."""
    members = _enumerate_members(outer)
    if members is None or inner.variant == "linear":
        return None
    worst = 0.0
    for h in range(1, mdp.horizon + 1):
        for table in members:
            backup = bellman_backup(mdp, h, table)
            worst = max(worst, _projection_error(inner, backup, mu[h - 1]))
    return worst


def approx_error(fclass: FunctionClass, mdp: TabularMDP, mu: np.ndarray) -> float | None:
    """Completeness error Approx(F); None when the class is not enumerable."""
    return _completeness_error(fclass, fclass, mdp, mu)


def global_xi(classes: NestedSequence, k: int, mdp: TabularMDP,
              mu: np.ndarray) -> float | None:
    """Global completeness error xi_k: backups taken over F_M, projected onto F_k."""
    return _completeness_error(classes[k], classes[len(classes)], mdp, mu)


@dataclass
class DiagnosticReport:
    approx: list            # per-class Approx(F_k), None = not computable
    xi: list                # per-class xi_k, None = not computable
    k_star: int | None      # smallest complete class, when determinable
    conc: float             # C(mu), possibly +inf
    complexities: list

    def to_text(self) -> str:
        lines = [f"concentrability {self.conc!r}",
                 f"k_star {self.k_star if self.k_star is not None else 'unknown'}"]
        for i, (a, x, c) in enumerate(zip(self.approx, self.xi, self.complexities), start=1):
            a_s = "not-computable" if a is None else repr(a)
            x_s = "not-computable" if x is None else repr(x)
            lines.append(f"class {i} complexity {c!r} approx {a_s} xi {x_s}")
        return "\n".join(lines) + "\n"


def diagnose(classes: NestedSequence, mdp: TabularMDP, mu: np.ndarray,
             complete_atol: float = 1e-12) -> DiagnosticReport:
    approx = [approx_error(classes[k], mdp, mu) for k in range(1, len(classes) + 1)]
    xi = [global_xi(classes, k, mdp, mu) for k in range(1, len(classes) + 1)]
    k_star = None
    for i, a in enumerate(approx, start=1):
        if a is not None and a <= complete_atol:
            k_star = i
            break
    return DiagnosticReport(approx, xi, k_star, concentrability(mdp, mu),
                            [classes[k].complexity for k in range(1, len(classes) + 1)])


# ---------------------------------------------------------------------------
# Baseline selectors


def holdout_select(dataset: OfflineDataset, base: BaseAlgorithm,
                   classes: NestedSequence, seed: int = 0):
    """Pick the class whose base-algorithm output has the smallest summed
    per-step validation loss; ties break to the smallest k."""
    split = split_dataset(dataset, seed)
    H = dataset.horizon
    scores = []
    seqs = []
    for k in range(1, len(classes) + 1):
        fseq = base.fit(split.train.steps, classes[k])
        seqs.append(fseq)
        total = 0.0
        for h in range(1, H + 1):
            step = split.valid.steps[h - 1]
            total += validation_loss(fseq.func(h), step, fseq.next_state_values(h, step.x_next))
        scores.append(total)
    best = int(np.argmin(scores)) + 1
    return best, seqs[best - 1], scores


def oracle_select(dataset: OfflineDataset, base: BaseAlgorithm,
                  classes: NestedSequence, mdp: TabularMDP, seed: int = 0):
    """Hindsight-best baseline: the class whose learned greedy policy has the
    smallest true regret; needs the ground-truth MDP."""
    split = split_dataset(dataset, seed)
    S, A = mdp.num_states, mdp.num_actions
    regrets = []
    seqs = []
    for k in range(1, len(classes) + 1):
        fseq = base.fit(split.train.steps, classes[k])
        seqs.append(fseq)
        regrets.append(regret(mdp, greedy_policy(fseq.funcs, S, A)))
    best = int(np.argmin(regrets)) + 1
    return best, seqs[best - 1], regrets


# ---------------------------------------------------------------------------
# Benchmark instances


def chain_mdp(num_states: int = 4, horizon: int = 4, slip: float = 0.2) -> TabularMDP:
    """Stochastic chain: action 1 moves right (with slip), action 0 stays/falls
    back; only the last state pays full reward."""
    S, A = num_states, 2
    P = np.zeros((horizon, S, A, S))
    for x in range(S):
        left = max(x - 1, 0)
        right = min(x + 1, S - 1)
        P[:, x, 0, left] += 1.0 - slip
        P[:, x, 0, x] += slip
        P[:, x, 1, right] += 1.0 - slip
        P[:, x, 1, x] += slip
    r = np.zeros((S, A))
    r[S - 1, :] = 1.0
    r[0, 0] = 0.1          # distractor reward so coarse classes cost something
    rho = np.zeros(S)
    rho[0] = 1.0
    return TabularMDP(P, r, rho)


def chain_classes(num_states: int = 4, horizon: int = 4) -> NestedSequence:
    """Nested abstractions: single block, halves, then full tabular (complete)."""
    S = num_states
    coarse = np.zeros(S, dtype=int)
    mid = (np.arange(S) >= S // 2).astype(int)
    full = np.arange(S)
    return NestedSequence(tuple(
        AbstractionClass(b, 2, clip_high=float(horizon)) for b in (coarse, mid, full)))


def uniform_mu(mdp: TabularMDP) -> np.ndarray:
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    return np.full((H, S, A), 1.0 / (S * A))


def never_overshoot_instance():
    """MDP plus M = 3 nested finite classes where F_2 is complete but F_1 is not.

    Self-loop transitions and zero rewards make the optimal backup the
    per-state action max, which is idempotent, so closing a finite set under
    it stays finite.
    """
    S, A, H = 2, 2, 2
    P = np.zeros((H, S, A, S))
    for x in range(S):
        P[:, x, :, x] = 1.0
    mdp = TabularMDP(P, np.zeros((S, A)), np.full(S, 1.0 / S))

    def backup_of(t):           # T* f = max_a f(x, a), broadcast over actions
        return np.repeat(t.max(axis=1, keepdims=True), A, axis=1)

    zero = np.zeros((S, A))
    u = np.array([[0.0, 0.7], [0.3, 0.0]])
    w = np.array([[0.2, 0.5], [0.9, 0.1]])
    f1 = FiniteClass((zero, u), clip_high=float(H))
    f2 = FiniteClass((zero, u, backup_of(u)), clip_high=float(H))
    f3 = FiniteClass((zero, u, backup_of(u), w, backup_of(w)), clip_high=float(H))
    classes = NestedSequence((f1, f2, f3))
    return mdp, classes, uniform_mu(mdp)


def holdout_bias_instance():
    """Instance realizing the double-sampling bias of hold-out selection.

    A start state branches uniformly into a low-reward and a high-reward
    state, so the complete tabular class pays a large target-variance penalty
    on the validation Bellman proxy, while the constant class's true Bellman
    error is small because most of the data distribution sits on states a
    constant fits exactly. Hold-out therefore prefers the constant class (the
    one with the higher true Bellman error).
    """
    S, A, H = 5, 1, 2
    START, LOW, HIGH, PAD0, PAD1 = range(S)
    P = np.zeros((H, S, A, S))
    P[:, START, 0, LOW] = 0.5
    P[:, START, 0, HIGH] = 0.5
    for x in (LOW, HIGH, PAD0, PAD1):
        P[:, x, 0, x] = 1.0
    r = np.zeros((S, A))
    r[START, 0] = 0.5
    r[LOW, 0] = 0.0
    r[HIGH, 0] = 1.0
    r[PAD0, 0] = 0.5
    r[PAD1, 0] = 0.5
    rho = np.zeros(S)
    rho[START] = 1.0
    mdp = TabularMDP(P, r, rho)

    mu = np.zeros((H, S, A))
    mu[0, START, 0] = 1.0
    mu[1, LOW, 0] = 0.05
    mu[1, HIGH, 0] = 0.05
    mu[1, PAD0, 0] = 0.45
    mu[1, PAD1, 0] = 0.45

    constant = AbstractionClass(np.zeros(S, dtype=int), A, clip_high=float(H))
    tabular = AbstractionClass(np.arange(S), A, clip_high=float(H))
    return mdp, NestedSequence((constant, tabular)), mu


# ---------------------------------------------------------------------------
# Contextual-bandit instance (linear, truncated-feature nested classes)


CB_DIMS = (15, 20, 25, 28, 29, 30, 50, 75, 100, 200)


@dataclass(frozen=True)
class CBInstance:
    """Linear contextual bandit: per-round, per-action Gaussian features of
    ambient dimension 200 whose reward weight vector is supported on the
    first 30 coordinates."""

    ambient_dim: int = 200
    active_dim: int = 30
    num_actions: int = 10
    class_dims: tuple = CB_DIMS
    noise_std: float = 0.5
    instance_seed: int = 7
    theta: np.ndarray = field(init=False)
    scales: np.ndarray = field(init=False)

    def __post_init__(self):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence((self.instance_seed, 99))))
        # equal magnitude on every active coordinate so each truncation short
        # of the active dimension carries a detectable loss gap
        theta = np.zeros(self.ambient_dim)
        signs = np.where(np.arange(self.active_dim) % 2 == 0, 1.0, -1.0)
        theta[: self.active_dim] = signs / math.sqrt(self.active_dim)
        # per-(action, coordinate) feature scales; distinct covariances per action
        scales = 0.5 + rng.random((self.num_actions, self.ambient_dim))
        theta.setflags(write=False)
        scales.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "scales", scales)

    def sample_features(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, num_actions, ambient_dim) independent Gaussian features."""
        z = rng.standard_normal((n, self.num_actions, self.ambient_dim))
        return z * self.scales[None, :, :]

    def mean_rewards(self, features: np.ndarray) -> np.ndarray:
        return features @ self.theta

    def classes(self, features: np.ndarray) -> NestedSequence:
        """Nested linear classes over row/action indices into a feature tensor."""
        def feature_fn(xs, as_):
            return features[np.asarray(xs, dtype=int), np.asarray(as_, dtype=int)]
        return NestedSequence(tuple(
            LinearClass(feature_fn, d, self.num_actions) for d in self.class_dims))


# ---------------------------------------------------------------------------
# Experiment configuration and runners


@dataclass
class ExperimentConfig:
    instance: str
    n_list: list
    seeds: list
    methods: list
    schedule: str = "practical"
    gamma: float = 0.0
    delta: float = 0.1
    output: str = "results.csv"

    def __post_init__(self):
        if any(n < 5 for n in self.n_list):
            raise EvalError("all n values must be at least 5")
        if len(set(self.seeds)) != len(self.seeds):
            raise EvalError("seeds must be distinct")


def parse_config(path: str) -> ExperimentConfig:
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise EvalError(f"{path}:{lineno}: expected 'key = value'")
            k, v = (t.strip() for t in line.split("=", 1))
            values[k] = v
    try:
        return ExperimentConfig(
            instance=values["instance"],
            n_list=[int(t) for t in values["n_list"].split(",")],
            seeds=[int(t) for t in values["seeds"].split(",")],
            methods=[t.strip() for t in values["methods"].split(",")],
            schedule=values.get("schedule", "practical"),
            gamma=float(values.get("gamma", "0")),
            delta=float(values.get("delta", "0.1")),
            output=values.get("output", "results.csv"),
        )
    except KeyError as exc:
        raise EvalError(f"{path}: missing config key {exc}") from exc


def _expand_methods(methods: Sequence[str], num_classes: int) -> list[str]:
    out = []
    for m in methods:
        if m == "fixed":
            out.extend(f"fixed-{k}" for k in range(1, num_classes + 1))
        else:
            out.append(m)
    return out


def run_rl_cell(n: int, seed: int, methods: Sequence[str], schedule: str,
                delta: float) -> list[tuple]:
    """All requested methods on one (n, seed) cell of the chain benchmark."""
    mdp = chain_mdp()
    classes = chain_classes()
    mu = uniform_mu(mdp)
    base = make_fqi(mdp.horizon)
    S, A = mdp.num_states, mdp.num_actions
    dataset = generate_from_mu(mdp, mu, n, seed)
    split = split_dataset(dataset, seed)
    rows = []
    fixed_seqs: dict[int, QSequence] = {}

    def fixed_seq(k):
        if k not in fixed_seqs:
            fixed_seqs[k] = base.fit(split.train.steps, classes[k])
        return fixed_seqs[k]

    for method in _expand_methods(methods, len(classes)):
        t0 = time.perf_counter()
        if method == "modbe":
            trace = modbe(dataset, base, classes, delta, schedule, seed)
            k, pol = trace.k_hat, trace.policy
        elif method == "holdout":
            k, fseq, _ = holdout_select(dataset, base, classes, seed)
            pol = greedy_policy(fseq.funcs, S, A)
        elif method == "oracle":
            k, fseq, _ = oracle_select(dataset, base, classes, mdp, seed)
            pol = greedy_policy(fseq.funcs, S, A)
        elif method.startswith("fixed-"):
            k = int(method.split("-")[1])
            pol = greedy_policy(fixed_seq(k).funcs, S, A)
        else:
            raise EvalError(f"unknown method {method!r}")
        ms = (time.perf_counter() - t0) * 1000.0
        rows.append((n, seed, method, k, regret(mdp, pol), ms))
    return rows


CB_EVAL_CONTEXTS = 10_000


def run_cb_cell(n: int, seed: int, methods: Sequence[str], instance: CBInstance,
                delta: float = 0.1) -> list[tuple]:
    """All requested methods on one (n, seed) cell of the contextual bandit."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0, n))))
    feats = instance.sample_features(n, rng)
    means = instance.mean_rewards(feats)
    actions = rng.integers(0, instance.num_actions, size=n)
    rewards = means[np.arange(n), actions] + instance.noise_std * rng.standard_normal(n)
    data = StepData(np.arange(n), actions, rewards, np.zeros(n, dtype=int))
    classes = instance.classes(feats)

    eval_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 1))))
    eval_feats = instance.sample_features(CB_EVAL_CONTEXTS, eval_rng)
    eval_means = instance.mean_rewards(eval_feats)
    best_mean = eval_means.max(axis=1).mean()

    def policy_regret(w, dim):
        scores = eval_feats[:, :, :dim] @ w
        chosen = eval_means[np.arange(CB_EVAL_CONTEXTS), scores.argmax(axis=1)]
        return float(best_mean - chosen.mean())

    split = split_dataset(OfflineDataset((data,), {}), seed)
    train = split.train.steps[0]
    fixed: dict[int, object] = {}

    def fixed_fit(k):
        if k not in fixed:
            fixed[k] = classes[k].erm(train.x, train.a, train.r)
        return fixed[k]

    rows = []
    for method in _expand_methods(methods, len(classes)):
        t0 = time.perf_counter()
        if method == "modbe":
            trace = modbe_discounted(data, classes, gamma=0.0, delta=delta,
                                     schedule="practical", seed=seed)
            k = trace.k_hat
            f = trace.qseq.func(1)
        elif method == "holdout":
            valid = split.valid.steps[0]
            losses = []
            for k_i in range(1, len(classes) + 1):
                f_i = fixed_fit(k_i)
                losses.append(float(np.mean((f_i.values(valid.x, valid.a) - valid.r) ** 2)))
            k = int(np.argmin(losses)) + 1
            f = fixed_fit(k)
        elif method == "oracle":
            regrets = [policy_regret(fixed_fit(k_i).weights, classes[k_i].dim)
                       for k_i in range(1, len(classes) + 1)]
            k = int(np.argmin(regrets)) + 1
            f = fixed_fit(k)
        elif method.startswith("fixed-"):
            k = int(method.split("-")[1])
            f = fixed_fit(k)
        else:
            raise EvalError(f"unknown method {method!r}")
        reg = policy_regret(f.weights, classes[k].dim)
        ms = (time.perf_counter() - t0) * 1000.0
        rows.append((n, seed, method, k, reg, ms))
    return rows


def run_bias_cell(n: int, seed: int, methods: Sequence[str], schedule: str,
                  delta: float) -> list[tuple]:
    """Hold-out bias instance: regret is uninformative (one action); the
    selected class index is the quantity of interest."""
    mdp, classes, mu = holdout_bias_instance()
    base = make_fqi(mdp.horizon)
    dataset = generate_from_mu(mdp, mu, n, seed)
    rows = []
    for method in _expand_methods(methods, len(classes)):
        t0 = time.perf_counter()
        if method == "modbe":
            trace = modbe(dataset, base, classes, delta, schedule, seed)
            k, pol = trace.k_hat, trace.policy
        elif method == "holdout":
            k, fseq, _ = holdout_select(dataset, base, classes, seed)
            pol = greedy_policy(fseq.funcs, mdp.num_states, mdp.num_actions)
        elif method == "oracle":
            k, fseq, _ = oracle_select(dataset, base, classes, mdp, seed)
            pol = greedy_policy(fseq.funcs, mdp.num_states, mdp.num_actions)
        elif method.startswith("fixed-"):
            k = int(method.split("-")[1])
            split = split_dataset(dataset, seed)
            pol = greedy_policy(base.fit(split.train.steps, classes[k]).funcs,
                                mdp.num_states, mdp.num_actions)
        else:
            raise EvalError(f"unknown method {method!r}")
        ms = (time.perf_counter() - t0) * 1000.0
        rows.append((n, seed, method, k, regret(mdp, pol), ms))
    return rows


_CELL_RUNNERS = {
    "chain": lambda n, seed, cfg, inst: run_rl_cell(n, seed, cfg.methods, cfg.schedule, cfg.delta),
    "cb": lambda n, seed, cfg, inst: run_cb_cell(n, seed, cfg.methods, inst, cfg.delta),
    "holdout_bias": lambda n, seed, cfg, inst: run_bias_cell(n, seed, cfg.methods,
                                                             cfg.schedule, cfg.delta),
}


def _run_one_cell(args):
    instance, n, seed, cfg = args
    inst = CBInstance() if instance == "cb" else None
    return _CELL_RUNNERS[instance](n, seed, cfg, inst)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1,
                   record_runtime: bool = True) -> list[tuple]:
    """Run every (n, seed) cell; output rows sorted deterministically.

    Cells are independent and may execute in parallel; results are identical
    for any job count (runtimes excepted, which is why record_runtime exists).
    """
    if cfg.instance not in _CELL_RUNNERS:
        raise EvalError(f"unknown instance family {cfg.instance!r}")
    cells = [(cfg.instance, n, seed, cfg) for n in cfg.n_list for seed in cfg.seeds]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_one_cell, cells))
    else:
        chunks = [_run_one_cell(c) for c in cells]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    if not record_runtime:
        rows = [(n, s, m, k, reg, "") for (n, s, m, k, reg, _) in rows]
    return rows


def write_results_csv(rows: Sequence[tuple], path: str) -> None:
    lines = ["n,seed,method,selected_k,regret,runtime_ms"]
    for n, seed, method, k, reg, ms in rows:
        ms_s = "" if ms == "" else f"{ms:.0f}"
        lines.append(f"{n},{seed},{method},{k},{reg!r},{ms_s}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def summarize(rows: Sequence[tuple]) -> str:
    """Per-(n, method) mean regret with standard error, as a plain-text table."""
    groups: dict[tuple, list] = {}
    for n, _seed, method, _k, reg, _ms in rows:
        groups.setdefault((n, method), []).append(reg)
    lines = [f"{'n':>8} {'method':<12} {'mean_regret':>12} {'stderr':>10} {'runs':>5}"]
    for (n, method), vals in sorted(groups.items()):
        arr = np.asarray(vals, dtype=float)
        se = arr.std(ddof=1) / math.sqrt(len(arr)) if len(arr) > 1 else 0.0
        lines.append(f"{n:>8} {method:<12} {arr.mean():>12.5f} {se:>10.5f} {len(arr):>5}")
    return "\n".join(lines) + "\n"
