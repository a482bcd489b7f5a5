# Offline dataset generation (i.i.d. per timestep), the deterministic 80/20
# train/validation split, and CSV persistence. All randomness flows through
# counter-based Philox streams keyed by (seed, stream, h) so per-step draws
# are independent of execution order and of the other steps.
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import Policy, TabularMDP, check_data_distribution, concentrability, occupancy

_STREAM_GENERATE = 0
_STREAM_SPLIT = 1

MIN_SAMPLES = 5    # smallest n with a nonempty validation slot


class DatasetError(ValueError):
    pass


def _rng(seed: int, stream: int, h: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, stream, h))))


@dataclass(frozen=True)
class StepData:
    """Transitions observed at one step index: parallel arrays of equal length."""

    x: np.ndarray
    a: np.ndarray
    r: np.ndarray
    x_next: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=int)
        a = np.asarray(self.a, dtype=int)
        r = np.asarray(self.r, dtype=float)
        xn = np.asarray(self.x_next, dtype=int)
        if not (len(x) == len(a) == len(r) == len(xn)):
            raise DatasetError("step arrays must have equal length")
        for name, arr in (("x", x), ("a", a), ("r", r), ("x_next", xn)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.x)

    def take(self, idx: np.ndarray) -> "StepData":
        return StepData(self.x[idx], self.a[idx], self.r[idx], self.x_next[idx])


@dataclass(frozen=True)
class OfflineDataset:
    """Per-step transition slots, n samples each, plus generation metadata."""

    steps: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        steps = tuple(self.steps)
        if not steps:
            raise DatasetError("dataset must contain at least one step slot")
        n = len(steps[0])
        if any(len(s) != n for s in steps):
            raise DatasetError("every step slot must contain the same number of transitions")
        object.__setattr__(self, "steps", steps)

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def n(self) -> int:
        return len(self.steps[0])


@dataclass(frozen=True)
class DataSplit:
    train: OfflineDataset
    valid: OfflineDataset
    seed: int


def generate_from_mu(mdp: TabularMDP, mu: np.ndarray, n: int, seed: int) -> OfflineDataset:
    """n i.i.d. draws per step: (x, a) ~ mu_h, r = r(x, a), x' ~ P_h(.|x, a)."""
    mu = check_data_distribution(mdp, mu)
    if n < 1:
        raise DatasetError("n must be at least 1")
    S, A = mdp.num_states, mdp.num_actions
    steps = []
    for h in range(mdp.horizon):
        rng = _rng(seed, _STREAM_GENERATE, h)
        flat = rng.choice(S * A, size=n, p=mu[h].reshape(-1))
        xs, as_ = np.divmod(flat, A)
        rs = mdp.rewards[xs, as_]
        cdf = np.cumsum(mdp.transitions[h][xs, as_], axis=1)
        u = rng.random(n)
        xn = np.minimum((cdf <= u[:, None]).sum(axis=1), S - 1)
        steps.append(StepData(xs, as_, rs, xn))
    return OfflineDataset(tuple(steps), {"seed": seed, "generator": "mu", "n": n})


def generate_from_behavior(mdp: TabularMDP, behavior: Policy, n: int,
                           seed: int) -> tuple[OfflineDataset, np.ndarray]:
    """Dataset whose mu_h is the exact occupancy of the behavior policy.

    Returns the dataset together with the induced mu so the caller can compute
    concentrability; a +inf coefficient is recorded in the metadata when the
    behavior policy leaves some reachable pair uncovered.
    """
    mu = occupancy(mdp, behavior)
    ds = generate_from_mu(mdp, mu, n, seed)
    conc = concentrability(mdp, mu)
    meta = dict(ds.meta)
    meta.update({"generator": "behavior", "concentrability": conc})
    return OfflineDataset(ds.steps, meta), mu


def split_dataset(dataset: OfflineDataset, seed: int) -> DataSplit:
    """Per-step random permutation; first ceil(0.8 n) samples train, rest validation."""
    n = dataset.n
    if n < MIN_SAMPLES:
        raise DatasetError(f"n = {n} < {MIN_SAMPLES}: validation slot would be empty")
    n_train = math.ceil(0.8 * n)
    train_steps, valid_steps = [], []
    for h, step in enumerate(dataset.steps):
        perm = _rng(seed, _STREAM_SPLIT, h).permutation(n)
        train_steps.append(step.take(perm[:n_train]))
        valid_steps.append(step.take(perm[n_train:]))
    return DataSplit(OfflineDataset(tuple(train_steps), dict(dataset.meta)),
                     OfflineDataset(tuple(valid_steps), dict(dataset.meta)),
                     seed)


def save_dataset_csv(dataset: OfflineDataset, path: str) -> None:
    lines = [f"# {k}={v}" for k, v in sorted(dataset.meta.items())]
    lines.append("h,x,a,r,x_next")
    for h, step in enumerate(dataset.steps, start=1):
        for i in range(len(step)):
            lines.append(f"{h},{step.x[i]},{step.a[i]},{float(step.r[i])!r},{step.x_next[i]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset_csv(path: str) -> OfflineDataset:
    meta: dict = {}
    rows: dict[int, list] = {}
    with open(path) as fh:
        header_seen = False
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            if not header_seen:
                if line != "h,x,a,r,x_next":
                    raise DatasetError(f"{path}:{lineno}: expected header 'h,x,a,r,x_next'")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise DatasetError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            try:
                h = int(parts[0])
                rec = (int(parts[1]), int(parts[2]), float(parts[3]), int(parts[4]))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed row: {exc}") from exc
            if h < 1:
                raise DatasetError(f"{path}:{lineno}: step index {h} out of range")
            if not 0.0 <= rec[2] <= 1.0:
                raise DatasetError(f"{path}:{lineno}: reward {rec[2]} outside [0, 1]")
            rows.setdefault(h, []).append(rec)
    if not rows:
        raise DatasetError(f"{path}: no transition rows found")
    H = max(rows)
    if sorted(rows) != list(range(1, H + 1)):
        raise DatasetError(f"{path}: missing step slots, found {sorted(rows)}")
    counts = {h: len(v) for h, v in rows.items()}
    if len(set(counts.values())) != 1:
        raise DatasetError(f"{path}: unequal slot sizes {counts}")
    steps = []
    for h in range(1, H + 1):
        steps.append(StepData(np.array([t[0] for t in rows[h]]),
                              np.array([t[1] for t in rows[h]]),
                              np.array([t[2] for t in rows[h]]),
                              np.array([t[3] for t in rows[h]])))
    return OfflineDataset(tuple(steps), meta)
