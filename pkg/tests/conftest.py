# Shared test fixtures and independent oracles: random MDP generation,
# exhaustive policy enumeration, brute-force max-reach, and Monte-Carlo
# rollout simulation. These deliberately avoid the library's DP code paths
# so they can serve as ground truth for it.
import numpy as np
import pytest

from modbe import Policy, TabularMDP


def random_mdp(rng: np.random.Generator, S: int, A: int, H: int) -> TabularMDP:
    P = rng.dirichlet(np.ones(S), size=(H, S, A))
    r = rng.random((S, A))
    rho = rng.dirichlet(np.ones(S))
    return TabularMDP(P, r, rho)


def random_full_support_mu(rng: np.random.Generator, S: int, A: int, H: int) -> np.ndarray:
    # Dirichlet with a floor keeps every pair's mass strictly positive
    mu = rng.dirichlet(np.ones(S * A), size=H) + 1e-4
    mu /= mu.sum(axis=1, keepdims=True)
    return mu.reshape(H, S, A)


def enumerate_action_tables(A: int, H: int, S: int) -> np.ndarray:
    """All A**(H*S) deterministic action tables, shape (count, H, S)."""
    count = A ** (H * S)
    idx = np.arange(count)
    digits = np.zeros((count, H, S), dtype=int)
    for pos in range(H * S):
        digits[:, pos // S, pos % S] = idx % A
        idx = idx // A
    return digits


def brute_optimal_value(mdp: TabularMDP) -> float:
    """max over all deterministic policies of v(pi), vectorized over policies."""
    S, A, H = mdp.num_states, mdp.num_actions, mdp.horizon
    digits = enumerate_action_tables(A, H, S)
    v = np.zeros((digits.shape[0], S))
    for h in range(H, 0, -1):
        q = np.einsum("xay,ny->nxa", mdp.transitions[h - 1], v) + mdp.rewards[None]
        v = np.take_along_axis(q, digits[:, h - 1, :, None], axis=2)[:, :, 0]
    return float((v @ mdp.initial_dist).max())


def brute_worst_value(mdp: TabularMDP) -> float:
    S, A, H = mdp.num_states, mdp.num_actions, mdp.horizon
    digits = enumerate_action_tables(A, H, S)
    v = np.zeros((digits.shape[0], S))
    for h in range(H, 0, -1):
        q = np.einsum("xay,ny->nxa", mdp.transitions[h - 1], v) + mdp.rewards[None]
        v = np.take_along_axis(q, digits[:, h - 1, :, None], axis=2)[:, :, 0]
    return float((v @ mdp.initial_dist).min())


def brute_max_reach(mdp: TabularMDP) -> np.ndarray:
    """max over deterministic policies of P^pi_{h+1}(x), by exhaustive enumeration.

    Uses the same backward matrix-product kernel as the library's DP
    (batched np.matmul computes each 2-D slice identically), so the per-column
    maxima agree with the DP bit-for-bit: every float op involved is monotone
    in the (nonnegative) operands and evaluated in a fixed order.
    """
    S, A, H = mdp.num_states, mdp.num_actions, mdp.horizon
    out = np.zeros((H, S))
    eye = np.eye(S)
    flat = [mdp.transitions[t].reshape(S * A, S) for t in range(H)]
    for h in range(H):
        digits = enumerate_action_tables(A, h, S)
        m = np.broadcast_to(eye, (digits.shape[0], S, S)).copy()
        for t in range(h - 1, -1, -1):
            prod = np.matmul(flat[t], m)                       # (count, S*A, S)
            rows = np.arange(S)[None, :] * A + digits[:, t, :]
            m = np.take_along_axis(prod, rows[:, :, None], axis=1)
        out[h] = np.matmul(mdp.initial_dist, m).max(axis=0)
    return out


def rollout_values(mdp: TabularMDP, policy: Policy, n_rollouts: int,
                   rng: np.random.Generator):
    """Monte-Carlo returns plus per-step empirical (x, a) visit frequencies."""
    S, A, H = mdp.num_states, mdp.num_actions, mdp.horizon
    x = rng.choice(S, size=n_rollouts, p=mdp.initial_dist)
    total = np.zeros(n_rollouts)
    freq = np.zeros((H, S, A))
    for h in range(H):
        pa = policy.probs[h][x]
        u = rng.random(n_rollouts)
        a = np.minimum((np.cumsum(pa, axis=1) <= u[:, None]).sum(axis=1), A - 1)
        np.add.at(freq[h], (x, a), 1.0)
        total += mdp.rewards[x, a]
        pn = mdp.transitions[h][x, a]
        u = rng.random(n_rollouts)
        x = np.minimum((np.cumsum(pn, axis=1) <= u[:, None]).sum(axis=1), S - 1)
    return total, freq / n_rollouts


# (S, A, H) shapes whose deterministic-policy count A**(S*H) stays enumerable,
# covering each of the bounds S=5, A=3, H=4 somewhere in the pool
ENUMERABLE_SHAPES = [
    (S, A, H)
    for S in range(1, 6) for A in range(1, 4) for H in range(1, 5)
    if A ** (S * H) <= 65536
]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
