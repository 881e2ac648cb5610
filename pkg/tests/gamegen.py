"""Random game generators shared by the tests."""

import numpy as np

from saddlegame.game import ControlGrid, StructureTag, make_game


def grids(n1, n2):
    return ControlGrid(-1.0, 1.0, n1), ControlGrid(-1.0, 1.0, n2)


def random_kernel(rng, S, n1, n2, live, absorbing, sparsity=0.5):
    P = rng.random((S, n1, n2, S)) * (rng.random((S, n1, n2, S)) < sparsity)
    P[..., 0] += 1e-3  # keep every row nonempty
    P /= P.sum(axis=-1, keepdims=True)
    for x in absorbing:
        P[x] = 0.0
        P[x, :, :, x] = 1.0
    return P


def random_contracting_game(rng, max_states=50, max_grid=8, max_discount=0.99, n_states=None):
    """Discounted game with every live discount factor at most ``max_discount``."""
    S = int(n_states or rng.integers(2, max_states + 1))
    n1, n2 = (int(v) for v in rng.integers(1, max_grid + 1, size=2))
    n_abs = int(rng.integers(0, max(1, S // 5) + 1))
    absorbing = list(range(S - n_abs, S))
    P = random_kernel(rng, S, n1, n2, S - n_abs, absorbing)
    running = rng.uniform(-1.0, 1.0, (S, n1, n2))
    terminal = rng.uniform(-1.0, 1.0, S)
    delta = rng.uniform(0.5, max_discount, S)
    delta[int(rng.integers(0, S))] = max_discount
    return make_game(list(range(S)), absorbing, grids(n1, n2), P, running, terminal, delta)


def random_separable_game(rng, max_states=50, max_grid=8, max_discount=0.99):
    """Separable costs and a control-independent kernel."""
    S = int(rng.integers(2, max_states + 1))
    n1, n2 = (int(v) for v in rng.integers(1, max_grid + 1, size=2))
    n_abs = int(rng.integers(0, max(1, S // 5) + 1))
    absorbing = list(range(S - n_abs, S))
    base = random_kernel(rng, S, 1, 1, S - n_abs, absorbing)
    P = np.broadcast_to(base, (S, n1, n2, S)).copy()
    c1 = rng.uniform(-1.0, 1.0, (S, n1))
    c2 = rng.uniform(-1.0, 1.0, (S, n2))
    running = c1[:, :, None] + c2[:, None, :]
    terminal = rng.uniform(-1.0, 1.0, S)
    delta = rng.uniform(0.5, max_discount, S)
    return make_game(list(range(S)), absorbing, grids(n1, n2), P, running, terminal, delta,
                     StructureTag("separable"))
