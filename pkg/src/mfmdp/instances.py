"""Ready-made model instances: the triangle walk and the 3x3 congestion grid."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .core import (
    AdmissibleActions,
    AlphaIntentTransition,
    IndicatorReward,
    SpreadReward,
    TabularTransition,
    grid_adjacency,
)

# Hop counts 1..4 on the 3x3 lattice map to these distances.
_HOP_DISTANCE = {0: Fraction(0), 1: Fraction(1), 2: Fraction(7, 5), 3: Fraction(17, 10), 4: Fraction(11, 5)}

GRID_MU_STAR = tuple(Fraction(k, 37) for k in (7, 2, 7, 2, 1, 2, 7, 2, 7))
GRID_KAPPA = Fraction(1, 4)


def hop_distance(rows: int, cols: int, by_hops) -> np.ndarray:
    """Lattice distances looked up by Manhattan hop count; ``by_hops[k - 1]`` is the distance at k hops."""
    n = rows * cols
    exact = all(isinstance(v, (Fraction, int)) for v in by_hops)
    out = np.empty((n, n), dtype=object if exact else float)
    for i in range(n):
        for j in range(n):
            (ri, ci), (rj, cj) = divmod(i, cols), divmod(j, cols)
            hops = abs(ri - rj) + abs(ci - cj)
            out[i, j] = (Fraction(0) if exact else 0.0) if hops == 0 else by_hops[hops - 1]
    return out


def grid_distance_exact() -> np.ndarray:
    """Distances on the 3x3 lattice as Fractions (1, 1.4, 1.7, 2.2 by hop count)."""
    return hop_distance(3, 3, [_HOP_DISTANCE[k] for k in range(1, 5)])


def grid_distance() -> np.ndarray:
    return grid_distance_exact().astype(float)


def grid_model(alpha: float = 1.0):
    """Adjacency, admissible moves, alpha-intent transitions and spread reward on the grid."""
    adj = grid_adjacency(3, 3)
    actions = AdmissibleActions.from_adjacency(adj)
    return adj, actions, AlphaIntentTransition(alpha, actions), SpreadReward(grid_distance())


def triangle_model(move_prob: float = 0.5):
    """Walk on a triangle: move to the chosen neighbour w.p. ``move_prob``, otherwise stay.

    Actions are target nodes; ``D(x)`` is the two other nodes.  The reward
    pays 1 in node 0 and charges 1 whenever the mean position (labels 1..3)
    is within 0.5 of node 0's label.
    """
    actions = AdmissibleActions(((1, 2), (0, 2), (0, 1)), 3)
    p = np.zeros((3, 3, 3))
    for x, dx in enumerate(actions.sets):
        for a in dx:
            p[x, a, a] += move_prob
            p[x, a, x] += 1 - move_prob
        for a in set(range(3)) - set(dx):
            p[x, a, x] = 1.0  # inadmissible slots carry a harmless placeholder row
    return actions, TabularTransition(p), IndicatorReward(3, 3)
