"""Detailed-balance kernels with a prescribed stationary law and their inversion to policies.

A kernel is built Metropolis style: propose each neighbour with weight
``kappa`` and accept with probability ``min(mu(y)/mu(x), 1)``; the diagonal
takes the remaining mass.  :func:`invert_kernel` then finds the conditional
policy whose alpha-intent transition reproduces that kernel.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (
    AdmissibleActions,
    AlphaIntentTransition,
    ConditionalPolicy,
    _is_exact,
    check_simplex,
    kernel_from_policy,
)
from .errors import InfeasibleError, InputError, ParameterError

ROUND_TRIP_TOL = 1e-12


@dataclass(frozen=True)
class BalanceKernel:
    P: np.ndarray
    kappa: object
    residual: float
    adjacency: np.ndarray
    mu: np.ndarray
    irreducible: bool
    aperiodic: bool

    @property
    def d(self) -> int:
        return self.P.shape[0]

    @property
    def exact(self) -> bool:
        return self.P.dtype == object

    def actions(self) -> AdmissibleActions:
        """Graph moves including staying put."""
        return AdmissibleActions.from_adjacency(self.adjacency, include_self=True)

    def as_float(self) -> np.ndarray:
        return np.asarray(self.P, dtype=float)


def _neighbours(adj: np.ndarray) -> list[list[int]]:
    return [[y for y in np.flatnonzero(adj[x]) if y != x] for x in range(adj.shape[0])]


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for y in np.flatnonzero(adj[x]):
            if not seen[y]:
                seen[y] = True
                queue.append(y)
    return seen


def is_connected(adjacency) -> bool:
    adj = np.asarray(adjacency, dtype=bool)
    sym = adj | adj.T
    return bool(_reachable(sym, 0).all())


def is_irreducible(P) -> bool:
    support = np.asarray(P, dtype=float) > 0
    n = support.shape[0]
    return all(_reachable(support, x).all() for x in range(n))


def period(P) -> int:
    """Period of an irreducible chain: gcd of ``level(u) + 1 - level(v)`` over all edges."""
    support = np.asarray(P, dtype=float) > 0
    level = np.full(support.shape[0], -1)
    level[0] = 0
    queue = deque([0])
    while queue:
        x = queue.popleft()
        for y in np.flatnonzero(support[x]):
            if level[y] < 0:
                level[y] = level[x] + 1
                queue.append(y)
    g = 0
    for x, y in zip(*np.nonzero(support)):
        if level[x] >= 0 and level[y] >= 0:
            g = math.gcd(g, int(abs(level[x] + 1 - level[y])))
    return g


def acceptance_mass(mu, adjacency) -> list:
    """``sum_{y ~ x} min(mu(y)/mu(x), 1)`` for every state ``x``."""
    adj = np.asarray(adjacency, dtype=bool)
    return [sum(min(mu[y] / mu[x], 1) for y in nbrs) for x, nbrs in enumerate(_neighbours(adj))]


def max_kappa(mu, adjacency):
    """Largest proposal weight that keeps every diagonal entry non-negative."""
    masses = [m for m in acceptance_mass(mu, adjacency) if m > 0]
    if not masses:
        raise InputError("graph has no edges")
    return min(1 / m for m in masses)


def build_balance_kernel(mu_star, adjacency, kappa=None) -> BalanceKernel:
    """Kernel ``P(x, y) = kappa min(mu(y)/mu(x), 1)`` on edges, diagonal completing each row.

    Fractions in ``mu_star`` (with ``kappa`` a Fraction or None) select exact
    arithmetic.  ``kappa=None`` picks half of the largest admissible value.
    """
    adj = np.asarray(adjacency, dtype=bool)
    d = adj.shape[0]
    if adj.shape != (d, d) or np.any(adj != adj.T):
        raise InputError("adjacency must be a symmetric square matrix")
    exact = _is_exact(mu_star) and (kappa is None or isinstance(kappa, (Fraction, int)))
    mu = check_simplex(mu_star, tol=1e-12)
    if len(mu) != d:
        raise InputError("stationary law and adjacency differ in size")
    if any(not v > 0 for v in mu):
        raise InputError("every state needs positive stationary mass")
    if not is_connected(adj):
        raise InputError("graph is not connected")
    kmax = max_kappa(mu, adj)
    if kappa is None:
        kappa = kmax / 2
    elif exact:
        kappa = Fraction(kappa)
    if not kappa > 0:
        raise ParameterError("kappa must be positive")

    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    P = np.full((d, d), zero, dtype=object if exact else float)
    for x, nbrs in enumerate(_neighbours(adj)):
        for y in nbrs:
            P[x, y] = kappa * min(mu[y] / mu[x], one)
        diag = one - sum(P[x, y] for y in nbrs)
        if diag < (0 if exact else -1e-15):
            raise ParameterError(
                f"kappa={float(kappa):.6g} makes the diagonal of row {x} negative "
                f"(largest admissible kappa is {float(kmax):.6g})"
            )
        P[x, x] = diag if exact else max(diag, 0.0)
    residual = detailed_balance_residual(P, mu)
    per = period(P)
    kernel = BalanceKernel(P, kappa, residual, adj, mu, is_irreducible(P), per == 1)
    if not kernel.aperiodic:
        warnings.warn(f"kernel is periodic with period {per}; flows need not converge", RuntimeWarning)
    return kernel


def detailed_balance_residual(P, mu) -> float:
    d = P.shape[0]
    worst = 0
    for x in range(d):
        for y in range(x + 1, d):
            worst = max(worst, abs(mu[x] * P[x, y] - mu[y] * P[y, x]))
    return float(worst)


def verify_stationarity(P, mu_star) -> float:
    """``||mu P - mu||_1``; exact (then converted) when both inputs hold Fractions."""
    P = P.P if isinstance(P, BalanceKernel) else P
    if np.asarray(P).dtype == object and _is_exact(mu_star):
        mu = np.array([Fraction(v) for v in mu_star], dtype=object)
        diff = mu @ np.asarray(P, dtype=object) - mu
        return float(sum(abs(v) for v in diff))
    mu = np.asarray(mu_star, dtype=float)
    return float(np.abs(mu @ np.asarray(P, dtype=float) - mu).sum())


def _kernel_actions(P, actions: AdmissibleActions | None) -> AdmissibleActions:
    if actions is not None:
        return actions
    if isinstance(P, BalanceKernel):
        return P.actions()
    raise InputError("admissible actions are required for a bare kernel matrix")


def feasibility_bounds(P, actions: AdmissibleActions | None = None):
    """Smallest alpha for which the inverted policy rows are probability vectors.

    Row ``x`` with ``k = |D(x)| >= 2`` needs ``alpha >= p(x, a)`` and
    ``alpha >= 1 - (k - 1) p(x, a)`` for every ``a`` in ``D(x)``; the result
    is floored at 1/2.  States with a single action impose nothing.
    """
    actions = _kernel_actions(P, actions)
    M = P.P if isinstance(P, BalanceKernel) else np.asarray(P)
    exact = M.dtype == object
    bound = Fraction(1, 2) if exact else 0.5
    for x, dx in enumerate(actions.sets):
        k = len(dx)
        if k < 2:
            continue
        for a in dx:
            p = M[x, a]
            bound = max(bound, p, 1 - (k - 1) * p)
    return bound


def invert_kernel(P, alpha, actions: AdmissibleActions | None = None) -> ConditionalPolicy:
    """Policy ``Qbar`` with ``kernel_from_policy(Qbar, AlphaIntent(alpha)) == P``.

    ``Qbar(a|x) = ((k - 1) p(x, a) - (1 - alpha)) / (alpha k - 1)`` with ``k = |D(x)|``.
    """
    actions = _kernel_actions(P, actions)
    M = P.P if isinstance(P, BalanceKernel) else np.asarray(P)
    exact = M.dtype == object and isinstance(alpha, (Fraction, int))
    if exact:
        alpha = Fraction(alpha)
    else:
        M = np.asarray(M, dtype=float)
        alpha = float(alpha)
    d = M.shape[0]
    if actions.d != d or actions.m != d:
        raise InputError("actions must be labelled by target states")
    mask = actions.mask()
    if any(M[x, y] != 0 for x in range(d) for y in range(d) if not mask[x, y]):
        raise InfeasibleError("kernel moves outside the admissible sets D(x)")
    if not 0 <= alpha <= 1:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    bound = feasibility_bounds(M, actions)
    tol = 0 if exact else 1e-12
    if alpha < bound - tol:
        raise ParameterError(f"alpha={float(alpha):.6g} is below the feasibility bound {float(bound):.6g}")

    zero = Fraction(0) if exact else 0.0
    rows = np.full((d, d), zero, dtype=object if exact else float)
    for x, dx in enumerate(actions.sets):
        k = len(dx)
        if k == 1:
            rows[x, dx[0]] = 1 if exact else 1.0
            continue
        denom = alpha * k - 1
        if denom == 0 or (not exact and abs(denom) < 1e-14):
            raise ParameterError(f"alpha * |D({x})| = 1: the inversion is singular")
        for a in dx:
            val = ((k - 1) * M[x, a] - (1 - alpha)) / denom
            rows[x, a] = val if exact else min(max(val, 0.0), 1.0)
    policy = ConditionalPolicy(rows, actions)
    back = kernel_from_policy(policy, AlphaIntentTransition(alpha, actions))
    err = float(np.max(np.abs(np.asarray(back - M, dtype=float))))
    if err > (0 if exact else ROUND_TRIP_TOL):
        raise InfeasibleError(f"inverted policy reproduces the kernel only to {err:.3g}")
    return policy
