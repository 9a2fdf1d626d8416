"""The limit model: deterministic measure flows, value iteration on a simplex grid,
average-reward evaluation and vanishing-discount diagnostics."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from . import rng
from .core import (
    AdmissibleActions,
    ConditionalPolicy,
    DiscountSpec,
    RewardModel,
    TransitionModel,
    check_simplex,
    kernel_from_policy,
    uniform,
)
from .errors import CapacityError, InputError
from .nagent import PAIR_LIMIT, TABLE_LIMIT, FiniteMDP, compositions


def flow_step(mu, policy: ConditionalPolicy, T: TransitionModel, z0: int | None = None) -> np.ndarray:
    """``mu P`` for the kernel induced by ``policy`` at ``mu`` (and common-noise index ``z0``)."""
    P = kernel_from_policy(policy, T, mu, z0)
    if P.dtype == object:
        mu = np.asarray(mu, dtype=object)
        return np.array([sum(mu[x] * P[x, y] for x in range(len(mu))) for y in range(P.shape[1])], dtype=object)
    return np.asarray(mu, dtype=float) @ P


PolicySchedule = ConditionalPolicy | Sequence[ConditionalPolicy] | Callable[[int, np.ndarray], ConditionalPolicy]


def _policy_at(schedule: PolicySchedule, k: int, mu) -> ConditionalPolicy:
    if isinstance(schedule, ConditionalPolicy):
        return schedule
    if callable(schedule):
        return schedule(k, mu)
    return schedule[min(k, len(schedule) - 1)]


@dataclass
class Trajectory:
    measures: np.ndarray
    rewards: np.ndarray | None
    z0: list

    @property
    def steps(self) -> int:
        return len(self.measures) - 1

    def to_csv(self, path) -> None:
        d = self.measures.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step"] + [f"state_{i}" for i in range(d)] + ["mean_reward", "z0_value"])
            for k, mu in enumerate(self.measures):
                r = "" if self.rewards is None else repr(float(self.rewards[k]))
                z = "" if k >= len(self.z0) or self.z0[k] is None else repr(float(self.z0[k]))
                w.writerow([k] + [repr(float(v)) for v in mu] + [r, z])

    def to_tidy_csv(self, path) -> None:
        """One row per (step, node): plot data for mass evolution."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "node", "mass"])
            for k, mu in enumerate(self.measures):
                for x, v in enumerate(mu):
                    w.writerow([k, x, repr(float(v))])


def policy_reward(mu, policy: ConditionalPolicy, reward: RewardModel) -> float:
    """Lifted reward of ``Q = mu (x) Qbar``."""
    mu_f = np.asarray(mu, dtype=float)
    return float((mu_f[:, None] * np.asarray(policy.rows, dtype=float) * reward.matrix(mu_f)).sum())


def flow(mu0, schedule: PolicySchedule, T: TransitionModel, steps: int,
         reward: RewardModel | None = None, seed: int | None = None) -> Trajectory:
    """Iterate :func:`flow_step`; common-noise draws come from ``seed`` (required then)."""
    if steps < 0:
        raise InputError("steps must be non-negative")
    mu = check_simplex(mu0)
    if T.noise is not None and seed is None:
        raise InputError("a seed is required to draw the common noise")
    exact = mu.dtype == object
    out = [mu]
    rewards = []
    zs: list = []
    for k in range(steps + 1):
        policy = _policy_at(schedule, k, mu)
        if reward is not None:
            rewards.append(policy_reward(mu, policy, reward))
        if k == steps:
            break
        z0 = None if T.noise is None else rng.common_noise_index(seed, k, np.asarray(T.noise.probs))
        zs.append(None if z0 is None else T.noise.values[z0])
        mu = flow_step(mu, policy, T, z0)
        out.append(mu)
    measures = np.array(out, dtype=object if exact else float)
    return Trajectory(measures, np.asarray(rewards) if reward is not None else None, zs)


class SimplexGrid:
    """Points ``k / M`` of the simplex with ``sum k = M``.

    Projection rounds ``M mu`` down and hands the missing units to the
    coordinates with the largest fractional parts, which is the Euclidean
    nearest grid point.  Equal fractional parts favour the higher index, so
    ties resolve to the lexicographically smallest point.
    """

    def __init__(self, d: int, M: int):
        if d < 1 or M < 1:
            raise InputError("grid needs d >= 1 and M >= 1")
        size = math.comb(M + d - 1, d - 1)
        if size > TABLE_LIMIT:
            raise CapacityError(f"simplex grid has {size} points (limit {TABLE_LIMIT})")
        self.d, self.M = d, M
        self.counts = np.array(compositions(M, d), dtype=int)
        self._keys = self._encode(self.counts)
        self._order = np.argsort(self._keys)
        self._sorted = self._keys[self._order]

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def points(self) -> np.ndarray:
        return self.counts / self.M

    def _encode(self, counts: np.ndarray) -> np.ndarray:
        base = self.M + 1
        return counts @ (base ** np.arange(self.d - 1, -1, -1, dtype=np.int64))

    def index_of(self, counts) -> np.ndarray:
        keys = self._encode(np.atleast_2d(counts))
        pos = np.searchsorted(self._sorted, keys)
        if np.any(pos >= len(self._sorted)) or np.any(self._sorted[np.minimum(pos, len(self._sorted) - 1)] != keys):
            raise InputError("counts are not a grid point")
        return self._order[pos]

    def round_counts(self, mus) -> np.ndarray:
        x = np.atleast_2d(np.asarray(mus, dtype=float)) * self.M
        base = np.floor(x + 1e-12).astype(int)
        base = np.minimum(base, self.M)
        frac = x - base
        short = self.M - base.sum(axis=1)
        # stable sort on -frac with reversed columns: larger fraction first, higher index first on ties
        rev = frac[:, ::-1]
        order = np.argsort(-rev, axis=1, kind="stable")
        order = self.d - 1 - order
        ranks = np.empty_like(order)
        rows = np.arange(len(x))[:, None]
        ranks[rows, order] = np.arange(self.d)[None, :]
        return base + (ranks < short[:, None]).astype(int)

    def project(self, mus) -> np.ndarray:
        """Indices of the nearest grid points."""
        return self.index_of(self.round_counts(mus))


@dataclass
class LimitValueTable:
    grid: SimplexGrid
    values: np.ndarray
    beta: float
    residual: float
    iterations: int
    maximizers: list

    def __call__(self, mu) -> float:
        return float(self.values[self.grid.project(mu)[0]])

    def policy_at(self, mu) -> np.ndarray:
        return self.maximizers[int(self.grid.project(mu)[0])]

    def to_csv(self, path) -> None:
        d = self.grid.d
        m = self.maximizers[0].shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"mu_{i}" for i in range(d)] + ["value"]
                       + [f"q_{x}_{a}" for x in range(d) for a in range(m)])
            for pt, v, rows in zip(self.grid.points, self.values, self.maximizers):
                w.writerow([repr(float(p)) for p in pt] + [repr(float(v))] + [repr(float(q)) for q in rows.ravel()])


def row_grid(actions: AdmissibleActions, x: int, resolution: int) -> np.ndarray:
    """All action distributions on ``D(x)`` with weights in multiples of ``1/resolution``."""
    dx = actions[x]
    comps = np.array(compositions(resolution, len(dx)), dtype=float) / resolution
    rows = np.zeros((len(comps), actions.m))
    rows[:, list(dx)] = comps
    return rows


def value_iterate_limit(T: TransitionModel, reward: RewardModel, actions: AdmissibleActions,
                        spec: DiscountSpec, grid: SimplexGrid, action_resolution: int = 4) -> LimitValueTable:
    """Discounted value iteration for the limit model on ``grid``.

    Actions are ``Q = mu (x) Qbar`` with each occupied row of ``Qbar`` on a
    simplex grid of ``action_resolution``; empty states use their first
    admissible action.  Successor measures (one per common-noise value) are
    projected onto the grid.
    """
    if grid.d != actions.d or T.d != actions.d or reward.d != actions.d:
        raise InputError("grid, model and action sets disagree on d")
    row_sets = [row_grid(actions, x, action_resolution) for x in range(actions.d)]
    default_rows = [r[[0]] if len(r) == 1 else np.eye(actions.m)[[actions[x][0]]] for x, r in enumerate(row_sets)]
    total = 0
    for pt in grid.counts:
        total += math.prod(len(row_sets[x]) if c > 0 else 1 for x, c in enumerate(pt))
    if total > PAIR_LIMIT:
        raise CapacityError(f"{total} grid state-action pairs exceed the {PAIR_LIMIT} limit")

    atoms = T.noise_atoms()
    rewards, rows_i, cols_i, vals = [], [], [], []
    seg, choices = [0], []
    pair = 0
    for pt in grid.counts:
        mu = pt / grid.M
        options = [row_sets[x] if c > 0 else default_rows[x] for x, c in enumerate(pt)]
        idx = np.array(list(itertools.product(*(range(len(o)) for o in options))))
        Qbar = np.stack([options[x][idx[:, x]] for x in range(grid.d)], axis=1)  # (k, d, m)
        r = reward.matrix(mu)
        rewards.append(np.einsum("x,kxa,xa->k", mu, Qbar, r))
        n = len(Qbar)
        for z0, pz in atoms:
            nxt = np.einsum("x,kxa,xay->ky", mu, Qbar, T.tensor(mu, z0))
            rows_i.append(pair + np.arange(n))
            cols_i.append(grid.project(np.clip(nxt, 0, None)))
            vals.append(np.full(n, pz))
        choices.append(Qbar)
        pair += n
        seg.append(pair)
    trans = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows_i), np.concatenate(cols_i))),
                              shape=(pair, len(grid)))
    mdp = FiniteMDP(np.concatenate(rewards), trans, np.asarray(seg))
    v, choice, it, res = mdp.iterate(spec)
    maximizers = [choices[i][choice[i]] for i in range(len(grid))]
    return LimitValueTable(grid, v, spec.beta, res, it, maximizers)


@dataclass
class AverageReward:
    """Cesaro mean of the rewards plus the range of the rewards in the last tenth of the horizon."""

    mean: float
    tail_min: float
    tail_max: float
    n: int

    @property
    def value(self) -> float:
        return self.mean


def average_reward(rewards) -> AverageReward:
    r = np.asarray(rewards, dtype=float)
    if r.size < 1:
        raise InputError("need at least one reward")
    window = r[-max(1, r.size // 10):]
    return AverageReward(float(r.mean()), float(window.min()), float(window.max()), r.size)


def truncation_length(C: float, beta: float, tol: float) -> int:
    """``L = ceil(log(tol (1 - beta) / C) / log beta)``: the tail beyond L is below ``tol``."""
    if C <= 0:
        return 0
    return max(0, math.ceil(math.log(tol * (1 - beta) / C) / math.log(beta)))


def discounted_along_flow(mu0, policy: PolicySchedule, T: TransitionModel, reward: RewardModel,
                          beta: float, tol: float = 1e-10) -> tuple[float, int]:
    """``J^beta_psi(mu0)`` by truncated summation; returns the value and the truncation length."""
    L = truncation_length(reward.bound, beta, tol)
    traj = flow(mu0, policy, T, L, reward)
    return float(beta ** np.arange(L + 1) @ traj.rewards), L


@dataclass
class AverageRewardDiagnostics:
    betas: np.ndarray
    scaled_values: np.ndarray
    rho_samples: np.ndarray
    bias: np.ndarray
    average: AverageReward
    truncation: np.ndarray
    partial_averages: np.ndarray
    tol: float

    @property
    def gaps(self) -> np.ndarray:
        """``|(1 - beta) J^beta - G|`` per beta."""
        return np.abs(self.scaled_values - self.average.mean)

    @property
    def tail_gaps(self) -> np.ndarray:
        """Distance to the tail-window bracket (zero inside it)."""
        lo, hi = self.average.tail_min, self.average.tail_max
        s = self.scaled_values
        return np.maximum(np.maximum(lo - s, s - hi), 0.0)

    @property
    def inequality_holds(self) -> np.ndarray:
        """``G <= (1 - beta) J^beta + tol`` per beta (expected only for beta near 1)."""
        return self.average.mean <= self.scaled_values + self.tol

    @property
    def monotone(self) -> bool:
        g = self.tail_gaps
        return bool(np.all(np.diff(g) <= self.tol))

    def report(self) -> list[str]:
        lines = []
        for b, s, ok, L in zip(self.betas, self.scaled_values, self.inequality_holds, self.truncation):
            status = "ok" if ok else "VIOLATED"
            lines.append(f"beta={b:g} (1-beta)J={s:.10g} G={self.average.mean:.10g} L={L} {status}")
        return lines


def tauber_check(T: TransitionModel, reward: RewardModel, policy: PolicySchedule, mu0, betas,
                 horizon: int = 1000, tol: float = 1e-10, nu=None) -> AverageRewardDiagnostics:
    """Compare ``(1 - beta) J^beta_psi(mu0)`` with the long-run average along the same flow.

    ``rho_samples`` hold ``(1 - beta) J^beta_psi(nu)`` and ``bias`` holds
    ``J^beta_psi(mu0) - J^beta_psi(nu)``, with ``nu`` uniform by default.
    """
    if T.noise is not None:
        raise InputError("tauber_check needs a deterministic flow (no common noise)")
    mu0 = check_simplex(mu0)
    nu = uniform(len(mu0)) if nu is None else check_simplex(nu)
    betas = np.asarray(sorted(betas), dtype=float)
    if np.any((betas <= 0) | (betas >= 1)):
        raise InputError("discount factors must lie in (0, 1)")
    scaled, rho, bias, Ls = [], [], [], []
    for b in betas:
        J, L = discounted_along_flow(mu0, policy, T, reward, b, tol)
        Jn, _ = discounted_along_flow(nu, policy, T, reward, b, tol)
        scaled.append((1 - b) * J)
        rho.append((1 - b) * Jn)
        bias.append(J - Jn)
        Ls.append(L)
    traj = flow(mu0, policy, T, horizon - 1, reward)
    partial = np.cumsum(traj.rewards) / np.arange(1, horizon + 1)
    return AverageRewardDiagnostics(betas, np.array(scaled), np.array(rho), np.array(bias),
                                    average_reward(traj.rewards), np.array(Ls), partial, tol)


@dataclass
class BiasReport:
    betas: np.ndarray
    max_bias: np.ndarray
    min_bias: np.ndarray
    reference: int
    tables: list = field(default_factory=list)


def bias_diagnostic(T: TransitionModel, reward: RewardModel, actions: AdmissibleActions, betas,
                    grid: SimplexGrid, nu=None, eps: float = 1e-8, action_resolution: int = 4) -> BiasReport:
    """Tabulate ``h^beta(mu) = J^beta(mu) - J^beta(nu)`` on the grid for each discount factor."""
    nu = uniform(grid.d) if nu is None else check_simplex(nu)
    ref = int(grid.project(nu)[0])
    hi, lo, tables = [], [], []
    for b in betas:
        table = value_iterate_limit(T, reward, actions, DiscountSpec(b, eps), grid, action_resolution)
        h = table.values - table.values[ref]
        hi.append(h.max())
        lo.append(h.min())
        tables.append(table)
    return BiasReport(np.asarray(betas, dtype=float), np.array(hi), np.array(lo), ref, tables)
