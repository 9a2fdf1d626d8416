"""Exact solution of the N-agent MDP, its empirical-measure form, and agent simulation.

Both exact solvers reduce to a finite MDP stored as a segmented state-action
table (:class:`FiniteMDP`): one reward and one next-state distribution per
admissible (state, action) pair, with all expectations over idiosyncratic
and common noise taken exactly when the table is built.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from . import rng
from .core import (
    AdmissibleActions,
    AgentConfiguration,
    ConditionalPolicy,
    DiscountSpec,
    EmpiricalMeasure,
    JointMeasure,
    RewardModel,
    TransitionModel,
    check_simplex,
    configuration_from_counts,
    multinomial_coefficient,
    round_counts,
)
from .errors import CapacityError, ConsistencyError, InputError, IterationLimitError

TABLE_LIMIT = 10**6
PAIR_LIMIT = 10**7


@dataclass
class FiniteMDP:
    """State-action table: pairs ``seg[s]:seg[s+1]`` belong to state ``s``."""

    rewards: np.ndarray
    trans: sparse.csr_matrix
    seg: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.seg) - 1

    def q_values(self, v: np.ndarray, beta: float) -> np.ndarray:
        return self.rewards + beta * (self.trans @ v)

    def bellman(self, v: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
        """One application of the optimality operator; ties go to the first pair."""
        q = self.q_values(v, beta)
        new = np.maximum.reduceat(q, self.seg[:-1])
        hit = q == np.repeat(new, np.diff(self.seg))
        first = np.full(self.n_states, -1)
        idx = np.flatnonzero(hit)
        owner = np.searchsorted(self.seg, idx, side="right") - 1
        # reversed assignment keeps the lowest index per state
        first[owner[::-1]] = idx[::-1]
        return new, first - self.seg[:-1]

    def iterate(self, spec: DiscountSpec, v0: np.ndarray | None = None):
        v = np.zeros(self.n_states) if v0 is None else np.asarray(v0, dtype=float)
        target = spec.stop_residual
        residual = math.inf
        for it in range(1, spec.max_iter + 1):
            new, choice = self.bellman(v, spec.beta)
            residual = float(np.max(np.abs(new - v))) if len(v) else 0.0
            v = new
            if residual <= target:
                return v, choice, it, residual
        raise IterationLimitError(
            f"value iteration stopped after {spec.max_iter} sweeps with residual {residual:.3g}",
            residual,
        )


@dataclass
class ProductValueTable:
    """Values on ``S^N``; configurations are ravelled with agent 0 most significant."""

    N: int
    d: int
    values: np.ndarray
    iterations: int
    residual: float
    beta: float
    eps: float
    policy: dict[tuple[int, ...], tuple[int, ...]] = field(default_factory=dict)

    def index(self, config: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(config), (self.d,) * self.N))

    def __getitem__(self, config: Sequence[int]) -> float:
        return float(self.values[self.index(config)])

    def configurations(self):
        return itertools.product(range(self.d), repeat=self.N)


@dataclass
class EmpiricalValueTable:
    N: int
    d: int
    states: list[tuple[int, ...]]
    values: np.ndarray
    iterations: int
    residual: float
    beta: float
    eps: float
    policy: dict[tuple[int, ...], JointMeasure] = field(default_factory=dict)

    def __getitem__(self, mu: EmpiricalMeasure | Sequence[int]) -> float:
        key = mu.counts if isinstance(mu, EmpiricalMeasure) else tuple(mu)
        return float(self.values[self._index[key]])

    def __post_init__(self):
        self._index = {s: i for i, s in enumerate(self.states)}

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {s: float(v) for s, v in zip(self.states, self.values)}


@dataclass
class SimulationRecord:
    measures: np.ndarray
    rewards: np.ndarray
    z0: list
    seed: int
    N: int

    @property
    def horizon(self) -> int:
        return len(self.rewards) - 1

    def to_csv(self, path) -> None:
        d = self.measures.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step"] + [f"state_{i}" for i in range(d)] + ["mean_reward", "z0_value"])
            for k in range(len(self.rewards)):
                z = "" if self.z0[k] is None else repr(float(self.z0[k]))
                w.writerow([k] + [repr(float(v)) for v in self.measures[k]] + [repr(float(self.rewards[k])), z])


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    truncation_bound: float
    replications: int


def _check_model(T: TransitionModel, reward: RewardModel, actions: AdmissibleActions):
    if (T.d, T.m) != (actions.d, actions.m) or (reward.d, reward.m) != (actions.d, actions.m):
        raise InputError("transition, reward and action sets disagree on d or m")


def _product_outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out.ravel()


def build_product_mdp(N: int, T: TransitionModel, reward: RewardModel,
                      actions: AdmissibleActions) -> tuple[FiniteMDP, list[list[tuple[int, ...]]]]:
    """Enumerate ``S^N`` and every joint action; returns the table and the action lists."""
    _check_model(T, reward, actions)
    d = actions.d
    if N < 1:
        raise InputError("need N >= 1")
    n_states = d**N
    if n_states > TABLE_LIMIT:
        raise CapacityError(f"|S|^N = {n_states} exceeds the {TABLE_LIMIT} table limit")
    n_pairs = sum(math.prod(len(actions[x]) for x in cfg) for cfg in itertools.product(range(d), repeat=N))
    if n_pairs > PAIR_LIMIT:
        raise CapacityError(f"{n_pairs} state-action pairs exceed the {PAIR_LIMIT} limit")

    rewards, rows, cols, vals = [], [], [], []
    seg = [0]
    action_lists = []
    pair = 0
    for cfg in itertools.product(range(d), repeat=N):
        counts = np.bincount(cfg, minlength=d)
        mu = counts / N
        r = reward.matrix(mu)
        tensors = [(T.tensor(mu, z0), pz) for z0, pz in T.noise_atoms()]
        acts = list(itertools.product(*(actions[x] for x in cfg)))
        action_lists.append(acts)
        for a in acts:
            rewards.append(sum(r[x, b] for x, b in zip(cfg, a)) / N)
            nxt = None
            for p, pz in tensors:
                term = pz * _product_outer([p[x, b] for x, b in zip(cfg, a)])
                nxt = term if nxt is None else nxt + term
            nz = np.flatnonzero(nxt)
            rows.extend([pair] * len(nz))
            cols.extend(nz.tolist())
            vals.extend(nxt[nz].tolist())
            pair += 1
        seg.append(pair)
    trans = sparse.csr_matrix((vals, (rows, cols)), shape=(pair, n_states))
    return FiniteMDP(np.asarray(rewards), trans, np.asarray(seg)), action_lists


def bellman_product_step(v: ProductValueTable | np.ndarray, N: int, T: TransitionModel,
                         reward: RewardModel, actions: AdmissibleActions, beta: float) -> np.ndarray:
    """``Uv`` on ``S^N`` by full enumeration of joint actions."""
    mdp, _ = build_product_mdp(N, T, reward, actions)
    vals = v.values if isinstance(v, ProductValueTable) else np.asarray(v, dtype=float)
    if vals.shape != (mdp.n_states,):
        raise InputError("value vector does not match |S|^N")
    return mdp.bellman(vals, beta)[0]


def value_iterate_product(N: int, T: TransitionModel, reward: RewardModel,
                          actions: AdmissibleActions, spec: DiscountSpec) -> ProductValueTable:
    mdp, action_lists = build_product_mdp(N, T, reward, actions)
    v, choice, it, res = mdp.iterate(spec)
    configs = list(itertools.product(range(actions.d), repeat=N))
    policy = {cfg: action_lists[i][choice[i]] for i, cfg in enumerate(configs)}
    return ProductValueTable(N, actions.d, v, it, res, spec.beta, spec.eps, policy)


def compositions(n: int, k: int) -> list[tuple[int, ...]]:
    """All ways to write ``n`` as an ordered sum of ``k`` non-negative integers (lexicographic)."""
    if k == 1:
        return [(n,)]
    out = []
    for first in range(n, -1, -1):
        for rest in compositions(n - first, k - 1):
            out.append((first,) + rest)
    return out


def empirical_states(N: int, d: int) -> list[tuple[int, ...]]:
    count = math.comb(N + d - 1, d - 1)
    if count > TABLE_LIMIT:
        raise CapacityError(f"|P_N(S)| = {count} exceeds the {TABLE_LIMIT} table limit")
    return compositions(N, d)


def _hat_action_counts(counts: Sequence[int], actions: AdmissibleActions, m: int):
    per_state = []
    for x, n in enumerate(counts):
        dx = actions[x]
        if n == 0:
            per_state.append([None])
        else:
            per_state.append([dict(zip(dx, comp)) for comp in compositions(n, len(dx))])
    for combo in itertools.product(*per_state):
        c = np.zeros((len(counts), m), dtype=int)
        for x, alloc in enumerate(combo):
            if alloc:
                for a, k in alloc.items():
                    c[x, a] = k
        yield c


def enumerate_hat_actions(mu: EmpiricalMeasure, actions: AdmissibleActions) -> list[JointMeasure]:
    """Every N-point state-action measure with state margin ``mu`` and support in ``D``."""
    if mu.d != actions.d:
        raise InputError("measure and action sets disagree on d")
    return [JointMeasure(c / mu.N) for c in _hat_action_counts(mu.counts, actions, actions.m)]


@lru_cache(maxsize=None)
def _multinomial_pmf(n: int, probs: tuple[float, ...]) -> tuple[tuple[tuple[int, ...], float], ...]:
    support = [i for i, p in enumerate(probs) if p > 0]
    d = len(probs)
    out = []
    for comp in compositions(n, len(support)):
        counts = [0] * d
        for i, k in zip(support, comp):
            counts[i] = k
        pr = multinomial_coefficient(comp) * math.prod(probs[i] ** k for i, k in zip(support, comp))
        out.append((tuple(counts), pr))
    return tuple(out)


def next_counts_distribution(c: np.ndarray, p: np.ndarray) -> dict[tuple[int, ...], float]:
    """Law of the next counts when ``c[x, a]`` agents move independently with ``p[x, a]``."""
    d = p.shape[-1]
    dist = {(0,) * d: 1.0}
    for x, a in zip(*np.nonzero(c)):
        pmf = _multinomial_pmf(int(c[x, a]), tuple(float(v) for v in p[x, a]))
        new: dict[tuple[int, ...], float] = {}
        for base, pb in dist.items():
            for add, pa in pmf:
                key = tuple(i + j for i, j in zip(base, add))
                new[key] = new.get(key, 0.0) + pb * pa
        dist = new
    return dist


def build_empirical_mdp(N: int, T: TransitionModel, reward: RewardModel, actions: AdmissibleActions):
    _check_model(T, reward, actions)
    d, m = actions.d, actions.m
    states = empirical_states(N, d)
    index = {s: i for i, s in enumerate(states)}
    rewards, rows, cols, vals = [], [], [], []
    seg = [0]
    action_lists = []
    pair = 0
    for s in states:
        mu = np.asarray(s, dtype=float) / N
        r = reward.matrix(mu)
        tensors = [(T.tensor(mu, z0), pz) for z0, pz in T.noise_atoms()]
        acts = list(_hat_action_counts(s, actions, m))
        action_lists.append(acts)
        if pair + len(acts) > PAIR_LIMIT:
            raise CapacityError(f"state-action table exceeds the {PAIR_LIMIT} limit")
        for c in acts:
            rewards.append(float((c * r).sum()) / N)
            nxt: dict[int, float] = {}
            for p, pz in tensors:
                for key, pr in next_counts_distribution(c, p).items():
                    j = index[key]
                    nxt[j] = nxt.get(j, 0.0) + pz * pr
            for j, pr in nxt.items():
                rows.append(pair)
                cols.append(j)
                vals.append(pr)
            pair += 1
        seg.append(pair)
    trans = sparse.csr_matrix((vals, (rows, cols)), shape=(pair, len(states)))
    return FiniteMDP(np.asarray(rewards), trans, np.asarray(seg)), states, action_lists


def value_iterate_empirical(N: int, T: TransitionModel, reward: RewardModel,
                            actions: AdmissibleActions, spec: DiscountSpec) -> EmpiricalValueTable:
    mdp, states, action_lists = build_empirical_mdp(N, T, reward, actions)
    v, choice, it, res = mdp.iterate(spec)
    policy = {s: JointMeasure(action_lists[i][choice[i]] / N) for i, s in enumerate(states)}
    return EmpiricalValueTable(N, actions.d, states, v, it, res, spec.beta, spec.eps, policy)


def check_equivalence(vN: ProductValueTable, jN: EmpiricalValueTable) -> float:
    """``max_x |V^N(x) - J^N(mu[x])|`` over all configurations."""
    if (vN.N, vN.d) != (jN.N, jN.d) or vN.beta != jN.beta:
        raise ConsistencyError("tables come from different models (N, d or beta differ)")
    worst = 0.0
    for cfg in vN.configurations():
        key = tuple(np.bincount(cfg, minlength=vN.d).tolist())
        worst = max(worst, abs(vN[cfg] - jN[key]))
    return worst


ProductPolicy = Mapping[tuple[int, ...], tuple[int, ...]]


def simulate_agents(N: int, policy: ConditionalPolicy | ProductPolicy, T: TransitionModel,
                    reward: RewardModel, horizon: int, seed: int, mu0=None,
                    config: AgentConfiguration | Sequence[int] | None = None) -> SimulationRecord:
    """Run N agents for ``horizon`` steps.

    With a :class:`ConditionalPolicy` each agent samples its own action from
    its row (decentralized).  A mapping from configurations to joint actions
    is applied centrally.  The initial configuration is either given or
    obtained from ``mu0`` by largest-remainder rounding.
    """
    if horizon < 0 or N < 1:
        raise InputError("need horizon >= 0 and N >= 1")
    d = T.d
    if config is not None:
        states = np.asarray(config.states if isinstance(config, AgentConfiguration) else config, dtype=int)
        if len(states) != N:
            raise InputError("configuration size differs from N")
        if states.min() < 0 or states.max() >= d:
            raise InputError("configuration has invalid state labels")
    elif mu0 is not None:
        states = np.asarray(configuration_from_counts(round_counts(check_simplex(mu0), N)).states, dtype=int)
    else:
        raise InputError("give either mu0 or an explicit configuration")

    decentralized = isinstance(policy, ConditionalPolicy)
    m = T.m
    if decentralized:
        if policy.rows.shape != (d, m):
            raise InputError("policy shape does not match the transition model")
        policy_cdf = np.ascontiguousarray(rng.cumulative(np.asarray(policy.rows, dtype=float)).T)
    probs = None if T.noise is None else np.asarray(T.noise.probs)
    static = not getattr(T, "depends_on_measure", True)
    move_cache: dict = {}

    def move_table(mu, z0):
        # transposed cumulative table with one column per (state, action) pair
        if static and z0 in move_cache:
            return move_cache[z0]
        p = np.asarray(T.tensor(mu, z0), dtype=float).reshape(d * m, d)
        table = np.ascontiguousarray(rng.cumulative(p).T)
        if static:
            move_cache[z0] = table
        return table

    measures = np.zeros((horizon + 1, d))
    rewards = np.zeros(horizon + 1)
    z_values: list = []
    for k in range(horizon + 1):
        counts = np.bincount(states, minlength=d)
        mu = counts / N
        measures[k] = mu
        if decentralized:
            acts = rng.sample_table(policy_cdf, states, rng.uniforms(seed, k, rng.ACTION, N))
        else:
            try:
                acts = np.asarray(policy[tuple(int(s) for s in states)], dtype=int)
            except KeyError as exc:
                raise InputError(f"product policy has no action for configuration {exc}") from None
        pair = states * m + acts
        joint = np.bincount(pair, minlength=d * m)
        rewards[k] = float(joint @ np.asarray(reward.matrix(mu), dtype=float).ravel()) / N
        if k == horizon:
            z_values.append(None)
            break
        z0 = None if probs is None else rng.common_noise_index(seed, k, probs)
        z_values.append(None if z0 is None else T.noise.values[z0])
        states = rng.sample_table(move_table(mu, z0), pair, rng.uniforms(seed, k, rng.MOVE, N))
    return SimulationRecord(measures, rewards, z_values, seed, N)


def discounted_mc_value(records: Iterable[SimulationRecord], reward: RewardModel | float,
                        beta: float, L: int) -> MCEstimate:
    """Mean of ``sum_{k<=L} beta^k rbar_k`` over replications, with its standard error.

    ``truncation_bound`` is ``C beta^(L+1) / (1 - beta)``, the largest possible
    contribution of the ignored tail.
    """
    C = reward.bound if isinstance(reward, RewardModel) else float(reward)
    disc = beta ** np.arange(L + 1)
    totals = []
    for rec in records:
        if len(rec.rewards) < L + 1:
            raise InputError(f"record has {len(rec.rewards)} steps, need {L + 1}")
        totals.append(float(disc @ rec.rewards[: L + 1]))
    if not totals:
        raise InputError("no replications given")
    totals = np.asarray(totals)
    stderr = float(totals.std(ddof=1) / math.sqrt(len(totals))) if len(totals) > 1 else 0.0
    return MCEstimate(float(totals.mean()), stderr, C * beta ** (L + 1) / (1 - beta), len(totals))


def truncation_horizon(C: float, beta: float, tol: float) -> int:
    """Smallest L with ``C beta^(L+1) / (1-beta) <= tol``."""
    if C <= 0:
        return 0
    return max(0, math.ceil(math.log(tol * (1 - beta) / C) / math.log(beta)) - 1)
