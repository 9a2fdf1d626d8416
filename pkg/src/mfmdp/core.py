"""Domain types shared by all solvers and the agent/measure lifting operations.

States are labelled ``0..d-1`` and actions ``0..m-1``.  Measures on the
state space are plain numpy vectors validated by :func:`check_simplex`;
state-action measures are ``d x m`` matrices (:class:`JointMeasure`).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConsistencyError, InputError

SIMPLEX_TOL = 1e-12
DERIVED_TOL = 1e-10


def _is_exact(values) -> bool:
    """True when the values hold at least one Fraction and otherwise only ints."""
    arr = np.asarray(values, dtype=object).ravel()
    if arr.size == 0 or not any(isinstance(v, Fraction) for v in arr):
        return False
    return all(isinstance(v, (Fraction, int)) and not isinstance(v, bool) for v in arr)


def check_simplex(weights, tol: float = SIMPLEX_TOL, name: str = "measure") -> np.ndarray:
    """Validate a probability vector and return it as an array.

    Fractions are kept exact (object dtype); everything else becomes float64.
    """
    if _is_exact(weights):
        w = np.array([Fraction(v) for v in np.asarray(weights, dtype=object).ravel()], dtype=object)
        if any(v < 0 for v in w) or sum(w) != 1:
            raise InputError(f"{name} is not a probability vector")
        return w
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InputError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < -tol):
        raise InputError(f"{name} has negative or non-finite entries")
    if abs(w.sum() - 1.0) > tol:
        raise InputError(f"{name} sums to {w.sum()!r}, not 1")
    return w


def point_mass(d: int, x: int) -> np.ndarray:
    mu = np.zeros(d)
    mu[x] = 1.0
    return mu


def uniform(d: int) -> np.ndarray:
    return np.full(d, 1.0 / d)


@dataclass(frozen=True)
class FiniteStateSpace:
    """States ``0..d-1`` with an optional pairwise distance matrix."""

    d: int
    dist: np.ndarray | None = None

    def __post_init__(self):
        if self.d < 1:
            raise InputError("state space needs d >= 1")
        if self.dist is not None:
            dist = validate_distance(self.dist)
            if dist.shape != (self.d, self.d):
                raise InputError(f"distance matrix must be {self.d}x{self.d}")
            object.__setattr__(self, "dist", dist)


def validate_distance(dist, exact: bool = False) -> np.ndarray:
    """Symmetric, zero diagonal, strictly positive off the diagonal."""
    if exact or _is_exact(dist):
        arr = np.array([[Fraction(v) for v in row] for row in np.asarray(dist, dtype=object)], dtype=object)
    else:
        arr = np.asarray(dist, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InputError("distance matrix must be square")
    d = arr.shape[0]
    for i in range(d):
        if arr[i, i] != 0:
            raise InputError("distance matrix must have a zero diagonal")
        for j in range(i + 1, d):
            if abs(arr[i, j] - arr[j, i]) > 0:
                raise InputError(f"distance matrix is not symmetric at ({i}, {j})")
            if not arr[i, j] > 0:
                raise InputError(f"distance between distinct states {i}, {j} must be positive")
    return arr


@dataclass(frozen=True)
class AdmissibleActions:
    """Per-state action sets ``D(x)`` inside ``{0..m-1}``."""

    sets: tuple[tuple[int, ...], ...]
    m: int

    def __post_init__(self):
        sets = tuple(tuple(sorted(set(int(a) for a in s))) for s in self.sets)
        for x, s in enumerate(sets):
            if not s:
                raise InputError(f"D({x}) is empty")
            if s[0] < 0 or s[-1] >= self.m:
                raise InputError(f"D({x}) has actions outside 0..{self.m - 1}")
        object.__setattr__(self, "sets", sets)

    @property
    def d(self) -> int:
        return len(self.sets)

    def __getitem__(self, x: int) -> tuple[int, ...]:
        return self.sets[x]

    def mask(self) -> np.ndarray:
        out = np.zeros((self.d, self.m), dtype=bool)
        for x, s in enumerate(self.sets):
            out[x, list(s)] = True
        return out

    def size(self, x: int) -> int:
        return len(self.sets[x])

    def is_complete(self) -> bool:
        return self.m == self.d and all(len(s) == self.d for s in self.sets)

    @classmethod
    def from_adjacency(cls, adjacency, include_self: bool = True) -> "AdmissibleActions":
        """Graph moves: ``D(x)`` is the neighbourhood of ``x`` (plus ``x`` itself)."""
        adj = np.asarray(adjacency, dtype=bool)
        d = adj.shape[0]
        sets = []
        for x in range(d):
            s = set(np.flatnonzero(adj[x]).tolist())
            s.discard(x)
            if include_self:
                s.add(x)
            sets.append(tuple(s))
        return cls(tuple(sets), d)

    @classmethod
    def complete(cls, d: int) -> "AdmissibleActions":
        return cls(tuple(tuple(range(d)) for _ in range(d)), d)

    @classmethod
    def full(cls, d: int, m: int) -> "AdmissibleActions":
        return cls(tuple(tuple(range(m)) for _ in range(d)), m)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Counts of agents per state; hashable so it can key value tables."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts) or sum(counts) < 1:
            raise InputError("empirical measure needs non-negative counts summing to N >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def N(self) -> int:
        return sum(self.counts)

    @property
    def d(self) -> int:
        return len(self.counts)

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.N

    def exact_weights(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.N) for c in self.counts)


@dataclass(frozen=True)
class AgentConfiguration:
    states: tuple[int, ...]
    actions: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        if self.actions is not None:
            acts = tuple(int(a) for a in self.actions)
            if len(acts) != len(self.states):
                raise InputError("need one action per agent")
            object.__setattr__(self, "actions", acts)

    @property
    def N(self) -> int:
        return len(self.states)

    def check_actions(self, actions: AdmissibleActions) -> None:
        if self.actions is None:
            raise InputError("configuration carries no actions")
        for i, (x, a) in enumerate(zip(self.states, self.actions)):
            if a not in actions[x]:
                raise InputError(f"agent {i}: action {a} not admissible in state {x}")


@dataclass(frozen=True)
class JointMeasure:
    """Mass ``q[x, a]`` on state-action pairs."""

    q: np.ndarray

    def __post_init__(self):
        if _is_exact(self.q):
            q = np.array([[Fraction(v) for v in row] for row in np.asarray(self.q, dtype=object)], dtype=object)
            if any(v < 0 for v in q.ravel()) or sum(q.ravel()) != 1:
                raise InputError("joint measure must be a probability matrix")
        else:
            q = np.asarray(self.q, dtype=float)
            if q.ndim != 2:
                raise InputError("joint measure must be a d x m matrix")
            if np.any(q < -SIMPLEX_TOL) or abs(q.sum() - 1.0) > DERIVED_TOL:
                raise InputError("joint measure must be a probability matrix")
        object.__setattr__(self, "q", q)

    def margin(self) -> np.ndarray:
        return self.q.sum(axis=1)

    def check_support(self, actions: AdmissibleActions) -> None:
        outside = np.where(~actions.mask(), self.q, 0)
        if any(v != 0 for v in np.asarray(outside).ravel()):
            raise InputError("joint measure puts mass on inadmissible actions")

    def conditional(self, actions: AdmissibleActions | None = None) -> "ConditionalPolicy":
        """Disintegrate ``Q = mu (x) Qbar``; empty states get the first admissible action."""
        d, m = self.q.shape
        rows = np.zeros((d, m))
        for x in range(d):
            mass = self.q[x].sum()
            if mass > 0:
                rows[x] = self.q[x] / mass
            else:
                rows[x, actions[x][0] if actions is not None else 0] = 1.0
        return ConditionalPolicy(rows, actions)


@dataclass(frozen=True)
class ConditionalPolicy:
    """Row ``x`` is the action distribution ``Qbar(.|x)``."""

    rows: np.ndarray
    actions: AdmissibleActions | None = None

    def __post_init__(self):
        exact = _is_exact(self.rows)
        if exact:
            rows = np.array([[Fraction(v) for v in r] for r in np.asarray(self.rows, dtype=object)], dtype=object)
        else:
            rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise InputError("policy must be a d x m matrix")
        for x, row in enumerate(rows):
            if exact:
                ok = all(v >= 0 for v in row) and sum(row) == 1
            else:
                ok = bool(np.all(row >= -SIMPLEX_TOL)) and abs(row.sum() - 1.0) <= DERIVED_TOL
            if not ok:
                raise InputError(f"policy row {x} is not a probability vector")
        if self.actions is not None:
            if self.actions.d != rows.shape[0] or self.actions.m != rows.shape[1]:
                raise InputError("policy shape does not match the action sets")
            outside = np.where(~self.actions.mask(), rows, 0)
            if any(abs(v) > SIMPLEX_TOL for v in np.asarray(outside).ravel()):
                raise InputError("policy puts mass outside D(x)")
        object.__setattr__(self, "rows", rows)

    @property
    def d(self) -> int:
        return self.rows.shape[0]

    @property
    def m(self) -> int:
        return self.rows.shape[1]

    def joint(self, mu) -> JointMeasure:
        mu = np.asarray(mu, dtype=self.rows.dtype)
        return JointMeasure(mu[:, None] * self.rows)

    @classmethod
    def deterministic(cls, choice: Sequence[int], m: int, actions: AdmissibleActions | None = None):
        rows = np.zeros((len(choice), m))
        rows[np.arange(len(choice)), list(choice)] = 1.0
        return cls(rows, actions)

    @classmethod
    def uniform(cls, actions: AdmissibleActions) -> "ConditionalPolicy":
        rows = actions.mask().astype(float)
        return cls(rows / rows.sum(axis=1, keepdims=True), actions)


@dataclass(frozen=True)
class CommonNoise:
    """Finite law of the common noise; ``values[k]`` selects the model parameter."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        values = tuple(self.values)
        probs = check_simplex(list(self.probs), name="common-noise probabilities")
        if len(values) != len(probs):
            raise InputError("common noise needs one probability per value")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", tuple(probs.tolist()))

    def __len__(self) -> int:
        return len(self.values)


class TransitionModel:
    """Interface: ``tensor(mu, z0)[x, a, x']`` is the next-state law for ``(x, a)``.

    ``z0`` is an index into ``noise`` and is required iff the model has a
    common-noise layer.
    """

    d: int
    m: int
    noise: CommonNoise | None = None
    depends_on_measure: bool = False

    def tensor(self, mu=None, z0: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def noise_atoms(self) -> list[tuple[int | None, float]]:
        """``(z0, probability)`` pairs for exact expectations."""
        if self.noise is None:
            return [(None, 1.0)]
        return [(k, p) for k, p in enumerate(self.noise.probs) if p > 0]

    def _check_z0(self, z0):
        if self.noise is None and z0 is not None:
            raise InputError("model has no common noise but z0 was given")
        if self.noise is not None:
            if z0 is None:
                raise InputError("model has a common-noise layer; z0 is required")
            if not 0 <= z0 < len(self.noise):
                raise InputError(f"z0 index {z0} out of range")


class TabularTransition(TransitionModel):
    """Fixed table ``p[x, a, x']`` (or ``p[z0, x, a, x']`` with common noise)."""

    def __init__(self, p, noise: CommonNoise | None = None):
        p = np.asarray(p, dtype=float)
        expected = 4 if noise is not None else 3
        if p.ndim != expected:
            raise InputError(f"tabular transition needs a {expected}-d array")
        if noise is not None and p.shape[0] != len(noise):
            raise InputError("one transition table per common-noise value required")
        if np.any(p < -SIMPLEX_TOL) or np.any(np.abs(p.sum(axis=-1) - 1.0) > DERIVED_TOL):
            raise InputError("transition rows must be probability vectors")
        self.p = p
        self.noise = noise
        self.d, self.m = p.shape[-3], p.shape[-2]
        if p.shape[-1] != self.d:
            raise InputError("transition table must map states to states")

    def tensor(self, mu=None, z0=None):
        self._check_z0(z0)
        return self.p if self.noise is None else self.p[z0]


class AlphaIntentTransition(TransitionModel):
    """Move to the intended neighbour ``a`` w.p. alpha, else uniformly to another ``D(x)`` node.

    With a common-noise layer the noise values are the alpha values.
    """

    def __init__(self, alpha, actions: AdmissibleActions, noise: CommonNoise | None = None):
        if actions.m != actions.d:
            raise InputError("alpha-intent moves need actions labelled by target states")
        self.actions = actions
        self.noise = noise
        self.d = self.m = actions.d
        alphas = list(noise.values) if noise is not None else [alpha]
        for a in alphas:
            if a is None or not 0 <= a <= 1:
                raise InputError(f"alpha must lie in [0, 1], got {a!r}")
        self.alpha = alpha
        self._tables = [self._build(a) for a in alphas]

    def _build(self, alpha) -> np.ndarray:
        exact = isinstance(alpha, Fraction)
        one = Fraction(1) if exact else 1.0
        zero = Fraction(0) if exact else 0.0
        p = np.full((self.d, self.m, self.d), zero, dtype=object if exact else float)
        for x, dx in enumerate(self.actions.sets):
            k = len(dx)
            for a in dx:
                if k == 1:
                    p[x, a, a] = one
                    continue
                rest = (one - alpha) / (k - 1)
                for y in dx:
                    p[x, a, y] = alpha if y == a else rest
        return p

    def tensor(self, mu=None, z0=None):
        self._check_z0(z0)
        return self._tables[0 if z0 is None else z0]

    def alpha_at(self, z0=None):
        self._check_z0(z0)
        return self.alpha if z0 is None else self.noise.values[z0]


class FunctionTransition(TransitionModel):
    """Measure-dependent model: ``fn(mu, z0_value) -> p[x, a, x']``."""

    def __init__(self, fn: Callable, d: int, m: int, noise: CommonNoise | None = None,
                 depends_on_measure: bool = True):
        self.fn = fn
        self.d, self.m = d, m
        self.noise = noise
        self.depends_on_measure = depends_on_measure

    def tensor(self, mu=None, z0=None):
        self._check_z0(z0)
        value = None if z0 is None else self.noise.values[z0]
        p = np.asarray(self.fn(mu, value), dtype=float)
        if p.shape != (self.d, self.m, self.d):
            raise InputError("transition function returned the wrong shape")
        return p


class RewardModel:
    """Interface: ``matrix(mu)[x, a] = r(x, a, mu)``; ``bound`` is the constant C."""

    d: int
    m: int
    bound: float
    depends_on_measure: bool = True

    def matrix(self, mu) -> np.ndarray:
        raise NotImplementedError

    def value(self, x: int, a: int, mu) -> float:
        return self.matrix(mu)[x, a]


class TabularReward(RewardModel):
    def __init__(self, r, bound: float | None = None):
        self.r = np.asarray(r, dtype=float)
        self.d, self.m = self.r.shape
        self.bound = float(np.abs(self.r).max()) if bound is None else float(bound)
        self.depends_on_measure = False

    def matrix(self, mu=None):
        return self.r


class FunctionReward(RewardModel):
    """Callable reward ``fn(x, a, mu)`` with a user-declared bound."""

    def __init__(self, fn: Callable, d: int, m: int, bound: float):
        self.fn = fn
        self.d, self.m = d, m
        self.bound = float(bound)

    def matrix(self, mu):
        return np.array([[self.fn(x, a, mu) for a in range(self.m)] for x in range(self.d)], dtype=float)

    def value(self, x, a, mu):
        return float(self.fn(x, a, mu))


class SpreadReward(RewardModel):
    """Average distance to everybody else: ``r(x, mu) = sum_y dist[x, y] mu(y)``."""

    def __init__(self, dist, m: int | None = None):
        self.dist = validate_distance(dist)
        self.d = self.dist.shape[0]
        self.m = self.d if m is None else m
        self.bound = float(np.max(np.asarray(self.dist, dtype=float)))

    def matrix(self, mu):
        col = self.dist @ np.asarray(mu, dtype=self.dist.dtype)
        return np.repeat(col[:, None], self.m, axis=1)


class IndicatorReward(RewardModel):
    """``1{x = target} - 1{|pos(target) - mean position| <= radius}``.

    With positions ``1..d``, ``target=0`` and ``radius=0.5`` this is the
    triangle example reward.
    """

    def __init__(self, d: int, m: int, positions: Sequence[float] | None = None,
                 target: int = 0, radius: float = 0.5):
        self.d, self.m = d, m
        self.positions = np.arange(1, d + 1, dtype=float) if positions is None else np.asarray(positions, float)
        self.target = target
        self.radius = radius
        self.bound = 1.0

    def matrix(self, mu):
        mean_pos = float(self.positions @ np.asarray(mu, dtype=float))
        crowded = 1.0 if abs(self.positions[self.target] - mean_pos) <= self.radius else 0.0
        out = np.full((self.d, self.m), -crowded)
        out[self.target] += 1.0
        return out


@dataclass(frozen=True)
class DiscountSpec:
    beta: float
    eps: float = 1e-8
    max_iter: int = 100_000

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise InputError(f"discount factor must lie in (0, 1), got {self.beta!r}")
        if not self.eps > 0:
            raise InputError("tolerance must be positive")
        if self.max_iter < 1:
            raise InputError("max_iter must be positive")

    @property
    def stop_residual(self) -> float:
        """Step residual that guarantees the iterate is within ``eps`` of the fixed point."""
        return self.eps * (1 - self.beta) / (2 * self.beta)


def empirical_measure(config: AgentConfiguration, d: int) -> EmpiricalMeasure:
    if config.N < 1:
        raise InputError("configuration needs at least one agent")
    counts = [0] * d
    for s in config.states:
        if not 0 <= s < d:
            raise InputError(f"state label {s} outside 0..{d - 1}")
        counts[s] += 1
    return EmpiricalMeasure(tuple(counts))


def mean_reward(config: AgentConfiguration, reward: RewardModel,
                actions: AdmissibleActions | None = None) -> float:
    """Average of the agents' rewards, each evaluated at the configuration's empirical measure."""
    if config.actions is None:
        raise InputError("mean_reward needs the agents' actions")
    if actions is not None:
        config.check_actions(actions)
    mu = empirical_measure(config, reward.d).weights
    r = reward.matrix(mu)
    return float(sum(r[x, a] for x, a in zip(config.states, config.actions)) / config.N)


def joint_empirical(config: AgentConfiguration, d: int, m: int) -> JointMeasure:
    """``mu[(x, a)]``: the empirical state-action measure of a configuration."""
    if config.actions is None:
        raise InputError("configuration carries no actions")
    q = np.zeros((d, m))
    for x, a in zip(config.states, config.actions):
        q[x, a] += 1
    return JointMeasure(q / config.N)


def validate_joint(Q: JointMeasure | np.ndarray, mu) -> float:
    """Largest deviation between the state margin of ``Q`` and ``mu``.

    A bare array is accepted too, so that unnormalized candidates can be scored.
    """
    q = Q.q if isinstance(Q, JointMeasure) else np.asarray(Q)
    diff = q.sum(axis=1) - np.asarray(mu, dtype=q.dtype)
    return float(max(abs(v) for v in diff))


def lifted_reward(mu, Q: JointMeasure, reward: RewardModel) -> float:
    """``sum_{x,a} r(x, a, mu) Q(x, a)``."""
    mu = check_simplex(mu, tol=DERIVED_TOL)
    residual = validate_joint(Q, mu)
    if residual > DERIVED_TOL:
        raise ConsistencyError(f"first margin of Q differs from mu by {residual:.3g}")
    return float((reward.matrix(mu) * Q.q).sum())


def kernel_from_policy(policy: ConditionalPolicy, T: TransitionModel, mu=None, z0: int | None = None) -> np.ndarray:
    """State-to-state kernel ``P[x, x'] = sum_a Qbar(a|x) p^{x,a,mu,z0}(x')``."""
    p = T.tensor(mu, z0)
    if p.shape[:2] != policy.rows.shape:
        raise InputError("policy shape does not match the transition model")
    if policy.rows.dtype == object or p.dtype == object:
        return (policy.rows.astype(object)[:, :, None] * p.astype(object)).sum(axis=1)
    return np.einsum("xa,xay->xy", policy.rows, p)


def round_counts(mu, N: int) -> tuple[int, ...]:
    """Largest-remainder rounding of ``N * mu`` to integer counts summing to ``N``."""
    mu = check_simplex(mu, tol=DERIVED_TOL)
    raw = np.asarray(mu, dtype=float) * N
    base = np.floor(raw).astype(int)
    short = N - int(base.sum())
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return tuple(int(c) for c in base)


def configuration_from_counts(counts: Sequence[int]) -> AgentConfiguration:
    states = [x for x, c in enumerate(counts) for _ in range(c)]
    return AgentConfiguration(tuple(states))


def read_matrix(source) -> np.ndarray:
    """Whitespace-separated rows; lines starting with ``#`` are comments.  Entries may be ``p/q``."""
    if isinstance(source, (str, Path)) and Path(source).exists():
        text = Path(source).read_text()
    else:
        text = str(source)
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(Fraction(tok)) for tok in line.split()])
        except (ValueError, ZeroDivisionError):
            raise InputError(f"matrix line is not numeric: {line!r}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise InputError("matrix text must have rows of equal length")
    return np.array(rows)


def format_matrix(arr, header: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    arr = np.atleast_2d(np.asarray(arr))
    for row in arr:
        buf.write(" ".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_matrix(path, arr, header: Iterable[str] = ()) -> None:
    Path(path).write_text(format_matrix(arr, header))


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    return repr(float(v))


def read_edge_list(source, d: int | None = None) -> np.ndarray:
    """One ``x y`` pair per line (0-based); returns a symmetric adjacency matrix."""
    if isinstance(source, (str, Path)) and Path(source).exists():
        text = Path(source).read_text()
    else:
        text = str(source)
    edges = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        x, y = (int(t) for t in line.split()[:2])
        edges.append((x, y))
    return adjacency_from_edges(edges, d)


def adjacency_from_edges(edges, d: int | None = None) -> np.ndarray:
    edges = [(int(x), int(y)) for x, y in edges]
    n = d if d is not None else 1 + max(max(e) for e in edges)
    adj = np.zeros((n, n), dtype=bool)
    for x, y in edges:
        if x == y:
            continue
        adj[x, y] = adj[y, x] = True
    return adj


def grid_adjacency(rows: int, cols: int) -> np.ndarray:
    """4-neighbour lattice, nodes numbered row by row."""
    n = rows * cols
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        r, c = divmod(i, cols)
        if c + 1 < cols:
            adj[i, i + 1] = adj[i + 1, i] = True
        if r + 1 < rows:
            adj[i, i + cols] = adj[i + cols, i] = True
    return adj


def multinomial_coefficient(counts: Sequence[int]) -> int:
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out
