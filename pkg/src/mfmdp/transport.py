"""Wasserstein-1 distances, ergodicity diagnostics and a contraction harness on [0, 1].

Finite-space distances solve the transportation LP with HiGHS and certify
the answer with a Lipschitz potential built from the LP duals, so every
returned value carries its own duality gap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from .core import check_simplex
from .errors import CapacityError, InputError, MFMDPError

TRIANGLE_TOL = 1e-12
GAP_TOL = 1e-10


@dataclass(frozen=True)
class FiniteMetric:
    dist: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        D = np.asarray(self.dist, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise InputError("metric must be a square matrix")
        if not np.all(np.isfinite(D)) or np.any(D < 0):
            raise InputError("metric entries must be finite and non-negative")
        if np.any(np.diag(D) != 0) or not np.array_equal(D, D.T):
            raise InputError("metric must be symmetric with a zero diagonal")
        # d(x, z) <= d(x, y) + d(y, z) for all triples
        via = (D[:, :, None] + D[None, :, :]).min(axis=1)
        if np.any(D > via + TRIANGLE_TOL):
            x, z = np.unravel_index(np.argmax(D - via), D.shape)
            raise InputError(f"triangle inequality fails between {x} and {z}")
        labels = tuple(self.labels) if self.labels else tuple(range(D.shape[0]))
        if len(labels) != D.shape[0]:
            raise InputError("one label per point required")
        object.__setattr__(self, "dist", D)
        object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return self.dist.shape[0]

    @classmethod
    def line(cls, n: int) -> "FiniteMetric":
        idx = np.arange(n, dtype=float)
        return cls(np.abs(idx[:, None] - idx[None, :]))


@dataclass
class TransportResult:
    value: float
    plan: np.ndarray
    potential: np.ndarray
    dual_value: float

    @property
    def gap(self) -> float:
        return self.value - self.dual_value


def _as_metric(metric) -> FiniteMetric:
    return metric if isinstance(metric, FiniteMetric) else FiniteMetric(metric)


def optimal_transport(mu, nu, metric) -> TransportResult:
    """Optimal plan between two measures on the same finite metric space.

    Only the signed difference ``mu - nu`` matters for W1, so the LP moves the
    surplus ``(mu - nu)+`` onto the deficit ``(mu - nu)-`` after scaling both
    to unit mass; solver tolerances then act relative to the distance instead
    of absolutely.  The shared mass stays in place in the returned plan.
    """
    metric = _as_metric(metric)
    mu = check_simplex(np.asarray(mu, dtype=float), tol=1e-10)
    nu = check_simplex(np.asarray(nu, dtype=float), tol=1e-10)
    if len(mu) != metric.d or len(nu) != metric.d:
        raise InputError("measures and metric live on different spaces")
    diff = mu - nu
    surplus, deficit = np.clip(diff, 0, None), np.clip(-diff, 0, None)
    mass = min(surplus.sum(), deficit.sum())
    plan = np.diag(np.minimum(mu, nu))
    if mass <= 0:
        return TransportResult(0.0, plan, np.zeros(metric.d), 0.0)
    src, dst = np.flatnonzero(surplus > 0), np.flatnonzero(deficit > 0)
    a, b = surplus[src] / surplus.sum(), deficit[dst] / deficit.sum()
    m, n = len(src), len(dst)
    cost = metric.dist[np.ix_(src, dst)]
    # equality rows: plan row sums = a, column sums = b (last one is redundant)
    A = np.zeros((m + n - 1, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1
    for j in range(n - 1):
        A[m + j, j::n] = 1
    rhs = np.concatenate([a, b[:-1]])
    res = optimize.linprog(cost.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method="highs",
                           options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise MFMDPError(f"transport LP failed: {res.message}", code="transport.lp")
    x = np.clip(res.x, 0, None)
    plan[np.ix_(src, dst)] += mass * x.reshape(m, n)
    value = mass * float(cost.ravel() @ x)

    u = res.eqlin.marginals[:m]
    v = np.zeros(n)
    v[:-1] = res.eqlin.marginals[m:]
    # c-transform of the column duals: 1-Lipschitz and dominates the LP dual
    potential = np.min(metric.dist[:, dst] - v[None, :], axis=1)
    dual = float(potential @ diff)
    alt = -np.min(metric.dist[:, src] - u[None, :], axis=1)
    alt_dual = float(alt @ diff)
    if alt_dual > dual:
        potential, dual = alt, alt_dual
    return TransportResult(value, plan, potential, dual)


def wasserstein_finite(mu, nu, metric) -> float:
    """Exact W1 between two measures on a finite metric space."""
    return optimal_transport(mu, nu, metric).value


@dataclass(frozen=True)
class AtomMeasure:
    """Finitely many atoms on [0, 1]; equal positions are merged and sorted."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if pos.shape != w.shape or pos.size == 0:
            raise InputError("need one weight per atom")
        if np.any(pos < 0) or np.any(pos > 1):
            raise InputError("atoms must lie in [0, 1]")
        check_simplex(w, tol=1e-9, name="atom weights")
        keep = w > 0
        uniq, inv = np.unique(pos[keep], return_inverse=True)
        merged = np.bincount(inv, weights=w[keep])
        object.__setattr__(self, "positions", uniq)
        object.__setattr__(self, "weights", merged / merged.sum())

    @property
    def mean(self) -> float:
        return float(self.positions @ self.weights)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def point(cls, x: float) -> "AtomMeasure":
        return cls([x], [1.0])

    @classmethod
    def read(cls, path) -> "AtomMeasure":
        data = np.loadtxt(path, comments="#", ndmin=2)
        return cls(data[:, 0], data[:, 1])

    def write(self, path) -> None:
        np.savetxt(path, np.column_stack([self.positions, self.weights]), fmt="%.17g",
                   header="position weight")


def wasserstein_1d(mu: AtomMeasure, nu: AtomMeasure) -> float:
    """W1 on the line: the integral of |F_mu - F_nu| over the merged atom positions."""
    return float(stats.wasserstein_distance(mu.positions, nu.positions, mu.weights, nu.weights))


@dataclass
class ErgodicityReport:
    C: float
    rho: float
    table: np.ndarray
    ergodic: bool
    geometric: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "kappa_n", "fitted_C", "fitted_rho"])
            for n, k in enumerate(self.table, start=1):
                w.writerow([n, repr(float(k)), repr(self.C), repr(self.rho)])


def ergodicity_estimate(P, metric, n_max: int, floor: float = 1e-13) -> ErgodicityReport:
    """Contraction coefficients ``max_{x != y} W(P^n(x), P^n(y)) / d(x, y)`` for ``n <= n_max``.

    ``log kappa_n`` is fitted linearly in ``n`` over the entries above ``floor``.
    The chain is reported ergodic when some ``kappa_n < 1`` and geometric when
    the fitted rate is below 1 and the table never increases.
    """
    metric = _as_metric(metric)
    P = np.asarray(P, dtype=float)
    if P.shape != (metric.d, metric.d) or np.any(P < -1e-12) or np.any(np.abs(P.sum(1) - 1) > 1e-10):
        raise InputError("P must be a row-stochastic matrix on the metric's points")
    d = metric.d
    pairs = [(x, y) for x in range(d) for y in range(x + 1, d)]
    table = np.zeros(n_max)
    Pn = np.eye(d)
    for n in range(n_max):
        Pn = Pn @ P
        Pn = np.clip(Pn, 0, None)
        Pn /= Pn.sum(axis=1, keepdims=True)
        table[n] = max(
            (wasserstein_finite(Pn[x], Pn[y], metric) / metric.dist[x, y] for x, y in pairs),
            default=0.0,
        )
    n_idx = np.arange(1, n_max + 1)
    ok = table > floor
    if ok.sum() >= 2:
        slope, intercept = np.polyfit(n_idx[ok], np.log(table[ok]), 1)
        rho, C = float(math.exp(slope)), float(math.exp(intercept))
    elif ok.sum() == 1:
        rho, C = 0.0, float(table[ok][0])
    else:
        rho, C = 0.0, 0.0
    monotone = bool(np.all(np.diff(table) <= 1e-12))
    ergodic = bool(np.any(table < 1 - 1e-12))
    return ErgodicityReport(C, rho, table, ergodic, ergodic and monotone and rho < 1)


@dataclass(frozen=True)
class LinearMFModel:
    """``T(x, a, mu, z) = gs x + ga a + gw mean(mu) + z`` on [0, 1] with actions {0, 1}.

    The policy plays action 1 with probability ``gq x``, so ``x -> Qbar(.|x)``
    is ``gq``-Lipschitz in W1.  Noise ``z`` takes finitely many values.
    """

    gamma_s: float
    gamma_a: float
    gamma_w: float
    gamma_q: float
    noise: AtomMeasure = field(default_factory=lambda: AtomMeasure([0.0, 0.1, 0.2, 0.3], [0.25] * 4))

    def __post_init__(self):
        for name in ("gamma_s", "gamma_a", "gamma_w", "gamma_q"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be non-negative")
        if self.gamma_q > 1:
            raise InputError("gamma_q > 1 would give negative action probabilities")
        top = self.gamma_s + self.gamma_a + self.gamma_w + self.noise.positions.max()
        if top > 1 + 1e-12:
            raise InputError(f"states can reach {top:.6g} > 1; parameters violate the no-clamp contract")

    @property
    def gamma(self) -> float:
        return self.gamma_w + self.gamma_q * self.gamma_a + self.gamma_s

    def step_atoms(self, pos: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact pushforward of an atom list (unmerged)."""
        mean = float(pos @ w)
        p1 = self.gamma_q * pos
        base = self.gamma_s * pos + self.gamma_w * mean
        new_pos = (base[:, None, None] + self.gamma_a * np.array([0.0, 1.0])[None, :, None]
                   + self.noise.positions[None, None, :])
        new_w = (w[:, None, None] * np.stack([1 - p1, p1], axis=1)[:, :, None]
                 * self.noise.weights[None, None, :])
        return new_pos.ravel(), new_w.ravel()


class UnitGrid:
    """Uniform grid on [0, 1]; off-grid mass is split linearly between the two neighbours.

    The split keeps the mean and moves ``x`` and ``y`` to measures at W1
    distance at most ``|x - y|``, so it never expands distances.
    """

    def __init__(self, points: int = 4097):
        if points < 2:
            raise InputError("grid needs at least two points")
        self.n = points
        self.h = 1.0 / (points - 1)
        self.x = np.linspace(0.0, 1.0, points)

    def project(self, pos: np.ndarray, w: np.ndarray) -> np.ndarray:
        t = np.clip(np.asarray(pos, dtype=float), 0.0, 1.0) / self.h
        lo = np.minimum(np.floor(t).astype(int), self.n - 2)
        frac = t - lo
        out = np.bincount(lo, weights=w * (1 - frac), minlength=self.n)
        out += np.bincount(lo + 1, weights=w * frac, minlength=self.n)
        return out

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        """W1 between two weight vectors on the grid: ``h * sum |F_a - F_b|``."""
        return float(self.h * np.abs(np.cumsum(a - b)[:-1]).sum())


@dataclass
class ContractionReport:
    gamma: float
    distances: np.ndarray
    ratios: np.ndarray
    floor: float

    @property
    def max_ratio(self) -> float:
        valid = self.ratios[~np.isnan(self.ratios)]
        return float(valid.max()) if valid.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.gamma + 1e-9


def _check_inside(pos: np.ndarray):
    if pos.size and (pos.min() < -1e-12 or pos.max() > 1 + 1e-12):
        raise InputError("trajectory left [0, 1]; the model parameters allow clamping")


def stationary_measure(model: LinearMFModel, grid: UnitGrid, tol: float = 1e-12,
                       max_iter: int = 10_000) -> np.ndarray:
    """Fixed point of the projected pushforward.

    Iterates until successive W1 < ``tol`` and then on until the step stops
    shrinking, so the result is as close to the fixed point as rounding allows.
    """
    w = grid.project(np.array([0.5]), np.array([1.0]))
    last = math.inf
    for _ in range(max_iter):
        new = grid.project(*model.step_atoms(grid.x, w))
        step = grid.distance(new, w)
        if step < tol and (step == 0 or step >= last):
            return new
        w, last = new, step
    raise MFMDPError("stationary measure iteration did not converge", code="transport.stationary")


def contraction_check(model: LinearMFModel, mu0: AtomMeasure, steps: int, grid: UnitGrid | None = None,
                      mu_star: np.ndarray | None = None, floor: float = 1e-6,
                      strict: bool = True) -> ContractionReport:
    """Ratios ``W(mu_{k+1}, mu*) / W(mu_k, mu*)`` along the flow from ``mu0``.

    Measures live on ``grid`` (the start is projected onto it).  Ratios whose
    denominator is below ``floor`` are reported as NaN: distances carry an
    absolute rounding error near 1e-16, so below 1e-6 a ratio can no longer
    be resolved to 1e-9.  With ``strict`` a ratio
    above ``gamma + 1e-9`` raises.
    """
    grid = grid or UnitGrid()
    if mu_star is None:
        mu_star = stationary_measure(model, grid)
    _check_inside(mu0.positions)
    w = grid.project(mu0.positions, mu0.weights)
    dist = [grid.distance(w, mu_star)]
    for _ in range(steps):
        pos, wt = model.step_atoms(grid.x, w)
        _check_inside(pos[wt > 0])
        w = grid.project(pos, wt)
        dist.append(grid.distance(w, mu_star))
    dist = np.asarray(dist)
    ratios = np.full(steps, np.nan)
    for k in range(steps):
        if dist[k] >= floor:
            ratios[k] = dist[k + 1] / dist[k]
    report = ContractionReport(model.gamma, dist, ratios, floor)
    if strict and not report.passed:
        raise MFMDPError(f"observed ratio {report.max_ratio:.12g} exceeds gamma = {model.gamma:.12g}",
                         code="transport.contraction")
    return report


def propagate_exact(model: LinearMFModel, mu0: AtomMeasure, steps: int,
                    max_atoms: int = 200_000) -> list[AtomMeasure]:
    """Exact atom-list trajectory (no grid); atoms multiply by ``2 |Z|`` per step."""
    out = [mu0]
    pos, w = mu0.positions, mu0.weights
    for _ in range(steps):
        pos, w = model.step_atoms(pos, w)
        keep = w > 0
        pos, w = pos[keep], w[keep]
        _check_inside(pos)
        uniq, inv = np.unique(np.round(pos, 15), return_inverse=True)
        pos, w = uniq, np.bincount(inv, weights=w)
        if len(pos) > max_atoms:
            raise CapacityError(f"exact propagation needs {len(pos)} atoms (cap {max_atoms})")
        out.append(AtomMeasure(np.clip(pos, 0, 1), w))
    return out


def write_table(path, header, rows) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
