"""Static optimization over the probability simplex.

The central engine maximizes ``mu H mu^T + c . mu`` exactly by enumerating
supports: on each face the stationarity system ``2 H_FF mu_F + c_F = lam 1``,
``sum mu_F = 1`` is solved and feasible candidates are compared.  Faces
whose bordered system is singular are skipped; along their null direction
the objective is affine, so their maximum is attained on a smaller face.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import sympy

from .core import AdmissibleActions, ConditionalPolicy, _is_exact, check_simplex, validate_distance
from .errors import InfeasibleError, InputError

EXACT_MAX_D = 16
KKT_TOL = 1e-9


@dataclass
class StaticSolution:
    mu: np.ndarray
    value: object
    certificate: list = field(default_factory=list)
    method: str = ""
    alternatives: list = field(default_factory=list)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(np.asarray(self.mu, dtype=float) > 0))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["state", "weight", "in_support", "gradient_residual"])
            resid = {}
            for rec in self.certificate:
                if "residuals" in rec:
                    resid = rec["residuals"]
            for x, v in enumerate(self.mu):
                w.writerow([x, str(v) if isinstance(v, Fraction) else repr(float(v)),
                            int(x in self.support), repr(float(resid.get(x, 0.0)))])
            w.writerow(["value", str(self.value) if isinstance(self.value, Fraction) else repr(float(self.value)), "", ""])


def evaluate_spread(mu, dist) -> object:
    """``mu Delta mu^T``; exact when both arguments hold Fractions."""
    if _is_exact(mu) and _is_exact(dist):
        m = np.array([Fraction(v) for v in mu], dtype=object)
        D = np.asarray(dist, dtype=object)
        return sum(m[i] * D[i, j] * m[j] for i in range(len(m)) for j in range(len(m)))
    m = np.asarray(mu, dtype=float)
    return float(m @ np.asarray(dist, dtype=float) @ m)


def _quadratic(H, c, mu):
    return float(mu @ H @ mu + c @ mu)


def _kkt_residuals(H, c, mu, support, tol=KKT_TOL):
    """Gradient residuals relative to the support level; off-support entries must be <= 0."""
    g = 2 * H @ mu + c
    lam = float(np.mean(g[list(support)]))
    res = {int(x): float(g[x] - lam) for x in range(len(mu))}
    on = max((abs(res[x]) for x in support), default=0.0)
    off = max((res[x] for x in range(len(mu)) if x not in support), default=-math.inf)
    return res, on <= tol and off <= tol


def maximize_quadratic(H, c=None, tol: float = KKT_TOL) -> StaticSolution:
    """Global maximum of ``mu H mu^T + c . mu`` over the simplex by support enumeration."""
    H = np.asarray(H, dtype=float)
    d = H.shape[0]
    if H.shape != (d, d):
        raise InputError("quadratic form must be square")
    if d > EXACT_MAX_D:
        raise InputError(f"support enumeration is limited to d <= {EXACT_MAX_D}")
    H = (H + H.T) / 2
    c = np.zeros(d) if c is None else np.asarray(c, dtype=float)
    best, candidates, skipped = -math.inf, [], []
    for size in range(1, d + 1):
        for F in itertools.combinations(range(d), size):
            idx = list(F)
            K = np.zeros((size + 1, size + 1))
            K[:size, :size] = 2 * H[np.ix_(idx, idx)]
            K[:size, size] = -1
            K[size, :size] = 1
            rhs = np.concatenate([-c[idx], [1.0]])
            try:
                if np.linalg.cond(K) > 1e12:
                    raise np.linalg.LinAlgError
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                skipped.append(F)
                continue
            muF = sol[:size]
            if np.any(muF < -1e-12):
                continue
            mu = np.zeros(d)
            mu[idx] = np.clip(muF, 0, None)
            mu /= mu.sum()
            val = _quadratic(H, c, mu)
            candidates.append((val, F, mu))
            best = max(best, val)
    winners = [(F, mu) for val, F, mu in candidates if val >= best - tol]
    F, mu = winners[0]
    support = tuple(int(i) for i in np.flatnonzero(mu > 1e-15))
    res, ok = _kkt_residuals(H, c, mu, support, tol)
    cert = [{"faces": 2**d - 1, "singular_faces": len(skipped), "candidates": len(candidates)},
            {"support": support, "residuals": res, "kkt_ok": ok}]
    alts = []
    for _, m in winners:
        if not any(np.allclose(m, a, atol=1e-9) for a in alts):
            alts.append(m)
    return StaticSolution(mu, _quadratic(H, c, mu), cert, "support-enumeration", alts)


def _exact_face_solution(H, c, support):
    """Solve the stationarity system on ``support`` in rationals."""
    idx = list(support)
    n = len(idx)
    K = sympy.zeros(n + 1, n + 1)
    rhs = sympy.zeros(n + 1, 1)
    for i, x in enumerate(idx):
        for j, y in enumerate(idx):
            K[i, j] = 2 * sympy.Rational(H[x, y])
        K[i, n] = -1
        K[n, i] = 1
        rhs[i] = -sympy.Rational(c[x])
    rhs[n] = 1
    sol = K.LUsolve(rhs)
    return [Fraction(int(v.p), int(v.q)) for v in sol]


def _to_fraction_matrix(M) -> np.ndarray:
    arr = np.asarray(M, dtype=object)
    return np.array([[Fraction(str(v)) if isinstance(v, float) else Fraction(v) for v in row] for row in arr],
                    dtype=object)


def maximize_quadratic_exact(H, c=None) -> StaticSolution:
    """Rational version: locate the optimal face in floats, then solve and certify it exactly."""
    Hq = _to_fraction_matrix(H)
    d = Hq.shape[0]
    cq = np.array([Fraction(0)] * d if c is None else [Fraction(v) if not isinstance(v, float) else Fraction(str(v))
                                                       for v in c], dtype=object)
    approx = maximize_quadratic(Hq.astype(float), cq.astype(float))
    sol = _exact_face_solution(Hq, cq, approx.support)
    mu = np.array([Fraction(0)] * d, dtype=object)
    for x, v in zip(approx.support, sol[:-1]):
        mu[x] = v
    lam = sol[-1]
    g = [2 * sum(Hq[x, y] * mu[y] for y in range(d)) + cq[x] for x in range(d)]
    ok = all(v >= 0 for v in mu) and all(g[x] == lam for x in approx.support) and all(
        g[x] <= lam for x in range(d) if x not in approx.support)
    if not ok:
        raise InfeasibleError("exact face solution fails the optimality certificate")
    value = sum(mu[x] * Hq[x, y] * mu[y] for x in range(d) for y in range(d)) + sum(cq * mu)
    cert = approx.certificate + [{"exact": True, "multiplier": lam,
                                  "residuals": {x: g[x] - lam for x in range(d)}, "kkt_ok": ok}]
    return StaticSolution(mu, value, cert, "support-enumeration-exact", [mu])


def maximize_spread(dist, exact: bool | None = None, starts: int = 64, seed: int = 0) -> StaticSolution:
    """Maximize ``mu Delta mu^T`` over the simplex.

    Exact support enumeration up to 16 states; Fraction input (or ``exact=True``)
    returns a rational, certified answer.  Larger problems fall back to
    multi-start projected gradient and are flagged as uncertified.
    """
    D = validate_distance(dist)
    d = D.shape[0]
    if exact is None:
        exact = D.dtype == object
    if d > EXACT_MAX_D:
        Df = np.asarray(D, dtype=float)
        sol = maximize_static(lambda m: float(m @ Df @ m), d, starts=starts, seed=seed,
                              gradient=lambda m: 2 * Df @ m)
        sol.method = "projected-gradient (uncertified)"
        return sol
    if exact:
        return maximize_quadratic_exact(D)
    return maximize_quadratic(np.asarray(D, dtype=float))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _fd_gradient(f, mu, h=1e-7):
    g = np.zeros_like(mu)
    for i in range(len(mu)):
        e = np.zeros_like(mu)
        e[i] = h
        g[i] = (f(mu + e) - f(mu - e)) / (2 * h)
    return g


def _ascend(f, grad, mu, iters, tol):
    val = f(mu)
    step = 1.0
    for _ in range(iters):
        g = grad(mu)
        moved = False
        while step > 1e-14:
            cand = project_simplex(mu + step * g)
            cval = f(cand)
            if cval > val + 1e-16:
                moved = True
                break
            step /= 2
        if not moved:
            break
        shift = np.abs(cand - mu).sum()
        mu, val = cand, cval
        step *= 2
        if shift < tol:
            break
    return mu, val


def _polish(f, mu, val, min_step=1e-12):
    """Pairwise mass transfers with shrinking step: handles kinks at the simplex boundary."""
    d = len(mu)
    step = 0.05
    while step >= min_step:
        improved = False
        for i in range(d):
            for j in range(d):
                if i == j or mu[j] <= 0:
                    continue
                t = min(step, mu[j])
                cand = mu.copy()
                cand[i] += t
                cand[j] -= t
                cval = f(cand)
                if cval > val + 1e-16:
                    mu, val, improved = cand, cval, True
        if not improved:
            step /= 2
    return mu, val


def maximize_static(objective: Callable[[np.ndarray], float], d: int, starts: int = 32, seed: int = 0,
                    iters: int = 2000, gradient: Callable | None = None, polish: bool = True) -> StaticSolution:
    """Heuristic maximization of an arbitrary continuous objective over the simplex.

    Starts are every vertex, the barycenter and ``starts`` Dirichlet draws;
    each runs projected gradient ascent with backtracking, then a pairwise
    transfer polish.  The best point is returned with the search log; there
    is no global certificate.
    """
    f = lambda m: float(objective(m))
    grad = gradient or (lambda m: _fd_gradient(f, m))
    rng = np.random.default_rng(seed)
    inits = [np.eye(d)[i] for i in range(d)] + [np.full(d, 1.0 / d)]
    inits += list(rng.dirichlet(np.ones(d), size=starts))
    log = []
    best_mu, best_val = None, -math.inf
    for k, mu0 in enumerate(inits):
        mu, val = _ascend(f, grad, mu0, iters, 1e-13)
        if polish:
            mu, val = _polish(f, mu, val)
        log.append({"start": k, "value": val})
        if val > best_val:
            best_mu, best_val = mu, val
    return StaticSolution(best_mu, best_val, log, "projected-gradient", [best_mu])


@dataclass(frozen=True)
class RectangleMarket:
    """Axis-aligned rectangle with corners B (low-left), C (low-right), D (up-left), E (up-right) and vendor A."""

    B: tuple
    C: tuple
    D: tuple
    E: tuple
    A: tuple

    def __post_init__(self):
        B, C, D, E, A = (tuple(_num(v) for v in p) for p in (self.B, self.C, self.D, self.E, self.A))
        for name, p in zip("BCDEA", (B, C, D, E, A)):
            if len(p) != 2:
                raise InputError(f"corner {name} needs two coordinates")
        if not (B[0] == D[0] and C[0] == E[0] and B[1] == C[1] and D[1] == E[1]):
            raise InputError("BCED must be an axis-aligned rectangle")
        if not (B[0] < C[0] and B[1] < D[1]):
            raise InputError("degenerate rectangle: need B1 < C1 and B2 < D2")
        for name, p in zip("BCDEA", (B, C, D, E, A)):
            object.__setattr__(self, name, p)
        if not (B[0] <= A[0] <= C[0] and B[1] <= A[1] <= D[1]):
            warnings.warn("vendor lies outside the rectangle", RuntimeWarning)

    def corners(self) -> list[tuple]:
        return [self.B, self.C, self.D, self.E]


def _num(v):
    if isinstance(v, (Fraction, int)):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(str(v))


def _clamped(p, axis):
    if p < 0 or p > 1:
        warnings.warn(f"mass on the low end of axis {axis} is {float(p):.4g}; clamped to [0, 1]", RuntimeWarning)
        return min(max(p, Fraction(0)), Fraction(1))
    return p


def market_objective(points, weights, vendor) -> float:
    """Mean squared pairwise distance minus mean squared distance to the vendor."""
    X = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    A = np.asarray(vendor, dtype=float)
    sq = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    return float(w @ sq @ w - w @ ((X - A) ** 2).sum(-1))


def market_objective_exact(points, weights, vendor) -> Fraction:
    total = Fraction(0)
    for p, wp in zip(points, weights):
        total -= wp * sum((pi - ai) ** 2 for pi, ai in zip(p, vendor))
        for q, wq in zip(points, weights):
            total += wp * wq * sum((pi - qi) ** 2 for pi, qi in zip(p, q))
    return total


def market_place_solution(m: RectangleMarket) -> StaticSolution:
    """Optimal corner masses: independent two-point margins with low-end masses ``p_x``, ``p_y``."""
    px = _clamped(Fraction(1, 4) + (m.C[0] - m.A[0]) / (2 * (m.C[0] - m.B[0])), 1)
    py = _clamped(Fraction(1, 4) + (m.D[1] - m.A[1]) / (2 * (m.D[1] - m.B[1])), 2)
    mu = np.array([px * py, (1 - px) * py, px * (1 - py), (1 - px) * (1 - py)], dtype=object)
    value = market_objective_exact(m.corners(), mu, m.A)
    cert = [{"p_x": px, "p_y": py, "corners": "B C D E"}]
    return StaticSolution(mu, value, cert, "closed-form", [mu])


@dataclass(frozen=True)
class CommonNoiseSpec:
    """Finite law of the intent probability ``alpha`` and the common degree ``gamma = |D(x)|``."""

    alphas: tuple
    probs: tuple
    gamma: int

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        probs = tuple(check_simplex(list(self.probs), name="alpha probabilities").astype(float).tolist())
        if len(alphas) != len(probs) or not alphas:
            raise InputError("need one probability per alpha value")
        if any(not 0 <= a <= 1 for a in alphas):
            raise InputError("alpha values must lie in [0, 1]")
        if int(self.gamma) != self.gamma or self.gamma < 2:
            raise InputError("gamma must be an integer >= 2")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "gamma", int(self.gamma))

    def moments(self) -> tuple[float, float, float]:
        a, p, g = np.asarray(self.alphas), np.asarray(self.probs), self.gamma
        m1 = float(p @ (1 - a) ** 2)
        m2 = float(p @ ((1 - a) * (a * g - 1)))
        m3 = float(p @ (a * g - 1) ** 2)
        return m1, m2, m3


@dataclass
class CommonNoiseSolution:
    nu: np.ndarray
    value: float
    reduced_value: float
    moments: tuple
    degenerate: bool
    solution: StaticSolution


def expected_next_spread(nu, dist, spec: CommonNoiseSpec) -> float:
    """``E[mu' Delta mu'^T]`` when the intended next law (``mu Qbar``) is ``nu``."""
    m1, m2, m3 = spec.moments()
    D = np.asarray(dist, dtype=float)
    e = np.ones(D.shape[0])
    nu = np.asarray(nu, dtype=float)
    return (m1 * e @ D @ e + 2 * m2 * e @ D @ nu + m3 * nu @ D @ nu) / (spec.gamma - 1) ** 2


def optimize_common_noise(dist, spec: CommonNoiseSpec) -> CommonNoiseSolution:
    """Best intended law ``nu`` under random intent probabilities.

    Maximizes ``2 m2 (e Delta nu) + m3 nu Delta nu`` with the support-enumeration
    engine.  When both coefficients vanish every ``nu`` is optimal; the vertex
    maximizing ``e Delta nu`` is returned and the result is marked degenerate.
    """
    D = np.asarray(validate_distance(dist), dtype=float)
    m1, m2, m3 = spec.moments()
    colsum = D.sum(axis=0)
    degenerate = abs(m2) < 1e-15 and abs(m3) < 1e-15
    if degenerate:
        nu = np.zeros(len(D))
        nu[int(np.argmax(colsum))] = 1.0
        sol = StaticSolution(nu, 0.0, [{"degenerate": True}], "constant-objective", [nu])
    else:
        sol = maximize_quadratic(m3 * D, 2 * m2 * colsum)
        nu = sol.mu
    reduced = 2 * m2 * float(colsum @ nu) + m3 * float(nu @ D @ nu)
    return CommonNoiseSolution(nu, expected_next_spread(nu, D, spec), reduced, (m1, m2, m3), degenerate, sol)


def complete_graph_policy(nu, actions: AdmissibleActions | None = None) -> ConditionalPolicy:
    """Every row equal to ``nu``, so that ``mu Qbar = nu`` for every ``mu``."""
    nu = check_simplex(nu, tol=1e-10)
    d = len(nu)
    if actions is not None and not actions.is_complete():
        raise InfeasibleError("identical-row policies need a complete graph (every D(x) = S)")
    rows = np.tile(nu, (d, 1)) if nu.dtype != object else np.array([list(nu)] * d, dtype=object)
    return ConditionalPolicy(rows, actions)


def common_noise_reward(mu, policy: ConditionalPolicy, dist, spec: CommonNoiseSpec) -> float:
    """One-step expected spread after playing ``policy`` from ``mu``."""
    nu = np.asarray(mu, dtype=float) @ np.asarray(policy.rows, dtype=float)
    return expected_next_spread(nu, dist, spec)
