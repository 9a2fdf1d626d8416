"""Command-line front end: ``mfmdp validate`` and ``mfmdp run`` on JSON experiment configs."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import metadata, resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy
import sympy

from . import meanfield, metropolis, nagent, staticopt, transport
from .core import (
    AdmissibleActions,
    AlphaIntentTransition,
    CommonNoise,
    ConditionalPolicy,
    DiscountSpec,
    IndicatorReward,
    SpreadReward,
    TabularReward,
    TabularTransition,
    adjacency_from_edges,
    check_simplex,
    format_matrix,
    grid_adjacency,
    point_mass,
    read_edge_list,
    read_matrix,
    validate_distance,
)
from .errors import ConfigError, InfeasibleError, MFMDPError
from .instances import hop_distance, triangle_model

log = logging.getLogger("mfmdp")

TASK_REQUIREMENTS = {
    "solve-static": [],
    "build-policy": ["model.graph", "model.transition"],
    "simulate-agents": ["model.graph", "model.transition", "parameters.N", "parameters.horizon"],
    "flow": ["model.transition", "model.reward", "parameters.steps"],
    "value-iterate": ["task.solver", "model.transition", "model.reward", "parameters.beta"],
    "average-reward": ["model.transition", "model.reward", "parameters.steps"],
    "tauber": ["model.transition", "model.reward", "parameters.betas"],
    "contraction-check": ["model.linear", "parameters.steps"],
    "common-noise": ["model.distance", "model.common_noise"],
}


def _schema() -> dict:
    return json.loads(resources.files("mfmdp").joinpath("schema.json").read_text())


def _get(cfg: dict, dotted: str, default=None):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _require(cfg: dict, dotted: str):
    value = _get(cfg, dotted)
    if value is None:
        raise ConfigError(f"missing required field {dotted}", field=dotted)
    return value


def parse_number(value, exact: bool = False):
    """Numbers may be written as JSON numbers or ``"p/q"`` strings; strings stay exact."""
    if isinstance(value, str):
        return Fraction(value.replace(" ", ""))
    if exact or isinstance(value, int) and not isinstance(value, bool):
        return Fraction(repr(value)) if isinstance(value, float) else Fraction(value)
    return float(value)


def _vector(values, exact=False):
    vals = [parse_number(v, exact) for v in values]
    if any(isinstance(v, Fraction) for v in vals) and all(isinstance(v, Fraction) for v in vals):
        return np.array(vals, dtype=object)
    return np.array([float(v) for v in vals])


@dataclass
class Model:
    d: int
    adjacency: np.ndarray | None = None
    actions: AdmissibleActions | None = None
    dist: np.ndarray | None = None
    transition: object = None
    reward: object = None
    noise: CommonNoise | None = None
    inputs: list = field(default_factory=list)


def _resolve(base: Path, name: str, inputs: list) -> Path:
    path = (base / name).resolve()
    if not path.exists():
        raise ConfigError(f"referenced file {name} does not exist", field="file")
    inputs.append(path)
    return path


def build_model(cfg: dict, base: Path) -> Model:
    spec = cfg.get("model", {})
    inputs: list = []
    adjacency = None
    graph = spec.get("graph")
    if graph:
        kind = graph["kind"]
        if kind == "grid":
            if "rows" not in graph or "cols" not in graph:
                raise ConfigError("grid graph needs rows and cols", field="model.graph.rows")
            adjacency = grid_adjacency(graph["rows"], graph["cols"])
        elif kind == "edges":
            n = spec.get("states")
            if "file" in graph:
                adjacency = read_edge_list(_resolve(base, graph["file"], inputs), n)
            elif "edges" in graph:
                adjacency = adjacency_from_edges(graph["edges"], n)
            else:
                raise ConfigError("edge graph needs edges or file", field="model.graph.edges")
        else:
            n = spec.get("states")
            if n is None:
                raise ConfigError("complete graph needs model.states", field="model.states")
            adjacency = ~np.eye(n, dtype=bool)
    d = spec.get("states") or (adjacency.shape[0] if adjacency is not None else None)

    dist = None
    dspec = spec.get("distance")
    if dspec:
        if dspec["kind"] == "hops":
            if not graph or graph["kind"] != "grid":
                raise ConfigError("hop distances need a grid graph", field="model.distance.kind")
            hops = [parse_number(v) for v in _require(cfg, "model.distance.by_hops")]
            if not all(isinstance(v, Fraction) for v in hops):
                hops = [float(v) for v in hops]
            dist = hop_distance(graph["rows"], graph["cols"], hops)
        else:
            if "file" in dspec:
                dist = read_matrix(_resolve(base, dspec["file"], inputs))
            else:
                rows = [_vector(r) for r in _require(cfg, "model.distance.matrix")]
                exact = all(r.dtype == object for r in rows)
                dist = np.array([list(r) for r in rows], dtype=object if exact else float)
        dist = validate_distance(dist)
        d = d or dist.shape[0]

    noise = None
    nspec = spec.get("common_noise")
    if nspec:
        alphas = [float(parse_number(a)) for a in nspec["alphas"]]
        probs = [float(parse_number(p)) for p in nspec["probs"]]
        noise = CommonNoise(tuple(alphas), tuple(probs))

    model = Model(d or 0, adjacency, None, dist, None, None, noise, inputs)
    tspec = spec.get("transition")
    if tspec:
        kind = tspec["kind"]
        if kind == "triangle":
            actions, T, reward = triangle_model(float(parse_number(tspec.get("move_prob", 0.5))))
            model.d, model.actions, model.transition = 3, actions, T
            model.reward = reward
        elif kind == "alpha_intent":
            if adjacency is None:
                raise ConfigError("alpha-intent moves need a graph", field="model.graph")
            model.actions = AdmissibleActions.from_adjacency(adjacency)
            alpha = parse_number(tspec.get("alpha", 1))
            model.transition = AlphaIntentTransition(float(alpha), model.actions, noise)
        else:
            p = np.asarray(_require(cfg, "model.transition.p"), dtype=float)
            T = TabularTransition(p, noise)
            model.transition = T
            model.d = T.d
            model.actions = AdmissibleActions.full(T.d, T.m)
    rspec = spec.get("reward")
    if rspec:
        kind = rspec["kind"]
        m = model.actions.m if model.actions is not None else model.d
        if kind == "spread":
            if dist is None:
                raise ConfigError("spread reward needs model.distance", field="model.distance")
            model.reward = SpreadReward(np.asarray(dist, dtype=float), m)
        elif kind == "indicator":
            model.reward = IndicatorReward(model.d, m, target=rspec.get("target", 0), radius=rspec.get("radius", 0.5))
        elif kind == "zero":
            model.reward = TabularReward(np.zeros((model.d, m)), bound=0.0)
        else:
            model.reward = TabularReward(np.asarray(_require(cfg, "model.reward.r"), dtype=float))
    return model


def validate_config(cfg: dict, base: Path) -> Model:
    """Schema, task-specific fields and feasibility premises; no computation."""
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ConfigError(f"schema violation at {where}: {exc.message}", field=where) from None
    kind = cfg["task"]["kind"]
    for dotted in TASK_REQUIREMENTS[kind]:
        _require(cfg, dotted)
    solver = _get(cfg, "task.solver")
    if kind == "value-iterate":
        if solver in ("product", "empirical", "equivalence"):
            _require(cfg, "parameters.N")
        if solver == "limit":
            _require(cfg, "parameters.grid_resolution")
    if kind == "solve-static" and not (_get(cfg, "model.market") or _get(cfg, "model.distance")):
        raise ConfigError("solve-static needs model.market or model.distance", field="model.distance")
    try:
        model = build_model(cfg, base)
    except ConfigError:
        raise
    except MFMDPError as exc:
        raise ConfigError(str(exc), field="model") from None
    needs_policy = kind in ("build-policy", "simulate-agents") or (
        kind in ("flow", "average-reward", "tauber") and _get(cfg, "task.policy", "metropolis") == "metropolis"
        and model.adjacency is not None)
    if needs_policy:
        if model.adjacency is None:
            raise ConfigError("a graph is required to build the policy", field="model.graph")
        if not metropolis.is_connected(model.adjacency):
            raise InfeasibleError("graph is not connected; a positive stationary law cannot be reached",
                                  code="metropolis.disconnected")
        if model.dist is None and _get(cfg, "parameters.mu_star") is None:
            raise ConfigError("policy construction needs model.distance or parameters.mu_star",
                              field="model.distance")
    return model


@dataclass
class RunContext:
    cfg: dict
    config_path: Path
    out: Path
    seed: int
    threads: int
    model: Model
    written: list = field(default_factory=list)

    @property
    def prefix(self) -> str:
        return _get(self.cfg, "outputs.prefix", "")

    def param(self, name, default=None):
        return _get(self.cfg, f"parameters.{name}", default)

    def path(self, name: str) -> Path:
        return self.out / f"{self.prefix}{name}"

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.path(name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        return self._finish(path)

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.write_text(text)
        return self._finish(path)

    def adopt(self, name: str) -> Path:
        """Register a file written by a module exporter."""
        return self._finish(self.path(name))

    def _finish(self, path: Path) -> Path:
        write_manifest(path, self)
        self.written.append(path)
        return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(path: Path, ctx: RunContext) -> None:
    manifest = {
        "output": path.name,
        "output_sha256": _sha256(path),
        "config": str(ctx.config_path),
        "config_sha256": _sha256(ctx.config_path),
        "inputs": {str(p): _sha256(p) for p in ctx.model.inputs},
        "task": ctx.cfg["task"],
        "seed": ctx.seed,
        "threads": ctx.threads,
        "versions": {
            "mfmdp": _version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "sympy": sympy.__version__,
        },
    }
    path.with_name(path.name + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    return str(v) if isinstance(v, Fraction) else repr(float(v))


def _initial_measure(ctx: RunContext):
    mu0 = ctx.param("mu0")
    if mu0 is not None:
        return check_simplex(_vector(mu0))
    return point_mass(ctx.model.d, ctx.param("initial_state", 0))


def _static_optimum(ctx: RunContext):
    given = ctx.param("mu_star")
    if given is not None:
        return check_simplex(_vector(given))
    exact = ctx.param("exact", ctx.model.dist.dtype == object)
    return staticopt.maximize_spread(ctx.model.dist, exact=exact).mu


def _metropolis_policy(ctx: RunContext):
    model = ctx.model
    mu_star = _static_optimum(ctx)
    kappa = ctx.param("kappa")
    kappa = None if kappa is None else parse_number(kappa)
    if kappa is not None and mu_star.dtype != object:
        kappa = float(kappa)
    kernel = metropolis.build_balance_kernel(mu_star, model.adjacency, kappa)
    alpha = parse_number(_get(ctx.cfg, "model.transition.alpha", 1))
    if not kernel.exact:
        alpha = float(alpha)
    policy = metropolis.invert_kernel(kernel, alpha, model.actions)
    return mu_star, kernel, policy


def _float_policy(policy: ConditionalPolicy) -> ConditionalPolicy:
    return ConditionalPolicy(np.asarray(policy.rows, dtype=float), policy.actions)


def _policy(ctx: RunContext) -> ConditionalPolicy:
    if _get(ctx.cfg, "task.policy", "metropolis") == "uniform" or ctx.model.adjacency is None:
        return ConditionalPolicy.uniform(ctx.model.actions)
    return _float_policy(_metropolis_policy(ctx)[2])


def task_solve_static(ctx: RunContext) -> dict:
    market = _get(ctx.cfg, "model.market")
    if market:
        m = staticopt.RectangleMarket(*(tuple(parse_number(v, exact=True) for v in market[k]) for k in "BCDEA"))
        sol = staticopt.market_place_solution(m)
        denom = math.lcm(*(Fraction(w).denominator for w in sol.mu))
        rows = [[name, _fmt(p[0]), _fmt(p[1]), _fmt(w), int(w * denom), denom, repr(float(w))]
                for name, p, w in zip("BCDE", m.corners(), sol.mu)]
        ctx.write_csv("corner_masses.csv", ["corner", "x", "y", "mass", "numerator", "denominator", "mass_float"], rows)
        return {"value": _fmt(sol.value), "masses": [_fmt(w) for w in sol.mu]}
    exact = ctx.param("exact", ctx.model.dist.dtype == object)
    sol = staticopt.maximize_spread(ctx.model.dist, exact=exact)
    sol.to_csv(ctx.path("mu_star.csv"))
    ctx.adopt("mu_star.csv")
    return {"value": _fmt(sol.value), "mu_star": [_fmt(w) for w in sol.mu], "method": sol.method}


def _write_flow(ctx: RunContext, traj: meanfield.Trajectory, name: str = "flow") -> None:
    traj.to_csv(ctx.path(f"{name}.csv"))
    ctx.adopt(f"{name}.csv")
    traj.to_tidy_csv(ctx.path(f"{name}_tidy.csv"))
    ctx.adopt(f"{name}_tidy.csv")


def task_build_policy(ctx: RunContext) -> dict:
    mu_star, kernel, policy = _metropolis_policy(ctx)
    ctx.write_text("mu_star.txt", format_matrix([mu_star], ["stationary law (one row)"]))
    ctx.write_text("kernel.txt", format_matrix(kernel.P, [f"balance kernel, kappa={kernel.kappa}"]))
    ctx.write_text("policy.txt", format_matrix(policy.rows, ["conditional policy, row x = Qbar(.|x)"]))
    steps = ctx.param("steps", ctx.param("horizon", 64))
    reward = ctx.model.reward or SpreadReward(np.asarray(ctx.model.dist, dtype=float))
    traj = meanfield.flow(_initial_measure(ctx), _float_policy(policy), ctx.model.transition, steps, reward,
                          seed=ctx.seed if ctx.model.noise is not None else None)
    _write_flow(ctx, traj)
    return {
        "stationarity_residual": metropolis.verify_stationarity(kernel, mu_star),
        "detailed_balance_residual": kernel.residual,
        "irreducible": kernel.irreducible,
        "aperiodic": kernel.aperiodic,
        "alpha_bound": _fmt(metropolis.feasibility_bounds(kernel, ctx.model.actions)),
    }


def task_flow(ctx: RunContext) -> dict:
    traj = meanfield.flow(_initial_measure(ctx), _policy(ctx), ctx.model.transition, ctx.param("steps"),
                          ctx.model.reward, seed=ctx.seed if ctx.model.noise is not None else None)
    _write_flow(ctx, traj)
    return {"final": [float(v) for v in traj.measures[-1]]}


def task_average_reward(ctx: RunContext) -> dict:
    traj = meanfield.flow(_initial_measure(ctx), _policy(ctx), ctx.model.transition, ctx.param("steps"),
                          ctx.model.reward, seed=ctx.seed if ctx.model.noise is not None else None)
    avg = meanfield.average_reward(traj.rewards)
    ctx.write_csv("average_reward.csv", ["n", "cesaro_mean", "tail_min", "tail_max"],
                  [[avg.n, repr(avg.mean), repr(avg.tail_min), repr(avg.tail_max)]])
    return {"cesaro_mean": avg.mean, "tail_min": avg.tail_min, "tail_max": avg.tail_max}


def task_tauber(ctx: RunContext) -> dict:
    diag = meanfield.tauber_check(ctx.model.transition, ctx.model.reward, _policy(ctx), _initial_measure(ctx),
                                  ctx.param("betas"), horizon=ctx.param("horizon", 1000), tol=ctx.param("tol", 1e-10))
    rows = [[repr(float(b)), repr(float(s)), repr(float(r)), repr(float(h)), int(L), repr(float(g)), bool(ok)]
            for b, s, r, h, L, g, ok in zip(diag.betas, diag.scaled_values, diag.rho_samples, diag.bias,
                                            diag.truncation, diag.tail_gaps, diag.inequality_holds)]
    ctx.write_csv("tauber.csv", ["beta", "scaled_value", "rho_uniform", "bias_uniform", "truncation",
                                 "gap_to_tail", "inequality_holds"], rows)
    return {"report": diag.report(), "monotone": diag.monotone}


def _spec(ctx: RunContext) -> DiscountSpec:
    return DiscountSpec(ctx.param("beta"), ctx.param("eps", 1e-8), ctx.param("max_iter", 100_000))


def task_value_iterate(ctx: RunContext) -> dict:
    solver = _get(ctx.cfg, "task.solver")
    m, spec = ctx.model, _spec(ctx)
    if solver == "limit":
        grid = meanfield.SimplexGrid(m.d, ctx.param("grid_resolution"))
        table = meanfield.value_iterate_limit(m.transition, m.reward, m.actions, spec, grid,
                                              ctx.param("action_resolution", 4))
        table.to_csv(ctx.path("limit_values.csv"))
        ctx.adopt("limit_values.csv")
        return {"points": len(grid), "iterations": table.iterations, "residual": table.residual}
    N = ctx.param("N")
    out = {}
    if solver in ("product", "equivalence"):
        vN = nagent.value_iterate_product(N, m.transition, m.reward, m.actions, spec)
        ctx.write_csv("product_values.csv", [f"agent_{i}" for i in range(N)] + ["value"],
                      [list(cfg) + [repr(vN[cfg])] for cfg in vN.configurations()])
        out["product_iterations"] = vN.iterations
    if solver in ("empirical", "equivalence"):
        jN = nagent.value_iterate_empirical(N, m.transition, m.reward, m.actions, spec)
        ctx.write_csv("empirical_values.csv", [f"count_{i}" for i in range(m.d)] + ["value"],
                      [list(s) + [repr(v)] for s, v in jN.as_dict().items()])
        out["empirical_iterations"] = jN.iterations
    if solver == "equivalence":
        gap = nagent.check_equivalence(vN, jN)
        bound = 2 * spec.eps
        ctx.write_csv("equivalence.csv", ["N", "beta", "eps", "max_discrepancy", "bound", "within_bound"],
                      [[N, repr(spec.beta), repr(spec.eps), repr(gap), repr(bound), gap <= bound]])
        out.update(max_discrepancy=gap, within_bound=gap <= bound)
    return out


def task_simulate(ctx: RunContext) -> dict:
    policy = _policy(ctx)
    m = ctx.model
    reward = m.reward or SpreadReward(np.asarray(m.dist, dtype=float))
    reps = ctx.param("replications", 1)
    seeds = [ctx.seed + r for r in range(reps)]
    mu0 = _initial_measure(ctx)

    def one(seed):
        return nagent.simulate_agents(ctx.param("N"), policy, m.transition, reward, ctx.param("horizon"), seed, mu0=mu0)

    with ThreadPoolExecutor(max_workers=max(1, ctx.threads)) as pool:
        records = list(pool.map(one, seeds))
    summary = []
    for seed, rec in zip(seeds, records):
        name = f"simulation_seed{seed}.csv"
        rec.to_csv(ctx.path(name))
        ctx.adopt(name)
        summary.append(float(rec.rewards.mean()))
    return {"mean_rewards": summary}


def task_contraction(ctx: RunContext) -> dict:
    spec = ctx.cfg["model"]["linear"]
    noise = transport.AtomMeasure(spec.get("noise_positions", [0.0, 0.1, 0.2, 0.3]),
                                  spec.get("noise_weights", [0.25] * len(spec.get("noise_positions", [0] * 4))))
    lm = transport.LinearMFModel(spec["gamma_s"], spec["gamma_a"], spec["gamma_w"], spec["gamma_q"], noise)
    grid = transport.UnitGrid()
    mu_star = transport.stationary_measure(lm, grid)
    rng = np.random.default_rng(ctx.seed)
    rows, worst = [], 0.0
    for start in range(ctx.param("starts", 10)):
        k = rng.integers(1, 6)
        mu0 = transport.AtomMeasure(rng.random(k), rng.dirichlet(np.ones(k)))
        rep = transport.contraction_check(lm, mu0, ctx.param("steps"), grid, mu_star, strict=False)
        worst = max(worst, rep.max_ratio)
        for step, (dist, ratio) in enumerate(zip(rep.distances[:-1], rep.ratios)):
            rows.append([start, step, repr(float(dist)), "" if np.isnan(ratio) else repr(float(ratio))])
    ctx.write_csv("contraction.csv", ["start", "step", "distance", "ratio"], rows)
    if worst > lm.gamma + 1e-9:
        raise MFMDPError(f"observed ratio {worst} exceeds gamma {lm.gamma}", code="transport.contraction")
    return {"gamma": lm.gamma, "max_ratio": worst}


def task_common_noise(ctx: RunContext) -> dict:
    m = ctx.model
    gamma = ctx.param("gamma")
    if gamma is None:
        if m.actions is None:
            raise ConfigError("common-noise needs parameters.gamma or a graph", field="parameters.gamma")
        sizes = {m.actions.size(x) for x in range(m.d)}
        if len(sizes) != 1:
            raise InfeasibleError("|D(x)| differs across states", code="staticopt.degree")
        gamma = sizes.pop()
    spec = staticopt.CommonNoiseSpec(m.noise.values, m.noise.probs, gamma)
    sol = staticopt.optimize_common_noise(np.asarray(m.dist, dtype=float), spec)
    ctx.write_csv("common_noise.csv", ["state", "nu"], [[x, repr(float(v))] for x, v in enumerate(sol.nu)])
    return {"value": sol.value, "moments": list(sol.moments), "degenerate": sol.degenerate}


TASKS = {
    "solve-static": task_solve_static,
    "build-policy": task_build_policy,
    "simulate-agents": task_simulate,
    "flow": task_flow,
    "value-iterate": task_value_iterate,
    "average-reward": task_average_reward,
    "tauber": task_tauber,
    "contraction-check": task_contraction,
    "common-noise": task_common_noise,
}


def load_config(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config {path} not found", field="--config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", field="--config") from None


def run(config_path, out_dir=None, seed=None, threads: int = 1) -> tuple[dict, list[Path]]:
    config_path = Path(config_path).resolve()
    cfg = load_config(config_path)
    model = validate_config(cfg, config_path.parent)
    out = Path(out_dir or _get(cfg, "outputs.dir", "mfmdp-out"))
    out.mkdir(parents=True, exist_ok=True)
    seed = seed if seed is not None else _get(cfg, "parameters.seed", 0)
    ctx = RunContext(cfg, config_path, out, int(seed), int(threads), model)
    summary = TASKS[cfg["task"]["kind"]](ctx)
    return summary, ctx.written


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (e.g. ``grid_congestion``)."""
    path = resources.files("mfmdp").joinpath("configs", f"{name}.json")
    return Path(str(path))


def _origin_module(exc: Exception) -> str:
    """Name of the innermost package module in the traceback (``nagent``, ``metropolis``, ...)."""
    name = "cli"
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("mfmdp."):
            name = mod.split(".")[1]
        tb = tb.tb_next
    return name


def _error_code(exc: Exception) -> str:
    code = getattr(exc, "code", "internal")
    return code if "." in code else f"{_origin_module(exc)}.{code}"


def _error_line(exc: Exception) -> str:
    payload = {"error": _error_code(exc), "message": str(exc)}
    if getattr(exc, "field", None):
        payload["field"] = exc.field
    return json.dumps(payload, sort_keys=True)


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, Fraction):
        return str(o)
    return str(o)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mfmdp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("validate", "check a config without computing"), ("run", "run the configured task")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment config (JSON) or a bundled config name")
        p.add_argument("--out", help="output directory (overrides outputs.dir)")
        p.add_argument("--seed", type=int, help="master seed (overrides parameters.seed)")
        p.add_argument("--threads", type=int, default=1, help="worker cap for replicated tasks")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")

    config = Path(args.config)
    if not config.exists() and bundled_config(args.config).exists():
        config = bundled_config(args.config)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be non-negative", field="--seed")
        if args.command == "validate":
            validate_config(load_config(config), config.resolve().parent)
            print(json.dumps({"status": "ok", "config": str(config)}))
            return 0
        summary, written = run(config, args.out, args.seed, args.threads)
    except MFMDPError as exc:
        print(_error_line(exc), file=sys.stderr)
        return exc.exit_status
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"error": "numerical", "message": str(exc)}), file=sys.stderr)
        return 5
    print(json.dumps({"status": "ok", "outputs": [str(p) for p in written], "summary": summary},
                     default=_default, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
