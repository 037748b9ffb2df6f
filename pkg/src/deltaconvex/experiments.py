"""Experiment runners behind the CLI: convergence-rate sweeps, the Hilbert
equivalence check, the three-way sandwich, the tree adversary, and modulus
bracketing.  Each runner consumes a resolved ExperimentConfig and returns
deterministic ResultRow lists plus any bound violations."""

import math
from dataclasses import dataclass, field

import numpy as np

from .spaces import (NormedSpace, SampleBudget, analytic_modulus_lower,
                     modulus_of_convexity)
from .functions import LipschitzFunction, corpus_function, CORPUS_LABELS
from .regularize import (SolverConfig, ball_grid, inf_convolve_grid,
                         rate_bound, regularize_power_grid)
from . import trees as _trees

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "ExperimentResult",
    "run_converge",
    "run_hilbert_equiv",
    "run_sandwich",
    "run_adversary",
    "run_modulus",
    "convex_pair_catalog",
]


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field name."""

    def __init__(self, field_name, message):
        super().__init__(f"config field {field_name!r}: {message}")
        self.field_name = field_name


@dataclass
class ExperimentConfig:
    """Flat key -> string configuration with typed, defaulted accessors.

    Every key that an experiment reads is recorded with its final value, so
    the CSV header can echo the fully resolved configuration."""
    values: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)

    @classmethod
    def from_sources(cls, path=None, overrides=(), seed=None):
        values = {}
        if path is not None:
            with open(path) as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ConfigError(
                            f"{path}:{lineno}",
                            f"expected 'key = value', got {line!r}")
                    k, v = line.split("=", 1)
                    values[k.strip()] = v.strip()
        for item in overrides:
            if "=" not in item:
                raise ConfigError("--set", f"expected K=V, got {item!r}")
            k, v = item.split("=", 1)
            values[k.strip()] = v.strip()
        if seed is not None:
            values["seed"] = str(seed)
        return cls(values=values)

    def _get(self, key, default, cast, kind):
        raw = self.values.get(key)
        if raw is None:
            val = default
        else:
            try:
                val = cast(raw)
            except (TypeError, ValueError):
                raise ConfigError(key, f"cannot parse {raw!r} as {kind}")
        self.resolved[key] = val
        return val

    def get_int(self, key, default):
        return self._get(key, default, int, "integer")

    def get_float(self, key, default):
        return self._get(key, default, float, "real")

    def get_str(self, key, default):
        return self._get(key, default, str, "text")

    def get_float_list(self, key, default):
        def cast(raw):
            return [float(t) for t in raw.replace(",", " ").split()]
        return self._get(key, list(default), cast, "list of reals")

    def get_int_list(self, key, default):
        def cast(raw):
            return [int(t) for t in raw.replace(",", " ").split()]
        return self._get(key, list(default), cast, "list of integers")

    def unknown_keys(self):
        return sorted(set(self.values) - set(self.resolved))

    def solver(self, coarse=512, starts=3):
        return SolverConfig(
            coarse_samples=self.get_int("coarse_samples", coarse),
            refine_iterations=self.get_int("refine_iterations", 80),
            tolerance=self.get_float("tolerance", 1e-6),
            seed=self.get_int("seed", 0),
            starts=self.get_int("starts", starts),
        )


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    space: str
    function: str
    lam: float
    measured: float
    bound: float
    slack: float
    evaluations: int
    runtime_ms: int
    seed: int

    def __post_init__(self):
        for name in ("lam", "measured", "bound", "slack"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite {name} in result row")


@dataclass
class ExperimentResult:
    rows: list
    violations: list

    @property
    def exit_code(self):
        return 1 if self.violations else 0


def _space(cfg, default_dim=2, default_p=2.0):
    dim = cfg.get_int("dim", default_dim)
    p_raw = cfg.get_str("p", str(default_p))
    try:
        p = math.inf if p_raw in ("inf", "oo") else float(p_raw)
        space = NormedSpace(dim=dim, p_exponent=p)
    except ValueError as exc:
        raise ConfigError("p" if "exponent" in str(exc) else "dim", str(exc))
    return space


def _function(cfg, space, default="norm"):
    label = cfg.get_str("function", default)
    if label not in CORPUS_LABELS:
        raise ConfigError(
            "function", f"{label!r} not in corpus {sorted(CORPUS_LABELS)}")
    return corpus_function(space, label)


def _region(cfg, space):
    radius = cfg.get_float("radius", 1.0)
    if radius <= 0:
        raise ConfigError("radius", "must be positive")
    grid = cfg.get_int("grid", 21 if space.dim <= 2 else 9)
    if grid < 2:
        raise ConfigError("grid", "must be >= 2")
    return np.zeros(space.dim), radius, grid


def _lambdas(cfg, default):
    lams = cfg.get_float_list("lambdas", default)
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ConfigError("lambdas", "schedule must be strictly increasing")
    if not lams or lams[0] <= 0:
        raise ConfigError("lambdas", "schedule must be positive, nonempty")
    return lams


def run_converge(cfg):
    """Rate sweep: sup grid |f - f_lambda^p| against the analytic guarantee
    (L/(lambda C))^(1/(p-1)) with Clarkson C = 1."""
    space = _space(cfg)
    f = _function(cfg, space)
    power = cfg.get_float("power", max(2.0, min(space.p_exponent, 8.0)
                                       if space.p_exponent != math.inf
                                       else 2.0))
    if power < 2.0:
        raise ConfigError("power", "must be >= 2")
    lams = _lambdas(cfg, [16.0, 64.0, 256.0])
    center, radius, grid = _region(cfg, space)
    tol = cfg.get_float("bound_slack", 1e-4)
    solver = cfg.solver()

    X = ball_grid(space, center, radius, grid)
    fX = np.asarray(f(X), dtype=float)
    rows, violations = [], []
    prev = None
    for lam in lams:
        vals, _, evals, _, _ = regularize_power_grid(
            f, power, lam, X, space, solver)
        measured = float(np.abs(fX - vals).max())
        bound = rate_bound(power, 1.0, lam, f.lipschitz_constant)
        rows.append(ResultRow(
            experiment="converge", space=space.describe(), function=f.label,
            lam=lam, measured=measured, bound=bound,
            slack=bound - measured, evaluations=int(evals), runtime_ms=0,
            seed=solver.seed))
        if measured > bound + tol:
            violations.append(
                f"lambda={lam:g}: measured {measured:.6g} exceeds bound "
                f"{bound:.6g} + {tol:g}")
        if prev is not None and measured > prev + 2.0 * solver.tolerance:
            violations.append(
                f"lambda={lam:g}: error not non-increasing "
                f"({measured:.6g} > {prev:.6g})")
        prev = measured
    return ExperimentResult(rows=rows, violations=violations)


def run_hilbert_equiv(cfg):
    """Max grid gap between the quadratic-defect regularizer and the Moreau
    envelope; the two coincide exactly for a Euclidean norm."""
    space = _space(cfg)
    if space.p_exponent != 2.0:
        raise ConfigError(
            "p", f"Hilbert-only experiment; got {space.describe()}")
    f = _function(cfg, space)
    lams = _lambdas(cfg, [9.0, 36.0, 144.0])
    center, radius, grid = _region(cfg, space)
    # the inner problems live in tiny balls (radius ~ L/lambda) where the
    # corpus functions have at most one kink, so a lean profile suffices
    solver = cfg.solver(coarse=160, starts=2)

    X = ball_grid(space, center, radius, grid)
    rows, violations = [], []
    for lam in lams:
        qvals, _, ev1, _, _ = regularize_power_grid(
            f, 2.0, lam, X, space, solver)
        mvals, _, ev2, _, _ = inf_convolve_grid(f, 2.0, lam, X, space, solver)
        measured = float(np.abs(qvals - mvals).max())
        bound = 2.0 * solver.tolerance
        rows.append(ResultRow(
            experiment="hilbert-equiv", space=space.describe(),
            function=f.label, lam=lam, measured=measured, bound=bound,
            slack=bound - measured, evaluations=int(ev1 + ev2), runtime_ms=0,
            seed=solver.seed))
        if measured > bound:
            violations.append(
                f"lambda={lam:g}: gap {measured:.6g} exceeds {bound:.6g}")
    return ExperimentResult(rows=rows, violations=violations)


def run_sandwich(cfg):
    """Three-way check inf_convolve(p, lambda*C) <= f_lambda^p <= f on the
    grid, with C = 1, reported as the worst one-sided violation."""
    space = _space(cfg)
    f = _function(cfg, space)
    power = cfg.get_float("power", 2.0)
    if power < 2.0:
        raise ConfigError("power", "must be >= 2")
    lams = _lambdas(cfg, [4.0, 16.0, 64.0])
    center, radius, grid = _region(cfg, space)
    solver = cfg.solver()

    X = ball_grid(space, center, radius, grid)
    fX = np.asarray(f(X), dtype=float)
    rows, violations = [], []
    prev = None
    for lam in lams:
        env, _, ev1, _, _ = regularize_power_grid(
            f, power, lam, X, space, solver)
        infc, _, ev2, _, _ = inf_convolve_grid(
            f, power, lam, X, space, solver)
        low = float(np.max(infc - env, initial=0.0))
        high = float(np.max(env - fX, initial=0.0))
        mono = 0.0
        if prev is not None:
            mono = float(np.max(prev - env, initial=0.0))
        measured = max(low, high, mono, 0.0)
        bound = 2.0 * solver.tolerance
        rows.append(ResultRow(
            experiment="sandwich", space=space.describe(), function=f.label,
            lam=lam, measured=measured, bound=bound,
            slack=bound - measured, evaluations=int(ev1 + ev2), runtime_ms=0,
            seed=solver.seed))
        if measured > bound:
            violations.append(
                f"lambda={lam:g}: sandwich violated by {measured:.6g}")
        prev = env
    return ExperimentResult(rows=rows, violations=violations)


def convex_pair_catalog(ambient_dim, space):
    """Built-in convex (c, d) test pairs with |c| <= M on the unit ball."""
    def zero(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0

    def sup_quad(x):
        return space.norm(np.asarray(x, dtype=float)) ** 2

    def half_quad(x):
        return 0.5 * space.norm(np.asarray(x, dtype=float)) ** 2

    def max_affine(x):
        x = np.asarray(x, dtype=float)
        x0 = x[..., 0]
        return np.maximum.reduce([x0, -x0, 0.5 * x[..., 1] + 0.25])

    return [
        ("zero", zero, zero, 0.0),
        ("sup-quad", sup_quad, zero, 1.0),
        ("half-quad", half_quad, zero, 0.5),
        ("max-affine", max_affine, zero, 1.0),
    ]


def _tree_error_nodes(tree, rng, deep_samples=2048):
    """Node arrays used to measure the sup error: full levels up to 10 plus
    a deterministic random sample of deeper nodes."""
    arrays = [tree.level_array(k)
              for k in range(min(tree.depth, 10) + 1)]
    if tree.depth > 10:
        arrays.append(_trees._random_nodes(tree, rng, deep_samples))
    return np.vstack(arrays)


def run_adversary(cfg):
    """Finite-depth lower bound: for each catalog pair and tree depth, the
    measured sup node error must reach max(0, theta/4 - 2M/n), and the
    branch walk's growth guarantee must hold at the observed gap level."""
    depths = cfg.get_int_list("depths", [8, 16, 32])
    for n in depths:
        if n < 2 or n % 2 != 0:
            raise ConfigError("depths", f"depths must be even, >= 2; got {n}")
    scale = cfg.get_float("theta", 1.0)
    if not 0.0 < scale <= 1.0:
        raise ConfigError("theta", "must lie in (0, 1]")
    seed = cfg.get_int("seed", 0)
    deep_samples = cfg.get_int("deep_samples", 2048)

    family = _trees.build_tree_family(depths, scale=scale)
    space = NormedSpace(dim=family.ambient_dim, p_exponent=math.inf)
    f = _trees.counterexample_function(family, space)
    catalog = convex_pair_catalog(family.ambient_dim, space)

    rows, violations = [], []
    for name, c, d, M in catalog:
        for tree in family.trees:
            n = tree.depth
            rng = np.random.default_rng(seed + n)
            nodes = _tree_error_nodes(tree, rng, deep_samples)
            gaps = np.abs(np.asarray(f(nodes), dtype=float)
                          - (np.asarray(c(nodes), dtype=float)
                             - np.asarray(d(nodes), dtype=float)))
            report = _trees.adversarial_branch_walk(c, d, tree, f, delta=0.0)
            measured = float(max(gaps.max(), report.max_gap))
            bound = _trees.error_lower_bound(M, tree.theta, n)
            evals = nodes.shape[0] + len(report.levels)
            rows.append(ResultRow(
                experiment="adversary", space=space.describe(),
                function=f"{name}", lam=float(n), measured=measured,
                bound=bound, slack=measured - bound,
                evaluations=int(evals), runtime_ms=0, seed=seed))
            if measured < bound - 1e-9:
                violations.append(
                    f"pair {name}, depth {n}: measured {measured:.6g} below "
                    f"bound {bound:.6g}")
            # walk soundness at the observed gap level on the visited branch
            delta_hat = report.max_gap
            need = (tree.theta / 2.0 - 2.0 * delta_hat) * (n / 2.0)
            if report.total_c_growth < need - 1e-9:
                violations.append(
                    f"pair {name}, depth {n}: walk growth "
                    f"{report.total_c_growth:.6g} below guaranteed "
                    f"{need:.6g}")
    return ExperimentResult(rows=rows, violations=violations)


def run_modulus(cfg):
    """Modulus-of-convexity brackets over an epsilon schedule; the search
    upper estimate must stay above the analytic lower reference."""
    space = _space(cfg)
    epsilons = cfg.get_float_list("epsilons", [0.5, 1.0, 1.5])
    for e in epsilons:
        if not 0.0 < e <= 2.0:
            raise ConfigError("epsilons", f"epsilon {e:g} outside (0, 2]")
    budget = SampleBudget(samples=cfg.get_int("samples", 4096),
                          refine_iterations=cfg.get_int("refine", 200),
                          seed=cfg.get_int("seed", 0))
    rows, violations = [], []
    for eps in epsilons:
        est = modulus_of_convexity(space, eps, budget)
        bound = analytic_modulus_lower(space, eps)
        rows.append(ResultRow(
            experiment="modulus", space=space.describe(),
            function=f"eps={eps:g}", lam=eps, measured=est.upper,
            bound=bound, slack=est.upper - bound,
            evaluations=int(est.samples_used), runtime_ms=0,
            seed=budget.seed))
        if est.upper < bound - 1e-9:
            violations.append(
                f"epsilon={eps:g}: upper estimate {est.upper:.6g} below "
                f"analytic lower bound {bound:.6g}")
    return ExperimentResult(rows=rows, violations=violations)
