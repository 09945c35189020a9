"""Experiment configuration: a single YAML file (schema_version 1) describing
the scenario, the ground-truth model, the cost structure and tolerances.

Node naming is positional and fixed: features are ``x1..xn`` and the outcome
is ``y``. Validation errors carry the offending field path."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .costs import HeteroScale, LinearCost, SeparableCost
from .graphs import Skeleton
from .observe import Registry
from .scm import AdditiveScm, NodeFunction, NoiseSpec

SCENARIOS = (
    "simulate",
    "discover-per-node",
    "discover-general",
    "pareto-linear",
    "offline-front",
    "tradeoff-demo",
    "regret-bench",
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        self.field_path = path
        super().__init__(f"{path}: {msg}")


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int
    mode: str
    count: int
    budget: float
    scm: object | None
    cost: object | None
    skeleton: Skeleton | None
    registry: Registry | None
    exact_tol: float
    z_threshold: float
    dup_tol: float
    lambda_grid: tuple[float, ...] | None
    mechanism_weights: tuple[float, ...] | None
    regret: dict
    tradeoff: dict
    out_dir: str
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Resolved configuration (defaults filled) for the run report."""
        out = dict(self.raw)
        out["resolved"] = {
            "mode": self.mode,
            "count": self.count,
            "seed": self.seed,
            "budget": self.budget,
            "exact_tol": self.exact_tol,
            "z_threshold": self.z_threshold,
            "dup_tol": self.dup_tol,
            "lambda_grid": list(self.lambda_grid) if self.lambda_grid else None,
            "regret": self.regret,
            "tradeoff": self.tradeoff,
        }
        return out


def _need(block: dict, key: str, path: str):
    if key not in block:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return block[key]


def _node_index(name, n: int, path: str) -> int:
    if name == "y":
        return n
    if isinstance(name, str) and name.startswith("x"):
        try:
            idx = int(name[1:]) - 1
        except ValueError:
            raise ConfigError(path, f"bad node name {name!r}") from None
        if 0 <= idx < n:
            return idx
    raise ConfigError(path, f"unknown node {name!r} (features are x1..x{n}, outcome is y)")


def _float(value, path: str, allow_inf: bool = False) -> float:
    if isinstance(value, str):
        if allow_inf and value.strip().lower() in ("inf", "infinity"):
            return math.inf
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(path, f"expected a number, got {value!r}") from None
    if not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    if not allow_inf and not math.isfinite(float(value)):
        raise ConfigError(path, "value must be finite")
    return float(value)


def _parse_noise(block, path: str) -> NoiseSpec:
    dist = _need(block, "dist", path)
    if dist == "gaussian":
        var = _float(block.get("var", 1.0), f"{path}.var")
        if var < 0:
            raise ConfigError(f"{path}.var", "variance must be >= 0")
        return NoiseSpec.gaussian(_float(block.get("mean", 0.0), f"{path}.mean"), var)
    if dist == "uniform":
        lo = _float(_need(block, "lo", path), f"{path}.lo")
        hi = _float(_need(block, "hi", path), f"{path}.hi")
        if hi < lo:
            raise ConfigError(f"{path}.hi", "upper bound below lower bound")
        return NoiseSpec.uniform(lo, hi)
    if dist == "two_point":
        p = _float(block.get("p", 0.5), f"{path}.p")
        if not 0 <= p <= 1:
            raise ConfigError(f"{path}.p", "probability must lie in [0, 1]")
        return NoiseSpec.two_point(
            _float(_need(block, "hi", path), f"{path}.hi"),
            _float(_need(block, "lo", path), f"{path}.lo"),
            p,
        )
    raise ConfigError(f"{path}.dist", f"unknown noise family {dist!r}")


def _parse_scm(block, path: str):
    n = _need(block, "nodes", path)
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"{path}.nodes", "feature count must be a positive integer")
    noise_block = block.get("noise", {})
    default_noise = noise_block.get("default", {"dist": "gaussian", "mean": 0.0, "var": 1.0})
    noises = []
    for j in range(n + 1):
        name = "y" if j == n else f"x{j + 1}"
        noises.append(_parse_noise(noise_block.get(name, default_noise), f"{path}.noise.{name}"))
    parents: dict[int, list[tuple[int, tuple[float, ...]]]] = {j: [] for j in range(n + 1)}
    for e, edge in enumerate(block.get("edges", [])):
        epath = f"{path}.edges[{e}]"
        src = _node_index(_need(edge, "from", epath), n, f"{epath}.from")
        dst = _node_index(_need(edge, "to", epath), n, f"{epath}.to")
        if src == dst:
            raise ConfigError(epath, "self edge")
        if "coeffs" in edge:
            coeffs = tuple(_float(c, f"{epath}.coeffs") for c in edge["coeffs"])
            if not coeffs:
                raise ConfigError(f"{epath}.coeffs", "empty coefficient list")
        else:
            coeffs = (_float(_need(edge, "weight", epath), f"{epath}.weight"),)
        parents[dst].append((src, coeffs))
    functions = []
    for j in range(n + 1):
        pa = tuple(p for p, _ in parents[j])
        if len(set(pa)) != len(pa):
            raise ConfigError(f"{path}.edges", f"duplicate edge into node {j}")
        functions.append(NodeFunction(pa, tuple(cs for _, cs in parents[j])))
    try:
        model = AdditiveScm(n, tuple(functions), tuple(noises))
    except Exception as exc:
        raise ConfigError(f"{path}.edges", str(exc)) from None
    return model.to_linear() if model.is_linear else model


def _parse_cost(block, n: int, path: str):
    family = _need(block, "family", path)
    if family == "linear":
        prices_block = block.get("prices", {})
        default = prices_block.get("default", 1.0)
        prices = []
        for i in range(n):
            raw = prices_block.get(f"x{i + 1}", default)
            prices.append(_float(raw, f"{path}.prices.x{i + 1}", allow_inf=True))
        if not any(math.isfinite(p) for p in prices):
            raise ConfigError(f"{path}.prices", "all features immutable")
        return LinearCost(tuple(prices))
    if family == "quadratic":
        coeff_block = block.get("coefficients", {})
        default = coeff_block.get("default", 1.0)
        c_diag, scales = [], []
        for i in range(n):
            raw = coeff_block.get(f"x{i + 1}", default)
            cpath = f"{path}.coefficients.x{i + 1}"
            if isinstance(raw, dict):
                base = _float(_need(raw, "base", cpath), f"{cpath}.base")
                deps = tuple(
                    (_node_index(k, n, f"{cpath}.depends"), _float(v, f"{cpath}.depends.{k}"))
                    for k, v in raw.get("depends", {}).items()
                )
                scales.append(HeteroScale(1.0, deps))
                c_diag.append(base)
            else:
                scales.append(None)
                c_diag.append(_float(raw, cpath))
        if any(c <= 0 for c in c_diag):
            raise ConfigError(f"{path}.coefficients", "quadratic coefficients must be > 0")
        return SeparableCost.quadratic(c_diag, tuple(scales) if any(s is not None for s in scales) else None)
    if family == "power":
        terms_block = _need(block, "terms", path)
        default = terms_block.get("default")
        node_terms = []
        for i in range(n):
            raw = terms_block.get(f"x{i + 1}", default)
            if raw is None:
                raise ConfigError(f"{path}.terms.x{i + 1}", "missing terms and no default")
            node_terms.append(tuple((_float(c, f"{path}.terms"), _float(e, f"{path}.terms")) for c, e in raw))
        return SeparableCost.power(node_terms)
    raise ConfigError(f"{path}.family", f"unknown cost family {family!r}")


def parse_config(path) -> ExperimentConfig:
    """Load, validate and resolve defaults; raises :class:`ConfigError` with a
    field path on any schema violation."""
    path = Path(path)
    raw = yaml.safe_load(path.read_text())
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    scenario = _need(raw, "scenario", "<root>")
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {scenario!r}; pick one of {', '.join(SCENARIOS)}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed", "seed must be an integer")
    mode = raw.get("mode", "exact")
    if mode not in ("exact", "empirical"):
        raise ConfigError("mode", f"unknown mode {mode!r}")
    count = raw.get("count", 100_000 if mode == "empirical" else 0)
    if mode == "empirical" and (not isinstance(count, int) or count < 16):
        raise ConfigError("count", "empirical mode needs an integer count >= 16")

    scm = None
    cost = None
    skeleton = None
    registry = None
    budget = _float(raw.get("budget", 1.0), "budget")
    if budget <= 0:
        raise ConfigError("budget", "budget must be positive")
    if scenario != "regret-bench" and scenario != "tradeoff-demo":
        scm = _parse_scm(_need(raw, "scm", "<root>"), "scm")
        cost = _parse_cost(_need(raw, "cost", "<root>"), scm.n, "cost")
        registry = Registry.from_scm(scm)
        skel_block = raw.get("skeleton", "auto")
        if skel_block == "auto":
            g = scm.graph()
            skeleton = g.skeleton
        else:
            pairs = [
                (_node_index(a, scm.n, f"skeleton[{i}]"), _node_index(b, scm.n, f"skeleton[{i}]"))
                for i, (a, b) in enumerate(skel_block)
            ]
            skeleton = Skeleton.from_pairs(scm.n, pairs)
            true_edges = scm.graph().skeleton.edges
            if skeleton.edges != true_edges:
                raise ConfigError("skeleton", "skeleton does not match the model's edge set")

    tol_block = raw.get("tolerances", {})
    exact_tol = _float(tol_block.get("exact", 1e-7), "tolerances.exact")
    z_threshold = _float(tol_block.get("z_threshold", 4.0), "tolerances.z_threshold")
    dup_tol = _float(tol_block.get("duplicate", 1e-7), "tolerances.duplicate")
    if exact_tol <= 0 or z_threshold <= 0 or dup_tol <= 0:
        raise ConfigError("tolerances", "tolerances must be positive")

    front_block = raw.get("front", {})
    lam = front_block.get("lambda_grid")
    lambda_grid = tuple(_float(v, "front.lambda_grid") for v in lam) if lam else None

    mech = raw.get("mechanism")
    mechanism_weights = None
    if mech is not None:
        weights = _need(mech, "weights", "mechanism")
        if scm is not None and len(weights) not in (scm.n, scm.n + 1):
            raise ConfigError("mechanism.weights", f"expected {scm.n} feature weights")
        mechanism_weights = tuple(_float(v, "mechanism.weights") for v in weights)

    regret = dict(raw.get("regret", {}))
    regret.setdefault("sizes", [3, 4, 5])
    regret.setdefault("graphs_per_size", 30)
    regret.setdefault("eval_samples", 10_000)
    regret.setdefault("cutoff", 1e-4)
    regret.setdefault("patience", 10)
    regret.setdefault("max_steps", 300)
    regret.setdefault("box_halfwidth", 3.0)
    if any(s < 2 for s in regret["sizes"]):
        raise ConfigError("regret.sizes", "chain sizes must be >= 2 nodes")
    if regret["graphs_per_size"] < 1 or regret["eval_samples"] < 16:
        raise ConfigError("regret", "counts must be positive (eval_samples >= 16)")

    tradeoff = dict(raw.get("tradeoff", {}))
    tradeoff.setdefault("epsilon", 0.01)
    if not 0 < tradeoff["epsilon"] < 0.5:
        raise ConfigError("tradeoff.epsilon", "epsilon must lie in (0, 0.5)")

    out_dir = raw.get("outputs", {}).get("dir", "out")

    return ExperimentConfig(
        scenario=scenario,
        seed=seed,
        mode=mode,
        count=count,
        budget=budget,
        scm=scm,
        cost=cost,
        skeleton=skeleton,
        registry=registry,
        exact_tol=exact_tol,
        z_threshold=z_threshold,
        dup_tol=dup_tol,
        lambda_grid=lambda_grid,
        mechanism_weights=mechanism_weights,
        regret=regret,
        tradeoff=tradeoff,
        out_dir=out_dir,
        raw=raw,
    )
