"""Experiment runner: scenario configs, seeded runs, CSV/JSON artifacts, oracles.

A scenario is a JSON file validated against ``schemas/scenario.schema.json``.
``run`` executes the scenario's pipeline once per seed, writes one trace
CSV per seed and ``summary.json``; ``brute-opt`` computes the ground-truth
optimum at the configured resolution.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import identical_learner as il
from . import pricing_bridge as pb
from . import strategic as st
from . import team_prod as tp
from .env_core import (
    AgentType,
    BernoulliEffort,
    EnvironmentError_,
    OutcomeGrid,
    QuadraticCost,
    TabulatedTechnology,
    bernoulli_quadratic,
    smooth_quadratic,
)
from .hetero_bandit import (
    ArrivalProcess,
    ContractSpace,
    TypeDistribution,
    linear_benchmark,
    peaked_instance,
    run_adversarial_grid,
    run_zooming,
)

SCHEMA_VERSION = 1
MIN_ORACLE_POINTS = 10
DEFAULT_RESOLUTION = {"team": 0.02}
DEFAULT_RESOLUTION_OTHER = 1e-3


class ConfigError(ValueError):
    pass


def _null_agent() -> AgentType:
    """Output never succeeds, so every contract is worth 0 to the principal."""
    tech = TabulatedTechnology((0.0, 0.25, 0.5, 0.75, 1.0), ((0.0,),) * 5)
    return AgentType(OutcomeGrid((0.0, 1.0)), tech, QuadraticCost(2.0), 1.0, beta_max=1.0)


AGENTS: dict[str, Callable[[], AgentType]] = {
    "desk": lambda: bernoulli_quadratic(2.0, 1.0),
    "peaked": peaked_instance,
    "steep": lambda: AgentType(OutcomeGrid((0.0, 1.0)), BernoulliEffort(), QuadraticCost(0.1), 1.0, beta_max=1.0),
    "smooth": lambda: smooth_quadratic((0.0, 0.5, 1.0), (3.0, 2.0), 2.0),
    "null": _null_agent,
}


def builtins() -> dict[str, list[str]]:
    return {
        "agents": sorted(AGENTS),
        "demands": sorted(pb.BUILTIN_DEMANDS),
        "teams": sorted(tp.BUILTINS),
    }


# --------------------------------------------------------------------------
# config


def _schema(name: str) -> dict:
    return json.loads(resources.files("contractlearn").joinpath("schemas", name).read_text())


def validate_config(cfg: dict) -> dict:
    """Schema check; errors name the offending field."""
    v = jsonschema.Draft202012Validator(_schema("scenario.schema.json"))
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}")
    return cfg


def load_config(path: str | Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return validate_config(cfg)


def digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _inline(build: Callable[[dict], Any], spec: dict):
    try:
        return build(spec)
    except KeyError as exc:
        raise ConfigError(f"environment: missing field {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"environment: {exc}") from None


def _agent(spec: dict) -> AgentType:
    if "builtin" in spec:
        try:
            return AGENTS[spec["builtin"]]()
        except KeyError:
            raise ConfigError(f"environment/builtin: unknown agent {spec['builtin']!r}") from None
    return _inline(AgentType.from_dict, spec)


def _demand(spec: dict) -> pb.DemandCurve:
    if "builtin" in spec:
        try:
            return pb.BUILTIN_DEMANDS[spec["builtin"]]
        except KeyError:
            raise ConfigError(f"environment/builtin: unknown demand {spec['builtin']!r}") from None
    return _inline(pb.DemandCurve.from_dict, spec)


def _team(spec: dict) -> tp.TeamProduction:
    if "builtin" in spec:
        try:
            return tp.BUILTINS[spec["builtin"]]()
        except KeyError:
            raise ConfigError(f"environment/builtin: unknown team {spec['builtin']!r}") from None
    return _inline(tp.team_from_dict, spec)


def _types(env: dict) -> tuple[list[AgentType], list[float]]:
    types = [_agent(t) for t in env["types"]]
    w = env.get("weights", [1.0 / len(types)] * len(types))
    return types, w


def _resolution(cfg: dict) -> float:
    return float(cfg.get("oracle", {}).get("resolution", DEFAULT_RESOLUTION.get(cfg["kind"], DEFAULT_RESOLUTION_OTHER)))


def _oracle_on(cfg: dict) -> bool:
    return bool(cfg.get("oracle", {}).get("enabled", False))


def _check_points(span: float, res: float):
    if math.floor(span / res + 1e-9) + 1 < MIN_ORACLE_POINTS:
        raise ConfigError(f"oracle/resolution: {res} gives fewer than {MIN_ORACLE_POINTS} grid points")


# --------------------------------------------------------------------------
# oracles


@lru_cache(maxsize=None)
def _agent_oracle(env: AgentType, res: float) -> il.OracleResult:
    return il.oracle_opt(env, fine_step=res)


def _team_grid(f: tp.TeamProduction, res: float) -> tuple[float, np.ndarray]:
    if f.n > 3:
        raise ConfigError("environment: grid oracle is limited to teams of at most 3 agents")
    _check_points(1.0, res)
    g = np.linspace(0.0, 1.0, int(round(1.0 / res)) + 1)
    B = np.stack(np.meshgrid(*[g] * f.n, indexing="ij"), -1).reshape(-1, f.n)
    B = B[B.sum(axis=1) <= 1.0 + 1e-12]
    u = tp.principal_utility(f, B)
    j = int(np.argmax(u))
    return float(u[j]), B[j]


def brute_opt(cfg: dict) -> dict[str, Any]:
    """Ground-truth optimum of the scenario's environment at the configured resolution."""
    kind = cfg["kind"]
    res = _resolution(cfg)
    env = cfg["environment"]
    if kind == "identical":
        agent = _agent(env)
        _check_points(agent.effort_cap, res)
        o = _agent_oracle(agent, res)
        return {"kind": kind, "opt": o.value, "contract": list(o.contract.payments), "action": o.action,
                "method": o.method, "resolution": res}
    if kind in ("hetero-stochastic", "hetero-adversarial", "strategic"):
        if kind == "strategic":
            dist = TypeDistribution.single(_agent(env))
        else:
            types, w = _types(env)
            dist = TypeDistribution(tuple(types), tuple(w))
        bmax = float(cfg.get("params", {}).get("beta_max", 1.0))
        _check_points(bmax, res)
        v, b = linear_benchmark(dist, bmax, int(math.floor(bmax / res + 1e-9)) + 1)
        return {"kind": kind, "opt": v, "contract": {"beta": b}, "method": "linear shares", "resolution": res}
    if kind == "pricing":
        D = _demand(env)
        _check_points(1.0, res)
        a = np.linspace(0.0, 1.0, int(round(1.0 / res)) + 1)
        u = pb.expected_pricing_utility(D, a)
        j = int(np.argmax(u))
        return {"kind": kind, "opt": float(u[j]), "contract": {"alpha": float(a[j])}, "method": "price grid",
                "resolution": res}
    if kind == "team":
        v, b = _team_grid(_team(env), res)
        return {"kind": kind, "opt": v, "contract": {"beta": b.tolist()}, "method": "share grid", "resolution": res}
    raise ConfigError(f"kind: unknown scenario kind {kind!r}")


# --------------------------------------------------------------------------
# per-seed runs


@dataclass
class SeedRecord:
    seed: int
    metrics: dict[str, Any]
    artifacts: list[str]
    oracle_gap: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = {"seed": self.seed, "metrics": self.metrics, "artifacts": self.artifacts}
        if self.oracle_gap is not None:
            d["oracle_gap"] = self.oracle_gap
        if self.extra:
            d["extra"] = self.extra
        return d


def _write(out: Path, name: str, text: str) -> str:
    (out / name).write_text(text)
    return name


def _run_identical(cfg, seed, out):
    p = cfg["params"]
    env = _agent(cfg["environment"])
    res = il.learn_optimal_contract(env, p["epsilon"], p["delta_conf"], np.random.default_rng(seed),
                                    conversion_slack=p.get("conversion_slack"))
    art = [_write(out, f"identical_seed{seed}.csv", res.table.to_csv())]
    m = {
        "post_utility": res.post_utility, "apx_value": res.pre.utility_estimate,
        "chosen_beta": float(res.table.betas[res.pre.recommended_index]), "samples": res.samples,
        "conversion_slack": res.conversion_slack,
    }
    gap = None
    if _oracle_on(cfg):
        gap = _agent_oracle(env, _resolution(cfg)).value - res.post_utility
    extra = {"pre_conversion_contract": list(res.pre.payments.payments),
             "post_conversion_contract": list(res.post.payments)}
    return SeedRecord(seed, m, art, gap, extra)


def _run_hetero(cfg, seed, out):
    p = cfg["params"]
    env = cfg["environment"]
    types, w = _types(env)
    T = int(p["T"])
    space = ContractSpace.for_types(types, p.get("space", "linear-interval"), p.get("beta_max", 1.0), p.get("h", 0.05))
    rng = np.random.default_rng(seed)
    if cfg["kind"] == "hetero-stochastic":
        tr = run_zooming(ArrivalProcess.stochastic(TypeDistribution(tuple(types), tuple(w))), space, T, rng)
    else:
        idx = env["sequence"]
        seq = [types[idx[t % len(idx)]] for t in range(T)]
        tr = run_adversarial_grid(ArrivalProcess.adversarial(seq), space, T, rng)
    art = [_write(out, f"{cfg['kind']}_seed{seed}.csv", tr.to_csv())]
    m = {"regret": tr.regret, "benchmark": tr.benchmark, "T": T, "most_played": tr.most_played()}
    gap = tr.regret / T if _oracle_on(cfg) else None
    best = tr.arms[tr.most_played()]
    return SeedRecord(seed, m, art, gap, {"most_played_contract": np.atleast_1d(best).tolist()})


def _run_strategic(cfg, seed, out):
    p = cfg["params"]
    env = _agent(cfg["environment"])
    T = int(p["T"])
    agent = st.StrategicAgentModel(env, float(p["gamma"]), p.get("policy", "truthful"), p.get("policy_params", {}))
    D = int(p["D"]) if "D" in p else st.choose_delay(T, agent.gamma, agent.lam, env.effort_cap)
    if "arms" in p:
        mc = st.MechanismConfig(tuple(p["arms"]), T, D, float(p.get("delta_p", 0.0)))
        bench = "arms"
    else:
        mc = st.MechanismConfig.continuous(T, D, float(p.get("delta_p", 0.0)))
        bench = "continuous"
    tr = st.run_delayed_elimination(mc, agent, np.random.default_rng(seed), benchmark=bench)
    art = [_write(out, f"strategic_seed{seed}.csv", tr.to_csv())]
    m = {
        "regret": tr.regret, "benchmark": tr.benchmark, "T": T, "D": D,
        "max_abs_delta": float(np.max(np.abs(tr.delta))), "budget": agent.budget(D, T),
        "budget_violations": st.budget_violations(tr, agent, T), "survivors": len(tr.survivors),
    }
    gap = tr.regret / T if _oracle_on(cfg) else None
    return SeedRecord(seed, m, art, gap, {"survivor_shares": [tr.arms[k] for k in tr.survivors]})


def _run_pricing(cfg, seed, out):
    p = cfg.get("params", {})
    D = _demand(cfg["environment"])
    cmp = pb.compare(D, int(p.get("points", 101)))
    alpha = float(p.get("alpha", 0.5))
    mc = pb.simulate_contracting(D, alpha, int(p.get("rounds", 100_000)), np.random.default_rng(seed))
    art = [_write(out, f"pricing_seed{seed}.csv", cmp.to_csv())]
    target = float(pb.expected_pricing_utility(D, alpha))
    m = {"max_response_gap": cmp.max_response_gap, "max_utility_gap": cmp.max_utility_gap,
         "mc_utility": mc, "pricing_utility": target}
    gap = abs(mc - target) if _oracle_on(cfg) else None
    return SeedRecord(seed, m, art, gap)


def _run_team(cfg, seed, out):
    f = _team(cfg["environment"])
    res = tp.find_optimal_team_contract(f, float(cfg["params"]["epsilon"]))
    art = [
        _write(out, f"team_seed{seed}.csv", res.to_csv()),
        _write(out, f"team_seed{seed}.json", json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n"),
    ]
    m = {"utility": res.utility, "realized": res.realized, "k": res.k, "queries": res.queries}
    gap = _team_grid(f, _resolution(cfg))[0] - res.utility if _oracle_on(cfg) else None
    return SeedRecord(seed, m, art, gap, {"beta": res.beta.tolist()})


RUNNERS = {
    "identical": _run_identical,
    "hetero-stochastic": _run_hetero,
    "hetero-adversarial": _run_hetero,
    "strategic": _run_strategic,
    "pricing": _run_pricing,
    "team": _run_team,
}


def run_seed(cfg: dict, seed: int, out: str) -> SeedRecord:
    return RUNNERS[cfg["kind"]](cfg, seed, Path(out))


def _aggregate(records: list[SeedRecord]) -> dict[str, dict[str, float]]:
    keys = [k for k, v in records[0].metrics.items() if isinstance(v, (int, float)) and not isinstance(v, bool)]
    agg = {}
    for k in keys:
        x = np.array([float(r.metrics[k]) for r in records])
        agg[k] = {"mean": float(x.mean()), "std": float(x.std())}
    if all(r.oracle_gap is not None for r in records):
        x = np.array([r.oracle_gap for r in records])
        agg["oracle_gap"] = {"mean": float(x.mean()), "std": float(x.std())}
    return agg


def run_scenario(cfg: dict, out: str | Path, seeds: list[int] | None = None, jobs: int = 1) -> dict[str, Any]:
    """Run every seed, write artifacts and ``summary.json``; return the summary."""
    validate_config(cfg)
    if cfg["kind"] not in RUNNERS:
        raise ConfigError(f"kind: unknown scenario kind {cfg['kind']!r}")
    seeds = sorted(set(cfg["seeds"] if seeds is None else seeds))
    if not seeds:
        raise ConfigError("seeds: need at least one seed")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            records = list(ex.map(run_seed, [cfg] * len(seeds), seeds, [str(out)] * len(seeds)))
    else:
        records = [run_seed(cfg, s, str(out)) for s in seeds]
    records.sort(key=lambda r: r.seed)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "kind": cfg["kind"],
        "digest": digest(cfg),
        "seeds": seeds,
        "per_seed": [r.to_dict() for r in records],
        "aggregate": _aggregate(records),
        "wall_clock": time.perf_counter() - t0,
    }
    if "name" in cfg:
        summary["name"] = cfg["name"]
    summary = json.loads(json.dumps(summary, default=_jsonable))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def validate_summary(summary: dict) -> None:
    jsonschema.validate(summary, _schema("summary.schema.json"), cls=jsonschema.Draft202012Validator)


# --------------------------------------------------------------------------
# command line


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contractlearn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario over its seeds")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="results")
    run.add_argument("--seeds", type=_seeds, default=None, help="comma-separated seeds overriding the config")
    run.add_argument("--jobs", type=int, default=1, help="parallel seeds")
    bo = sub.add_parser("brute-opt", help="ground-truth optimum for a scenario's environment")
    bo.add_argument("--config", required=True)
    bo.add_argument("--out", default=None)
    vc = sub.add_parser("validate-config", help="check a scenario file against the schema")
    vc.add_argument("--config", required=True)
    sub.add_parser("list-builtins", help="list built-in environments")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-builtins":
            print(json.dumps(builtins(), indent=2))
            return 0
        cfg = load_config(args.config)
        if args.command == "validate-config":
            print(f"ok: {cfg['kind']} scenario, {len(cfg['seeds'])} seed(s)")
            return 0
        if args.command == "brute-opt":
            rep = json.dumps(brute_opt(cfg), indent=2, sort_keys=True, default=_jsonable)
            print(rep)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "oracle.json").write_text(rep + "\n")
            return 0
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        summary = run_scenario(cfg, args.out, args.seeds, args.jobs)
        print(json.dumps(summary["aggregate"], indent=2, sort_keys=True))
        return 0
    except (ConfigError, EnvironmentError_, tp.TeamError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any pipeline failure
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
