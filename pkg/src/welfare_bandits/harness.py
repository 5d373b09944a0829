"""Seeded multi-replication experiments.

A plan names an algorithm, an environment, a list of horizons and a number
of replications.  Replication ``r`` at horizon ``T`` draws all of its
randomness from streams keyed by ``(seed, T, r)``, so results do not depend
on how replications are spread over worker processes.  Regret is logged at
geometrically spaced checkpoints.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from . import envs, rng
from ._kernels import monopoly_episode
from .dyadic import DyadicConfig, replay_dyadic
from .exp3 import Exp3Config, optimized_tuning, replay, regret_bound
from .income import (FixedWageSequence, IncomeConfig, ProductWageEnv, UnitWageEnv, WageEnvironment,
                     replay_income, income_regret_bound, income_tuning)
from .oracles import best_constant_stochastic, prefix_best_welfare
from .welfare import social_welfare

log = logging.getLogger(__name__)

ALGORITHMS = ("exp3", "uniform", "monopoly", "dyadic", "income")
CSV_COLUMNS = ("algo", "env", "T", "rep", "checkpoint_t", "cum_regret")
PLAN_KEYS = {"algorithm", "lambda", "params", "env", "horizons", "replications", "seed",
             "checkpoints", "benchmark", "threads", "name", "out"}
_PARAM_KEYS = {
    "exp3": {"K", "gamma", "eta", "tuning"},
    "uniform": {"K"},
    "monopoly": {"K", "gamma", "eta"},
    "dyadic": {"delta"},
    "income": {"K", "gamma", "eta", "tuning", "c1", "c2", "c3", "wage_grid", "omega"},
}
#: replications per task handed to a worker process
CHUNK = 25
#: replications required before comparing with a theoretical bound
MIN_REPS_FOR_BOUND = 100
Z95 = 1.959963984540054


class ConfigError(ValueError):
    """Invalid plan; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---------------------------------------------------------------------------
# environments from config


def _epsilon(block, T: int, where: str) -> float:
    eps = block.get("epsilon", 0.0)
    if isinstance(eps, dict):
        extra = set(eps) - {"scale", "power"}
        if extra:
            raise ConfigError(f"{where}.epsilon", f"unknown keys {sorted(extra)}")
        eps = eps.get("scale", 1.0) * float(T) ** eps.get("power", 0.0)
    return float(eps)


_ENV_KEYS = {
    "uniform": set(),
    "discrete": {"support"},
    "four_point_mu": {"epsilon", "lambda"},
    "concave_f": {"epsilon", "lambda"},
    "fixed_sequence": {"values", "path"},
    "frozen": {"base", "seed"},
    "switching": {"low", "high", "period"},
}


def build_env(block: dict, lam: float, T: int, where: str = "env") -> envs.Environment:
    """Environment for horizon ``T`` from its config block."""
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigError(f"{where}.kind", "missing")
    kind = block["kind"]
    if kind not in _ENV_KEYS:
        raise ConfigError(f"{where}.kind", f"unknown environment {kind!r}")
    extra = set(block) - _ENV_KEYS[kind] - {"kind"}
    if extra:
        raise ConfigError(where, f"unknown keys {sorted(extra)}")
    try:
        if kind == "uniform":
            return envs.UniformEnv()
        if kind == "discrete":
            return envs.DiscreteEnv(tuple(tuple(a) for a in block["support"]))
        if kind == "four_point_mu":
            eps = min(1.0, max(-1.0, _epsilon(block, T, where)))
            return envs.FourPointMuEnv(lam=block.get("lambda", lam), epsilon=eps)
        if kind == "concave_f":
            return envs.ConcaveEnv(lam=block.get("lambda", lam), epsilon=_epsilon(block, T, where))
        if kind == "fixed_sequence":
            if "path" in block:
                return envs.load_sequence(block["path"])
            return envs.FixedSequenceEnv(tuple(block["values"]))
        if kind == "frozen":
            base = build_env(block.get("base", {}), lam, T, f"{where}.base")
            return envs.frozen_sequence(base.with_seed(block.get("seed", 0)), T)
        if kind == "switching":
            return envs.switching_sequence(T, block.get("low", 0.3), block.get("high", 0.9), block.get("period"))
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"{where}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError(where, str(exc)) from None
    raise AssertionError(kind)


def build_wage_env(block: dict, lam: float, T: int, where: str = "env") -> WageEnvironment:
    kind = block.get("kind") if isinstance(block, dict) else None
    try:
        if kind == "unit_wage":
            return UnitWageEnv(build_env(block.get("base", {"kind": "uniform"}), lam, T, f"{where}.base"))
        if kind == "product":
            return ProductWageEnv(build_env(block.get("wage", {"kind": "uniform"}), lam, T, f"{where}.wage"),
                                  build_env(block.get("cost", {"kind": "uniform"}), lam, T, f"{where}.cost"))
        if kind == "fixed_pairs":
            return FixedWageSequence(tuple(block["wages"]), tuple(block["costs"]))
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"{where}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.kind", f"income needs unit_wage, product or fixed_pairs, got {kind!r}")


# ---------------------------------------------------------------------------
# plans


@dataclass
class ExperimentPlan:
    algorithm: str
    lam: float
    env: dict
    horizons: List[int]
    replications: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)
    checkpoints: int = 20
    benchmark: str = "auto"
    threads: int = 1
    name: str = ""
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentPlan":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        unknown = set(raw) - PLAN_KEYS
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown key")
        for key in ("algorithm", "lambda", "env", "horizons"):
            if key not in raw:
                raise ConfigError(key, "missing")
        plan = cls(
            algorithm=raw["algorithm"], lam=raw["lambda"], env=raw["env"], horizons=raw["horizons"],
            replications=raw.get("replications", 1), seed=raw.get("seed", 0),
            params=dict(raw.get("params", {})), checkpoints=raw.get("checkpoints", 20),
            benchmark=raw.get("benchmark", "auto"), threads=raw.get("threads", 1),
            name=raw.get("name", ""), out=raw.get("out"),
        )
        plan.validate()
        return plan

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"must be one of {', '.join(ALGORITHMS)}")
        if not isinstance(self.lam, (int, float)) or not 0.0 < self.lam < 1.0:
            raise ConfigError("lambda", "must be a number in (0, 1)")
        if (not isinstance(self.horizons, list) or not self.horizons
                or any(not isinstance(T, int) or T < 1 for T in self.horizons)):
            raise ConfigError("horizons", "must be a nonempty list of positive integers")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ConfigError("horizons", "must be strictly increasing")
        for key in ("replications", "checkpoints", "threads"):
            val = getattr(self, key)
            if not isinstance(val, int) or val < 1:
                raise ConfigError(key, "must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        if self.benchmark not in ("auto", "adversarial", "stochastic"):
            raise ConfigError("benchmark", "must be auto, adversarial or stochastic")
        unknown = set(self.params) - _PARAM_KEYS[self.algorithm]
        if unknown:
            raise ConfigError(f"params.{sorted(unknown)[0]}", f"unknown for {self.algorithm}")
        for T in self.horizons:
            setup(self, T)

    @property
    def env_label(self) -> str:
        return self.env.get("kind", "?") if isinstance(self.env, dict) else "?"


# ---------------------------------------------------------------------------
# per-horizon setup


@dataclass
class HorizonSetup:
    T: int
    env: object
    config: object
    benchmark: str
    checkpoints: np.ndarray
    settings: dict
    in_hypothesis: Optional[bool]
    bound: Optional[Callable[[np.ndarray], np.ndarray]] = None
    W_star: Optional[float] = None
    grid_welfare: Optional[np.ndarray] = None
    fixed_best: Optional[np.ndarray] = None


def checkpoint_rounds(T: int, n: int) -> np.ndarray:
    """About ``n`` geometrically spaced rounds ending at ``T``."""
    return np.unique(np.round(np.geomspace(1, T, n)).astype(np.int64))


def _need(params, key, where="params"):
    if key not in params:
        raise ConfigError(f"{where}.{key}", "missing")
    return params[key]


def setup(plan: ExperimentPlan, T: int) -> HorizonSetup:
    p, lam = plan.params, plan.lam
    cps = checkpoint_rounds(T, plan.checkpoints)
    algo = plan.algorithm
    bound = None
    in_hyp = None
    try:
        if algo == "income":
            env = build_wage_env(plan.env, lam, T)
            if p.get("tuning") == "scaled":
                H = len(p.get("wage_grid", [0.0]))
                K, gamma, eta = income_tuning(T, H, p.get("c1", 1.0), p.get("c2", 0.5), p.get("c3", 0.25))
            elif "tuning" in p:
                raise ConfigError("params.tuning", "income supports only 'scaled'")
            else:
                K, gamma, eta = _need(p, "K"), _need(p, "gamma"), _need(p, "eta")
            grid = tuple(p.get("wage_grid", [0.0]))
            config = IncomeConfig(K, gamma, eta, grid, tuple(p.get("omega", [lam] * len(grid))))
            in_hyp = config.in_hypothesis
            if in_hyp:
                bound = partial(income_regret_bound, config.K, config.gamma, config.eta, config.H)
            settings = {"K": config.K, "gamma": config.gamma, "eta": config.eta, "H": config.H}
            return HorizonSetup(T, env, config, "adversarial", cps, settings, in_hyp, bound)

        env = build_env(plan.env, lam, T)
        if algo == "dyadic":
            delta = p.get("delta", T ** -2.5)
            config = DyadicConfig(lam, delta)
            settings = {"delta": delta}
        elif algo == "uniform":
            config = Exp3Config(_need(p, "K"), 1.0, 1.0, lam)
            settings = {"K": config.K}
        else:
            if algo == "exp3" and p.get("tuning") == "optimized":
                K, gamma, eta = optimized_tuning(lam, T)
            elif "tuning" in p:
                raise ConfigError("params.tuning", "exp3 supports only 'optimized'")
            else:
                K, gamma, eta = _need(p, "K"), _need(p, "gamma"), _need(p, "eta")
            config = Exp3Config(K, gamma, eta, lam)
            in_hyp = config.in_hypothesis
            if algo == "exp3" and in_hyp:
                bound = partial(regret_bound, config)
            settings = {"K": config.K, "gamma": config.gamma, "eta": config.eta}
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("params", str(exc)) from None
    if "epsilon" in plan.env:
        settings["epsilon"] = getattr(env, "epsilon", None)

    if isinstance(env, envs.FixedSequenceEnv) and len(env.values) < T:
        raise ConfigError("horizons", f"T={T} exceeds the fixed sequence length {len(env.values)}")
    benchmark = plan.benchmark
    if benchmark == "auto":
        benchmark = "stochastic" if env.stochastic else "adversarial"
    if benchmark == "stochastic" and not env.stochastic:
        raise ConfigError("benchmark", "fixed sequences need the adversarial benchmark")
    hs = HorizonSetup(T, env, config, benchmark, cps, settings, in_hyp, bound)
    if benchmark == "stochastic":
        hs.W_star = best_constant_stochastic(env, lam)[1]
        if algo != "dyadic":
            hs.grid_welfare = np.asarray(env.expected_welfare(config.grid, lam), dtype=float)
    elif not env.stochastic:
        hs.fixed_best = prefix_best_welfare(env.valuations(1, T), lam, cps)
    return hs


# ---------------------------------------------------------------------------
# replications


def _income_regret(hs: HorizonSetup, tr) -> tuple:
    cfg = hs.config
    cps = hs.checkpoints
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(tr.wages > 0, 1.0 - tr.costs / tr.wages, -1.0)
    best = np.zeros(len(cps))
    per_bracket = 0.0
    counts = 0
    cum = np.cumsum(tr.welfare)
    for h in range(cfg.H):
        mask = tr.brackets == h
        counts += int(mask.sum())
        wts = np.where(mask, tr.wages, 0.0)
        b_h = prefix_best_welfare(theta, cfg.omega[h], cps, wts)
        best += b_h
        per_bracket += b_h[-1] - float(tr.welfare[mask].sum())
    regret = best - cum[cps - 1]
    # regret splits over brackets and every round falls in one bracket
    if counts != hs.T or not math.isclose(per_bracket, regret[-1], rel_tol=1e-9, abs_tol=1e-9):
        raise RuntimeError("income regret does not decompose over brackets")
    return regret, regret[-1]


def run_replication(plan: ExperimentPlan, hs: HorizonSetup, r: int):
    """Regret at the checkpoints and the final realized-welfare regret of replication ``r``."""
    seed = rng.derive_seed(plan.seed, hs.T, r)
    T, cps, lam = hs.T, hs.checkpoints, plan.lam
    draws = rng.uniforms(seed, rng.POLICY, 0, T)
    if plan.algorithm == "income":
        wages, costs = hs.env.with_seed(seed).pairs(T)
        return _income_regret(hs, replay_income(hs.config, draws, wages, costs))

    values = hs.env.with_seed(seed).valuations(1, T)
    if plan.algorithm == "dyadic":
        run = replay_dyadic(hs.config, values)
        policies = run.policies
        expected = None
    else:
        cfg = hs.config
        if plan.algorithm == "monopoly":
            arms = np.empty(T, dtype=np.int64)
            outcomes = np.empty(T, dtype=np.int8)
            monopoly_episode(cfg.grid, cfg.gamma, cfg.eta, draws, values, np.zeros(cfg.K + 1), arms, outcomes)
        else:
            arms = replay(cfg, draws, values).arms
        policies = cfg.grid[arms]
        expected = hs.grid_welfare[arms] if hs.grid_welfare is not None else None
    cum = np.cumsum(social_welfare(policies, values, lam))
    if hs.benchmark == "stochastic":
        if expected is None:
            expected = hs.env.expected_welfare(policies, lam)
        regret = cps * hs.W_star - np.cumsum(expected)[cps - 1]
        realized = T * hs.W_star - cum[-1]
    else:
        best = hs.fixed_best if hs.fixed_best is not None else prefix_best_welfare(values, lam, cps)
        regret = best - cum[cps - 1]
        realized = regret[-1]
    return regret, realized


def _run_chunk(args):
    plan, hs, reps = args
    out = [run_replication(plan, hs, r) for r in reps]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out])


# ---------------------------------------------------------------------------
# fits and bounds


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float = 0.0

    def slope_interval(self, level: float = 0.95, n: int = 0) -> tuple:
        q = stats.t.ppf(0.5 + level / 2, max(n - 2, 1)) if n else Z95
        return self.slope - q * self.slope_stderr, self.slope + q * self.slope_stderr


class RateFitError(ValueError):
    pass


def fit_rate(horizons: Sequence[float], regret: Sequence[float]) -> RateFit:
    """Least-squares line through ``(log T, log regret)``.

    Raises
    ------
    RateFitError
        With fewer than four horizons, a span under two decades, or a
        nonpositive regret value (degenerate series).
    """
    T = np.asarray(horizons, dtype=float)
    y = np.asarray(regret, dtype=float)
    if len(T) < 4:
        raise RateFitError("need at least 4 horizons")
    if T.max() / T.min() < 100 * (1 - 1e-12):
        raise RateFitError("horizons must span at least two decades")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise RateFitError("degenerate series: regret must be positive")
    res = stats.linregress(np.log(T), np.log(y))
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue**2), float(res.stderr))


@dataclass
class BoundReport:
    passed: bool
    checkpoints: List[int]
    upper: List[float]
    bound: List[float]
    reason: str = ""


def compare_to_bound(checkpoints, mean, se, bound: Callable, replications: int) -> BoundReport:
    """Check ``mean + 3 se <= bound(t)`` at every checkpoint."""
    cps = [int(t) for t in checkpoints]
    upper = (np.asarray(mean) + 3 * np.asarray(se)).tolist()
    b = [float(bound(t)) for t in cps]
    if replications < MIN_REPS_FOR_BOUND:
        return BoundReport(False, cps, upper, b, f"needs at least {MIN_REPS_FOR_BOUND} replications")
    ok = all(u <= v for u, v in zip(upper, b))
    return BoundReport(ok, cps, upper, b, "" if ok else "bound exceeded")


# ---------------------------------------------------------------------------
# running plans


@dataclass
class HorizonResult:
    T: int
    checkpoints: np.ndarray
    regret: np.ndarray  # replications x checkpoints
    realized: np.ndarray
    settings: dict
    benchmark: str
    in_hypothesis: Optional[bool]
    bound: Optional[BoundReport] = None

    @property
    def mean(self) -> np.ndarray:
        return self.regret.mean(axis=0)

    @property
    def se(self) -> np.ndarray:
        R = self.regret.shape[0]
        if R < 2:
            return np.zeros(self.regret.shape[1])
        return self.regret.std(axis=0, ddof=1) / math.sqrt(R)


@dataclass
class PlanResult:
    plan: ExperimentPlan
    horizons: List[HorizonResult]
    rate: Optional[RateFit] = None
    rate_error: str = ""

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for h in self.horizons:
            for r, row in enumerate(h.regret):
                for t, val in zip(h.checkpoints, row):
                    w.writerow((self.plan.algorithm, self.plan.env_label, h.T, r, int(t), repr(float(val))))
        return buf.getvalue()

    def summary(self) -> dict:
        out = {"plan": self.plan.to_dict(), "horizons": []}
        for h in self.horizons:
            mean, se = h.mean, h.se
            entry = {
                "T": h.T,
                "settings": h.settings,
                "benchmark": h.benchmark,
                "outside_bound_regime": h.in_hypothesis is False,
                "checkpoints": h.checkpoints.tolist(),
                "mean": mean.tolist(),
                "se": se.tolist(),
                "lower95": (mean - Z95 * se).tolist(),
                "upper95": (mean + Z95 * se).tolist(),
                "final_mean": float(mean[-1]),
                "final_se": float(se[-1]),
                "realized_final_mean": float(h.realized.mean()),
            }
            if h.bound is not None:
                entry["bound_comparison"] = asdict(h.bound)
            out["horizons"].append(entry)
        if self.rate is not None:
            lo, hi = self.rate.slope_interval(n=len(self.horizons))
            out["rate_fit"] = dict(asdict(self.rate), slope_ci95=[lo, hi])
        else:
            out["rate_fit"] = {"fitted": False, "reason": self.rate_error}
        return out

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "regret.csv").write_text(self.csv_text())
            (out_dir / "summary.json").write_text(json.dumps(self.summary(), indent=2) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write results to {out_dir}: {exc.strerror or exc}") from exc
        return out_dir


def run_plan(plan: ExperimentPlan, threads: Optional[int] = None) -> PlanResult:
    """Run every horizon of ``plan``; ``threads`` worker processes (default ``plan.threads``)."""
    threads = threads or plan.threads
    results = []
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for T in plan.horizons:
            hs = setup(plan, T)
            log.info("%s on %s: T=%d, %d replications", plan.algorithm, plan.env_label, T, plan.replications)
            chunks = [(plan, hs, range(s, min(s + CHUNK, plan.replications)))
                      for s in range(0, plan.replications, CHUNK)]
            mapped = pool.map(_run_chunk, chunks) if pool else map(_run_chunk, chunks)
            parts = list(mapped)
            regret = np.concatenate([p[0] for p in parts])
            realized = np.concatenate([p[1] for p in parts])
            hr = HorizonResult(T, hs.checkpoints, regret, realized, hs.settings, hs.benchmark, hs.in_hypothesis)
            if hs.bound is not None:
                hr.bound = compare_to_bound(hs.checkpoints, hr.mean, hr.se, hs.bound, plan.replications)
            results.append(hr)
    finally:
        if pool:
            pool.shutdown()
    res = PlanResult(plan, results)
    finals = [h.mean[-1] for h in results]
    try:
        res.rate = fit_rate(plan.horizons, finals)
    except RateFitError as exc:
        res.rate_error = str(exc)
    return res
