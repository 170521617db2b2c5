"""Adaptive-fund and investor environments, performance measures and a (1+lambda) search."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig
from .engine import AdaptiveSpec, Simulation, default_workers
from .stochastic import derive_stream

MEASURES = ("sharpe_daily", "sharpe_annualized", "wealth_multiplier", "cumulative_return")
FAMILIES = ("constant", "vi", "tf")


class SearchError(RuntimeError):
    pass


# ---- measures ------------------------------------------------------------------------

def sharpe(returns, periods_per_year: int = 252, annualize: bool = False):
    """Geometric mean return over sample std; None when the std is zero."""
    r = np.asarray(returns, dtype=float)
    if r.shape[0] < 2:
        raise ValueError("need at least two returns")
    sd = float(np.std(r, ddof=1))
    # rounding noise on a constant series (e.g. compounding cash) is not risk
    if not sd > 1e-9 * abs(float(np.mean(r))):
        return None
    gross = 1.0 + r
    if np.any(gross <= 0):
        gm = -1.0
    else:
        gm = math.expm1(float(np.mean(np.log(gross))))
    s = gm / sd
    return s * math.sqrt(periods_per_year) if annualize else s


def wealth_multiplier(path) -> float:
    w = np.asarray(path, dtype=float)
    if not w[0] > 0:
        raise ValueError("initial wealth must be positive")
    return max(float(w[-1]), 0.0) / float(w[0])


def path_returns(path) -> np.ndarray:
    """Daily simple returns of a wealth path, stopping at the first non-positive value."""
    w = np.asarray(path, dtype=float)
    dead = np.flatnonzero(w <= 0)
    if dead.size:
        w = w[:dead[0] + 1].copy()
        w[-1] = 0.0
    return w[1:] / w[:-1] - 1.0


def measure_path(path, measure: str):
    if measure == "wealth_multiplier":
        return wealth_multiplier(path)
    if measure == "cumulative_return":
        return wealth_multiplier(path) - 1.0
    if measure in ("sharpe_daily", "sharpe_annualized"):
        return sharpe(path_returns(path), annualize=measure == "sharpe_annualized")
    raise ValueError(f"unknown measure {measure!r}; choose from {MEASURES}")


@dataclass
class EpisodeResult:
    measure: float | None
    wealth: np.ndarray
    feasible: bool = True
    note: str = ""
    base_measures: dict = field(default_factory=dict)  # style -> measure of the style-aggregate path


def _base_measures(rec, measure):
    out = {}
    for s, name in enumerate(("nt", "vi", "tf")):
        path = rec.style_wealth[:, s]
        if path[0] > 0:
            out[name] = measure_path(path, measure)
    return out


def _episode(rec, path, measure):
    if not rec.completed:
        return EpisodeResult(None, path, False, rec.failure or "")
    try:
        m = measure_path(path, measure)
    except ValueError as e:
        return EpisodeResult(None, path, False, str(e))
    note = "" if m is not None else "zero-variance returns"
    return EpisodeResult(m, path, True, note, _base_measures(rec, measure))


# ---- Task 1: the adaptive fund ------------------------------------------------------------

@dataclass(frozen=True)
class Environment:
    """Background market for an adaptive fund or an investor."""

    config: SimConfig
    days: int = 2520
    wealth_share: float = 0.01
    replaces: int | None = None

    def with_seed(self, seed: int) -> "Environment":
        return Environment(self.config.with_updates(run={"master_seed": int(seed)}), self.days, self.wealth_share, self.replaces)


def adaptive_spec(candidate: dict, env: Environment) -> AdaptiveSpec:
    """Build the adaptive fund from a candidate ``{"family": ..., "params": [...]}`` or a schedule."""
    fam = candidate["family"]
    p = list(candidate.get("params", []))
    if fam == "schedule":
        return AdaptiveSpec("schedule", schedule=np.asarray(p, float), wealth_share=env.wealth_share, replaces=env.replaces)
    if fam == "constant":
        params = {"c": float(p[0])}
    elif fam == "vi":
        params = {"k": float(p[0]), "beta": float(p[1])}
    elif fam == "tf":
        params = {"horizon": int(round(p[0])), "beta": float(p[1])}
    else:
        raise ValueError(f"unknown family {fam!r}")
    return AdaptiveSpec(fam, params=params, wealth_share=env.wealth_share, replaces=env.replaces)


def evaluate_candidate(candidate: dict, env: Environment, measure: str = "wealth_multiplier") -> EpisodeResult:
    sim = Simulation(env.config, adaptive=adaptive_spec(candidate, env), horizon=env.days)
    rec = sim.run()
    return _episode(rec, rec.adaptive_wealth, measure)


def evaluate_schedule(schedule, env: Environment, measure: str = "wealth_multiplier") -> EpisodeResult:
    """Run one episode in which the adaptive fund's bounded signal on day t is ``schedule[t-1]``."""
    phi = np.asarray(schedule, float)
    if np.any(np.abs(phi) > 1.0) or not np.all(np.isfinite(phi)):
        raise ValueError("schedule entries must lie in [-1, 1]")
    return evaluate_candidate({"family": "schedule", "params": phi.tolist()}, env, measure)


# ---- Task 2: the external investor ---------------------------------------------------------

@dataclass
class InvestorPolicy:
    """Per-period allocation rule ``nu(features) -> amounts`` (currency per fund slot)."""

    nu: object
    budget: float
    capital: float | None = None

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        if self.capital is None:
            self.capital = self.budget

    def allocate(self, feats):
        return self.nu(feats, self.budget)


def null_policy(feats, budget):
    return np.zeros(feats["tna"].shape[0])


def chase_returns(feats, budget):
    """Everything into last year's best performer, within the per-period budget."""
    r = np.where(feats["active"], feats["ret_252"], np.nan)
    n = r.shape[0]
    if np.all(np.isnan(r)):
        return np.zeros(n)
    best = int(np.nanargmax(r))
    a = np.zeros(n)
    room = budget
    others = np.flatnonzero((feats["holdings"] > 0) & (np.arange(n) != best))
    for i in others:
        take = min(feats["holdings"][i], room / 2)
        a[i] = -take
        room -= take
    a[best] = min(room, feats["cash"] - a[a < 0].sum())
    return a


@dataclass
class LinearScorePolicy:
    """Target holdings proportional to softmax(w . [ret_21, ret_252, ret_2520, log tna])."""

    weights: tuple

    def __call__(self, feats, budget):
        live = feats["active"]
        n = live.shape[0]
        if not np.any(live):
            return np.zeros(n)
        x = np.stack([np.nan_to_num(feats["ret_21"]), np.nan_to_num(feats["ret_252"]),
                      np.nan_to_num(feats["ret_2520"]), np.log(np.maximum(feats["tna"], 1.0))], axis=1)
        z = x @ np.asarray(self.weights, float)
        z = np.where(live, z, -np.inf)
        e = np.exp(z - z[live].max())
        total = feats["cash"] + feats["holdings"].sum()
        diff = total * e / e.sum() - feats["holdings"]
        gross = np.abs(diff).sum()
        return diff * (budget / gross) if gross > budget else diff


def evaluate_investor(policy: InvestorPolicy, env: Environment, measure: str = "wealth_multiplier") -> EpisodeResult:
    """One episode with the external investor trading on top of the baseline investor flows."""
    cfg = env.config.with_updates(flows={"enabled": True})
    sim = Simulation(cfg, horizon=env.days, investor=policy)
    rec = sim.run()
    return _episode(rec, rec.investor_value, measure)


# ---- search ----------------------------------------------------------------------------------

def candidate_hash(candidate) -> str:
    blob = json.dumps(candidate, sort_keys=True, default=float).encode()
    return hashlib.blake2b(blob, digest_size=8).hexdigest()


@dataclass
class Box:
    """Static search space: real vector within bounds (searched in unit coordinates)."""

    lower: np.ndarray
    upper: np.ndarray
    x0: np.ndarray
    log_scale: tuple = ()

    def __post_init__(self):
        self.lower = np.asarray(self.lower, float)
        self.upper = np.asarray(self.upper, float)
        self.x0 = np.clip(np.asarray(self.x0, float), self.lower, self.upper)

    def to_unit(self, x):
        x = np.asarray(x, float)
        u = np.empty_like(x)
        for i in range(x.shape[0]):
            lo, hi, v = self.lower[i], self.upper[i], x[i]
            if i in self.log_scale:
                lo, hi, v = math.log(lo), math.log(hi), math.log(v)
            u[i] = (v - lo) / (hi - lo) if hi > lo else 0.0
        return u

    def from_unit(self, u):
        u = np.clip(np.asarray(u, float), 0.0, 1.0)
        x = np.empty_like(u)
        for i in range(u.shape[0]):
            lo, hi = self.lower[i], self.upper[i]
            if i in self.log_scale:
                x[i] = math.exp(math.log(lo) + u[i] * (math.log(hi) - math.log(lo)))
            else:
                x[i] = lo + u[i] * (hi - lo)
        return x


@dataclass
class SearchResult:
    best: object
    best_measure: float
    trace: list  # (index, hash, measure or None, best_so_far)
    candidates: list

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["evaluation", "candidate_hash", "measure", "best_so_far"])
            for i, h, m, b in self.trace:
                w.writerow([i, h, "" if m is None else repr(float(m)), repr(float(b))])


def _score(m):
    return -math.inf if m is None or not math.isfinite(m) else float(m)


def _evaluate_all(objective, cands, workers):
    if workers > 1 and len(cands) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(cands))) as ex:
            return list(ex.map(objective, cands))
    return [objective(c) for c in cands]


def optimize_search(objective, budget: int, seed: int = 0, mode: str = "static", space=None,
                    offspring: int = 4, sigma0: float = 0.2, block: int = 21, workers: int | None = None,
                    decode=None) -> SearchResult:
    """Elitist (1+lambda) search maximizing ``objective(candidate)``.

    static:  ``space`` is a :class:`Box`; candidates are parameter vectors and the
             mutation scale follows the one-fifth success rule.
    dynamic: ``space`` is an initial schedule in [-1, 1]; each offspring perturbs one
             random block of ``block`` entries and clamps to the bounds.
    ``decode`` maps a raw vector to the candidate passed to ``objective``.
    The objective returns a float or None (infeasible).
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if mode not in ("static", "dynamic"):
        raise ValueError("mode must be static or dynamic")
    workers = default_workers() if workers is None else max(1, int(workers))
    rng = derive_stream(seed, f"search:{mode}").generator
    decode = decode or (lambda v: [float(x) for x in v])
    if mode == "static":
        if not isinstance(space, Box):
            raise ValueError("static mode needs a Box space")
        parent = space.to_unit(space.x0)
        to_cand = lambda u: decode(space.from_unit(u))  # noqa: E731
    else:
        parent = np.clip(np.asarray(space, float), -1.0, 1.0)
        to_cand = lambda v: decode(v)  # noqa: E731
    sigma = sigma0
    trace, cands = [], []
    best_m, best_c, best_v = -math.inf, None, parent
    count = 0

    def record(batch_vecs):
        nonlocal best_m, best_c, best_v, count
        batch = [to_cand(v) for v in batch_vecs]
        ms = _evaluate_all(objective, batch, workers)
        improved = False
        for v, c, m in zip(batch_vecs, batch, ms):
            count += 1
            s = _score(m)
            if best_c is None or s > best_m:
                improved = improved or best_c is not None
                best_m, best_c, best_v = s, c, v
            elif s == best_m and s > -math.inf:
                best_v, best_c = v, c  # ties move the parent along plateaus
            trace.append((count, candidate_hash(c), m, best_m))
            cands.append(c)
        return improved

    record([parent])
    while count < budget:
        k = min(offspring, budget - count)
        kids = []
        for _ in range(k):
            if mode == "static":
                kids.append(np.clip(best_v + sigma * rng.standard_normal(best_v.shape[0]), 0.0, 1.0))
            else:
                v = best_v.copy()
                n = v.shape[0]
                w = min(block, n)
                start = int(rng.integers(0, n - w + 1))
                v[start:start + w] = np.clip(v[start:start + w] + sigma * rng.standard_normal(w), -1.0, 1.0)
                kids.append(v)
        success = record(kids)
        sigma = min(sigma * 1.5, 1.0) if success else max(sigma * 0.85, 1e-4)
    if best_m == -math.inf:
        raise SearchError("every evaluation was infeasible")
    return SearchResult(best_c, best_m, trace, cands)


# ---- task drivers ---------------------------------------------------------------------------

def family_space(family: str, config: SimConfig) -> Box:
    G = math.expm1(252 * config.daily_growth)
    if family == "constant":
        return Box([-1.0], [1.0], [0.5])
    if family == "vi":
        lo, hi = config.population.discount_rate_range
        return Box([G + 0.002, 0.15], [0.05, 20.0], [0.5 * (lo + hi), config.market.aggression.vi], log_scale=(1,))
    if family == "tf":
        hlo, hhi = config.population.horizon_range
        return Box([2.0, 0.01], [2520.0, 5.0], [0.5 * (hlo + hhi), config.market.aggression.tf], log_scale=(0, 1))
    raise ValueError(f"unknown family {family!r}")


@dataclass
class CandidateObjective:
    """Picklable objective: measure of a Task 1 candidate in a fixed environment."""

    env: Environment
    measure: str = "wealth_multiplier"

    def __call__(self, candidate):
        return evaluate_candidate(candidate, self.env, self.measure).measure


@dataclass
class InvestorObjective:
    env: Environment
    budget: float
    measure: str = "wealth_multiplier"

    def __call__(self, candidate):
        pol = InvestorPolicy(LinearScorePolicy(tuple(candidate["params"])), self.budget)
        return evaluate_investor(pol, self.env, self.measure).measure


def _merge(results):
    trace, cands = [], []
    best_m = -math.inf
    for res in results:
        for _, h, m, _ in res.trace:
            best_m = max(best_m, _score(m))
            trace.append((len(trace) + 1, h, m, best_m))
        cands.extend(res.candidates)
    top = max(results, key=lambda r: r.best_measure)
    return SearchResult(top.best, top.best_measure, trace, cands)


def optimize_trading(env: Environment, budget: int = 200, mode: str = "static", measure: str = "wealth_multiplier",
                     seed: int = 0, workers: int | None = None) -> SearchResult:
    """Task 1: search the adaptive fund's strategy.

    Static mode splits the budget across the constant, value and trend families;
    dynamic mode evolves the full daily schedule from all-cash.
    """
    obj = CandidateObjective(env, measure)
    if mode == "dynamic":
        return optimize_search(obj, budget, seed, "dynamic", np.zeros(env.days), workers=workers,
                               decode=lambda v: {"family": "schedule", "params": [float(x) for x in v]})
    parts = []
    share = [budget // 3 + (1 if i < budget % 3 else 0) for i in range(3)]
    for fam, b in zip(FAMILIES, share):
        if b < 1:
            continue
        parts.append(optimize_search(obj, b, seed, "static", family_space(fam, env.config), workers=workers,
                                     decode=lambda v, f=fam: {"family": f, "params": [float(x) for x in v]}))
    return _merge(parts)


def optimize_investing(env: Environment, budget: int = 200, alloc_budget: float = 1e5, measure: str = "wealth_multiplier",
                       seed: int = 0, workers: int | None = None) -> SearchResult:
    """Task 2: search the weights of a linear scoring allocation rule."""
    obj = InvestorObjective(env, alloc_budget, measure)
    space = Box([-50.0, -20.0, -5.0, -2.0], [50.0, 20.0, 5.0, 2.0], [0.0, 0.0, 0.0, 0.0])
    return optimize_search(obj, budget, seed, "static", space, workers=workers,
                           decode=lambda v: {"family": "linear_score", "params": [float(x) for x in v]})
