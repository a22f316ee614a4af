"""Elitist genetic algorithm over (version, host) chromosomes.

The population is held as two ``(ps, G)`` integer arrays so that
variation, feasibility checks and evaluation are vectorised; only the
healing of infeasible offspring runs per chromosome.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InfeasibleInstanceError
from .metrics import (EvalOptions, EvaluationReport, FitnessWeights, ProportionalNormalizer,
                      evaluate_batch, fitness, report_from_batch)
from .model import ScenarioInstance
from .placement import Placement, heal_arrays, is_feasible_batch, random_genes


@dataclass(frozen=True)
class SolverConfig:
    ps: int = 200
    cr: float = 0.6
    mr: float = 0.01
    ss: int = 20
    it: int = 50
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    elitism_count: int | None = None
    seed: int = 0
    pin_endpoints: bool = False
    thread_capacity: float = math.inf
    reliability_scope: str = "used"
    # Total RT that maps to a normalised RT of 1.  None: the worst total RT
    # in the initial population.
    rt_reference: float | None = None

    def __post_init__(self):
        if self.ps < 2:
            raise ValueError("ps must be >= 2")
        if not 0.0 <= self.cr <= 1.0 or not 0.0 <= self.mr <= 1.0:
            raise ValueError("cr and mr must lie in [0, 1]")
        if not 1 <= self.ss <= self.ps:
            raise ValueError("ss must lie in [1, ps]")
        if self.it < 1:
            raise ValueError("it must be >= 1")
        if not 0 <= self.elite < self.ps:
            raise ValueError("elitism_count must lie in [0, ps)")
        if self.rt_reference is not None and not self.rt_reference > 0:
            raise ValueError("rt_reference must be positive")
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", FitnessWeights(**self.weights))
        self.options  # validates thread_capacity / reliability_scope

    @property
    def elite(self) -> int:
        if self.elitism_count is None:
            return max(1, round(0.02 * self.ps))
        return self.elitism_count

    @property
    def options(self) -> EvalOptions:
        return EvalOptions(self.thread_capacity, self.reliability_scope)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["elitism_count"] = self.elite
        if math.isinf(self.thread_capacity):
            d["thread_capacity"] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "weights" in d:
            w = d["weights"]
            d["weights"] = FitnessWeights(*w) if isinstance(w, (list, tuple)) else FitnessWeights(**w)
        if d.get("thread_capacity") is None:
            d.pop("thread_capacity", None)
        return cls(**d)


# Published per-scale settings.
PRESETS = {
    "small": dict(ps=200, cr=0.6, mr=0.01, ss=20, it=50),
    "medium": dict(ps=300, cr=0.7, mr=0.01, ss=30, it=100),
    "large": dict(ps=400, cr=0.7, mr=0.01, ss=40, it=150),
    "xlarge": dict(ps=500, cr=0.8, mr=0.01, ss=50, it=200),
}


def preset(name: str, **overrides) -> SolverConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return SolverConfig(**{**PRESETS[name], **overrides})


# ---------------------------------------------------------------------------
# parameter estimation


def estimate_population_size(X, Y, N, M, K, alpha=0.9, beta=0.16, gamma=0.16) -> int:
    return round(100 ** alpha * (X * Y) ** beta * (N + M + K) ** gamma)


def crossover_coefficient(X, Y, N, M, K, delta=0.0003, epsilon=0.04) -> float:
    return 0.6 + (X * Y) * delta + (N + M + K) ** epsilon


def estimate_crossover_rate(X, Y, N, M, K, delta=0.0003, epsilon=0.04) -> float:
    return min(crossover_coefficient(X, Y, N, M, K, delta, epsilon), 0.8)


def estimate_iterations(X, Y, N, M, K, zeta=0.9, eta=0.69, theta=0.1) -> int:
    return round(50 ** zeta + (X * Y) ** eta * (N + M + K) ** theta)


def auto_config(inst: ScenarioInstance, **overrides) -> SolverConfig:
    """Config from the estimation formulas; tournament size is ps/10."""
    dims = (inst.X, inst.Y, inst.N, inst.M, inst.K)
    ps = estimate_population_size(*dims)
    kw = dict(ps=ps, cr=estimate_crossover_rate(*dims), mr=0.01,
              ss=max(2, round(ps / 10)), it=estimate_iterations(*dims))
    kw.update(overrides)
    return SolverConfig(**kw)


# ---------------------------------------------------------------------------
# operators


def _tournament(fit: np.ndarray, ss: int, n: int, rng) -> np.ndarray:
    ps = len(fit)
    # ss distinct indices per tournament, uniformly
    cand = np.argpartition(rng.random((n, ps)), ss - 1, axis=1)[:, :ss]
    f = fit[cand]
    winners = np.where(f == f.min(axis=1, keepdims=True), cand, ps)
    return winners.min(axis=1)


def tournament_select(population, fitnesses, ss: int, rng) -> int:
    """Index of the fittest of ``ss`` distinct random contestants (ties: lower index)."""
    fit = np.asarray(fitnesses, dtype=float)
    if len(population) != len(fit):
        raise ValueError("population and fitnesses differ in length")
    if not 1 <= ss <= len(fit):
        raise ValueError("ss must lie in [1, len(population)]")
    return int(_tournament(fit, ss, 1, rng)[0])


def _crossover(va, ha, vb, hb, rng):
    # rows of a and b are mated pairwise; returns the two child arrays
    n, G = va.shape
    if G < 2:
        return (va.copy(), ha.copy()), (vb.copy(), hb.copy())
    cut = rng.integers(1, G, size=n)
    tail = np.arange(G)[None, :] >= cut[:, None]
    c1 = (np.where(tail, vb, va), np.where(tail, hb, ha))
    c2 = (np.where(tail, va, vb), np.where(tail, ha, hb))
    return c1, c2


def single_point_crossover(a: Placement, b: Placement, rng) -> tuple[Placement, Placement]:
    if len(a) != len(b):
        raise ValueError("parents differ in length")
    (v1, h1), (v2, h2) = _crossover(a.versions[None], a.hosts[None], b.versions[None], b.hosts[None], rng)
    layout = a._layout
    return Placement(v1[0], h1[0], layout), Placement(v2[0], h2[0], layout)


def _mutate(inst, vs, hs, mr, rng, pin_endpoints):
    mask = rng.random(vs.shape) < mr
    if mask.any():
        fv, fh = random_genes(inst, rng, size=vs.shape[0], pin_endpoints=pin_endpoints)
        vs = np.where(mask, fv, vs)
        hs = np.where(mask, fh, hs)
    return vs, hs


def insertion_mutation(p: Placement, mr: float, rng, inst: ScenarioInstance,
                       pin_endpoints: bool = False) -> Placement:
    """Each gene is re-drawn (random version, random legal host) with probability ``mr``."""
    vs, hs = _mutate(inst, p.versions[None], p.hosts[None], mr, rng, pin_endpoints)
    return Placement.for_instance(inst, vs[0], hs[0])


def _heal_population(inst, vs, hs, rng, pin_endpoints):
    bad = np.flatnonzero(~is_feasible_batch(inst, vs, hs, pin_endpoints))
    for i in bad:
        heal_arrays(inst, vs[i], hs[i], rng, pin_endpoints)
    return len(bad)


# ---------------------------------------------------------------------------
# history


@dataclass
class RunHistory:
    best: list[float] = field(default_factory=list)
    median: list[float] = field(default_factory=list)
    worst: list[float] = field(default_factory=list)
    runtime_s: float = 0.0
    best_placement: Placement | None = None
    healed: list[int] = field(default_factory=list)

    def record(self, fit: np.ndarray):
        self.best.append(float(fit.min()))
        self.median.append(float(np.median(fit)))
        self.worst.append(float(fit.max()))

    def __len__(self):
        return len(self.best)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "best", "median", "worst"])
        for i, row in enumerate(zip(self.best, self.median, self.worst)):
            w.writerow([i, *(repr(x) for x in row)])
        return buf.getvalue()

    def to_json(self, include_timing=True) -> dict:
        d = {"best": self.best, "median": self.median, "worst": self.worst}
        if include_timing:
            d["runtime_s"] = self.runtime_s
        return d


# ---------------------------------------------------------------------------
# main loop


def initial_population(inst: ScenarioInstance, ps: int, rng, pin_endpoints=False):
    vs, hs = random_genes(inst, rng, size=ps, pin_endpoints=pin_endpoints)
    _heal_population(inst, vs, hs, rng, pin_endpoints)
    return vs, hs


def run(inst: ScenarioInstance, config: SolverConfig = SolverConfig()):
    """Returns ``(best placement, report, history)``.

    Row 0 of the history describes the initial population, row ``i`` the
    population after generation ``i``.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    opts = config.options
    pin = config.pin_endpoints
    w = config.weights
    if inst.n_components == 0:
        raise InfeasibleInstanceError("instance has no components to place")

    vs, hs = initial_population(inst, config.ps, rng, pin)
    ev = evaluate_batch(inst, vs, hs, opts)
    ref = config.rt_reference
    if ref is None:
        ref = float(ev.total_rt.max()) or 1.0
    norm = ProportionalNormalizer(ref)

    def score(ev):
        return fitness(norm(ev.total_rt), ev.rs_p, ev.rs_s, w)

    fit = np.atleast_1d(score(ev))
    hist = RunHistory()
    hist.record(fit)
    hist.healed.append(0)
    i_best = int(np.argmin(fit))
    best = (float(fit[i_best]), vs[i_best].copy(), hs[i_best].copy())

    ps, e = config.ps, config.elite
    n_off = ps - e
    for _ in range(config.it):
        order = np.argsort(fit, kind="stable")
        elite = order[:e]
        parents = _tournament(fit, config.ss, n_off, rng)
        pv, ph = vs[parents], hs[parents]
        n_pairs = n_off // 2
        if n_pairs:
            a, b = slice(0, 2 * n_pairs, 2), slice(1, 2 * n_pairs, 2)
            mate = rng.random(n_pairs) < config.cr
            (v1, h1), (v2, h2) = _crossover(pv[a], ph[a], pv[b], ph[b], rng)
            pv[a] = np.where(mate[:, None], v1, pv[a])
            ph[a] = np.where(mate[:, None], h1, ph[a])
            pv[b] = np.where(mate[:, None], v2, pv[b])
            ph[b] = np.where(mate[:, None], h2, ph[b])
        pv, ph = _mutate(inst, pv, ph, config.mr, rng, pin)
        healed = _heal_population(inst, pv, ph, rng, pin)

        vs = np.concatenate([vs[elite], pv])
        hs = np.concatenate([hs[elite], ph])
        ev = evaluate_batch(inst, vs, hs, opts)
        fit = np.atleast_1d(score(ev))
        hist.record(fit)
        hist.healed.append(healed)
        i_best = int(np.argmin(fit))
        if fit[i_best] < best[0]:
            best = (float(fit[i_best]), vs[i_best].copy(), hs[i_best].copy())

    placement = Placement.for_instance(inst, best[1], best[2])
    bev = evaluate_batch(inst, best[1], best[2], opts)
    report = report_from_batch(bev, 0, w, norm)
    hist.best_placement = placement
    hist.runtime_s = time.perf_counter() - t0
    return placement, report, hist
