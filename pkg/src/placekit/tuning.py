"""Grid search over GA settings and Pareto-based configuration selection."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import moga
from .heuristics import heuristic_reference
from .model import ScenarioInstance
from .oracle import config_hash

DEFAULT_GRID = {
    "ps": [50, 100, 200, 300],
    "cr": [0.5, 0.6, 0.7, 0.8],
    "mr": [0.005, 0.01, 0.02],
    "elitism": [0.01, 0.02, 0.05],
}
GRID_KEYS = ("ps", "elitism", "cr", "mr")

# Constants of the estimation formulas, as published.
DEFAULT_CONSTANTS = dict(alpha=0.9, beta=0.16, gamma=0.16, delta=0.0003, epsilon=0.04,
                       zeta=0.9, eta=0.69, theta=0.1)


@dataclass(frozen=True)
class ParetoPoint:
    config: moga.SolverConfig
    best_fitness: float
    runtime: float
    elitism: float | None = None  # rate (fraction of ps) the point was built from

    def __post_init__(self):
        if not self.runtime > 0:
            raise ValueError("runtime must be positive")
        if self.elitism is None:
            object.__setattr__(self, "elitism", self.config.elite / self.config.ps)

    def row(self) -> dict:
        c = self.config
        return {"ps": c.ps, "elitism": self.elitism, "cr": c.cr, "mr": c.mr,
                "fitness": self.best_fitness, "runtime_s": self.runtime}


def elitism_count(rate: float, ps: int) -> int:
    # at least one elite so the best-so-far is never lost
    return min(ps - 1, max(1, round(rate * ps)))


def _cell(args):
    inst, cfg, repeats = args
    fits, times = [], []
    for r in range(repeats):
        _, rep, hist = moga.run(inst, replace(cfg, seed=cfg.seed + r))
        fits.append(rep.fitness)
        times.append(hist.runtime_s)
    return float(np.mean(fits)), float(np.mean(times))


def grid_configs(grid: dict, base: moga.SolverConfig) -> list[tuple[moga.SolverConfig, float]]:
    missing = [k for k in GRID_KEYS if not grid.get(k)]
    if missing:
        raise ValueError(f"grid needs non-empty value lists for {', '.join(missing)}")
    out = []
    for ps, el, cr, mr in itertools.product(*(grid[k] for k in GRID_KEYS)):
        ss = min(base.ss, ps)
        cfg = replace(base, ps=ps, cr=cr, mr=mr, ss=ss, elitism_count=elitism_count(el, ps))
        out.append((cfg, el))
    return out


def grid_search(inst: ScenarioInstance, grid: dict = DEFAULT_GRID, repeats: int = 3, seed: int = 0,
                base: moga.SolverConfig | None = None, workers: int | None = None) -> list[ParetoPoint]:
    """Run the GA for every grid combination, averaging over ``repeats`` seeds.

    All runs share one RT reference (the worst heuristic total RT) so their
    fitness values are comparable.  ``workers`` defaults to the
    ``PLACEKIT_THREADS`` environment variable, else 1.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if base is None:
        base = moga.preset("small")
    if base.rt_reference is None:
        base = replace(base, rt_reference=heuristic_reference(inst))
    base = replace(base, seed=seed)
    cells = grid_configs(grid, base)
    if workers is None:
        workers = int(os.environ.get("PLACEKIT_THREADS", "1"))
    jobs = [(inst, cfg, repeats) for cfg, _ in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]
    return [ParetoPoint(cfg, f, max(t, 1e-12), el) for (cfg, el), (f, t) in zip(cells, results)]


def pareto_front(points) -> list[ParetoPoint]:
    """Non-dominated points under minimisation of (fitness, runtime).

    Exact duplicates keep the one with the smallest config hash.  Output is
    in ascending runtime.
    """
    keyed = [((p.runtime, p.best_fitness, config_hash(p.config), i), p) for i, p in enumerate(points)]
    keyed.sort(key=lambda kp: kp[0])
    front, best = [], np.inf
    for _, p in keyed:
        # sorted by runtime first, so p is dominated iff an earlier point has fitness <= its own
        if p.best_fitness < best:
            front.append(p)
            best = p.best_fitness
    return front


def _lower_median(values):
    values = sorted(values)
    return values[(len(values) - 1) // 2]


def select_config(front) -> moga.SolverConfig:
    """Per-parameter lower median over the front, assembled into one config."""
    front = list(front)
    if not front:
        raise ValueError("empty front")
    ps = _lower_median(p.config.ps for p in front)
    cr = _lower_median(p.config.cr for p in front)
    mr = _lower_median(p.config.mr for p in front)
    el = _lower_median(p.elitism for p in front)
    base = front[0].config
    return replace(base, ps=ps, cr=cr, mr=mr, ss=min(base.ss, ps), elitism_count=elitism_count(el, ps))


def formula_predictions(X, Y, N, M, K, constants=DEFAULT_CONSTANTS) -> dict:
    c = constants
    return {
        "ps": moga.estimate_population_size(X, Y, N, M, K, c["alpha"], c["beta"], c["gamma"]),
        "cr": moga.estimate_crossover_rate(X, Y, N, M, K, c["delta"], c["epsilon"]),
        "it": moga.estimate_iterations(X, Y, N, M, K, c["zeta"], c["eta"], c["theta"]),
    }


def fit_scaling_constants(selections: dict, constants=DEFAULT_CONSTANTS) -> dict:
    """Relative error of the formula predictions against tuned selections.

    ``selections`` maps a scale name to a dict with the instance shape
    (X, Y, N, M, K) and any of the tuned values ps, cr, it.  Returns, per
    scale, ``{param: |pred - tuned| / tuned}``.  Constants are evaluated,
    not re-fitted.
    """
    out = {}
    for name, sel in selections.items():
        pred = formula_predictions(sel["X"], sel["Y"], sel["N"], sel["M"], sel["K"], constants)
        out[name] = {k: abs(pred[k] - sel[k]) / abs(sel[k]) for k in ("ps", "cr", "it") if k in sel}
    return out
