"""Exhaustive solver for tiny instances, and a brute-force dominance filter.

Both exist to check the real solvers: enumeration gives the exact optimum
under a fixed normaliser, and ``dominance_oracle`` is the quadratic
reference for :func:`placekit.tuning.pareto_front`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleInstanceError, SearchSpaceTooLarge
from .metrics import (DEFAULT_OPTIONS, EvalOptions, EvaluationReport, FitnessWeights,
                      ProportionalNormalizer, evaluate_batch, fitness, report_from_batch)
from .model import ScenarioInstance
from .placement import Placement, is_feasible_batch, legal_host_array

DEFAULT_CAP = 10_000_000
CHUNK = 1 << 15


@dataclass
class OracleResult:
    placement: Placement
    fitness: float
    report: EvaluationReport
    n_candidates: int
    n_feasible: int

    def __iter__(self):
        # unpacks as (placement, fitness)
        yield self.placement
        yield self.fitness


def _options(inst, pin_endpoints):
    # per gene: every (version, host) pair, ordered by version then host index
    out = []
    for g in range(inst.n_components):
        hosts = np.sort(legal_host_array(inst, g, pin_endpoints))
        v = np.repeat(np.arange(inst.V), len(hosts))
        h = np.tile(hosts, inst.V)
        out.append((v, h))
    return out


def search_space_size(inst: ScenarioInstance, pin_endpoints: bool = False) -> int:
    n = 1
    for v, _ in _options(inst, pin_endpoints):
        n *= len(v)
    return n


def _chunks(opts, total):
    radix = np.array([len(v) for v, _ in opts], dtype=np.int64)
    G = len(opts)
    for start in range(0, total, CHUNK):
        idx = np.arange(start, min(start + CHUNK, total), dtype=np.int64)
        digits = np.empty((len(idx), G), dtype=np.int64)
        rem = idx.copy()
        # gene 0 is the most significant digit, so index order is lexicographic
        for g in range(G - 1, -1, -1):
            digits[:, g] = rem % radix[g]
            rem //= radix[g]
        vs = np.empty_like(digits)
        hs = np.empty_like(digits)
        for g, (v, h) in enumerate(opts):
            vs[:, g] = v[digits[:, g]]
            hs[:, g] = h[digits[:, g]]
        yield vs, hs


def enumerate_optimal(inst: ScenarioInstance, weights: FitnessWeights = FitnessWeights(),
                      normalizer=None, cap: int = DEFAULT_CAP, pin_endpoints: bool = False,
                      options: EvalOptions = DEFAULT_OPTIONS) -> OracleResult:
    """Best feasible placement by exhaustion.

    Without a normaliser, total RT is divided by the largest total RT of
    any feasible placement (found in a first pass).  Ties keep the
    lexicographically smallest gene array.
    """
    if inst.n_components == 0:
        raise InfeasibleInstanceError("instance has no components to place")
    opts = _options(inst, pin_endpoints)
    total = search_space_size(inst, pin_endpoints)
    if total > cap:
        raise SearchSpaceTooLarge(f"{total} candidate placements exceed the cap of {cap}")

    if normalizer is None:
        worst, n_feasible = -np.inf, 0
        for vs, hs in _chunks(opts, total):
            ok = is_feasible_batch(inst, vs, hs, pin_endpoints)
            if ok.any():
                n_feasible += int(ok.sum())
                worst = max(worst, float(evaluate_batch(inst, vs[ok], hs[ok], options).total_rt.max()))
        if n_feasible == 0:
            raise InfeasibleInstanceError("no feasible placement exists")
        normalizer = ProportionalNormalizer(worst if worst > 0 else 1.0)

    best_f, best, n_feasible = np.inf, None, 0
    for vs, hs in _chunks(opts, total):
        ok = np.flatnonzero(is_feasible_batch(inst, vs, hs, pin_endpoints))
        if not ok.size:
            continue
        n_feasible += ok.size
        ev = evaluate_batch(inst, vs[ok], hs[ok], options)
        f = np.atleast_1d(fitness(normalizer(ev.total_rt), ev.rs_p, ev.rs_s, weights))
        i = int(np.argmin(f))  # first minimum = lexicographically smallest
        if f[i] < best_f:
            best_f, best = float(f[i]), (vs[ok[i]].copy(), hs[ok[i]].copy())
    if best is None:
        raise InfeasibleInstanceError("no feasible placement exists")
    placement = Placement.for_instance(inst, *best)
    report = report_from_batch(evaluate_batch(inst, best[0], best[1], options), 0, weights, normalizer)
    return OracleResult(placement, best_f, report, total, n_feasible)


# ---------------------------------------------------------------------------
# dominance


def config_hash(config) -> str:
    """Stable hex digest of a config (anything with ``to_dict`` or a plain dict)."""
    d = config.to_dict() if hasattr(config, "to_dict") else dict(config)
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


def _dominates(p, q) -> bool:
    return (p.best_fitness <= q.best_fitness and p.runtime <= q.runtime
            and (p.best_fitness < q.best_fitness or p.runtime < q.runtime))


def dominance_oracle(points) -> list:
    """Non-dominated subset by pairwise comparison, ascending runtime.

    Exact duplicates in (fitness, runtime) keep only the one with the
    smallest config hash.
    """
    points = list(points)
    hashes = [config_hash(p.config) for p in points]
    keep = []
    for i, p in enumerate(points):
        if any(_dominates(q, p) for q in points):
            continue
        twins = [j for j, q in enumerate(points)
                 if q.best_fitness == p.best_fitness and q.runtime == p.runtime]
        if i != min(twins, key=lambda j: (hashes[j], j)):
            continue
        keep.append(p)
    return sorted(keep, key=lambda p: (p.runtime, p.best_fitness))
