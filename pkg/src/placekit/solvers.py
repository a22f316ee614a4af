"""One entry point for every solver, shared by the CLI and the HTTP service."""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import heuristics, moga, oracle
from .metrics import EvaluationReport, FitnessWeights, ProportionalNormalizer, evaluate
from .model import ScenarioInstance
from .placement import Placement, distribution

SOLVERS = ("moga", *heuristics.HEURISTICS, "oracle")


@dataclass
class SolveResult:
    solver: str
    placement: Placement
    report: EvaluationReport
    runtime_s: float
    distribution: dict
    history: moga.RunHistory | None = None

    def to_json(self, inst: ScenarioInstance, include_timing: bool = True) -> dict:
        d = {
            "solver": self.solver,
            "placement": self.placement.to_json(),
            "report": self.report.to_json(),
            "distribution": self.distribution,
        }
        if self.history is not None:
            d["history"] = self.history.to_json(include_timing)
        if include_timing:
            d["runtime_s"] = self.runtime_s
        return d


def solve(inst: ScenarioInstance, solver: str, config: moga.SolverConfig | None = None,
          weights: FitnessWeights | None = None, rt_reference: float | None = None,
          oracle_cap: int = oracle.DEFAULT_CAP) -> SolveResult:
    """Run ``solver`` on ``inst``.

    ``config`` is used by moga only.  Heuristics are scored against
    ``rt_reference`` when given, else the worst heuristic total RT.
    """
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; choose from {', '.join(SOLVERS)}")
    t0 = time.perf_counter()
    history = None
    if solver == "moga":
        config = config or moga.SolverConfig()
        if weights is not None:
            config = moga.SolverConfig.from_dict({**config.to_dict(), "weights": weights.as_tuple()})
        placement, report, history = moga.run(inst, config)
    elif solver == "oracle":
        w = weights or FitnessWeights()
        norm = ProportionalNormalizer(rt_reference) if rt_reference else None
        res = oracle.enumerate_optimal(inst, w, norm, cap=oracle_cap)
        placement, report = res.placement, res.report
    else:
        placement = heuristics.HEURISTICS[solver](inst)
        ref = rt_reference or heuristics.heuristic_reference(inst)
        report = evaluate(inst, placement, weights or FitnessWeights(), ProportionalNormalizer(ref))
    runtime = time.perf_counter() - t0
    return SolveResult(solver, placement, report, runtime, distribution(inst, placement), history)
