"""JSON-over-HTTP solve service.

Stateless: every request carries its full scenario and owns its rng.
Validation problems answer 400 with a violation list; instances that
cannot be placed answer 422.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .errors import InfeasibleInstanceError, ScenarioError, SearchSpaceTooLarge
from .model import instance_to_document, load_scenario
from .moga import SolverConfig
from .scenario import SCALES, builtin_scale, generate
from .solvers import SOLVERS, solve


class SolveRequest(BaseModel):
    scenario: dict[str, Any]
    solver: str = "moga"
    config: dict[str, Any] | None = None
    include_timing: bool = True


class GenerateRequest(BaseModel):
    scale: str = "small"
    seed: int = Field(0, ge=0)


def _bad_request(violations):
    return JSONResponse(status_code=400, content={
        "error": "validation",
        "violations": [{"path": p, "message": m} for p, m in violations],
    })


def create_app() -> FastAPI:
    app = FastAPI(title="placekit", version=__version__)

    @app.exception_handler(RequestValidationError)
    async def _request_invalid(request: Request, exc: RequestValidationError):
        return _bad_request([(".".join(str(x) for x in e["loc"] if x != "body"), e["msg"])
                             for e in exc.errors()])

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "version": __version__, "solvers": list(SOLVERS)}

    @app.post("/v1/solve")
    def solve_endpoint(req: SolveRequest):
        if req.solver not in SOLVERS:
            return _bad_request([("solver", f"unknown solver {req.solver!r}; choose from {', '.join(SOLVERS)}")])
        try:
            inst = load_scenario(req.scenario)
        except ScenarioError as exc:
            return _bad_request([(f"scenario.{p}" if p else "scenario", m) for p, m in exc.violations])
        config = None
        if req.solver == "moga":
            try:
                config = SolverConfig.from_dict(req.config or {})
            except (TypeError, ValueError) as exc:
                return _bad_request([("config", str(exc))])
        try:
            result = solve(inst, req.solver, config)
        except (InfeasibleInstanceError, SearchSpaceTooLarge) as exc:
            return JSONResponse(status_code=422, content={"error": type(exc).__name__, "detail": str(exc)})
        return result.to_json(inst, include_timing=req.include_timing)

    @app.post("/v1/generate")
    def generate_endpoint(req: GenerateRequest):
        if req.scale not in SCALES:
            return _bad_request([("scale", f"unknown scale {req.scale!r}; choose from {', '.join(SCALES)}")])
        return instance_to_document(generate(builtin_scale(req.scale), req.seed))

    return app


app = create_app()
