"""FastAPI service wrapping the certification core.

Every operation is a pure function of its request, so the endpoints are safe
for concurrent clients.  Surfaces travel as gf1 text in JSON bodies; run
``uvicorn flatcert.service.app:app`` to serve.
"""

from __future__ import annotations


import math
import tempfile
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from ..envelope import SlabError
from ..grid import GridFunction, boundary_trace, make_grid, read_gf1, write_gf1
from ..ledger import HarnackParams, check_threshold_chain, derive_ledger, ledger_to_json
from ..mse import ConvergenceError, exact_solution, preset_boundary, solve_mse
from ..pipeline import (
    StageFailure,
    audit_to_csv,
    certificate_to_json,
    harnack_decay_audit,
    improvement_step,
    iterate_flatness,
    samples_from_graph,
)
from .models import (
    AuditRequest,
    AuditResponse,
    AuditRowModel,
    CertifyRequest,
    CertifyResponse,
    ExactSurfaceRequest,
    IterateRequest,
    IterateResponse,
    LedgerRequest,
    SolveRequest,
    SurfaceResponse,
)


def _gf1_text(field: GridFunction) -> str:
    with tempfile.NamedTemporaryFile("r", suffix=".gf", delete=False) as handle:
        path = Path(handle.name)
    try:
        write_gf1(field, path)
        return path.read_text()
    finally:
        path.unlink(missing_ok=True)


def _gf1_parse(text: str) -> GridFunction:
    with tempfile.NamedTemporaryFile("w", suffix=".gf", delete=False) as handle:
        handle.write(text)
        path = Path(handle.name)
    try:
        return read_gf1(path)
    finally:
        path.unlink(missing_ok=True)


def _bad_request(exc: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=str(exc))


def create_app() -> FastAPI:
    app = FastAPI(
        title="flatcert",
        description="certified flatness improvement for desk-scale minimal graphs",
    )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/ledger")
    def ledger(req: LedgerRequest):
        """Derive the constant ledger and its threshold chain."""
        try:
            led = derive_ledger(HarnackParams(req.n, req.eps1, req.eta), req.digits)
        except ValueError as exc:
            raise _bad_request(exc)
        return ledger_to_json(led, check_threshold_chain(led))

    @app.post("/surface/exact", response_model=SurfaceResponse)
    def surface_exact(req: ExactSurfaceRequest):
        """Sample an exact catalogue surface."""
        try:
            grid = make_grid(req.n - 1, req.radius, req.resolution)
            a = req.a if req.a is not None else [0.0] * grid.base_dim
            field = exact_solution(req.kind, grid=grid, a=a, c=req.c, scale=req.scale)
        except ValueError as exc:
            raise _bad_request(exc)
        return SurfaceResponse(gf1=_gf1_text(field))

    @app.post("/surface/solve", response_model=SurfaceResponse)
    def surface_solve(req: SolveRequest):
        """Solve the graph Dirichlet problem from a preset or a gf1 boundary."""
        try:
            if req.boundary_gf1 is not None:
                data = _gf1_parse(req.boundary_gf1)
            else:
                grid = make_grid(req.n - 1, req.radius, req.resolution)
                data = preset_boundary(
                    grid, req.preset or "saddle", req.eps,
                    q=req.q, tilt=req.tilt, amp=req.amp, seed=req.seed,
                )
            sol = solve_mse(boundary_trace(data), tol=req.tol)
        except (ValueError, ConvergenceError) as exc:
            raise _bad_request(exc)
        return SurfaceResponse(
            gf1=_gf1_text(sol.u),
            residual_sup=sol.residual_sup,
            iterations=sol.iterations,
        )

    @app.post("/audit", response_model=AuditResponse)
    def audit(req: AuditRequest):
        """Dyadic decay audit of a gf1 surface."""
        try:
            surface = _gf1_parse(req.surface_gf1)
            samples = samples_from_graph(surface)
            if req.center is not None:
                center = np.asarray(req.center, dtype=float)
            else:
                center = samples[int(np.argmin(np.sum(samples * samples, axis=1)))]
            result = harnack_decay_audit(
                samples, center, req.eps,
                HarnackParams(req.n, req.eps1, req.eta),
                resolution=req.resolution or surface.resolution,
            )
        except (ValueError, SlabError) as exc:
            raise _bad_request(exc)
        return AuditResponse(
            passed=result.passed,
            mtilde=result.mtilde,
            rows=[
                AuditRowModel(
                    m=r.m,
                    radius=r.radius,
                    measured=None if math.isnan(r.measured) else r.measured,
                    bound=r.bound,
                    n_samples=r.n_samples,
                    ok=r.ok,
                    truncated=r.truncated,
                )
                for r in result.rows
            ],
            modulus_ok=None if result.modulus is None else result.modulus.ok,
            csv=audit_to_csv(result),
        )

    @app.post("/certify", response_model=CertifyResponse)
    def certify(req: CertifyRequest):
        """One improvement step; 200 with verdict either way, 400 on bad input."""
        params = HarnackParams(req.n, req.eps1, req.eta)
        try:
            surface = _gf1_parse(req.surface_gf1)
            samples = samples_from_graph(surface)
            ledger = derive_ledger(params)
            run = improvement_step(
                samples, req.eps, ledger,
                resolution=req.resolution or surface.resolution,
                empirical_radius=req.empirical_radius,
                refine=req.refine,
            )
        except StageFailure as exc:
            return CertifyResponse(
                passed=False,
                certificate={
                    "failed_stage": exc.failing.name,
                    "detail": exc.failing.detail,
                    "stages": [
                        {"name": s.name, "ok": s.ok, "detail": s.detail}
                        for s in exc.stages
                    ],
                },
            )
        except (ValueError, SlabError, ConvergenceError) as exc:
            raise _bad_request(exc)
        return CertifyResponse(
            passed=run.certificate.verdict,
            certificate=certificate_to_json(run.certificate, params),
        )

    @app.post("/iterate", response_model=IterateResponse)
    def iterate(req: IterateRequest):
        """Repeated improvement steps across scales."""
        params = HarnackParams(req.n, req.eps1, req.eta)
        try:
            surface = _gf1_parse(req.surface_gf1)
            samples = samples_from_graph(surface)
            ledger = derive_ledger(params)
            result = iterate_flatness(
                samples, req.eps, req.steps, ledger,
                resolution=req.resolution or surface.resolution,
            )
        except (ValueError, SlabError, ConvergenceError) as exc:
            raise _bad_request(exc)
        return IterateResponse(
            certificates=[
                certificate_to_json(c, params) for c in result.certificates
            ],
            eps_sequence=list(result.eps_sequence),
            stopped_early=result.stopped_early,
            stop_reason=result.stop_reason,
        )

    return app


app = create_app()
