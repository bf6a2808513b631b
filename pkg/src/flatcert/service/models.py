"""Pydantic request/response schemas for the certification service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class LedgerRequest(BaseModel):
    n: int = Field(3, ge=2)
    eps1: float = Field(0.25, gt=0)
    eta: float = Field(0.2, gt=0)
    digits: int | None = Field(None, ge=60)


class ExactSurfaceRequest(BaseModel):
    kind: str = "affine"
    a: list[float] | None = None
    c: float = 0.0
    scale: float = 1.0
    n: int = Field(3, ge=2, le=3)
    radius: float = Field(1.0, gt=0)
    resolution: int = Field(129, ge=17)


class SolveRequest(BaseModel):
    preset: str | None = "saddle"
    boundary_gf1: str | None = None
    eps: float = Field(1e-2, gt=0)
    q: float = 0.12
    tilt: list[float] | None = None
    amp: float = 0.0
    seed: int = 0
    tol: float | None = None
    n: int = Field(3, ge=2, le=3)
    radius: float = Field(1.0, gt=0)
    resolution: int = Field(129, ge=17)


class SurfaceResponse(BaseModel):
    gf1: str
    residual_sup: float | None = None
    iterations: int | None = None


class AuditRequest(BaseModel):
    surface_gf1: str
    eps: float = Field(1e-2, gt=0)
    n: int = Field(3, ge=2)
    eps1: float = 0.25
    eta: float = 0.2
    center: list[float] | None = None
    resolution: int | None = Field(None, ge=17)  # None: the surface's own grid


class AuditRowModel(BaseModel):
    m: int
    radius: float
    measured: float | None
    bound: float
    n_samples: int
    ok: bool
    truncated: bool


class AuditResponse(BaseModel):
    passed: bool
    mtilde: int
    rows: list[AuditRowModel]
    modulus_ok: bool | None
    csv: str


class CertifyRequest(BaseModel):
    surface_gf1: str
    eps: float = Field(1e-2, gt=0)
    n: int = Field(3, ge=2)
    eps1: float = 0.25
    eta: float = 0.2
    resolution: int | None = Field(None, ge=17)  # None: the surface's own grid
    empirical_radius: float = 0.125
    refine: bool = True


class CertifyResponse(BaseModel):
    passed: bool
    certificate: dict


class IterateRequest(CertifyRequest):
    steps: int = Field(3, ge=1)


class IterateResponse(BaseModel):
    certificates: list[dict]
    eps_sequence: list[float]
    stopped_early: bool
    stop_reason: str
