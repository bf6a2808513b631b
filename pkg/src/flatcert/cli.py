"""Command-line surface: ledger emission, surface manufacture, audits, certification.

Subcommands
-----------
ledger    derive the constant ledger and threshold chain (JSON)
exact     write an exact catalogue surface (gf1)
solve     solve the graph Dirichlet problem from a boundary preset or file (gf1)
audit     dyadic decay audit of a surface (CSV)
certify   one improvement step with certificate (JSON)
iterate   repeated improvement steps (JSON list)
report    merge certificate JSONs into a plot-ready CSV

Every command exits 0 exactly when all verdicts pass; a failing inequality is
named on stderr with its margin.  Reports are byte-deterministic for a fixed
config: floats are written in shortest round-trip form and scan orders are
fixed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .envelope import SlabError
from .grid import boundary_trace, make_grid, read_gf1, write_gf1
from .ledger import HarnackParams, check_threshold_chain, derive_ledger, ledger_to_json
from .mse import ConvergenceError, exact_solution, preset_boundary, solve_mse
from .pipeline import (
    StageFailure,
    audit_to_csv,
    certificate_to_json,
    harnack_decay_audit,
    improvement_step,
    iterate_flatness,
    samples_from_graph,
)

MIN_RESOLUTION = 17


@dataclass(frozen=True)
class RunConfig:
    """Validated invocation parameters shared by the subcommands."""

    command: str
    n: int = 3
    eps1: float = 0.25
    eta: float = 0.2
    resolution: int | None = None  # None: surface file's resolution, else 129
    radius: float = 1.0
    eps: float = 1e-2
    digits: int | None = None
    seed: int = 0
    out: str | None = None
    fmt: str = "json"
    options: dict | None = None

    def __post_init__(self):
        if self.resolution is not None and (
            self.resolution < MIN_RESOLUTION or self.resolution % 2 == 0
        ):
            raise ValueError(
                f"resolution must be odd and >= {MIN_RESOLUTION}, got {self.resolution}"
            )
        if self.out is not None:
            parent = Path(self.out).resolve().parent
            if not parent.is_dir():
                raise ValueError(f"output directory {parent} does not exist")

    def params(self) -> HarnackParams:
        return HarnackParams(self.n, self.eps1, self.eta)

    def opt(self, key, default=None):
        return (self.options or {}).get(key, default)


def _dump_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump_text(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_vector(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip() != "")


def _load_samples(config: RunConfig):
    """(samples, effective resolution) from --surface or --exact.

    Without an explicit --resolution, surface files keep their native grid;
    re-binning onto a coarser lattice would manufacture artificial column
    thickness and fail certification for no geometric reason.
    """
    path = config.opt("surface")
    if path:
        surface = read_gf1(path)
        return samples_from_graph(surface), config.resolution or surface.resolution
    kind = config.opt("exact")
    if kind:
        resolution = config.resolution or 129
        grid = make_grid(config.n - 1, config.radius, resolution)
        field = exact_solution(
            kind,
            grid=grid,
            a=config.opt("a") or (0.0,) * grid.base_dim,
            c=config.opt("c", 0.0),
            scale=config.opt("scale", 1.0),
        )
        return samples_from_graph(field), resolution
    raise ValueError("either --surface or --exact is required")


def cmd_ledger(config: RunConfig) -> int:
    ledger = derive_ledger(config.params(), config.digits)
    chain = check_threshold_chain(ledger)
    _dump_json(ledger_to_json(ledger, chain), config.out)
    if not chain.passed:
        first = next(l for l in chain.links if not l.ok)
        print(
            f"FAIL {first.name}: margin_log2 {first.margin_log2!r}", file=sys.stderr
        )
        return 1
    return 0


def cmd_exact(config: RunConfig) -> int:
    base_dim = config.n - 1
    grid = make_grid(base_dim, config.radius, config.resolution or 129)
    field = exact_solution(
        config.opt("kind", "affine"),
        grid=grid,
        a=config.opt("a") or (0.0,) * base_dim,
        c=config.opt("c", 0.0),
        scale=config.opt("scale", 1.0),
    )
    if not config.out:
        raise ValueError("exact requires --out")
    write_gf1(field, config.out)
    print(f"wrote {config.out}")
    return 0


def cmd_solve(config: RunConfig) -> int:
    bfile = config.opt("boundary_file")
    if bfile:
        data = read_gf1(bfile)
    else:
        grid = make_grid(config.n - 1, config.radius, config.resolution or 129)
        data = preset_boundary(
            grid,
            config.opt("preset", "saddle"),
            config.eps,
            q=config.opt("q", 0.12),
            tilt=config.opt("tilt"),
            amp=config.opt("amp", 0.0),
            seed=config.seed,
        )
    sol = solve_mse(boundary_trace(data), tol=config.opt("tol"))
    if not config.out:
        raise ValueError("solve requires --out")
    write_gf1(sol.u, config.out)
    print(
        f"wrote {config.out} (residual {sol.residual_sup!r}, {sol.iterations} iterations)"
    )
    return 0


def cmd_audit(config: RunConfig) -> int:
    samples, resolution = _load_samples(config)
    center_opt = config.opt("center")
    if center_opt:
        center = np.asarray(center_opt, dtype=float)
    else:
        center = samples[int(np.argmin(np.sum(samples * samples, axis=1)))]
    audit = harnack_decay_audit(
        samples, center, config.eps, config.params(), resolution=resolution
    )
    if config.fmt == "json":
        rows = [
            {
                "m": r.m,
                "radius": r.radius,
                "measured": None if r.measured != r.measured else r.measured,
                "bound": r.bound,
                "n_samples": r.n_samples,
                "ok": r.ok,
                "truncated": r.truncated,
            }
            for r in audit.rows
        ]
        payload = {
            "center": list(audit.center),
            "eps": audit.eps,
            "mtilde": audit.mtilde,
            "rows": rows,
            "modulus_ok": None if audit.modulus is None else audit.modulus.ok,
            "passed": audit.passed,
        }
        _dump_json(payload, config.out)
    else:
        _dump_text(audit_to_csv(audit), config.out)
    if not audit.passed:
        bad = next((r for r in audit.rows if not r.ok), None)
        if bad is not None:
            print(
                f"FAIL decay at depth {bad.m}: measured {bad.measured!r} "
                f"> bound {bad.bound!r}",
                file=sys.stderr,
            )
        elif audit.modulus is not None and not audit.modulus.ok:
            print(
                f"FAIL modulus: violation {audit.modulus.max_violation!r}",
                file=sys.stderr,
            )
        return 1
    return 0


def cmd_certify(config: RunConfig) -> int:
    samples, resolution = _load_samples(config)
    ledger = derive_ledger(config.params(), config.digits)
    try:
        run = improvement_step(
            samples,
            config.eps,
            ledger,
            resolution=resolution,
            radius=config.radius,
            empirical_radius=config.opt("empirical_radius", 0.125),
            refine=not config.opt("no_refine", False),
        )
    except StageFailure as exc:
        payload = {
            "verdict": False,
            "failed_stage": exc.failing.name,
            "detail": exc.failing.detail,
            "stages": [
                {"name": s.name, "ok": s.ok, "detail": s.detail} for s in exc.stages
            ],
        }
        _dump_json(payload, config.out)
        print(f"FAIL {exc.failing.name}: {exc.failing.detail}", file=sys.stderr)
        return 1
    cert = run.certificate
    _dump_json(certificate_to_json(cert, config.params()), config.out)
    return 0 if cert.verdict else 1


def cmd_iterate(config: RunConfig) -> int:
    samples, resolution = _load_samples(config)
    ledger = derive_ledger(config.params(), config.digits)
    result = iterate_flatness(
        samples,
        config.eps,
        config.opt("steps", 3),
        ledger,
        resolution=resolution,
    )
    payload = {
        "certificates": [
            certificate_to_json(c, config.params()) for c in result.certificates
        ],
        "eps_sequence": list(result.eps_sequence),
        "stopped_early": result.stopped_early,
        "stop_reason": result.stop_reason,
    }
    _dump_json(payload, config.out)
    failed = result.stopped_early and "failed" in result.stop_reason
    if failed:
        print(f"FAIL {result.stop_reason}", file=sys.stderr)
    return 1 if failed else 0


def cmd_report(config: RunConfig) -> int:
    rows = []
    for path in config.opt("inputs", []):
        with open(path) as fh:
            cert = json.load(fh)
        meas = cert.get("measurements", {})
        rows.append(
            (
                cert.get("eps"),
                meas.get("closeness_measured"),
                meas.get("closeness_bound"),
            )
        )
    rows.sort(key=lambda r: (r[0] is None, r[0]))
    lines = ["eps,closeness_measured,closeness_bound"]
    lines.extend(f"{e!r},{m!r},{b!r}" for e, m, b in rows)
    _dump_text("\n".join(lines) + "\n", config.out)
    return 0


_COMMANDS = {
    "ledger": cmd_ledger,
    "exact": cmd_exact,
    "solve": cmd_solve,
    "audit": cmd_audit,
    "certify": cmd_certify,
    "iterate": cmd_iterate,
    "report": cmd_report,
}


def run(config: RunConfig) -> int:
    """Dispatch a validated config; returns the process exit status."""
    return _COMMANDS[config.command](config)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flatcert",
        description="certified flatness improvement for desk-scale minimal graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, eps=False):
        p.add_argument("--n", type=int, default=3)
        p.add_argument("--eps1", type=float, default=0.25)
        p.add_argument("--eta", type=float, default=0.2)
        p.add_argument("--resolution", type=int, default=None)
        p.add_argument("--radius", type=float, default=1.0)
        p.add_argument("--digits", type=int, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        if eps:
            p.add_argument("--eps", type=float, default=1e-2)

    p = sub.add_parser("ledger", help="derive the constant ledger (JSON)")
    common(p)

    p = sub.add_parser("exact", help="write an exact catalogue surface (gf1)")
    common(p)
    p.add_argument("--kind", choices=("affine", "scherk"), default="affine")
    p.add_argument("--a", type=_parse_vector, default=None)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)

    p = sub.add_parser("solve", help="solve the Dirichlet problem (gf1)")
    common(p, eps=True)
    p.add_argument("--preset", choices=("plane", "saddle", "bump", "scherk"), default="saddle")
    p.add_argument("--boundary-file", default=None)
    p.add_argument("--q", type=float, default=0.12)
    p.add_argument("--tilt", type=_parse_vector, default=None)
    p.add_argument("--amp", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("audit", help="dyadic decay audit (CSV or JSON)")
    common(p, eps=True)
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    p.add_argument("--surface", default=None)
    p.add_argument("--exact", dest="exact_kind", choices=("affine", "scherk"), default=None)
    p.add_argument("--a", type=_parse_vector, default=None)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--center", type=_parse_vector, default=None)

    p = sub.add_parser("certify", help="one improvement step (JSON certificate)")
    common(p, eps=True)
    p.add_argument("--surface", default=None)
    p.add_argument("--exact", dest="exact_kind", choices=("affine", "scherk"), default=None)
    p.add_argument("--a", type=_parse_vector, default=None)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--empirical-radius", type=float, default=0.125)
    p.add_argument("--no-refine", action="store_true")

    p = sub.add_parser("iterate", help="repeated improvement steps (JSON)")
    common(p, eps=True)
    p.add_argument("--surface", default=None)
    p.add_argument("--exact", dest="exact_kind", choices=("affine", "scherk"), default=None)
    p.add_argument("--a", type=_parse_vector, default=None)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=3)

    p = sub.add_parser("report", help="merge certificates into a CSV")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", default=None)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    options = {}
    for key in (
        "kind",
        "a",
        "c",
        "scale",
        "preset",
        "boundary_file",
        "q",
        "tilt",
        "amp",
        "tol",
        "center",
        "surface",
        "steps",
        "empirical_radius",
        "no_refine",
        "inputs",
    ):
        if hasattr(args, key):
            options[key] = getattr(args, key)
    if getattr(args, "exact_kind", None):
        options["exact"] = args.exact_kind
    return RunConfig(
        command=args.command,
        n=getattr(args, "n", 3),
        eps1=getattr(args, "eps1", 0.25),
        eta=getattr(args, "eta", 0.2),
        resolution=getattr(args, "resolution", None),
        radius=getattr(args, "radius", 1.0),
        eps=getattr(args, "eps", 1e-2),
        digits=getattr(args, "digits", None),
        seed=getattr(args, "seed", 0),
        out=getattr(args, "out", None),
        fmt=getattr(args, "fmt", "json"),
        options=options,
    )


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        return run(config)
    except (ValueError, SlabError, ConvergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
