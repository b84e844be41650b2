"""Batch front-end.

Usage::

    semibeltrami <command> --config job.json [--out DIR] [--seed N]

Commands: ``solve-beltrami``, ``solve-semilinear``, ``solve-poisson``,
``map``, ``verify``, ``export``. Exit status is 0 on success, 1 on a
configuration error and 2 when a solver does not converge or a
verification check fails. Diagnostics go to stderr as JSON lines.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import io
from .anisotropic import (MatrixField, WeakTestSet, matrix_preset, mu_from_A, preset_Q,
                          sigma_from_source, solve_poisson_semilinear, weak_residual)
from .beltrami import (BeltramiCoefficient, LinearSolveConfig, SolveReport, invert_map,
                       principal_map, residual_beltrami, solve_inhomogeneous)
from .errors import (BlowupError, CertificationError, ConfigurationError, ConvergenceError,
                     EllipticityError, NondegeneracyError, OutOfRangeError, SupportError)
from .generators import bump_field, disk_indicator, radial_bump
from .grid import (ComplexField, Field, Grid, Polynomial, RealField, core_mask, d_z, d_zbar,
                   make_grid)
from .semilinear import ContinuationConfig, Nonlinearity, solve_semilinear

__all__ = ["JobConfig", "run", "verify", "main"]

COMMANDS = ("solve-beltrami", "solve-semilinear", "solve-poisson", "map", "verify", "export")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2

logger = logging.getLogger("semibeltrami.cli")


class _JsonLines(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        doc = {"level": record.levelname.lower(), "event": record.getMessage()}
        doc.update(getattr(record, "data", {}))
        return json.dumps(doc, default=str)


def _emit(level: int, event: str, **data) -> None:
    logger.log(level, event, extra={"data": data})


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class JobConfig:
    command: str
    n: int
    L: float
    inputs: dict[str, Any] = field(default_factory=dict)
    solver: dict[str, Any] = field(default_factory=dict)
    out: Path = Path("out")
    seed: int = 0
    export: dict[str, Any] = field(default_factory=dict)
    base: Path = Path(".")

    @classmethod
    def load(cls, path, command: str, out: str | None = None,
             seed: int | None = None) -> "JobConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigurationError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc, command, path.parent, out, seed)

    @classmethod
    def from_dict(cls, doc: dict, command: str, base: Path = Path("."),
                  out: str | None = None, seed: int | None = None) -> "JobConfig":
        if command not in COMMANDS:
            raise ConfigurationError(f"unknown command {command!r}")
        grid = doc.get("grid", {})
        try:
            n, L = int(grid["n"]), float(grid["L"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError("config needs grid.n and grid.L") from exc
        outputs = doc.get("outputs", {})
        out_dir = Path(out) if out is not None else base / outputs.get("dir", "out")
        s = int(seed if seed is not None else doc.get("seed", 0))
        if s < 0 or s >= 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        cfg = cls(command, n, L, dict(doc.get("inputs", {})), dict(doc.get("solver", {})),
                  out_dir, s, dict(doc.get("export", {})), base)
        make_grid(n, L)
        return cfg

    @property
    def grid(self) -> Grid:
        return make_grid(self.n, self.L)

    def to_dict(self) -> dict:
        return {"command": self.command, "grid": {"n": self.n, "L": self.L},
                "inputs": self.inputs, "solver": self.solver, "seed": self.seed}


def _center(spec: dict) -> complex:
    c = spec.get("center", [0.0, 0.0])
    return complex(c[0], c[1])


def _field_input(cfg: JobConfig, name: str, real: bool) -> Field:
    spec = cfg.inputs.get(name)
    grid = cfg.grid
    if spec is None:
        raise ConfigurationError(f"missing input {name!r}")
    if "file" in spec:
        p = cfg.base / spec["file"]
        if not p.exists():
            raise ConfigurationError(f"input file not found: {p}")
        return io.read_field(p, grid)
    kind = spec.get("builtin")
    if kind == "zero":
        z = np.zeros((grid.n, grid.n))
        return RealField(grid, z, 0.0) if real else ComplexField(grid, z, 0.0)
    if kind == "radial_bump":
        f = radial_bump(grid, float(spec.get("k", 1.0)), float(spec.get("R", 0.5)), _center(spec))
        return f.real if real else f
    if kind == "bump":
        f = bump_field(grid, float(spec.get("amplitude", 1.0)), float(spec.get("R", 0.5)),
                       _center(spec))
        return f if real else ComplexField(grid, f.data, f.support_radius)
    if kind == "disk_indicator":
        f = disk_indicator(grid, float(spec.get("R", 1.0)), bool(spec.get("mollify", True)))
        return f if real else ComplexField(grid, f.data, f.support_radius)
    raise ConfigurationError(f"unknown builtin {kind!r} for input {name!r}")


def _mu_input(cfg: JobConfig) -> BeltramiCoefficient:
    spec = cfg.inputs.get("mu", {"builtin": "zero"})
    if spec.get("builtin") == "radial_bump" and not float(spec.get("k", 0.0)) < 1.0:
        raise NondegeneracyError(f"nondegeneracy violated: k = {spec['k']} >= 1")
    cfg.inputs.setdefault("mu", spec)
    mu = BeltramiCoefficient.from_field(_field_input(cfg, "mu", real=False))
    mu.require_compact()
    return mu


def _matrix_input(cfg: JobConfig) -> MatrixField:
    spec = cfg.inputs.get("A", {"preset": "identity"})
    if "manifest" in spec:
        p = cfg.base / spec["manifest"]
        if not p.exists():
            raise ConfigurationError(f"matrix manifest not found: {p}")
        return io.read_matrix(p)
    return matrix_preset(cfg.grid, spec.get("preset", "identity"))


def _nonlinearity(spec: dict | None, real: bool) -> Nonlinearity:
    spec = spec or {"kind": "constant", "value": 1.0}
    kind = spec.get("kind")
    lam = spec.get("lam")
    if real:
        return preset_Q(kind, lam, float(spec.get("value", 1.0)))
    if kind == "constant":
        return Nonlinearity.constant(float(spec.get("value", 1.0)))
    if kind == "neg_exp":
        return Nonlinearity.neg_exp_modulus()
    if kind == "power":
        return Nonlinearity.power_modulus(float(lam if lam is not None else -1),
                                          float(spec.get("offset", 0.0)))
    raise ConfigurationError(f"unknown nonlinearity kind {kind!r}")


def _linear_cfg(cfg: JobConfig) -> LinearSolveConfig:
    s = cfg.solver
    return LinearSolveConfig(tol=float(s.get("tol", 1e-12)), max_iter=int(s.get("max_iter", 500)))


def _continuation_cfg(cfg: JobConfig) -> ContinuationConfig:
    s = cfg.solver
    return ContinuationConfig(
        tau_steps=int(s.get("tau_steps", 8)),
        damping=float(s.get("damping", 0.5)),
        inner_tol=float(s.get("inner_tol", 1e-9)),
        inner_max_iter=int(s.get("inner_max_iter", 400)),
        blowup_guard=float(s.get("blowup_guard", 1e3)),
        linear=LinearSolveConfig(tol=float(s.get("tol", 1e-13)),
                                 max_iter=int(s.get("max_iter", 500))),
    )


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _write_outputs(cfg: JobConfig, fields: dict[str, Field], report: dict,
                   summary: list[str], matrix: MatrixField | None = None) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    for name, f in fields.items():
        io.write_field(cfg.out / f"{name}.bfld", f)
    if matrix is not None:
        io.write_matrix(cfg.out, matrix)
    (cfg.out / "job.json").write_text(json.dumps(cfg.to_dict(), indent=1))
    (cfg.out / "report.json").write_text(json.dumps(report, indent=1, default=float))
    (cfg.out / "summary.txt").write_text("\n".join(summary) + "\n")


def _summary(cfg: JobConfig, rep: SolveReport, extra: dict[str, float]) -> list[str]:
    lines = [f"command: {cfg.command}", f"grid: n={cfg.n} L={cfg.L:g}",
             f"converged: {rep.converged}", f"iterations: {rep.iterations}",
             f"final residual: {rep.final_residual:.3e}"]
    lines += [f"{k}: {v:.3e}" for k, v in extra.items()]
    return lines


def _cmd_solve_beltrami(cfg: JobConfig) -> bool:
    mu = _mu_input(cfg)
    sigma = _field_input(cfg, "sigma", real=False)
    omega, rep = solve_inhomogeneous(mu, sigma, _linear_cfg(cfg))
    rep.extra.pop("_h1", None)
    extra = {"beltrami_residual": rep.extra["beltrami_residual"]}
    _write_outputs(cfg, {"omega": omega, "mu": mu.field, "sigma": sigma}, rep.to_dict(),
                   _summary(cfg, rep, extra))
    return rep.converged


def _cmd_solve_semilinear(cfg: JobConfig) -> bool:
    mu = _mu_input(cfg)
    sigma = _field_input(cfg, "sigma", real=False)
    q = _nonlinearity(cfg.inputs.get("q"), real=False)
    omega, rep = solve_semilinear(mu, sigma, q, _continuation_cfg(cfg))
    extra = {k: rep.extra[k] for k in ("fixed_point_residual", "beltrami_residual")
             if k in rep.extra}
    _write_outputs(cfg, {"omega": omega, "mu": mu.field, "sigma": sigma}, rep.to_dict(),
                   _summary(cfg, rep, extra))
    return rep.converged


def _cmd_solve_poisson(cfg: JobConfig) -> bool:
    A = _matrix_input(cfg)
    G = _field_input(cfg, "G", real=True)
    Q = _nonlinearity(cfg.inputs.get("Q"), real=True)
    tests = WeakTestSet.build(A.grid, seed=cfg.seed)
    u, rep, art = solve_poisson_semilinear(A, G, Q, _continuation_cfg(cfg), tests)
    extra = {k: rep.extra[k] for k in ("fixed_point_residual", "weak_residual",
                                       "representation_error") if k in rep.extra}
    fields = {"u": u, "omega": art.omega, "G": G, "mu": art.mu.field}
    _write_outputs(cfg, fields, rep.to_dict(), _summary(cfg, rep, extra), matrix=A)
    return rep.converged


def _ring(grid: Grid) -> np.ndarray:
    return (np.abs(grid.z.real) >= 0.9 * grid.L) | (np.abs(grid.z.imag) >= 0.9 * grid.L)


def _cmd_map(cfg: JobConfig) -> bool:
    mu = _mu_input(cfg)
    qc = principal_map(mu, _linear_cfg(cfg))
    grid = cfg.grid
    rng = np.random.default_rng(cfg.seed)
    core = np.flatnonzero(core_mask(grid).ravel())
    pick = rng.choice(core, size=min(200, core.size), replace=False)
    z0 = grid.z.ravel()[pick]
    back = invert_map(qc, qc.forward.data.ravel()[pick])
    rep = qc.report or SolveReport(converged=True)
    rep.extra.pop("_h1", None)
    rep.extra.update(
        min_jacobian=float(qc.jacobian.data.min()),
        ring_deviation=float(np.abs(qc.forward.data - grid.z)[_ring(grid)].max()),
        roundtrip_error=float(np.abs(back - z0).max() / grid.L),
    )
    extra = {k: rep.extra[k] for k in ("min_jacobian", "ring_deviation", "roundtrip_error")}
    fields = {"forward": qc.forward, "jacobian": qc.jacobian, "mu": mu.field}
    _write_outputs(cfg, fields, rep.to_dict(), _summary(cfg, rep, extra))
    return rep.converged


def _cmd_export(cfg: JobConfig) -> bool:
    fmt = cfg.export.get("format", "csv")
    if fmt != "csv":
        raise ConfigurationError(f"unsupported export format {fmt!r}")
    name = cfg.export.get("field", "omega")
    src = cfg.out / f"{name}.bfld"
    if not src.exists():
        raise ConfigurationError(f"no field {name!r} in {cfg.out}")
    dest = cfg.out / f"{name}.csv"
    io.export_csv(io.read_field(src), dest)
    _emit(logging.INFO, "exported", path=str(dest))
    return True


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------


def _load(directory: Path, name: str) -> Field:
    p = directory / f"{name}.bfld"
    if not p.exists():
        raise ConfigurationError(f"missing artifact {p}")
    return io.read_field(p)


def verify(directory, seed: int | None = None) -> dict[str, dict]:
    """Recompute residuals of a finished job from its fields and ``job.json``.

    Solver reports are never read. Returns ``{check: {"value", "threshold",
    "passed"}}``.
    """
    directory = Path(directory)
    job_path = directory / "job.json"
    if not job_path.exists():
        raise ConfigurationError(f"no job.json in {directory}")
    job = json.loads(job_path.read_text())
    cfg = JobConfig.from_dict(job, job["command"], directory, str(directory), seed)
    checks: dict[str, dict] = {}

    def check(name, value, threshold):
        value = float(value)
        checks[name] = {"value": value, "threshold": threshold,
                        "passed": bool(np.isfinite(value) and value <= threshold)}

    cmd = cfg.command
    if cmd in ("solve-beltrami", "solve-semilinear"):
        omega = _load(directory, "omega")
        mu = BeltramiCoefficient.from_field(_load(directory, "mu"))
        sigma = _load(directory, "sigma")
        if cmd == "solve-semilinear":
            q = _nonlinearity(cfg.inputs.get("q"), real=False)
            sigma = sigma * ComplexField(sigma.grid, q(omega.data))
            tol = 10 * float(cfg.solver.get("inner_tol", 1e-9))
        else:
            tol = max(10 * float(cfg.solver.get("tol", 1e-12)), 1e-9)
        check("beltrami_residual", residual_beltrami(mu, sigma, omega), tol)
        check("normalization", abs(omega.value_at_origin()) / max(omega.sup(), 1e-300), 1e-12)
    elif cmd == "solve-poisson":
        u = _load(directory, "u")
        omega = _load(directory, "omega")
        G = _load(directory, "G")
        p = directory / "A.json"
        if not p.exists():
            raise ConfigurationError(f"missing artifact {p}")
        A = io.read_matrix(p)
        Q = _nonlinearity(cfg.inputs.get("Q"), real=True)
        tests = WeakTestSet.build(A.grid, seed=cfg.seed)
        check("weak_residual", weak_residual(u, A, G, Q, tests), 1e-4)
        mu = mu_from_A(A)
        g = RealField(G.grid, G.data * np.real(Q(omega.data)), G.support_radius)
        sigma = sigma_from_source(mu, g)
        tol = 10 * float(cfg.solver.get("inner_tol", 1e-9))
        check("beltrami_residual", residual_beltrami(mu, sigma, omega), tol)
        check("real_part", np.abs(u.data - omega.data.real).max() / max(u.sup(), 1e-300), 1e-12)
    elif cmd == "map":
        f = _load(directory, "forward")
        mu = BeltramiCoefficient.from_field(_load(directory, "mu"))
        fz, fzb = d_z(f), d_zbar(f)
        # f = z + w with w_zbar = mu w_z + mu
        ident = ComplexField(f.grid, f.grid.z, None, Polynomial({(1, 0): 1.0}))
        check("beltrami_residual", residual_beltrami(mu, mu.field, f - ident), 1e-8)
        jac = np.abs(fz.data) ** 2 - np.abs(fzb.data) ** 2
        checks["min_jacobian"] = {"value": float(jac.min()), "threshold": 0.0,
                                  "passed": bool(jac.min() > 0)}
    else:
        raise ConfigurationError(f"nothing to verify for command {cmd!r}")
    return checks


def _cmd_verify(cfg: JobConfig) -> bool:
    checks = verify(cfg.out, cfg.seed)
    for name, c in checks.items():
        _emit(logging.INFO if c["passed"] else logging.ERROR, "check", name=name, **c)
    (cfg.out / "verify.json").write_text(json.dumps(checks, indent=1))
    return all(c["passed"] for c in checks.values())


HANDLERS = {
    "solve-beltrami": _cmd_solve_beltrami,
    "solve-semilinear": _cmd_solve_semilinear,
    "solve-poisson": _cmd_solve_poisson,
    "map": _cmd_map,
    "verify": _cmd_verify,
    "export": _cmd_export,
}


def run(cfg: JobConfig) -> int:
    """Execute one job and return the process exit status."""
    try:
        ok = HANDLERS[cfg.command](cfg)
    except (ConfigurationError, SupportError, NondegeneracyError, EllipticityError,
            OutOfRangeError) as exc:
        _emit(logging.ERROR, "configuration error", error=str(exc), type=type(exc).__name__)
        return EXIT_CONFIG
    except (ConvergenceError, BlowupError, CertificationError) as exc:
        _emit(logging.ERROR, "solver failure", error=str(exc), type=type(exc).__name__)
        return EXIT_SOLVER
    _emit(logging.INFO if ok else logging.ERROR, "finished", command=cfg.command, ok=ok,
          out=str(cfg.out))
    return EXIT_OK if ok else EXIT_SOLVER


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semibeltrami", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="job description (JSON)")
    p.add_argument("--out", help="output directory (overrides outputs.dir)")
    p.add_argument("--seed", type=int, help="seed for randomized checks (u64)")
    p.add_argument("--format", choices=("csv",), help="export format")
    return p


def _setup_logging() -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLines())
    root = logging.getLogger("semibeltrami")
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)
    root.propagate = False


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = _parser().parse_args(argv)
    try:
        cfg = JobConfig.load(args.config, args.command, args.out, args.seed)
        if args.format:
            cfg.export["format"] = args.format
    except ConfigurationError as exc:
        _emit(logging.ERROR, "configuration error", error=str(exc), type=type(exc).__name__)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
