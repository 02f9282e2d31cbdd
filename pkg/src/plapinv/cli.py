"""Command-line front end.

Config files are flat ``key = value`` documents; ``#`` starts a comment.
Recognised keys (defaults in brackets)::

    p              = 2.0              # comma list, or start:stop:step
    beta           = linear           # linear | power
    iters          = 5
    stop_early     = false
    u0             = midline          # midline|diagonal|circle|first_eig_product|custom_nodal
    u0.m, u0.n     = 2, 1             # first_eig_product wave numbers
    u0.file        =                  # nodal dump "x y value" for custom_nodal
    mesh.kind      = rect             # rect | interval
    mesh.nx, mesh.ny = 64, 64
    mesh.width, mesh.height = 1, 1
    mesh.diagonal  = fixed            # fixed | union_jack
    mesh.n, mesh.length = 2000, 1     # interval meshes
    noise          = 0                # relative symmetry-breaking noise
    seed           = 0
    solver.newton_tol, solver.max_newton
    root.F_tol, root.alpha_tol, root.max_fevals
    out.dir        = .
    out.trace_csv  = trace_p{p}.csv   # {p} is replaced per p value
    out.summary    = summary.csv
    out.dump_every = none
    max_violations = 0                # more violations give exit status 2
    workers        = 1

``PLAPINV_WORKERS`` and ``PLAPINV_OUTPUT_DIR`` override ``workers`` and
``out.dir``.

Exit status: 0 ok, 2 invariant violations (or flagged reference rows for
``compare``), 3 solver failure, 4 config error.
"""

from __future__ import annotations

import argparse
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
import logging
import os
from pathlib import Path
import sys
import time
import warnings

import numpy as np

from . import femspace as fs
from .balance import BetaMap, RootConfig
from .driver import (GUESSES, RunAborted, RunConfig, initial_guess, run_algorithm_a,
                     validate_u0)
from .mesh import build_interval_mesh, build_rect_mesh
from .oracle import (EigenOracle1D, counterexample_sequence, lambda_k_1d, shoot_1d,
                     square_eigs_p2)
from .ppoisson import PPoissonConfig

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VIOLATIONS, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4
SUMMARY_HEADER = ["p", "R_last", "alpha_last", "beta_last", "iterations", "violations",
                  "stop_reason", "wall_time"]

_P_GRID = [round(1.6 + 0.1 * i, 1) for i in range(35)]
# R after five steps on the unit square: midline and diagonal starts
TABLE1 = dict(zip(_P_GRID, [
    23.68, 28.61, 34.44, 41.32, 49.46, 59.06, 70.38, 83.74, 99.48, 118.02,
    139.83, 165.49, 195.66, 231.11, 272.74, 321.60, 378.94, 446.19, 525.02, 617.40,
    725.61, 852.32, 1000.63, 1174.18, 1377.19, 1614.59, 1892.11, 2216.45, 2595.40, 3038.03,
    3554.91, 4158.34, 4862.65, 5684.50, 6643.28]))
TABLE2 = dict(zip(_P_GRID, [
    24.02, 28.92, 34.69, 41.47, 49.43, 58.77, 69.71, 82.53, 97.53, 115.07,
    135.55, 159.46, 187.35, 219.85, 257.71, 301.78, 353.04, 412.64, 481.89, 562.3,
    655.63, 763.9, 889.45, 1034.95, 1203.50, 1398.68, 1624.60, 1885.99, 2188.32, 2537.85,
    2941.83, 3408.57, 3947.64, 4570.06, 5288.49]))
REFERENCES = {"table1": TABLE1, "table2": TABLE2}


class ParseError(ValueError):
    def __init__(self, msg, line=None, key=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + (f"{key}: " if key else "") + msg)
        self.line, self.key = line, key


class ValidationError(ValueError):
    pass


class MissingRow(KeyError):
    pass


@dataclass
class MeshSpec:
    kind: str = "rect"
    nx: int = 64
    ny: int = 64
    width: float = 1.0
    height: float = 1.0
    diagonal: str = "fixed"
    n: int = 2000
    length: float = 1.0


@dataclass
class OutputSpec:
    dir: str = "."
    trace_csv: str = "trace_p{p}.csv"
    summary: str = "summary.csv"
    dump_every: int | None = None


@dataclass
class ExperimentSpec:
    p_values: list
    u0: str
    mesh: MeshSpec = field(default_factory=MeshSpec)
    beta: str = "linear"
    iters: int = 5
    stop_early: bool = False
    u0_params: dict = field(default_factory=dict)
    noise: float = 0.0
    seed: int = 0
    solver: dict = field(default_factory=dict)
    root: dict = field(default_factory=dict)
    outputs: OutputSpec = field(default_factory=OutputSpec)
    max_violations: int = 0
    workers: int = 1

    def run_config(self, p: float) -> RunConfig:
        solver = PPoissonConfig(p, **self.solver)
        return RunConfig(p, BetaMap(self.beta, p), max_iters=self.iters, solver=solver,
                         root=RootConfig(**self.root), stop_early=self.stop_early,
                         symmetry_breaking_noise=self.noise, seed=self.seed)


_SOLVER_KEYS = {"newton_tol": float, "max_newton": int}
_ROOT_KEYS = {"F_tol": float, "alpha_tol": float, "max_fevals": int}
_MESH_TYPES = {f.name: f.type for f in fields(MeshSpec)}


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _p_list(text):
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(t) for t in text.split(":"))
        if not step > 0:
            raise ValueError("step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(n)]
    return [float(t) for t in text.split(",") if t.strip()]


def _opt_int(text):
    return None if text.strip().lower() in ("", "none") else int(text)


def parse_config(text: str) -> ExperimentSpec:
    """Parse and validate a flat ``key = value`` document."""
    raw: dict[str, tuple[int, str]] = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", no)
        key, val = (t.strip() for t in line.split("=", 1))
        if not key:
            raise ParseError("empty key", no)
        if key in raw:
            raise ParseError("duplicate key", no, key)
        raw[key] = (no, val)

    spec_kw: dict = {}
    mesh_kw: dict = {}
    out_kw: dict = {}
    u0_params: dict = {}
    solver: dict = {}
    root: dict = {}
    simple = {"beta": str, "iters": int, "stop_early": _bool, "noise": float, "seed": int,
              "max_violations": int, "workers": int, "u0": str}
    for key, (no, val) in raw.items():
        try:
            if key == "p":
                spec_kw["p_values"] = _p_list(val)
            elif key in simple:
                spec_kw[key] = simple[key](val)
            elif key.startswith("mesh."):
                name = key[5:]
                if name not in _MESH_TYPES:
                    raise KeyError(name)
                conv = {"int": int, "float": float}.get(_MESH_TYPES[name], str)
                mesh_kw[name] = conv(val)
            elif key.startswith("out."):
                name = key[4:]
                if name == "dump_every":
                    out_kw[name] = _opt_int(val)
                elif name in ("dir", "trace_csv", "summary"):
                    out_kw[name] = val
                else:
                    raise KeyError(name)
            elif key.startswith("u0."):
                name = key[3:]
                if name in ("m", "n"):
                    u0_params[name] = int(val)
                elif name == "file":
                    u0_params[name] = val
                else:
                    raise KeyError(name)
            elif key.startswith("solver."):
                name = key[7:]
                solver[name] = _SOLVER_KEYS[name](val)
            elif key.startswith("root."):
                name = key[5:]
                root[name] = _ROOT_KEYS[name](val)
            else:
                raise KeyError(key)
        except KeyError:
            raise ParseError("unknown key", no, key) from None
        except ValueError as exc:
            raise ParseError(str(exc), no, key) from None

    if "p_values" not in spec_kw:
        raise ValidationError("p is required")
    if "u0" not in spec_kw:
        raise ValidationError("u0 is required")
    spec = ExperimentSpec(mesh=MeshSpec(**mesh_kw), outputs=OutputSpec(**out_kw),
                          u0_params=u0_params, solver=solver, root=root, **spec_kw)
    validate_spec(spec)
    return spec


def validate_spec(spec: ExperimentSpec) -> None:
    if not spec.p_values:
        raise ValidationError("p list is empty")
    for p in spec.p_values:
        if not 1.0 < p < np.inf:
            raise ValidationError(f"p = {p} is outside (1, inf)")
    if spec.iters < 1:
        raise ValidationError("iters must be >= 1")
    if spec.beta not in ("linear", "power"):
        raise ValidationError(f"unknown beta map {spec.beta!r}")
    if spec.u0 not in GUESSES:
        raise ValidationError(f"unknown u0 {spec.u0!r}")
    if spec.u0 == "custom_nodal" and "file" not in spec.u0_params:
        raise ValidationError("custom_nodal needs u0.file")
    m = spec.mesh
    if m.kind not in ("rect", "interval"):
        raise ValidationError(f"unknown mesh kind {m.kind!r}")
    if m.diagonal not in ("fixed", "union_jack"):
        raise ValidationError(f"unknown diagonal {m.diagonal!r}")
    if m.kind == "rect" and (m.nx < 1 or m.ny < 1 or m.width <= 0 or m.height <= 0):
        raise ValidationError("rect mesh needs positive nx, ny, width, height")
    if m.kind == "interval" and (m.n < 2 or m.length <= 0):
        raise ValidationError("interval mesh needs n >= 2 and positive length")
    if spec.outputs.dump_every is not None and spec.outputs.dump_every < 1:
        raise ValidationError("out.dump_every must be >= 1 or none")
    if spec.noise < 0 or spec.workers < 1 or spec.max_violations < 0:
        raise ValidationError("noise, workers and max_violations must be non-negative")
    try:
        for p in spec.p_values:
            spec.run_config(p)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from None


def spec_to_text(spec: ExperimentSpec) -> str:
    """Inverse of :func:`parse_config`."""
    lines = [f"p = {', '.join(repr(float(p)) for p in spec.p_values)}",
             f"u0 = {spec.u0}", f"beta = {spec.beta}", f"iters = {spec.iters}",
             f"stop_early = {str(spec.stop_early).lower()}", f"noise = {spec.noise!r}",
             f"seed = {spec.seed}", f"max_violations = {spec.max_violations}",
             f"workers = {spec.workers}"]
    lines += [f"u0.{k} = {v}" for k, v in spec.u0_params.items()]
    lines += [f"mesh.{f.name} = {getattr(spec.mesh, f.name)!r}".replace("'", "")
              for f in fields(MeshSpec)]
    o = spec.outputs
    lines += [f"out.dir = {o.dir}", f"out.trace_csv = {o.trace_csv}",
              f"out.summary = {o.summary}",
              f"out.dump_every = {'none' if o.dump_every is None else o.dump_every}"]
    lines += [f"solver.{k} = {v!r}" for k, v in spec.solver.items()]
    lines += [f"root.{k} = {v!r}" for k, v in spec.root.items()]
    return "\n".join(lines) + "\n"


def apply_env(spec: ExperimentSpec, env=None) -> ExperimentSpec:
    env = os.environ if env is None else env
    if env.get("PLAPINV_WORKERS"):
        spec = replace(spec, workers=int(env["PLAPINV_WORKERS"]))
    if env.get("PLAPINV_OUTPUT_DIR"):
        spec = replace(spec, outputs=replace(spec.outputs, dir=env["PLAPINV_OUTPUT_DIR"]))
    return spec


def build_mesh(m: MeshSpec):
    if m.kind == "interval":
        return build_interval_mesh(m.n, m.length)
    return build_rect_mesh(m.nx, m.ny, m.width, m.height, m.diagonal)


def _ptag(p: float) -> str:
    return f"{p:g}"


def build_u0(spec: ExperimentSpec, mesh):
    if spec.u0 == "custom_nodal":
        u0 = fs.read_function(mesh, spec.u0_params["file"])
        return initial_guess("custom_nodal", mesh, values=u0.values)
    params = {k: v for k, v in spec.u0_params.items() if k in ("m", "n")}
    return initial_guess(spec.u0, mesh, **params)


def check_start(spec: ExperimentSpec) -> None:
    """Reject meshes and starting functions the iteration cannot use."""
    try:
        mesh = build_mesh(spec.mesh)
        u0 = build_u0(spec, mesh)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for p in spec.p_values:
                validate_u0(u0, p)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"unusable start: {exc}") from None


def run_single(spec: ExperimentSpec, p: float) -> dict:
    """One p value: run, write the trace and optional dumps, return a summary row."""
    out = Path(spec.outputs.dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_mesh(spec.mesh)
    u0 = build_u0(spec, mesh)
    t0 = time.perf_counter()
    status = "ok"
    try:
        trace = run_algorithm_a(mesh, u0, spec.run_config(p))
    except RunAborted as exc:
        log.error("p=%s: %s", p, exc)
        trace, status = exc.trace, "solver_failure"
    trace.to_csv(out / spec.outputs.trace_csv.format(p=_ptag(p)))
    every = spec.outputs.dump_every
    if every:
        for st in trace.states:
            if st.k % every == 0:
                fs.write_function(st.u_k, out / f"u_p{_ptag(p)}_k{st.k:04d}.txt")
    last = trace.last
    return {"p": p, "R_last": last.R, "alpha_last": last.alpha_k, "beta_last": last.beta_k,
            "iterations": trace.iterations, "violations": len(trace.invariant_violations),
            "stop_reason": trace.stop_reason, "wall_time": time.perf_counter() - t0,
            "status": status}


def write_summary(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow(["" if r[k] is None else r[k] for k in SUMMARY_HEADER])


def run_experiment(spec: ExperimentSpec) -> int:
    """Run every p value of ``spec``; returns the exit status."""
    check_start(spec)
    ps = list(spec.p_values)
    if spec.workers > 1 and len(ps) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(run_single, [spec] * len(ps), ps))
    else:
        rows = [run_single(spec, p) for p in ps]
    write_summary(rows, Path(spec.outputs.dir) / spec.outputs.summary)
    if any(r["status"] != "ok" for r in rows):
        return EXIT_SOLVER
    if any(r["violations"] > spec.max_violations for r in rows):
        return EXIT_VIOLATIONS
    return EXIT_OK


def tolerance_policy(p: float) -> float:
    """Allowed relative deviation from the reference tables."""
    return 0.02 if abs(p - 2.0) < 1e-12 else 0.05


@dataclass(frozen=True)
class CompareRow:
    p: float
    R: float
    reference: float | None
    rel_error: float | None
    flagged: bool
    note: str = ""


def read_summary(path) -> dict:
    with open(path, newline="") as fh:
        return {float(r["p"]): float(r["R_last"]) for r in csv.DictReader(fh)}


def compare_to_reference(summary, reference: str = "table1", require=()) -> list:
    """Relative deviation ``(ref - R) / ref`` per p of a summary CSV.

    p values absent from the reference are reported with a note; a p listed
    in ``require`` but absent from the summary raises :class:`MissingRow`.
    """
    table = REFERENCES[reference] if isinstance(reference, str) else reference
    got = read_summary(summary) if not isinstance(summary, dict) else summary
    for p in require:
        if not any(abs(p - q) < 1e-9 for q in got):
            raise MissingRow(f"summary has no row for p = {p}")
    rows = []
    for p, R in sorted(got.items()):
        ref = next((v for q, v in table.items() if abs(q - p) < 1e-9), None)
        if ref is None:
            rows.append(CompareRow(p, R, None, None, False, "not in reference"))
            continue
        err = (ref - R) / ref
        rows.append(CompareRow(p, R, ref, err, abs(err) > tolerance_policy(p)))
    return rows


def _cmd_run(args, sweep: bool) -> int:
    try:
        spec = apply_env(parse_config(Path(args.config).read_text()))
        if not sweep:
            if len(spec.p_values) != 1:
                raise ValidationError("run takes a single p; use sweep for lists")
            spec = replace(spec, workers=1)
        elif args.workers:
            spec = replace(spec, workers=args.workers)
        check_start(spec)
    except (OSError, ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = run_experiment(spec)
    print(Path(spec.outputs.dir, spec.outputs.summary).read_text(), end="")
    return code


def _cmd_compare(args) -> int:
    try:
        rows = compare_to_reference(args.summary, args.table)
    except (OSError, MissingRow, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("p,R,reference,rel_error,flag")
    for r in rows:
        if r.reference is None:
            print(f"{r.p:g},{r.R:.6g},,,{r.note}")
        else:
            print(f"{r.p:g},{r.R:.6g},{r.reference:g},{r.rel_error:+.5f},"
                  f"{'FLAG' if r.flagged else 'ok'}")
    return EXIT_VIOLATIONS if any(r.flagged for r in rows) else EXIT_OK


def _cmd_oracle(args) -> int:
    if args.kind == "square":
        print("value,multiplicity,value_over_pi2")
        for v, c in square_eigs_p2(args.m_max):
            print(f"{v:.10g},{c},{v / np.pi ** 2:g}")
        return EXIT_OK
    o = EigenOracle1D(args.p, args.length)
    print("k,closed_form,shooting,rel_diff")
    for k in range(1, args.k + 1):
        a, b = lambda_k_1d(k, o), shoot_1d(k, args.p, args.length)
        print(f"{k},{a:.12g},{b:.12g},{abs(b / a - 1):.2e}")
    return EXIT_OK


def _cmd_counterexample(args) -> int:
    xs = counterexample_sequence(args.n)
    lines = [f"{k},{x!r}" for k, x in enumerate(xs)]
    text = "k,x\n" + "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plapinv",
                                 description="Higher p-Laplacian eigenpairs by balanced inverse iteration.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    s = sub.add_parser("sweep", help="run a config over its p list")
    s.add_argument("config")
    s.add_argument("--workers", type=int, default=None)
    c = sub.add_parser("compare", help="compare a summary CSV with a reference table")
    c.add_argument("summary")
    c.add_argument("table", choices=sorted(REFERENCES))
    o = sub.add_parser("oracle", help="print reference eigenvalues")
    o.add_argument("kind", choices=["1d", "square"])
    o.add_argument("--p", type=float, default=2.0)
    o.add_argument("--k", type=int, default=3)
    o.add_argument("--length", type=float, default=1.0)
    o.add_argument("--m-max", type=int, default=4)
    x = sub.add_parser("counterexample", help="print the non-convergent sequence")
    x.add_argument("n", type=int)
    x.add_argument("--out", default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.cmd in ("run", "sweep"):
        return _cmd_run(args, args.cmd == "sweep")
    if args.cmd == "compare":
        return _cmd_compare(args)
    if args.cmd == "oracle":
        if args.kind == "1d" and not (args.p > 1 and args.k >= 1 and args.length > 0):
            print("config error: need p > 1, k >= 1, length > 0", file=sys.stderr)
            return EXIT_CONFIG
        return _cmd_oracle(args)
    return _cmd_counterexample(args)


if __name__ == "__main__":
    sys.exit(main())
