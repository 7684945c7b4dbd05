"""Command-line entry point: ``qcdistort {pack,transform,solve,experiment,selftest}``.

Every run writes its outputs atomically into one directory together with a
``manifest.json`` and prints a single JSON summary line on stdout.  Exit
status is 0 on success, 1 when a parameter or input fails validation, and 2
on numerical failure (a ``diagnostics.json`` is written next to the outputs).
"""

import argparse
import hashlib
import itertools
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__, kernels
from .beltrami import BeltramiCoefficient, ConvergenceError, solve_principal
from .beurling import beurling_adjoint_apply, beurling_apply, cauchy_apply, d, dbar
from .distortion import (ExperimentError, ExperimentReport, FractalSpec, cantor_mask, conformal_outside_experiment,
                         content_distortion_experiment, sweep_level)
from .grid import GridField, atomic_write_text
from .packing import CompactMask, dyadic_content, packing_construct, packing_properties

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

TRANSFORMS = {"beurling": beurling_apply, "beurling-adjoint": beurling_adjoint_apply,
              "cauchy": cauchy_apply, "dbar": dbar, "d": d}

class ValidationError(ValueError):
    pass

class NumericalFailure(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

@dataclass
class RunConfig:
    subcommand: str = None
    experiment: str = None
    inputs: dict = field(default_factory=dict)
    t: float = 1.0
    K: float = 1.2
    eps: float = 1e-9
    m: int = 2
    n: int = 512
    L: float = 2.0
    tol: float = 1e-12
    max_terms: int = 400
    seed: int = 0
    workers: int = 1
    out: str = "run"
    op: str = "beurling"
    phase: str = "constant"
    denominator: str = "side"
    M: int = None
    r: float = 0.25
    generations: str = "1"
    norm_tol: float = 1e-4
    K_list: list = None
    t_list: list = None

    def validate(self):
        """Check numeric parameters against the module preconditions."""
        for v in self.t_list or []:
            _check_float("t", v)
        for v in self.K_list or []:
            _check_float("K", v)
        if not 0 < self.t <= 2:
            raise ValidationError(f"t must lie in (0, 2] (got {self.t})")
        if self.subcommand in ("pack", "experiment") and not self.t < 2:
            raise ValidationError(f"t must lie in (0, 2) for packing (got {self.t})")
        if not self.K >= 1:
            raise ValidationError(f"K must be >= 1 (got {self.K})")
        if not self.eps > 0:
            raise ValidationError(f"eps must be > 0 (got {self.eps})")
        if self.m < 0:
            raise ValidationError(f"m must be >= 0 (got {self.m})")
        if self.n & (self.n - 1) or not 16 <= self.n <= 8192:
            raise ValidationError(f"n must be a power of two in [16, 8192] (got {self.n})")
        if not self.L > 0:
            raise ValidationError(f"L must be > 0 (got {self.L})")
        if not self.tol > 0:
            raise ValidationError(f"tol must be > 0 (got {self.tol})")
        if self.max_terms < 1:
            raise ValidationError(f"max_terms must be >= 1 (got {self.max_terms})")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1 (got {self.workers})")
        if not 0 < self.r < 0.5:
            raise ValidationError(f"r must lie in (0, 1/2) (got {self.r})")

def _check_float(name, v):
    if name == "t" and not 0 < v < 2:
        raise ValidationError(f"t must lie in (0, 2) (got {v})")
    if name == "K" and not v >= 1:
        raise ValidationError(f"K must be >= 1 (got {v})")

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def read_config_file(path) -> dict:
    """``key=value`` lines (``#`` comments allowed) or a JSON object."""
    text = Path(path).read_text()
    stripped = text.strip()
    if stripped.startswith("{"):
        return json.loads(stripped)
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out

def _coerce(name, value):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    kind = kinds[name]
    if value is None:
        return None
    if kind in (float, "float"):
        return float(value)
    if kind in (int, "int"):
        if isinstance(value, float) and not value.is_integer():
            raise ValidationError(f"{name} must be an integer (got {value})")
        return int(value)
    if kind in (list, "list"):
        if isinstance(value, str):
            return [float(v) for v in value.split(",") if v.strip()]
        return [float(v) for v in value]
    if kind in (str, "str"):
        return str(value)
    return value

def build_config(args) -> RunConfig:
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    layers = []
    if getattr(args, "config", None):
        layers.append(read_config_file(args.config))
    layers.append({k: v for k, v in vars(args).items() if v is not None})
    for layer in layers:
        for key, value in layer.items():
            key = key.replace("-", "_")
            if key in ("config", "func"):
                continue
            if key in ("mask", "mu", "field"):
                cfg.inputs[key] = value
                continue
            if key not in known:
                raise ValidationError(f"unknown configuration key {key!r}")
            setattr(cfg, key, _coerce(key, value) if key not in ("subcommand", "experiment", "inputs") else value)
    cfg.validate()
    return cfg

# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")
    return Path(path)

def write_manifest(out_dir: Path, cfg: RunConfig, outputs, runtime_ms, status="ok", extra=None):
    entries = [{"path": str(Path(p).relative_to(out_dir)) if Path(p).is_relative_to(out_dir) else str(p),
                "sha256": _sha256(p)} for p in outputs]
    manifest = {"version": __version__, "status": status, "config": asdict(cfg), "outputs": entries,
                "runtime_ms": runtime_ms, "backend": kernels.backend_name()}
    if extra:
        manifest.update(extra)
    return write_json(out_dir / "manifest.json", manifest)

def _load_mask(path) -> CompactMask:
    try:
        return CompactMask.load(path)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read mask {path}: {exc}") from exc

def _load_field(path) -> GridField:
    try:
        return GridField.load(path)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read field {path}: {exc}") from exc

def _out_dir_for_file(out) -> Path:
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.parent

# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_pack(cfg: RunConfig):
    if "mask" not in cfg.inputs:
        raise ValidationError("pack needs --mask")
    E = _load_mask(cfg.inputs["mask"])
    family = packing_construct(E, cfg.t, cfg.eps, cfg.m)
    props = packing_properties(family, E, dyadic_content(E, cfg.t))
    out = Path(cfg.out)
    out_dir = _out_dir_for_file(out)
    write_json(out, family.to_json({"properties": props, "mask_level": E.M}))
    summary = {"cubes": len(family), "norm": props["norm"],
               "properties_hold": all(props[k] for k in ("a_dilations_disjoint", "b_covers_mask",
                                                          "c_norm_le_1", "d_sum_bound"))}
    return out_dir, [out], summary

def run_transform(cfg: RunConfig):
    if "field" not in cfg.inputs:
        raise ValidationError("transform needs --field")
    if cfg.op not in TRANSFORMS:
        raise ValidationError(f"op must be one of {sorted(TRANSFORMS)} (got {cfg.op!r})")
    f = _load_field(cfg.inputs["field"])
    g = TRANSFORMS[cfg.op](f)
    out = Path(cfg.out)
    out_dir = _out_dir_for_file(out)
    meta = g.save(out)
    return out_dir, [meta, meta.with_suffix(".bin")], {"op": cfg.op, "n": g.n, "l2_norm": g.l2_norm()}

def run_solve(cfg: RunConfig):
    if "mu" not in cfg.inputs:
        raise ValidationError("solve needs --mu")
    mu = BeltramiCoefficient(_load_field(cfg.inputs["mu"]))
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        sol = solve_principal(mu, cfg.max_terms, cfg.tol)
    except ConvergenceError as exc:
        diag = {"error": str(exc), "tail_bound": exc.tail_bound, "kappa": mu.kappa}
        if exc.solution is not None:
            diag["term_norms"] = list(exc.solution.term_norms)
        raise NumericalFailure(str(exc), diag) from exc
    outputs = []
    for name in ("f", "fz", "fzbar"):
        meta = getattr(sol, name).save(out_dir / f"{name}.json")
        outputs += [meta, meta.with_suffix(".bin")]
    summary = {"terms": sol.terms, "kappa": sol.kappa, "tail_bound": sol.tail_bound,
               "identity_residual": sol.identity_residual(), "min_jacobian": float(sol.J.min()),
               "linear": [sol.linear.real, sol.linear.imag], "term_norms": list(sol.term_norms)}
    outputs.append(write_json(out_dir / "solution.json", summary))
    return out_dir, outputs, {k: summary[k] for k in ("terms", "kappa", "identity_residual")}

def _experiment_jobs(cfg: RunConfig):
    Ks = cfg.K_list or [cfg.K]
    ts = cfg.t_list or [cfg.t]
    gens = [int(g) for g in str(cfg.generations).split(",") if str(g).strip()]
    mask_path = cfg.inputs.get("mask")
    jobs = []
    for idx, (t, K, g) in enumerate(itertools.product(ts, Ks, gens if mask_path is None else [None])):
        jobs.append({"kind": cfg.experiment, "t": t, "K": K, "g": g, "mask": mask_path, "r": cfg.r,
                     "M": cfg.M, "n": cfg.n, "m": cfg.m, "eps": cfg.eps, "L": cfg.L, "tol": cfg.tol,
                     "max_terms": cfg.max_terms, "phase": cfg.phase, "denominator": cfg.denominator,
                     "norm_tol": cfg.norm_tol, "seed": cfg.seed + idx})
    return jobs

def _run_job(job) -> dict:
    origin = (-0.5, -0.5)
    if job["mask"] is not None:
        source = CompactMask.load(job["mask"])
    else:
        source = FractalSpec(job["r"], job["g"])
    if job["kind"] == "conformal-outside":
        M = job["M"] if job["M"] is not None else 4
        rep = conformal_outside_experiment(source, job["t"], job["K"], job["n"], M=M, m=job["m"],
                                           phase=job["phase"], seed=job["seed"], eps=job["eps"],
                                           denominator=job["denominator"], tol=job["tol"],
                                           max_terms=job["max_terms"], norm_tol=job["norm_tol"],
                                           L=job["L"], origin=origin)
    else:
        if isinstance(source, FractalSpec):
            M = job["M"] if job["M"] is not None else sweep_level(source)
            source = cantor_mask(source, M)
        rep = content_distortion_experiment(source, job["t"], job["K"], job["n"], phase=job["phase"],
                                            seed=job["seed"], tol=job["tol"], max_terms=job["max_terms"],
                                            L=job["L"], origin=origin)
    return rep.to_json()

def run_experiment(cfg: RunConfig):
    if cfg.experiment not in ("conformal-outside", "content-distortion"):
        raise ValidationError("experiment must be 'conformal-outside' or 'content-distortion'")
    jobs = _experiment_jobs(cfg)
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_job, jobs))  # map keeps input order
    else:
        results = [_run_job(j) for j in jobs]
    reports = [ExperimentReport.from_json(r) for r in results]
    timings = [r.runtime_ms for r in reports]
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = [r.to_json(include_timing=False) for r in reports]
    rep_path = write_json(out_dir / "reports.json", payload)
    csv_path = out_dir / "reports.csv"
    atomic_write_text(csv_path, reports_to_csv(reports))
    summary = {"experiment": cfg.experiment, "instances": len(reports),
               "all_verdicts_pass": all(r.passed for r in reports)}
    return out_dir, [rep_path, csv_path], summary, {"experiment_runtime_ms": timings}

def reports_to_csv(reports) -> str:
    import csv
    import io

    rows = []
    for r in reports:
        row = r.flatten()
        row["runtime_ms"] = None
        rows.append(row)
    columns = sorted({k for row in rows for k in row})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return buf.getvalue()

def run_selftest(cfg: RunConfig):
    from .selftest import run_all

    results = run_all(seed=cfg.seed)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = write_json(out_dir / "selftest.json", results)
    failed = [name for name, r in results.items() if not r["passed"]]
    if failed:
        raise NumericalFailure(f"selftest failed: {', '.join(failed)}", {"results": results})
    return out_dir, [path], {"checks": len(results), "failed": 0}

DISPATCH = {"pack": run_pack, "transform": run_transform, "solve": run_solve,
            "experiment": run_experiment, "selftest": run_selftest}

# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value or JSON file with default parameters")
    common.add_argument("--workers", type=int, help="worker processes for parameter grids")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--out", help="output file or run directory")

    parser = argparse.ArgumentParser(prog="qcdistort", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("pack", parents=[common], help="build a packing family from a mask")
    p.add_argument("--mask", help="mask file (.json or .png)")
    p.add_argument("--t", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--eps", type=float)

    p = sub.add_parser("transform", parents=[common], help="apply a Fourier-multiplier operator to a field")
    p.add_argument("--field", help="field sidecar (.json)")
    p.add_argument("--op", choices=sorted(TRANSFORMS))

    p = sub.add_parser("solve", parents=[common], help="principal solution of the Beltrami equation")
    p.add_argument("--mu", help="Beltrami coefficient field (.json)")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-terms", dest="max_terms", type=int)

    p = sub.add_parser("experiment", parents=[common], help="run a distortion experiment")
    p.add_argument("experiment", choices=["conformal-outside", "content-distortion"])
    p.add_argument("--mask", help="mask file; a corner Cantor set is used when omitted")
    p.add_argument("--t", type=float)
    p.add_argument("--K", type=float)
    p.add_argument("--t-list", dest="t_list", help="comma-separated t grid")
    p.add_argument("--K-list", dest="K_list", help="comma-separated K grid")
    p.add_argument("--r", type=float, help="Cantor contraction ratio")
    p.add_argument("--generations", help="comma-separated Cantor generations")
    p.add_argument("--M", type=int, help="mask level for Cantor sources")
    p.add_argument("--n", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-terms", dest="max_terms", type=int)
    p.add_argument("--norm-tol", dest="norm_tol", type=float)
    p.add_argument("--phase", choices=["constant", "radial", "random"])
    p.add_argument("--denominator", choices=["side", "diam"])

    sub.add_parser("selftest", parents=[common], help="run the invariant checks headlessly")
    return parser

def _emit(summary):
    print(json.dumps(summary, sort_keys=True), flush=True)

def _diagnostics_dir(cfg):
    if cfg is None:
        return Path(".")
    out = Path(cfg.out)
    return out.parent if out.suffix else out

def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    cfg = None
    try:
        cfg = build_config(args)
        result = DISPATCH[cfg.subcommand](cfg)
        out_dir, outputs, summary = result[:3]
        extra = result[3] if len(result) > 3 else None
        runtime = (time.perf_counter() - started) * 1e3
        manifest = write_manifest(out_dir, cfg, outputs, runtime, extra=extra)
        _emit({"status": "ok", "subcommand": cfg.subcommand, "outputs": [str(p) for p in outputs],
               "manifest": str(manifest), **summary})
        return EXIT_OK
    except (ValidationError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _emit({"status": "invalid", "error": str(exc)})
        return EXIT_VALIDATION
    except (NumericalFailure, ConvergenceError, ExperimentError, FloatingPointError) as exc:
        out_dir = _diagnostics_dir(cfg)
        out_dir.mkdir(parents=True, exist_ok=True)
        diag = {"error": str(exc), "type": type(exc).__name__}
        diag.update(getattr(exc, "diagnostics", {}) or {})
        path = write_json(out_dir / "diagnostics.json", diag)
        print(f"error: {exc}", file=sys.stderr)
        _emit({"status": "numerical-failure", "error": str(exc), "diagnostics": str(path)})
        return EXIT_NUMERICAL

if __name__ == "__main__":
    sys.exit(main())
