"""Command line front end: load a manifest, run one check family, print reports.

Exit codes: 0 when the run completes (whatever the verdicts), 1 for a
REFUTED verdict under ``--strict``, 2 for INCONCLUSIVE under ``--strict``,
3 for usage, input, parse or numeric errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .equilibrium import SamplePlan, check_equilibrium, extract_profiles, sample_domain
from .expr import ExpressionError
from .geometry import GeometryError
from .manifest import Manifest, ManifestError, resolve_manifest
from .polar import PolarPlan, build_patch, half_r2_check, separability_check
from .reports import CheckReport, Verdict
from .stability import (criterion_value, first_variation_check, ritore_criterion,
                        second_variation_mode)
from .symmetry import (KillingAlgebra, _killing_batch, check_killing_induced_equilibrium,
                       lie_bracket)

__all__ = ["TaskSpec", "TaskResult", "run_task", "emit_report", "main", "main_entry", "TaskError"]

EXIT_OK, EXIT_REFUTED, EXIT_INCONCLUSIVE, EXIT_ERROR = 0, 1, 2, 3
POLAR_TOL = 1e-3
TASKS = ("check-equilibrium", "check-killing", "check-symmetry", "check-separability",
         "check-stability", "profile")


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    """One task and its targets; ``None`` options fall back to defaults."""

    task: str
    manifold: str | None = None
    field: str | None = None
    vfields: tuple[str, ...] = ()
    warp: str | None = None
    center: tuple[float, ...] | None = None
    rmax: float | None = None
    mode: int | None = None
    r0: float | None = None
    samples: int = 2000
    seed: int = 42
    tol: float | None = None
    threads: int = 1
    plan: str | None = None


@dataclass
class TaskResult:
    task: str
    targets: tuple[str, ...]
    checks: list[tuple[str, CheckReport]]        # (target label, report)
    plan: dict
    wall_clock: float = 0.0
    version: str = __version__
    profile_rows: list[tuple[int, float, float, float, float]] = field(default_factory=list)
    table: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self, *, timing: bool = True) -> dict:
        d = {
            "task": self.task,
            "targets": list(self.targets),
            "checks": [{"target": t, "report": r.to_dict()} for t, r in self.checks],
            "plan": self.plan,
            "version": self.version,
            "profile_rows": [list(r) for r in self.profile_rows],
            "table": [list(r) for r in self.table],
        }
        if timing:
            d["wall_clock"] = self.wall_clock
        return d

    def to_json(self, *, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing=timing), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskResult":
        return cls(d["task"], tuple(d["targets"]),
                   [(c["target"], CheckReport.from_dict(c["report"])) for c in d["checks"]],
                   dict(d["plan"]), float(d.get("wall_clock", 0.0)), d["version"],
                   [tuple(r) for r in d["profile_rows"]], [tuple(r) for r in d["table"]])

    @classmethod
    def from_json(cls, text: str) -> "TaskResult":
        return cls.from_dict(json.loads(text))

    @property
    def verdicts(self) -> list[Verdict]:
        return [r.verdict for _, r in self.checks]


def _lookup(table: Mapping, kind: str, name: str | None):
    if name is None:
        raise TaskError(f"missing --{kind}")
    if name not in table:
        known = ", ".join(sorted(table)) or "none"
        raise TaskError(f"unknown {kind} {name!r} (known: {known})")
    return table[name]


def _sample_plan(m: Manifest, spec: TaskSpec, field_name: str | None) -> SamplePlan:
    if spec.plan is not None:
        plan = _lookup(m.plans, "plan", spec.plan)
    else:
        plan = SamplePlan(samples=spec.samples, seed=spec.seed,
                          box=m.field_boxes.get(field_name) if field_name else None)
    kw = {"threads": spec.threads}
    if spec.tol is not None:
        kw["tol"] = spec.tol
    return plan.with_(**kw)


def _plan_echo(plan: SamplePlan | PolarPlan) -> dict:
    if isinstance(plan, PolarPlan):
        return {"r_max": plan.r_max, "radii": plan.radii, "directions": plan.directions,
                "steps_per_unit": plan.steps_per_unit, "tol": plan.tol}
    return {"samples": plan.samples, "seed": plan.seed, "tol": plan.tol,
            "eps_crit": plan.eps_crit,
            "box": {k: list(v) for k, v in plan.box.items()} if plan.box else None}


def _field_and_manifold(m: Manifest, spec: TaskSpec):
    f = _lookup(m.fields, "field", spec.field)
    if spec.manifold is not None:
        M = _lookup(m.manifolds, "manifold", spec.manifold)
        if f.manifold is not M:
            raise TaskError(f"field {spec.field!r} is not defined on {spec.manifold!r}")
    return f, f.manifold


def _killing_report(M, X, pts, tol) -> CheckReport:
    r = _killing_batch(X, pts)
    k = int(np.argmax(r))
    worst = float(r[k])
    if worst <= tol:
        return CheckReport(Verdict.CONSISTENT, worst, tol, len(pts))
    return CheckReport(Verdict.REFUTED, worst, tol, len(pts), 0,
                       {c: float(v) for c, v in zip(M.coords, pts[k])})


def _run_equilibrium(m, spec):
    f, M = _field_and_manifold(m, spec)
    plan = _sample_plan(m, spec, spec.field)
    return TaskResult(spec.task, (spec.field,), [(spec.field, check_equilibrium(M, f, plan))],
                      _plan_echo(plan))


def _run_killing(m, spec):
    if not spec.vfields:
        raise TaskError("missing --vfield")
    fields = [_lookup(m.vfields, "vfield", v) for v in spec.vfields]
    M = fields[0].manifold
    if any(X.manifold is not M for X in fields):
        raise TaskError("vector fields live on different manifolds")
    plan = _sample_plan(m, spec, None)
    pts = sample_domain(M, plan)
    checks = [(X.name, _killing_report(M, X, pts, plan.tol)) for X in fields]
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            B = lie_bracket(fields[i], fields[j])
            checks.append((f"[{fields[i].name},{fields[j].name}]",
                           _killing_report(M, B, pts, plan.tol)))
    return TaskResult(spec.task, tuple(spec.vfields), checks, _plan_echo(plan))


def _run_symmetry(m, spec):
    if not spec.vfields:
        raise TaskError("missing --vfields")
    f, M = _field_and_manifold(m, spec)
    fields = tuple(_lookup(m.vfields, "vfield", v) for v in spec.vfields)
    plan = _sample_plan(m, spec, spec.field)
    try:
        algebra = KillingAlgebra(M, fields)
    except ValueError as err:
        raise TaskError(str(err)) from None
    rep = check_killing_induced_equilibrium(algebra, f, plan)
    checks = [(spec.field, rep)]
    checks += [(f"{spec.field}/{leg}", r) for leg, r in rep.legs.items()]
    return TaskResult(spec.task, (spec.field,) + tuple(spec.vfields), checks,
                      _plan_echo(plan))


def _run_separability(m, spec):
    name = spec.manifold
    M = _lookup(m.manifolds, "manifold", name)
    center = spec.center if spec.center is not None else m.centers.get(name)
    if center is None:
        raise TaskError(f"manifold {name!r} has no center; pass --center")
    if len(center) != M.dim:
        raise TaskError(f"--center needs {M.dim} coordinates")
    rmax = spec.rmax if spec.rmax is not None else m.rmax.get(name, 1.0)
    plan = PolarPlan(r_max=rmax, tol=spec.tol if spec.tol is not None else POLAR_TOL)
    patch = build_patch(M, center, plan)
    sep = separability_check(M, center, plan, patch=patch)
    half = half_r2_check(M, center, plan, patch=patch)
    return TaskResult(spec.task, (name,), [(f"{name}/separability", sep),
                                           (f"{name}/half_r2", half)], _plan_echo(plan))


def _run_stability(m, spec):
    w = _lookup(m.warps, "warp", spec.warp)
    rep, table = ritore_criterion(w)
    k = spec.mode if spec.mode is not None else 1
    if k < 1:
        raise TaskError("--mode must be at least 1")
    r0 = spec.r0
    if r0 is None:
        r0 = 1.0 if w.r_min < 1.0 < w.r_max else 0.5 * (w.r_min + w.r_max)
    if not w.r_min < r0 < w.r_max:
        raise TaskError(f"--r0 {r0} outside the warp range")
    Q = second_variation_mode(w, r0, k)
    f0 = float(w.f_values(r0)[0][0])
    identity = (math.pi / f0) * (k * k - criterion_value(w, r0))
    gap = abs(Q - identity)
    qtol = 1e-6 * (1.0 + abs(Q))
    sub = {"Q": Q, "identity": identity, "identity_gap": gap}
    if Q < -qtol:
        q_rep = CheckReport(Verdict.UNSTABLE, -Q, qtol, 512, 0, {"r0": r0, "mode": float(k)},
                            sub)
    else:
        q_rep = CheckReport(Verdict.STABLE_CANDIDATE, max(0.0, -Q), qtol, 512, 0, None, sub)
    modes = sorted({1, 2, 3, k})
    fv = first_variation_check(w, r0, modes)
    return TaskResult(spec.task, (spec.warp,),
                      [(f"{spec.warp}/criterion", rep), (f"{spec.warp}/second_variation", q_rep),
                       (f"{spec.warp}/first_variation", fv)],
                      {"r0": r0, "mode": k, "criterion_tol": rep.tol},
                      table=[(float(a), float(b)) for a, b in table])


def _run_profile(m, spec):
    f, M = _field_and_manifold(m, spec)
    plan = _sample_plan(m, spec, spec.field)
    profiles = extract_profiles(M, f, plan)
    checks, rows = [], []
    for p in profiles:
        lo, hi = p.interval
        checks.append((f"{spec.field}#{p.region_id}",
                       CheckReport(p.verdict, p.max_spread, 1e-2, len(p.f_values), 0,
                                   None if p.verdict is not Verdict.REFUTED else
                                   {"bin": float(p.offending_bin),
                                    "f": p.bins[p.offending_bin].f},
                                   {"f_lo": lo, "f_hi": hi})))
        rows += [(p.region_id, b.f, b.gradnormsq, b.laplacian, b.spread) for b in p.bins]
    return TaskResult(spec.task, (spec.field,), checks, _plan_echo(plan), profile_rows=rows)


_DISPATCH = {
    "check-equilibrium": _run_equilibrium,
    "check-killing": _run_killing,
    "check-symmetry": _run_symmetry,
    "check-separability": _run_separability,
    "check-stability": _run_stability,
    "profile": _run_profile,
}


def run_task(manifest: Manifest, spec: TaskSpec) -> TaskResult:
    if spec.task not in _DISPATCH:
        raise TaskError(f"unknown task {spec.task!r}")
    t0 = time.perf_counter()
    result = _DISPATCH[spec.task](manifest, spec)
    result.wall_clock = time.perf_counter() - t0
    return result


# -- output -------------------------------------------------------------------

def _g17(x: float) -> str:
    return "%.17g" % x


def _witness(w) -> str:
    if w is None:
        return "-"
    return ",".join(f"{k}:{_g17(v)}" for k, v in w.items())


def _check_line(task: str, target: str, r: CheckReport) -> str:
    return (f"CHECK {task} {target} VERDICT {r.verdict.value} "
            f"max_residual={_g17(r.max_residual)} tol={_g17(r.tol)} samples={r.samples} "
            f"excluded={r.excluded} witness={_witness(r.witness)}")


def emit_report(result: TaskResult, fmt: str = "text") -> bytes:
    """Render a result.  ``text`` lists one CHECK line per report after a header;
    ``csv`` gives the profile table for ``profile`` tasks and a table of checks
    otherwise.  Timing is never included, so output is reproducible."""
    if fmt == "text":
        plan = " ".join(f"{k}={_g17(v) if isinstance(v, float) else v}"
                        for k, v in sorted(result.plan.items()) if k != "box")
        lines = [f"# equipart {result.version} task={result.task} "
                 f"targets={','.join(result.targets)} {plan}".rstrip()]
        lines += [_check_line(result.task, t, r) for t, r in result.checks]
        return ("\n".join(lines) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if result.task == "profile":
            w.writerow(["region", "f", "gradnormsq", "laplacian", "spread"])
            for reg, f, a, b, s in result.profile_rows:
                w.writerow([reg, _g17(f), _g17(a), _g17(b), _g17(s)])
        else:
            w.writerow(["task", "target", "verdict", "max_residual", "tol", "samples",
                        "excluded", "witness"])
            for t, r in result.checks:
                w.writerow([result.task, t, r.verdict.value, _g17(r.max_residual),
                            _g17(r.tol), r.samples, r.excluded, _witness(r.witness)])
        return buf.getvalue().encode()
    raise TaskError(f"unknown format {fmt!r}")


# -- argument parsing ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_ERROR)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _default_threads() -> int:
    env = os.environ.get("EQUIPART_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise TaskError(f"EQUIPART_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--manifest", required=True,
                        help="manifest file, or the name of a built-in fixture")
    common.add_argument("--samples", type=int, default=2000)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--plan", default=None, help="named plan from the manifest")
    common.add_argument("--strict", action="store_true",
                        help="exit 1 on REFUTED, 2 on INCONCLUSIVE")
    common.add_argument("--format", choices=("text", "csv"), default="text")
    common.add_argument("--json", dest="json_out", default=None,
                        help="also write the full result as JSON to this path")

    p = _Parser(prog="equipart", description="Numerical checks of equilibrium partitions.")
    p.add_argument("--version", action="version", version=f"equipart {__version__}")
    sub = p.add_subparsers(dest="task", required=True, parser_class=_Parser)
    s = sub.add_parser("check-equilibrium", parents=[common])
    s.add_argument("--manifold")
    s.add_argument("--field", required=True)
    s = sub.add_parser("check-killing", parents=[common])
    s.add_argument("--vfield", type=_names, required=True)
    s = sub.add_parser("check-symmetry", parents=[common])
    s.add_argument("--vfields", type=_names, required=True)
    s.add_argument("--field", required=True)
    s.add_argument("--manifold")
    s = sub.add_parser("check-separability", parents=[common])
    s.add_argument("--manifold", required=True)
    s.add_argument("--center", type=_floats)
    s.add_argument("--rmax", type=float)
    s = sub.add_parser("check-stability", parents=[common])
    s.add_argument("--warp", required=True)
    s.add_argument("--mode", type=int)
    s.add_argument("--r0", type=float)
    s = sub.add_parser("profile", parents=[common])
    s.add_argument("--field", required=True)
    s.add_argument("--manifold")
    s.add_argument("--out", help="write the profile CSV here")
    return p


def _spec_from(args) -> TaskSpec:
    threads = args.threads if args.threads is not None else _default_threads()
    if threads < 1:
        raise TaskError("--threads must be at least 1")
    if args.samples < 1:
        raise TaskError("--samples must be at least 1")
    return TaskSpec(
        task=args.task, manifold=getattr(args, "manifold", None),
        field=getattr(args, "field", None),
        vfields=getattr(args, "vfield", None) or getattr(args, "vfields", None) or (),
        warp=getattr(args, "warp", None), center=getattr(args, "center", None),
        rmax=getattr(args, "rmax", None), mode=getattr(args, "mode", None),
        r0=getattr(args, "r0", None), samples=args.samples, seed=args.seed, tol=args.tol,
        threads=threads, plan=args.plan)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:       # --help / --version exit 0, usage errors exit 3
        return int(exc.code or 0)
    try:
        spec = _spec_from(args)
        manifest = resolve_manifest(args.manifest)
        result = run_task(manifest, spec)
        out = emit_report(result, args.format)
        if args.task == "profile" and args.out:
            with open(args.out, "wb") as fh:
                fh.write(emit_report(result, "csv"))
        if args.json_out:
            with open(args.json_out, "w", encoding="utf-8") as fh:
                fh.write(result.to_json())
    except (ManifestError, TaskError, GeometryError, ExpressionError, ValueError,
            RuntimeError, OSError) as err:
        sys.stderr.write(f"equipart: error: {err}\n")
        return EXIT_ERROR
    sys.stdout.buffer.write(out)
    sys.stdout.flush()
    if args.strict:
        if Verdict.REFUTED in result.verdicts:
            return EXIT_REFUTED
        if Verdict.INCONCLUSIVE in result.verdicts:
            return EXIT_INCONCLUSIVE
    return EXIT_OK


def main_entry():
    sys.exit(main())
