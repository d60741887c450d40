"""Command-line front end.

Angles are degrees at this boundary and radians everywhere inside.  Every
subcommand writes UTF-8, LF-terminated files under
out/<subcommand>/<tag>/ together with a manifest.txt listing each file and
its SHA-256 content hash; identical invocations produce byte-identical
trees.  Exit codes: 0 all verdicts passed, 2 some verdict failed,
1 execution or usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import fem, figures, qualify, sweep as sweep_mod
from . import mesh as mesh_mod
from .errors import TrimonoError
from .geometry import (make_triangle, moving_domain, moving_line, thresholds,
                       classify, condition_13, LOWER)

DEFAULTS = {
    "alpha_deg": 45.0,
    "beta_deg": 45.0,
    "n": 64,
    "grading": None,      # None: per-spec default
    "tol": fem.DEFAULT_TOL,
    "seed": 0,
    "out": "out",
    "workers": 1,
    "lam": None,          # geom: moving-line offset; None picks 0.6 * phi0
    "vartheta_deg": 90.0,
    "vartheta1_deg": 0.0,
    "f": "linear:auto",
    "grid": "10:80:15",
    "a": -1.1,
    "b": 1.2,
    "t": "1:5:17",
}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="trimono",
        description="Mixed Dirichlet-Neumann triangle laboratory: eigenpairs, "
                    "semilinear solves, and qualitative-theorem verdicts.")
    p.add_argument("--config", help="key = value file; flags override it")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *names):
        if "angles" in names:
            sp.add_argument("--alpha-deg", type=float, help="angle at the lower mixed vertex A")
            sp.add_argument("--beta-deg", type=float, help="angle at the upper mixed vertex B")
        if "mesh" in names:
            sp.add_argument("--n", type=int, help="cells per triangle side")
            sp.add_argument("--grading", type=float,
                            help="mesh grading exponent toward O (default: automatic)")
        if "solve" in names:
            sp.add_argument("--tol", type=float, help="eigen residual tolerance")
            sp.add_argument("--seed", type=int, help="start-vector seed")
        if "sweep" not in names:
            sp.add_argument("--workers", type=int,
                            help="worker processes (used by sweep)")
        sp.add_argument("--out", help="output directory root")

    sp = sub.add_parser("geom", help="triangle, thresholds, moving domain, SVG figure")
    common(sp, "angles")
    sp.add_argument("--lam", type=float, help="moving-line offset (default 0.6 * phi0)")
    sp.add_argument("--vartheta-deg", type=float, help="moving-line angle with the lower side")
    sp.add_argument("--vartheta1-deg", type=float, help="inner wedge angle")

    sp = sub.add_parser("mesh", help="generate, validate and export a mesh")
    common(sp, "angles", "mesh")

    sp = sub.add_parser("eigen", help="first eigenpair plus the verdict report")
    common(sp, "angles", "mesh", "solve")

    sp = sub.add_parser("semilinear", help="damped-Newton solve of the semilinear problem")
    common(sp, "angles", "mesh", "solve")
    sp.add_argument("--f", help="nonlinearity: linear:MU | power:P | logistic:A,B "
                                "(linear:auto uses the computed eigenvalue)")

    sp = sub.add_parser("verify", help="full theorem suite for one triangle")
    common(sp, "angles", "mesh", "solve")

    sp = sub.add_parser("sweep", help="(alpha, beta) phase diagram")
    common(sp, "mesh", "solve", "sweep")
    sp.add_argument("--grid", help="LO:HI:COUNT degrees for both angle axes")
    sp.add_argument("--workers", type=int, help="parallel worker processes")

    sp = sub.add_parser("continue", help="domain-deformation continuation path")
    common(sp, "mesh", "solve")
    sp.add_argument("--a", type=float, help="lower shape parameter (a < 0)")
    sp.add_argument("--b", type=float, help="upper shape parameter (b > -a)")
    sp.add_argument("--t", help="LO:HI:COUNT deformation parameter grid")
    return p


def _read_config(path: str) -> dict:
    cfg = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise TrimonoError(f"bad config line: {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def _resolve(args: argparse.Namespace, cfg: dict, key: str):
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in cfg:
        raw = cfg[key]
        default = DEFAULTS.get(key)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or key in ("grading", "lam"):
            return float(raw)
        return raw
    return DEFAULTS.get(key)


class Runner:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg = _read_config(args.config) if args.config else {}
        self.files: dict[str, str] = {}

    def opt(self, key: str):
        return _resolve(self.args, self.cfg, key)

    def emit(self, name: str, text: str) -> None:
        self.files[name] = text

    def flush(self, subdir: str) -> Path:
        root = Path(self.opt("out")) / subdir
        root.mkdir(parents=True, exist_ok=True)
        manifest = []
        for name in sorted(self.files):
            data = self.files[name].encode("utf-8")
            (root / name).write_bytes(data)
            manifest.append(f"{hashlib.sha256(data).hexdigest()}  {name}")
        (root / "manifest.txt").write_bytes(("\n".join(manifest) + "\n").encode())
        return root


def _angle_tag(alpha_deg: float, beta_deg: float) -> str:
    return f"{alpha_deg:g}x{beta_deg:g}"


def _spec_from(runner: Runner):
    alpha = math.radians(runner.opt("alpha_deg"))
    beta = math.radians(runner.opt("beta_deg"))
    return make_triangle(alpha, beta)


def _make_mesh(runner: Runner, spec):
    grading = runner.opt("grading")
    if grading is None:
        grading = mesh_mod.default_grading(spec)
    return mesh_mod.generate(spec, runner.opt("n"), grading)


def _kv(pairs) -> str:
    lines = []
    for k, v in pairs:
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = f"{v:.17g}"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def cmd_geom(runner: Runner) -> int:
    spec = _spec_from(runner)
    thr = thresholds(spec)
    cls = classify(spec)
    lam = runner.opt("lam")
    if lam is None:
        lam = 0.6 * spec.phi0
    vt = math.radians(runner.opt("vartheta_deg"))
    vt1 = math.radians(runner.opt("vartheta1_deg"))
    line = moving_line(spec, LOWER, lam, vt)
    dom = moving_domain(spec, lam, vt, vt1 if vt1 < vt else None)
    pairs = [
        ("alpha_deg", math.degrees(spec.alpha)),
        ("beta_deg", math.degrees(spec.beta)),
        ("gamma_deg", math.degrees(spec.gamma)),
        ("A_x", spec.A[0]), ("A_y", spec.A[1]),
        ("B_x", spec.B[0]), ("B_y", spec.B[1]),
        ("phi0", spec.phi0), ("psi0", spec.psi0),
        ("dirichlet_len", spec.dirichlet_len),
        ("neumann_vertex", cls.neumann_vertex),
        ("isosceles", cls.isosceles),
        ("longer_neumann_side", cls.longer_neumann_side),
        ("middle_side", cls.middle_side),
        ("condition_13", condition_13(spec.alpha, spec.beta)),
        ("phi1", "absent" if thr.phi1 is None else thr.phi1),
        ("psi1", "absent" if thr.psi1 is None else thr.psi1),
        ("phi2", "absent" if thr.phi2 is None else thr.phi2),
        ("psi2", "absent" if thr.psi2 is None else thr.psi2),
        ("alpha_star", "absent" if thr.alpha_star is None else thr.alpha_star),
        ("beta_star", "absent" if thr.beta_star is None else thr.beta_star),
        ("domain.lam", lam),
        ("domain.vartheta_deg", math.degrees(vt)),
        ("domain.empty", dom.empty),
        ("domain.area", dom.area),
    ]
    runner.emit("spec.txt", _kv(pairs))
    runner.emit("figure.svg", figures.geometry_svg(spec, line, dom))
    runner.flush(f"geom/{_angle_tag(runner.opt('alpha_deg'), runner.opt('beta_deg'))}")
    return 0


def cmd_mesh(runner: Runner) -> int:
    spec = _spec_from(runner)
    mesh = _make_mesh(runner, spec)
    report = mesh_mod.validate(mesh, spec)
    import io

    buf = io.StringIO()
    mesh_mod.write_text(mesh, buf)
    runner.emit("mesh.txt", buf.getvalue())
    runner.emit("validate.txt", _kv([
        ("vertices", mesh.num_vertices),
        ("cells", mesh.num_cells),
        ("h", mesh.h),
        ("grading", mesh.grading),
        ("min_angle_deg", report.min_angle),
        ("max_aspect", report.max_aspect),
        ("violations", len(report.violations)),
    ] + [(f"violation.{i}", v) for i, v in enumerate(report.violations)]))
    runner.flush(f"mesh/{_angle_tag(runner.opt('alpha_deg'), runner.opt('beta_deg'))}")
    return 0 if report.ok else 2


def _solution_text(mesh, u) -> str:
    import io

    buf = io.StringIO()
    mesh_mod.write_text(mesh, buf)
    for v in u:
        buf.write(f"{float(v)!r}\n")
    return buf.getvalue()


def cmd_eigen(runner: Runner) -> int:
    spec = _spec_from(runner)
    mesh = _make_mesh(runner, spec)
    eig = fem.solve_eigen(mesh, tol=runner.opt("tol"), seed=runner.opt("seed"))
    report = qualify.build_report(mesh, eig.u, eig.mu, spec)
    runner.emit("solution.txt", _solution_text(mesh, eig.u))
    runner.emit("diagnostics.txt", _kv([
        ("mu", eig.mu),
        ("residual", eig.residual),
        ("iterations", eig.iterations),
        ("positive", eig.positive),
    ]))
    runner.emit("report.txt", qualify.report_to_text(report))
    runner.flush(f"eigen/{_angle_tag(runner.opt('alpha_deg'), runner.opt('beta_deg'))}")
    return 0 if report.all_passed() else 2


def _parse_nonlinearity(tag: str, mu_auto) -> fem.Nonlinearity:
    kind, _, rest = tag.partition(":")
    if kind == "linear":
        mu = mu_auto if rest in ("auto", "") else float(rest)
        return fem.linear(mu)
    if kind == "power":
        return fem.power(float(rest))
    if kind == "logistic":
        a, b = (float(t) for t in rest.split(","))
        return fem.logistic(a, b)
    raise TrimonoError(f"unknown nonlinearity {tag!r}")


def cmd_semilinear(runner: Runner) -> int:
    spec = _spec_from(runner)
    mesh = _make_mesh(runner, spec)
    eig = fem.solve_eigen(mesh, tol=runner.opt("tol"), seed=runner.opt("seed"))
    nl = _parse_nonlinearity(runner.opt("f"), eig.mu)
    u0 = fem.eigenfunction_start(mesh, nl, eig)
    result = fem.solve_semilinear(mesh, nl, u0)
    runner.emit("solution.txt", _solution_text(mesh, result.u))
    runner.emit("diagnostics.txt", _kv(
        [("nonlinearity", nl.name),
         ("converged", result.converged),
         ("iterations", result.iterations),
         ("positivity", result.positivity)]
        + [(f"newton.{i}", r) for i, r in enumerate(result.newton_history)]))
    runner.flush(f"semilinear/{_angle_tag(runner.opt('alpha_deg'), runner.opt('beta_deg'))}")
    return 0 if result.positivity else 2


def cmd_verify(runner: Runner) -> int:
    spec = _spec_from(runner)
    mesh = _make_mesh(runner, spec)
    eig = fem.solve_eigen(mesh, tol=runner.opt("tol"), seed=runner.opt("seed"))
    report = qualify.build_report(mesh, eig.u, eig.mu, spec,
                                  reflection_grid=4)
    runner.emit("report.txt", qualify.report_to_text(report))
    root = runner.flush(
        f"verify/{_angle_tag(runner.opt('alpha_deg'), runner.opt('beta_deg'))}")
    ok = report.all_passed()
    print(f"verify: {'PASS' if ok else 'FAIL'} "
          f"(mu = {eig.mu:.9g}, max = {report.max_resolved.klass}) -> {root}")
    return 0 if ok else 2


def _parse_grid(tag: str) -> tuple[float, float, int]:
    parts = tag.split(":")
    if len(parts) != 3:
        raise TrimonoError(f"grid must be LO:HI:COUNT, got {tag!r}")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1 or hi < lo:
        raise TrimonoError(f"empty or inverted grid {tag!r}")
    return lo, hi, count


def cmd_sweep(runner: Runner) -> int:
    lo, hi, count = _parse_grid(runner.opt("grid"))
    grid = sweep_mod.angle_grid(math.radians(lo), math.radians(hi), count)
    if not grid:
        raise TrimonoError("sweep grid contains no valid triangles")
    opts = sweep_mod.SweepOptions(n=runner.opt("n"), seed=runner.opt("seed"),
                                  tol=runner.opt("tol"),
                                  workers=runner.opt("workers"),
                                  grading=runner.opt("grading"))
    records = sweep_mod.sweep_angles(grid, opts)
    runner.emit("sweep.csv", sweep_mod.records_to_csv(records))
    runner.emit("phase.svg", sweep_mod.phase_svg(records))
    root = runner.flush(f"sweep/{lo:g}-{hi:g}-{count}")
    errors = [r for r in records if r.error]
    print(f"sweep: {len(records)} records, {len(errors)} errors -> {root}")
    return 0 if not errors else 2


def cmd_continue(runner: Runner) -> int:
    lo, hi, count = _parse_grid(runner.opt("t"))
    ts = list(np.linspace(lo, hi, count))
    opts = sweep_mod.SweepOptions(n=runner.opt("n"), seed=runner.opt("seed"),
                                  tol=runner.opt("tol"),
                                  grading=runner.opt("grading"))
    path = sweep_mod.continuation_t(runner.opt("a"), runner.opt("b"), ts, opts)
    pairs = [("a", path.a), ("b", path.b), ("points", len(path.records)),
             ("all_monotone", path.all_monotone),
             ("gamma_increasing", path.gamma_increasing())]
    for r in path.records:
        pairs += [(f"t{r.t:.6g}.mu", r.mu),
                  (f"t{r.t:.6g}.gamma_deg", math.degrees(r.gamma)),
                  (f"t{r.t:.6g}.monotone", r.monotone.passed),
                  (f"t{r.t:.6g}.max_class", r.max_class)]
    runner.emit("path.txt", _kv(pairs))
    root = runner.flush(f"continue/a{path.a:g}_b{path.b:g}")
    print(f"continue: {'PASS' if path.all_monotone else 'FAIL'} -> {root}")
    return 0 if path.all_monotone else 2


_COMMANDS = {
    "geom": cmd_geom,
    "mesh": cmd_mesh,
    "eigen": cmd_eigen,
    "semilinear": cmd_semilinear,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "continue": cmd_continue,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract here is 1.
        code = exc.code or 0
        return 0 if code == 0 else 1
    try:
        return _COMMANDS[args.command](Runner(args))
    except TrimonoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
