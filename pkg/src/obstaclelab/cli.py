"""Command-line entry point: ``obstaclelab <subcommand> --config cfg.yaml --out dir``.

Exit codes: 0 success, 1 a verified criterion failed, 2 invalid input,
3 solver non-convergence, 4 empty free boundary.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import acceptance
from .config import ConfigError, ExperimentConfig, dump_config, jsonable, load_config
from .fixtures import Fixture
from .geometry import (
    EmptyFreeBoundaryError,
    FitError,
    FitWindow,
    box_dimension,
    default_window,
    detach_profile,
    detach_rate_at,
    dyadic_scales,
    extract_free_boundary,
    gradient_growth_at,
    gradient_profile,
    growth_exponent_at,
    growth_profile,
    nondegeneracy_profile,
    porosity_estimate,
)
from .grid import GridField, sample
from .oracles import beta_of
from .renormalization import dyadic_sequence, flatness_measure, growth_bound_check
from .solver import SolverError, SolverReport, solve, source_sign
from .storage import FieldFormatError, read_field, write_csv, write_field, write_json, write_manifest

log = logging.getLogger("obstaclelab")

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_NO_FB = 0, 1, 2, 3, 4

GEOMETRY_COLUMNS = ["x0_index", "r", "S_growth", "S_detach", "S_grad", "nondeg_ratio"]


class _Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, out: Path, cfg: Optional[ExperimentConfig], args):
        self.out = out
        self.cfg = cfg
        self.args = args
        self.files: list[Path] = []
        self.timings: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def stage(self, name: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = round(time.perf_counter() - self.t, 6)

        return _Timer()

    def add(self, path: Path) -> Path:
        self.files.append(Path(path))
        return Path(path)

    def finish(self) -> None:
        if self.cfg is not None:
            self.add(self.out / "config.yaml").write_text(dump_config(self.cfg))
        write_manifest(self.out, self.files, self.cfg.digest() if self.cfg else "", __version__, self.timings,
                       {"command": self.args.command, "threads": self.args.threads})


# ---------------------------------------------------------------- helpers

def _problem(cfg: ExperimentConfig, level: int = 0):
    fx = cfg.fixture()
    dom = cfg.grid.domain(level)
    fx.spec.validate(dom)
    scfg = cfg.solver_config()
    if scfg.backend == "penalized":
        source_sign(fx.spec.source_field(dom).interior_values)
    return fx, dom, scfg


def _solve(cfg: ExperimentConfig, level: int = 0) -> tuple[Fixture, SolverReport]:
    fx, dom, scfg = _problem(cfg, level)
    return fx, solve(fx.spec, dom, scfg)


def _solver_summary(rep: SolverReport, fx: Fixture) -> dict:
    out = {
        "converged": rep.converged,
        "final_residual": rep.final_residual,
        "iterations": rep.wall_iterations,
        "epsilon_used": rep.epsilon_used,
        "outer_gaps": rep.outer_gaps,
        "message": rep.message,
        "fixture": fx.name,
    }
    if fx.exact is not None:
        dom = rep.solution.domain
        x = dom.coords[: dom.n_interior]
        out["error_vs_exact"] = float(np.max(np.abs(rep.solution.interior_values - fx.exact(x))))
    return out


def _field(args, cfg: ExperimentConfig, run: _Run) -> tuple[Fixture, GridField, Optional[SolverReport]]:
    """Solution from ``--solution``, the exact oracle (``--oracle``) or a fresh solve."""
    if getattr(args, "solution", None):
        fx = cfg.fixture()
        u = read_field(args.solution)
        d = u.domain
        g = cfg.grid
        if d.dim != g.dim or abs(d.spacing - g.h) > 1e-15 or abs(d.radius - g.radius) > 1e-15:
            raise ConfigError(f"{args.solution} does not match the configured grid")
        return fx, u, None
    if getattr(args, "oracle", False):
        fx = cfg.fixture()
        if fx.exact is None:
            raise ConfigError(f"fixture {fx.name!r} has no exact solution")
        dom = cfg.grid.domain()
        fx.spec.validate(dom)
        return fx, sample(fx.exact, dom), None
    with run.stage("solve"):
        fx, rep = _solve(cfg)
    return fx, rep.solution, rep


def _fit_or_none(fn, *a):
    try:
        fit = fn(*a)
        return {"slope": fit.slope, "halfwidth": fit.halfwidth}
    except FitError as exc:
        return {"slope": None, "halfwidth": None, "error": str(exc)}


def _pick_points(dom, fb_nodes, meas: dict) -> list[int]:
    points = meas.get("x0")
    if points:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.linalg.norm(dom.coords[fb_nodes][None, :, :] - pts[:, None, :], axis=2)
        return [int(fb_nodes[j]) for j in np.argmin(d, axis=1)]
    # evenly spaced free-boundary nodes whose window reaches 4 dyadic radii
    count = int(meas.get("points", 4))
    h = dom.spacing
    ok = [k for k in fb_nodes if (dom.radius - np.linalg.norm(dom.coords[k])) / 2 >= 32 * h]
    if not ok:
        ok = list(fb_nodes)
    step = max(1, len(ok) // count)
    return [int(k) for k in ok[::step][:count]]


# ---------------------------------------------------------------- subcommands

def cmd_solve(args, cfg: ExperimentConfig, run: _Run) -> int:
    with run.stage("solve"):
        fx, rep = _solve(cfg)
    run.add(write_field(run.out / "solution.bin", rep.solution))
    run.add(write_csv(run.out / "residual_history.csv", ["iteration", "residual"], enumerate(rep.residual_history)))
    summary = _solver_summary(rep, fx)
    run.add(write_json(run.out / "summary.json", jsonable(summary)))
    print(f"converged={rep.converged} residual={rep.final_residual:.3e} iterations={rep.wall_iterations}"
          + (f" error={summary['error_vs_exact']:.3e}" if "error_vs_exact" in summary else ""))
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def geometry_report(u: GridField, fx: Fixture, meas: dict) -> tuple[dict, list]:
    """Per-radius rows and the summary for the free-boundary measurements."""
    spec = fx.spec
    dom = u.domain
    phi = sample(spec.obstacle, dom)
    fb = extract_free_boundary(u, phi, meas.get("tol_contact"))
    if len(fb.fb_nodes) == 0:
        raise EmptyFreeBoundaryError("contact set has no boundary nodes")
    gamma = spec.gamma
    floor = float(meas.get("floor_multiple", 10.0))
    rows, per_point = [], []
    for k in _pick_points(dom, fb.fb_nodes, meas):
        x0 = dom.coords[k]
        if "r_min" in meas or "r_max" in meas:
            base = default_window(dom, x0, floor)
            window = FitWindow(meas.get("r_min", base.r_min), meas.get("r_max", base.r_max), floor)
        else:
            window = default_window(dom, x0, floor)
        try:
            window.check(dom, x0)
        except FitError as exc:
            per_point.append({"x0_index": k, "x0": x0, "error": str(exc)})
            continue
        radii = window.radii()
        sg = growth_profile(u, phi, k, window, meas.get("gradient_source", "phi"))
        sd = detach_profile(u, phi, k, window)
        sgr = gradient_profile(u, k, window)
        nd = nondegeneracy_profile(u, phi, k, radii, gamma=gamma)
        rows += [[k, r, a, b, c, d] for r, a, b, c, d in zip(radii, sg, sd, sgr, nd.ratios)]
        per_point.append({
            "x0_index": k,
            "x0": x0,
            "growth": _fit_or_none(growth_exponent_at, u, phi, k, window, meas.get("gradient_source", "phi")),
            "detach": _fit_or_none(detach_rate_at, u, phi, k, window),
            "gradient": _fit_or_none(gradient_growth_at, u, k, window),
            "nondeg_min": nd.c_hat,
            "nondeg_spread": nd.spread,
        })

    def median(key):
        vals = [p[key]["slope"] for p in per_point if key in p and p[key]["slope"] is not None]
        return float(np.median(vals)) if vals else None

    h = dom.spacing
    por_radii = [4 * h * 2.0**j for j in range(12) if 4 * h * 2.0**j <= 0.25 * dom.radius]
    try:
        porosity = porosity_estimate(fb.fb_nodes, dom, por_radii) if por_radii else None
    except ValueError:
        porosity = None
    try:
        boxdim = box_dimension(fb.fb_nodes, dom, dyadic_scales(dom, 5, 0.25 * dom.radius), 0.5 * dom.radius)
    except (FitError, ValueError):
        boxdim = None
    beta = beta_of(gamma, spec.alpha)
    summary = {
        "slopes": {"growth": median("growth"), "detach": median("detach"), "gradient": median("gradient")},
        "per_point": per_point,
        "porosity_hat": porosity,
        "boxdim_hat": boxdim,
        "targets": {"growth": 1.0 + beta, "detach": 1.0 + beta, "gradient": beta,
                    "nondegeneracy": 1.0 + 1.0 / (gamma + 1.0)},
        "contact_count": len(fb.contact_nodes),
        "fb_count": len(fb.fb_nodes),
        "tol_contact": fb.tol_contact,
    }
    return summary, rows


def cmd_geometry(args, cfg: ExperimentConfig, run: _Run) -> int:
    fx, u, rep = _field(args, cfg, run)
    meas = dict(cfg.measurements.get("geometry", {}) or {})
    try:
        with run.stage("geometry"):
            summary, rows = geometry_report(u, fx, meas)
    except EmptyFreeBoundaryError as exc:
        run.add(write_json(run.out / "geometry_summary.json", {"empty_free_boundary": True, "message": str(exc)}))
        print(f"empty free boundary: {exc}", file=sys.stderr)
        return EXIT_NO_FB
    summary["empty_free_boundary"] = False
    summary["source"] = "solution_file" if args.solution else ("oracle" if args.oracle else "solver")
    if rep is not None:
        summary["solver"] = _solver_summary(rep, fx)
    run.add(write_csv(run.out / "geometry.csv", GEOMETRY_COLUMNS, rows))
    run.add(write_json(run.out / "geometry_summary.json", jsonable(summary)))
    s = summary["slopes"]
    print("slopes: " + ", ".join(f"{k}={'n/a' if v is None else f'{v:.4f}'}" for k, v in s.items())
          + f"; porosity={summary['porosity_hat']}; boxdim={summary['boxdim_hat']}")
    if rep is not None and not rep.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_oracle(args, cfg: ExperimentConfig, run: _Run) -> int:
    fx = cfg.fixture()
    if fx.exact is None:
        raise ConfigError(f"fixture {fx.name!r} has no exact solution")
    dom = cfg.grid.domain()
    fx.spec.validate(dom)
    v = sample(fx.exact, dom)
    run.add(write_field(run.out / "oracle.bin", v))
    summary = {"fixture": fx.name, "note": fx.note, "n_nodes": dom.n_nodes, "n_interior": dom.n_interior,
               "sup": float(np.max(v.interior_values)), "min": float(np.min(v.interior_values))}
    if fx.name == "radial_sharpness":
        from .oracles import RadialSharpness, verify_radial_is_solution

        p = cfg.problem.get("params", {}) or {}
        orc = RadialSharpness(float(p.get("gamma", 1.0)), float(p.get("r_contact", 0.5)), dom.dim)
        summary["residual_off_collar"] = verify_radial_is_solution(orc, dom)
    run.add(write_json(run.out / "oracle_summary.json", jsonable(summary)))
    print(f"sampled {fx.name} on {dom.n_nodes} nodes")
    return EXIT_OK


def _restrict(coarse: GridField, fine: GridField) -> np.ndarray:
    """Fine-grid values at the coarse interior nodes (spacing ratio 2)."""
    cd, fd = coarse.domain, fine.domain
    idx = cd.index[: cd.n_interior] * 2 + fd.half_width
    return fine.values[fd.lookup[tuple(idx.T)]]


def cmd_convergence(args, cfg: ExperimentConfig, run: _Run) -> int:
    L = cfg.grid.levels
    if L < 3:
        raise ConfigError("a convergence study needs grid.levels >= 3")
    meas = dict(cfg.measurements.get("geometry", {}) or {})
    rows, prev, prev_err, prev_cauchy = [], None, None, None
    all_ok = True
    target = None
    for level in range(L):
        with run.stage(f"solve_level_{level}"):
            fx, rep = _solve(cfg, level)
        all_ok &= rep.converged
        u = rep.solution
        dom = u.domain
        err = None
        if fx.exact is not None:
            err = float(np.max(np.abs(u.interior_values - fx.exact(dom.coords[: dom.n_interior]))))
        cauchy = None
        if prev is not None:
            cauchy = float(np.max(np.abs(_restrict(prev, u) - prev.interior_values)))
        slope = None
        try:
            summ, _ = geometry_report(u, fx, {**meas, "points": meas.get("points", 1)})
            slope = summ["slopes"]["growth"]
            target = summ["targets"]["growth"]
        except (EmptyFreeBoundaryError, FitError, ValueError):
            pass
        rows.append([level, dom.spacing, err, None if (err is None or prev_err is None) else prev_err / err,
                     cauchy, None if (cauchy is None or prev_cauchy is None) else prev_cauchy / cauchy,
                     slope, target, rep.converged])
        print(f"level {level}: h={dom.spacing:.6g} error={err} cauchy={cauchy} growth_slope={slope}")
        prev, prev_err, prev_cauchy = u, err, cauchy
    header = ["level", "h", "error", "error_ratio", "cauchy", "cauchy_ratio", "growth_slope", "growth_target",
              "converged"]
    run.add(write_csv(run.out / "convergence.csv", header, rows))
    run.add(write_json(run.out / "convergence_summary.json",
                       jsonable({"levels": L, "has_oracle": fx.exact is not None, "converged": all_ok,
                                 "rows": [dict(zip(header, r)) for r in rows]})))
    return EXIT_OK if all_ok else EXIT_NONCONVERGED


def cmd_renorm(args, cfg: ExperimentConfig, run: _Run) -> int:
    fx, u, rep = _field(args, cfg, run)
    meas = dict(cfg.measurements.get("renorm", {}) or {})
    dom = u.domain
    spec = fx.spec
    rho = float(meas.get("rho", 0.5))
    beta = float(meas.get("beta", spec.beta()))
    center = np.asarray(meas.get("center", [0.0] * dom.dim), dtype=float)
    dist = dom.radius - float(np.linalg.norm(center))
    deepest = int(np.floor(np.log(4 * dom.spacing / dist) / np.log(rho)))
    k_max = int(meas.get("k_max", deepest))
    try:
        seq = dyadic_sequence(u, rho, beta, k_max, meas.get("grad0"), center)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    bounds = growth_bound_check(u, rho, beta, [s.radius for s in seq], center, meas.get("grad0"))
    phi = sample(spec.obstacle, dom)
    flat = flatness_measure(u, phi, float(meas.get("iota", 0.1)))
    rows = [[s.k, s.radius, s.denominator, s.sup_norm, b[0], b[1]] for s, b in zip(seq, bounds)]
    run.add(write_csv(run.out / "renorm.csv",
                      ["k", "radius", "denominator", "sup_norm", "sup_increment", "m_bound"], rows))
    summary = {
        "rho": rho, "beta": beta, "center": center, "k_max": k_max,
        "sup_norms": [s.sup_norm for s in seq],
        "max_sup_norm": max(s.sup_norm for s in seq),
        "growth_bound_holds": all(a <= b for a, b in bounds),
        "flatness": {"sup_gap": flat.sup_gap, "sup_grad_gap": flat.sup_grad_gap, "iota": flat.iota,
                     "flat": flat.flat},
    }
    if rep is not None:
        summary["solver"] = _solver_summary(rep, fx)
    run.add(write_json(run.out / "renorm_summary.json", jsonable(summary)))
    print(f"dyadic sup-norms: {np.array2string(np.array(summary['sup_norms']), precision=4)}")
    if rep is not None and not rep.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_verify(args, cfg, run: Optional[_Run]) -> int:
    ids = sorted(acceptance.RECIPES) if args.criterion.lower() == "all" else [args.criterion.upper()]
    bad = [c for c in ids if c not in acceptance.RECIPES]
    if bad:
        raise ConfigError(f"unknown criterion {bad[0]!r}; choose from {sorted(acceptance.RECIPES)} or 'all'")
    results = []
    for cid in ids:
        kw = {"seed": args.seed if args.seed is not None else 0} if cid == "A1" else {}
        res = acceptance.run(cid, **kw)
        print(res.line(), flush=True)
        results.append(res)
    if run is not None:
        for res in results:
            run.add(write_json(run.out / f"verify_{res.cid}.json",
                               jsonable({"id": res.cid, "passed": res.passed, "summary": res.summary,
                                         "details": res.details})))
            run.timings[res.cid] = round(res.seconds, 6)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {
    "solve": cmd_solve,
    "geometry": cmd_geometry,
    "oracle": cmd_oracle,
    "convergence": cmd_convergence,
    "renorm": cmd_renorm,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (recorded in the manifest)")
    common.add_argument("--seed", type=int, default=None, help="seed for randomised checks (overrides config)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="obstaclelab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the configured problem")
    for name in ("geometry", "renorm"):
        sp = sub.add_parser(name, parents=[common], help=f"{name} measurements")
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--solution", type=Path, help="field dump from a previous solve")
        src.add_argument("--oracle", action="store_true", help="use the fixture's exact solution")
    sub.add_parser("oracle", parents=[common], help="sample the fixture's exact solution")
    sub.add_parser("convergence", parents=[common], help="refinement study over grid.levels")
    vp = sub.add_parser("verify", parents=[common], help="run an acceptance recipe")
    vp.add_argument("criterion", help="A1 ... A8 or 'all'")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = None
        if args.command != "verify":
            if args.config is None:
                raise ConfigError(f"{args.command} needs --config")
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
        out = args.out or (Path(cfg.output_dir) if cfg else None)
        run = _Run(out, cfg, args) if out is not None else None
        code = COMMANDS[args.command](args, cfg, run)
        if run is not None:
            run.finish()
        return code
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ConfigError, FieldFormatError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
