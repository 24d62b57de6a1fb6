"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 infeasible problem (lambda too large or no annulus left).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import figures
from .config import KEYS, AffineLambda, RunConfig
from .errors import (
    BernoulliError,
    ConfigError,
    EmptyAnnulus,
    LambdaTooLarge,
    LevelNotPresent,
    NonConvergence,
)
from .experiments import run_brunn_minkowski, run_converge_bernoulli
from .exporters import Layer, export_csv, export_svg, polylines_csv
from .freeboundary import (
    DistanceSpec,
    FreeBoundaryConfig,
    JoiningFunction,
    check_distance_condition,
    iterate_exterior,
    iterate_interior,
    search_lambda_max,
    supersolution_disk,
    two_phase_iterate,
)
from .geometry import Grid2D, Polygon, extract_level_curve, write_polygon
from .pde import PLaplaceConfig
from .radial import (
    RadialProblem,
    bernoulli_limit,
    gap_sweep,
    interior_extremum,
    solve_exterior_radius,
    solve_interior_radii,
)

log = logging.getLogger("discrete_bernoulli")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_INFEASIBLE = 0, 2, 3, 4

DEFAULT_H = 1.0 / 128


# ---------------------------------------------------------------------------
# shared plumbing


def _pde(cfg: RunConfig) -> PLaplaceConfig:
    kw = {"p": cfg.get("p", 2.0)}
    for key in ("picard_tol", "picard_max", "eps_reg", "linear_solver"):
        if key in cfg:
            kw[key] = cfg.get(key)
    try:
        return PLaplaceConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _fb_config(cfg: RunConfig, bbox) -> FreeBoundaryConfig:
    h = cfg.get("grid_h", DEFAULT_H)
    if "bbox" in cfg:
        bbox = cfg.get("bbox")
    margin = cfg.get("margin", 4 * h)
    try:
        return FreeBoundaryConfig(
            Grid2D.covering(bbox, h, margin),
            _pde(cfg),
            cfg.get("outer_tol"),
            cfg.get("outer_max", 80),
            cfg.get("convexify", True),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _grow(bbox, pad: float):
    x0, x1, y0, y1 = bbox
    return (x0 - pad, x1 + pad, y0 - pad, y1 + pad)


def _union(*boxes):
    b = np.array(boxes, dtype=float)
    return (b[:, 0].min(), b[:, 1].max(), b[:, 2].min(), b[:, 3].max())


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.get("out", "out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc.strerror}", key="out") from None
    return out


def _level(cfg: RunConfig, lam: float | AffineLambda) -> float:
    """``level`` directly, or ``bernoulli_omega * lambda``."""
    if "bernoulli_omega" in cfg:
        if "level" in cfg:
            raise cfg.fail("bernoulli_omega", "give either level or bernoulli_omega, not both")
        if isinstance(lam, AffineLambda):
            raise cfg.fail("bernoulli_omega", "bernoulli_omega needs a constant lambda")
        l = cfg.get("bernoulli_omega") * lam
        if not 0 < l < 1:
            raise cfg.fail("bernoulli_omega", f"bernoulli_omega * lambda = {l:.4g} must lie in (0, 1)")
        return l
    return cfg.require("level")


def _check_lambda(cfg: RunConfig, lo: float, h: float) -> None:
    if lo < 2 * h:
        raise cfg.fail("lambda", f"lambda {lo:.4g} is below 2h = {2 * h:.4g}; refine grid_h")


def _spec(cfg: RunConfig, bbox) -> DistanceSpec:
    lam, lo, hi = cfg.distance(bbox)
    l = _level(cfg, lam)
    if isinstance(lam, AffineLambda):
        return DistanceSpec(l, lam, bounds=(lo, hi))
    omega = cfg.get("bernoulli_omega")
    return DistanceSpec(l, lam, omega=omega)


def _summary(rows: Sequence[tuple[str, object]], path: Path) -> None:
    export_csv(("quantity", "value"), rows, path)
    for k, v in rows:
        print(f"{k} = {v:.10g}" if isinstance(v, float) else f"{k} = {v}")


def _figures(cfg: RunConfig) -> bool:
    return bool(cfg.get("figures", True))


def _write_run(out: Path, cfg: RunConfig, fld, boundary: Polygon, fixed: Polygon, trace, spec: DistanceSpec,
               exterior: bool) -> None:
    curve = extract_level_curve(fld, spec.l)
    trace.write_csv(out / "trace.csv")
    fld.write_csv(out / "field.csv")
    write_polygon(boundary, out / "boundary.txt", "free boundary")
    curve.write_csv(out / "level.csv")
    inner, outer = (fixed, boundary) if exterior else (boundary, fixed)
    layers = [
        Layer("inner", inner, "inner body" + ("" if exterior else " (free)")),
        Layer("level", curve, f"level set u = {spec.l:g}"),
        Layer("free-boundary", boundary, "free boundary"),
    ]
    if not exterior:
        layers.append(Layer("outer", outer, "fixed outer body"))
    export_svg(layers, out / "overlay.svg", fld.grid.bbox)
    check = check_distance_condition(fld, boundary, spec, curve)
    _summary(
        [
            ("level", spec.l),
            ("lambda_min", spec.lower_bound),
            ("lambda_max", spec.upper_bound),
            ("iterations", len(trace)),
            ("hausdorff_step", trace.last.hausdorff_step),
            ("condition_residual", check.max_residual),
            ("area", boundary.area),
            ("equivalent_radius", math.sqrt(boundary.area / math.pi)),
            ("h", fld.grid.h),
        ],
        out / "summary.csv",
    )
    if _figures(cfg):
        figures.plot_solution(
            fld,
            [("inner", inner, "inner body"), ("level", curve, f"u = {spec.l:g}"), ("outer", outer, "outer body")],
            out / "solution.png",
        )
        figures.plot_trace(
            {"Hausdorff step": trace.column("hausdorff_step"),
             "condition residual": trace.column("condition_residual")},
            out / "trace.png",
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_radial(cfg: RunConfig) -> int:
    p, N, R, l = cfg.get("p", 2.0), cfg.get("N", 2), cfg.require("R"), cfg.require("level")
    out = _out_dir(cfg)
    prob = RadialProblem.interior(p, N, 0.5 * R, R, l)
    ext = interior_extremum(prob)
    sweep = gap_sweep(prob, 201)
    export_csv(("r", "Lambda"), [tuple(r) for r in sweep], out / "radial.csv")
    rows: list[tuple[str, object]] = [
        ("r_max", ext.r_max),
        ("lambda_max", ext.lambda_max),
        ("lambda_min", ext.lambda_min),
        ("bernoulli_limit", bernoulli_limit(p, N, R)),
    ]
    if _figures(cfg):
        figures.plot_series(sweep[:, 0], {"Lambda(r)": sweep[:, 1]}, out / "radial.png", "r", "Lambda",
                            hline=ext.lambda_max)
    if "lambda" in cfg:
        lam, _, _ = cfg.distance((0.0, R, 0.0, R))
        if isinstance(lam, AffineLambda):
            raise cfg.fail("lambda", "the radial subcommand needs a constant lambda")
        if "r" in cfg:
            rows.append(("exterior_radius", solve_exterior_radius(p, N, cfg.get("r"), l, lam)))
        radii = solve_interior_radii(prob, lam)
        rows.append(("r1", math.nan if radii.r1 is None else radii.r1))
        rows.append(("r2", radii.r2))
    _summary(rows, out / "summary.csv")
    return EXIT_OK


def cmd_solve_exterior(cfg: RunConfig) -> int:
    K = cfg.shape("inner")
    omega0 = cfg.convex_shape("outer", required=False)
    h = cfg.get("grid_h", DEFAULT_H)
    if omega0 is None:
        lam_text = cfg.require("lambda")
        if "bbox" not in cfg and any(c in lam_text for c in "xy"):
            raise cfg.fail("lambda", "a variable lambda needs an explicit outer start or bbox")
        probe = cfg.get("bbox", K.bbox)
        spec = _spec(cfg, probe)
        omega0 = supersolution_disk(K, spec, cfg.get("p", 2.0))
    bbox = _grow(omega0.bbox, h)
    spec = _spec(cfg, cfg.get("bbox", _grow(bbox, cfg.get("margin", 4 * h))))
    _check_lambda(cfg, spec.lower_bound, h)
    fb = _fb_config(cfg, bbox)
    out = _out_dir(cfg)
    fld, boundary, trace = iterate_exterior(K, spec, fb, omega0)
    _write_run(out, cfg, fld, boundary, K, trace, spec, exterior=True)
    return EXIT_OK


def cmd_solve_interior(cfg: RunConfig) -> int:
    Om = cfg.convex_shape("outer")
    h = cfg.get("grid_h", DEFAULT_H)
    spec = _spec(cfg, Om.bbox)
    if not spec.is_constant:
        raise cfg.fail("lambda", "the interior problem needs a constant lambda")
    _check_lambda(cfg, spec.lower_bound, h)
    fb = _fb_config(cfg, Om.bbox)
    out = _out_dir(cfg)
    fld, K, trace = iterate_interior(Om, spec, fb)
    _write_run(out, cfg, fld, K, Om, trace, spec, exterior=False)
    return EXIT_OK


def cmd_lambda_max(cfg: RunConfig) -> int:
    Om = cfg.convex_shape("outer")
    l, p = cfg.require("level"), cfg.get("p", 2.0)
    fb = _fb_config(cfg, Om.bbox)
    out = _out_dir(cfg)
    res = search_lambda_max(Om, l, p, fb)
    export_csv(("lambda", "feasible"), res.probes, out / "probes.csv")
    _summary(
        [
            ("lambda_max", res.estimate),
            ("bracket_lower", res.lower),
            ("bracket_upper", res.upper),
            ("inscribed_bound", res.inscribed_bound),
            ("enclosing_bound", res.enclosing_bound),
            ("h", fb.h),
        ],
        out / "summary.csv",
    )
    return EXIT_OK


def cmd_converge_bernoulli(cfg: RunConfig) -> int:
    K = cfg.convex_shape("inner")
    omega = cfg.require("omega")
    lam0, lo, _ = cfg.distance(K.bbox)
    if isinstance(lam0, AffineLambda):
        raise cfg.fail("lambda", "the Bernoulli sequence needs a constant starting lambda")
    if not omega * lam0 < 1:
        raise cfg.fail("omega", f"omega * lambda = {omega * lam0:.4g} must stay below 1")
    steps = cfg.get("steps", 3)
    if steps < 3:
        raise cfg.fail("steps", "at least 3 steps are needed")
    h = cfg.get("grid_h", DEFAULT_H)
    _check_lambda(cfg, lo, h)
    start = supersolution_disk(K, DistanceSpec.bernoulli(omega, lam0), cfg.get("p", 2.0))
    fb = _fb_config(cfg, _grow(start.bbox, h))
    out = _out_dir(cfg)
    report = run_converge_bernoulli(K, omega, lam0, steps, fb)
    cols, rows = report.table()
    export_csv(cols, rows, out / "bernoulli.csv")
    polylines_csv(report.boundaries, out / "boundaries.csv")
    layers = [Layer("inner", K)] + [
        Layer("free-boundary", b, "free boundaries (decreasing lambda)") for b in report.boundaries
    ]
    export_svg(layers, out / "overlay.svg", fb.grid.bbox)
    if _figures(cfg):
        lams = np.array([r.lam for r in report.rows])
        figures.plot_series(lams, {"near-boundary |grad u|": np.array([r.grad_stat for r in report.rows])},
                            out / "bernoulli.png", "lambda", "gradient statistic", hline=omega)
        figures.plot_shapes([("inner", K, "K")] + [(f"n{k}", b, f"lambda = {r.lam:g}")
                                                   for k, (b, r) in enumerate(zip(report.boundaries, report.rows))],
                            out / "boundaries.png")
    last = report.rows[-1]
    _summary(
        [
            ("steps", len(report.rows)),
            ("final_lambda", last.lam),
            ("final_grad_stat", last.grad_stat),
            ("grad_gap", abs(last.grad_stat - omega)),
            ("nested_within_h", int(report.is_nested(h))),
        ],
        out / "summary.csv",
    )
    return EXIT_OK


def _joining(cfg: RunConfig) -> JoiningFunction:
    kind = cfg.get("joining", "identity")
    if kind == "identity":
        return JoiningFunction.identity()
    if kind == "classical":
        return JoiningFunction.classical(cfg.get("joining_a", 1.0), cfg.get("joining_alpha", 1.0))
    raise cfg.fail("joining", f"unknown joining function {kind!r} (identity or classical)")


def cmd_two_phase(cfg: RunConfig) -> int:
    K1, K3 = cfg.convex_shape("inner"), cfg.convex_shape("outer")
    l, p = cfg.require("level"), cfg.get("p", 2.0)
    g = _joining(cfg)
    fb = _fb_config(cfg, K3.bbox)
    out = _out_dir(cfg)
    res = two_phase_iterate(K1, K3, g, l, p, fb, gain=cfg.get("gain", 0.5))
    u1, u2 = res.fields
    c1, c2 = extract_level_curve(u1, l), extract_level_curve(u2, -l)
    res.trace.write_csv(out / "trace.csv")
    write_polygon(res.K2, out / "interface.txt", "two-phase interface")
    u1.write_csv(out / "u1.csv")
    u2.write_csv(out / "u2.csv")
    polylines_csv([c1, c2], out / "level.csv")
    export_svg(
        [
            Layer("inner", K1, "K1"),
            Layer("level", c1, f"u1 = {l:g}"),
            Layer("level", c2),
            Layer("free-boundary", res.K2, "interface K2"),
            Layer("outer", K3, "K3"),
        ],
        out / "overlay.svg",
        fb.grid.bbox,
    )
    if _figures(cfg):
        figures.plot_trace({"max |G|": res.trace.column("condition_residual"),
                            "Hausdorff step": res.trace.column("hausdorff_step")}, out / "trace.png")
        figures.plot_shapes([("inner", K1, "K1"), ("level", c1, f"u1 = {l:g}"), ("free-boundary", res.K2, "K2"),
                             ("outer", K3, "K3")], out / "two_phase.png")
    _summary(
        [
            ("iterations", len(res.trace)),
            ("joining_residual", res.joining_residual),
            ("separation_ratio", res.separation),
            ("equivalent_radius", math.sqrt(res.K2.area / math.pi)),
        ],
        out / "summary.csv",
    )
    return EXIT_OK


def cmd_brunn_minkowski(cfg: RunConfig) -> int:
    D0, D1 = cfg.convex_shape("domain0"), cfg.convex_shape("domain1")
    l, p = cfg.require("level"), cfg.get("p", 2.0)
    ts = cfg.get("t_grid", (0.25, 0.5, 0.75))
    if any(not 0 <= t <= 1 for t in ts):
        raise cfg.fail("t_grid", "t values must lie in [0, 1]")
    fraction = cfg.get("fraction", 0.8)
    if fraction > 1:
        raise cfg.fail("fraction", "fraction must not exceed 1")
    fb = _fb_config(cfg, _union(D0.bbox, D1.bbox))
    out = _out_dir(cfg)
    report = run_brunn_minkowski(D0, D1, l, p, ts, fb, fraction)
    cols, rows = report.table()
    export_csv(cols, rows, out / "brunn_minkowski.csv")
    layers = []
    for Om, K in zip(report.domains, report.inner_sets):
        layers += [Layer("outer", Om, "combined domains"), Layer("inner", K, "inner solutions")]
    export_svg(layers, out / "overlay.svg", fb.grid.bbox)
    if _figures(cfg):
        t = np.array([r.t for r in report.rows])
        figures.plot_series(t, {"estimated constant": np.array([r.lambda_max for r in report.rows]),
                                "linear interpolation": np.array([r.interpolated for r in report.rows])},
                            out / "brunn_minkowski.png", "t", "lambda_max")
    _summary(
        [
            ("min_deficit", min(r.deficit for r in report.rows)),
            ("min_inclusion_margin", min(r.inclusion_margin for r in report.rows)),
            ("h", fb.h),
        ],
        out / "summary.csv",
    )
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "radial": cmd_radial,
    "solve-exterior": cmd_solve_exterior,
    "solve-interior": cmd_solve_interior,
    "lambda-max": cmd_lambda_max,
    "converge-bernoulli": cmd_converge_bernoulli,
    "two-phase": cmd_two_phase,
    "brunn-minkowski": cmd_brunn_minkowski,
}

FLAG_KEYS = {
    "grid_h": "grid_h",
    "p": "p",
    "level": "level",
    "lam": "lambda",
    "omega": "omega",
    "out": "out",
    "bernoulli_omega": "bernoulli_omega",
    "inner": "inner",
    "outer": "outer",
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="key = value configuration file")
    shared.add_argument("--grid-h", dest="grid_h", help="grid spacing h")
    shared.add_argument("--p", help="p-Laplacian exponent (> 1)")
    shared.add_argument("--level", help="level l in (0, 1)")
    shared.add_argument("--lambda", dest="lam", metavar="LAMBDA", help="distance: a number or 'a+b*x+c*y'")
    shared.add_argument("--omega", help="gradient value for the Bernoulli sequence")
    shared.add_argument("--out", metavar="DIR", help="output directory")
    shared.add_argument("--no-convexify", dest="convexify", action="store_false", default=None,
                        help="keep the raw updated set instead of its convex hull")
    shared.add_argument("--bernoulli-omega", dest="bernoulli_omega", help="set level = omega * lambda")
    shared.add_argument("--inner", help="inner body: polygon file or builtin shape")
    shared.add_argument("--outer", help="outer body: polygon file or builtin shape")
    shared.add_argument("--set", dest="extra", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")
    shared.add_argument("--no-figures", dest="figures", action="store_false", default=None,
                        help="skip the PNG figures")
    shared.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="dbernoulli", description="Discrete Bernoulli free boundary solver")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "radial": "closed forms for concentric disks",
        "solve-exterior": "exterior free boundary around a fixed inner body",
        "solve-interior": "maximal inner body inside a fixed domain",
        "lambda-max": "estimate the largest admissible distance",
        "converge-bernoulli": "sequence approaching the classical gradient condition",
        "two-phase": "interface between two capacitary phases",
        "brunn-minkowski": "concavity check along Minkowski combinations",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[shared], help=text, description=text)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    over: dict[str, str] = {}
    for attr, key in FLAG_KEYS.items():
        v = getattr(args, attr)
        if v is not None:
            over[key] = v
    if args.convexify is False:
        over["convexify"] = "false"
    if args.figures is False:
        over["figures"] = "false"
    for item in args.extra:
        key, sep, value = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in KEYS:
            raise ConfigError(f"bad --set item {item!r}", key=key or None)
        over[key] = value.strip()
    return over


def _exit_code(exc: BernoulliError) -> int:
    if isinstance(exc, (LambdaTooLarge, EmptyAnnulus)):
        return EXIT_INFEASIBLE
    if isinstance(exc, (NonConvergence, LevelNotPresent)):
        return EXIT_NONCONVERGENCE
    # ConfigError, GridTooCoarse, DegenerateGeometry, OutOfRange: bad input
    return EXIT_CONFIG


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        return COMMANDS[args.command](cfg)
    except BernoulliError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)


def run_config(path, command: str, overrides: Sequence[str] = ()) -> int:
    """Run ``command`` with the configuration file at ``path``; returns the exit status."""
    return main([command, "--config", str(path), *overrides])


if __name__ == "__main__":
    sys.exit(main())
