"""Command-line front end.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on input or
validation errors.
"""
from __future__ import annotations

import argparse
import contextlib
import os
import sys

from .cotangent import (
    build_affine_symplectic_connection,
    canonical_symplectic_form,
    cotangent_chart,
    lift_connection,
    lift_variant_compatibility,
)
from .expr import ExprError, serialize
from .geometry import ConnectionCoeffs, GeometryError, sample_points, sampling_seed
from .presymplectic import (
    PresymplecticError,
    PresymplecticStructure,
    curvature_condition_check,
    kernel_torsion_residual,
    presymplectic_report,
    projectability_check,
)
from .reduction import ReductionError, ScalingTranslationScene, reduction_report, scene_moment_map
from .report import CheckReport, CheckResult
from .scene import (
    SceneError,
    connection_to_dict,
    load_scene,
    parse_gamma,
    scene_document,
    scene_from_dict,
    write_document,
)
from .symplectic import CLOSED_TOL, DET_TOL, FormError, compatibility_residual, torsion_residual

INPUT_ERRORS = (SceneError, ExprError, GeometryError, FormError, ReductionError, PresymplecticError)


def _tol(args, scene, default=None):
    """--tol wins, then an explicit scene tolerance, then the per-check default."""
    if args.tol is not None:
        return args.tol
    if scene.explicit_tolerances:
        return scene.tolerances["residual"]
    return default


def _point(chart, pts, k):
    return chart.point_dict(pts[k])


def _form_checks(report, w, pts, rank_tol):
    w.validate(pts, rank_tol=rank_tol)
    if w.kind is None:
        return
    val, k = w.closedness_residual(pts)
    report.add(CheckResult("d omega", val, CLOSED_TOL, witness=_point(w.chart, pts, k)))
    if w.kind == "symplectic":
        det, k = w.min_abs_det(pts)
        report.add(CheckResult("det omega", det, DET_TOL, bound="lower", witness=_point(w.chart, pts, k)))
    else:
        report.add(CheckResult("rank", 0.0, 0.0, detail=f"constant rank {w.rank} at every sample point"))


def run_check(scene, tol):
    chart = scene.chart
    report = CheckReport()
    if chart is None:
        raise SceneError("check needs a 'chart'")
    pts = sample_points(chart)
    conn, w = scene.connection, scene.two_form
    if w is not None:
        _form_checks(report, w, pts, scene.tolerances["rank"])
    if conn is not None:
        if conn.symmetric:
            val, k = conn.symmetry_residual(pts)
            report.add(CheckResult("symmetric", val, tol, witness=_point(chart, pts, k)))
        if w is not None:
            val, k = compatibility_residual(conn, w, pts)
            report.add(CheckResult("nabla omega", val, tol, witness=_point(chart, pts, k)))
        presym = w is not None and w.kind == "presymplectic"
        if presym:
            ps = _structure(scene)
            val, k = kernel_torsion_residual(conn, ps, pts)
            report.add(CheckResult("kernel-valued torsion", val, tol, witness=_point(chart, pts, k)))
            report.add(curvature_condition_check(conn, ps, pts, tol))
            report.extend(projectability_check(conn, ps, pts, tol))
        elif scene.torsion_free:
            val, k = torsion_residual(conn, pts)
            report.add(CheckResult("torsion", val, tol, witness=_point(chart, pts, k)))
        else:
            report.info["torsion"] = "not required (connection flagged torsion_free: false)"
    return report


def _structure(scene):
    w = scene.two_form
    p = scene.presymplectic["p"] if scene.presymplectic else None
    if p is None:
        rank = w.rank if w.rank is not None else scene.chart.dim
        p = scene.chart.dim - rank
    if (scene.chart.dim - p) % 2 or p < 0:
        raise PresymplecticError(f"chart dimension {scene.chart.dim} minus p = {p} must be even")
    n = (scene.chart.dim - p) // 2
    if w.rank is not None and w.rank != 2 * n:
        raise PresymplecticError(f"two_form.rank = {w.rank} disagrees with 2n = {2 * n}")
    return PresymplecticStructure(scene.chart, w, n, p)


# ---------------------------------------------------------------------------
# commands

def cmd_check(args, scene):
    report = run_check(scene, _tol(args, scene, scene.tolerances["residual"]))
    return report, None, None


def cmd_lift(args, scene):
    if scene.chart is None:
        raise SceneError("lift needs the base 'chart'")
    if scene.base_connection is None:
        raise SceneError("lift needs 'cotangent.base_connection'")
    base = parse_gamma(scene.base_connection, scene.chart, "cotangent.base_connection")
    cc = cotangent_chart(scene.chart, scene.fiber_domain)
    tol = _tol(args, scene, scene.tolerances["residual"])
    if args.symplectify:
        conn = build_affine_symplectic_connection(base, cc)
        torsion_free = True
    else:
        conn = lift_connection(base, cc)
        tres, _ = torsion_residual(conn)
        torsion_free = tres <= tol
    w = canonical_symplectic_form(cc)
    doc = scene_document(cc.total, conn, w, torsion_free=torsion_free, seed=scene.seed)
    out = scene_from_dict(doc)
    report = run_check(out, tol)
    report.info["symplectified"] = bool(args.symplectify)
    variants = lift_variant_compatibility(base, cc)
    others = [v for v, (_, ok, same) in variants.items() if v != "default" and ok]
    report.info["mixed-term variants also compatible"] = (
        ", ".join(f"{v} (identical to default)" if variants[v][2] else v for v in others) or "none"
    )
    return report, doc, None


def _reduction_connection(scene, st):
    if scene.connection is not None:
        if scene.chart.coords != st.chart.coords:
            raise SceneError(
                f"reduction scenes use coordinates {list(st.chart.coords)}, got {list(scene.chart.coords)}"
            )
        return ConnectionCoeffs(st.chart, scene.connection.gamma, symmetric=scene.connection.symmetric)
    if scene.base_connection is not None:
        base = parse_gamma(scene.base_connection, st.cotangent.base, "cotangent.base_connection")
        return build_affine_symplectic_connection(base, st.cotangent)
    return ConnectionCoeffs.flat(st.chart)


def cmd_reduce(args, scene):
    if scene.reduction is None:
        raise SceneError("reduce needs a 'reduction' block with n, h and xi")
    r = scene.reduction
    domain = scene.chart.domain if scene.chart is not None else (-2.0, 2.0)
    st = ScalingTranslationScene(r["n"], r["h"], None if r["xi"] is None else tuple(r["xi"]), domain)
    conn = _reduction_connection(scene, st)
    report, reduced, w_red = reduction_report(conn, st, tol=_tol(args, scene))
    report.info["moment_map"] = [serialize(j) for j in scene_moment_map(st)]
    doc = None
    if reduced is not None:
        doc = scene_document(reduced.chart, reduced, w_red, torsion_free=True, seed=scene.seed)
    return report, doc, None


def cmd_presymplectic(args, scene):
    if scene.chart is None or scene.two_form is None:
        raise SceneError("presymplectic needs 'chart' and 'two_form'")
    ps = _structure(scene)
    K = scene.presymplectic["K"] if scene.presymplectic else None
    report, build, quotient = presymplectic_report(ps, K=K, reduce=args.reduce, tol=_tol(args, scene))
    extra = {"presymplectic": {"p": ps.p}}
    if K is not None:
        extra["presymplectic"]["K"] = connection_to_dict(K)
    doc = scene_document(
        ps.chart, build.connection, ps.omega, torsion_free=ps.p == 0, seed=scene.seed, extra=extra
    )
    qdoc = None
    if quotient is not None:
        qconn, qw = quotient
        qdoc = scene_document(qconn.chart, qconn, qw, torsion_free=True, seed=scene.seed)
    elif args.reduce:
        report.info["quotient"] = "not emitted: checks failed"
    return report, doc, qdoc


COMMANDS = {
    "check": cmd_check,
    "lift": cmd_lift,
    "reduce": cmd_reduce,
    "presymplectic": cmd_presymplectic,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="symred",
        description="Construct and verify connections compatible with (pre)symplectic forms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "check": "validate a scene and run every applicable residual check",
        "lift": "lift a base connection to the cotangent bundle",
        "reduce": "reduce a connection for the scaling-translation family",
        "presymplectic": "build a presymplectic connection on an adapted chart",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("scene", help="scene file (JSON)")
        p.add_argument("-o", "--output", help="output file: the report for check, the produced scene otherwise")
        p.add_argument("--format", choices=("text", "json"), default="text", help="report format on stdout")
        p.add_argument("--seed", type=int, help="sampling seed (overrides the scene)")
        p.add_argument("--tol", type=float, help="tolerance for connection residuals (form closedness and det keep their own)")
        if name == "lift":
            p.add_argument("--symplectify", action="store_true", help="apply symmetric part and symplectic correction")
        if name == "presymplectic":
            p.add_argument("--reduce", action="store_true", help="also emit the reduced (leaf-space) scene")
            p.add_argument("--quotient-out", help="quotient scene path (default: OUTPUT with .quotient.json)")
    return parser


def _quotient_path(args):
    if args.quotient_out:
        return args.quotient_out
    if args.output:
        root, _ = os.path.splitext(args.output)
        return root + ".quotient.json"
    return None


def main(argv=None, stdout=None, stderr=None):
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    args = build_parser().parse_args(argv)
    if args.tol is not None and not args.tol > 0:
        print("error: --tol must be positive", file=stderr)
        return 2
    try:
        scene = load_scene(args.scene)
        seed = args.seed if args.seed is not None else scene.seed
        ctx = sampling_seed(seed) if seed is not None else contextlib.nullcontext()
        with ctx:
            report, doc, qdoc = COMMANDS[args.command](args, scene)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    report.info["command"] = args.command
    if seed is not None:
        report.info["seed"] = seed
    try:
        if args.command == "check":
            if args.output:
                write_document(report.to_dict(), args.output)
        else:
            if args.output and doc is not None:
                write_document(doc, args.output)
            elif doc is not None and args.format == "json":
                report.info["scene"] = doc
            qpath = _quotient_path(args) if args.command == "presymplectic" else None
            if qdoc is not None:
                if qpath:
                    write_document(qdoc, qpath)
                    report.info["quotient_file"] = qpath
                elif args.format == "json":
                    report.info["quotient"] = qdoc
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=stderr)
        return 2
    stdout.write(report.to_json() if args.format == "json" else report.to_text())
    return 0 if report.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
