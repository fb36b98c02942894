"""Acceptance criteria 1-9.  Each test records one pass/fail line (printed in
the terminal summary) before asserting."""
import functools
import json
import math
import time

import numpy as np

from helpers import conformal_factor, quadratic_path_components, random_connection_entries, random_poly
from symred.cli import main
from symred.cotangent import (
    canonical_symplectic_form,
    hamiltonian_residual,
    lift_action,
    lift_connection,
    moment_map_lift,
    scaling_translation_generators,
    standard_cotangent_chart,
)
from symred.expr import ONE, ZERO, Var, parse, simplify_basic, substitute
from symred.geometry import (
    Chart,
    ConnectionCoeffs,
    PathSpec,
    VectorFieldExpr,
    change_coordinates,
    covariant_derivative_vector,
    covariant_derivative_via_transport,
    parallel_transport,
    sample_points,
    symmetric_part,
)
from symred.presymplectic import (
    PresymplecticStructure,
    build_presymplectic_connection,
    curvature_condition_check,
    cyclic_identity_residual,
    kernel_torsion_residual,
    projectability_check,
    reduce_presymplectic,
)
from symred.reduction import (
    AffineSubspace,
    ScalingTranslationScene,
    scene_level_set,
    scene_moment_map,
    self_parallel_check,
    transport_tangency_check,
)
from symred.scene import load_scene
from symred.symplectic import (
    TwoFormField,
    compatibility_residual,
    skew_compatibility_residual,
    symplectize,
    torsion_residual,
)


def _fmt(x):
    return f"{x:.2e}"


# ---------------------------------------------------------------------------
# 1

def test_criterion_1_worked_reduction_example(tmp_path, criterion, capsys):
    start = time.perf_counter()
    src = tmp_path / "scene.json"
    src.write_text(json.dumps({"reduction": {"n": 3, "h": 2, "xi": [0, 1, 1]}}))
    out = tmp_path / "quotient.json"
    code = main(["reduce", str(src), "-o", str(out), "--format", "json"])
    report = json.loads(capsys.readouterr().out)

    sc = ScalingTranslationScene(3, 2, (0, 1, 1))
    expected_J = [parse("x1*y1 + x2*y2"), parse("y1"), parse("y2")]
    J = scene_moment_map(sc)
    a_ok = [simplify_basic(j) for j in J] == [simplify_basic(e) for e in expected_J]
    a_ok = a_ok and report["info"]["moment_map"] == ["x1*y1 + x2*y2", "y1", "y2"]

    C = scene_level_set(sc)
    N = np.zeros((3, 6))
    N[0, 3] = N[1, 4] = 1.0
    N[2, 0] = N[2, 1] = 1.0
    b_ok = (
        np.array_equal(C.constraint_matrix, N)
        and np.array_equal(C.constraint_values, [1.0, 1.0, 0.0])
        and C.dim == 3 == 2 * 3 - 2 - 1
        and report["info"]["level_set"] == ["y1 = 1", "y2 = 1", "x1 + x2 = 0"]
    )

    q = load_scene(out)
    c_ok = (
        q.chart.coords == ("x3", "y3")
        and q.two_form.omega[0, 1] is ONE
        and q.two_form.kind == "symplectic"
    )
    gmax = float(np.abs(q.connection.at(sample_points(q.chart))).max())
    d_ok = gmax <= 1e-12 and all(e is ZERO for e in q.connection.gamma.ravel())
    elapsed = time.perf_counter() - start
    ok = code == 0 and a_ok and b_ok and c_ok and d_ok and elapsed < 5.0
    criterion(
        1, ok,
        f"J exact={a_ok}, level set exact={b_ok}, quotient exact={c_ok}, max|Gamma'|={_fmt(gmax)}, "
        f"exit={code}, {elapsed:.2f}s",
    )
    assert ok


# ---------------------------------------------------------------------------
# 2

def test_criterion_2_flat_lift(criterion):
    start = time.perf_counter()
    worst, all_zero = 0.0, True
    for n in range(1, 5):
        cc = standard_cotangent_chart(n)
        lifted = lift_connection(ConnectionCoeffs.flat(cc.base), cc)
        all_zero &= all(e is ZERO for e in lifted.gamma.ravel())
        worst = max(worst, compatibility_residual(lifted, canonical_symplectic_form(cc))[0])
    elapsed = time.perf_counter() - start
    ok = all_zero and worst == 0.0 and elapsed < 5.0
    criterion(2, ok, f"all entries exactly zero={all_zero}, nabla omega={_fmt(worst)}, {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 3

def test_criterion_3_lift_compatibility_suite(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = {"lift nabla omega": 0.0, "torsion": 0.0, "nabla omega": 0.0}
    for _ in range(10):
        cc = standard_cotangent_chart(2, -1.0, 1.0)
        base = ConnectionCoeffs.from_entries(
            cc.base, random_connection_entries(rng, cc.base.coords), symmetric=True
        )
        w = canonical_symplectic_form(cc)
        pts = sample_points(cc.total)
        lifted = lift_connection(base, cc)
        worst["lift nabla omega"] = max(worst["lift nabla omega"], compatibility_residual(lifted, w, pts)[0])
        out = symplectize(symmetric_part(lifted), w, pts)
        worst["torsion"] = max(worst["torsion"], torsion_residual(out, pts)[0])
        worst["nabla omega"] = max(worst["nabla omega"], compatibility_residual(out, w, pts)[0])
    elapsed = time.perf_counter() - start
    ok = all(v <= 1e-8 for v in worst.values()) and elapsed < 60.0
    criterion(3, ok, ", ".join(f"{k}={_fmt(v)}" for k, v in worst.items()) + f", {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 4

def test_criterion_4_transport_oracle(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    chart = Chart.box(["x1", "x2"])
    t = Var("t")
    worst = 0.0
    for _ in range(20):
        conn = ConnectionCoeffs.from_entries(
            chart, random_connection_entries(rng, chart.coords, symmetric=False)
        )
        Y = VectorFieldExpr(chart, tuple(random_poly(rng, chart.coords) for _ in range(2)))
        p0 = rng.uniform(-0.5, 0.5, 2)
        a = rng.uniform(-1.0, 1.0, 2)
        b = rng.uniform(-0.5, 0.5, 2)
        comps = quadratic_path_components(p0, a, b)
        path = PathSpec(chart, comps, 0.0, 0.5)
        oracle = covariant_derivative_via_transport(conn, Y, path, 1e-4, steps=1000)
        X = VectorFieldExpr.constant(chart, a)
        exact = covariant_derivative_vector(conn, X, Y).at(p0[None, :])[0]
        rel = np.linalg.norm(oracle - exact) / max(1.0, np.linalg.norm(exact))
        worst = max(worst, rel)
    line = PathSpec(Chart.box(["x1"], -1.0, 2.0), [t], 0.0, 1.0)
    one = ConnectionCoeffs.from_entries(line.chart, {(0, 0, 0): ONE})
    closed = abs(parallel_transport(one, line, [1.0], steps=1000)[0] - math.exp(-1.0))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and closed <= 1e-8 and elapsed < 30.0
    criterion(4, ok, f"max relative gap={_fmt(worst)} (20 triples), |v(1)-1/e|={_fmt(closed)}, {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 5

def test_criterion_5_self_parallel_discrimination(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    sc = ScalingTranslationScene(3, 2)
    C = scene_level_set(sc)
    flat = ConnectionCoeffs.flat(sc.chart)
    sp_flat = self_parallel_check(flat, C)
    T = C.tangent_basis()
    p0 = C.sample()[0]
    a, b = rng.uniform(-1, 1, len(T)) @ T, rng.uniform(-0.5, 0.5, len(T)) @ T
    comps = quadratic_path_components(p0, a, b)
    path = PathSpec(sc.chart, comps)
    tt_flat = transport_tangency_check(flat, C, path, rng.uniform(-1, 1, len(T)) @ T)

    ch = Chart.box(["x1", "x2", "x3"])
    bad = ConnectionCoeffs.from_entries(ch, {(2, 0, 0): ONE})
    plane = AffineSubspace(ch, [[0.0, 0.0, 1.0]], [0.0])
    sp_bad = self_parallel_check(bad, plane)
    tt_bad = transport_tangency_check(bad, plane, PathSpec.line(ch, [-0.5, 0.2, 0.0], [1.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
    elapsed = time.perf_counter() - start
    ok = (
        sp_flat.passed and tt_flat.passed
        and not sp_bad.passed and not tt_bad.passed
        and sp_bad.witness is not None and tt_bad.witness is not None
        and elapsed < 10.0
    )
    criterion(
        5, ok,
        f"flat: self-parallel={_fmt(sp_flat.value)}, tangency={_fmt(tt_flat.value)}; "
        f"planted: self-parallel={_fmt(sp_bad.value)} at {sp_bad.witness}, "
        f"tangency={_fmt(tt_bad.value)} at {tt_bad.witness}; {elapsed:.2f}s",
    )
    assert ok


# ---------------------------------------------------------------------------
# 6 and 7

PRESYM_CHART = Chart.box(["u1", "u2", "z"])


@functools.lru_cache(maxsize=None)
def presymplectic_builds():
    rng = np.random.default_rng(6)
    out = []
    for _ in range(10):
        f = conformal_factor(rng, ["u1", "u2"])
        w = TwoFormField.from_upper(PRESYM_CHART, {(0, 1): f}, kind="presymplectic", rank=2)
        ps = PresymplecticStructure(PRESYM_CHART, w, 1, 1)
        out.append((f, ps, build_presymplectic_connection(ps)))
    return tuple(out)


def test_criterion_6_presymplectic_suite(criterion):
    start = time.perf_counter()
    pts = sample_points(PRESYM_CHART)
    worst = dict.fromkeys(
        ["f range", "nabla omega", "kernel torsion", "A skew", "cyclic", "projectability",
         "reduced torsion", "reduced nabla omega"], 0.0)
    fvals = []
    for f, ps, build in presymplectic_builds():
        conn = build.connection
        fvals.append(ps.omega.at(pts)[:, 0, 1])
        worst["nabla omega"] = max(worst["nabla omega"], compatibility_residual(conn, ps.omega, pts)[0])
        worst["kernel torsion"] = max(worst["kernel torsion"], kernel_torsion_residual(conn, ps, pts)[0])
        worst["A skew"] = max(worst["A skew"], skew_compatibility_residual(build.A, ps.omega, pts, ps.transverse)[0])
        worst["cyclic"] = max(worst["cyclic"], cyclic_identity_residual(build.D, ps, pts)[0])
        proj = projectability_check(conn, ps, pts)
        worst["projectability"] = max([worst["projectability"]] + [c.value for c in proj.checks])
        qconn, qw = reduce_presymplectic(conn, ps)
        qpts = sample_points(qconn.chart)
        worst["reduced torsion"] = max(worst["reduced torsion"], torsion_residual(qconn, qpts)[0])
        worst["reduced nabla omega"] = max(worst["reduced nabla omega"], compatibility_residual(qconn, qw, qpts)[0])
    fvals = np.concatenate(fvals)
    in_range = bool(fvals.min() >= 0.5 and fvals.max() <= 2.0)
    worst.pop("f range")
    limits = {"nabla omega": 1e-8, "kernel torsion": 1e-8, "A skew": 1e-9, "cyclic": 1e-9,
              "projectability": 1e-8, "reduced torsion": 1e-9, "reduced nabla omega": 1e-9}
    elapsed = time.perf_counter() - start
    ok = in_range and all(worst[k] <= limits[k] for k in limits) and elapsed < 60.0
    criterion(
        6, ok,
        ", ".join(f"{k}={_fmt(v)}" for k, v in worst.items())
        + f", f in [{fvals.min():.3f}, {fvals.max():.3f}], {elapsed:.2f}s",
    )
    assert ok


def test_criterion_7_curvature_condition(criterion):
    start = time.perf_counter()
    results = [curvature_condition_check(b.connection, ps) for _, ps, b in presymplectic_builds()]
    w = TwoFormField.from_upper(PRESYM_CHART, {(0, 1): ONE}, kind="presymplectic", rank=2)
    ps = PresymplecticStructure(PRESYM_CHART, w, 1, 1)
    # nabla_{d/du1} d/dz = z d/du1
    planted = ConnectionCoeffs.from_entries(PRESYM_CHART, {(0, 2, 0): parse("z")})
    bad = curvature_condition_check(planted, ps)
    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in results) and not bad.passed and bad.witness is not None and elapsed < 10.0
    criterion(
        7, ok,
        f"builds: max={_fmt(max(r.value for r in results))} ({sum(r.passed for r in results)}/10 pass); "
        f"planted: {_fmt(bad.value)} at {bad.witness} [{bad.detail}], {elapsed:.2f}s",
    )
    assert ok


# ---------------------------------------------------------------------------
# 8

def test_criterion_8_coordinate_covariance(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    old = Chart.box(["x1", "x2"])
    flat = ConnectionCoeffs.flat(old)
    new_chart = Chart(("u", "v"), ((-1.0, 1.0), (-1.0, 2.0)))
    forward = [parse("x1"), parse("x2 + x1^2")]
    inverse = [parse("u"), parse("v - u^2")]
    moved = change_coordinates(flat, forward, inverse, new_chart)
    nonzero = not moved.is_zero()
    worst = 0.0
    for _ in range(5):
        p0 = rng.uniform(-0.4, 0.4, 2)
        a = rng.uniform(-0.4, 0.4, 2)
        b = rng.uniform(-0.2, 0.2, 2)
        xs = quadratic_path_components(p0, a, b)
        path_x = PathSpec(old, xs)
        path_u = PathSpec(new_chart, [substitute(f, dict(zip(old.coords, xs))) for f in forward])
        v0 = rng.uniform(-1, 1, 2)

        def jac(x):
            return np.array([[1.0, 0.0], [2.0 * x[0], 1.0]])

        x0, x1 = path_x.position([0.0, 1.0])
        vx = parallel_transport(flat, path_x, v0)
        vu = parallel_transport(moved, path_u, jac(x0) @ v0)
        worst = max(worst, float(np.abs(vu - jac(x1) @ vx).max()))
    elapsed = time.perf_counter() - start
    ok = nonzero and worst <= 1e-6 and elapsed < 10.0
    criterion(8, ok, f"changed Gamma nonzero={nonzero}, max gap after Jacobian={_fmt(worst)} (5 paths), {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 9

def test_criterion_9_hamiltonian_generators(criterion):
    start = time.perf_counter()
    worst, count = 0.0, 0
    for n in range(1, 5):
        cc = standard_cotangent_chart(n)
        for h in range(0, n + 1):
            action = lift_action(scaling_translation_generators(cc, h), cc)
            J = moment_map_lift(action, cc)
            res, _ = hamiltonian_residual(action, J, cc)
            worst = max(worst, res)
            count += len(J)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10.0
    criterion(9, ok, f"max |i(A_M)omega - dJ_A|={_fmt(worst)} over {count} generators (n<=4, h<=n), {elapsed:.2f}s")
    assert ok
