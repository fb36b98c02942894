"""Marsden-Weinstein reduction of connections for the scaling-translation family.

The family acts on R^n by x^a -> s x^a + t^a (a <= h), x^u fixed (u > h), and
is lifted to T*R^n = R^{2n} with moment map J = (sum_a x^a y_a, y_1..y_h).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cotangent import cotangent_chart, family_invariance_residual, standard_cotangent_chart
from .expr import ONE, Var, as_expr, differentiate, evaluate_many, expr_array, mul, substitute, sum_exprs
from .geometry import (
    Chart,
    ConnectionCoeffs,
    GeometryError,
    bilinear_at,
    current_seed,
    eval_on,
    max_abs,
    sample_points,
    transport_trajectory,
)
from .report import CheckReport, CheckResult
from .symplectic import TwoFormField, compatibility_residual, torsion_residual


class ReductionError(ValueError):
    pass


class CriticalValueError(ReductionError):
    pass


class DegenerateQuotientError(ReductionError):
    pass


class PathNotInSubspaceError(ReductionError):
    pass


def orthonormal_basis(vectors, count=None, tol=1e-10):
    """Gram-Schmidt in the given order, dropping vectors already in the span."""
    out = []
    for v in np.atleast_2d(np.asarray(vectors, dtype=float)):
        w = v.copy()
        for _ in range(2):  # re-orthogonalize once for stability
            for q in out:
                w = w - (q @ w) * q
        nrm = np.linalg.norm(w)
        if nrm > tol:
            out.append(w / nrm)
        if count is not None and len(out) == count:
            break
    d = np.asarray(vectors).shape[-1]
    return np.array(out).reshape(len(out), d)


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    """{p : N p = c} inside the ambient chart."""

    ambient: Chart
    constraint_matrix: np.ndarray = field(repr=False)
    constraint_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = self.ambient.dim
        N = np.asarray(self.constraint_matrix, dtype=float).reshape(-1, d)
        c = np.asarray(self.constraint_values, dtype=float).reshape(-1)
        if N.shape[0] != c.shape[0]:
            raise ReductionError("one constraint value per constraint row is required")
        if N.shape[0] and np.linalg.svd(N, compute_uv=False).min() <= 1e-10:
            raise ReductionError("constraint matrix must have full row rank")
        N.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "constraint_matrix", N)
        object.__setattr__(self, "constraint_values", c)

    @property
    def codim(self):
        return self.constraint_matrix.shape[0]

    @property
    def dim(self):
        return self.ambient.dim - self.codim

    def tangent_basis(self):
        """Orthonormal basis of the null space of N, pivoting in coordinate order."""
        d = self.ambient.dim
        N = self.constraint_matrix
        if self.codim == 0:
            return np.eye(d)
        P = np.eye(d) - N.T @ np.linalg.solve(N @ N.T, N)
        return orthonormal_basis(P, count=self.dim)

    def project(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.codim == 0:
            return pts.copy()
        N, c = self.constraint_matrix, self.constraint_values
        corr = np.linalg.solve(N @ N.T, (pts @ N.T - c).T).T
        return pts - corr @ N

    def sample(self, seed=None):
        pts = sample_points(self.ambient, seed=seed)
        return self.project(pts)

    def residual(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.codim == 0:
            return np.zeros(len(pts))
        return np.abs(pts @ self.constraint_matrix.T - self.constraint_values).max(axis=1)

    def equations(self):
        """Constraints as (expression, value) pairs, e.g. (x1 + x2, 0)."""
        names = self.ambient.coords
        out = []
        for row, val in zip(self.constraint_matrix, self.constraint_values):
            terms = []
            for coef, name in zip(row, names):
                if coef == 0.0:
                    continue
                terms.append(Var(name) if coef == 1.0 else mul(as_expr(float(coef)), Var(name)))
            out.append((sum_exprs(terms), float(val)))
        return out


@dataclass(frozen=True)
class ScalingTranslationScene:
    n: int
    h: int
    xi: tuple = None
    domain: tuple = (-2.0, 2.0)

    def __post_init__(self):
        if not 1 <= self.h <= self.n:
            raise ReductionError(f"need 1 <= h <= n, got n={self.n}, h={self.h}")
        xi = (0.0,) + (1.0,) * self.h if self.xi is None else tuple(float(v) for v in self.xi)
        if len(xi) != self.h + 1:
            raise ReductionError(f"xi must have h+1 = {self.h + 1} components")
        object.__setattr__(self, "xi", xi)

    @property
    def cotangent(self):
        """Standard T*R^n chart; ``domain`` is one (lo, hi) or one pair per coordinate."""
        dom = self.domain
        if len(dom) == 2 and np.ndim(dom[0]) == 0:
            return standard_cotangent_chart(self.n, *dom)
        if len(dom) != 2 * self.n:
            raise ReductionError(f"domain needs 1 or {2 * self.n} intervals")
        base = Chart(tuple(f"x{i + 1}" for i in range(self.n)), tuple(dom[: self.n]))
        return cotangent_chart(base, dom[self.n:])

    @property
    def chart(self):
        return self.cotangent.total


@dataclass(frozen=True, eq=False)
class QuotientChart:
    chart: Chart
    ambient_indices: tuple
    projection: np.ndarray = field(repr=False)


def _xi(scene, xi):
    xi = scene.xi if xi is None else tuple(float(v) for v in xi)
    if len(xi) != scene.h + 1:
        raise ReductionError(f"xi must have h+1 = {scene.h + 1} components")
    return xi


def scene_moment_map(scene):
    """J = (sum_{a<=h} x^a y_a, y_1, ..., y_h)."""
    cc = scene.cotangent
    first = sum_exprs(mul(cc.x(a), cc.y(a)) for a in range(scene.h))
    return [first] + [cc.y(a) for a in range(scene.h)]


def moment_level_set(scene, xi=None):
    """{J = xi} as an affine subspace, without the noncriticality requirement.

    Constraints y_a = xi_a and sum_a xi_a x^a = xi_0; the last one is dropped
    when every xi_a vanishes (it then reads 0 = xi_0).
    """
    xi = _xi(scene, xi)
    n, h = scene.n, scene.h
    rows, vals = [], []
    for a in range(h):
        r = np.zeros(2 * n)
        r[n + a] = 1.0
        rows.append(r)
        vals.append(xi[a + 1])
    ya = np.array(xi[1:])
    if np.any(ya != 0.0):
        r = np.zeros(2 * n)
        r[:h] = ya
        rows.append(r)
        vals.append(xi[0])
    elif xi[0] != 0.0:
        raise ReductionError(f"level set J = {xi} is empty")
    # the x-constraint reads naturally first; keep y rows first as in the level-set equations
    return AffineSubspace(scene.chart, np.array(rows).reshape(-1, 2 * n), np.array(vals))


def scene_level_set(scene, xi=None, points=None):
    """Level set of a noncritical value, of dimension 2n - h - 1 > 0."""
    xi = _xi(scene, xi)
    if not any(v != 0.0 for v in xi[1:]):
        raise CriticalValueError(f"xi = {xi} is critical: the y-components all vanish")
    C = moment_level_set(scene, xi)
    if C.dim <= 0:
        raise DegenerateQuotientError(f"level set has dimension {C.dim} = 2n-h-1; nothing to reduce")
    check = noncritical_check(scene_moment_map(scene), xi, C, points)
    if not check.passed:
        raise CriticalValueError(f"xi = {xi} is critical: {check.line()}")
    return C


def noncritical_check(J, xi, subspace, points=None, tol=1e-8):
    """Full rank of dJ on sampled points of a subspace contained in {J = xi}."""
    chart = subspace.ambient
    J = [as_expr(j) for j in J]
    xi = np.asarray(xi, dtype=float)
    if not J:
        return CheckResult("noncritical value", np.inf, tol, bound="lower", detail="no group: vacuous")
    pts = subspace.sample() if points is None else subspace.project(points)
    vals = evaluate_many(J, chart.coords, pts)
    off = np.abs(vals - xi).max()
    if off > 1e-10:
        raise ReductionError(f"subspace is not contained in the level set (|J - xi| = {off:.3g})")
    jac = expr_array((len(J), chart.dim))
    for r, j in enumerate(J):
        for c, name in enumerate(chart.coords):
            jac[r, c] = differentiate(j, name)
    mats = eval_on(jac, chart, pts)
    svals = np.linalg.svd(mats, compute_uv=False)
    smin = svals[:, -1] if svals.shape[1] == len(J) else np.zeros(len(pts))
    k = int(np.argmin(smin))
    rank = int(np.sum(svals[k] > tol))
    return CheckResult(
        "noncritical value",
        float(smin[k]),
        tol,
        bound="lower",
        witness=chart.point_dict(pts[k]),
        detail=f"rank of dJ at witness = {rank}, need {len(J)}",
    )


def self_parallel_check(conn, C, points=None, tol=1e-9):
    """Normal part of nabla_{T_a} T_b on C for constant tangent fields T."""
    if conn.chart != C.ambient:
        raise GeometryError("connection and subspace live on different charts")
    if C.codim == 0:
        return CheckResult("self-parallel", 0.0, tol, detail="no constraints: vacuous")
    pts = C.sample() if points is None else C.project(points)
    T = C.tangent_basis()
    g = conn.at(pts)
    N = C.constraint_matrix
    worst, where, pair = 0.0, 0, (0, 0)
    for a in range(len(T)):
        for b in range(len(T)):
            normal = bilinear_at(g, T[b], T[a]) @ N.T
            val, k = max_abs(normal)
            if val > worst:
                worst, where, pair = val, k, (a, b)
    return CheckResult(
        "self-parallel",
        worst,
        tol,
        witness=C.ambient.point_dict(pts[where]),
        detail=f"worst tangent pair (a, b) = {pair}",
    )


def transport_tangency_check(conn, C, path, v0, steps=1000, tol=1e-6):
    """Transport a tangent vector along a path in C and watch its normal part."""
    ts = np.linspace(path.t0, path.t1, 100)
    off = C.residual(path.position(ts)).max()
    if off > 1e-9:
        raise PathNotInSubspaceError(f"path leaves the subspace (constraint residual {off:.3g})")
    v0 = np.asarray(v0, dtype=float)
    if C.codim and np.abs(C.constraint_matrix @ v0).max() > 1e-9:
        raise ReductionError("initial vector is not tangent to the subspace")
    times, traj = transport_trajectory(conn, path, v0, steps)
    if C.codim == 0:
        return CheckResult("transport tangency", 0.0, tol, detail="no constraints: vacuous")
    normal = np.abs(traj @ C.constraint_matrix.T).max(axis=1)
    k = int(np.argmax(normal))
    return CheckResult(
        "transport tangency",
        float(normal[k]),
        tol,
        witness=C.ambient.point_dict(path.position([times[k]])[0]),
        detail=f"t = {times[k]:.6g}",
    )


# ---------------------------------------------------------------------------
# quotient and reduced connection

def scene_quotient(scene, xi=None):
    """Quotient chart (x^u, y_u), u > h, with the reduced form sum dx^u ^ dy_u."""
    xi = _xi(scene, xi)
    n, h = scene.n, scene.h
    m = n - h
    if m <= 0:
        raise DegenerateQuotientError(f"n = h = {n}: the quotient is a point; nothing to reduce onto")
    if 2 * n - h - 1 < 2 * m:
        raise DegenerateQuotientError("level set is smaller than the quotient")
    amb = scene.chart
    idx = tuple(range(h, n)) + tuple(range(n + h, 2 * n))
    chart = Chart(tuple(amb.coords[i] for i in idx), tuple(amb.domain[i] for i in idx))
    proj = np.zeros((2 * m, 2 * n))
    for r, i in enumerate(idx):
        proj[r, i] = 1.0
    w = TwoFormField.from_upper(chart, {(u, m + u): ONE for u in range(m)}, kind="symplectic", rank=2 * m)
    return QuotientChart(chart, idx, proj), w


def orbit_directions(scene, xi=None):
    """Orthonormal basis of the isotropy orbits: x^a-translations with xi_y . t = 0."""
    xi = _xi(scene, xi)
    n, h = scene.n, scene.h
    ya = np.array(xi[1:])
    cand = []
    for a in range(h):
        v = np.zeros(2 * n)
        v[a] = 1.0
        cand.append(v)
    if not cand:
        return np.zeros((0, 2 * n))
    normal = np.zeros(2 * n)
    normal[:h] = ya
    normal /= np.linalg.norm(normal)
    base = orthonormal_basis(np.vstack([normal] + cand))
    return base[1:h]


def _lift_map(scene, xi):
    """Point of C over a quotient point: x^a = xi_0 xi_a / |xi_y|^2, y_a = xi_a."""
    n, h = scene.n, scene.h
    ya = np.array(xi[1:])
    x0 = xi[0] * ya / (ya @ ya)
    cc = scene.cotangent
    mapping = {}
    for a in range(h):
        mapping[cc.total.coords[a]] = as_expr(float(x0[a]))
        mapping[cc.total.coords[n + a]] = as_expr(float(ya[a]))
    return mapping, x0, ya


def _lift_points(scene, xi, qpoints, shifts=None):
    """Ambient points over quotient points, optionally shifted along an orbit."""
    n, h = scene.n, scene.h
    _, x0, ya = _lift_map(scene, xi)
    q = np.atleast_2d(qpoints)
    m = n - h
    pts = np.zeros((len(q), 2 * n))
    pts[:, :h] = x0
    pts[:, n:n + h] = ya
    pts[:, h:n] = q[:, :m]
    pts[:, n + h:] = q[:, m:]
    if shifts is not None:
        pts = pts + shifts
    return pts


def reduced_christoffels(conn, scene, xi=None):
    """Gamma'^w_{vu} = quotient part of nabla_{d_u} d_v evaluated on C."""
    xi = _xi(scene, xi)
    Q, _ = scene_quotient(scene, xi)
    mapping, _, _ = _lift_map(scene, xi)
    idx = Q.ambient_indices
    m = len(idx)
    g = expr_array((m, m, m))
    for w in range(m):
        for v in range(m):
            for u in range(m):
                g[w, v, u] = substitute(conn.gamma[idx[w], idx[v], idx[u]], mapping)
    return ConnectionCoeffs(Q.chart, g, symmetric=conn.symmetric)


def orbit_samples(scene, xi, count=5, seed=None):
    """Orbit displacement vectors (count x 2n), scaled to unit box size."""
    dirs = orbit_directions(scene, xi)
    rng = np.random.default_rng(current_seed() if seed is None else seed)
    if len(dirs) == 0:
        return np.zeros((count, 2 * scene.n))
    coeff = rng.uniform(-1.0, 1.0, size=(count, len(dirs)))
    return coeff @ dirs


def well_definedness_check(conn, reduced, scene, xi=None, points=None, tol=1e-8):
    """Reduced Christoffels must not depend on the lift point along an orbit."""
    xi = _xi(scene, xi)
    Q, _ = scene_quotient(scene, xi)
    qpts = sample_points(Q.chart) if points is None else points
    base = reduced.at(qpts)
    idx = np.array(Q.ambient_indices)
    worst, where = 0.0, 0
    for shift in orbit_samples(scene, xi):
        pts = _lift_points(scene, xi, qpts, shift)
        g = conn.at(pts)[:, idx][:, :, idx][:, :, :, idx]
        val, k = max_abs(g - base)
        if val > worst:
            worst, where = val, k
    return CheckResult(
        "well-definedness along orbits",
        worst,
        tol,
        witness=Q.chart.point_dict(qpts[where]),
        detail="5 orbit points per quotient sample",
    )


def reduce_connection(conn, scene, xi=None, points=None, invariance_tol=1e-8, orbit_tol=1e-8):
    """Induced connection on the reduced space; raises when preconditions fail."""
    xi = _xi(scene, xi)
    C = scene_level_set(scene, xi)
    sp = self_parallel_check(conn, C)
    if not sp.passed:
        raise ReductionError(f"level set is not self-parallel: {sp.line()}")
    inv, k = family_invariance_residual(conn, scene.cotangent, scene.h, points)
    if inv > invariance_tol:
        raise ReductionError(
            f"connection is not invariant under the action (residual {inv:.3g} "
            f"at {conn.chart.point_dict(sample_points(conn.chart)[k])})"
        )
    reduced = reduced_christoffels(conn, scene, xi)
    wd = well_definedness_check(conn, reduced, scene, xi, tol=orbit_tol)
    if not wd.passed:
        raise ReductionError(f"reduced connection is not well defined: {wd.line()}")
    return reduced


def _span_residual(vectors, basis):
    """Distance of each vector (N, d) from span(basis)."""
    if len(basis) == 0:
        return np.abs(vectors)
    return vectors - (vectors @ basis.T) @ basis


def reduction_report(conn, scene, xi=None, tol=None):
    """Every condition used by the reduction, as one report.

    ``tol`` overrides the per-check tolerances (1e-8 for noncriticality,
    invariance and orbit independence, 1e-9 for the rest).
    """
    xi = _xi(scene, xi)
    t8 = 1e-8 if tol is None else tol
    t9 = 1e-9 if tol is None else tol
    report = CheckReport()
    report.info["xi"] = list(xi)
    C = moment_level_set(scene, xi)
    J = scene_moment_map(scene)
    nc = report.add(noncritical_check(J, xi, C, tol=t8))
    if not nc.passed:
        return report, None, None
    if C.dim <= 0:
        raise DegenerateQuotientError(f"level set has dimension {C.dim}; nothing to reduce")
    Q, w_red = scene_quotient(scene, xi)
    report.info["level_set_dimension"] = C.dim
    report.info["level_set"] = [f"{e} = {v:g}" for e, v in C.equations()]
    report.info["quotient_coords"] = list(Q.chart.coords)

    report.add(self_parallel_check(conn, C, tol=t9))
    inv, k = family_invariance_residual(conn, scene.cotangent, scene.h)
    report.add(
        CheckResult(
            "action invariance",
            inv,
            t8,
            witness=conn.chart.point_dict(sample_points(conn.chart)[k]),
            detail="finite elements s in {2, 1/2}",
        )
    )

    cpts = C.sample()
    g = conn.at(cpts)
    orbit = orbit_directions(scene, xi)
    d = conn.dim
    eye = np.eye(d)
    worst, where = 0.0, 0
    for Z in orbit:
        for X in eye:
            val, k = max_abs(_span_residual(bilinear_at(g, Z, X), orbit))
            if val > worst:
                worst, where = val, k
    report.add(
        CheckResult("orbit distribution parallel", worst, t9, witness=conn.chart.point_dict(cpts[where]))
    )
    worst, where = 0.0, 0
    for Z in orbit:
        for i in Q.ambient_indices:
            val, k = max_abs(_span_residual(bilinear_at(g, eye[i], Z), orbit))
            if val > worst:
                worst, where = val, k
    report.add(
        CheckResult("nabla_Z Y in orbit directions", worst, t9, witness=conn.chart.point_dict(cpts[where]))
    )

    reduced = reduced_christoffels(conn, scene, xi)
    report.add(well_definedness_check(conn, reduced, scene, xi, tol=t8))

    # lift independence: X -> X + Z, Y -> Y + Z' with constant orbit fields
    qpts = sample_points(Q.chart)
    lp = _lift_points(scene, xi, qpts)
    gl = conn.at(lp)
    idx = list(Q.ambient_indices)
    worst, where = 0.0, 0
    if len(orbit):
        rng = np.random.default_rng(current_seed())
        for u in idx:
            for v in idx:
                Z1 = rng.uniform(-1, 1, len(orbit)) @ orbit
                Z2 = rng.uniform(-1, 1, len(orbit)) @ orbit
                plain = bilinear_at(gl, eye[v], eye[u])[:, idx]
                shifted = bilinear_at(gl, eye[v] + Z2, eye[u] + Z1)[:, idx]
                val, k = max_abs(shifted - plain)
                if val > worst:
                    worst, where = val, k
    report.add(CheckResult("lift independence", worst, t9, witness=Q.chart.point_dict(qpts[where])))

    val, k = torsion_residual(reduced, qpts)
    report.add(CheckResult("reduced torsion", val, t9, witness=Q.chart.point_dict(qpts[k])))
    val, k = compatibility_residual(reduced, w_red, qpts)
    report.add(CheckResult("reduced nabla omega", val, t9, witness=Q.chart.point_dict(qpts[k])))
    return report, reduced, w_red
