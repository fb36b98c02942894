"""Presymplectic connections on adapted charts and their reduction.

An adapted chart lists the 2n transverse coordinates u first and the p leaf
coordinates z last, so the characteristic distribution I is spanned by the
trailing coordinate fields.  Connections are assembled as

    nabla = D + Theta + A,   D = D^S (+) D^I,

with D^S the Bott connection built from a torsion-free K, D^I = pr_I o K,
Theta solving omega(Theta(X, Y), Z) = 1/2 (D_X omega)(Y, Z) on S and A
solving omega(A(X, Y), Z) = 1/6 [(D_Y omega)(X, Z) + (D_Z omega)(X, Y)].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import ZERO, as_expr, differentiate, expr_array, free_vars, substitute
from .geometry import (
    Chart,
    ConnectionCoeffs,
    GeometryError,
    curvature_tensor,
    eval_on,
    max_abs,
    sample_points,
    torsion_tensor,
)
from .reduction import orthonormal_basis
from .report import CheckReport, CheckResult
from .symplectic import (
    DET_TOL,
    RANK_HIGH,
    RANK_LOW,
    FormError,
    TwoFormField,
    add_correction,
    compatibility_residual,
    correction_rhs,
    nabla_omega,
    skew_compatibility_residual,
    solve_against_form,
    torsion_residual,
)


class PresymplecticError(ValueError):
    pass


class NonAdaptedChartError(PresymplecticError):
    pass


def kernel_basis(w, point, rank):
    """Orthonormal basis of ker omega(point), pivoting in coordinate order."""
    W = w.at(np.asarray(point, dtype=float)[None, :])[0]
    d = w.dim
    _, s, vt = np.linalg.svd(W)
    small = int(np.sum(s < RANK_LOW))
    big = int(np.sum(s > RANK_HIGH))
    if small != d - rank or big != rank:
        raise FormError(
            f"omega has rank {big} (not {rank}) at {w.chart.point_dict(point)}; singular values {s}"
        )
    null = vt[rank:]
    if len(null) == 0:
        return np.zeros((0, d))
    return orthonormal_basis(null.T @ null, count=d - rank)


@dataclass(frozen=True, eq=False)
class PresymplecticStructure:
    """omega of rank 2n on an adapted chart of dimension 2n + p."""

    chart: Chart
    omega: TwoFormField
    n: int
    p: int

    def __post_init__(self):
        if self.omega.chart != self.chart:
            raise PresymplecticError("omega is not on the structure's chart")
        if self.n < 0 or self.p < 0 or 2 * self.n + self.p != self.chart.dim:
            raise PresymplecticError(
                f"chart dimension {self.chart.dim} does not equal 2n + p = {2 * self.n + self.p}"
            )

    @property
    def dim(self):
        return self.chart.dim

    @property
    def transverse(self):
        return tuple(range(2 * self.n))

    @property
    def leaf(self):
        return tuple(range(2 * self.n, self.dim))

    @property
    def rank(self):
        return 2 * self.n

    def validate(self, points=None):
        """Closed, constant rank 2n, kernel = span{d/dz}, and z-independent."""
        pts = sample_points(self.chart) if points is None else points
        w = TwoFormField(self.chart, self.omega.omega, kind="presymplectic", rank=self.rank)
        w.validate(pts)
        names = self.chart.coords
        W = self.omega.omega
        leafy = [W[i, a] for a in self.leaf for i in range(self.dim)]
        res = max_abs(eval_on(np.array(leafy, dtype=object), self.chart, pts)) if leafy else (0.0, 0)
        if res[0] > 1e-9:
            raise NonAdaptedChartError(self._diagnostic(pts[res[1]], "omega(d/dz, .) does not vanish"))
        for a in self.leaf:
            for e in W.ravel():
                if names[a] in free_vars(e):
                    dz = eval_on(np.array([differentiate(e, names[a])], dtype=object), self.chart, pts)
                    val, k = max_abs(dz)
                    if val > 1e-9:
                        raise NonAdaptedChartError(
                            self._diagnostic(pts[k], f"omega depends on leaf coordinate {names[a]}")
                        )

    def _diagnostic(self, point, why):
        try:
            ker = kernel_basis(self.omega, point, self.rank)
            found = np.array2string(np.round(ker, 6), separator=", ")
        except FormError as exc:
            found = f"unavailable ({exc})"
        return (
            f"chart is not adapted: {why}; expected kernel span of "
            f"{[self.chart.coords[a] for a in self.leaf]}, kernel basis found at "
            f"{self.chart.point_dict(point)}: {found}"
        )


@dataclass(frozen=True)
class SplittingS:
    """TM = S (+) I with S and I spanned by coordinate fields."""

    transverse: tuple
    leaf: tuple

    @classmethod
    def adapted(cls, ps):
        return cls(ps.transverse, ps.leaf)

    def validate(self, ps, points=None):
        idx = sorted(self.transverse + self.leaf)
        if idx != list(range(ps.dim)):
            raise PresymplecticError("splitting indices must partition the chart coordinates")
        if tuple(sorted(self.leaf)) != ps.leaf:
            raise PresymplecticError("the I part of the splitting must be the characteristic distribution")
        if not self.transverse:
            return
        pts = sample_points(ps.chart) if points is None else points
        W = ps.omega.at(pts)[:, list(self.transverse)][:, :, list(self.transverse)]
        dets = np.abs(np.linalg.det(W))
        k = int(np.argmin(dets))
        if dets[k] <= DET_TOL:
            raise PresymplecticError(f"omega is degenerate on S at {ps.chart.point_dict(pts[k])}")


def characteristic_kernel(ps, point):
    return kernel_basis(ps.omega, point, ps.rank)


def _default_K(ps, K):
    if K is None:
        return ConnectionCoeffs.flat(ps.chart)
    if K.chart != ps.chart:
        raise GeometryError("K is not on the structure's chart")
    return K


def bott_connection_S(ps, S, K=None):
    """Coefficients of D^S on the S basis fields (other entries zero).

    Along S: pr_S(K_{d_i} d_b).  Along I: pr_S [d_z, d_b] = 0 for coordinate
    fields.
    """
    K = _default_K(ps, K)
    d = ps.dim
    out = expr_array((d, d, d))
    for c in S.transverse:
        for b in S.transverse:
            for i in S.transverse:
                out[c, b, i] = K.gamma[c, b, i]
    return out


def assemble_D(ps, S=None, K=None):
    """D = D^S (+) D^I with D^I = pr_I o K."""
    S = SplittingS.adapted(ps) if S is None else S
    K = _default_K(ps, K)
    g = bott_connection_S(ps, S, K)
    for c in S.leaf:
        for j in S.leaf:
            for i in range(ps.dim):
                g[c, j, i] = K.gamma[c, j, i]
    return ConnectionCoeffs(ps.chart, g)


def theta_tensor(ps, S, D):
    """Theta[m][x][y]: omega(Theta(X', Y'), Z') = 1/2 (D_X' omega)(Y', Z')."""
    N = nabla_omega(D, ps.omega)
    return solve_against_form(ps.omega, correction_rhs(N, S.transverse, half=0.5, sixth=0.0), S.transverse)


def a_tensor(ps, S, D):
    """A[m][x][y]: omega(A(X', Y'), Z') = 1/6 [(D_Y' w)(X', Z') + (D_Z' w)(X', Y')]."""
    N = nabla_omega(D, ps.omega)
    return solve_against_form(ps.omega, correction_rhs(N, S.transverse, half=0.0, sixth=1.0 / 6.0), S.transverse)


@dataclass(frozen=True, eq=False)
class PresymplecticBuild:
    structure: PresymplecticStructure
    splitting: SplittingS
    K: ConnectionCoeffs
    D: ConnectionCoeffs
    theta: np.ndarray
    nabla_circ: ConnectionCoeffs
    A: np.ndarray
    connection: ConnectionCoeffs


def build_presymplectic_connection(ps, S=None, K=None, points=None):
    pts = sample_points(ps.chart) if points is None else points
    ps.validate(pts)
    S = SplittingS.adapted(ps) if S is None else S
    S.validate(ps, pts)
    K = _default_K(ps, K)
    res, k = K.symmetry_residual(pts)
    if res > 1e-10:
        raise GeometryError(f"K must be torsion-free (residual {res:.3g} at {ps.chart.point_dict(pts[k])})")
    D = assemble_D(ps, S, K)
    theta = theta_tensor(ps, S, D)
    nabla_circ = add_correction(D, theta)
    A = a_tensor(ps, S, D)
    conn = add_correction(nabla_circ, A)
    return PresymplecticBuild(ps, S, K, D, theta, nabla_circ, A, conn)


# ---------------------------------------------------------------------------
# residuals

def kernel_torsion_residual(conn, ps, points=None):
    """max |omega(T(d_i, d_j), d_k)|: zero iff the torsion is I-valued."""
    pts = sample_points(ps.chart) if points is None else points
    T = eval_on(torsion_tensor(conn), ps.chart, pts)
    W = ps.omega.at(pts)
    return max_abs(np.einsum("nmij,nmk->nijk", T, W))


def cyclic_identity_residual(D, ps, points=None, span=None):
    """max |sum over cyclic (X, Y, Z) of (D_X omega)(Y, Z)| on basis triples."""
    pts = sample_points(ps.chart) if points is None else points
    N = eval_on(nabla_omega(D, ps.omega), ps.chart, pts)  # N[n, y, z, x]
    cyc = N + np.transpose(N, (0, 2, 3, 1)) + np.transpose(N, (0, 3, 1, 2))
    if span is not None:
        s = list(span)
        cyc = cyc[:, s][:, :, s][:, :, :, s]
    return max_abs(cyc)


def torsion_decomposition_residuals(build, points=None):
    """Check omega(T(X',Y'),Z') = omega(A(X',Y') - A(Y',X'), Z') - 1/2 (D_Z' w)(X',Y').

    Returns (identity residual, size of the right-hand side) on S-triples.
    """
    ps = build.structure
    pts = sample_points(ps.chart) if points is None else points
    s = list(build.splitting.transverse)
    W = ps.omega.at(pts)
    T = eval_on(torsion_tensor(build.connection), ps.chart, pts)
    A = eval_on(build.A, ps.chart, pts)
    N = eval_on(nabla_omega(build.D, ps.omega), ps.chart, pts)
    lhs = np.einsum("nmxy,nmz->nxyz", T, W)
    skewA = np.einsum("nmxy,nmz->nxyz", A - np.swapaxes(A, 2, 3), W)
    rhs = skewA - 0.5 * N  # (D_Z w)(X, Y) = N[X][Y][Z]
    sel = np.ix_(range(len(pts)), s, s, s)
    return max_abs((lhs - rhs)[sel]), max_abs(rhs[sel])


def subbundle_preservation_residual(conn, S, points=None):
    """Largest component of nabla(S) along I or of nabla(I) along S."""
    pts = sample_points(conn.chart) if points is None else points
    g = conn.at(pts)
    S_, I_ = list(S.transverse), list(S.leaf)
    parts = []
    if S_ and I_:
        parts.append(g[:, I_][:, :, S_].reshape(len(pts), -1))
        parts.append(g[:, S_][:, :, I_].reshape(len(pts), -1))
    if not parts:
        return 0.0, 0
    return max_abs(np.hstack(parts))


def kernel_parallel_residual(conn, ps, points=None):
    """max |omega(nabla_{d_i} Z, .)| for the kernel basis Z taken as constant fields."""
    pts = sample_points(ps.chart) if points is None else points
    ker = characteristic_kernel(ps, ps.chart.center)
    if len(ker) == 0:
        return 0.0, 0
    g = conn.at(pts)
    W = ps.omega.at(pts)
    # (nabla_{d_i} Z)^c = Gamma^c_{j i} Z^j
    vals = np.einsum("nkji,zj,nkl->nzil", g, ker, W)
    return max_abs(vals)


# ---------------------------------------------------------------------------
# checks

def curvature_condition_check(conn, ps, points=None, tol=1e-8):
    """max |omega(R(Z, X) Y, W)| for kernel Z and coordinate X, Y, W."""
    pts = sample_points(ps.chart) if points is None else points
    if conn.chart != ps.chart:
        raise GeometryError("connection is not on the structure's chart")
    ker = characteristic_kernel(ps, ps.chart.center)
    if len(ker) == 0:
        return CheckResult("curvature condition", 0.0, tol, detail="no kernel: vacuous")
    R = eval_on(curvature_tensor(conn), ps.chart, pts)  # R[n, l, k, i, j] = (R(d_i, d_j) d_k)^l
    W = ps.omega.at(pts)
    vals = np.einsum("nlkij,zi,nlw->nzjkw", R, ker, W)
    val, k = max_abs(vals)
    flat = np.abs(vals[k]).reshape(-1)
    z, x, y, w = np.unravel_index(int(np.argmax(flat)), vals.shape[1:])
    names = ps.chart.coords
    return CheckResult(
        "curvature condition",
        val,
        tol,
        witness=ps.chart.point_dict(pts[k]),
        detail=f"omega(R(Z{z + 1}, d/d{names[x]}) d/d{names[y]}, d/d{names[w]})",
    )


def _leaf_derivative_max(e, names, leaf_names, chart, pts):
    worst = (0.0, 0)
    for z in leaf_names:
        if z not in free_vars(e):
            continue
        dz = differentiate(e, z)
        if dz is ZERO:
            continue
        val = max_abs(eval_on(np.array([dz], dtype=object), chart, pts))
        if val[0] > worst[0]:
            worst = val
    return worst


def projectability_check(conn, ps, points=None, tol=1e-8):
    """Adaptedness (nabla_{d_z} d_a has no S part) and leaf independence of Gamma^c_{ab}."""
    pts = sample_points(ps.chart) if points is None else points
    S_, I_ = list(ps.transverse), list(ps.leaf)
    names = ps.chart.coords
    report = CheckReport()
    if I_ and S_:
        g = conn.at(pts)
        val, k = max_abs(g[:, S_][:, :, S_][:, :, :, I_])
    else:
        val, k = 0.0, 0
    report.add(CheckResult("adapted", val, tol, witness=ps.chart.point_dict(pts[k])))
    leaf_names = [names[a] for a in I_]
    worst, where, entry = 0.0, 0, None
    for c in S_:
        for b in S_:
            for a in S_:
                v, k = _leaf_derivative_max(conn.gamma[c, b, a], names, leaf_names, ps.chart, pts)
                if v > worst:
                    worst, where, entry = v, k, (c, b, a)
    detail = "" if entry is None else "gamma[%s][%s][%s]" % tuple(names[i] for i in entry)
    report.add(CheckResult("leaf independent", worst, tol, witness=ps.chart.point_dict(pts[where]), detail=detail))
    return report


def reduce_presymplectic(conn, ps, z0=None, points=None, tol=1e-8):
    """Induced symplectic connection on the leaf space (transverse coordinates)."""
    proj = projectability_check(conn, ps, points, tol)
    if not proj.passed:
        bad = [c.line() for c in proj.checks if not c.passed]
        raise PresymplecticError("connection is not projectable: " + "; ".join(bad))
    S_ = list(ps.transverse)
    if not S_:
        raise PresymplecticError("omega vanishes: the leaf space is a point")
    names = ps.chart.coords
    z0 = ps.chart.center[list(ps.leaf)] if z0 is None else np.asarray(z0, dtype=float)
    mapping = {names[a]: as_expr(float(v)) for a, v in zip(ps.leaf, z0)}
    qchart = Chart(tuple(names[i] for i in S_), tuple(ps.chart.domain[i] for i in S_))
    m = len(S_)
    g = expr_array((m, m, m))
    for c in range(m):
        for b in range(m):
            for a in range(m):
                g[c, b, a] = substitute(conn.gamma[S_[c], S_[b], S_[a]], mapping)
    w = TwoFormField.from_upper(
        qchart,
        {(i, j): substitute(ps.omega.omega[S_[i], S_[j]], mapping) for i in range(m) for j in range(i + 1, m)},
        kind="symplectic",
        rank=m,
    )
    return ConnectionCoeffs(qchart, g), w


def presymplectic_report(ps, K=None, reduce=False, tol=None):
    """Build the connection and run every check; returns (report, build, quotient)."""
    t8 = 1e-8 if tol is None else tol
    t9 = 1e-9 if tol is None else tol
    pts = sample_points(ps.chart)
    build = build_presymplectic_connection(ps, K=K, points=pts)
    conn = build.connection
    report = CheckReport()
    report.info["n"] = ps.n
    report.info["p"] = ps.p

    def add(name, res, t):
        report.add(CheckResult(name, res[0], t, witness=ps.chart.point_dict(pts[res[1]])))

    add("nabla omega", compatibility_residual(conn, ps.omega, pts), t8)
    add("kernel-valued torsion", kernel_torsion_residual(conn, ps, pts), t8)
    add("A skew-compatibility", skew_compatibility_residual(build.A, ps.omega, pts, ps.transverse), t9)
    add("cyclic identity for D", cyclic_identity_residual(build.D, ps, pts), t9)
    ident, _ = torsion_decomposition_residuals(build, pts)
    add("torsion decomposition", ident, t9)
    add("D preserves S and I", subbundle_preservation_residual(build.D, build.splitting, pts), t9)
    add("kernel parallel", kernel_parallel_residual(conn, ps, pts), t8)
    report.add(curvature_condition_check(conn, ps, pts, t8))
    report.extend(projectability_check(conn, ps, pts, t8))
    quotient = None
    if reduce and report.passed:
        qconn, qw = reduce_presymplectic(conn, ps, tol=t8)
        qpts = sample_points(qconn.chart)
        val, k = torsion_residual(qconn, qpts)
        report.add(CheckResult("reduced torsion", val, t9, witness=qconn.chart.point_dict(qpts[k])))
        val, k = compatibility_residual(qconn, qw, qpts)
        report.add(CheckResult("reduced nabla omega", val, t9, witness=qconn.chart.point_dict(qpts[k])))
        quotient = (qconn, qw)
    return report, build, quotient
