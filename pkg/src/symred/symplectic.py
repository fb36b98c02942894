"""Two-forms, their covariant derivatives, and the symplectic correction.

``nabla_omega`` is stored as ``N[i][j][k] = (nabla_{d_k} omega)(d_i, d_j)``.
Correction tensors ``A[m][i][j]`` hold the d_m component of A(d_i, d_j), with
the first slot the differentiation direction (nabla_X Y + A(X, Y)).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import ZERO, as_expr, differentiate, expr_array, free_vars, freeze, mul, neg, sum_exprs
from .geometry import (
    ConnectionCoeffs,
    GeometryError,
    eval_on,
    max_abs,
    sample_points,
    symbolic_inverse,
    torsion_tensor,
)

CLOSED_TOL = 1e-10
DET_TOL = 1e-10
RANK_LOW = 1e-8
RANK_HIGH = 1e-6


class FormError(ValueError):
    pass


class DegenerateFormError(FormError):
    pass


@dataclass(frozen=True, eq=False)
class TwoFormField:
    chart: object
    omega: np.ndarray = field(repr=False)
    kind: str = None
    rank: int = None

    def __post_init__(self):
        d = self.chart.dim
        src = np.asarray(self.omega, dtype=object)
        if src.shape != (d, d):
            raise FormError(f"omega must be {d}x{d}")
        w = expr_array((d, d))
        for i in range(d):
            for j in range(i + 1, d):
                e = as_expr(src[i, j])
                w[i, j] = e
                w[j, i] = neg(e)
        object.__setattr__(self, "omega", freeze(w))
        if self.kind not in (None, "symplectic", "presymplectic"):
            raise FormError(f"unknown form kind {self.kind!r}")

    @classmethod
    def from_upper(cls, chart, entries, kind=None, rank=None):
        """Build from ``{(i, j): expr}`` with 0-based i < j."""
        d = chart.dim
        w = expr_array((d, d))
        for (i, j), e in entries.items():
            if not 0 <= i < j < d:
                raise FormError(f"omega entry ({i}, {j}) must satisfy i < j < {d}")
            w[i, j] = as_expr(e)
        return cls(chart, w, kind=kind, rank=rank)

    @property
    def dim(self):
        return self.chart.dim

    def at(self, points):
        return eval_on(self.omega, self.chart, points)

    def is_constant(self):
        return all(not free_vars(e) for e in self.omega.ravel())

    def closedness_residual(self, points=None):
        pts = sample_points(self.chart) if points is None else points
        return max_abs(eval_on(exterior_derivative(self), self.chart, pts))

    def min_abs_det(self, points=None):
        pts = sample_points(self.chart) if points is None else points
        dets = np.abs(np.linalg.det(self.at(pts)))
        k = int(np.argmin(dets))
        return float(dets[k]), k

    def rank_defect(self, rank, points=None, low=RANK_LOW, high=RANK_HIGH):
        """First sample index where the singular-value rank test fails, else None.

        Rank ``r`` means: exactly dim - r singular values below 1e-8 and the
        remaining ones above 1e-6.
        """
        pts = sample_points(self.chart) if points is None else points
        svals = np.linalg.svd(self.at(pts), compute_uv=False)
        d = self.dim
        for k, s in enumerate(svals):
            small = int(np.sum(s < low))
            big = int(np.sum(s > high))
            if small != d - rank or big != rank:
                return k
        return None

    def validate(self, points=None, rank_tol=RANK_LOW):
        """Raise FormError when the declared kind is violated."""
        if self.kind is None:
            return
        pts = sample_points(self.chart) if points is None else points
        res, k = self.closedness_residual(pts)
        if res > CLOSED_TOL:
            raise FormError(
                f"form flagged {self.kind} is not closed: |d omega| = {res:.3g} "
                f"at {self.chart.point_dict(pts[k])}"
            )
        if self.kind == "symplectic":
            det, k = self.min_abs_det(pts)
            if det <= DET_TOL:
                raise DegenerateFormError(
                    f"form flagged symplectic is degenerate at {self.chart.point_dict(pts[k])}"
                )
        else:
            rank = self.rank
            if rank is None or rank % 2 or not 0 <= rank <= self.dim:
                raise FormError(f"presymplectic form needs an even rank in [0, {self.dim}], got {rank}")
            k = self.rank_defect(rank, pts, low=rank_tol, high=max(RANK_HIGH, rank_tol))
            if k is not None:
                raise FormError(
                    f"form does not have constant rank {rank}: fails at {self.chart.point_dict(pts[k])}"
                )


def exterior_derivative(w):
    """(d omega)_{ijk} = d_i w_jk + d_j w_ki + d_k w_ij, fully antisymmetric."""
    d = w.dim
    names = w.chart.coords
    W = w.omega
    out = expr_array((d, d, d))
    for i in range(d):
        for j in range(i + 1, d):
            for k in range(j + 1, d):
                v = sum_exprs(
                    [
                        differentiate(W[j, k], names[i]),
                        differentiate(W[k, i], names[j]),
                        differentiate(W[i, j], names[k]),
                    ]
                )
                for (a, b, c), sign in (
                    ((i, j, k), 1), ((j, k, i), 1), ((k, i, j), 1),
                    ((j, i, k), -1), ((i, k, j), -1), ((k, j, i), -1),
                ):
                    out[a, b, c] = v if sign > 0 else neg(v)
    return freeze(out)


def nabla_omega(conn, w):
    """N[i][j][k] = d_k w_ij - Gamma^l_{ik} w_lj - Gamma^l_{jk} w_il."""
    if conn.chart != w.chart:
        raise GeometryError("connection and form live on different charts")
    d = w.dim
    names = w.chart.coords
    g = conn.gamma
    W = w.omega
    out = expr_array((d, d, d))
    for i in range(d):
        for j in range(i + 1, d):
            for k in range(d):
                terms = [differentiate(W[i, j], names[k])]
                for l in range(d):
                    if g[l, i, k] is not ZERO and W[l, j] is not ZERO:
                        terms.append(neg(mul(g[l, i, k], W[l, j])))
                    if g[l, j, k] is not ZERO and W[i, l] is not ZERO:
                        terms.append(neg(mul(g[l, j, k], W[i, l])))
                v = sum_exprs(terms)
                out[i, j, k] = v
                out[j, i, k] = neg(v)
    return freeze(out)


def invert_on_span(w, point, basis):
    """Inverse of the Gram matrix G[a][c] = omega(b_a, b_c) at one point."""
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    W = w.at(np.asarray(point, dtype=float)[None, :])[0]
    gram = B @ W @ B.T
    det = np.linalg.det(gram)
    if abs(det) <= DET_TOL:
        raise DegenerateFormError(f"omega restricted to the span is degenerate (det = {det:.3g})")
    return np.linalg.inv(gram)


def solve_against_form(w, rhs, span):
    """Solve omega(A(X, Y), Z) = rhs[X][Y][Z] for A valued in a coordinate span.

    ``span`` lists the coordinate indices used for X, Y, Z and for the values
    of A; entries of A outside the span are zero.  Works symbolically: a
    constant restriction is inverted numerically, otherwise by cofactors.
    """
    d = w.dim
    S = list(span)
    m = len(S)
    Wt = expr_array((m, m))  # transpose of the restriction: Wt[z][a] = w[a][z]
    for a in range(m):
        for z in range(m):
            Wt[z, a] = w.omega[S[a], S[z]]
    try:
        inv = symbolic_inverse(Wt)
    except GeometryError as exc:
        raise DegenerateFormError(f"omega is degenerate on the span: {exc}") from None
    A = expr_array((d, d, d))
    for i in S:
        for j in S:
            for a in range(m):
                A[S[a], i, j] = sum_exprs(
                    mul(inv[a, z], rhs[i, j, S[z]])
                    for z in range(m)
                    if inv[a, z] is not ZERO and rhs[i, j, S[z]] is not ZERO
                )
    return A


def correction_rhs(N, span, half=0.5, sixth=1.0 / 6.0):
    """B(X, Y, Z) = half (D_X w)(Y, Z) + sixth [(D_Y w)(X, Z) + (D_Z w)(X, Y)].

    ``N`` is a nabla_omega array, so (D_X w)(Y, Z) = N[Y][Z][X].
    """
    d = N.shape[0]
    B = expr_array((d, d, d))
    h, s = as_expr(half), as_expr(sixth)
    for x in span:
        for y in span:
            for z in span:
                B[x, y, z] = sum_exprs(
                    [mul(h, N[y, z, x]), mul(s, N[x, z, y]), mul(s, N[x, y, z])]
                )
    return B


def add_correction(conn, A, symmetric=False):
    """Connection nabla_X Y + A(X, Y) in storage order."""
    d = conn.dim
    g = expr_array((d, d, d))
    for m in range(d):
        for j in range(d):
            for i in range(d):
                g[m, j, i] = conn.gamma[m, j, i] + A[m, i, j]
    return ConnectionCoeffs(conn.chart, g, symmetric=symmetric)


def _check_symplectize_inputs(conn, w, points):
    if conn.chart != w.chart:
        raise GeometryError("connection and form live on different charts")
    res, k = conn.symmetry_residual(points)
    if res > CLOSED_TOL:
        raise GeometryError(
            f"connection is not symmetric (residual {res:.3g} at {conn.chart.point_dict(points[k])})"
        )
    res, k = w.closedness_residual(points)
    if res > CLOSED_TOL:
        raise FormError(f"omega is not closed (residual {res:.3g} at {w.chart.point_dict(points[k])})")
    det, k = w.min_abs_det(points)
    if det <= DET_TOL:
        raise DegenerateFormError(f"omega is degenerate at {w.chart.point_dict(points[k])}")


def symplectic_correction(conn, w, points=None):
    """The tensor A with omega(A(X,Y),Z) = 1/2 (nabla_X w)(Y,Z) + 1/6 {...}."""
    pts = sample_points(conn.chart) if points is None else points
    _check_symplectize_inputs(conn, w, pts)
    span = range(w.dim)
    N = nabla_omega(conn, w)
    return solve_against_form(w, correction_rhs(N, span), span)


def symplectize(conn, w, points=None):
    """Turn a torsion-free connection into a symplectic one for a closed w."""
    A = symplectic_correction(conn, w, points)
    if all(e is ZERO for e in A.ravel()):
        return conn
    return add_correction(conn, A, symmetric=True)


# ---------------------------------------------------------------------------
# residuals

def compatibility_residual(conn, w, points=None):
    pts = sample_points(conn.chart) if points is None else points
    return max_abs(eval_on(nabla_omega(conn, w), conn.chart, pts))


def torsion_residual(conn, points=None):
    pts = sample_points(conn.chart) if points is None else points
    return max_abs(eval_on(torsion_tensor(conn), conn.chart, pts))


def skew_compatibility_residual(A, w, points=None, span=None):
    """max |omega(A(X,Y),Z) + omega(Y, A(X,Z))| over basis triples in ``span``."""
    pts = sample_points(w.chart) if points is None else points
    d = w.dim
    S = list(range(d)) if span is None else list(span)
    Av = eval_on(A, w.chart, pts)  # (N, m, i, j)
    Wv = w.at(pts)
    # omega(A(X,Y),Z) = A^m(X,Y) w_mZ ; omega(Y, A(X,Z)) = w_Ym A^m(X,Z)
    first = np.einsum("nmxy,nmz->nxyz", Av, Wv)
    second = np.einsum("nym,nmxz->nxyz", Wv, Av)
    total = (first + second)[np.ix_(range(len(pts)), S, S, S)]
    return max_abs(total)
