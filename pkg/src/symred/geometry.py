"""Charts, linear connections and parallel transport.

Christoffel storage is ``gamma[k][j][i]``: the ``d/dx^k`` component of
``nabla_{d/dx^i} d/dx^j``.  The differentiation direction is the *last* index.
"""
from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .expr import (
    ONE,
    ZERO,
    Var,
    add,
    as_expr,
    differentiate,
    evaluate_array,
    evaluate_many,
    expr_array,
    freeze,
    is_const,
    mul,
    neg,
    sub,
    substitute,
    sum_exprs,
)

SAMPLE_SEED = 0x5EED
SAMPLE_COUNT = 50


class GeometryError(ValueError):
    pass


class ChartMismatchError(GeometryError):
    pass


@dataclass(frozen=True)
class Chart:
    coords: tuple
    domain: tuple

    def __post_init__(self):
        coords = tuple(self.coords)
        domain = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        if not coords:
            raise GeometryError("a chart needs at least one coordinate")
        if len(set(coords)) != len(coords):
            raise GeometryError(f"duplicate coordinate names in {coords}")
        if len(domain) != len(coords):
            raise GeometryError("domain must give one interval per coordinate")
        for name, (lo, hi) in zip(coords, domain):
            Var(name)  # validates the identifier
            if not lo < hi:
                raise GeometryError(f"empty interval [{lo}, {hi}] for {name}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "domain", domain)

    @property
    def dim(self):
        return len(self.coords)

    @property
    def lo(self):
        return np.array([d[0] for d in self.domain])

    @property
    def hi(self):
        return np.array([d[1] for d in self.domain])

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def var(self, i):
        return Var(self.coords[i])

    def vars(self):
        return [Var(c) for c in self.coords]

    def index(self, name):
        return self.coords.index(name)

    def point_dict(self, p):
        return {c: float(v) for c, v in zip(self.coords, p)}

    @classmethod
    def box(cls, coords, lo=-1.0, hi=1.0):
        return cls(tuple(coords), tuple((lo, hi) for _ in coords))


_seed = contextvars.ContextVar("symred_sample_seed", default=SAMPLE_SEED)


def current_seed():
    return _seed.get()


@contextlib.contextmanager
def sampling_seed(seed):
    """Override the default sampling seed within a block (context-local)."""
    token = _seed.set(int(seed))
    try:
        yield
    finally:
        _seed.reset(token)


def sample_points(chart, seed=None, count=SAMPLE_COUNT):
    """Seeded uniform points in the chart box, plus the box center (last row)."""
    seed = _seed.get() if seed is None else seed
    rng = np.random.default_rng(seed)
    lo, hi = chart.lo, chart.hi
    pts = lo + (hi - lo) * rng.random((count, chart.dim))
    return np.vstack([pts, chart.center])


def max_abs(values):
    """(max |value|, index of the first point attaining it) over axis 0."""
    vals = np.abs(np.asarray(values, dtype=float))
    if vals.size == 0:
        return 0.0, 0
    per_point = vals.reshape(vals.shape[0], -1).max(axis=1) if vals.ndim > 1 else vals
    k = int(np.argmax(per_point))
    return float(per_point[k]), k


def eval_on(arr, chart, points):
    return evaluate_array(arr, chart.coords, points)


# ---------------------------------------------------------------------------
# field types

@dataclass(frozen=True)
class VectorFieldExpr:
    chart: Chart
    components: tuple

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        if len(comps) != self.chart.dim:
            raise GeometryError(f"vector field needs {self.chart.dim} components, got {len(comps)}")
        object.__setattr__(self, "components", comps)

    def at(self, points):
        return eval_on(np.array(self.components, dtype=object), self.chart, points)

    @classmethod
    def coordinate(cls, chart, i):
        return cls(chart, tuple(ONE if k == i else ZERO for k in range(chart.dim)))

    @classmethod
    def constant(cls, chart, values):
        return cls(chart, tuple(as_expr(float(v)) for v in values))

    @classmethod
    def zero(cls, chart):
        return cls(chart, (ZERO,) * chart.dim)


@dataclass(frozen=True, eq=False)
class ConnectionCoeffs:
    chart: Chart
    gamma: np.ndarray = field(repr=False)
    symmetric: bool = False

    def __post_init__(self):
        d = self.chart.dim
        g = np.empty((d, d, d), dtype=object)
        src = np.asarray(self.gamma, dtype=object)
        if src.shape != (d, d, d):
            raise GeometryError(f"gamma must have shape {(d, d, d)}, got {src.shape}")
        for idx in np.ndindex(d, d, d):
            g[idx] = as_expr(src[idx])
        object.__setattr__(self, "gamma", freeze(g))

    @property
    def dim(self):
        return self.chart.dim

    def at(self, points):
        """Numeric Christoffels, shape (N, d, d, d) in storage order."""
        return eval_on(self.gamma, self.chart, points)

    def is_zero(self):
        return all(e is ZERO for e in self.gamma.ravel())

    def symmetry_residual(self, points=None):
        pts = sample_points(self.chart) if points is None else points
        g = self.at(pts)
        return max_abs(g - np.swapaxes(g, 2, 3))

    @classmethod
    def flat(cls, chart):
        return cls(chart, expr_array((chart.dim,) * 3), symmetric=True)

    @classmethod
    def from_entries(cls, chart, entries, symmetric=False):
        """Build from ``{(k, j, i): expr}`` with 0-based storage indices."""
        g = expr_array((chart.dim,) * 3)
        for (k, j, i), e in entries.items():
            g[k, j, i] = as_expr(e)
        return cls(chart, g, symmetric=symmetric)


@dataclass(frozen=True)
class FrameField:
    chart: Chart
    vectors: tuple

    def __post_init__(self):
        vecs = tuple(self.vectors)
        if len(vecs) != self.chart.dim:
            raise GeometryError("a frame needs exactly dim vectors")
        for v in vecs:
            if v.chart != self.chart:
                raise ChartMismatchError("frame vector on a different chart")
        object.__setattr__(self, "vectors", vecs)

    def matrix(self):
        """E[mu][a] = mu-th coordinate component of the a-th frame vector."""
        d = self.chart.dim
        m = expr_array((d, d))
        for a, v in enumerate(self.vectors):
            for mu in range(d):
                m[mu, a] = v.components[mu]
        return m

    def determinant_residual(self, points=None):
        pts = sample_points(self.chart) if points is None else points
        mats = eval_on(self.matrix(), self.chart, pts)
        dets = np.linalg.det(mats)
        k = int(np.argmin(np.abs(dets)))
        return float(abs(dets[k])), k


@dataclass(frozen=True)
class PathSpec:
    chart: Chart
    components: tuple
    t0: float = 0.0
    t1: float = 1.0
    param: str = "t"

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        if len(comps) != self.chart.dim:
            raise GeometryError("path needs one component per coordinate")
        if self.param in self.chart.coords:
            raise GeometryError(f"path parameter {self.param!r} collides with a coordinate")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t1", float(self.t1))

    def velocity(self):
        return tuple(differentiate(c, self.param) for c in self.components)

    def position(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return evaluate_many(self.components, (self.param,), ts[:, None])

    def speed(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return evaluate_many(self.velocity(), (self.param,), ts[:, None])

    def domain_violation(self, samples=100):
        """Largest excursion outside the chart box over sampled t."""
        pts = self.position(np.linspace(self.t0, self.t1, samples))
        over = np.maximum(pts - self.chart.hi, 0.0) + np.maximum(self.chart.lo - pts, 0.0)
        return float(over.max())

    @classmethod
    def line(cls, chart, start, direction, t0=0.0, t1=1.0, param="t"):
        t = Var(param)
        comps = tuple(add(as_expr(float(s)), mul(as_expr(float(v)), t)) for s, v in zip(start, direction))
        return cls(chart, comps, t0, t1, param)


def _same_chart(*objs):
    charts = {o.chart for o in objs}
    if len(charts) != 1:
        raise ChartMismatchError("operands live on different charts")


# ---------------------------------------------------------------------------
# covariant derivative, torsion, curvature

def covariant_derivative_vector(conn, X, Y):
    """(nabla_X Y)^k = X^i d_i Y^k + Gamma^k_{ji} Y^j X^i."""
    _same_chart(conn, X, Y)
    d = conn.dim
    names = conn.chart.coords
    g = conn.gamma
    out = []
    for k in range(d):
        terms = [mul(X.components[i], differentiate(Y.components[k], names[i])) for i in range(d)]
        for j in range(d):
            if Y.components[j] is ZERO:
                continue
            for i in range(d):
                if g[k, j, i] is ZERO or X.components[i] is ZERO:
                    continue
                terms.append(mul(g[k, j, i], mul(Y.components[j], X.components[i])))
        out.append(sum_exprs(terms))
    return VectorFieldExpr(conn.chart, tuple(out))


def bilinear_at(gamma_values, Y, X):
    """Numeric Gamma(Y, X)^k = Gamma^k_{ji} Y^j X^i for arrays of points.

    ``gamma_values`` has shape (N, d, d, d); Y and X are (d,) or (N, d).
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if Y.ndim == 1:
        Y = np.broadcast_to(Y, gamma_values.shape[:2])
    if X.ndim == 1:
        X = np.broadcast_to(X, gamma_values.shape[:2])
    return np.einsum("nkji,nj,ni->nk", gamma_values, Y, X)


def torsion_tensor(conn):
    """T[k][i][j] = Gamma^k_{ji} - Gamma^k_{ij} = (nabla_i d_j - nabla_j d_i)^k."""
    d = conn.dim
    g = conn.gamma
    T = expr_array((d, d, d))
    for k in range(d):
        for i in range(d):
            for j in range(i + 1, d):
                t = sub(g[k, j, i], g[k, i, j])
                T[k, i, j] = t
                T[k, j, i] = neg(t)
    return freeze(T)


def curvature_tensor(conn):
    """R[l][k][i][j] = (R(d_i, d_j) d_k)^l.

    R^l_{kij} = d_i G^l_{kj} - d_j G^l_{ki} + G^l_{mi} G^m_{kj} - G^l_{mj} G^m_{ki}
    with G^a_{bc} = gamma[a][b][c].
    """
    d = conn.dim
    g = conn.gamma
    names = conn.chart.coords
    R = expr_array((d, d, d, d))
    for l in range(d):
        for k in range(d):
            for i in range(d):
                for j in range(i + 1, d):
                    terms = [
                        differentiate(g[l, k, j], names[i]),
                        neg(differentiate(g[l, k, i], names[j])),
                    ]
                    for m in range(d):
                        terms.append(mul(g[l, m, i], g[m, k, j]))
                        terms.append(neg(mul(g[l, m, j], g[m, k, i])))
                    r = sum_exprs(terms)
                    R[l, k, i, j] = r
                    R[l, k, j, i] = neg(r)
    return freeze(R)


def transpose_connection(conn):
    """Swap the lower indices: (nabla^t)_X Y = nabla_Y X + [X, Y]."""
    g = np.swapaxes(conn.gamma, 1, 2).copy()
    return ConnectionCoeffs(conn.chart, g, symmetric=conn.symmetric)


def symmetric_part(conn):
    """Average of a connection and its transpose; torsion-free by construction."""
    d = conn.dim
    g = conn.gamma
    if all(g[k, j, i] is g[k, i, j] for k in range(d) for i in range(d) for j in range(i + 1, d)):
        return conn if conn.symmetric else ConnectionCoeffs(conn.chart, g, symmetric=True)
    out = expr_array((d, d, d))
    half = as_expr(0.5)
    for k in range(d):
        for i in range(d):
            out[k, i, i] = g[k, i, i]
            for j in range(i + 1, d):
                a, b = g[k, j, i], g[k, i, j]
                s = a if a is b else mul(half, add(a, b))
                out[k, j, i] = s
                out[k, i, j] = s
    return ConnectionCoeffs(conn.chart, out, symmetric=True)


# ---------------------------------------------------------------------------
# symbolic linear algebra

def symbolic_inverse(m):
    """Inverse of a square object matrix of expressions.

    Constant matrices go through numpy.  Otherwise the adjugate is formed by
    cofactor expansion with memoized minors (zero entries are skipped, so the
    sparse matrices met here stay cheap).
    """
    m = np.asarray(m, dtype=object)
    n = m.shape[0]
    if all(is_const(e) for e in m.ravel()):
        vals = np.array([[e.value for e in row] for row in m], dtype=float)
        if abs(np.linalg.det(vals)) <= 1e-12:
            raise GeometryError("singular constant matrix")
        inv = np.linalg.inv(vals)
        inv[np.abs(inv) < 1e-15] = 0.0
        out = expr_array((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = as_expr(float(inv[i, j]))
        return out

    memo = {}

    def det(rows, cols):
        key = (rows, cols)
        if key in memo:
            return memo[key]
        if len(rows) == 1:
            val = m[rows[0], cols[0]]
        else:
            r0 = rows[0]
            terms = []
            for pos, c in enumerate(cols):
                entry = m[r0, c]
                if entry is ZERO:
                    continue
                minor = det(rows[1:], cols[:pos] + cols[pos + 1:])
                if minor is ZERO:
                    continue
                t = mul(entry, minor)
                terms.append(t if pos % 2 == 0 else neg(t))
            val = sum_exprs(terms)
        memo[key] = val
        return val

    full = tuple(range(n))
    D = det(full, full)
    if D is ZERO:
        raise GeometryError("matrix is symbolically singular")
    out = expr_array((n, n))
    for i in range(n):
        for j in range(n):
            # inverse[i][j] = (-1)^{i+j} M_{ji} / det
            rows = full[:j] + full[j + 1:]
            cols = full[:i] + full[i + 1:]
            c = det(rows, cols) if n > 1 else ONE
            if c is ZERO:
                continue
            if (i + j) % 2:
                c = neg(c)
            out[i, j] = c / D
    return out


def matmul_expr(a, b):
    a = np.asarray(a, dtype=object)
    b = np.asarray(b, dtype=object)
    out = expr_array((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            out[i, j] = sum_exprs(
                mul(a[i, k], b[k, j])
                for k in range(a.shape[1])
                if a[i, k] is not ZERO and b[k, j] is not ZERO
            )
    return out


# ---------------------------------------------------------------------------
# frames and coordinate changes

def frame_to_coordinate_connection(frame, frame_coeffs, symmetric=False):
    """Coordinate Christoffels from connection coefficients in a frame.

    ``frame_coeffs[c][b][a]`` is the e_c component of nabla_{e_a} e_b.  With
    E[mu][a] the frame matrix:

        Gamma^mu_{nu rho} = Einv[b][nu] Einv[a][rho]
                            (C^c_{ba} E^mu_c - E^sigma_a d_sigma E^mu_b)
    """
    chart = frame.chart
    d = chart.dim
    names = chart.coords
    C = np.asarray(frame_coeffs, dtype=object)
    if C.shape != (d, d, d):
        raise GeometryError("frame coefficients must be dim^3")
    E = frame.matrix()
    det_min, k = frame.determinant_residual()
    if det_min <= 1e-10:
        raise GeometryError(f"frame is singular near {chart.point_dict(sample_points(chart)[k])}")
    Einv = symbolic_inverse(E)

    # W[mu][b][a] = mu component of nabla_{e_a} e_b
    W = expr_array((d, d, d))
    for mu in range(d):
        for b in range(d):
            for a in range(d):
                terms = [mul(as_expr(C[c, b, a]), E[mu, c]) for c in range(d)]
                for s in range(d):
                    if E[s, a] is ZERO:
                        continue
                    terms.append(neg(mul(E[s, a], differentiate(E[mu, b], names[s]))))
                W[mu, b, a] = sum_exprs(terms)
    # contract the b slot, then the a slot
    V = expr_array((d, d, d))
    for mu in range(d):
        for nu in range(d):
            for a in range(d):
                V[mu, nu, a] = sum_exprs(
                    mul(Einv[b, nu], W[mu, b, a]) for b in range(d) if Einv[b, nu] is not ZERO
                )
    G = expr_array((d, d, d))
    for mu in range(d):
        for nu in range(d):
            for rho in range(d):
                G[mu, nu, rho] = sum_exprs(
                    mul(Einv[a, rho], V[mu, nu, a]) for a in range(d) if Einv[a, rho] is not ZERO
                )
    return ConnectionCoeffs(chart, G, symmetric=symmetric)


def change_coordinates(conn, forward, inverse, new_chart=None, points=None, tol=1e-10):
    """Transport a connection through a coordinate change.

    ``forward[c]`` gives new coordinate c in terms of the old coordinates,
    ``inverse[k]`` gives old coordinate k in terms of the new ones.  If
    ``new_chart`` is omitted the new coordinates reuse the old names and the
    domain is the bounding box of the image of the old sample points.

        Gamma'^c_{ba} = (du^c/dx^k)(x(u)) [Gamma^k_{ji}(x(u)) dx^j/du^b dx^i/du^a
                                           + d^2 x^k / du^a du^b]
    """
    old = conn.chart
    d = old.dim
    forward = [as_expr(f) for f in forward]
    inverse = [as_expr(g) for g in inverse]
    if len(forward) != d or len(inverse) != d:
        raise GeometryError("coordinate change must have one expression per coordinate")
    if new_chart is None:
        img = evaluate_many(forward, old.coords, sample_points(old))
        lo, hi = img.min(axis=0), img.max(axis=0)
        pad = np.maximum(1e-3, 1e-3 * (hi - lo))
        new_chart = Chart(old.coords, tuple(zip(lo - pad, hi + pad)))
    if new_chart.dim != d:
        raise GeometryError("new chart has the wrong dimension")
    new = new_chart.coords

    pts = sample_points(new_chart) if points is None else points
    back = evaluate_many(inverse, new, pts)
    again = evaluate_many(forward, old.coords, back)
    err = np.abs(again - pts).max(axis=1) / (1.0 + np.abs(pts).max(axis=1))
    if err.max() > tol:
        k = int(np.argmax(err))
        raise GeometryError(
            f"forward(inverse(u)) != u (residual {err[k]:.3g}) at {new_chart.point_dict(pts[k])}"
        )

    Jinv = expr_array((d, d))  # dx^k/du^a
    for k in range(d):
        for a in range(d):
            Jinv[k, a] = differentiate(inverse[k], new[a])
    jac = evaluate_array(Jinv, new, pts)
    dets = np.abs(np.linalg.det(jac))
    if dets.min() <= 1e-10:
        k = int(np.argmin(dets))
        raise GeometryError(f"non-invertible Jacobian at {new_chart.point_dict(pts[k])}")

    to_old = dict(zip(old.coords, inverse))
    Jfwd = expr_array((d, d))  # du^c/dx^k at x(u)
    for c in range(d):
        for k in range(d):
            Jfwd[c, k] = substitute(differentiate(forward[c], old.coords[k]), to_old)
    g_old = np.empty((d, d, d), dtype=object)
    for idx in np.ndindex(d, d, d):
        g_old[idx] = substitute(conn.gamma[idx], to_old)

    # inner[k][b][a] = Gamma^k_{ji} J^j_b J^i_a + d_a d_b x^k
    inner = expr_array((d, d, d))
    for k in range(d):
        for b in range(d):
            for a in range(d):
                terms = [differentiate(Jinv[k, b], new[a])]
                for j in range(d):
                    if Jinv[j, b] is ZERO:
                        continue
                    for i in range(d):
                        if g_old[k, j, i] is ZERO or Jinv[i, a] is ZERO:
                            continue
                        terms.append(mul(g_old[k, j, i], mul(Jinv[j, b], Jinv[i, a])))
                inner[k, b, a] = sum_exprs(terms)
    out = expr_array((d, d, d))
    for c in range(d):
        for b in range(d):
            for a in range(d):
                out[c, b, a] = sum_exprs(
                    mul(Jfwd[c, k], inner[k, b, a])
                    for k in range(d)
                    if Jfwd[c, k] is not ZERO and inner[k, b, a] is not ZERO
                )
    return ConnectionCoeffs(new_chart, out, symmetric=conn.symmetric)


def jacobian(exprs, names):
    out = expr_array((len(exprs), len(names)))
    for r, e in enumerate(exprs):
        for c, n in enumerate(names):
            out[r, c] = differentiate(as_expr(e), n)
    return out


# ---------------------------------------------------------------------------
# parallel transport

def _transport_matrices(conn, path, ta, tb, steps):
    """System matrices M(t)^k_j = Gamma^k_{ji}(x(t)) xdot^i(t) at RK4 nodes."""
    ts = np.linspace(ta, tb, 2 * steps + 1)
    xs = path.position(ts)
    vs = path.speed(ts)
    if conn.is_zero():
        return ts, np.zeros((ts.size, conn.dim, conn.dim))
    g = conn.at(xs)
    return ts, np.einsum("nkji,ni->nkj", g, vs)


def transport_trajectory(conn, path, v0, steps=1000, ta=None, tb=None):
    """Parallel transport of v0 from x(ta) to x(tb); returns (times, vectors).

    Solves v'^k + Gamma^k_{ji}(x(t)) v^j x'^i = 0 with fixed-step RK4.  The
    default interval is the path's own [t0, t1].
    """
    _same_chart(conn, path)
    if steps < 1:
        raise GeometryError("steps must be positive")
    ta = path.t0 if ta is None else float(ta)
    tb = path.t1 if tb is None else float(tb)
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (conn.dim,):
        raise GeometryError(f"initial vector must have shape ({conn.dim},)")
    ts, mats = _transport_matrices(conn, path, ta, tb, steps)
    h = (tb - ta) / steps
    traj = _accel.rk4_linear(mats, v0, h)
    return ts[::2], traj


def parallel_transport(conn, path, v0, steps=1000):
    """Transported vector at the end of the path."""
    _, traj = transport_trajectory(conn, path, v0, steps)
    return traj[-1]


def covariant_derivative_via_transport(conn, Y, path, t_step, steps=1000, scheme="central"):
    """Finite-difference covariant derivative of Y along the path at x(t0).

    Transports Y(x(t0 +/- s)) back to x(t0) and differences:
    central  -> [tau(Y(x(t0+s))) - tau(Y(x(t0-s)))] / (2 s)
    forward  -> [tau(Y(x(t0+s))) - Y(x(t0))] / s
    """
    _same_chart(conn, Y, path)
    t0 = path.t0
    s = float(t_step)
    if s <= 0:
        raise GeometryError("t_step must be positive")

    def back(tt):
        y = Y.at(path.position([tt]))[0]
        _, traj = transport_trajectory(conn, path, y, steps, ta=tt, tb=t0)
        return traj[-1]

    if scheme == "central":
        return (back(t0 + s) - back(t0 - s)) / (2.0 * s)
    if scheme == "forward":
        y0 = Y.at(path.position([t0]))[0]
        return (back(t0 + s) - y0) / s
    raise GeometryError(f"unknown difference scheme {scheme!r}")


# ---------------------------------------------------------------------------
# affine maps

def affine_invariance_residual(conn, linear, offset, points):
    """Residual of Phi_*(nabla_X Y) = nabla_{Phi_* X} Phi_* Y for an affine map.

    Phi(p) = linear @ p + offset; X, Y range over coordinate basis fields, so
    the condition reads  L Gamma(p)(e_j, e_i) = Gamma(Phi p)(L e_j, L e_i).
    """
    L = np.asarray(linear, dtype=float)
    b = np.asarray(offset, dtype=float)
    pts = np.asarray(points, dtype=float)
    moved = pts @ L.T + b
    g = conn.at(pts)
    gm = conn.at(moved)
    lhs = np.einsum("km,nmji->nkji", L, g)
    rhs = np.einsum("nkqp,qj,pi->nkji", gm, L, L)
    return max_abs(lhs - rhs)
