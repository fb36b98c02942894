"""Cotangent bundles: canonical structure, lifted connections and actions.

Coordinates on T*P are (x^1..x^n, y_1..y_n); index ``n + i`` is y_i.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .expr import ONE, ZERO, Var, as_expr, differentiate, expr_array, free_vars, mul, neg, sum_exprs
from .geometry import (
    Chart,
    ConnectionCoeffs,
    FrameField,
    GeometryError,
    VectorFieldExpr,
    affine_invariance_residual,
    current_seed,
    eval_on,
    frame_to_coordinate_connection,
    max_abs,
    sample_points,
    symmetric_part,
)
from .symplectic import TwoFormField, compatibility_residual, symplectize


@dataclass(frozen=True)
class CotangentChart:
    base: Chart
    total: Chart

    @property
    def n(self):
        return self.base.dim

    def x(self, i):
        return Var(self.total.coords[i])

    def y(self, i):
        return Var(self.total.coords[self.n + i])


def fiber_name(base_name):
    m = re.fullmatch(r"x(\d\w*)", base_name)
    return "y" + m.group(1) if m else "y_" + base_name


def cotangent_chart(base, fiber_domain=None):
    """T*P chart over ``base``; fibre coordinates reuse the base domain by default."""
    ys = tuple(fiber_name(c) for c in base.coords)
    clash = set(ys) & set(base.coords)
    if clash:
        raise GeometryError(f"fibre coordinate names clash with base names: {sorted(clash)}")
    fdom = base.domain if fiber_domain is None else tuple(fiber_domain)
    return CotangentChart(base, Chart(base.coords + ys, base.domain + tuple(fdom)))


def standard_cotangent_chart(n, lo=-1.0, hi=1.0):
    return cotangent_chart(Chart.box([f"x{i + 1}" for i in range(n)], lo, hi))


def liouville_form(cc):
    """lambda = y_i dx^i as a component tuple on the total chart."""
    n = cc.n
    return tuple(cc.y(i) for i in range(n)) + (ZERO,) * n


def canonical_symplectic_form(cc):
    """omega = dx^i ^ dy_i."""
    n = cc.n
    return TwoFormField.from_upper(cc.total, {(i, n + i): ONE for i in range(n)}, kind="symplectic", rank=2 * n)


def one_form_exterior_derivative(chart, alpha):
    """(d alpha)_{ij} = d_i alpha_j - d_j alpha_i."""
    d = chart.dim
    names = chart.coords
    out = expr_array((d, d))
    for i in range(d):
        for j in range(d):
            if i != j:
                out[i, j] = differentiate(alpha[j], names[i]) - differentiate(alpha[i], names[j])
    return out


def horizontal_frame(base_conn, cc):
    """Frame {X_1..X_n, d/dy_1..d/dy_n}, X_i = d/dx^i + Gamma^s_{ik} y_s d/dy_k."""
    if base_conn.chart != cc.base:
        raise GeometryError("base connection is not on the base chart")
    n = cc.n
    g = base_conn.gamma
    vectors = []
    for i in range(n):
        comps = [ONE if m == i else ZERO for m in range(n)]
        for k in range(n):
            comps.append(sum_exprs(mul(g[s, i, k], cc.y(s)) for s in range(n) if g[s, i, k] is not ZERO))
        vectors.append(VectorFieldExpr(cc.total, tuple(comps)))
    for i in range(n):
        vectors.append(VectorFieldExpr.coordinate(cc.total, n + i))
    return FrameField(cc.total, tuple(vectors))


def lift_frame_coefficients(base_conn, cc):
    """Coefficients of the lifted connection in the horizontal frame.

    nabla_{X_i} X_j = Gamma^k_{ji} X_k,  nabla_{X_i} dy_j = -Gamma^j_{ik} dy_k,
    and every derivative along a vertical direction vanishes.
    """
    n = cc.n
    g = base_conn.gamma
    C = expr_array((2 * n, 2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                C[k, j, i] = g[k, j, i]
                C[n + k, n + j, i] = neg(g[j, i, k])
    return C


def lift_connection(base_conn, cc):
    """The omega-compatible lift of a base connection to T*P (may have torsion)."""
    frame = horizontal_frame(base_conn, cc)
    return frame_to_coordinate_connection(frame, lift_frame_coefficients(base_conn, cc))


def build_affine_symplectic_connection(base_conn, cc, points=None):
    """Lift, take the symmetric part, then apply the symplectic correction."""
    pts = sample_points(cc.base) if points is None else points
    res, k = base_conn.symmetry_residual(pts)
    if res > 1e-10:
        raise GeometryError(
            f"base connection must be torsion-free (residual {res:.3g} at {cc.base.point_dict(pts[k])})"
        )
    lifted = symmetric_part(lift_connection(base_conn, cc))
    return symplectize(lifted, canonical_symplectic_form(cc))


# ---------------------------------------------------------------------------
# lifted actions

@dataclass(frozen=True)
class LinearLiftedAction:
    generators: tuple
    lifted_generators: tuple

    @property
    def lie_algebra_dim(self):
        return len(self.generators)


def lift_action(generators, cc):
    """Cotangent lift of infinitesimal generators xi^i(x) d/dx^i.

    The lift adds the fibre part -y_s d xi^s / dx^k d/dy_k.  Generators must
    be affine in x.
    """
    n = cc.n
    names = cc.base.coords
    base_gens = []
    lifted = []
    for gen in generators:
        if isinstance(gen, VectorFieldExpr):
            if gen.chart != cc.base:
                raise GeometryError("generator is not on the base chart")
            comps = gen.components
        else:
            comps = tuple(as_expr(c) for c in gen)
            gen = VectorFieldExpr(cc.base, comps)
        for c in comps:
            for a in names:
                for b in names:
                    if differentiate(differentiate(c, a), b) is not ZERO:
                        raise GeometryError(f"generator component {c} is not affine in the base coordinates")
            extra = free_vars(c) - set(names)
            if extra:
                raise GeometryError(f"generator depends on non-base symbols {sorted(extra)}")
        fibre = []
        for k in range(n):
            fibre.append(
                neg(sum_exprs(mul(cc.y(s), differentiate(comps[s], names[k])) for s in range(n)))
            )
        base_gens.append(gen)
        lifted.append(VectorFieldExpr(cc.total, tuple(comps) + tuple(fibre)))
    return LinearLiftedAction(tuple(base_gens), tuple(lifted))


def moment_map_lift(action, cc):
    """J_A = <y, A_P(x)> = sum_i xi^i(x) y_i for each generator."""
    out = []
    for gen in action.generators:
        out.append(sum_exprs(mul(c, cc.y(i)) for i, c in enumerate(gen.components)))
    return out


def hamiltonian_residual(action, J, cc, points=None):
    """max |i(A_M) omega - dJ_A| over generators and sample points."""
    pts = sample_points(cc.total) if points is None else points
    w = canonical_symplectic_form(cc)
    W = w.at(pts)
    names = cc.total.coords
    worst = (0.0, 0)
    for V, j in zip(action.lifted_generators, J):
        v = V.at(pts)
        contraction = np.einsum("ni,nij->nj", v, W)
        dj = eval_on(np.array([differentiate(j, c) for c in names], dtype=object), cc.total, pts)
        res = max_abs(contraction - dj)
        if res[0] > worst[0]:
            worst = res
    return worst


def lie_derivative_one_form(V, alpha, chart):
    """(L_V alpha)_i = V^j d_j alpha_i + alpha_j d_i V^j."""
    d = chart.dim
    names = chart.coords
    out = []
    for i in range(d):
        terms = [mul(V.components[j], differentiate(alpha[i], names[j])) for j in range(d)]
        terms += [mul(alpha[j], differentiate(V.components[j], names[i])) for j in range(d)]
        out.append(sum_exprs(terms))
    return out


def liouville_invariance_residual(action, cc, points=None):
    pts = sample_points(cc.total) if points is None else points
    lam = liouville_form(cc)
    worst = (0.0, 0)
    for V in action.lifted_generators:
        L = lie_derivative_one_form(V, lam, cc.total)
        res = max_abs(eval_on(np.array(L, dtype=object), cc.total, pts))
        if res[0] > worst[0]:
            worst = res
    return worst


# ---------------------------------------------------------------------------
# the scaling-translation family  x^a -> s x^a + t^a (a <= h), x^u fixed

def scaling_translation_generators(cc, h):
    """Base generators ordered as (scaling, translation_1, ..., translation_h)."""
    n = cc.n
    if not 0 <= h <= n:
        raise GeometryError(f"need 0 <= h <= n, got h={h}, n={n}")
    if h == 0:
        return []
    scaling = tuple(cc.x(a) if a < h else ZERO for a in range(n))
    gens = [VectorFieldExpr(cc.base, scaling)]
    for a in range(h):
        gens.append(VectorFieldExpr.coordinate(cc.base, a))
    return gens


def scaling_translation_element(cc, h, s, t):
    """Affine map of the lifted group element on T*P: (linear, offset)."""
    n = cc.n
    if s == 0:
        raise GeometryError("scaling parameter must be nonzero")
    t = np.asarray(t, dtype=float)
    diag = np.ones(2 * n)
    diag[:h] = s
    diag[n:n + h] = 1.0 / s
    offset = np.zeros(2 * n)
    offset[:h] = t[:h]
    return np.diag(diag), offset


def family_invariance_residual(conn, cc, h, points=None, seed=None, scales=(2.0, 0.5)):
    """Worst affine-invariance residual over finite elements of the family."""
    pts = sample_points(cc.total) if points is None else points
    rng = np.random.default_rng(current_seed() if seed is None else seed)
    worst = (0.0, 0)
    for s in scales:
        L, b = scaling_translation_element(cc, h, s, rng.uniform(-1.0, 1.0, size=h))
        res = affine_invariance_residual(conn, L, b, pts)
        if res[0] > worst[0]:
            worst = res
    return worst


# ---------------------------------------------------------------------------
# sign / index variants of the mixed lift term

LIFT_VARIANTS = ("default", "swapped lower indices", "opposite sign")


def _variant_coefficients(base_conn, cc, variant):
    n = cc.n
    g = base_conn.gamma
    C = expr_array((2 * n, 2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                C[k, j, i] = g[k, j, i]
                if variant == "default":
                    C[n + k, n + j, i] = neg(g[j, i, k])
                elif variant == "swapped lower indices":
                    C[n + k, n + j, i] = neg(g[j, k, i])
                else:
                    C[n + k, n + j, i] = g[j, i, k]
    return C


def lift_variant_compatibility(base_conn, cc, points=None, tol=1e-9):
    """For each reading of the mixed term, whether the lift is omega-compatible.

    Returns {variant: (residual, compatible, identical_to_default)}.
    """
    pts = sample_points(cc.total) if points is None else points
    w = canonical_symplectic_form(cc)
    frame = horizontal_frame(base_conn, cc)
    default = _variant_coefficients(base_conn, cc, "default")
    out = {}
    for v in LIFT_VARIANTS:
        C = _variant_coefficients(base_conn, cc, v)
        res, _ = compatibility_residual(frame_to_coordinate_connection(frame, C), w, pts)
        same = all(a is b for a, b in zip(C.ravel(), default.ravel()))
        out[v] = (res, res <= tol, same)
    return out
