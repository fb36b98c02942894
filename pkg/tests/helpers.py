"""Random polynomial data shared by the test modules."""
import itertools

import numpy as np

from symred.expr import Const, Var, mul, power, sum_exprs


def monomials(names, degree):
    out = []
    for exps in itertools.product(range(degree + 1), repeat=len(names)):
        if sum(exps) <= degree:
            out.append(exps)
    return sorted(out, key=lambda e: (sum(e), e))


def poly(coeffs, names, degree):
    terms = []
    for c, exps in zip(coeffs, monomials(names, degree)):
        if c == 0.0:
            continue
        factors = [power(Var(n), e) for n, e in zip(names, exps) if e]
        m = Const(float(c))
        for f in factors:
            m = mul(m, f)
        terms.append(m)
    return sum_exprs(terms)


def random_poly(rng, names, degree=2, scale=1.0):
    k = len(monomials(names, degree))
    return poly(rng.uniform(-scale, scale, size=k), names, degree)


def random_connection_entries(rng, names, symmetric=True, degree=2, density=1.0):
    """{(k, j, i): poly}; symmetric in (j, i) when requested."""
    d = len(names)
    entries = {}
    for k in range(d):
        for i in range(d):
            for j in range(d):
                if symmetric and j > i:
                    continue
                if rng.random() > density:
                    continue
                p = random_poly(rng, names, degree)
                entries[(k, j, i)] = p
                if symmetric:
                    entries[(k, i, j)] = p
    return entries


def conformal_factor(rng, names, degree=2):
    """Polynomial with values in [0.5, 2] on [-1, 1]^d: 1.25 + 0.75 g / sum|c|."""
    k = len(monomials(names, degree))
    c = rng.uniform(-1.0, 1.0, size=k)
    c = 0.75 * c / np.abs(c).sum()
    c[0] += 1.25
    return poly(c, names, degree)


def quadratic_path_components(p0, a, b, param="t"):
    """Components p0 + a t + b t^2 as expressions."""
    from symred.expr import add

    t = Var(param)
    return [
        add(add(Const(float(p)), mul(Const(float(u)), t)), mul(Const(float(v)), power(t, 2)))
        for p, u, v in zip(p0, a, b)
    ]
