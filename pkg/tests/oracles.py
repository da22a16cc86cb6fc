"""Independent reference values for the conformal invariants.

Everything here is computed from scratch with sympy (symbolic derivatives of
the parametrization) or scipy quadrature, without using bonnetlab.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp
from scipy.integrate import quad
from scipy.optimize import brentq

x, y = sp.symbols("x y", real=True)

PARAMETRIZATIONS = {
    "cylinder": sp.Matrix([sp.cos(x), sp.sin(x), y]),
    "catenoid": sp.Matrix([sp.cosh(y) * sp.cos(x), sp.cosh(y) * sp.sin(x), y]),
    "sphere-mercator": sp.Matrix([sp.cos(x) / sp.cosh(y), sp.sin(x) / sp.cosh(y), sp.tanh(y)]),
    "helicoid": sp.Matrix([sp.sinh(y) * sp.sin(x), -sp.sinh(y) * sp.cos(x), x]),
    "plane": sp.Matrix([x, y, 0]),
}


def _invariant_exprs(X: sp.Matrix):
    Xx, Xy = X.diff(x), X.diff(y)
    n = Xx.cross(Xy)
    n = n / sp.sqrt(n.dot(n))
    E = sp.simplify(Xx.dot(Xx))
    e2, f2, g2 = (n.dot(X.diff(x, 2)), n.dot(X.diff(x).diff(y)), n.dot(X.diff(y, 2)))
    u = sp.log(E) / 2
    H = (e2 + g2) / (2 * E)
    h = (e2 - g2 - 2 * sp.I * f2) / (2 * E)
    return u, H, h


@lru_cache(maxsize=None)
def _lambdified(name: str):
    u, H, h = _invariant_exprs(PARAMETRIZATIONS[name])
    return tuple(sp.lambdify((x, y), e, "numpy") for e in (u, H, h))


def symbolic_invariants(name: str, xs: np.ndarray, ys: np.ndarray):
    """(u, H, h, K) of a closed-form gallery surface at the given points."""
    fu, fH, fh = _lambdified(name)
    shape = np.broadcast(xs, ys).shape
    u = np.broadcast_to(np.asarray(fu(xs, ys), float), shape)
    H = np.broadcast_to(np.asarray(fH(xs, ys), float), shape)
    h = np.broadcast_to(np.asarray(fh(xs, ys), complex), shape)
    return u, H, h, H**2 - np.abs(h) ** 2


def torus_invariants(R: float, a: float, ts: np.ndarray):
    """Torus invariants in isothermal coordinates, with t(v) found by quadrature.

    Along the meridian dt/dv = a / (R + a cos v); the chart is centred at t = 0, v = 0.
    """
    v_s = sp.symbols("v", real=True)
    Xv = sp.Matrix([(R + a * sp.cos(v_s)) * sp.cos(x), (R + a * sp.cos(v_s)) * sp.sin(x), a * sp.sin(v_s)])
    X_x, X_v = Xv.diff(x), Xv.diff(v_s)
    n = X_x.cross(X_v)
    n = n / sp.sqrt(n.dot(n))
    rho = R + a * sp.cos(v_s)
    e2 = n.dot(Xv.diff(x, 2))
    g2v = n.dot(Xv.diff(v_s, 2))
    # isothermal t: X_tt . n = (dv/dt)^2 X_vv . n with dv/dt = rho / a
    g2 = g2v * (rho / a) ** 2
    E = rho**2
    fH = sp.lambdify(v_s, sp.simplify((e2 + g2) / (2 * E)), "numpy")
    fh = sp.lambdify(v_s, sp.simplify((e2 - g2) / (2 * E)), "numpy")

    def t_of_v(v):
        return quad(lambda s: a / (R + a * np.cos(s)), 0.0, v, epsabs=1e-15, epsrel=1e-13, limit=200)[0]

    T = 2 * t_of_v(np.pi)
    vs = []
    for t in np.ravel(ts):
        tt = (t + T / 2) % T - T / 2
        vs.append(brentq(lambda v: t_of_v(v) - tt, -np.pi, np.pi, xtol=1e-15, rtol=1e-15))
    v = np.reshape(vs, np.shape(ts))
    u = np.log(R + a * np.cos(v))
    H = np.asarray(fH(v), float) * np.ones_like(v)
    h = np.asarray(fh(v), float) * np.ones_like(v) + 0j
    return u, H, h, H**2 - np.abs(h) ** 2, T


def brute_force_zero_count(coeffs, center: complex, radius: float, n: int = 2000) -> int:
    """Count zeros of a polynomial in a disk, with multiplicity, on a dense grid.

    Each cell of an n x n grid over the bounding box contributes the winding
    of the polynomial around its boundary. An even ``n`` keeps the centre off
    the nodes.
    """
    p = np.poly1d(coeffs)
    xs = np.linspace(center.real - radius, center.real + radius, n)
    ys = np.linspace(center.imag - radius, center.imag + radius, n)
    Z = xs[:, None] + 1j * ys[None, :]
    A = np.angle(p(Z))

    def wrap(d):
        return (d + np.pi) % (2 * np.pi) - np.pi

    # winding around each cell: sum of wrapped phase steps along its 4 edges
    w = (wrap(A[1:, :-1] - A[:-1, :-1]) + wrap(A[1:, 1:] - A[1:, :-1])
         + wrap(A[:-1, 1:] - A[1:, 1:]) + wrap(A[:-1, :-1] - A[:-1, 1:]))
    k = np.rint(w / (2 * np.pi)).astype(int)
    cells = np.argwhere(k != 0)
    centers = (xs[cells[:, 0]] + xs[cells[:, 0] + 1]) / 2 + 1j * (ys[cells[:, 1]] + ys[cells[:, 1] + 1]) / 2
    inside = np.abs(centers - center) < radius
    return int(np.sum(k[cells[inside, 0], cells[inside, 1]]))
