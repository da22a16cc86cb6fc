"""Immersions sampled on conformal charts.

The gallery holds closed-form surfaces with analytic first and second
derivatives. Surfaces of revolution get isothermal coordinates from
:func:`make_revolution_chart`; arbitrary charts can be read from a JSON
description plus a binary ``.npy`` table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError, DegenerateImmersionError, NonFiniteError, SchemaError
from .grid import ChartGrid, DiffScheme, d_x, d_xx, d_y, d_yy

# evaluator(x, y) -> (X, X_x, X_y, X_xx, X_xy, X_yy), each of shape x.shape + (3,)
Evaluator = Callable[[np.ndarray, np.ndarray], tuple]

DERIVATIVE_KEYS = ("X", "Xx", "Xy", "Xxx", "Xxy", "Xyy")


@dataclass
class ImmersionSample:
    grid: ChartGrid
    X: np.ndarray
    Xx: np.ndarray
    Xy: np.ndarray
    Xxx: np.ndarray
    Xxy: np.ndarray
    Xyy: np.ndarray
    derivative_source: str = "analytic"
    metadata: dict = field(default_factory=dict)
    evaluator: Evaluator | None = field(default=None, repr=False)

    def __post_init__(self):
        for key in DERIVATIVE_KEYS:
            arr = np.asarray(getattr(self, key), dtype=float)
            if arr.shape != self.grid.shape + (3,):
                raise SchemaError(f"{key} has shape {arr.shape}, expected {self.grid.shape + (3,)}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"{key} contains non-finite entries")
            setattr(self, key, arr)

    @classmethod
    def from_evaluator(cls, evaluator: Evaluator, grid: ChartGrid, **kwargs) -> "ImmersionSample":
        xs, ys = grid.mesh()
        parts = evaluator(xs, ys)
        return cls(grid, *parts, evaluator=evaluator, **kwargs)

    def scaled(self, lam: float) -> "ImmersionSample":
        """The homothetic immersion ``lam * X`` on the same chart."""
        ev = self.evaluator
        scaled_ev = None if ev is None else (lambda x, y: tuple(lam * p for p in ev(x, y)))
        return ImmersionSample(
            self.grid, *(lam * getattr(self, k) for k in DERIVATIVE_KEYS),
            derivative_source=self.derivative_source, metadata=dict(self.metadata),
            evaluator=scaled_ev,
        )


def unit_normal(s: ImmersionSample, tol: float = 1e-12) -> np.ndarray:
    """``e3 = X_x x X_y / |X_x x X_y|``; orientation fixed by the (x, y) order."""
    cross = np.cross(s.Xx, s.Xy)
    norm = np.linalg.norm(cross, axis=-1)
    bad = norm < tol
    if np.any(bad):
        i, j = (int(v) for v in np.argwhere(bad)[0])
        raise DegenerateImmersionError(
            f"degenerate immersion: |X_x x X_y| = {norm[i, j]:.3g} at node (i={i}, j={j})",
            node=(i, j),
        )
    return cross / norm[..., None]


def _stack(*comps) -> np.ndarray:
    comps = np.broadcast_arrays(*comps)
    return np.stack(comps, axis=-1)


# --------------------------------------------------------------------------
# Closed-form entries
# --------------------------------------------------------------------------

def plane_evaluator() -> Evaluator:
    def ev(x, y):
        z0 = np.zeros_like(x)
        one = np.ones_like(x)
        return (_stack(x, y, z0), _stack(one, z0, z0), _stack(z0, one, z0),
                _stack(z0, z0, z0), _stack(z0, z0, z0), _stack(z0, z0, z0))
    return ev


def cylinder_evaluator(r: float = 1.0) -> Evaluator:
    def ev(x, y):
        c, s, z0 = np.cos(x), np.sin(x), np.zeros_like(x)
        return (_stack(r * c, r * s, r * y), _stack(-r * s, r * c, z0), _stack(z0, z0, r + z0),
                _stack(-r * c, -r * s, z0), _stack(z0, z0, z0), _stack(z0, z0, z0))
    return ev


def sphere_mercator_evaluator(r: float = 1.0) -> Evaluator:
    def ev(x, y):
        c, s = np.cos(x), np.sin(x)
        sech, th = 1.0 / np.cosh(y), np.tanh(y)
        z0 = np.zeros_like(x)
        # d/dy sech = -sech th, d/dy th = sech^2, d2/dy2 sech = sech (th^2 - sech^2)
        dsech, d2sech = -sech * th, sech * (th**2 - sech**2)
        return (
            r * _stack(sech * c, sech * s, th),
            r * _stack(-sech * s, sech * c, z0),
            r * _stack(dsech * c, dsech * s, sech**2),
            r * _stack(-sech * c, -sech * s, z0),
            r * _stack(-dsech * s, dsech * c, z0),
            r * _stack(d2sech * c, d2sech * s, -2.0 * sech**2 * th),
        )
    return ev


def catenoid_evaluator(c: float = 1.0) -> Evaluator:
    def ev(x, y):
        cx, sx = np.cos(x), np.sin(x)
        ch, sh = np.cosh(y), np.sinh(y)
        z0 = np.zeros_like(x)
        return (
            c * _stack(ch * cx, ch * sx, y),
            c * _stack(-ch * sx, ch * cx, z0),
            c * _stack(sh * cx, sh * sx, 1.0 + z0),
            c * _stack(-ch * cx, -ch * sx, z0),
            c * _stack(-sh * sx, sh * cx, z0),
            c * _stack(ch * cx, ch * sx, z0),
        )
    return ev


def helicoid_evaluator(c: float = 1.0) -> Evaluator:
    def ev(x, y):
        cx, sx = np.cos(x), np.sin(x)
        ch, sh = np.cosh(y), np.sinh(y)
        z0 = np.zeros_like(x)
        return (
            c * _stack(sh * sx, -sh * cx, x),
            c * _stack(sh * cx, sh * sx, 1.0 + z0),
            c * _stack(ch * sx, -ch * cx, z0),
            c * _stack(-sh * sx, sh * cx, z0),
            c * _stack(ch * cx, ch * sx, z0),
            c * _stack(sh * sx, -sh * cx, z0),
        )
    return ev


# --------------------------------------------------------------------------
# Surfaces of revolution
# --------------------------------------------------------------------------

@dataclass
class ProfileCurve:
    """Meridian ``v -> (rho(v), zeta(v))`` with first and second derivatives."""

    rho: Callable
    drho: Callable
    ddrho: Callable
    zeta: Callable
    dzeta: Callable
    ddzeta: Callable
    v0: float
    v1: float
    closed: bool = False

    def check(self, samples: int = 2001) -> None:
        v = np.linspace(self.v0, self.v1, samples)
        if np.any(self.rho(v) <= 0):
            raise ConfigurationError("profile radius must stay positive on the v-range")
        if np.any(np.hypot(self.drho(v), self.dzeta(v)) == 0):
            raise ConfigurationError("profile speed vanishes")

    def speed(self, v):
        return np.hypot(self.drho(v), self.dzeta(v))


def circle_profile(R: float, a: float) -> ProfileCurve:
    """Meridian circle of the torus with center distance R and tube radius a."""
    return ProfileCurve(
        rho=lambda v: R + a * np.cos(v), drho=lambda v: -a * np.sin(v), ddrho=lambda v: -a * np.cos(v),
        zeta=lambda v: a * np.sin(v), dzeta=lambda v: a * np.cos(v), ddzeta=lambda v: -a * np.sin(v),
        v0=-math.pi, v1=math.pi, closed=True,
    )


def ellipse_profile(a: float, c: float, vmax: float) -> ProfileCurve:
    """Half meridian of the spheroid with equatorial radius a and polar semi-axis c."""
    return ProfileCurve(
        rho=lambda v: a * np.cos(v), drho=lambda v: -a * np.sin(v), ddrho=lambda v: -a * np.cos(v),
        zeta=lambda v: c * np.sin(v), dzeta=lambda v: c * np.cos(v), ddzeta=lambda v: -c * np.sin(v),
        v0=-vmax, v1=vmax, closed=False,
    )


class IsothermalParameter:
    """``t(v) = int_{v0}^{v} sqrt(rho'^2 + zeta'^2) / rho`` and its inverse.

    Composite Gauss-Legendre quadrature on fixed panels gives ``t`` at panel
    breaks; monotone (PCHIP) interpolation seeds the inverse, which is then
    polished by Newton steps using ``dt/dv = speed / rho`` exactly.
    """

    def __init__(self, profile: ProfileCurve, panels: int = 256, nodes: int = 20, tol: float = 1e-12):
        self.profile = profile
        self.xi, self.wi = np.polynomial.legendre.leggauss(nodes)
        self.breaks = np.linspace(profile.v0, profile.v1, panels + 1)
        self.t_breaks = self._cumulative(self.breaks)
        coarse = self._cumulative(np.linspace(profile.v0, profile.v1, panels // 2 + 1))
        err = abs(coarse[-1] - self.t_breaks[-1])
        if not np.isfinite(self.t_breaks[-1]) or err > tol * max(1.0, abs(self.t_breaks[-1])):
            raise ConfigurationError(f"isothermal quadrature failed to converge (estimate {err:.2e})")
        if np.any(np.diff(self.t_breaks) <= 0):
            raise AssertionError("isothermal parameter is not monotone")
        self._seed = PchipInterpolator(self.t_breaks, self.breaks)

    def _integrand(self, v):
        p = self.profile
        return p.speed(v) / p.rho(v)

    def _segment(self, a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        v = mid[..., None] + half[..., None] * self.xi
        return half * np.sum(self.wi * self._integrand(v), axis=-1)

    def _cumulative(self, breaks):
        return np.concatenate([[0.0], np.cumsum(self._segment(breaks[:-1], breaks[1:]))])

    @property
    def period(self) -> float:
        return float(self.t_breaks[-1])

    def t_of_v(self, v):
        v = np.asarray(v, float)
        k = np.clip(np.searchsorted(self.breaks, v, side="right") - 1, 0, len(self.breaks) - 2)
        return self.t_breaks[k] + self._segment(self.breaks[k], v)

    def v_of_t(self, t, iterations: int = 6):
        t = np.asarray(t, float)
        v = self._seed(t)
        for _ in range(iterations):
            v = v - (self.t_of_v(v) - t) / self._integrand(v)
            v = np.clip(v, self.profile.v0, self.profile.v1)
        return v


def _revolution_parts(profile: ProfileCurve, x, v):
    """Chart derivatives in (x, t) given the profile parameter v(t) at each node."""
    rho, drho, ddrho = profile.rho(v), profile.drho(v), profile.ddrho(v)
    dzeta, ddzeta = profile.dzeta(v), profile.ddzeta(v)
    s = np.hypot(drho, dzeta)
    ds = (drho * ddrho + dzeta * ddzeta) / s
    vt = rho / s
    vtt = (drho * s - rho * ds) / s**2 * vt
    cx, sx = np.cos(x), np.sin(x)
    z0 = np.zeros_like(x * v)
    X = _stack(rho * cx, rho * sx, profile.zeta(v) + z0)
    Xx = _stack(-rho * sx, rho * cx, z0)
    Xv = _stack(drho * cx, drho * sx, dzeta + z0)
    Xvv = _stack(ddrho * cx, ddrho * sx, ddzeta + z0)
    Xt = Xv * vt[..., None]
    Xxx = _stack(-rho * cx, -rho * sx, z0)
    Xxt = _stack(-drho * sx, drho * cx, z0) * vt[..., None]
    Xtt = Xvv * (vt**2)[..., None] + Xv * vtt[..., None]
    return X, Xx, Xt, Xxx, Xxt, Xtt


def revolution_evaluator(profile: ProfileCurve, v_of_t: Callable) -> Evaluator:
    def ev(x, t):
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        return _revolution_parts(profile, x, v_of_t(t))
    return ev


def make_revolution_chart(profile: ProfileCurve, nx: int, ny: int) -> ImmersionSample:
    """Isothermal chart ``(x, t) -> (rho cos x, rho sin x, zeta)`` of a revolution surface.

    ``t`` starts at 0 at ``profile.v0``; closed profiles give a doubly
    periodic chart.
    """
    profile.check()
    param = IsothermalParameter(profile)
    T = param.period
    grid = ChartGrid(0.0, 2.0 * math.pi, 0.0, T, nx, ny, True, profile.closed)

    if profile.closed:
        def v_of_t(t):
            k = np.floor(t / T)
            return param.v_of_t(t - k * T) + k * (profile.v1 - profile.v0)
    else:
        v_of_t = param.v_of_t

    ev = revolution_evaluator(profile, v_of_t)
    meta = {"compact": profile.closed, "simply_connected": False, "isothermal_period": T}
    return ImmersionSample.from_evaluator(ev, grid, metadata=meta)


def torus_v_of_t(R: float, a: float) -> Callable:
    """Closed-form inverse of the torus isothermal parameter (half-angle substitution)."""
    w = math.sqrt(R * R - a * a)
    T = 2.0 * math.pi * a / w
    p, q = math.sqrt(R + a), math.sqrt(R - a)

    def v_of_t(t):
        t = np.asarray(t, float)
        k = np.round(t / T)
        s = (t - k * T) * w / (2.0 * a)
        return 2.0 * np.arctan2(p * np.sin(s), q * np.cos(s)) + 2.0 * math.pi * k
    return v_of_t


def torus_t_of_v(R: float, a: float) -> Callable:
    w = math.sqrt(R * R - a * a)

    def t_of_v(v):
        return 2.0 * a / w * np.arctan(math.sqrt((R - a) / (R + a)) * np.tan(np.asarray(v) / 2.0))
    return t_of_v


def torus_period(R: float, a: float) -> float:
    return 2.0 * math.pi * a / math.sqrt(R * R - a * a)


def torus_evaluator(R: float = 2.0, a: float = 1.0) -> Evaluator:
    return revolution_evaluator(circle_profile(R, a), torus_v_of_t(R, a))


# --------------------------------------------------------------------------
# Perturbed torus
# --------------------------------------------------------------------------

# (amplitude, x-frequency, tube-angle frequency, phase); every term has a
# nonzero x-frequency so the tangential correction is solvable on the torus
BUMP_TERMS = ((0.08, 2, 1, 0.3), (0.05, 3, -2, 1.1), (0.03, 1, 3, -0.7))


class PerturbedTorus:
    """Torus of revolution pushed along its normal by ``eps * b``.

    A pure normal push breaks conformality at first order in ``eps``. The
    chart is therefore composed with the tangential shift
    ``(x, t) -> (x + eps*a, t + eps*c)`` where ``xi = a + i c`` solves
    ``d_zbar xi = b * h0`` (``h0`` the torus Hopf invariant), which removes the
    first-order defect; the remaining conformality error is O(eps^2) and is
    measured, not assumed.
    """

    def __init__(self, R: float = 2.0, a: float = 1.0, eps: float = 0.05, modes: int = 256):
        self.R, self.a, self.eps = R, a, eps
        self.T = torus_period(R, a)
        self.v_of_t = torus_v_of_t(R, a)
        self.kappa = 2.0 * math.pi / self.T
        self._solve_tangential(modes)

    # bump b(p, q) with tube angle s = kappa * q
    def bump(self, p, q):
        b = bp = bq = bpp = bpq = bqq = 0.0
        k = self.kappa
        for A, m, n, ph in BUMP_TERMS:
            arg = m * p + n * k * q + ph
            c, s = np.cos(arg), np.sin(arg)
            b = b + A * c
            bp = bp - A * m * s
            bq = bq - A * n * k * s
            bpp = bpp - A * m * m * c
            bpq = bpq - A * m * n * k * c
            bqq = bqq - A * (n * k) ** 2 * c
        return b, bp, bq, bpp, bpq, bqq

    def hopf0(self, q):
        v = self.v_of_t(q)
        return 0.5 * (1.0 / self.a - np.cos(v) / (self.R + self.a * np.cos(v)))

    def _solve_tangential(self, nq: int) -> None:
        q = np.arange(nq) * self.T / nq
        h0 = self.hopf0(q)
        ells = np.fft.fftfreq(nq, d=1.0 / nq)
        coeffs: dict[int, np.ndarray] = {}
        for A, m, n, ph in BUMP_TERMS:
            # A cos(m p + n s + ph) = A/2 (e^{i ph} e^{i(m p + n s)} + c.c.)
            for sign in (1, -1):
                prof = 0.5 * A * np.exp(sign * 1j * (n * self.kappa * q + ph)) * h0
                coeffs.setdefault(sign * m, np.zeros(nq, complex))
                coeffs[sign * m] += np.fft.fft(prof) / nq
        self.xi_modes = []
        for m, c in coeffs.items():
            kq = self.kappa * ells
            sol = c / (0.5 * (1j * m - kq))
            keep = np.abs(sol) > 1e-17 * np.max(np.abs(sol))
            self.xi_modes.append((m, kq[keep], sol[keep]))

    def xi(self, x, t):
        """Tangential correction and its derivatives at chart points."""
        out = [np.zeros(np.shape(x), complex) for _ in range(6)]
        for m, kq, c in self.xi_modes:
            phase = np.exp(1j * (m * np.asarray(x)[..., None] + kq * np.asarray(t)[..., None]))
            term = c * phase
            im, ik = 1j * m, 1j * kq
            out[0] += term.sum(-1)
            out[1] += (im * term).sum(-1)
            out[2] += (ik * term).sum(-1)
            out[3] += (im * im * term).sum(-1)
            out[4] += (im * ik * term).sum(-1)
            out[5] += (ik * ik * term).sum(-1)
        return out

    def _base(self, p, q):
        """Normally displaced torus S(p, q) and its derivatives."""
        v = self.v_of_t(q)
        R, a = self.R, self.a
        X, Xp, Xq, Xpp, Xpq, Xqq = _revolution_parts(circle_profile(R, a), p, v)
        rho = R + a * np.cos(v)
        vt = rho / a
        vtt = -np.sin(v) * vt  # d(rho/a)/dv * vt
        cx, sx, cv, sv = np.cos(p), np.sin(p), np.cos(v), np.sin(v)
        z0 = np.zeros_like(p * v)
        N = _stack(cv * cx, cv * sx, sv + z0)
        Np = _stack(-cv * sx, cv * cx, z0)
        Npp = _stack(-cv * cx, -cv * sx, z0)
        Nv = _stack(-sv * cx, -sv * sx, cv + z0)
        Nvv = _stack(-cv * cx, -cv * sx, -sv + z0)
        Npv = _stack(sv * sx, -sv * cx, z0)
        Nq = Nv * vt[..., None]
        Npq = Npv * vt[..., None]
        Nqq = Nvv * (vt**2)[..., None] + Nv * vtt[..., None]
        b, bp, bq, bpp, bpq, bqq = (np.asarray(f)[..., None] for f in self.bump(p, q))
        e = self.eps
        S = X + e * b * N
        Sp = Xp + e * (bp * N + b * Np)
        Sq = Xq + e * (bq * N + b * Nq)
        Spp = Xpp + e * (bpp * N + 2 * bp * Np + b * Npp)
        Spq = Xpq + e * (bpq * N + bp * Nq + bq * Np + b * Npq)
        Sqq = Xqq + e * (bqq * N + 2 * bq * Nq + b * Nqq)
        return S, Sp, Sq, Spp, Spq, Sqq

    def __call__(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        e = self.eps
        xi, xi_x, xi_t, xi_xx, xi_xt, xi_tt = self.xi(x, t)
        p, q = x + e * xi.real, t + e * xi.imag
        px, pt, qx, qt = 1 + e * xi_x.real, e * xi_t.real, e * xi_x.imag, 1 + e * xi_t.imag
        pxx, pxt, ptt = e * xi_xx.real, e * xi_xt.real, e * xi_tt.real
        qxx, qxt, qtt = e * xi_xx.imag, e * xi_xt.imag, e * xi_tt.imag
        S, Sp, Sq, Spp, Spq, Sqq = self._base(p, q)
        col = lambda f: f[..., None]  # noqa: E731
        Xx = Sp * col(px) + Sq * col(qx)
        Xt = Sp * col(pt) + Sq * col(qt)
        Xxx = Spp * col(px * px) + 2 * Spq * col(px * qx) + Sqq * col(qx * qx) + Sp * col(pxx) + Sq * col(qxx)
        Xxt = (Spp * col(px * pt) + Spq * col(px * qt + pt * qx) + Sqq * col(qx * qt)
               + Sp * col(pxt) + Sq * col(qxt))
        Xtt = Spp * col(pt * pt) + 2 * Spq * col(pt * qt) + Sqq * col(qt * qt) + Sp * col(ptt) + Sq * col(qtt)
        return S, Xx, Xt, Xxx, Xxt, Xtt


# --------------------------------------------------------------------------
# Gallery registry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    name: str
    default: float
    doc: str


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    params: tuple[Param, ...]
    description: str
    constraint: str
    # params -> (evaluator, default grid, metadata)
    builder: Callable[[dict], tuple]

    def resolve(self, params: Mapping | None) -> dict:
        params = dict(params or {})
        known = {p.name for p in self.params}
        unknown = set(params) - known
        if unknown:
            raise ConfigurationError(f"{self.name}: unknown parameter(s) {sorted(unknown)}; known {sorted(known)}")
        out = {p.name: float(params.get(p.name, p.default)) for p in self.params}
        return out

    def describe(self) -> dict:
        _, grid, meta = self.builder({p.name: p.default for p in self.params})
        return {
            "name": self.name,
            "description": self.description,
            "parameters": [{"name": p.name, "default": p.default, "doc": p.doc} for p in self.params],
            "constraint": self.constraint,
            "compact": bool(meta.get("compact", False)),
            "simply_connected": bool(meta.get("simply_connected", False)),
            "default_grid": grid.to_dict(),
        }


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigurationError(message)


TWO_PI = 2.0 * math.pi


def _plane(p):
    return plane_evaluator(), ChartGrid(-1, 1, -1, 1, 64, 64), {"compact": False, "simply_connected": True}


def _cylinder(p):
    _require(p["r"] > 0, "cylinder: r must be positive")
    grid = ChartGrid(0.0, TWO_PI, -1.0, 1.0, 64, 64, periodic_x=True)
    # associates live on the universal cover (the strip), hence simply_connected
    return cylinder_evaluator(p["r"]), grid, {"compact": False, "simply_connected": True}


def _sphere(p):
    _require(p["r"] > 0, "sphere-mercator: r must be positive")
    grid = ChartGrid(0.0, TWO_PI, -1.5, 1.5, 64, 64, periodic_x=True)
    return sphere_mercator_evaluator(p["r"]), grid, {"compact": True, "simply_connected": False,
                                                   "note": "poles lie outside the chart"}


def _catenoid(p):
    _require(p["c"] > 0, "catenoid: c must be positive")
    grid = ChartGrid(0.0, TWO_PI, -1.0, 1.0, 64, 128, periodic_x=True)
    return catenoid_evaluator(p["c"]), grid, {"compact": False, "simply_connected": True}


def _helicoid(p):
    _require(p["c"] > 0, "helicoid: c must be positive")
    grid = ChartGrid(0.0, TWO_PI, -1.0, 1.0, 64, 128)
    return helicoid_evaluator(p["c"]), grid, {"compact": False, "simply_connected": True}


def _torus(p):
    R, a = p["R"], p["a"]
    _require(0 < a < R, f"torus-of-revolution: need 0 < a < R (got R={R}, a={a})")
    T = torus_period(R, a)
    grid = ChartGrid(0.0, TWO_PI, -T / 2, T / 2, 128, 128, True, True)
    return torus_evaluator(R, a), grid, {"compact": True, "simply_connected": False}


def _ellipsoid(p):
    a, c, vmax = p["a"], p["c"], p["vmax"]
    _require(a > 0 and c > 0, "ellipsoid-of-revolution: a, c must be positive")
    _require(0 < vmax < math.pi / 2, "ellipsoid-of-revolution: need 0 < vmax < pi/2")
    prof = ellipse_profile(a, c, vmax)
    param = IsothermalParameter(prof)
    grid = ChartGrid(0.0, TWO_PI, 0.0, param.period, 64, 64, periodic_x=True)
    meta = {"compact": True, "simply_connected": False,
            "excluded_umbilics": 2 if a != c else None,
            "note": "poles (umbilics when a != c) lie outside the chart"}
    return revolution_evaluator(prof, param.v_of_t), grid, meta


def _perturbed(p):
    R, a, eps = p["R"], p["a"], p["eps"]
    _require(0 < a < R, f"perturbed-torus: need 0 < a < R (got R={R}, a={a})")
    _require(0 <= eps <= 0.2, "perturbed-torus: need 0 <= eps <= 0.2")
    ev = PerturbedTorus(R, a, eps)
    T = torus_period(R, a)
    grid = ChartGrid(0.0, TWO_PI, -T / 2, T / 2, 128, 128, True, True)
    return ev, grid, {"compact": True, "simply_connected": False, "conformality_tolerance": 1e-3}


GALLERY: dict[str, GalleryEntry] = {
    e.name: e
    for e in (
        GalleryEntry("plane", (), "X = (x, y, 0)", "none", _plane),
        GalleryEntry("cylinder", (Param("r", 1.0, "radius"),),
                     "X = r (cos x, sin x, y)", "r > 0", _cylinder),
        GalleryEntry("sphere-mercator", (Param("r", 1.0, "radius"),),
                     "X = r (sech y cos x, sech y sin x, tanh y)", "r > 0", _sphere),
        GalleryEntry("catenoid", (Param("c", 1.0, "neck radius"),),
                     "X = c (cosh y cos x, cosh y sin x, y)", "c > 0", _catenoid),
        GalleryEntry("helicoid", (Param("c", 1.0, "scale"),),
                     "X = c (sinh y sin x, -sinh y cos x, x)", "c > 0", _helicoid),
        GalleryEntry("torus-of-revolution",
                     (Param("R", 2.0, "distance from axis to tube center"), Param("a", 1.0, "tube radius")),
                     "circle of radius a about an axis at distance R, isothermal coordinates",
                     "0 < a < R", _torus),
        GalleryEntry("ellipsoid-of-revolution",
                     (Param("a", 1.0, "equatorial radius"), Param("c", 1.5, "polar semi-axis"),
                      Param("vmax", 1.2, "latitude cut-off (poles excluded)")),
                     "spheroid in isothermal coordinates, polar caps cut off",
                     "a, c > 0; 0 < vmax < pi/2", _ellipsoid),
        GalleryEntry("perturbed-torus",
                     (Param("R", 2.0, "torus center distance"), Param("a", 1.0, "tube radius"),
                      Param("eps", 0.05, "normal bump amplitude")),
                     "torus plus eps * b * e3 with a first-order conformal correction",
                     "0 < a < R; 0 <= eps <= 0.2", _perturbed),
    )
}


def gallery_entry(name: str) -> GalleryEntry:
    try:
        return GALLERY[name]
    except KeyError:
        raise ConfigurationError(f"unknown gallery entry {name!r}; known: {', '.join(GALLERY)}") from None


def sample_gallery(name: str, params: Mapping | None = None, grid: ChartGrid | None = None,
                   nx: int | None = None, ny: int | None = None) -> ImmersionSample:
    """Sample a gallery surface on ``grid`` (default: the entry's own chart)."""
    entry = gallery_entry(name)
    resolved = entry.resolve(params)
    ev, default_grid, meta = entry.builder(resolved)
    if grid is None:
        grid = default_grid
        if nx is not None or ny is not None:
            grid = grid.with_size(nx or grid.nx, ny or grid.ny)
    meta = dict(meta, name=name, params=resolved)
    return ImmersionSample.from_evaluator(ev, grid, metadata=meta)


# --------------------------------------------------------------------------
# Chart files
# --------------------------------------------------------------------------

def export_chart(sample: ImmersionSample, json_path, name: str = "chart",
                 include_derivatives: bool = True) -> Path:
    """Write ``sample`` as chart JSON plus a ``.npy`` table next to it."""
    json_path = Path(json_path)
    table_path = json_path.with_suffix(".npy")
    keys = DERIVATIVE_KEYS if include_derivatives else ("X",)
    table = np.concatenate([getattr(sample, k).reshape(-1, 3) for k in keys], axis=1)
    np.save(table_path, table)
    meta = sample.metadata
    doc = {
        "name": name,
        "grid": sample.grid.to_dict(),
        "source": {"table": {"path": table_path.name, "has_derivatives": include_derivatives}},
        "metadata": {"compact": bool(meta.get("compact", sample.grid.compact)),
                     "simply_connected": bool(meta.get("simply_connected", False))},
    }
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return json_path


def _numerical_derivatives(X: np.ndarray, grid: ChartGrid, scheme: DiffScheme):
    Xx = np.stack([d_x(X[..., k], grid, scheme) for k in range(3)], axis=-1)
    Xy = np.stack([d_y(X[..., k], grid, scheme) for k in range(3)], axis=-1)
    Xxx = np.stack([d_xx(X[..., k], grid, scheme) for k in range(3)], axis=-1)
    Xyy = np.stack([d_yy(X[..., k], grid, scheme) for k in range(3)], axis=-1)
    Xxy = np.stack([d_y(Xx[..., k], grid, scheme) for k in range(3)], axis=-1)
    return Xx, Xy, Xxx, Xxy, Xyy


def ingest_chart(path, scheme: DiffScheme | None = None) -> ImmersionSample:
    """Load a chart JSON whose source is a binary ``.npy`` table.

    Without stored derivatives the positions are differentiated on the grid
    (``derivative_source = "numerical"``).
    """
    path = Path(path)
    doc = _load_json(path)
    grid = _grid_from_doc(doc)
    source = doc.get("source", {})
    if "table" not in source:
        raise SchemaError(f"{path}: source.table missing (gallery sources go through load_chart)")
    tbl = source["table"]
    if not isinstance(tbl, dict) or "path" not in tbl:
        raise SchemaError(f"{path}: source.table.path missing")
    table_path = (path.parent / tbl["path"]).resolve()
    if not table_path.exists():
        raise SchemaError(f"{path}: table file {table_path} does not exist")
    try:
        data = np.load(table_path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise SchemaError(f"{table_path}: unreadable table ({exc})") from None
    has_der = bool(tbl.get("has_derivatives", False))
    cols = 18 if has_der else 3
    rows = grid.nx * grid.ny
    if data.ndim != 2 or data.shape != (rows, cols):
        raise SchemaError(f"{table_path}: expected shape ({rows}, {cols}), got {data.shape}")
    if not np.all(np.isfinite(data)):
        bad = int(np.argwhere(~np.all(np.isfinite(data), axis=1))[0, 0])
        raise NonFiniteError(f"{table_path}: non-finite entry at node (i={bad // grid.ny}, j={bad % grid.ny})")
    meta = dict(doc.get("metadata", {}), name=doc.get("name", path.stem))
    parts = [data[:, 3 * k:3 * k + 3].reshape(grid.shape + (3,)) for k in range(cols // 3)]
    return sample_from_table(grid, parts, meta, scheme)


def sample_from_table(grid: ChartGrid, parts: Sequence[np.ndarray], metadata: dict | None = None,
                      scheme: DiffScheme | None = None) -> ImmersionSample:
    """Build a sample from positions (one part) or positions plus derivatives (six parts)."""
    meta = dict(metadata or {})
    if len(parts) == 6:
        sample = ImmersionSample(grid, *parts, derivative_source="analytic", metadata=meta)
    elif len(parts) == 1:
        scheme = scheme or DiffScheme.auto(grid)
        derivs = _numerical_derivatives(parts[0], grid, scheme)
        meta.setdefault("conformality_tolerance", 1e-3)
        sample = ImmersionSample(grid, parts[0], *derivs, derivative_source="numerical", metadata=meta)
    else:
        raise SchemaError(f"table needs 1 or 6 vector columns, got {len(parts)}")
    unit_normal(sample)
    return sample


def coarsen_sample(sample: ImmersionSample, grid: ChartGrid, scheme: DiffScheme | None = None) -> ImmersionSample:
    """Restrict ``sample`` to a coarser ``grid`` of the same chart whose nodes are a subset.

    Numerically differentiated samples are re-differentiated on the coarse grid.
    """
    fine = sample.grid
    if (grid.x0, grid.x1, grid.y0, grid.y1, grid.periodic_x, grid.periodic_y) != \
            (fine.x0, fine.x1, fine.y0, fine.y1, fine.periodic_x, fine.periodic_y):
        raise ConfigurationError("coarse grid must cover the same chart")
    strides = []
    for n_f, n_c, periodic in ((fine.nx, grid.nx, fine.periodic_x), (fine.ny, grid.ny, fine.periodic_y)):
        num, den = (n_f, n_c) if periodic else (n_f - 1, n_c - 1)
        if den <= 0 or num % den:
            raise ConfigurationError(f"cannot coarsen {n_f} nodes to {n_c}")
        strides.append(num // den)
    sl = (slice(None, None, strides[0]), slice(None, None, strides[1]))
    meta = dict(sample.metadata)
    if sample.derivative_source == "numerical":
        return sample_from_table(grid, [sample.X[sl]], meta, scheme)
    return ImmersionSample(grid, *(getattr(sample, k)[sl] for k in DERIVATIVE_KEYS),
                           derivative_source=sample.derivative_source, metadata=meta)


def _load_json(path: Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SchemaError(f"cannot read chart file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or "grid" not in doc or "source" not in doc:
        raise SchemaError(f"{path}: chart JSON needs 'grid' and 'source'")
    return doc


def _grid_from_doc(doc: dict) -> ChartGrid:
    g = doc["grid"]
    if not isinstance(g, dict):
        raise SchemaError("grid must be an object")
    try:
        return ChartGrid.from_dict(g)
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid grid: {exc}") from None


def load_chart(path, scheme: DiffScheme | None = None) -> ImmersionSample:
    """Load any chart JSON: gallery source or table source."""
    path = Path(path)
    doc = _load_json(path)
    source = doc["source"]
    if isinstance(source, dict) and "gallery" in source:
        gal = source["gallery"]
        grid = _grid_from_doc(doc)
        sample = sample_gallery(gal["name"], gal.get("params", {}), grid=grid)
        sample.metadata.update(doc.get("metadata", {}))
        return sample
    return ingest_chart(path, scheme)


def chart_metadata(sample: ImmersionSample) -> dict:
    m = sample.metadata
    return {
        "compact": bool(m.get("compact", sample.grid.compact)),
        "simply_connected": bool(m.get("simply_connected", False)),
    }


def evaluator_points(sample: ImmersionSample, x: Sequence[float], y: Sequence[float]):
    if sample.evaluator is None:
        raise ConfigurationError("this chart has no analytic evaluator (table input)")
    return sample.evaluator(np.asarray(x, float), np.asarray(y, float))
