"""Conformal invariants (u, H, h, K) of a chart and structure-equation residuals.

In a conformal chart the metric is ``e^{2u} |dz|^2`` and the (2,0) part of the
second fundamental form is ``h e^{2u} dz^2 / 2``. With first form E, F, G and
second form e2, f2, g2 (taken against the unit normal ``X_x x X_y``):

    u = log(E) / 2
    H = (e2 + g2) / (2 e^{2u})
    h = (e2 - g2 - 2i f2) / (2 e^{2u})
    K = H^2 - |h|^2
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConformalityError
from .grid import ChartGrid, DiffScheme, d_z, d_zbar, d_zzbar
from .surface import ImmersionSample, unit_normal

TOL_CONF_ANALYTIC = 1e-6
TOL_CONF_NUMERICAL = 1e-3


def _dot(a, b):
    return np.einsum("...k,...k->...", a, b)


@dataclass
class FundamentalForms:
    grid: ChartGrid
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    e2: np.ndarray
    f2: np.ndarray
    g2: np.ndarray
    conformality_residual: float
    derivative_source: str = "analytic"
    metadata: dict = field(default_factory=dict)


def fundamental_forms(s: ImmersionSample) -> FundamentalForms:
    e3 = unit_normal(s)
    E, F, G = _dot(s.Xx, s.Xx), _dot(s.Xx, s.Xy), _dot(s.Xy, s.Xy)
    # second form from e3 . X_ij; equals -de3 . dX because e3 . dX = 0
    e2, f2, g2 = _dot(e3, s.Xxx), _dot(e3, s.Xxy), _dot(e3, s.Xyy)
    resid = float(np.max(np.maximum(np.abs(E - G), np.abs(F)) / np.maximum(E, G)))
    return FundamentalForms(s.grid, E, F, G, e2, f2, g2, resid, s.derivative_source, dict(s.metadata))


@dataclass
class ConformalInvariants:
    grid: ChartGrid
    u: np.ndarray
    H: np.ndarray
    h: np.ndarray
    K: np.ndarray
    conformality_residual: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def e2u(self) -> np.ndarray:
        return np.exp(2.0 * self.u)

    @property
    def hopf_coefficient(self) -> np.ndarray:
        """``e^{2u} h``, the local coefficient of twice the Hopf differential."""
        return self.e2u * self.h

    def flipped(self) -> "ConformalInvariants":
        """Invariants relative to the opposite normal ``-e3``."""
        return ConformalInvariants(self.grid, self.u, -self.H, -self.h, self.K.copy(),
                                   self.conformality_residual, dict(self.metadata))

    def statistics(self) -> dict:
        def st(a):
            return {"min": float(np.min(a)), "max": float(np.max(a)), "mean": float(np.mean(a))}
        return {"u": st(self.u), "H": st(self.H), "abs_h": st(np.abs(self.h)), "K": st(self.K)}


def default_conformality_tolerance(ff: FundamentalForms) -> float:
    if "conformality_tolerance" in ff.metadata:
        return float(ff.metadata["conformality_tolerance"])
    return TOL_CONF_ANALYTIC if ff.derivative_source == "analytic" else TOL_CONF_NUMERICAL


def conformal_invariants(ff: FundamentalForms, tol_conf: float | None = None) -> ConformalInvariants:
    """Extract (u, H, h, K); refuse charts whose conformality residual exceeds ``tol_conf``."""
    tol = default_conformality_tolerance(ff) if tol_conf is None else tol_conf
    if not ff.conformality_residual < tol:
        raise ConformalityError(
            f"chart is not conformal: residual {ff.conformality_residual:.3e} >= tolerance {tol:.1e}",
            ff.conformality_residual,
        )
    e2u = ff.E
    u = 0.5 * np.log(e2u)
    H = (ff.e2 + ff.g2) / (2.0 * e2u)
    h = (ff.e2 - ff.g2 - 2j * ff.f2) / (2.0 * e2u)
    K = H**2 - np.abs(h) ** 2
    return ConformalInvariants(ff.grid, u, H, h, K, ff.conformality_residual, dict(ff.metadata))


def invariants_of(s: ImmersionSample, tol_conf: float | None = None) -> ConformalInvariants:
    return conformal_invariants(fundamental_forms(s), tol_conf)


def second_form_from_invariants(ci: ConformalInvariants):
    """Inverse of the Hopf decomposition: (e2, f2, g2) from (u, H, h)."""
    e2u = ci.e2u
    return e2u * (ci.H + ci.h.real), -e2u * ci.h.imag, e2u * (ci.H - ci.h.real)


def gauss_residual(ci: ConformalInvariants, scheme: DiffScheme | None = None) -> np.ndarray:
    """``|-4 e^{-2u} u_{z zbar} - (H^2 - |h|^2)|`` per node."""
    scheme = scheme or DiffScheme.auto(ci.grid)
    lhs = -4.0 * np.exp(-2.0 * ci.u) * d_zzbar(ci.u, ci.grid, scheme)
    return np.abs(lhs - (ci.H**2 - np.abs(ci.h) ** 2))


def codazzi_residual(ci: ConformalInvariants, scheme: DiffScheme | None = None) -> np.ndarray:
    """``|(e^{2u} h)_zbar - e^{2u} H_z|`` per node."""
    scheme = scheme or DiffScheme.auto(ci.grid)
    lhs = d_zbar(ci.hopf_coefficient, ci.grid, scheme)
    rhs = ci.e2u * d_z(ci.H, ci.grid, scheme)
    return np.abs(lhs - rhs)


def curvature_scale(ci: ConformalInvariants) -> float:
    """Largest squared principal-curvature magnitude ``max(H^2 + |h|^2)``."""
    return float(np.max(ci.H**2 + np.abs(ci.h) ** 2))


def nonconstancy_fraction(ci: ConformalInvariants, tol: float = 1e-6,
                          scheme: DiffScheme | None = None) -> float:
    """Fraction of nodes where ``|dH|_g = 2 e^{-u} |H_z|`` exceeds ``tol * scale``.

    ``scale = max(H^2 + |h|^2)`` so the test is invariant under homotheties.
    """
    scheme = scheme or DiffScheme.auto(ci.grid)
    grad = 2.0 * np.exp(-ci.u) * np.abs(d_z(ci.H, ci.grid, scheme))
    scale = curvature_scale(ci)
    if scale == 0.0:
        return 0.0
    return float(np.mean(grad > tol * scale))


@dataclass
class StructureFloor:
    gauss_max: float
    codazzi_max: float
    floor: float
    factor: float = 10.0

    def to_dict(self) -> dict:
        return {"gauss_max": self.gauss_max, "codazzi_max": self.codazzi_max,
                "factor": self.factor, "floor": self.floor}


def structure_floor(ci: ConformalInvariants, scheme: DiffScheme | None = None,
                    factor: float = 10.0, rel_min: float = 1e-12) -> StructureFloor:
    """Numerical zero for curvature-type fields on this chart and scheme.

    ``factor`` times the larger structure residual, bounded below by
    ``rel_min`` times the curvature scale so exact charts keep a positive floor.
    """
    g = float(np.max(gauss_residual(ci, scheme)))
    # e^{-3u} puts the Codazzi residual in curvature-squared units, like Gauss
    c = float(np.max(codazzi_residual(ci, scheme) * np.exp(-3.0 * ci.u)))
    floor = max(factor * max(g, c), rel_min * max(curvature_scale(ci), 1.0))
    return StructureFloor(g, c, floor, factor)
