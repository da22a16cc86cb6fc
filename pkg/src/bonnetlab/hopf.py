"""Phase analysis of the Hopf coefficient ``P = e^{2u} h = e^{G + i g}``.

No phase is ever unwrapped. Everything is computed from ratios of ``P`` and
its derivatives, which are single valued:

    Phi = P_zbar / P                         = G_zbar + i g_zbar
    Psi = d_z Phi = P_zzbar / P - P_z P_zbar / P^2
    Delta g = 4 e^{-2u} Im Psi

``Psi`` is evaluated through the expanded form so the mixed derivative uses
the full-order second-derivative stencils.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .grid import ChartGrid, DiffScheme, d_z, d_zbar, d_zzbar, interpolate_field
from .invariants import (
    ConformalInvariants, StructureFloor, invariants_of, nonconstancy_fraction, structure_floor,
)
from .surface import ImmersionSample

TOTALLY_UMBILIC = "totally-umbilic"
CMC = "cmc"
ISOTHERMIC = "isothermic"
TOTALLY_NONISOTHERMIC = "totally-nonisothermic"
MIXED = "mixed"
KINDS = (TOTALLY_UMBILIC, CMC, ISOTHERMIC, TOTALLY_NONISOTHERMIC, MIXED)


@dataclass(frozen=True)
class ClassifierConfig:
    """Thresholds behind every classification; all are echoed in reports."""

    umbilic_rel_tol: float = 1e-3      # e^{2u}|h| against its median
    umbilic_abs_tol: float = 1e-8      # |h| against sqrt(H^2 + |h|^2) per node
    discrete_max_extent: int = 4       # nodes; larger masked blobs are not "isolated"
    floor_factor: float = 10.0
    sign_fraction: float = 0.99
    nonconstancy_tol: float = 1e-6
    cmc_max_fraction: float = 0.01
    nonconstant_min_fraction: float = 0.9

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# --------------------------------------------------------------------------
# Umbilics
# --------------------------------------------------------------------------

@dataclass
class UmbilicReport:
    mask: np.ndarray
    low_confidence: np.ndarray
    components: int
    max_extent: int
    discrete: bool
    notes: list[str] = field(default_factory=list)

    @property
    def all_masked(self) -> bool:
        return bool(np.all(self.mask))

    @property
    def masked_fraction(self) -> float:
        return float(np.mean(self.mask))

    def to_dict(self) -> dict:
        return {"masked_nodes": int(np.sum(self.mask)), "masked_fraction": self.masked_fraction,
                "components": self.components, "max_extent": self.max_extent,
                "discrete": self.discrete, "notes": list(self.notes)}


def _circular_span(idx: np.ndarray, n: int, periodic: bool) -> int:
    u = np.unique(idx)
    if not periodic:
        return int(u[-1] - u[0] + 1)
    if len(u) == n:
        return n
    gaps = np.diff(np.concatenate([u, [u[0] + n]]))
    return int(n - np.max(gaps) + 1)


def _label_periodic(mask: np.ndarray, grid: ChartGrid) -> tuple[np.ndarray, int]:
    labels, count = ndimage.label(mask)
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def join(a_edge, b_edge):
        for a, b in zip(a_edge, b_edge):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    if grid.periodic_x:
        join(labels[0, :], labels[-1, :])
    if grid.periodic_y:
        join(labels[:, 0], labels[:, -1])
    roots = np.array([find(k) for k in range(count + 1)])
    merged = roots[labels]
    uniq = np.unique(merged[merged > 0])
    remap = np.zeros(count + 1, dtype=int)
    remap[uniq] = np.arange(1, len(uniq) + 1)
    return remap[merged], len(uniq)


def umbilic_mask(ci: ConformalInvariants, config: ClassifierConfig = ClassifierConfig(),
                 stencil_radius: int = 2) -> UmbilicReport:
    """Mask nodes where the Hopf coefficient is numerically zero."""
    P = np.abs(ci.hopf_coefficient)
    med = float(np.median(P))
    curv = np.sqrt(ci.H**2 + np.abs(ci.h) ** 2)
    mask = (P < config.umbilic_rel_tol * med) | (np.abs(ci.h) <= config.umbilic_abs_tol * curv)
    notes = []
    if np.all(mask):
        notes.append("every node is umbilic: totally umbilic chart, no phase analysis possible")
        return UmbilicReport(mask, mask.copy(), 1, max(ci.grid.shape), False, notes)
    labels, count = _label_periodic(mask, ci.grid)
    extent = 0
    for k in range(1, count + 1):
        ii, jj = np.nonzero(labels == k)
        extent = max(extent,
                     _circular_span(ii, ci.grid.nx, ci.grid.periodic_x),
                     _circular_span(jj, ci.grid.ny, ci.grid.periodic_y))
    discrete = extent <= config.discrete_max_extent
    struct = np.ones((2 * stencil_radius + 1,) * 2, dtype=bool)
    mode = "wrap" if ci.grid.compact else "constant"
    near = ndimage.binary_dilation(mask, structure=struct) if np.any(mask) else mask.copy()
    if mode == "wrap" and np.any(mask):
        pad = stencil_radius
        padded = np.pad(mask, pad, mode="wrap")
        near = ndimage.binary_dilation(padded, structure=struct)[pad:-pad, pad:-pad]
    excluded = ci.metadata.get("excluded_umbilics")
    if excluded:
        notes.append(f"{excluded} umbilic(s) lie outside the chart (excluded poles)")
    return UmbilicReport(mask, near & ~mask, count, extent, discrete, notes)


# --------------------------------------------------------------------------
# Log-Hopf derivatives
# --------------------------------------------------------------------------

@dataclass
class LogHopfDerivatives:
    grid: ChartGrid
    u: np.ndarray
    Phi: np.ndarray        # (G + i g)_zbar, NaN on the umbilic mask
    Psi: np.ndarray        # d_z Phi, NaN on the mask
    delta_g: np.ndarray    # 4 e^{-2u} Im Psi, NaN on the mask
    umbilic_mask: np.ndarray
    low_confidence: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return ~self.umbilic_mask

    @property
    def g_zzbar(self) -> np.ndarray:
        return self.Psi.imag


def log_hopf_from_coefficient(P, u, grid: ChartGrid, scheme: DiffScheme | None = None,
                              mask: np.ndarray | None = None,
                              low_confidence: np.ndarray | None = None) -> LogHopfDerivatives:
    """Log-derivatives of a nonvanishing complex coefficient field ``P``."""
    scheme = scheme or DiffScheme.auto(grid)
    P = np.asarray(P, dtype=complex)
    mask = np.zeros(grid.shape, bool) if mask is None else np.asarray(mask, bool)
    if np.all(mask):
        raise ConfigurationError("umbilic mask covers the whole chart; no phase analysis possible")
    Pz, Pzb, Pzzb = d_z(P, grid, scheme), d_zbar(P, grid, scheme), d_zzbar(P, grid, scheme)
    safe = np.where(mask, 1.0, P)
    Phi = Pzb / safe
    Psi = Pzzb / safe - Pz * Pzb / safe**2
    dg = 4.0 * np.exp(-2.0 * np.asarray(u)) * Psi.imag
    Phi[mask] = np.nan
    Psi[mask] = np.nan
    dg[mask] = np.nan
    lc = np.zeros(grid.shape, bool) if low_confidence is None else low_confidence
    return LogHopfDerivatives(grid, np.asarray(u, float), Phi, Psi, dg, mask, lc)


def log_hopf_derivatives(ci: ConformalInvariants, report: UmbilicReport,
                         scheme: DiffScheme | None = None) -> LogHopfDerivatives:
    return log_hopf_from_coefficient(ci.hopf_coefficient, ci.u, ci.grid, scheme,
                                     report.mask, report.low_confidence)


# --------------------------------------------------------------------------
# Holomorphic reparametrizations and chart invariance
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HolomorphicMap:
    """``w = f(z)`` with first and second complex derivatives."""

    name: str
    f: Callable
    df: Callable
    ddf: Callable

    @classmethod
    def affine(cls, a: complex, b: complex = 0.0) -> "HolomorphicMap":
        if a == 0:
            raise ConfigurationError("affine map needs a != 0")
        return cls(f"{a}*z+{b}", lambda z: a * z + b, lambda z: a + 0 * z, lambda z: 0 * z)

    @classmethod
    def rotation(cls, alpha: float) -> "HolomorphicMap":
        m = cls.affine(complex(math.cos(alpha), math.sin(alpha)))
        return cls(f"exp(i*{alpha})*z", m.f, m.df, m.ddf)

    @classmethod
    def quadratic(cls, eps: float) -> "HolomorphicMap":
        return cls(f"z+{eps}*z^2", lambda z: z + eps * z * z, lambda z: 1 + 2 * eps * z,
                   lambda z: 2 * eps + 0 * z)

    def inverse(self, w, guess, iterations: int = 50):
        z = np.array(guess, dtype=complex)
        for _ in range(iterations):
            step = (self.f(z) - w) / self.df(z)
            z = z - step
            if np.max(np.abs(step)) < 1e-15 * max(1.0, float(np.max(np.abs(z)))):
                break
        if np.max(np.abs(self.f(z) - w)) > 1e-11 * max(1.0, float(np.max(np.abs(w)))):
            raise ConfigurationError(f"{self.name}: Newton inversion did not converge")
        return z


def reparametrize(s: ImmersionSample, phi: HolomorphicMap, wgrid: ChartGrid, guess_center: complex):
    """Sample the same immersion on a uniform grid of ``w = phi(z)``."""
    if s.evaluator is None:
        raise ConfigurationError("chart invariance needs an analytic evaluator (gallery chart)")
    w = wgrid.z
    wc = phi.f(guess_center)
    z = phi.inverse(w, guess_center + (w - wc) / phi.df(guess_center))
    dfz = phi.df(z)
    if np.min(np.abs(dfz)) < 1e-10:
        raise ConfigurationError(f"{phi.name}: derivative vanishes on the chart")
    zp = 1.0 / dfz                    # dz/dw
    zpp = -phi.ddf(z) / dfz**3        # d2z/dw2
    X, Xx, Xy, Xxx, Xxy, Xyy = s.evaluator(z.real, z.imag)
    al, be = zp.real[..., None], zp.imag[..., None]
    ga, de = zpp.real[..., None], zpp.imag[..., None]
    Xp = Xx * al + Xy * be
    Xq = -Xx * be + Xy * al
    Xpp = Xxx * al**2 + 2 * Xxy * al * be + Xyy * be**2 + Xx * ga + Xy * de
    Xpq = (Xyy - Xxx) * al * be + Xxy * (al**2 - be**2) - Xx * de + Xy * ga
    Xqq = Xxx * be**2 - 2 * Xxy * al * be + Xyy * al**2 - Xx * ga - Xy * de
    ws = ImmersionSample(wgrid, X, Xp, Xq, Xpp, Xpq, Xqq, derivative_source=s.derivative_source,
                         metadata=dict(s.metadata))
    return ws, z


@dataclass
class InvarianceResult:
    map_name: str
    residual: float
    floor: float
    floor_z: StructureFloor
    floor_w: StructureFloor
    common_nodes: int
    w_grid: ChartGrid

    @property
    def passed(self) -> bool:
        return self.residual < self.floor

    def to_dict(self) -> dict:
        return {"map": self.map_name, "residual": self.residual, "floor": self.floor,
                "floor_z": self.floor_z.to_dict(), "floor_w": self.floor_w.to_dict(),
                "common_nodes": self.common_nodes, "w_grid": self.w_grid.to_dict(),
                "passed": self.passed}


def chart_invariance_check(s: ImmersionSample, phi: HolomorphicMap, scheme: DiffScheme | None = None,
                           shrink: float = 0.4, size: tuple[int, int] | None = None,
                           config: ClassifierConfig = ClassifierConfig()) -> InvarianceResult:
    """Compare Delta g in the z-chart with Delta g recomputed in the w-chart.

    The w-grid is a rectangle around ``phi(center)`` covering ``shrink`` of
    the chart's extent (scaled by ``|phi'|``); Delta g from the z-chart is
    interpolated to the preimages of the w-nodes. The floor combines both
    charts' structure-equation floors.
    """
    grid = s.grid
    scheme = scheme or DiffScheme.auto(grid)
    ci = invariants_of(s)
    rep = umbilic_mask(ci, config)
    lh = log_hopf_derivatives(ci, rep, scheme)
    fz = structure_floor(ci, scheme, config.floor_factor)

    c = complex(0.5 * (grid.x0 + grid.x1), 0.5 * (grid.y0 + grid.y1))
    wc, k = phi.f(c), abs(phi.df(c))
    hx, hy = shrink * k * 0.5 * (grid.x1 - grid.x0), shrink * k * 0.5 * (grid.y1 - grid.y0)
    nx, ny = size or grid.shape
    wgrid = ChartGrid(wc.real - hx, wc.real + hx, wc.imag - hy, wc.imag + hy, nx, ny)
    ws, zpre = reparametrize(s, phi, wgrid, c)
    for periodic, lo, hi, comp, h in ((grid.periodic_x, grid.x0, grid.x1, zpre.real, grid.hx),
                                      (grid.periodic_y, grid.y0, grid.y1, zpre.imag, grid.hy)):
        if not periodic and (comp.min() < lo or comp.max() > hi):
            raise ConfigurationError(f"{phi.name}: w-patch preimage leaves the chart")
    wscheme = DiffScheme.auto(wgrid)
    wci = invariants_of(ws)
    wrep = umbilic_mask(wci, config)
    wlh = log_hopf_derivatives(wci, wrep, wscheme)
    fw = structure_floor(wci, wscheme, config.floor_factor)

    dg = np.where(lh.umbilic_mask, 0.0, lh.delta_g)
    dg_at = interpolate_field(dg, grid, zpre)
    near_mask = interpolate_field((rep.mask | rep.low_confidence).astype(float), grid, zpre) > 1e-3
    common = ~wrep.mask & ~near_mask
    if not np.any(common):
        raise ConfigurationError("no common unmasked nodes between the two charts")
    residual = float(np.max(np.abs(dg_at[common] - wlh.delta_g[common])))
    floor = max(fz.floor, fw.floor)
    return InvarianceResult(phi.name, residual, floor, fz, fw, int(np.sum(common)), wgrid)


# --------------------------------------------------------------------------
# Classification
# --------------------------------------------------------------------------

@dataclass
class Classification:
    kind: str
    floor: float
    dg_max: float | None
    positive_fraction: float | None
    negative_fraction: float | None
    nonconstancy_fraction: float
    H_nonconstant: bool
    umbilics: dict
    umbilics_discrete: bool
    branch: str | None
    config: ClassifierConfig
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "reason": self.reason, "floor": self.floor,
            "delta_g_max_abs": self.dg_max,
            "sign_fractions": {"positive": self.positive_fraction, "negative": self.negative_fraction},
            "nonconstancy_fraction": self.nonconstancy_fraction,
            "H_nonconstant": self.H_nonconstant,
            "umbilics": self.umbilics, "umbilics_discrete": self.umbilics_discrete,
            "branch": self.branch,
            "thresholds": self.config.to_dict(),
        }


def classify(lh: LogHopfDerivatives | None, report: UmbilicReport, ncf: float, floor: float,
             config: ClassifierConfig = ClassifierConfig()) -> Classification:
    """Sort a chart into totally-umbilic / cmc / isothermic / totally-nonisothermic / mixed.

    ``ncf`` is the nonconstancy fraction of H; ``floor`` the numerical zero
    for Delta g. ``lh`` may be None only for a totally umbilic chart.
    """
    nonconst = ncf >= config.nonconstant_min_fraction
    common = dict(floor=floor, nonconstancy_fraction=ncf, H_nonconstant=nonconst,
                  umbilics=report.to_dict(), umbilics_discrete=report.discrete, config=config)
    if report.all_masked or lh is None:
        return Classification(TOTALLY_UMBILIC, dg_max=None, positive_fraction=None,
                              negative_fraction=None, branch=None,
                              reason="Hopf coefficient vanishes at every node", **common)
    valid = lh.valid
    dg = lh.delta_g[valid]
    dg_max = float(np.max(np.abs(dg)))
    pos = float(np.mean(dg > floor))
    neg = float(np.mean(dg < -floor))
    stats = dict(dg_max=dg_max, positive_fraction=pos, negative_fraction=neg)
    if ncf <= config.cmc_max_fraction:
        return Classification(CMC, branch=None, reason="mean curvature numerically constant",
                              **stats, **common)
    if dg_max < floor:
        return Classification(ISOTHERMIC, branch=None,
                              reason="|Delta g| below floor on every unmasked node", **stats, **common)
    if max(pos, neg) >= config.sign_fraction:
        branch = "delta_g<=0" if neg >= pos else "delta_g>=0"
        return Classification(TOTALLY_NONISOTHERMIC, branch=branch,
                              reason=f"single sign of Delta g on >= {config.sign_fraction:.0%} of nodes",
                              **stats, **common)
    return Classification(MIXED, branch=None,
                          reason="neither isothermic nor single-signed Delta g; no theorem clause applies",
                          **stats, **common)
