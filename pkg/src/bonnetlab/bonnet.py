"""Bonnet pairs, candidate mates and the no-mate verdict.

Two immersions with the same metric and mean curvature differ only in the
phase of their Hopf invariants; ``F = e^{2u}(h_mate - h)`` is then
holomorphic and ``|F + e^{2u} h| = e^{2u}|h|``. On an umbilic-free chart
with ``h_mate = h e^{ir}`` the only possible rotation is

    e^{ir} = 1 - 2 g_zzbar (g_zzbar + i L) / D,
    L = |Phi|^2 - Re Psi,   D = g_zzbar^2 + L^2,

and it must satisfy ``r_zbar = i Phi (1 - e^{-ir})`` and
``r_zzbar = -2 g_zzbar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import ContourError, InsufficientSupportError, NotACandidatePairError, NotCMCError, PreconditionError
from .grid import FD4, SPECTRAL, ChartGrid, DiffScheme, d_z, d_zbar, d_zzbar, interpolate_field
from .hopf import (
    CMC, ISOTHERMIC, KINDS, TOTALLY_NONISOTHERMIC, TOTALLY_UMBILIC, ClassifierConfig,
    LogHopfDerivatives,
)
from .invariants import ConformalInvariants, curvature_scale, nonconstancy_fraction

# --------------------------------------------------------------------------
# Deformation quadratic differential
# --------------------------------------------------------------------------


@dataclass
class DeformationDifferential:
    grid: ChartGrid
    F: np.ndarray
    holomorphy_residual: np.ndarray
    modulus_residual: np.ndarray

    @property
    def congruent(self) -> bool:
        scale = max(float(np.max(np.abs(self.F))), 1.0)
        return bool(np.max(np.abs(self.F)) <= 1e-12 * scale)

    def summary(self) -> dict:
        F = self.F
        return {
            "F_max_abs": float(np.max(np.abs(F))),
            "F_spread": float(np.max(np.abs(F - F.flat[0]))),
            "holomorphy_residual_max": float(np.max(self.holomorphy_residual)),
            "modulus_residual_max": float(np.max(self.modulus_residual)),
            "congruent": self.congruent,
        }


def deformation_differential(ci: ConformalInvariants, ci_mate: ConformalInvariants,
                             scheme: DiffScheme | None = None, tol: float = 1e-8) -> DeformationDifferential:
    """``F = e^{2u}(h_mate - h)`` with its holomorphy and modulus residuals.

    Refuses pairs whose conformal factors or mean curvatures differ by more
    than ``tol`` (relative to the curvature scale for H).
    """
    if ci.grid != ci_mate.grid:
        raise NotACandidatePairError("invariant sets live on different grids", math.inf, math.inf)
    du = float(np.max(np.abs(ci.u - ci_mate.u)))
    dH = float(np.max(np.abs(ci.H - ci_mate.H)))
    h_scale = max(1.0, math.sqrt(curvature_scale(ci)))
    if du > tol or dH > tol * h_scale:
        raise NotACandidatePairError(
            f"not a candidate Bonnet pair: max|u - u~| = {du:.3e}, max|H - H~| = {dH:.3e}", du, dH)
    scheme = scheme or DiffScheme.auto(ci.grid)
    e2u = ci.e2u
    F = e2u * (ci_mate.h - ci.h)
    hol = np.abs(d_zbar(F, ci.grid, scheme))
    mod = np.abs(np.abs(F + e2u * ci.h) - e2u * np.abs(ci.h))
    return DeformationDifferential(ci.grid, F, hol, mod)


def associate_family(ci: ConformalInvariants, theta: float, config: ClassifierConfig = ClassifierConfig(),
                     scheme: DiffScheme | None = None) -> ConformalInvariants:
    """Invariants of the theta-associate of a CMC chart: same u and H, ``h -> e^{i theta} h``."""
    ncf = nonconstancy_fraction(ci, config.nonconstancy_tol, scheme)
    if ncf > config.cmc_max_fraction:
        raise NotCMCError(
            f"mean curvature is not constant (dH != 0 on {ncf:.1%} of nodes): the Codazzi equation "
            "(e^{2u}h)_zbar = e^{2u}H_z forbids rotating h by a constant phase")
    if np.all(np.abs(ci.h) <= 1e-8 * np.sqrt(ci.H**2 + np.abs(ci.h) ** 2)):
        raise PreconditionError("totally umbilic chart: the associate family is trivial")
    rot = complex(math.cos(theta), math.sin(theta))
    meta = dict(ci.metadata, associate_theta=theta)
    return ConformalInvariants(ci.grid, ci.u.copy(), ci.H.copy(), rot * ci.h, ci.K.copy(),
                               ci.conformality_residual, meta)


# --------------------------------------------------------------------------
# Winding numbers
# --------------------------------------------------------------------------

def zero_winding(F, center: complex, radius: float, grid: ChartGrid | None = None,
                 points: int = 256, max_points: int = 1 << 16, min_modulus: float = 1e-8) -> int:
    """Number of zeros of a holomorphic ``F`` inside a circle, by phase accumulation.

    ``F`` is a callable of complex ``z`` or a node field on ``grid`` (then
    interpolated onto the contour). Principal phase increments are summed;
    the contour is refined until every increment is below pi/4 and is
    rejected if that fails or if ``|F|`` gets close to zero on it.
    """
    if grid is not None:
        field_ = np.asarray(F)
        for periodic, lo, hi, c in ((grid.periodic_x, grid.x0, grid.x1, center.real),
                                    (grid.periodic_y, grid.y0, grid.y1, center.imag)):
            if not periodic and (c - radius < lo or c + radius > hi):
                raise ContourError("contour leaves the chart")
        func: Callable = lambda z: interpolate_field(field_, grid, z)  # noqa: E731
    else:
        func = F
    n = points
    while True:
        t = 2.0 * math.pi * np.arange(n + 1) / n
        vals = np.asarray(func(center + radius * np.exp(1j * t)), dtype=complex)
        mod = np.abs(vals)
        if np.min(mod) <= min_modulus * max(float(np.max(mod)), 1e-300):
            raise ContourError(f"|F| nearly vanishes on the contour (min {np.min(mod):.3e})")
        steps = np.angle(vals[1:] / vals[:-1])
        worst = float(np.max(np.abs(steps)))
        if worst < math.pi / 4:
            break
        if n >= max_points:
            if worst >= math.pi / 2:
                raise ContourError(f"phase step {worst:.3f} too large: contour too close to a zero")
            break
        n *= 2
    total = float(np.sum(steps)) / (2.0 * math.pi)
    k = round(total)
    if abs(total - k) > 1e-6:
        raise ContourError(f"accumulated phase {total:.6f} is not an integer")
    return int(k)


# --------------------------------------------------------------------------
# Candidate mate rotation
# --------------------------------------------------------------------------

@dataclass
class CandidateRotation:
    grid: ChartGrid
    A: np.ndarray                 # unit complex, NaN on masked nodes
    r: np.ndarray                 # arg A in (0, 2 pi), NaN where degenerate or masked
    L: np.ndarray
    D: np.ndarray
    umbilic_mask: np.ndarray
    near_identity: np.ndarray     # |Delta g| below floor, so A == 1 numerically
    d_degenerate: np.ndarray      # D below its floor
    floor: float
    status: str = "ok"

    @property
    def degenerate_mask(self) -> np.ndarray:
        return (self.near_identity | self.d_degenerate) & ~self.umbilic_mask

    @property
    def active(self) -> np.ndarray:
        return ~self.umbilic_mask & ~self.degenerate_mask

    @property
    def degenerate_fraction(self) -> float:
        valid = ~self.umbilic_mask
        return float(np.mean(self.degenerate_mask[valid])) if np.any(valid) else 1.0

    @property
    def unit_modulus_error(self) -> float:
        act = self.active
        if not np.any(act):
            return 0.0
        return float(np.max(np.abs(np.abs(self.A[act]) - 1.0)))

    def summary(self) -> dict:
        act = self.active
        out = {"status": self.status, "degenerate_fraction": self.degenerate_fraction,
               "active_nodes": int(np.sum(act)), "unit_modulus_error": self.unit_modulus_error,
               "identity_distance_max": float(np.nanmax(np.abs(self.A - 1.0))) if np.any(~self.umbilic_mask) else None}
        if np.any(act):
            out["r_range"] = [float(np.min(self.r[act])), float(np.max(self.r[act]))]
        return out


DEGENERATE_STATUS = "candidate degenerate: isothermic locus"


def candidate_mate_rotation(lh: LogHopfDerivatives, floor: float) -> CandidateRotation:
    """Only possible rotation ``A = e^{ir}`` of the Hopf invariant of a mate.

    ``floor`` is the numerical zero for Delta g on this chart. Nodes where
    ``|Delta g| <= floor`` have ``A == 1`` to within noise (near-identity);
    nodes with ``D < floor_g (1 + |Psi|^2)`` (``floor_g`` the same floor in
    ``g_zzbar`` units) are D-degenerate. A fully degenerate chart is
    reported through ``status``, not raised.
    """
    mask = lh.umbilic_mask
    if np.all(mask):
        raise PreconditionError("umbilic mask covers the whole chart")
    gamma = np.where(mask, 0.0, lh.Psi.imag)
    Phi = np.where(mask, 0.0, lh.Phi)
    Psi = np.where(mask, 0.0, lh.Psi)
    L = np.abs(Phi) ** 2 - Psi.real
    D = gamma**2 + L**2
    floor_g = floor * np.exp(2.0 * lh.u) / 4.0
    near = (np.abs(gamma) <= floor_g) & ~mask
    d_deg = (D < floor_g * (1.0 + np.abs(Psi) ** 2)) & ~mask
    safeD = np.where(D > 0, D, 1.0)
    A = np.where(D > 0, 1.0 - 2.0 * gamma * (gamma + 1j * L) / safeD, 1.0 + 0j)
    # below the floor g_zzbar is numerically zero, and so is A - 1
    A = np.where(near, 1.0 + 0j, A)
    A = np.where(mask, np.nan, A)
    r = np.mod(np.angle(A), 2.0 * math.pi)
    cr = CandidateRotation(lh.grid, A, r, L, D, mask, near, d_deg, floor)
    cr.r = np.where(cr.active, r, np.nan)
    if not np.any(cr.active):
        cr.status = DEGENERATE_STATUS
    return cr


def rotation_from_angle(r: np.ndarray, lh: LogHopfDerivatives, floor: float = 0.0) -> CandidateRotation:
    """Wrap a prescribed rotation field as a CandidateRotation (for residual checks)."""
    mask = lh.umbilic_mask
    A = np.where(mask, np.nan, np.exp(1j * r))
    zero = np.zeros(lh.grid.shape, bool)
    L = np.abs(np.nan_to_num(lh.Phi)) ** 2 - np.nan_to_num(lh.Psi).real
    D = np.nan_to_num(lh.Psi).imag ** 2 + L**2
    return CandidateRotation(lh.grid, A, np.where(mask, np.nan, r), L, D, mask, zero, zero.copy(), floor)


# --------------------------------------------------------------------------
# Consistency residuals
# --------------------------------------------------------------------------

@dataclass
class MateResiduals:
    grid: ChartGrid
    support: np.ndarray
    R1: np.ndarray                    # |r_zbar - i Phi (1 - e^{-ir})|
    R3: np.ndarray                    # r_zzbar + 2 g_zzbar
    R3_imag: np.ndarray               # |Im d_z(d_zbar r)| scheme diagnostic
    R1a: np.ndarray                   # |r_zzbar|, the harmonic-r identity for isothermic charts
    laplacian_identity: np.ndarray    # Delta r + 2 Delta g
    delta_r: np.ndarray
    wrap_excluded: int
    isothermic: bool = False

    def _max(self, a):
        vals = np.abs(a[self.support])
        return float(np.max(vals)) if vals.size else 0.0

    def summary(self) -> dict:
        dr = self.delta_r[self.support]
        return {
            "support_nodes": int(np.sum(self.support)),
            "wrap_excluded": self.wrap_excluded,
            "R1_max": self._max(self.R1),
            "R3_max": self._max(self.R3),
            "R3_imag_max": self._max(self.R3_imag),
            "R1a_max": self._max(self.R1a) if self.isothermic else None,
            "laplacian_identity_max": self._max(self.laplacian_identity),
            "delta_r_sign_fractions": {"positive": float(np.mean(dr > 0)) if dr.size else None,
                                       "negative": float(np.mean(dr < 0)) if dr.size else None},
        }


def _wrap_adjacent(r: np.ndarray, grid: ChartGrid) -> np.ndarray:
    bad = np.zeros(grid.shape, bool)
    for axis, periodic in ((0, grid.periodic_x), (1, grid.periodic_y)):
        jump = np.abs(np.diff(r, axis=axis)) > math.pi
        jump = np.nan_to_num(jump, nan=False)
        lo = [slice(None)] * 2
        hi = [slice(None)] * 2
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        bad[tuple(lo)] |= jump
        bad[tuple(hi)] |= jump
        if periodic:
            first = [slice(None)] * 2
            last = [slice(None)] * 2
            first[axis] = 0
            last[axis] = -1
            j = np.abs(r[tuple(first)] - r[tuple(last)]) > math.pi
            bad[tuple(first)] |= j
            bad[tuple(last)] |= j
    return bad


def _stencil_support(valid: np.ndarray, grid: ChartGrid, scheme: DiffScheme) -> np.ndarray:
    """Nodes whose derivative stencils only touch valid nodes."""
    support = valid.copy()
    for axis, kind, periodic in ((0, scheme.x, grid.periodic_x), (1, scheme.y, grid.periodic_y)):
        if kind == SPECTRAL:
            line_ok = np.all(valid, axis=axis, keepdims=True)
            support &= np.broadcast_to(line_ok, valid.shape)
            continue
        radius = 2 if kind == FD4 else 1
        size = [1, 1]
        size[axis] = 2 * radius + 1
        struct = np.ones(size, bool)
        if periodic:
            pad = [(radius, radius) if a == axis else (0, 0) for a in range(2)]
            er = ndimage.binary_erosion(np.pad(valid, pad, mode="wrap"), structure=struct)
            sl = [slice(radius, -radius) if a == axis else slice(None) for a in range(2)]
            support &= er[tuple(sl)]
            continue
        support &= ndimage.binary_erosion(valid, structure=struct, border_value=1)
        # one-sided closures at the first/last nodes reach this far inward
        reach = 2 * radius + 2
        n = valid.shape[axis]
        for edge, band in ((slice(0, radius), slice(0, reach)), (slice(n - radius, n), slice(n - reach, n))):
            ix = [slice(None)] * 2
            ix[axis] = band
            ok = np.all(valid[tuple(ix)], axis=axis, keepdims=True)
            ix[axis] = edge
            support[tuple(ix)] &= np.broadcast_to(ok, support[tuple(ix)].shape)
    return support


def mate_consistency_residuals(lh: LogHopfDerivatives, cr: CandidateRotation,
                               scheme: DiffScheme | None = None, isothermic: bool = False,
                               min_support: int = 16) -> MateResiduals:
    """Residuals of ``r_zbar = i Phi (1 - e^{-ir})`` and ``r_zzbar = -2 g_zzbar``.

    ``r`` is differentiated directly, so nodes next to a 2 pi jump of r are
    excluded first, together with masked and degenerate nodes and every node
    whose stencil touches an excluded one.
    """
    grid = lh.grid
    scheme = scheme or DiffScheme.auto(grid)
    r = cr.r
    valid = np.isfinite(r)
    wrap = _wrap_adjacent(np.where(valid, r, np.nan), grid) & valid
    valid &= ~wrap
    support = _stencil_support(valid, grid, scheme)
    if int(np.sum(support)) < min_support:
        raise InsufficientSupportError(
            f"only {int(np.sum(support))} nodes support differentiation of r (need {min_support})")
    rf = np.where(valid, r, 0.0)
    r_zb = d_zbar(rf, grid, scheme)
    r_zzb = d_zzbar(rf, grid, scheme)
    composed = d_z(r_zb, grid, scheme)
    Phi = np.nan_to_num(lh.Phi)
    gamma = np.nan_to_num(lh.Psi).imag
    R1 = np.abs(r_zb - 1j * Phi * (1.0 - np.exp(-1j * rf)))
    R3 = r_zzb + 2.0 * gamma
    e = 4.0 * np.exp(-2.0 * lh.u)
    nan = np.full(grid.shape, np.nan)
    keep = lambda a: np.where(support, a, nan)  # noqa: E731
    return MateResiduals(grid, support, keep(R1), keep(R3), keep(np.abs(composed.imag)),
                         keep(np.abs(r_zzb)), keep(e * R3), keep(e * r_zzb), int(np.sum(wrap)), isothermic)


# --------------------------------------------------------------------------
# Verdict
# --------------------------------------------------------------------------

NO_MATE_1 = "no-mate-theorem-1"
NO_MATE_2 = "no-mate-theorem-2"
CMC_FAMILY = "cmc-associate-family-exists"
UMBILIC = "totally-umbilic"
INCONCLUSIVE = "inconclusive"
VERDICTS = (NO_MATE_1, NO_MATE_2, CMC_FAMILY, UMBILIC, INCONCLUSIVE)

REPORT_SCHEMA_VERSION = 1


@dataclass
class BonnetVerdict:
    classification: str
    compact: bool
    H_nonconstant: bool
    umbilics_discrete: bool
    simply_connected: bool
    verdict: str
    clause: int | None
    reasons: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    statistics: dict = field(default_factory=dict)

    @property
    def headline(self) -> str:
        if self.verdict == NO_MATE_1:
            return "no Bonnet mate (Theorem, clause 1: isothermic)"
        if self.verdict == NO_MATE_2:
            return "no Bonnet mate (Theorem, clause 2: totally nonisothermic)"
        if self.verdict == CMC_FAMILY:
            return "CMC: associate family exists" + ("" if self.compact else " (not compact)")
        if self.verdict == UMBILIC:
            return "totally umbilic: no-mate theorem not applicable"
        return "inconclusive: " + "; ".join(self.reasons)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "verdict": self.verdict, "clause": self.clause, "headline": self.headline,
            "hypotheses": {"classification": self.classification, "compact": self.compact,
                           "H_nonconstant": self.H_nonconstant,
                           "umbilics_discrete": self.umbilics_discrete,
                           "simply_connected": self.simply_connected},
            "reasons": list(self.reasons), "notes": list(self.notes),
            "statistics": self.statistics,
        }


def theorem_verdict(classification: str, H_nonconstant: bool, compact: bool, umbilics_discrete: bool,
                    simply_connected: bool = False, statistics: dict | None = None) -> BonnetVerdict:
    """Apply the no-mate theorem to the computed hypotheses.

    A no-mate verdict is emitted only when every hypothesis of its clause
    holds; anything else is totally-umbilic, the CMC associate case, or
    inconclusive with the failing hypotheses listed.
    """
    if classification not in KINDS:
        raise ValueError(f"unknown classification {classification!r}")
    args = dict(classification=classification, compact=bool(compact), H_nonconstant=bool(H_nonconstant),
                umbilics_discrete=bool(umbilics_discrete), simply_connected=bool(simply_connected),
                statistics=dict(statistics or {}))
    notes = ["Lawson-Tribuzy: an immersion of a compact surface cannot be proper Bonnet (cited, not computed)"]
    if classification == TOTALLY_UMBILIC:
        return BonnetVerdict(verdict=UMBILIC, clause=None, notes=notes, **args)
    if classification == CMC:
        if simply_connected:
            notes.append("associates h -> e^{i theta} h share metric and mean curvature")
            return BonnetVerdict(verdict=CMC_FAMILY, clause=None, notes=notes, **args)
        return BonnetVerdict(verdict=INCONCLUSIVE, clause=None, notes=notes,
                             reasons=["CMC chart is not simply connected: associates may not close"], **args)
    reasons = []
    if not compact:
        reasons.append("chart is not compact")
    if not H_nonconstant:
        reasons.append("mean curvature is not nonconstant on a dense set")
    if classification == ISOTHERMIC:
        if not umbilics_discrete:
            reasons.append("umbilics are not isolated")
        if not reasons:
            notes.append("candidate rotation degenerates to the identity; r would be bounded harmonic, hence constant")
            return BonnetVerdict(verdict=NO_MATE_1, clause=1, notes=notes, **args)
    elif classification == TOTALLY_NONISOTHERMIC:
        if not reasons:
            notes.append("Delta r = -2 Delta g has one sign, so +-r is subharmonic on a compact surface, hence constant")
            return BonnetVerdict(verdict=NO_MATE_2, clause=2, notes=notes, **args)
    else:
        reasons.append("mixed chart: neither isothermic nor totally nonisothermic")
    return BonnetVerdict(verdict=INCONCLUSIVE, clause=None, reasons=reasons, notes=notes, **args)
