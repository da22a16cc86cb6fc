"""End-to-end analysis of a chart and the JSON report built from it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import __version__
from .bonnet import (
    REPORT_SCHEMA_VERSION, BonnetVerdict, CandidateRotation, MateResiduals, candidate_mate_rotation,
    mate_consistency_residuals, theorem_verdict,
)
from .errors import BonnetLabError, ConfigurationError, PreconditionError
from .grid import FD4, SPECTRAL, ChartGrid, Convergence, DiffScheme, laplace_beltrami, refine_study
from .hopf import (
    TOTALLY_NONISOTHERMIC, TOTALLY_UMBILIC, Classification, ClassifierConfig, HolomorphicMap,
    InvarianceResult, LogHopfDerivatives, UmbilicReport, chart_invariance_check, classify,
    log_hopf_derivatives, umbilic_mask,
)
from .invariants import (
    ConformalInvariants, FundamentalForms, StructureFloor, codazzi_residual, conformal_invariants,
    fundamental_forms, gauss_residual, nonconstancy_fraction, structure_floor,
)
from .surface import ImmersionSample, chart_metadata, coarsen_sample, sample_gallery

INVARIANCE_MAP = HolomorphicMap.quadratic(0.1)


def residual_scheme(scheme: DiffScheme) -> DiffScheme:
    """Scheme used to differentiate the rotation angle r.

    r is only smooth on a submask, so global spectral derivatives are
    replaced by the local fd4 stencil.
    """
    return DiffScheme(*(FD4 if k == SPECTRAL else k for k in (scheme.x, scheme.y)))


def _stats(a: np.ndarray) -> dict:
    a = np.asarray(a)
    a = a[np.isfinite(a)]
    if a.size == 0:
        return {"max": None, "mean": None}
    return {"max": float(np.max(a)), "mean": float(np.mean(a))}


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN and inf to None, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    return obj


@dataclass
class Analysis:
    sample: ImmersionSample
    scheme: DiffScheme
    config: ClassifierConfig
    forms: FundamentalForms
    invariants: ConformalInvariants
    gauss: np.ndarray
    codazzi: np.ndarray
    floor: StructureFloor
    umbilics: UmbilicReport
    log_hopf: LogHopfDerivatives | None
    classification: Classification
    rotation: CandidateRotation | None
    rotation_error: str | None
    residuals: MateResiduals | None
    residuals_error: str | None
    invariance: InvarianceResult | None
    invariance_error: str | None
    verdict: BonnetVerdict
    lb_imag: float

    @property
    def grid(self) -> ChartGrid:
        return self.sample.grid

    def fields(self) -> dict[str, np.ndarray]:
        ci = self.invariants
        dg = self.log_hopf.delta_g if self.log_hopf is not None else np.full(ci.grid.shape, np.nan)
        return {"u": ci.u, "H": ci.H, "h": ci.h, "K": ci.K, "deltag": dg}

    def report(self) -> dict:
        g = self.grid
        ci = self.invariants
        meta = self.sample.metadata
        chart = {"name": meta.get("name"), "params": meta.get("params", {}), "grid": g.to_dict(),
                 "derivative_source": self.sample.derivative_source, "metadata": chart_metadata(self.sample)}
        residuals = {
            "gauss": _stats(self.gauss), "codazzi": _stats(self.codazzi),
            "conformality": ci.conformality_residual,
            "laplace_beltrami_imag_max": self.lb_imag,
        }
        rot = {"error": self.rotation_error} if self.rotation is None else self.rotation.summary()
        mate = {"error": self.residuals_error} if self.residuals is None else self.residuals.summary()
        if self.residuals is not None or self.rotation is not None:
            mate["scheme"] = residual_scheme(self.scheme).label
        inv = {"error": self.invariance_error} if self.invariance is None else self.invariance.to_dict()
        return clean({
            "tool_version": __version__,
            "schema_version": REPORT_SCHEMA_VERSION,
            "chart": chart,
            "resolution": [g.nx, g.ny],
            "scheme": self.scheme.label,
            "invariants": ci.statistics(),
            "residuals": residuals,
            "structure_floor": self.floor.to_dict(),
            "classification": self.classification.to_dict(),
            "candidate_rotation": rot,
            "mate_residuals": mate,
            "chart_invariance": inv,
            "verdict": self.verdict.to_dict(),
            "thresholds": {
                "conformality_tolerance": meta.get("conformality_tolerance",
                                                   1e-6 if self.sample.derivative_source == "analytic" else 1e-3),
                "structure_floor": self.floor.floor,
                "floor_factor": self.floor.factor,
                "classifier": self.config.to_dict(),
            },
        })


def _verdict_statistics(cl: Classification, rot: CandidateRotation | None, res: MateResiduals | None) -> dict:
    stats = {"delta_g_max_abs": cl.dg_max, "floor": cl.floor,
             "sign_fractions": {"positive": cl.positive_fraction, "negative": cl.negative_fraction},
             "nonconstancy_fraction": cl.nonconstancy_fraction}
    if cl.kind == TOTALLY_NONISOTHERMIC:
        stats["branch"] = cl.branch
        stats["branch_note"] = ("Delta g <= 0: r is the subharmonic candidate" if cl.branch == "delta_g<=0"
                                else "Delta g >= 0: -r is the subharmonic candidate")
    if rot is not None:
        stats["candidate_degenerate_fraction"] = rot.degenerate_fraction
    if res is not None and np.any(res.support):
        dr = res.delta_r[res.support]
        r = rot.r[res.support] if rot is not None else np.array([0.0])
        # surrogate for the subharmonicity argument: sign of Delta(+-r) and spread of r
        stats["surrogate"] = {
            "r_subharmonic_fraction": float(np.mean(dr >= 0)),
            "minus_r_subharmonic_fraction": float(np.mean(dr <= 0)),
            "r_spread": float(np.max(r) - np.min(r)),
        }
    return stats


def analyze(sample: ImmersionSample, scheme: DiffScheme | None = None,
            config: ClassifierConfig = ClassifierConfig(), invariance: bool = True) -> Analysis:
    """Run the full chain from fundamental forms to the theorem verdict."""
    grid = sample.grid
    scheme = scheme or DiffScheme.auto(grid)
    scheme.check(grid)
    ff = fundamental_forms(sample)
    ci = conformal_invariants(ff)
    gauss = gauss_residual(ci, scheme)
    codazzi = codazzi_residual(ci, scheme)
    floor = structure_floor(ci, scheme, config.floor_factor)
    ncf = nonconstancy_fraction(ci, config.nonconstancy_tol, scheme)
    report = umbilic_mask(ci, config, scheme.stencil_radius())
    lh = None if report.all_masked else log_hopf_derivatives(ci, report, scheme)
    cl = classify(lh, report, ncf, floor.floor, config)

    rot = res = None
    rot_err = res_err = None
    if lh is None:
        rot_err = res_err = "totally umbilic chart"
    else:
        rot = candidate_mate_rotation(lh, floor.floor)
        rscheme = residual_scheme(scheme)
        try:
            res = mate_consistency_residuals(lh, rot, rscheme)
        except PreconditionError as exc:
            res_err = str(exc)
            if rot.status != "ok":
                res_err = rot.status

    inv = None
    inv_err = None
    if not invariance:
        inv_err = "not requested"
    elif sample.evaluator is None:
        inv_err = "no analytic evaluator for this chart"
    elif cl.kind == TOTALLY_UMBILIC:
        inv_err = "totally umbilic chart"
    else:
        try:
            inv = chart_invariance_check(sample, INVARIANCE_MAP, scheme, config=config)
        except BonnetLabError as exc:
            inv_err = str(exc)

    meta = chart_metadata(sample)
    verdict = theorem_verdict(cl.kind, cl.H_nonconstant, meta["compact"], cl.umbilics_discrete,
                              meta["simply_connected"], _verdict_statistics(cl, rot, res))
    lb = laplace_beltrami(ci.H, ci.u, grid, scheme)
    return Analysis(sample, scheme, config, ff, ci, gauss, codazzi, floor, report, lh, cl,
                    rot, rot_err, res, res_err, inv, inv_err, verdict, float(np.max(lb.imag_diagnostic)))


# --------------------------------------------------------------------------
# Convergence studies
# --------------------------------------------------------------------------

def coarsest_grid(grid: ChartGrid, levels: int) -> ChartGrid:
    """Grid whose ``levels - 1`` refinements give ``grid``."""
    f = 2 ** (levels - 1)
    sizes = []
    for n, periodic in ((grid.nx, grid.periodic_x), (grid.ny, grid.periodic_y)):
        num = n if periodic else n - 1
        if num % f:
            raise ConfigurationError(f"{n} nodes cannot be coarsened {levels - 1} times")
        sizes.append(num // f if periodic else num // f + 1)
    return grid.with_size(*sizes)


def convergence_producer(sampler: Callable[[ChartGrid], ImmersionSample], scheme_name: str,
                         config: ClassifierConfig = ClassifierConfig()):
    """Producer for :func:`refine_study` reporting the structure residuals of a chart."""
    def produce(g: ChartGrid) -> dict:
        s = sampler(g)
        scheme = DiffScheme.parse(scheme_name, g)
        ff = fundamental_forms(s)
        # coarse levels of a numerical chart may fail the gate; the study reports it instead
        ci = conformal_invariants(ff, math.inf)
        out = {"conformality": ff.conformality_residual,
               "gauss": gauss_residual(ci, scheme),
               # same curvature-squared units as the structure floor
               "codazzi": codazzi_residual(ci, scheme) * np.exp(-3.0 * ci.u)}
        rep = umbilic_mask(ci, config, scheme.stencil_radius())
        if rep.all_masked:
            return out
        if s.evaluator is not None:
            try:
                out["deltag_invariance"] = chart_invariance_check(s, INVARIANCE_MAP, scheme, config=config).residual
            except BonnetLabError:
                pass
        lh = log_hopf_derivatives(ci, rep, scheme)
        floor = structure_floor(ci, scheme, config.floor_factor).floor
        rot = candidate_mate_rotation(lh, floor)
        try:
            res = mate_consistency_residuals(lh, rot, residual_scheme(scheme))
            out["eq3"] = res.R3[res.support]
        except PreconditionError:
            pass
        return out
    return produce


def converge(sample: ImmersionSample, scheme_name: str = "spectral-auto", levels: int = 3,
             params: dict | None = None, config: ClassifierConfig = ClassifierConfig()) -> dict[str, Convergence]:
    """Refinement study of a chart.

    Gallery charts are resampled from the given grid upwards; table charts
    are subsampled from the given grid downwards.
    """
    if levels < 2:
        raise ConfigurationError("levels must be at least 2")
    meta = sample.metadata
    if sample.evaluator is not None and "name" in meta and "params" in meta:
        name, p = meta["name"], meta["params"]

        def sampler(g):
            s = sample_gallery(name, p, grid=g)
            s.metadata.update({k: v for k, v in meta.items() if k not in s.metadata})
            return s
        base = sample.grid
    else:
        base = coarsest_grid(sample.grid, levels)

        def sampler(g):
            return coarsen_sample(sample, g, DiffScheme.parse(scheme_name, g))
    table = refine_study(convergence_producer(sampler, scheme_name, config), base, levels)
    # keys only present on some levels are not a refinement series
    return {k: v for k, v in table.items() if len(v.errors) == levels}
