"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (outside pytest's
capture) before asserting, so a plain ``pytest -v`` run shows the summary.
"""

import itertools
import math
import random

import numpy as np
import pytest
from oracles import brute_force_zero_count, symbolic_invariants
from synthetic import synthetic_log_hopf, torus_grid

from bonnetlab.bonnet import (
    NO_MATE_1, NO_MATE_2, VERDICTS, associate_family, candidate_mate_rotation, deformation_differential,
    mate_consistency_residuals, theorem_verdict, zero_winding,
)
from bonnetlab.grid import DiffScheme, refine_study
from bonnetlab.hopf import ISOTHERMIC, KINDS, HolomorphicMap, chart_invariance_check
from bonnetlab.invariants import codazzi_residual, gauss_residual, invariants_of
from bonnetlab.pipeline import analyze
from bonnetlab.surface import sample_gallery


@pytest.fixture
def announce(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    return emit


def test_criterion_1_structure_residuals(announce):
    worst = {}
    for name in ("catenoid", "cylinder", "sphere-mercator", "torus-of-revolution"):
        ci = invariants_of(sample_gallery(name, nx=128, ny=128))
        scheme = DiffScheme.parse("spectral-auto", ci.grid)
        worst[name] = max(float(np.max(gauss_residual(ci, scheme))), float(np.max(codazzi_residual(ci, scheme))))
    residuals_ok = all(v < 1e-6 for v in worst.values())

    orders = {}
    for name, kind in itertools.product(("catenoid", "sphere-mercator"), ("fd2", "fd4")):
        def producer(g, name=name, kind=kind):
            ci = invariants_of(sample_gallery(name, grid=g))
            scheme = DiffScheme("spectral", kind)
            return {"gauss": gauss_residual(ci, scheme), "codazzi": codazzi_residual(ci, scheme)}
        base = sample_gallery(name, nx=32, ny=33).grid
        for q, c in refine_study(producer, base, levels=3).items():
            orders[(name, kind, q)] = c.order
    need = {"fd2": 1.9, "fd4": 3.8}
    orders_ok = all(o == "converged" or o >= need[k] for (_, k, _), o in orders.items())
    measured = [o for o in orders.values() if o != "converged"]
    ok = residuals_ok and orders_ok and len(measured) == 4
    detail = ("max residual at 128x128: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
              + "; orders " + ", ".join(f"{n}/{k}/{q}={o if isinstance(o, str) else round(o, 2)}"
                                        for (n, k, q), o in orders.items()))
    announce(1, ok, detail)
    assert ok


def test_criterion_2_invariant_oracles(announce):
    errs = {}
    closed_form = {}
    for name in ("cylinder", "catenoid", "sphere-mercator"):
        s = sample_gallery(name)
        ci = invariants_of(s)
        X, Y = s.grid.mesh()
        u, H, h, K = symbolic_invariants(name, X, Y)
        errs[name] = max(float(np.max(np.abs(a - b))) for a, b in ((ci.u, u), (ci.H, H), (ci.h, h), (ci.K, K)))
        if name == "cylinder":
            closed_form[name] = max(np.max(np.abs(u)), np.max(np.abs(H + 0.5)), np.max(np.abs(h + 0.5)),
                                    np.max(np.abs(K)))
        elif name == "catenoid":
            closed_form[name] = max(np.max(np.abs(np.exp(2 * u) * h + 1)), np.max(np.abs(H)),
                                    np.max(np.abs(K + np.cosh(Y) ** -4)))
        else:
            closed_form[name] = max(np.max(np.abs(h)), np.max(np.abs(H + 1)), np.max(np.abs(K - 1)))
    ok = all(e < 1e-10 for e in errs.values()) and all(e < 1e-10 for e in closed_form.values())
    announce(2, ok, "max |computed - symbolic|: " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))
    assert ok


def test_criterion_3_bonnet_pair(announce):
    ci = invariants_of(sample_gallery("catenoid"))
    mate = associate_family(ci, math.pi / 2)
    du = float(np.max(np.abs(ci.u - mate.u)))
    dH = float(np.max(np.abs(ci.H - mate.H)))
    dd = deformation_differential(ci, mate)
    spread = float(np.max(np.abs(dd.F - dd.F.flat[0])))
    hol = float(np.max(dd.holomorphy_residual))
    mod = float(np.max(dd.modulus_residual))
    ok = du < 1e-14 and dH < 1e-14 and spread < 1e-12 and hol < 1e-8 and mod < 1e-10
    announce(3, ok, f"|du| {du:.1e}, |dH| {dH:.1e}, F spread {spread:.1e}, dzbar F {hol:.1e}, modulus {mod:.1e}")
    assert ok


def test_criterion_4_isothermic_detection(announce):
    s = sample_gallery("torus-of-revolution", {"R": 2.0, "a": 1.0})
    a = analyze(s, invariance=False)
    floor = a.floor.floor
    dg = float(np.nanmax(np.abs(a.log_hopf.delta_g)))
    inv = chart_invariance_check(s, HolomorphicMap.quadratic(0.1))
    ok = (dg < floor and a.classification.kind == ISOTHERMIC and a.verdict.verdict == NO_MATE_1
          and inv.residual < inv.floor)
    announce(4, ok, f"max|Delta g| {dg:.1e} < floor {floor:.1e}; {a.classification.kind}; {a.verdict.verdict}; "
                    f"invariance {inv.residual:.1e} < {inv.floor:.1e} (z- and w-chart floors "
                    f"{inv.floor_z.floor:.1e}, {inv.floor_w.floor:.1e})")
    assert ok


def test_criterion_5_candidate_rotation(announce):
    results = {}
    unit = 0.0
    for kind, order in (("fd2", 2.0), ("fd4", 4.0)):
        def producer(g, kind=kind):
            nonlocal unit
            scheme = DiffScheme(kind, kind)
            lh, _ = synthetic_log_hopf(g, scheme)
            cr = candidate_mate_rotation(lh, 1e-12)
            unit = max(unit, cr.unit_modulus_error)
            res = mate_consistency_residuals(lh, cr, scheme)
            return {"R3": res.R3[res.support], "laplacian": res.laplacian_identity[res.support]}
        for q, c in refine_study(producer, torus_grid(32), levels=3).items():
            results[(kind, q)] = (c.order, order)
    ok = all(isinstance(o, float) and o >= need - 0.2 for o, need in results.values()) and unit < 1e-10
    announce(5, ok, ", ".join(f"{k}/{q} order {o:.2f}" for (k, q), (o, _) in results.items())
             + f"; max ||A| - 1| {unit:.1e}")
    assert ok


def test_criterion_6_degeneracy_law(announce):
    charts = [("torus-of-revolution", {}), ("torus-of-revolution", {"R": 3.0, "a": 1.0}),
              ("ellipsoid-of-revolution", {}), ("ellipsoid-of-revolution", {"a": 1.0, "c": 0.6})]
    seen = []
    ok = True
    for name, params in charts:
        a = analyze(sample_gallery(name, params), invariance=False)
        if a.classification.kind != ISOTHERMIC:
            continue
        cr = a.rotation
        valid = ~cr.umbilic_mask
        full = cr.degenerate_fraction == 1.0 and bool(np.all(cr.A[valid] == 1.0))
        seen.append(f"{name}{params or ''} {cr.degenerate_fraction:.0%}")
        ok &= full
    ok &= len(seen) == len(charts)
    announce(6, ok, "degenerate fraction: " + ", ".join(seen))
    assert ok


def test_criterion_7_winding(announce):
    powers = {k: zero_winding(lambda z, k=k: z**k, 0, 1) for k in (1, 2, 3)}
    cubic = zero_winding(lambda z: z**3 - 0.1 * z, 0, 1)
    brute = brute_force_zero_count([1, 0, -0.1, 0], 0j, 1.0)
    ok = all(powers[k] == k for k in powers) and cubic == brute == 3
    announce(7, ok, f"z^k -> {powers}; z^3 - 0.1z -> {cubic} (brute force {brute})")
    assert ok


def test_criterion_8_verdict_soundness(announce):
    rng = random.Random(20260101)
    cases = list(itertools.product(KINDS, (False, True), (False, True), (False, True)))
    rng.shuffle(cases)
    bad = []
    counts = dict.fromkeys(VERDICTS, 0)
    for kind, compact, nonconst, discrete in cases:
        simply = rng.random() < 0.5
        v = theorem_verdict(kind, nonconst, compact, discrete, simply)
        counts[v.verdict] += 1
        h = v.to_dict()["hypotheses"]
        if v.verdict == NO_MATE_1 and not (h["compact"] and h["H_nonconstant"] and h["umbilics_discrete"]
                                           and h["classification"] == "isothermic"):
            bad.append((kind, compact, nonconst, discrete))
        if v.verdict == NO_MATE_2 and not (h["compact"] and h["H_nonconstant"]
                                           and h["classification"] == "totally-nonisothermic"):
            bad.append((kind, compact, nonconst, discrete))
    # each clause fires exactly on its all-true corner
    ok = not bad and len(cases) == 40 and counts[NO_MATE_1] == 1 and counts[NO_MATE_2] == 2
    announce(8, ok, f"{len(cases)} combinations, verdict counts {counts}")
    assert ok
