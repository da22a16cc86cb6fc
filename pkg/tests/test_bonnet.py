import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_zero_count
from synthetic import synthetic_log_hopf, torus_grid

from bonnetlab.bonnet import (
    CMC_FAMILY, INCONCLUSIVE, NO_MATE_1, NO_MATE_2, UMBILIC, associate_family, candidate_mate_rotation,
    deformation_differential, mate_consistency_residuals, rotation_from_angle, theorem_verdict, zero_winding,
)
from bonnetlab.errors import (
    ContourError, InsufficientSupportError, NotACandidatePairError, NotCMCError, PreconditionError,
)
from bonnetlab.grid import ChartGrid, DiffScheme
from bonnetlab.hopf import KINDS, LogHopfDerivatives, log_hopf_derivatives, umbilic_mask
from bonnetlab.invariants import ConformalInvariants, codazzi_residual, invariants_of, structure_floor
from bonnetlab.surface import sample_gallery


@pytest.fixture(scope="module")
def catenoid():
    return invariants_of(sample_gallery("catenoid"))


def test_congruent_pair_has_zero_differential(catenoid):
    dd = deformation_differential(catenoid, catenoid)
    assert np.all(dd.F == 0) and dd.congruent


@pytest.mark.parametrize("theta", [0.3, math.pi / 2, 2.0])
def test_catenoid_associate_differential_is_constant(catenoid, theta):
    dd = deformation_differential(catenoid, associate_family(catenoid, theta))
    assert np.allclose(dd.F, 1 - np.exp(1j * theta), atol=1e-13)
    assert np.max(dd.holomorphy_residual) < 1e-8
    assert np.max(dd.modulus_residual) < 1e-10


def test_modulus_violation_is_flagged(catenoid):
    fake = ConformalInvariants(catenoid.grid, catenoid.u, catenoid.H, 1.1 * catenoid.h, catenoid.K)
    dd = deformation_differential(catenoid, fake)
    expected = 0.1 * catenoid.e2u * np.abs(catenoid.h)
    assert np.allclose(dd.modulus_residual, expected, atol=1e-12)


def test_metric_mismatch_is_refused(catenoid):
    other = ConformalInvariants(catenoid.grid, catenoid.u + 1e-3, catenoid.H, catenoid.h, catenoid.K)
    with pytest.raises(NotACandidatePairError) as info:
        deformation_differential(catenoid, other)
    assert info.value.max_u_diff == pytest.approx(1e-3)
    assert info.value.exit_code == 4


def test_associate_at_quarter_turn_is_helicoid(catenoid):
    mate = associate_family(catenoid, math.pi / 2)
    heli = invariants_of(sample_gallery("helicoid"))
    _, Y = catenoid.grid.mesh()
    assert np.allclose(mate.h, -1j / np.cosh(Y) ** 2, atol=1e-14)
    assert np.allclose(heli.h, mate.h, atol=1e-14)
    assert np.allclose(heli.u, mate.u, atol=1e-14)
    assert np.allclose(heli.H, 0.0, atol=1e-14)


def test_associate_family_period(catenoid):
    for theta in (0.0, 2 * math.pi):
        mate = associate_family(catenoid, theta)
        assert np.max(np.abs(mate.h - catenoid.h)) < 1e-14


def test_associate_congruence_circle(catenoid):
    floor = structure_floor(catenoid).floor
    for theta in np.linspace(0, 2 * math.pi, 8, endpoint=False):
        mate = associate_family(catenoid, theta)
        assert np.max(deformation_differential(catenoid, mate).holomorphy_residual) <= floor
        assert np.max(codazzi_residual(mate)) <= floor


def test_associate_family_refuses_non_cmc_and_umbilic():
    with pytest.raises(NotCMCError, match="Codazzi"):
        associate_family(invariants_of(sample_gallery("torus-of-revolution", nx=32, ny=32)), 1.0)
    with pytest.raises(PreconditionError):
        associate_family(invariants_of(sample_gallery("sphere-mercator", nx=16, ny=16)), 1.0)


def test_winding_examples():
    assert zero_winding(lambda z: z, 0, 1) == 1
    assert zero_winding(lambda z: z**3 - 0.1 * z, 0, 1) == 3
    assert zero_winding(lambda z: 1 + 0.5 * np.sin(z.real), 0, 1) == 0
    assert zero_winding(lambda z: 1 / (z - 0.2), 0, 1) == -1


def test_winding_refuses_contour_through_zero():
    with pytest.raises(ContourError):
        zero_winding(lambda z: z - 1.0, 0, 1)


def test_winding_of_grid_field():
    g = ChartGrid(-2.0, 2.0, -2.0, 2.0, 81, 81)
    F = g.z**2 - 0.25
    assert zero_winding(F, 0.0, 1.0, grid=g) == 2
    assert zero_winding(F, 1.2 + 0.0j, 0.5, grid=g) == 0
    with pytest.raises(ContourError):
        zero_winding(F, 1.8, 0.5, grid=g)


roots = st.complex_numbers(max_magnitude=1.8, allow_nan=False, allow_infinity=False)


@settings(max_examples=25, deadline=None)
@given(a=st.lists(roots, min_size=1, max_size=3), b=st.lists(roots, min_size=1, max_size=3))
def test_winding_additivity(a, b):
    # keep every root well away from the unit circle
    if any(abs(abs(r) - 1.0) < 0.05 for r in a + b):
        return
    f1 = np.poly1d(a, r=True)
    f2 = np.poly1d(b, r=True)
    n1, n2 = zero_winding(f1, 0, 1), zero_winding(f2, 0, 1)
    assert zero_winding(lambda z: f1(z) * f2(z), 0, 1) == n1 + n2
    assert n1 == sum(abs(r) < 1 for r in a)


def test_winding_matches_brute_force_count():
    assert zero_winding(lambda z: z**3 - 0.1 * z, 0, 1) == brute_force_zero_count([1, 0, -0.1, 0], 0j, 1.0)


def _lh_from(Phi, Psi, grid):
    shape = grid.shape
    z = np.zeros(shape, bool)
    u = np.zeros(shape)
    return LogHopfDerivatives(grid, u, Phi, Psi, 4 * Psi.imag, z, z.copy())


def test_rotation_when_g_equals_l():
    grid = ChartGrid(0, 1, 0, 1, 8, 8)
    Phi = np.full(grid.shape, 1.0 + 0.5j)
    L = 0.8
    # L = |Phi|^2 - Re Psi with Im Psi = L
    Psi = np.full(grid.shape, complex(abs(Phi[0, 0]) ** 2 - L, L))
    cr = candidate_mate_rotation(_lh_from(Phi, Psi, grid), 1e-12)
    assert np.allclose(cr.A, -1j, atol=1e-15)
    assert np.allclose(cr.r, 1.5 * math.pi, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(phi=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       psi=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_rotation_has_unit_modulus(phi, psi):
    grid = ChartGrid(0, 1, 0, 1, 8, 8)
    cr = candidate_mate_rotation(_lh_from(np.full(grid.shape, phi), np.full(grid.shape, psi), grid), 1e-12)
    assert cr.unit_modulus_error < 1e-10
    act = cr.active
    assert np.all((cr.r[act] > 0) & (cr.r[act] < 2 * math.pi))


@pytest.mark.parametrize("name", ["torus-of-revolution", "ellipsoid-of-revolution"])
def test_isothermic_charts_are_fully_degenerate(name):
    ci = invariants_of(sample_gallery(name))
    rep = umbilic_mask(ci)
    lh = log_hopf_derivatives(ci, rep)
    cr = candidate_mate_rotation(lh, structure_floor(ci).floor)
    assert cr.degenerate_fraction == 1.0
    assert np.all(cr.A[~rep.mask] == 1.0)
    assert cr.status.startswith("candidate degenerate")


def test_perturbed_torus_unit_modulus():
    ci = invariants_of(sample_gallery("perturbed-torus"))
    lh = log_hopf_derivatives(ci, umbilic_mask(ci))
    cr = candidate_mate_rotation(lh, structure_floor(ci).floor)
    assert 0 < cr.degenerate_fraction < 1
    assert cr.unit_modulus_error < 1e-10


def test_synthetic_rotation_is_recovered():
    grid = torus_grid(64)
    scheme = DiffScheme("fd4", "fd4")
    lh, r = synthetic_log_hopf(grid, scheme)
    cr = candidate_mate_rotation(lh, 1e-12)
    assert np.max(np.abs(cr.r - r)[cr.active]) < 1e-6
    res = mate_consistency_residuals(lh, cr, scheme)
    s = res.summary()
    assert s["R1_max"] < 1e-3 and s["R3_max"] < 1e-3 and s["laplacian_identity_max"] < 1e-2


def test_constant_rotation_on_isothermic_chart():
    ci = invariants_of(sample_gallery("torus-of-revolution", nx=32, ny=32))
    lh = log_hopf_derivatives(ci, umbilic_mask(ci))
    scheme = DiffScheme("fd4", "fd4")
    cr = rotation_from_angle(np.full(ci.grid.shape, 2.0), lh)
    res = mate_consistency_residuals(lh, cr, scheme, isothermic=True)
    assert res.summary()["R1a_max"] < 1e-12


def test_wrap_adjacent_nodes_are_excluded():
    grid = torus_grid(32)
    scheme = DiffScheme("fd4", "fd4")
    lh, _ = synthetic_log_hopf(grid, scheme)
    X, _ = grid.mesh()
    # a 2 pi branch jump inside the chart, near x = 2 pi - 2
    cr = rotation_from_angle(np.mod(X + 2.0, 2 * math.pi) + 1e-3, lh)
    res = mate_consistency_residuals(lh, cr, scheme)
    assert res.wrap_excluded > 0
    jump_col = np.argmax(np.abs(np.diff(cr.r[:, 0])))
    assert not np.any(res.support[jump_col - 1:jump_col + 3])


def test_insufficient_support():
    grid = torus_grid(16)
    lh, _ = synthetic_log_hopf(grid, DiffScheme("fd4", "fd4"))
    r = np.full(grid.shape, np.nan)
    r[5:8, 5:8] = 2.0
    with pytest.raises(InsufficientSupportError):
        mate_consistency_residuals(lh, rotation_from_angle(r, lh), DiffScheme("fd4", "fd4"))


def test_verdict_examples():
    assert theorem_verdict("isothermic", True, True, True).verdict == NO_MATE_1
    assert theorem_verdict("totally-nonisothermic", True, True, False).verdict == NO_MATE_2
    assert theorem_verdict("cmc", False, False, True, simply_connected=True).verdict == CMC_FAMILY
    assert theorem_verdict("totally-umbilic", False, True, False).verdict == UMBILIC
    v = theorem_verdict("mixed", True, True, True)
    assert v.verdict == INCONCLUSIVE and v.reasons
    v = theorem_verdict("isothermic", True, False, True)
    assert v.verdict == INCONCLUSIVE and "chart is not compact" in v.reasons


@pytest.mark.parametrize("kind,compact,nonconst,discrete",
                         list(itertools.product(KINDS, (False, True), (False, True), (False, True))))
def test_verdict_soundness(kind, compact, nonconst, discrete):
    v = theorem_verdict(kind, nonconst, compact, discrete)
    d = v.to_dict()
    if v.verdict == NO_MATE_1:
        assert kind == "isothermic" and compact and nonconst and discrete
    if v.verdict == NO_MATE_2:
        assert kind == "totally-nonisothermic" and compact and nonconst
    if v.verdict == INCONCLUSIVE:
        assert d["reasons"]
    assert d["clause"] in (None, 1, 2)
