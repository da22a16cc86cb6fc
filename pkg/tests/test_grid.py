import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bonnetlab.errors import ConfigurationError
from bonnetlab.grid import (
    CSV_HEADER, ChartGrid, DiffScheme, d_x, d_xx, d_y, d_yy, d_z, d_zbar, d_zzbar, fd_weights,
    fft_workers, interpolate_field, laplace_beltrami, read_field_csv, refine_study, write_field_csv,
)

BOX = ChartGrid(-1.0, 1.0, -0.5, 0.5, 33, 17)
TORUS = ChartGrid(0.0, 2 * math.pi, 0.0, 2 * math.pi, 32, 32, True, True)


def test_central_weights():
    assert np.allclose(fd_weights((-1, 0, 1), 1), [-0.5, 0.0, 0.5])
    assert np.allclose(fd_weights((-1, 0, 1), 2), [1.0, -2.0, 1.0])
    assert np.allclose(fd_weights((-2, -1, 0, 1, 2), 1), [1 / 12, -2 / 3, 0, 2 / 3, -1 / 12])


def test_grid_validation_and_roundtrip():
    with pytest.raises(ConfigurationError):
        ChartGrid(0, 1, 0, 1, 4, 16)
    with pytest.raises(ConfigurationError):
        ChartGrid(1, 0, 0, 1, 16, 16)
    assert ChartGrid.from_dict(BOX.to_dict()) == BOX
    assert BOX.refined().shape == (65, 33)
    assert TORUS.refined().shape == (64, 64)
    assert TORUS.compact and not BOX.compact
    assert math.isclose(BOX.refined().hx, BOX.hx / 2)


@pytest.mark.parametrize("kind,degree", [("fd2", 2), ("fd4", 4)])
def test_fd_exact_on_polynomials(kind, degree):
    X, Y = BOX.mesh()
    s = DiffScheme(kind, kind)
    f = X**degree + X * Y + Y**degree
    assert np.allclose(d_x(f, BOX, s), degree * X ** (degree - 1) + Y, atol=1e-10)
    assert np.allclose(d_yy(f, BOX, s), degree * (degree - 1) * Y ** (degree - 2), atol=1e-8)
    assert np.allclose(d_xx(f, BOX, s), degree * (degree - 1) * X ** (degree - 2), atol=1e-8)


def test_spectral_exact_on_trig_polynomial():
    X, Y = TORUS.mesh()
    f = np.sin(3 * X) * np.cos(2 * Y)
    s = DiffScheme("spectral", "spectral")
    assert np.allclose(d_x(f, TORUS, s), 3 * np.cos(3 * X) * np.cos(2 * Y), atol=1e-12)
    assert np.allclose(d_yy(f, TORUS, s), -4 * f, atol=1e-11)
    assert np.allclose(d_y(f, TORUS, s), -2 * np.sin(3 * X) * np.sin(2 * Y), atol=1e-12)


def test_spectral_needs_periodic_axis():
    with pytest.raises(ConfigurationError):
        DiffScheme("spectral", "fd4").check(BOX)
    assert DiffScheme.auto(BOX) == DiffScheme("fd4", "fd4")
    assert DiffScheme.parse("spectral-auto", ChartGrid(0, 1, 0, 1, 16, 16, periodic_x=True)).x == "spectral"


def test_wirtinger_on_holomorphic_function():
    Z = BOX.z
    f = np.exp(Z)
    assert np.max(np.abs(d_zbar(f, BOX))) < 1e-5
    assert np.max(np.abs(d_z(f, BOX) - f)) < 1e-5
    g = np.abs(Z) ** 2
    assert np.max(np.abs(d_zzbar(g, BOX) - 1.0)) < 1e-10


@pytest.mark.parametrize("kind,expected", [("fd2", 2.0), ("fd4", 4.0)])
def test_refinement_order(kind, expected):
    def producer(g):
        Z = g.z
        return {"d_z": d_z(np.exp(Z), g, DiffScheme(kind, kind)) - np.exp(Z),
                "d_zzbar": d_zzbar(np.exp(Z).real, g, DiffScheme(kind, kind))}
    table = refine_study(producer, ChartGrid(-1, 1, -1, 1, 17, 17), levels=3)
    for c in table.values():
        assert c.status == "order"
        assert c.order > expected - 0.2


def test_refinement_reports_rounding():
    table = refine_study(lambda g: {"zero": np.zeros(g.shape)}, BOX, levels=2)
    assert table["zero"].order == "converged"
    with pytest.raises(ConfigurationError):
        refine_study(lambda g: {}, BOX, levels=1)


def test_laplace_beltrami_of_harmonic_function_vanishes():
    X, Y = BOX.mesh()
    lb = laplace_beltrami(X**2 - Y**2, 0.3 * X, BOX)
    assert np.max(np.abs(lb.value)) < 1e-9
    assert lb.max_imag < 1e-9


def test_csv_roundtrip(tmp_path):
    g = ChartGrid(0, 1, 0, 2, 8, 9)
    vals = np.arange(72).reshape(8, 9) * (1 + 0.5j) / 7
    path = tmp_path / "f.csv"
    write_field_csv(path, vals, g)
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1].startswith("0,0,0,0,")
    assert lines[2].startswith("0,1,")
    assert np.array_equal(read_field_csv(path, g), vals)


def test_interpolation_wraps_periodic_axes():
    X, Y = TORUS.mesh()
    f = np.exp(1j * X) * np.cos(Y)
    pts = np.array([0.1 + 0.2j, 2 * math.pi - 0.05 + 6.2j, 3.0 + 1.0j])
    exact = np.exp(1j * pts.real) * np.cos(pts.imag)
    assert np.max(np.abs(interpolate_field(f, TORUS, pts) - exact)) < 1e-6


def test_fft_workers_env(monkeypatch):
    monkeypatch.setenv("BONNETLAB_THREADS", "3")
    assert fft_workers() == 3
    monkeypatch.setenv("BONNETLAB_THREADS", "zero")
    with pytest.raises(ConfigurationError):
        fft_workers()


fields = st.builds(lambda a, b, c: (a, b, c), *(st.floats(-3, 3) for _ in range(3)))


@settings(max_examples=25, deadline=None)
@given(coeffs=fields, lam=st.floats(-5, 5))
def test_wirtinger_linearity(coeffs, lam):
    a, b, c = coeffs
    X, Y = BOX.mesh()
    f = a * np.sin(X) * Y + b * X**3
    g = c * np.cos(Y) + 1j * X * Y
    lhs = d_z(f + lam * g, BOX)
    rhs = d_z(f, BOX) + lam * d_z(g, BOX)
    assert np.allclose(lhs, rhs, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(coeffs=fields)
def test_wirtinger_conjugation(coeffs):
    a, b, c = coeffs
    X, Y = TORUS.mesh()
    f = a * np.exp(1j * X) + b * np.sin(Y) * 1j + c * np.cos(X + 2 * Y)
    assert np.allclose(d_zbar(np.conj(f), TORUS), np.conj(d_z(f, TORUS)), atol=1e-10)
