"""Uniform chart grids and Wirtinger differentiation kernels.

Fields are plain numpy arrays of shape ``(nx, ny)``; index ``i`` runs along
the real axis ``x`` and ``j`` along the imaginary axis ``y``, so node
``(i, j)`` sits at ``z = x[i] + 1j * y[j]``.

Periodic axes can be differentiated spectrally (FFT) or with periodic
central differences; non-periodic axes use central differences of order 2
or 4 with one-sided closures of the same order at the two ends.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
import scipy.fft
from scipy.interpolate import RectBivariateSpline

from .errors import ConfigurationError, DiagnosticFailure, NonFiniteError

FD2 = "fd2"
FD4 = "fd4"
SPECTRAL = "spectral"
KINDS = (FD2, FD4, SPECTRAL)


def fft_workers() -> int:
    """Worker count for FFTs, capped by ``BONNETLAB_THREADS``.

    Each 1-D transform is computed independently, so the result does not
    depend on the worker count.
    """
    value = os.environ.get("BONNETLAB_THREADS")
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigurationError(f"BONNETLAB_THREADS must be an integer, got {value!r}")


@dataclass(frozen=True)
class ChartGrid:
    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int
    periodic_x: bool = False
    periodic_y: bool = False

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ConfigurationError(f"grid needs nx, ny >= 8 (got {self.nx}x{self.ny})")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ConfigurationError("grid bounds must satisfy x1 > x0 and y1 > y0")

    @property
    def hx(self) -> float:
        n = self.nx if self.periodic_x else self.nx - 1
        return (self.x1 - self.x0) / n

    @property
    def hy(self) -> float:
        n = self.ny if self.periodic_y else self.ny - 1
        return (self.y1 - self.y0) / n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.hy * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def z(self) -> np.ndarray:
        X, Y = self.mesh()
        return X + 1j * Y

    @property
    def compact(self) -> bool:
        """Doubly periodic charts cover a torus."""
        return self.periodic_x and self.periodic_y

    def refined(self) -> "ChartGrid":
        """Same chart with the spacing halved on both axes."""
        nx = 2 * self.nx if self.periodic_x else 2 * (self.nx - 1) + 1
        ny = 2 * self.ny if self.periodic_y else 2 * (self.ny - 1) + 1
        return replace(self, nx=nx, ny=ny)

    def with_size(self, nx: int, ny: int) -> "ChartGrid":
        return replace(self, nx=nx, ny=ny)

    def to_dict(self) -> dict:
        return {
            "x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1,
            "nx": self.nx, "ny": self.ny,
            "periodic_x": self.periodic_x, "periodic_y": self.periodic_y,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChartGrid":
        try:
            return cls(
                float(d["x0"]), float(d["x1"]), float(d["y0"]), float(d["y1"]),
                int(d["nx"]), int(d["ny"]),
                bool(d.get("periodic_x", False)), bool(d.get("periodic_y", False)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"grid is missing field {exc}") from None


@dataclass(frozen=True)
class DiffScheme:
    """Per-axis differentiation kind: one of ``fd2``, ``fd4``, ``spectral``."""

    x: str = FD4
    y: str = FD4

    def __post_init__(self):
        for k in (self.x, self.y):
            if k not in KINDS:
                raise ConfigurationError(f"unknown differentiation kind {k!r}")

    @classmethod
    def auto(cls, grid: ChartGrid) -> "DiffScheme":
        """Spectral on periodic axes, fd4 elsewhere."""
        return cls(SPECTRAL if grid.periodic_x else FD4, SPECTRAL if grid.periodic_y else FD4)

    @classmethod
    def parse(cls, name: str, grid: ChartGrid) -> "DiffScheme":
        """Parse the CLI names ``fd2``, ``fd4``, ``spectral-auto``."""
        if name in ("spectral-auto", "auto"):
            return cls.auto(grid)
        if name in (FD2, FD4):
            return cls(name, name)
        if name == SPECTRAL:
            return cls(SPECTRAL, SPECTRAL)
        raise ConfigurationError(f"unknown scheme {name!r} (expected fd2, fd4, spectral-auto)")

    def check(self, grid: ChartGrid) -> None:
        if self.x == SPECTRAL and not grid.periodic_x:
            raise ConfigurationError("spectral differentiation requested on non-periodic x axis")
        if self.y == SPECTRAL and not grid.periodic_y:
            raise ConfigurationError("spectral differentiation requested on non-periodic y axis")

    @property
    def label(self) -> str:
        return f"x:{self.x},y:{self.y}"

    def stencil_radius(self) -> int:
        return max(2 if k == FD4 else 1 for k in (self.x, self.y))


# --------------------------------------------------------------------------
# 1-D kernels
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], deriv: int) -> np.ndarray:
    """Finite-difference weights on integer ``offsets`` (unit spacing)."""
    n = len(offsets)
    off = np.asarray(offsets, dtype=float)
    V = np.vander(off, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(V, rhs)


# (order, deriv) -> (interior offsets, boundary offset sets for nodes 0, 1, ...)
_STENCILS = {
    (2, 1): ((-1, 0, 1), [(0, 1, 2)]),
    (2, 2): ((-1, 0, 1), [(0, 1, 2, 3)]),
    (4, 1): ((-2, -1, 0, 1, 2), [(0, 1, 2, 3, 4), (-1, 0, 1, 2, 3)]),
    (4, 2): ((-2, -1, 0, 1, 2), [(0, 1, 2, 3, 4, 5), (-1, 0, 1, 2, 3, 4)]),
}


def _take(f: np.ndarray, axis: int, idx) -> np.ndarray:
    return np.take(f, idx, axis=axis)


def _fd(f: np.ndarray, axis: int, h: float, deriv: int, order: int, periodic: bool) -> np.ndarray:
    interior, closures = _STENCILS[(order, deriv)]
    w_int = fd_weights(interior, deriv)
    n = f.shape[axis]
    out = np.zeros_like(f)
    if periodic:
        for o, w in zip(interior, w_int):
            if w != 0.0:
                out = out + w * np.roll(f, -o, axis=axis)
        return out / h**deriv

    r = max(abs(o) for o in interior)
    sl = [slice(None)] * f.ndim
    sl[axis] = slice(r, n - r)
    acc = 0.0
    for o, w in zip(interior, w_int):
        if w != 0.0:
            acc = acc + w * _take(f, axis, np.arange(r + o, n - r + o))
    out[tuple(sl)] = acc
    for node, offs in enumerate(closures):
        w = fd_weights(offs, deriv)
        left = sum(wk * _take(f, axis, node + o) for o, wk in zip(offs, w))
        # mirrored closure: offsets negate, odd derivatives flip sign
        right = sum(wk * _take(f, axis, n - 1 - node - o) for o, wk in zip(offs, w))
        if deriv % 2:
            right = -right
        sl[axis] = node
        out[tuple(sl)] = left
        sl[axis] = n - 1 - node
        out[tuple(sl)] = right
    return out / h**deriv


def _spectral(f: np.ndarray, axis: int, h: float, deriv: int) -> np.ndarray:
    n = f.shape[axis]
    k = 2.0 * np.pi * scipy.fft.fftfreq(n, d=h)
    if deriv % 2 and n % 2 == 0:
        k[n // 2] = 0.0  # Nyquist mode has no odd derivative
    mult = (1j * k) ** deriv
    shape = [1] * f.ndim
    shape[axis] = n
    workers = fft_workers()
    F = scipy.fft.fft(f, axis=axis, workers=workers)
    out = scipy.fft.ifft(F * mult.reshape(shape), axis=axis, workers=workers)
    if not np.iscomplexobj(f):
        out = out.real
    return out


def _axis_derivative(f, grid: ChartGrid, scheme: DiffScheme, axis: int, deriv: int) -> np.ndarray:
    scheme.check(grid)
    f = np.asarray(f)
    if f.shape[:2] != grid.shape:
        raise ConfigurationError(f"field shape {f.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(f)):
        raise NonFiniteError("field contains non-finite values")
    kind = scheme.x if axis == 0 else scheme.y
    h = grid.hx if axis == 0 else grid.hy
    periodic = grid.periodic_x if axis == 0 else grid.periodic_y
    if f.dtype.kind not in "fc":
        f = f.astype(float)
    if kind == SPECTRAL:
        return _spectral(f, axis, h, deriv)
    return _fd(f, axis, h, deriv, 2 if kind == FD2 else 4, periodic)


def d_x(f, grid: ChartGrid, scheme: DiffScheme | None = None) -> np.ndarray:
    return _axis_derivative(f, grid, scheme or DiffScheme.auto(grid), 0, 1)


def d_y(f, grid: ChartGrid, scheme: DiffScheme | None = None) -> np.ndarray:
    return _axis_derivative(f, grid, scheme or DiffScheme.auto(grid), 1, 1)


def d_xx(f, grid: ChartGrid, scheme: DiffScheme | None = None) -> np.ndarray:
    return _axis_derivative(f, grid, scheme or DiffScheme.auto(grid), 0, 2)


def d_yy(f, grid: ChartGrid, scheme: DiffScheme | None = None) -> np.ndarray:
    return _axis_derivative(f, grid, scheme or DiffScheme.auto(grid), 1, 2)


# --------------------------------------------------------------------------
# Wirtinger operators
# --------------------------------------------------------------------------

def d_z(f, grid: ChartGrid, scheme: DiffScheme | None = None) -> np.ndarray:
    """Wirtinger derivative ``(f_x - i f_y) / 2``."""
    scheme = scheme or DiffScheme.auto(grid)
    return 0.5 * (d_x(f, grid, scheme) - 1j * d_y(f, grid, scheme))


def d_zbar(f, grid: ChartGrid, scheme: DiffScheme | None = None) -> np.ndarray:
    """Wirtinger derivative ``(f_x + i f_y) / 2``."""
    scheme = scheme or DiffScheme.auto(grid)
    return 0.5 * (d_x(f, grid, scheme) + 1j * d_y(f, grid, scheme))


def d_zzbar(f, grid: ChartGrid, scheme: DiffScheme | None = None) -> np.ndarray:
    """Mixed derivative ``d_z d_zbar f = (f_xx + f_yy) / 4``.

    Uses dedicated second-derivative stencils rather than composing two
    first derivatives, so one-sided closures keep the full order.
    """
    scheme = scheme or DiffScheme.auto(grid)
    return 0.25 * (d_xx(f, grid, scheme) + d_yy(f, grid, scheme))


@dataclass
class LaplaceBeltrami:
    value: np.ndarray
    # |Im d_z(d_zbar f)| from composed first derivatives; zero in exact arithmetic
    imag_diagnostic: np.ndarray = field(repr=False)

    @property
    def max_imag(self) -> float:
        return float(np.max(self.imag_diagnostic))


def laplace_beltrami(f, u, grid: ChartGrid, scheme: DiffScheme | None = None) -> LaplaceBeltrami:
    """``4 e^{-2u} d_z d_zbar f`` for a real field ``f`` in a conformal chart."""
    scheme = scheme or DiffScheme.auto(grid)
    f = np.asarray(f, dtype=float)
    value = 4.0 * np.exp(-2.0 * np.asarray(u)) * d_zzbar(f, grid, scheme)
    composed = d_z(d_zbar(f, grid, scheme), grid, scheme)
    return LaplaceBeltrami(value=value, imag_diagnostic=np.abs(composed.imag))


def interpolate_field(values, grid: ChartGrid, pts, pad: int = 8) -> np.ndarray:
    """Quintic spline interpolation of a node field at complex points ``pts``.

    Periodic axes are padded by wrapping and the query points reduced into
    the fundamental cell.
    """
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return (interpolate_field(values.real, grid, pts, pad)
                + 1j * interpolate_field(values.imag, grid, pts, pad))
    pts = np.asarray(pts, dtype=complex)
    px = pad if grid.periodic_x else 0
    py = pad if grid.periodic_y else 0
    data = np.pad(values, ((px, px), (py, py)), mode="wrap") if (px or py) else values
    x = grid.x0 + grid.hx * np.arange(-px, grid.nx + px)
    y = grid.y0 + grid.hy * np.arange(-py, grid.ny + py)
    xs, ys = pts.real, pts.imag
    if grid.periodic_x:
        xs = grid.x0 + np.mod(xs - grid.x0, grid.x1 - grid.x0)
    if grid.periodic_y:
        ys = grid.y0 + np.mod(ys - grid.y0, grid.y1 - grid.y0)
    return RectBivariateSpline(x, y, data, kx=5, ky=5).ev(xs, ys)


# --------------------------------------------------------------------------
# Convergence studies
# --------------------------------------------------------------------------

@dataclass
class Convergence:
    name: str
    resolutions: list[tuple[int, int]]
    errors: list[float]
    orders: list[float | None]
    status: str  # "order", "converged" or "stalled"

    @property
    def order(self) -> float | str | None:
        if self.status == "converged":
            return "converged"
        valid = [o for o in self.orders if o is not None]
        return valid[-1] if valid else None

    def to_dict(self) -> dict:
        return {
            "resolutions": [list(r) for r in self.resolutions],
            "errors": self.errors,
            "orders": self.orders,
            "order": self.order,
            "status": self.status,
        }


def refine_study(
    producer: Callable[[ChartGrid], Mapping[str, "np.ndarray | float"]],
    grid: ChartGrid,
    levels: int = 3,
    atol: float = 1e-11,
) -> dict[str, Convergence]:
    """Run ``producer`` on ``levels`` successively refined grids.

    ``producer`` returns a mapping of output name to an error field (or a
    scalar error) whose exact value is zero. Observed orders are the log2
    ratios of successive max-norm errors; errors below ``atol`` count as
    rounding level and do not produce an order.
    """
    if levels < 2:
        raise ConfigurationError("refine_study needs at least 2 levels")
    grids = [grid]
    for _ in range(levels - 1):
        grids.append(grids[-1].refined())
    table: dict[str, list[float]] = {}
    for g in grids:
        out = producer(g)
        for name, value in out.items():
            err = float(np.max(np.abs(value))) if np.size(value) else 0.0
            if not math.isfinite(err):
                raise DiagnosticFailure(f"{name}: non-finite output at {g.nx}x{g.ny}")
            table.setdefault(name, []).append(err)

    result = {}
    for name, errs in table.items():
        orders: list[float | None] = []
        for a, b in zip(errs, errs[1:]):
            if a > atol and b > atol:
                orders.append(math.log2(a / b))
            else:
                orders.append(None)
        if errs[-1] <= atol:
            status = "converged"
        elif orders and orders[-1] is not None and orders[-1] > 0.5:
            status = "order"
        else:
            status = "stalled"
        result[name] = Convergence(name, [g.shape for g in grids], errs, orders, status)
    return result


# --------------------------------------------------------------------------
# Field CSV format
# --------------------------------------------------------------------------

CSV_HEADER = "i,j,x,y,re,im"


def write_field_csv(path, values, grid: ChartGrid) -> None:
    """Write a real or complex field as ``i,j,x,y,re,im`` rows (row-major)."""
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ConfigurationError(f"field shape {values.shape} does not match grid {grid.shape}")
    x, y = grid.x, grid.y
    lines = [CSV_HEADER]
    re, im = values.real, (values.imag if np.iscomplexobj(values) else np.zeros(grid.shape))
    for i in range(grid.nx):
        for j in range(grid.ny):
            lines.append(
                f"{i},{j},{x[i]:.17g},{y[j]:.17g},{re[i, j]:.17g},{im[i, j]:.17g}"
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path, grid: ChartGrid) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (grid.nx * grid.ny, 6):
        raise ConfigurationError(f"{path}: expected {grid.nx * grid.ny} rows of 6 columns")
    out = np.zeros(grid.shape, dtype=complex)
    out[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 4] + 1j * data[:, 5]
    return out
