"""Spectral solution of the hyperbolic problem l_x f = l_y f with initial
data on the boundary, shifted-boundary approximations, the characteristic
triangle integral identity, and positivity reporting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .operator import MpCertificate
from .spectral import GridFunction, SpectralMeasure, forward_transform

__all__ = [
    "CauchySolution",
    "TriangleIdentityReport",
    "solve_cauchy",
    "solve_cauchy_shifted",
    "triangle_identity_residual",
    "positivity_report",
]


# ---------------------------------------------------------------------------
# solutions


class CauchySolution:
    """f(x, y) on a rectangle, with the initial profile on the lower edge."""

    def __init__(self, h: GridFunction, xs: np.ndarray, ys: np.ndarray,
                 values: np.ndarray, sm: SpectralMeasure,
                 shifted_origin: float | None = None):
        self.h = h
        self.xs = xs
        self.ys = ys
        self.values = values
        self.sm = sm
        self.shifted_origin = shifted_origin
        kx = min(3, len(xs) - 1)
        ky = min(3, len(ys) - 1)
        self._spline = RectBivariateSpline(xs, ys, values, kx=kx, ky=ky)

    def __call__(self, x, y):
        return self._spline(x, y, grid=False)

    def pde_residual(self) -> np.ndarray:
        """l_x f - l_y f on the interior nodes, by centered differences.

        This is a report of consistency between the spectral solution and
        the differential equation at the grid resolution; it is not used in
        the construction.
        """
        spec = self.sm.spec
        xs, ys, f = self.xs, self.ys, self.values

        def ell(grid, vals, axis):
            # -(p u')' / r along one axis
            du = np.gradient(vals, grid, axis=axis)
            with np.errstate(all="ignore"):
                pv = np.asarray(spec.p(grid), dtype=float) + np.zeros_like(grid)
                rv = np.asarray(spec.r(grid), dtype=float) + np.zeros_like(grid)
            shape = [1, 1]
            shape[axis] = len(grid)
            flux = du * pv.reshape(shape)
            return -np.gradient(flux, grid, axis=axis) / rv.reshape(shape)

        res = ell(xs, f, 0) - ell(ys, f, 1)
        return res[2:-2, 2:-2]


def _spectral_sum(tbl_values, sm, xs, ys, wy_rows):
    coef = sm.masses * tbl_values
    Wx = sm.w_values(xs)
    return (Wx * coef[:, None]).T @ wy_rows


def solve_cauchy(h: GridFunction, sm: SpectralMeasure, xs,
                 ys=None) -> CauchySolution:
    if not (h.smooth2 and h.compact_support):
        raise ValueError("initial data must be flagged smooth2 and "
                         "compact_support")
    xs = np.asarray(xs, dtype=float)
    ys = xs if ys is None else np.asarray(ys, dtype=float)
    tbl = forward_transform(h, sm)
    vals = _spectral_sum(tbl.values, sm, xs, ys, sm.w_values(ys))
    return CauchySolution(h, xs, ys, vals, sm)


def solve_cauchy_shifted(h: GridFunction, a_m: float, sm: SpectralMeasure,
                         xs, ys=None) -> CauchySolution:
    """Same spectral sum with the y-kernel replaced by the solution
    normalized at the shifted origin a_m."""
    xs = np.asarray(xs, dtype=float)
    ys = xs if ys is None else np.asarray(ys, dtype=float)
    if not (sm.spec.a < a_m < ys.min()):
        raise ValueError("need a < a_m < min(grid)")
    if not (h.smooth2 and h.compact_support):
        raise ValueError("initial data must be flagged smooth2 and "
                         "compact_support")
    tbl = forward_transform(h, sm)
    weights = np.abs(tbl.values) * sm.masses
    keep = weights >= 1e-14 * max(weights.max(), 1e-300)
    wy = np.zeros((len(sm), len(ys)))
    for k in np.where(keep)[0]:
        wk, _ = sm.evaluator.eval_w_shifted(sm.lambdas[k], a_m, ys)
        wy[k] = wk.real
    vals = _spectral_sum(np.where(keep, tbl.values, 0.0), sm, xs, ys, wy)
    return CauchySolution(h, xs, ys, vals, sm, shifted_origin=a_m)


# ---------------------------------------------------------------------------
# triangle identity


class StandardCoordinateView:
    """A Cauchy solution as a function of the standard coordinates
    xi = gamma(x), with analytic partial derivatives from the underlying
    spline (finite differences of a spline do not refine cleanly)."""

    def __init__(self, sol: CauchySolution, sf, n_table: int = 2049):
        from scipy.interpolate import CubicSpline
        self.sol = sol
        xs = np.linspace(sol.xs[0], sol.xs[-1], n_table)
        xi_tab = np.array([sf.gamma(float(t)) for t in xs])
        self._inv = CubicSpline(xi_tab, xs)
        self.xi_min, self.xi_max = xi_tab[0], xi_tab[-1]

    def _xy(self, xi, zeta):
        return self._inv(xi), self._inv(zeta)

    def __call__(self, xi, zeta):
        x, y = self._xy(xi, zeta)
        return self.sol._spline(x, y, grid=False)

    def d_xi(self, xi, zeta):
        x, y = self._xy(xi, zeta)
        return self.sol._spline(x, y, dx=1, grid=False) * self._inv(xi, nu=1)

    def d_zeta(self, xi, zeta):
        x, y = self._xy(xi, zeta)
        return self.sol._spline(x, y, dy=1, grid=False) * self._inv(zeta, nu=1)

    def dd_xi(self, xi, zeta):
        x, y = self._xy(xi, zeta)
        g1 = self._inv(xi, nu=1)
        return (self.sol._spline(x, y, dx=2, grid=False) * g1 * g1
                + self.sol._spline(x, y, dx=1, grid=False)
                * self._inv(xi, nu=2))

    def dd_zeta(self, xi, zeta):
        x, y = self._xy(xi, zeta)
        g1 = self._inv(zeta, nu=1)
        return (self.sol._spline(x, y, dy=2, grid=False) * g1 * g1
                + self.sol._spline(x, y, dy=1, grid=False)
                * self._inv(zeta, nu=2))


@dataclass(frozen=True)
class TriangleIdentityReport:
    c: float
    x: float
    y: float
    H: float
    I0: float
    I1: float
    I2: float
    I3: float
    I4: float
    lhs: float
    residual: float
    n: int


def triangle_identity_residual(v, c: float, x: float, y: float,
                               cert: MpCertificate, n: int = 200,
                               fd_step: float | None = None,
                               beta: float | None = None) -> TriangleIdentityReport:
    """Residual of the characteristic-triangle identity for a C^2 function
    v(xi, zeta) given in standard coordinates.

    All quadratures are composite trapezoid with n panels, so the residual
    decreases at a predictable rate under refinement.  The volume term I4
    vanishes for exact solutions of the transformed equation; for spectral
    solutions it reports their PDE defect.
    """
    if not cert.all_ok:
        raise ValueError("MP certificate required")
    sf = cert.sf
    if math.isfinite(sf.gamma_a) and not (sf.gamma_a < c <= y <= x):
        raise ValueError("need gamma(a) < c <= y <= x")
    if not (c <= y <= x):
        raise ValueError("need c <= y <= x")
    h_fd = fd_step if fd_step is not None else max((x + y - 2 * c), 1.0) / (8 * n)

    # dense tables for A_B, phi, psi over every argument the terms touch;
    # B is the cumulative trapezoid of eta/2 anchored at beta
    if beta is None:
        beta = c
    lo = c - 4 * h_fd
    if math.isfinite(sf.gamma_a):
        lo = max(lo, (sf.gamma_a + c) / 2)
    hi = max(x + y, x + y - c) + 4 * h_fd
    dense = np.linspace(lo, hi, 8 * n + 1)
    eta_d = np.array([float(cert.eta(s)) for s in dense])
    log_b = 0.5 * np.concatenate(
        [[0.0], np.cumsum((eta_d[1:] + eta_d[:-1]) / 2 * np.diff(dense))])
    log_b -= np.interp(beta, dense, log_b)
    A_d = np.array([sf.A(s) for s in dense])
    ab_d = A_d * np.exp(-2.0 * log_b)
    phi_d = np.array([cert.phi_eta(s) for s in dense])
    psi_d = np.array([cert.psi_eta(s) for s in dense])

    def A_B(s):
        return np.interp(s, dense, ab_d)

    def phi(s):
        return np.interp(s, dense, phi_d)

    def psi(s):
        return np.interp(s, dense, psi_d)

    def vv(xi, zeta):
        return np.asarray(v(np.asarray(xi, dtype=float),
                            np.asarray(zeta, dtype=float)), dtype=float)

    if hasattr(v, "d_zeta"):
        d_zeta, d_xi = v.d_zeta, v.d_xi
        dd_zeta, dd_xi = v.dd_zeta, v.dd_xi
    else:
        def d_zeta(xi, zeta):
            return (vv(xi, zeta + h_fd) - vv(xi, zeta - h_fd)) / (2 * h_fd)

        def d_xi(xi, zeta):
            return (vv(xi + h_fd, zeta) - vv(xi - h_fd, zeta)) / (2 * h_fd)

        def dd_zeta(xi, zeta):
            return (vv(xi, zeta + h_fd) - 2 * vv(xi, zeta)
                    + vv(xi, zeta - h_fd)) / h_fd ** 2

        def dd_xi(xi, zeta):
            return (vv(xi + h_fd, zeta) - 2 * vv(xi, zeta)
                    + vv(xi - h_fd, zeta)) / h_fd ** 2

    def ell_gap(xi, zeta):
        # (l^B_zeta - l^B_xi) v
        lap = -(dd_zeta(xi, zeta) - dd_xi(xi, zeta))
        return lap - phi(zeta) * d_zeta(xi, zeta) + phi(xi) * d_xi(xi, zeta) \
            + (psi(zeta) - psi(xi)) * vv(xi, zeta)

    A_c = float(A_B(c))
    H = 0.5 * A_c * (float(A_B(x - y + c)) * float(vv(x - y + c, c))
                     + float(A_B(x + y - c)) * float(vv(x + y - c, c)))
    s0 = np.linspace(x - y + c, x + y - c, n + 1)
    I0 = 0.5 * A_c * float(np.trapezoid(A_B(s0) * d_zeta(s0, c), s0))
    sy = np.linspace(c, y, n + 1)
    I1 = 0.5 * float(np.trapezoid(
        A_B(sy) * A_B(x - y + sy) * (phi(sy) + phi(x - y + sy))
        * vv(x - y + sy, sy), sy)) if y > c else 0.0
    I2 = 0.5 * float(np.trapezoid(
        A_B(sy) * A_B(x + y - sy) * (phi(sy) - phi(x + y - sy))
        * vv(x + y - sy, sy), sy)) if y > c else 0.0

    def volume(fun):
        rows = np.empty(n + 1)
        for i, z in enumerate(sy):
            xi_g = np.linspace(x - y + z, x + y - z, n + 1)
            if xi_g[-1] <= xi_g[0]:
                rows[i] = 0.0
                continue
            rows[i] = np.trapezoid(A_B(xi_g) * A_B(z) * fun(xi_g, z), xi_g)
        return 0.5 * float(np.trapezoid(rows, sy))

    I3 = volume(lambda xi, z: (psi(z) - psi(xi)) * vv(xi, z)) if y > c else 0.0
    I4 = volume(ell_gap) if y > c else 0.0
    lhs = float(A_B(x)) * float(A_B(y)) * float(vv(x, y))
    residual = abs(lhs - (H + I0 + I1 + I2 + I3 - I4))
    return TriangleIdentityReport(c=c, x=x, y=y, H=H, I0=I0, I1=I1, I2=I2,
                                  I3=I3, I4=I4, lhs=lhs, residual=residual,
                                  n=n)


# ---------------------------------------------------------------------------
# positivity


def positivity_report(sol: CauchySolution, strict: bool = False) -> dict:
    if np.any(np.asarray(sol.h.values) < 0):
        raise ValueError("initial data must be nonnegative")
    out = {"min_value": float(np.min(sol.values))}
    if strict:
        out["strict_positive_fraction"] = float(
            np.mean(sol.values > 1e-10))
    return out
