"""Generalized translation and convolution attached to the operator.

The regularized product kernel

    q_t(x, y, xi) = sum_k m_k e^{-t lam_k} w_k(x) w_k(y) w_k(xi)

is a probability density in xi (mass one against r), and as t decreases it
concentrates on the convolution support of the point pair (x, y).  All
convolution-level objects here are built from it or from the transform-domain
product, which is exact on the measure's atoms.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .operator import StandardForm, SupportParams
from .spectral import (GridFunction, SpectralMeasure, TransformTable,
                       forward_transform)

__all__ = [
    "ProductKernel",
    "MeasureApprox",
    "SupportReport",
    "MeasureConvolution",
    "product_density",
    "product_formula_residual",
    "approx_nu",
    "translate",
    "convolve_functions",
    "convolve_measures",
    "classify_support",
    "DEFAULT_T_SCHEDULE",
]

DEFAULT_T_SCHEDULE = (0.1, 0.03, 0.01, 0.003, 0.001)


# ---------------------------------------------------------------------------
# product kernel


@dataclass(frozen=True)
class ProductKernel:
    t: float
    x: float
    y: float
    xi: np.ndarray
    values: np.ndarray
    mass: float
    coarse_mass_warning: bool = False

    def __call__(self, xq):
        return np.interp(xq, self.xi, self.values, left=0.0, right=0.0)


_qt_cache: dict = {}
_qt_lock = threading.Lock()


def _r_on(sm: SpectralMeasure, grid: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        rv = np.asarray(sm.spec.r(grid), dtype=float) + np.zeros_like(grid)
    return np.where(np.isfinite(rv), rv, 0.0)


def _trapz_weights(grid: np.ndarray) -> np.ndarray:
    w = np.empty_like(grid)
    w[0] = (grid[1] - grid[0]) / 2
    w[-1] = (grid[-1] - grid[-2]) / 2
    w[1:-1] = (grid[2:] - grid[:-2]) / 2
    return w


def default_xi_grid(sm: SpectralMeasure, t: float, x: float, y: float,
                    n: int = 3001) -> np.ndarray:
    """Grid covering the region where q_t is non-negligible."""
    lo = sm._fine.xs[0]
    hi = min(sm.L, x + y + 8.0 * math.sqrt(t) + 2.0)
    hi = max(hi, lo + 1.0)
    return np.linspace(lo, hi, n)


def product_density(t: float, x: float, y: float, xi_grid,
                    sm: SpectralMeasure) -> ProductKernel:
    if t <= 0:
        raise ValueError("t must be positive")
    xi_grid = np.asarray(xi_grid, dtype=float)
    key = (id(sm), t, x, y, xi_grid[0], xi_grid[-1], len(xi_grid))
    with _qt_lock:
        hit = _qt_cache.get(key)
    if hit is not None:
        return hit
    damp = np.exp(-t * sm.lambdas)
    keep = damp >= 1e-16
    wx = sm.w_values(np.array([x]))[keep, 0]
    wy = sm.w_values(np.array([y]))[keep, 0] if y != x else wx
    coef = sm.masses[keep] * damp[keep] * wx * wy
    vals = coef @ sm.w_values(xi_grid)[keep]
    mass = float(np.sum(vals * _r_on(sm, xi_grid) * _trapz_weights(xi_grid)))
    pk = ProductKernel(t=t, x=x, y=y, xi=xi_grid, values=vals, mass=mass,
                       coarse_mass_warning=abs(mass - 1.0) > 1e-2)
    with _qt_lock:
        if len(_qt_cache) > 64:
            _qt_cache.clear()
        _qt_cache[key] = pk
    return pk


def product_formula_residual(lam: float, t: float, x: float, y: float,
                             sm: SpectralMeasure, xi_grid=None) -> float:
    """|e^{-t lam} w(x) w(y) - int w(xi) q_t(x,y,xi) r dxi|.

    The left side uses the high-accuracy kernel solver, so the residual
    measures the quality of the discretized measure, not of the identity.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if xi_grid is None:
        xi_grid = default_xi_grid(sm, t, x, y)
    xi_grid = np.asarray(xi_grid, dtype=float)
    pk = product_density(t, x, y, xi_grid, sm)
    ev = sm.evaluator
    if lam == 0.0:
        return abs(1.0 - pk.mass)
    w_xi, _, _ = ev.eval_grid(lam, xi_grid)
    rhs = float(np.sum(w_xi.real * pk.values * _r_on(sm, xi_grid)
                       * _trapz_weights(xi_grid)))
    wx = ev.eval_w(lam, x).w.real
    wy = ev.eval_w(lam, y).w.real if y != x else wx
    return abs(math.exp(-t * lam) * wx * wy - rhs)


# ---------------------------------------------------------------------------
# weak limit nu_{x,y}


@dataclass(frozen=True)
class MeasureApprox:
    density: GridFunction | None
    atoms: tuple | None
    t_used: float
    moment_lambdas: np.ndarray
    moments: np.ndarray          # (len(schedule), len(probe lambdas))
    cauchy_gaps: np.ndarray
    mass: float


def _probe_lambdas(sm: SpectralMeasure) -> np.ndarray:
    targets = (0.05, 0.1, 0.2, 0.4)
    idx = sorted({int(np.argmin(np.abs(sm.lambdas - g))) for g in targets})
    return sm.lambdas[idx]


def approx_nu(x: float, y: float, sm: SpectralMeasure,
              t_schedule=DEFAULT_T_SCHEDULE, probe_lambdas=None,
              xi_grid=None) -> MeasureApprox:
    ts = [float(t) for t in t_schedule]
    if any(t <= 0 for t in ts) or any(b >= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_schedule must be positive and strictly decreasing")
    if probe_lambdas is None:
        probe_lambdas = _probe_lambdas(sm)
    probe_lambdas = np.asarray(probe_lambdas, dtype=float)
    a = sm.spec.a
    if x == a or y == a:
        atom = y if x == a else x
        w_atom = sm.w_values(np.array([atom]))[:, 0]
        kidx = [int(np.argmin(np.abs(sm.lambdas - l))) for l in probe_lambdas]
        mom = np.array([[w_atom[k] for k in kidx]])
        return MeasureApprox(density=None, atoms=((atom, 1.0),), t_used=0.0,
                             moment_lambdas=probe_lambdas, moments=mom,
                             cauchy_gaps=np.zeros(0), mass=1.0)
    if xi_grid is None:
        xi_grid = default_xi_grid(sm, max(ts), x, y, n=6001)
    rw = _r_on(sm, xi_grid) * _trapz_weights(xi_grid)
    W_probe = np.array([sm.evaluator.eval_grid(l, xi_grid)[0].real
                        for l in probe_lambdas])
    moments = np.empty((len(ts), len(probe_lambdas)))
    last = None
    for i, t in enumerate(ts):
        pk = product_density(t, x, y, xi_grid, sm)
        moments[i] = W_probe @ (pk.values * rw)
        last = pk
    gaps = np.max(np.abs(np.diff(moments, axis=0)), axis=1)
    density = GridFunction(last.xi, last.values)
    return MeasureApprox(density=density, atoms=None, t_used=ts[-1],
                         moment_lambdas=probe_lambdas, moments=moments,
                         cauchy_gaps=gaps, mass=last.mass)


# ---------------------------------------------------------------------------
# translation and convolution


def translate(h: GridFunction, y: float, sm: SpectralMeasure,
              t_reg: float, support_case: str | None = None,
              out_grid=None) -> GridFunction:
    """(T^y h)(x) = int h d(delta_x * delta_y), regularized through q_t."""
    out_grid = h.grid if out_grid is None else np.asarray(out_grid, dtype=float)
    if y == sm.spec.a:
        return GridFunction(out_grid, h(out_grid))
    if t_reg == 0.0:
        if support_case != "a":
            raise ValueError("t_reg=0 needs the two-atom support shortcut "
                             "(support case 'a')")
        vals = 0.5 * (h(np.abs(out_grid - y)) + h(out_grid + y))
        return GridFunction(out_grid, vals)
    if t_reg < 0:
        raise ValueError("t_reg must be nonnegative")
    tbl = forward_transform(h, sm)
    wy = sm.w_values(np.array([y]))[:, 0]
    coef = sm.masses * np.exp(-t_reg * sm.lambdas) * tbl.values * wy
    vals = coef @ sm.w_values(out_grid)
    return GridFunction(out_grid, vals)


def convolve_functions(h: GridFunction, g: GridFunction, sm: SpectralMeasure,
                       t_reg: float, out_grid=None) -> GridFunction:
    """(h * g)(x) = int (T^y h)(x) g(y) r(y) dy; evaluated through the
    transform product, which is the same quadrature reordered and is
    symmetric in (h, g) by construction."""
    if t_reg <= 0:
        raise ValueError("t_reg must be positive")
    out_grid = h.grid if out_grid is None else np.asarray(out_grid, dtype=float)
    th = forward_transform(h, sm)
    tg = forward_transform(g, sm)
    coef = sm.masses * np.exp(-t_reg * sm.lambdas) * th.values * tg.values
    vals = coef @ sm.w_values(out_grid)
    return GridFunction(out_grid, vals)


@dataclass(frozen=True)
class MeasureConvolution:
    lambdas: np.ndarray
    mu_hat: np.ndarray
    nu_hat: np.ndarray
    product: np.ndarray
    density: GridFunction | None


def _measure_hat(atoms, sm: SpectralMeasure) -> np.ndarray:
    xs = np.array([pos for pos, _ in atoms], dtype=float)
    wts = np.array([wt for _, wt in atoms], dtype=float)
    return sm.w_values(xs) @ wts


def convolve_measures(mu, nu, sm: SpectralMeasure,
                      t_reg: float = 0.0) -> MeasureConvolution:
    """mu, nu: finite atom lists [(position, weight), ...].  The transform
    product is the exact contract; a q_t density realization is attached
    when t_reg > 0."""
    mu_hat = _measure_hat(mu, sm)
    nu_hat = _measure_hat(nu, sm)
    product = mu_hat * nu_hat
    density = None
    if t_reg > 0:
        hi = max(pos for pos, _ in mu) + max(pos for pos, _ in nu)
        grid = default_xi_grid(sm, t_reg, hi / 2, hi / 2)
        vals = np.zeros_like(grid)
        for xi_pos, wi in mu:
            for yj_pos, wj in nu:
                pk = product_density(t_reg, xi_pos, yj_pos, grid, sm)
                vals = vals + wi * wj * pk.values
        density = GridFunction(grid, vals)
    return MeasureConvolution(lambdas=sm.lambdas.copy(), mu_hat=mu_hat,
                              nu_hat=nu_hat, product=product, density=density)


# ---------------------------------------------------------------------------
# support of delta_x * delta_y


@dataclass(frozen=True)
class SupportReport:
    case: str
    intervals: tuple        # ((lo, hi), ...) in the operator's coordinate
    s_intervals: tuple      # same in shifted standard coordinates, or ()
    params: SupportParams | None
    gamma_mapped: bool


def _merge(intervals):
    out = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1] + 1e-14:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return tuple(out)


def _case_of(par: SupportParams) -> str:
    eta0_zero = abs(par.eta_at_origin) <= 1e-12
    if math.isinf(par.x0) and math.isinf(par.x1):
        return "extrapolated_e"
    if not eta0_zero:
        return "e"
    if math.isinf(par.x0) and par.x1 == 0.0:
        return "a"
    if par.x1 == 0.0 and 0.0 < par.x0 < math.inf:
        return "b"
    if math.isinf(par.x0) and 0.0 < par.x1 < math.inf:
        return "c"
    if 0.0 < 3.0 * par.x1 < par.x0 < math.inf:
        return "d"
    return "e"


def _support_in_s(case: str, u: float, v: float, par: SupportParams):
    d, s = abs(u - v), u + v
    x0, x1 = par.x0, par.x1
    if case in ("e", "extrapolated_e"):
        return ((d, s),)
    if case == "a":
        return ((d, d), (s, s))
    if case == "b":
        if s <= x0:
            return ((d, d), (s, s))
        if max(u, v) < x0:
            return _merge([(d, d), (2 * x0 - s, s)])
        return ((d, s),)
    # cases c and d share the two-interval shape away from the thresholds
    if case == "c":
        if min(u, v) <= 2 * x1:
            return ((d, s),)
        return _merge([(d, 2 * x1 + d), (s - 2 * x1, s)])
    if case == "d":
        if min(u, v) <= 2 * x1 or max(u, v) >= x0 - x1:
            return ((d, s),)
        return _merge([(d, 2 * x1 + d), (s - 2 * x1, s)])
    raise ValueError(f"unknown case {case!r}")


def classify_support(x: float, y: float, sf: StandardForm,
                     params: SupportParams | None) -> SupportReport:
    """Support of delta_x * delta_y per the structure parameters
    (x0, x1, eta(0)) of the standard form."""
    if not math.isfinite(sf.gamma_a):
        return SupportReport(case="degenerate_full",
                             intervals=((sf.spec.a, sf.spec.b),),
                             s_intervals=(), params=params, gamma_mapped=False)
    if params is None:
        raise ValueError("support parameters required for a finite gamma(a)")
    u = sf.gamma(x) - sf.gamma_a
    v = sf.gamma(y) - sf.gamma_a
    if u < 0 or v < 0:
        raise ValueError("x, y must lie in (a, b)")
    case = _case_of(params)
    s_ints = _support_in_s(case, u, v, params)

    def back(sv):
        if sv <= 0.0:
            return sf.spec.a
        return sf.gamma_inv(sf.gamma_a + sv)

    ints = tuple((back(lo), back(hi)) for lo, hi in s_ints)
    return SupportReport(case=case, intervals=ints, s_intervals=s_ints,
                         params=params, gamma_mapped=True)
