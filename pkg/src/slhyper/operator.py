"""Operator definitions, the standard-form transformation and the
monotonicity certificate used by the convolution machinery.

An operator is the differential expression ``-(1/r)(p u')'`` on an open
interval ``(a, b)``.  The standard form re-parametrises it through the
monotone map ``gamma(x) = int_c^x sqrt(r/p)`` into ``-(1/A)(A u')'`` with
``A = sqrt(p r) o gamma^{-1}``.
"""

from __future__ import annotations

import json
import math
import urllib.parse
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .expr import CoefficientExpr, parse_expression

__all__ = [
    "OperatorSpec",
    "StandardForm",
    "MpCertificate",
    "SupportParams",
    "parse_coefficient",
    "check_left_boundary",
    "build_standard_form",
    "certify_mp",
    "support_params",
    "load_operator",
    "builtin_operator",
]

_QUAD_OPTS = dict(limit=200, epsabs=1e-12, epsrel=1e-11)

_real_quad = quad


def quad(*args, **kwargs):  # noqa: A001 - deliberate local shadow
    """scipy.integrate.quad with roundoff chatter silenced; accuracy is
    audited by the refinement traces, not by per-call warnings."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _real_quad(*args, **kwargs)


def parse_coefficient(text: str, var: str = "x") -> CoefficientExpr:
    return parse_expression(text, var)


def probe_points(a: float, b: float, n: int = 1000) -> np.ndarray:
    """Log-spaced probe of (a,b), clustered at the left endpoint."""
    if math.isinf(a):
        lo = -1e4 if math.isinf(b) else b - 1e4
        hi = 1e4 if math.isinf(b) else b - 1e-8 * max(1.0, abs(b))
        return np.linspace(lo, hi, n)
    span = 1e4 if math.isinf(b) else (b - a) * (1 - 1e-12)
    offs = np.geomspace(span * 1e-12, span, n)
    return a + offs


@dataclass(frozen=True)
class OperatorSpec:
    """Coefficients p, r of -(1/r)(p u')' on (a,b), with an optional
    monotonicity parameter eta (a function of the standard coordinate)."""

    name: str
    a: float
    b: float
    p: CoefficientExpr
    r: CoefficientExpr
    eta: CoefficientExpr | None = None

    def validate(self, n_probe: int = 1000) -> None:
        pts = probe_points(self.a, self.b, n_probe)
        pv = np.asarray(self.p(pts), dtype=float) + np.zeros_like(pts)
        rv = np.asarray(self.r(pts), dtype=float) + np.zeros_like(pts)
        if not (np.all(np.isfinite(pv)) and np.all(np.isfinite(rv))):
            raise ValueError(f"{self.name}: coefficient not finite on probe grid")
        if np.any(pv < 0) or np.any(rv < 0):
            i = int(np.argmax((pv < 0) | (rv < 0)))
            raise ValueError(f"{self.name}: negative coefficient at x={pts[i]}")
        # exact zeros are tolerated only as a contiguous underflow prefix at
        # a singular left endpoint (e.g. exp(-1/x) below the float range)
        zero = (pv == 0) | (rv == 0)
        if np.any(zero):
            k = int(np.argmin(zero))  # first strictly positive index
            if zero[-1] or np.any(zero[k:]):
                i = k + int(np.argmax(zero[k:]))
                raise ValueError(f"{self.name}: vanishing coefficient at x={pts[i]}")

    def pr_nondecreasing(self, n_probe: int = 400) -> bool:
        pts = probe_points(self.a, self.b, n_probe)
        vals = np.asarray(self.p(pts), dtype=float) * np.asarray(self.r(pts), dtype=float)
        return bool(np.all(np.diff(vals) >= -1e-12 * np.maximum(vals[:-1], 1.0)))


def _left_cut_sequence(a: float, c: float, k_max: int = 14):
    if math.isinf(a):
        return [c - 4.0 ** k for k in range(1, k_max + 1)]
    return [a + (c - a) * 4.0 ** (-k) for k in range(1, k_max + 1)]


def _tail_limit(increments: list[float]) -> float:
    """Extrapolated limit of a series of refinement increments, or +inf.

    The cut sequence shrinks geometrically, so for a convergent integral the
    increments decay at least geometrically; the tail is summed from the
    observed ratio.  Non-decaying increments signal divergence.
    """
    total = sum(increments)
    last, prev = abs(increments[-1]), abs(increments[-2])
    if last <= 1e-12 * (1.0 + abs(total)):
        return total
    q = last / prev if prev > 0 else 1.0
    if q <= 0.75:
        return total + increments[-1] * q / (1.0 - q)
    return math.inf


def check_left_boundary(spec: OperatorSpec, c: float | None = None) -> dict:
    """Convergence check of the nested integral int_a^c int_y^c dx/p r(y) dy."""
    if c is None:
        c = spec.a + 1.0 if math.isinf(spec.b) else 0.5 * (spec.a + spec.b)
        if math.isinf(spec.a):
            c = 0.0

    def inner(y):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            val, _ = quad(lambda x: 1.0 / spec.p(x), y, c, **_QUAD_OPTS)
        return val

    def integrand(y):
        rv = spec.r(y)
        return 0.0 if rv == 0.0 else rv * inner(y)

    trace = []
    incs = []
    prev_cut = c
    total = 0.0
    for cut in _left_cut_sequence(spec.a, c):
        # stop refining once the integrand leaves the representable float
        # range (steep exponential coefficients); the tail is extrapolated
        mid = 0.5 * (cut + prev_cut)
        if not all(math.isfinite(integrand(y)) for y in (cut, mid)):
            break
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            piece, _ = quad(integrand, cut, prev_cut, **_QUAD_OPTS)
        if not math.isfinite(piece):
            break
        total += piece
        incs.append(piece)
        trace.append(total)
        prev_cut = cut
    value = _tail_limit(incs) if len(incs) >= 3 else math.inf
    return {"finite": math.isfinite(value), "value": value,
            "refinement_trace": trace}


class StandardForm:
    """gamma, A, sigma and the Liouville potential of an operator."""

    def __init__(self, spec: OperatorSpec, c: float):
        self.spec = spec
        self.c = c
        self._p1 = spec.p.diff()
        self._r1 = spec.r.diff()
        self._p2 = self._p1.diff()
        self._r2 = self._r1.diff()
        self._gamma_cache: dict[float, float] = {c: 0.0}
        self.gamma_a = self._compute_gamma_a()
        self._check_gamma_b_diverges()
        self.sigma, self.sigma_trace = self._estimate_sigma()

    # -- gamma ------------------------------------------------------------

    def _sqrt_rp(self, x):
        return math.sqrt(self.spec.r(x) / self.spec.p(x))

    def gamma(self, x: float) -> float:
        x = float(x)
        if x in self._gamma_cache:
            return self._gamma_cache[x]
        # integrate from the nearest cached anchor
        anchor = min(self._gamma_cache, key=lambda t: abs(t - x))
        val, _ = quad(self._sqrt_rp, anchor, x, **_QUAD_OPTS)
        out = self._gamma_cache[anchor] + val
        if len(self._gamma_cache) < 4096:
            self._gamma_cache[x] = out
        return out

    def gamma_grid(self, xs: np.ndarray) -> np.ndarray:
        """gamma at a sorted grid, by quadrature over the increments."""
        xs = np.asarray(xs, dtype=float)
        out = np.empty_like(xs)
        prev_x, prev_g = self.c, 0.0
        order = np.argsort(xs)
        for i in order:
            val, _ = quad(self._sqrt_rp, prev_x, xs[i], **_QUAD_OPTS)
            out[i] = prev_g + val
            prev_x, prev_g = xs[i], out[i]
        return out

    def gamma_inv(self, xi: float) -> float:
        xi = float(xi)
        a, b = self.spec.a, self.spec.b
        lo, hi = self.c, self.c
        step = 1.0
        while self.gamma(hi) < xi:
            lo = hi
            hi = min(hi + step, b - 1e-15 * max(1.0, abs(b))) if not math.isinf(b) else hi + step
            step *= 2.0
            if step > 1e12:
                raise ValueError("gamma_inv: target beyond reachable range")
        while self.gamma(lo) > xi:
            hi = lo
            if math.isinf(a):
                lo = lo - step
            else:
                lo = a + (lo - a) / 4.0
            step *= 2.0
            if not math.isinf(a) and lo - a < 1e-300:
                raise ValueError("gamma_inv: target below gamma(a)")
        if lo == hi:
            return lo
        return brentq(lambda x: self.gamma(x) - xi, lo, hi, xtol=1e-12, rtol=8.9e-16)

    def _compute_gamma_a(self) -> float:
        incs = []
        prev = self.c
        for cut in _left_cut_sequence(self.spec.a, self.c):
            piece, _ = quad(self._sqrt_rp, cut, prev, **_QUAD_OPTS)
            incs.append(piece)
            prev = cut
        return -_tail_limit(incs)

    def _check_gamma_b_diverges(self) -> None:
        b = self.spec.b
        if math.isinf(b):
            cuts = [self.c + 4.0 ** k for k in range(1, 12)]
        else:
            cuts = [b - (b - self.c) * 4.0 ** (-k) for k in range(1, 12)]
        incs = []
        prev = self.c
        for cut in cuts:
            piece, _ = quad(self._sqrt_rp, prev, cut, **_QUAD_OPTS)
            incs.append(piece)
            prev = cut
        if incs[-1] < 1e-6 * (1.0 + sum(incs[:-1])):
            raise ValueError(
                f"{self.spec.name}: gamma stays bounded near b (gamma(b) must diverge)")

    # -- A and derived quantities ------------------------------------------

    def _half_log_pr_deriv(self, x):
        """g(x) = A'/(2A) at xi=gamma(x), i.e. (pr)'/(4pr) * sqrt(p/r)."""
        p, r = self.spec.p(x), self.spec.r(x)
        p1, r1 = self._p1(x), self._r1(x)
        return (p1 * r + p * r1) / (4.0 * p * r) * math.sqrt(p / r)

    def _half_log_pr_deriv_prime(self, x):
        """d/dxi of g, expressed at x (chain rule through gamma)."""
        p, r = self.spec.p(x), self.spec.r(x)
        p1, r1 = self._p1(x), self._r1(x)
        p2, r2 = self._p2(x), self._r2(x)
        num = p1 * r + p * r1
        dnum = p2 * r + 2.0 * p1 * r1 + p * r2
        den = 4.0 * p * r
        dden = 4.0 * num
        m = num / den
        dm = (dnum * den - num * dden) / den ** 2
        h = math.sqrt(p / r)
        dh = h * (p1 / p - r1 / r) / 2.0
        dg_dx = dm * h + m * dh
        return dg_dx * h  # dx/dxi = sqrt(p/r)

    def A(self, xi: float) -> float:
        x = self.gamma_inv(xi)
        return math.sqrt(self.spec.p(x) * self.spec.r(x))

    def dA_over_2A(self, xi: float) -> float:
        return self._half_log_pr_deriv(self.gamma_inv(xi))

    def liouville_q(self, xi: float) -> float:
        x = self.gamma_inv(xi)
        g = self._half_log_pr_deriv(x)
        return g * g + self._half_log_pr_deriv_prime(x)

    def _estimate_sigma(self):
        a, b, c = self.spec.a, self.spec.b, self.c
        if math.isinf(b):
            xs = [c + 4.0 ** k for k in range(0, 26)]
        else:
            xs = [b - (b - c) * 4.0 ** (-k) for k in range(1, 26)]
        trace = []
        for x in xs:
            trace.append(self._half_log_pr_deriv(x))
            if len(trace) >= 3 and abs(trace[-1] - trace[-2]) <= 1e-6 \
                    and abs(trace[-1] - trace[-3]) <= 1e-6:
                sigma = trace[-1]
                if sigma < 0 and sigma > -1e-9:
                    sigma = 0.0
                if sigma < 0:
                    raise ValueError(f"sigma estimate negative: {sigma}; trace={trace}")
                return sigma, trace
        raise ValueError(f"sigma estimate did not stabilize; trace={trace}")


def build_standard_form(spec: OperatorSpec, c: float | None = None) -> StandardForm:
    if c is None:
        if math.isinf(spec.a):
            c = 0.0 if math.isinf(spec.b) else spec.b - 1.0
        else:
            c = spec.a + 1.0 if math.isinf(spec.b) else 0.5 * (spec.a + spec.b)
    if not (spec.a < c < spec.b):
        raise ValueError("c must be strictly interior")
    return StandardForm(spec, c)


# ---------------------------------------------------------------------------
# Assumption MP certificate


@dataclass(frozen=True)
class MpCertificate:
    sf: StandardForm
    eta: CoefficientExpr
    grid_xi: np.ndarray       # standard-form coordinates of the probes
    grid_s: np.ndarray        # xi - gamma(a) (only when gamma(a) finite)
    phi_values: np.ndarray
    psi_values: np.ndarray
    checks: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return all(self.checks.values())

    def phi_eta(self, xi: float) -> float:
        return 2.0 * self.sf.dA_over_2A(xi) - self.eta(xi)

    def psi_eta(self, xi: float) -> float:
        deta = self.eta.derivative(xi)
        ev = self.eta(xi)
        return deta / 2.0 - ev * ev / 4.0 + self.sf.dA_over_2A(xi) * ev


def _mp_probe_xs(sf: StandardForm, n: int) -> np.ndarray:
    a, b, c = sf.spec.a, sf.spec.b, sf.c
    x_far = c + 1e6 if math.isinf(b) else b - (b - c) * 1e-6
    if math.isinf(a):
        lo = np.array([c - 4.0 ** k for k in range(20, 0, -1)])
        hi = np.geomspace(1e-4, x_far - c, n - len(lo)) + c
        return np.concatenate([lo, hi])
    offs = np.geomspace((c - a) * 1e-8, x_far - a, n)
    return a + offs


def certify_mp(sf: StandardForm, eta: CoefficientExpr | None = None,
               n_probe: int = 512) -> MpCertificate:
    if eta is None:
        eta = sf.spec.eta if sf.spec.eta is not None else parse_expression("0", "x")
    xs = _mp_probe_xs(sf, max(n_probe, 512))
    # drop probes where steep coefficients leave the float range
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        keep = np.array([
            sf.spec.p(x) > 0 and sf.spec.r(x) > 0
            and math.isfinite(sf.spec.r(x) / sf.spec.p(x))
            and math.isfinite(sf._half_log_pr_deriv(x)) for x in xs])
    xs = xs[keep]
    xi = sf.gamma_grid(xs)
    g = np.array([sf._half_log_pr_deriv(x) for x in xs])
    eta_v = np.asarray(eta(xi), dtype=float) + np.zeros_like(xi)
    eta_d = np.asarray(eta.derivative(xi), dtype=float) + np.zeros_like(xi)
    phi = 2.0 * g - eta_v
    psi = eta_d / 2.0 - eta_v ** 2 / 4.0 + g * eta_v

    slack = 1e-9
    checks = {
        "eta_nonnegative": bool(np.all(eta_v >= -slack)),
        "phi_decreasing": bool(np.all(np.diff(phi) <= slack)),
        "psi_decreasing": bool(np.all(np.diff(psi) <= slack)),
        "phi_vanishes_at_infinity": bool(phi[-1] <= 1e-6 * abs(phi[0]) + 1e-9),
    }
    s = xi - sf.gamma_a if math.isfinite(sf.gamma_a) else np.full_like(xi, np.nan)
    return MpCertificate(sf=sf, eta=eta, grid_xi=xi, grid_s=s,
                         phi_values=phi, psi_values=psi, checks=checks)


@dataclass(frozen=True)
class SupportParams:
    x0: float
    x1: float
    eta_at_origin: float


def support_params(cert: MpCertificate, atol: float = 1e-10) -> SupportParams:
    if not cert.all_ok:
        raise ValueError("MP not certified")
    if not math.isfinite(cert.sf.gamma_a):
        raise ValueError("support parameters need a finite gamma(a); "
                         "the operator is degenerate (full support)")
    s = cert.grid_s
    psi0 = cert.psi_values[0]
    same = np.abs(cert.psi_values - psi0) <= atol
    if np.all(same):
        x0 = math.inf
    else:
        first_diff = int(np.argmin(same))
        x0 = float(s[first_diff - 1]) if first_diff > 0 else 0.0
    small_phi = np.abs(cert.phi_values) <= atol
    if small_phi[0]:
        x1 = 0.0
    elif not np.any(small_phi):
        x1 = math.inf
    else:
        x1 = float(s[int(np.argmax(small_phi))])
    eta0 = float(np.asarray(cert.eta(cert.grid_xi[0]), dtype=float))
    return SupportParams(x0=x0, x1=x1, eta_at_origin=eta0)


# ---------------------------------------------------------------------------
# Built-in operators and definition files


def builtin_operator(name: str) -> OperatorSpec:
    """Built-ins: "cosine", "bessel?alpha=...", "whittaker?alpha=...&kappa=..."."""
    base, _, query = name.partition("?")
    params = dict(urllib.parse.parse_qsl(query))
    if base == "cosine":
        return OperatorSpec("cosine", 0.0, math.inf,
                            parse_expression("1"), parse_expression("1"),
                            eta=parse_expression("0"))
    if base == "bessel":
        alpha = float(params.get("alpha", 0.5))
        if alpha < -0.5:
            raise ValueError("bessel: alpha must be >= -1/2")
        e = repr(2.0 * alpha + 1.0)
        coeff = parse_expression(f"x^{e}")
        return OperatorSpec(f"bessel[alpha={alpha}]", 0.0, math.inf,
                            coeff, coeff, eta=parse_expression("0"))
    if base == "whittaker":
        alpha = float(params.get("alpha", 0.25))
        kappa = float(params.get("kappa", 1.0))
        zeta0 = 1.0 - 2.0 * alpha
        if zeta0 <= 0 or kappa <= 0:
            raise ValueError("whittaker: needs alpha < 1/2 and kappa > 0")
        p = parse_expression(f"x^{repr(1.0 + zeta0)} * exp(-{repr(kappa)}/x)")
        r = parse_expression(f"x^{repr(zeta0 - 1.0)} * exp(-{repr(kappa)}/x)")
        # constant eta = lim A'/A; with this choice phi_eta = kappa*e^{-kappa*z} -> 0
        eta = parse_expression(repr(zeta0))
        return OperatorSpec(f"whittaker[alpha={alpha},kappa={kappa}]",
                            0.0, math.inf, p, r, eta=eta)
    raise ValueError(f"unknown builtin operator {base!r}")


def load_operator(source: str) -> OperatorSpec:
    """Load from "builtin:<name>" or a JSON definition file."""
    if source.startswith("builtin:"):
        return builtin_operator(source[len("builtin:"):])
    with open(source, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    a = float(doc["a"]) if doc["a"] not in ("-inf", "-Infinity") else -math.inf
    b = float(doc["b"]) if doc["b"] not in ("inf", "Infinity") else math.inf
    eta = parse_expression(doc["eta"]) if "eta" in doc else None
    spec = OperatorSpec(doc.get("name", source), a, b,
                        parse_expression(doc["p"]), parse_expression(doc["r"]), eta=eta)
    spec.validate()
    return spec
