"""Equilibrium measure of a polynomial potential in the one-cut regime.

For a support [alpha-, alpha+] with hard edges pinned to the working interval,
the spectral function is

    y(x) = V'(x)/2 - W(x) = sigma_tilde(x) R(x) / L_alpha(x),

with ``L_alpha = prod_{hard} (x - alpha_tau)`` and ``R`` a polynomial.  The
density factor is ``S = +-R`` (the sign flips when the upper edge is hard).
Soft endpoints are fixed by asking ``W(x) ~ 1/x``; the conditions are moments
of ``V' L_alpha / sigma_tilde`` computed as contour integrals.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .analytic_kernel import (
    ContourFamily,
    JoukowskiFrame,
    SeriesFn,
    circle_nodes,
    contour_integral,
    frame_from_support,
    inverse_map,
    series_from_function,
)
from .potential import EdgeConfig, Nature, PotentialSpec, is_confining, polyval, trim

logger = logging.getLogger(__name__)

__all__ = [
    "Support",
    "EquilibriumData",
    "EquilibriumError",
    "solve_support",
    "equilibrium",
    "stieltjes_leading",
    "density",
    "s_function",
    "check_offcritical",
    "s_zero_radii",
    "rate_function",
    "equilibrium_energy",
    "validate_hypotheses",
    "select_working_interval",
    "OFFCRIT_TOL",
]

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 100
ONE_CUT_GRID = 512
OFFCRIT_TOL = 1e-6
ONE_CUT_TOL = 1e-9
MOMENT_RADIUS = 1.25 * 1.15  # Gamma_1 in the default family
MOMENT_NODES = 512


class EquilibriumError(RuntimeError):
    """Raised when the one-cut equilibrium problem has no admissible solution."""


@dataclass(frozen=True)
class Support:
    alpha_minus: float
    alpha_plus: float
    nature_minus: Nature = Nature.SOFT
    nature_plus: Nature = Nature.SOFT

    def __post_init__(self):
        object.__setattr__(self, "nature_minus", Nature(self.nature_minus))
        object.__setattr__(self, "nature_plus", Nature(self.nature_plus))
        object.__setattr__(self, "alpha_minus", float(self.alpha_minus))
        object.__setattr__(self, "alpha_plus", float(self.alpha_plus))
        if not self.alpha_minus < self.alpha_plus:
            raise ValueError("support needs alpha- < alpha+")

    @property
    def hard(self):
        return tuple(t for t, n in ((-1, self.nature_minus), (1, self.nature_plus)) if n is Nature.HARD)

    @property
    def soft(self):
        return tuple(t for t in (-1, 1) if t not in self.hard)

    def endpoint(self, tau: int) -> float:
        return self.alpha_minus if tau < 0 else self.alpha_plus


def _inv_sigma_series(am: float, ap: float, n: int) -> np.ndarray:
    """Coefficients b_k of 1/sigma_tilde(x) = sum_{k>=1} b_k x^{-k}, k = 1..n."""
    # (1 - s1 u + s2 u^2)^{-1/2} with u = 1/x; Miller recurrence for g^p, g_0 = 1
    g = np.array([1.0, -(am + ap), am * ap])
    p = -0.5
    a = np.zeros(n)
    a[0] = 1.0
    for k in range(1, n):
        acc = 0.0
        for j in range(1, min(k, 2) + 1):
            acc += ((p + 1.0) * j - k) * g[j] * a[k - j]
        a[k] = acc / k
    return a  # coefficient of u^{k+1}, k = 0..n-1


def _laurent_at_infinity(poly: np.ndarray, am: float, ap: float, nneg: int):
    """Split poly(x)/sigma_tilde(x) into polynomial part and the x^{-1..-nneg} tail."""
    d = poly.size - 1
    b = _inv_sigma_series(am, ap, d + nneg + 2)
    # term poly_i x^i * b_k x^{-k-1}
    top = d
    coef = {}
    for i, pi in enumerate(poly):
        for k, bk in enumerate(b):
            e = i - k - 1
            if e < -nneg:
                break
            coef[e] = coef.get(e, 0.0) + pi * bk
    polypart = np.array([coef.get(e, 0.0) for e in range(0, max(top, 0))]) if top > 0 else np.zeros(1)
    if polypart.size == 0:
        polypart = np.zeros(1)
    tail = np.array([coef.get(-k, 0.0) for k in range(1, nneg + 1)])
    return polypart, tail


def _hard_poly(support: Support) -> np.ndarray:
    L = np.array([1.0])
    for t in support.hard:
        L = P.polymul(L, [-support.endpoint(t), 1.0])
    return L


def _moment_conditions(v1: np.ndarray, support: Support, radius=MOMENT_RADIUS, m=MOMENT_NODES):
    """Residuals and Jacobian of the soft-edge conditions.

    m_k = (1/2 pi i) oint V'(xi) L(xi) xi^{k-1} / (2 sigma_tilde(xi)) d xi; with
    dx / sigma_tilde = dz / z this is the mean over the circle of V' L xi^{k-1} / 2.
    """
    fr = frame_from_support(support.alpha_minus, support.alpha_plus)
    z = circle_nodes(radius, m)
    x = fr.x_of_z(z)
    base = polyval(v1, x) * polyval(_hard_poly(support), x) / 2.0
    soft = support.soft
    if len(soft) == 2:
        ks, targets = (1, 2), (0.0, 1.0)
    elif len(soft) == 1:
        ks, targets = (1,), (1.0,)
    else:
        return np.zeros(0), np.zeros((0, 0))
    F = np.array([np.mean(base * x ** (k - 1)).real - t for k, t in zip(ks, targets)])
    J = np.zeros((len(ks), len(soft)))
    for c, tau in enumerate(soft):
        d = base / (2.0 * (x - support.endpoint(tau)))
        for r, k in enumerate(ks):
            J[r, c] = np.mean(d * x ** (k - 1)).real
    return F, J


def _semicircle_guess(v0: np.ndarray):
    c = np.pad(v0, (0, max(0, 3 - v0.size)))
    a1, a2 = c[1], c[2]
    if a2 <= 0:
        return None
    x0 = -a1 / (2.0 * a2)
    r = 2.0 / math.sqrt(2.0 * a2)
    return x0 - r, x0 + r


def _scan_guess(v1, edges: EdgeConfig, lo, hi):
    """Coarse search for a starting support when no quadratic guess exists."""
    best, arg = math.inf, None
    soft = edges.soft
    span = hi - lo
    grid = np.linspace(0.02, 0.98, 25)
    for u in grid:
        for w in (grid if len(soft) == 2 else [None]):
            am = edges.a_minus if -1 not in soft else lo + u * span
            if len(soft) == 2:
                ap = lo + w * span
            else:
                ap = edges.a_plus if 1 not in soft else lo + u * span
                if -1 in soft:
                    am = lo + u * span
            if not am < ap:
                continue
            sup = Support(am, ap, edges.nature_minus, edges.nature_plus)
            F, _ = _moment_conditions(v1, sup)
            nrm = float(np.linalg.norm(F))
            if nrm < best:
                best, arg = nrm, (am, ap)
    return arg


def solve_support(v0, edges: EdgeConfig, tol: float = NEWTON_TOL, maxit: int = NEWTON_MAXIT, guess=None) -> Support:
    """Support endpoints by damped Newton on the soft-edge moment conditions.

    Hard endpoints are pinned to the working interval.  After convergence the
    density sign is checked on a Chebyshev grid.
    """
    v0 = trim(v0)
    v1 = trim(P.polyder(v0)) if v0.size > 1 else np.zeros(1)
    soft = edges.soft
    lo, hi = edges.a_minus, edges.a_plus
    am, ap = lo, hi
    if soft:
        g = guess if guess is not None else _semicircle_guess(v0)
        if g is not None:
            if -1 in soft:
                am = g[0]
            if 1 in soft:
                ap = g[1]
        if g is None or not (lo <= am < ap <= hi) or (
            len(soft) == 1 and not (lo < (am if -1 in soft else ap) < hi)
        ):
            sg = _scan_guess(v1, edges, lo, hi)
            if sg is None:
                raise EquilibriumError("newton diverged: no starting point")
            am, ap = sg
    sup = Support(am, ap, edges.nature_minus, edges.nature_plus)
    F, J = _moment_conditions(v1, sup)
    it = 0
    while soft and np.max(np.abs(F)) > tol:
        it += 1
        if it > maxit:
            raise EquilibriumError(f"newton diverged: residual {np.max(np.abs(F)):.3e} after {maxit} iterations")
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise EquilibriumError("newton diverged: singular Jacobian") from exc
        lam = 1.0
        nrm0 = np.linalg.norm(F)
        while True:
            vals = {t: sup.endpoint(t) for t in (-1, 1)}
            for s, t in zip(step, soft):
                vals[t] += lam * s
            ok = vals[-1] < vals[1] and all(np.isfinite(list(vals.values())))
            if ok:
                cand = Support(vals[-1], vals[1], edges.nature_minus, edges.nature_plus)
                Fc, Jc = _moment_conditions(v1, cand)
                if np.linalg.norm(Fc) < nrm0 or lam < 1e-3:
                    break
            lam *= 0.5
            if lam < 1e-10:
                raise EquilibriumError("newton diverged: line search failed")
        sup, F, J = cand, Fc, Jc
    for tau in soft:
        a = sup.endpoint(tau)
        if not (edges.a_minus < a < edges.a_plus):
            raise EquilibriumError(f"soft endpoint escaped interval: alpha={a:.6g}")
    eq = _build(v0, edges, sup)
    smin, _ = _min_on_support(eq)
    if smin <= ONE_CUT_TOL * max(1.0, float(np.max(np.abs(eq.R)))):
        raise EquilibriumError(f"one-cut violated: density vanishes or turns negative inside the support (min S = {smin:.3e})")
    logger.debug("support solved in %d iterations: [%.15g, %.15g]", it, sup.alpha_minus, sup.alpha_plus)
    return sup


def _min_on_support(eq) -> tuple[float, float]:
    """Minimum of S over [alpha-, alpha+]: Chebyshev grid plus the real critical points of S."""
    a, b = eq.support.alpha_minus, eq.support.alpha_plus
    pts = [_cheb_grid(a, b, ONE_CUT_GRID), np.array([a, b])]
    if eq.R.size > 2:
        r = P.polyroots(P.polyder(eq.R))
        r = r[np.abs(r.imag) < 1e-9].real
        pts.append(r[(r > a) & (r < b)])
    x = np.concatenate(pts)
    s = np.real(eq.S(x))
    i = int(np.argmin(s))
    return float(s[i]), float(x[i])


def _cheb_grid(a, b, n):
    k = np.arange(n)
    t = np.cos((2 * k + 1) * np.pi / (2 * n))
    return 0.5 * (a + b) + 0.5 * (b - a) * t


@dataclass(frozen=True)
class EquilibriumData:
    """Leading-order data of the one-cut problem."""

    support: Support
    frame: JoukowskiFrame
    edges: EdgeConfig
    potential0: np.ndarray
    L_alpha: np.ndarray
    R: np.ndarray
    w1m1: SeriesFn
    constant_C: float = float("nan")

    @property
    def s_sign(self) -> float:
        return -1.0 if self.support.nature_plus is Nature.HARD else 1.0

    def S(self, x):
        """Density factor S (analytic; a polynomial for polynomial potentials)."""
        return self.s_sign * polyval(self.R, x)

    def y_z(self, z):
        z = np.asarray(z, dtype=complex)
        x = self.frame.x_of_z(z)
        return self.frame.sigma_tilde(z) * polyval(self.R, x) / polyval(self.L_alpha, x)

    def y(self, x):
        return self.y_z(inverse_map(self.frame, x))

    def W_z(self, z):
        return self.w1m1.eval_z(z)

    def log_potential_z(self, z):
        """U(x) = int log(x - xi) d mu(xi), valid for |z| >= 1 (real part on the cut)."""
        z = np.asarray(z, dtype=complex)
        f = self.w1m1.with_pole_order(max(1, self.w1m1.pole_order))
        if f.pole_order != 1:
            raise ValueError("log potential needs pole order <= 1")
        c = f.coeffs
        g = self.frame.gamma
        acc = np.log(g) + np.log(z)
        for j in range(2, c.size + 1):
            acc = acc - g * c[j - 1] * z ** (1 - j) / (j - 1)
        return acc

    def theta_quadrature(self, n: int = 256):
        """Nodes x_k and weights w_k with sum_k w_k g(x_k) = int g d mu_eq."""
        th = (np.arange(n) + 0.5) * np.pi / n
        x = self.frame.center + 2.0 * self.frame.gamma * np.cos(th)
        num = np.ones_like(x)
        for t in self.support.soft:
            num *= np.abs(x - self.support.endpoint(t))
        for t in self.support.hard:
            num /= np.abs(x - self.support.endpoint(t))
        w = self.S(x) * np.sqrt(num) * 2.0 * self.frame.gamma * np.sin(th) / np.pi * (np.pi / n)
        return x, w


def _build(v0: np.ndarray, edges: EdgeConfig, sup: Support) -> EquilibriumData:
    fr = frame_from_support(sup.alpha_minus, sup.alpha_plus)
    v1 = trim(P.polyder(v0)) if v0.size > 1 else np.zeros(1)
    L = _hard_poly(sup)
    polypart, _ = _laurent_at_infinity(P.polymul(v1, L) / 2.0, sup.alpha_minus, sup.alpha_plus, 2)
    R = np.array(polypart, dtype=float)
    if len(sup.hard) == 2:
        R = P.polysub(R, [1.0])
    R = trim(R)

    def W(z):
        x = fr.x_of_z(z)
        return polyval(v1, x) / 2.0 - fr.sigma_tilde(z) * polyval(R, x) / polyval(L, x)

    pole = 1 if sup.hard else 0
    w1 = series_from_function(W, fr, radius=1.25, pole_order=pole, in_z=True, m0=128)
    eq = EquilibriumData(sup, fr, edges, v0, L, R, w1)
    zc = np.array([1j])  # preimage of the center lies on the unit circle
    C = float(2.0 * eq.log_potential_z(zc).real[0] - polyval(v0, fr.center))
    return EquilibriumData(sup, fr, edges, v0, L, R, w1, C)


def equilibrium(spec_or_coeffs, edges: EdgeConfig, **kw) -> EquilibriumData:
    """Solve the support and assemble all leading-order data."""
    v0 = spec_or_coeffs.coeffs(0) if isinstance(spec_or_coeffs, PotentialSpec) else trim(spec_or_coeffs)
    sup = solve_support(v0, edges, **kw)
    return _build(v0, edges, sup)


def stieltjes_leading(eq: EquilibriumData, x):
    return eq.w1m1(x)


def density(eq: EquilibriumData, x):
    x = np.asarray(x, dtype=float)
    a, b = eq.support.alpha_minus, eq.support.alpha_plus
    if np.any((x <= a) | (x >= b)):
        raise ValueError("density evaluated outside the support")
    num = np.ones_like(x)
    for t in eq.support.soft:
        num = num * np.abs(x - eq.support.endpoint(t))
    for t in eq.support.hard:
        num = num / np.abs(x - eq.support.endpoint(t))
    return eq.S(x) * np.sqrt(num) / np.pi


def s_function(eq: EquilibriumData, x):
    """Analytic continuation of S; no division at the edges."""
    return eq.S(np.asarray(x))


def s_zero_radii(eq: EquilibriumData) -> np.ndarray:
    """|z| of the preimages of the zeros of S (1.0 for zeros on the cut)."""
    if eq.R.size < 2:
        return np.zeros(0)
    out = []
    for r in P.polyroots(eq.R):
        try:
            out.append(float(np.abs(inverse_map(eq.frame, r))))
        except ValueError:
            out.append(1.0)
    return np.array(out)


def check_offcritical(eq: EquilibriumData, contours: ContourFamily | None = None, tol: float = OFFCRIT_TOL, n: int = 2048):
    """S must stay positive on [a-, a+] and no zero of S may sit inside the nested contours."""
    contours = contours or ContourFamily.geometric()
    grid = np.linspace(eq.edges.a_minus, eq.edges.a_plus, n)
    s = np.real(eq.S(grid))
    i = int(np.argmin(s))
    min_contour = math.inf
    for l in range(len(contours.radii)):
        xs = contours.points(eq.frame, l)
        min_contour = min(min_contour, float(np.min(np.abs(eq.S(xs)))))
    sign_change = bool(np.any(np.sign(s[:-1]) * np.sign(s[1:]) < 0))
    zr = s_zero_radii(eq)
    enclosed = bool(np.any(zr < contours.radii[-1])) if contours.radii else False
    ok = bool(s[i] > tol and not sign_change and min_contour > tol and not enclosed)
    return {
        "ok": ok,
        "minS": float(s[i]),
        "argmin": complex(grid[i]),
        "min_abs_S_contours": min_contour,
        "zeros_enclosed": enclosed,
        "zeros_inside_gamma_E": bool(np.any(zr < contours.rho_E)),
        "min_zero_radius": float(zr.min()) if zr.size else math.inf,
    }


def rate_function(eq: EquilibriumData, x):
    """Shifted rate function J~(x) = V(x)/2 - int log|x - xi| d mu + C/2."""
    x = np.asarray(x, dtype=float)
    a, b = eq.support.alpha_minus, eq.support.alpha_plus
    if np.any((x > a) & (x < b)):
        raise ValueError("rate function evaluated inside the support")
    out = np.zeros_like(x)
    inside = (x == a) | (x == b)
    xo = x[~inside]
    if xo.size:
        z = inverse_map(eq.frame, xo + 0j)
        out[~inside] = 0.5 * polyval(eq.potential0, xo) - eq.log_potential_z(z).real + 0.5 * eq.constant_C
    return out


def equilibrium_energy(eq: EquilibriumData, n: int = 512) -> float:
    """E[mu] = int V d mu - double integral of log|xi - eta|, via the log potential on the cut."""
    x, w = eq.theta_quadrature(n)
    th = np.arccos(np.clip((x - eq.frame.center) / (2.0 * eq.frame.gamma), -1, 1))
    U = eq.log_potential_z(np.exp(1j * th)).real
    return float(np.sum(w * (polyval(eq.potential0, x) - U)))


def validate_hypotheses(spec: PotentialSpec, edges: EdgeConfig, contours: ContourFamily | None = None) -> dict:
    report = {"confinement": bool(is_confining(spec))}
    try:
        eq = equilibrium(spec, edges)
    except EquilibriumError as exc:
        msg = str(exc)
        report.update(one_cut=False, offcritical=False, large_deviation=False, error=msg)
        report["edge_consistency"] = not (edges.hard and "one-cut" in msg)
        report["ok"] = False
        return report
    report["one_cut"] = True
    oc = check_offcritical(eq, contours)
    report["offcritical"] = oc["ok"]
    report["minS"] = oc["minS"]
    # rate function strictly positive away from the support inside [a-, a+]
    pts = []
    for lo, hi in ((eq.edges.a_minus, eq.support.alpha_minus - 0.1), (eq.support.alpha_plus + 0.1, eq.edges.a_plus)):
        if hi > lo:
            pts.append(np.linspace(lo, hi, 64))
    if pts:
        J = rate_function(eq, np.concatenate(pts))
        report["large_deviation"] = bool(np.all(J > 0))
    else:
        report["large_deviation"] = True
    report["edge_consistency"] = True
    report["ok"] = all(report[k] for k in ("confinement", "one_cut", "offcritical", "large_deviation", "edge_consistency"))
    return report


def select_working_interval(spec: PotentialSpec, edges: EdgeConfig | None, margin: float, box: float = 1e4) -> EdgeConfig:
    """Trim soft edges to alpha_tau -+ margin after a provisional solve on a large box."""
    if not margin > 0:
        raise ValueError("margin must be positive: a soft working edge lies strictly outside the support")
    lo, hi = spec.interval
    nm = edges.nature_minus if edges is not None else Nature.SOFT
    npl = edges.nature_plus if edges is not None else Nature.SOFT
    if nm is Nature.HARD and npl is Nature.HARD:
        return edges
    blo = edges.a_minus if (edges is not None and nm is Nature.HARD) else (lo if math.isfinite(lo) else -box)
    bhi = edges.a_plus if (edges is not None and npl is Nature.HARD) else (hi if math.isfinite(hi) else box)
    prov = EdgeConfig(blo, bhi, nm, npl)
    eq = equilibrium(spec, prov)
    am = blo if nm is Nature.HARD else max(blo, eq.support.alpha_minus - margin)
    ap = bhi if npl is Nature.HARD else min(bhi, eq.support.alpha_plus + margin)
    out = EdgeConfig(am, ap, nm, npl)
    s = eq.S(np.linspace(am, ap, 2048))
    if np.min(s) <= 0:
        raise EquilibriumError("margin pushes the working interval past a zero of S")
    return out
