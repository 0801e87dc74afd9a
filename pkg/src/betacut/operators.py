"""Linear operators of the loop equations: K, its Tricomi inverse, and N_g.

All functions live on the Joukowski frame of the equilibrium support.  With
``phi = sigma_tilde / (2 y) = L / (2 R)`` (holomorphic in an annulus around the
unit circle that stops at the zeros of S) the Tricomi formula becomes

    sigma_tilde(x(z)) (K^{-1} g)(x(z)) = sum_{j >= 1} (u_j - u_{-j}) z^{-j},

where ``u_l`` are the Laurent coefficients of ``u = phi g`` on any circle
1 < |w| < r_S.  Pole factors ``(1 - z^{-2})^P`` are carried through so that no
growing coefficients are ever formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .analytic_kernel import (
    NOISE_TOL,
    ContourFamily,
    SeriesFn,
    _mul_pole_factor,
    circle_nodes,
    pole_factor_coeffs,
    series_from_samples,
)
from .equilibrium import EquilibriumData, s_zero_radii
from .potential import EdgeConfig, polyval, trim

__all__ = [
    "EdgeData",
    "OperatorError",
    "NotInImageError",
    "hard_edge_data",
    "apply_K",
    "apply_K_inverse",
    "apply_N",
    "operator_norm_diagnostic",
    "kinv_samples",
    "k_samples",
    "KINV_TOL",
    "RHO_Q",
    "RHO_EVAL",
    "RHO_E",
]

KINV_TOL = 1e-7
RHO_Q = 1.2
RHO_EVAL = 1.25 * 1.15 ** 2  # Gamma_2 of the default family
RHO_E = 4.0
H2_TOL = 1e-9


class OperatorError(RuntimeError):
    pass


class NotInImageError(OperatorError):
    pass


@dataclass(frozen=True)
class EdgeData:
    """``L(x) = prod_hard (x - a_tau)`` (ascending coefficients) and the constant c."""

    L: np.ndarray
    c: float
    n_hard: int = 0

    def L_of(self, x):
        return polyval(self.L, x)


def hard_edge_data(edges: EdgeConfig) -> EdgeData:
    L = np.array([1.0])
    for t in edges.hard:
        L = P.polymul(L, [-edges.edge(t), 1.0])
    if len(edges.hard) == 1:
        tau = edges.soft[0]
        c = 1.0 / (edges.edge(tau) - edges.edge(-tau))
    else:
        c = 0.0
    return EdgeData(trim(L), c, len(edges.hard))


def _phi(eq: EquilibriumData, x):
    """sigma_tilde / (2 y) = L_alpha / (2 R)."""
    return polyval(eq.L_alpha, x) / (2.0 * polyval(eq.R, x))


def _check_radius(eq: EquilibriumData, rho: float):
    if not rho > 1.0:
        raise OperatorError("contour invalid: Tricomi circle must lie outside the cut")
    zr = s_zero_radii(eq)
    if zr.size and np.min(zr) <= rho:
        raise OperatorError(f"contour invalid: a zero of S lies at |z| = {np.min(zr):.4g} inside the Tricomi circle")


def _pole_poly(p: int, z):
    return (1.0 - z ** -2) ** p


def kinv_samples(eq: EquilibriumData, e, pole_order: int, radius: float, ncoef: int | None = None, axis: int = -1):
    """K^{-1} from samples ``e`` of g on the circle |w| = radius (node axis ``axis``).

    ``g`` must have pole order ``pole_order``.  Returns stored coefficients
    (along ``axis``) of the result, whose pole order is ``pole_order + 1``.
    """
    e = np.moveaxis(np.asarray(e, dtype=complex), axis, -1)
    m = e.shape[-1]
    w = circle_nodes(radius, m)
    x = eq.frame.x_of_z(w)
    phi = _phi(eq, x)
    T = _pole_poly(pole_order, w)
    u_hat = np.fft.fft(phi * e, axis=-1) / m
    v_hat = np.fft.fft(phi * T * e, axis=-1) / m
    # round-off content would be amplified by radius^l below; drop it
    for h in (u_hat, v_hat):
        floor = NOISE_TOL * np.max(np.abs(h), axis=-1, keepdims=True)
        h[np.abs(h) <= floor] = 0.0
    half = m // 2
    n = half - 1 if ncoef is None else min(ncoef, half - 1)
    # Laurent coefficients: index l >= 0 at fft slot l (scaled by radius^l), l < 0 at slot m + l
    pos = np.arange(0, half)
    u_pos = u_hat[..., :half] * radius ** (-pos)  # u_l, l = 0..half-1
    jn = np.arange(1, half)
    v_neg = v_hat[..., m - jn] * radius ** jn  # v_{-j}, j = 1..half-1
    # T * sum_{j>=1} u_j z^{-j}
    A = np.zeros(e.shape[:-1] + (half - 1 + 2 * pole_order,), dtype=complex)
    A[..., : half - 1] = u_pos[..., 1:]
    TA = _mul_pole_factor(A[..., : half - 1], pole_order)
    out = np.zeros(e.shape[:-1] + (half - 1,), dtype=complex)
    out += TA[..., : half - 1]
    out -= v_neg
    # [T * u_{>=0}]_{<0}: t_k z^{-2k} u_l z^l with l < 2k
    t = pole_factor_coeffs(pole_order)
    for k in range(1, pole_order + 1):
        for l in range(0, min(2 * k, half)):
            j = 2 * k - l  # power z^{-j}
            if 1 <= j <= half - 1:
                out[..., j - 1] += t[k] * u_pos[..., l]
    # multiply by z^{-1} / gamma
    res = np.zeros(e.shape[:-1] + (n,), dtype=complex)
    res[..., 1:n] = out[..., : n - 1]
    res /= eq.frame.gamma
    return np.moveaxis(res, -1, axis)


def _q_samples(eq: EquilibriumData, edge: EdgeData, f: SeriesFn, x, g_poly=None, rho_E: float = RHO_E, mE: int = 256):
    """(1/2 pi i) oint_{Gamma_E} L(xi) (1/(x - xi) + c) g(xi) f(xi) d xi for x inside Gamma_E."""
    zE = circle_nodes(rho_E, mE)
    xi = eq.frame.x_of_z(zE)
    gp = g_poly if g_poly is not None else _v1(eq)
    h = polyval(edge.L, xi) * polyval(gp, xi) * f.eval_z(zE) * eq.frame.gamma * (zE - 1.0 / zE)
    ker = 1.0 / (x[:, None] - xi[None, :]) + edge.c
    return (ker @ h) / mE


def _v1(eq: EquilibriumData):
    v0 = eq.potential0
    return trim(P.polyder(v0)) if v0.size > 1 else np.zeros(1)


def k_samples(eq: EquilibriumData, edge: EdgeData, f: SeriesFn, z, rho_E: float = RHO_E, mE: int = 256):
    """Values of Kf at the points x(z) (|z| inside the image of Gamma_E)."""
    z = np.asarray(z, dtype=complex)
    x = eq.frame.x_of_z(z)
    q = -_q_samples(eq, edge, f, x.ravel(), rho_E=rho_E, mE=mE).reshape(x.shape)
    return -2.0 * eq.y_z(z) * f.eval_z(z) + q / polyval(edge.L, x)


def _is_h2(f: SeriesFn, tol: float = H2_TOL) -> bool:
    top = np.max(np.abs(f.coeffs)) if f.size else 0.0
    return top == 0.0 or abs(f.coeffs[0]) <= tol * top


def _nodes_for(f: SeriesFn, extra: int = 0) -> int:
    need = max(256, 4 * (f.size + 2 * f.pole_order + extra))
    return 1 << int(math.ceil(math.log2(need)))


def apply_K(eq: EquilibriumData, edge: EdgeData, f: SeriesFn, rho_eval: float = RHO_EVAL, rho_E: float = RHO_E, m: int | None = None) -> SeriesFn:
    """Kf = -2 y f + (Q f) / L, with Q f by trapezoidal quadrature on Gamma_E."""
    if f.frame != eq.frame:
        raise ValueError("series and equilibrium live on different frames")
    if not _is_h2(f):
        raise ValueError("K acts on H^(2): the 1/x coefficient of f must vanish")
    if not np.any(f.coeffs):
        return SeriesFn(eq.frame, np.zeros(1), f.pole_order)
    if rho_E <= rho_eval:
        raise OperatorError("contour invalid: Gamma_E must enclose the evaluation circle")
    m = m or _nodes_for(f, 8)
    z = circle_nodes(rho_eval, m)
    vals = k_samples(eq, edge, f, z, rho_E=rho_E, mE=max(256, m))
    p_out = f.pole_order + 2 * edge.n_hard
    out = series_from_samples(vals, eq.frame, rho_eval, pole_order=p_out, h1_tol=1e-8)
    return out.trimmed(1e-16, 1.0)


def apply_K_inverse(
    eq: EquilibriumData,
    edge: EdgeData,
    g: SeriesFn,
    rho_q: float = RHO_Q,
    kinv_tol: float = KINV_TOL,
    check: bool = True,
    m: int | None = None,
    rho_check: float = RHO_EVAL,
    return_residual: bool = False,
):
    """Tricomi inverse of K on a circle |w| = rho_q; checks the residual of K K^{-1} g."""
    if g.frame != eq.frame:
        raise ValueError("series and equilibrium live on different frames")
    _check_radius(eq, rho_q)
    if m is None:
        m = _nodes_for(g, 16)
        # enough nodes for the positive Laurent tail of phi, decaying like (rho_q / r_S)^l
        zr = s_zero_radii(eq)
        if zr.size:
            need = int(40.0 / math.log(np.min(zr) / rho_q)) + 16
            m = max(m, 1 << int(math.ceil(math.log2(2 * need))))
    w = circle_nodes(rho_q, m)
    G = SeriesFn(eq.frame, g.coeffs, 0).eval_z(w)
    e = G / _pole_poly(g.pole_order, w)
    c = kinv_samples(eq, e, g.pole_order, rho_q)
    f = SeriesFn(eq.frame, c, g.pole_order + 1).trimmed(1e-16, 1.0)
    res = 0.0
    if check:
        zc = circle_nodes(rho_check, 256)
        gv = g.eval_z(zc)
        kv = k_samples(eq, edge, f, zc)
        nrm = float(np.max(np.abs(gv)))
        res = float(np.max(np.abs(kv - gv))) / nrm if nrm > 0 else float(np.max(np.abs(kv)))
        if res > kinv_tol:
            raise NotInImageError(f"not in Im K: residual {res:.3e} exceeds {kinv_tol:.1e}")
    return (f, res) if return_residual else f


def apply_N(edge: EdgeData, g, f: SeriesFn, rho_eval: float = RHO_EVAL, rho_E: float = RHO_E, m: int | None = None) -> SeriesFn:
    """N_g f = g f + oint_{Gamma_E} (L(xi)/L(x)) (1/(x - xi) + c) g(xi) f(xi) d xi / 2 pi i.

    ``g`` is a polynomial (ascending coefficients) or a callable of x that is
    analytic inside Gamma_E.
    """
    fr = f.frame
    gfun = g if callable(g) else (lambda x, _c=np.asarray(g, dtype=float): polyval(_c, x))
    m = m or _nodes_for(f, 16)
    z = circle_nodes(rho_eval, m)
    x = fr.x_of_z(z)
    zE = circle_nodes(rho_E, max(256, m))
    xi = fr.x_of_z(zE)
    h = polyval(edge.L, xi) * gfun(xi) * f.eval_z(zE) * fr.gamma * (zE - 1.0 / zE)
    ker = 1.0 / (x[:, None] - xi[None, :]) + edge.c
    q = (ker @ h) / zE.size
    vals = gfun(x) * f.eval_z(z) + q / polyval(edge.L, x)
    p_out = f.pole_order + 2 * edge.n_hard
    return series_from_samples(vals, fr, rho_eval, pole_order=p_out, h1_tol=1e-8).trimmed(1e-16, 1.0)


def operator_norm_diagnostic(
    eq: EquilibriumData,
    edge: EdgeData,
    l: int = 2,
    trials: int = 50,
    contours: ContourFamily | None = None,
    seed: int = 0,
    nterms: int = 12,
) -> float:
    """Randomized lower estimate of ||K^{-1}||_{Gamma_l} = sup ||K^{-1} g|| / ||g||.

    Trial functions are random combinations of z^{-1..nterms} scaled so that
    every term has unit size on Gamma_l; the largest observed ratio is returned.
    """
    contours = contours or ContourFamily.geometric()
    rho = contours.radius(l)
    rho_q = min(RHO_Q, 0.5 * (1.0 + rho)) if rho <= RHO_Q else RHO_Q
    rng = np.random.default_rng(seed)
    zl = circle_nodes(rho, 256)
    best = 0.0
    for _ in range(trials):
        c = (rng.standard_normal(nterms) + 1j * rng.standard_normal(nterms)) * rho ** np.arange(1, nterms + 1)
        g = SeriesFn(eq.frame, c, 0)
        f = apply_K_inverse(eq, edge, g, rho_q=rho_q, check=False)
        r = float(np.max(np.abs(f.eval_z(zl))) / np.max(np.abs(g.eval_z(zl))))
        best = max(best, r)
    return best
