"""Free energy and linear-statistic functionals built on the correlator expansion.

The free energy is reached by interpolating from the Gaussian potential with
the same support, V_s = V_G + s (V - V_G).  Along the path

    d/ds ln Z = -(N beta / 2) E_s[sum_i (V - V_G)(lambda_i)],

and expanding the expectation in correlators gives the coefficients F^{k} of

    ln Z = gaussian_lnZ + sum_{k >= -2} N^{-k} F^{k}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import gammaln

from .analytic_kernel import contour_integral
from .equilibrium import EquilibriumData, equilibrium, validate_hypotheses
from .operators import RHO_EVAL, EdgeData, apply_K_inverse, apply_N, hard_edge_data
from .potential import EdgeConfig, PotentialSpec, derivative, gaussian_reference, interpolate, polyval, trim
from .recursion import M_DEFAULT, expand_w1, w1_subleading

__all__ = [
    "FreeEnergyExpansion",
    "CLTResult",
    "InterpolationError",
    "selberg_lnZ",
    "gaussian_lnZ",
    "free_energy_coeffs",
    "lnZ_prediction",
    "clt_mean",
    "clt_covariance",
    "clt",
]

S_NODES = 24
S_TOL = 1e-8
S_MAX_NODES = 192
CONTOUR_NODES = 512
GAUSS_TOL = 1e-12


class InterpolationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FreeEnergyExpansion:
    coeffs: dict
    reference: dict
    s_quadrature: dict = field(default_factory=dict)

    def __getitem__(self, k: int) -> float:
        return self.coeffs[k]

    @property
    def max_k(self) -> int:
        return max(self.coeffs)


@dataclass(frozen=True)
class CLTResult:
    mean: float
    covariance: float
    h: tuple


def selberg_lnZ(N: int, beta: float) -> float:
    """ln of int_R^N |Delta(lambda)|^beta prod_i exp(-N beta lambda_i^2 / 4) d lambda_i."""
    if N < 1 or beta <= 0:
        raise ValueError("selberg_lnZ needs N >= 1 and beta > 0")
    j = np.arange(1, N + 1)
    g = float(np.sum(gammaln(1.0 + j * beta / 2.0)) - N * gammaln(1.0 + beta / 2.0))
    # Mehta's integral has weight exp(-t^2/2); rescale t = lambda sqrt(N beta / 2)
    expo = N + beta * N * (N - 1) / 2.0
    return 0.5 * N * math.log(2.0 * math.pi) + g + 0.5 * expo * math.log(2.0 / (N * beta))


def gaussian_lnZ(N: int, beta: float, alpha_minus: float, alpha_plus: float) -> float:
    """ln Z of the Gaussian potential whose semicircle sits on [alpha-, alpha+]."""
    if not alpha_minus < alpha_plus:
        raise ValueError("gaussian_lnZ needs alpha- < alpha+")
    expo = N + beta * N * (N - 1) / 2.0
    return selberg_lnZ(N, beta) + expo * math.log((alpha_plus - alpha_minus) / 4.0)


def _poly(h) -> np.ndarray:
    return trim(np.atleast_1d(np.asarray(h, dtype=float)))


def _oint(frame, f, h, radius: float = RHO_EVAL, m: int = CONTOUR_NODES) -> float:
    """oint h f dx / 2 pi i around the cut; f is evaluated in z."""
    val = contour_integral(lambda z: polyval(h, frame.x_of_z(z)) * f(z), frame, radius, m=m, in_z=True)
    return float(np.real(val))


def _integrand(spec: PotentialSpec, ref: PotentialSpec, edges: EdgeConfig, beta: float, maxK: int, M: int):
    """s -> array of F^{k} integrands, k = -2..maxK."""
    nmax = max(spec.max_order, ref.max_order)
    dV = [P.polysub(spec.coeffs(m) if m <= spec.max_order else [0.0],
                    ref.coeffs(m) if m <= ref.max_order else [0.0]) for m in range(maxK + 3)]
    edge = hard_edge_data(edges)

    def f(s: float) -> np.ndarray:
        vs = interpolate(ref, spec, s)
        rep = validate_hypotheses(vs, edges)
        if not rep["ok"]:
            raise InterpolationError(f"interpolation path leaves one-cut class at s={s:.6g}")
        eq = equilibrium(vs, edges)
        ex = expand_w1(eq, edge, vs, beta, maxK + 1, M=M)
        fr = eq.frame
        ints = {}
        for m in range(min(nmax, maxK + 2) + 1):
            if not np.any(dV[m]):
                continue
            for j in range(-1, maxK + 2 - m):
                t = ex[(1, j)]
                ints[(m, j)] = 0.0 if t.is_zero else _oint(fr, t.eval_z, dV[m])
        out = np.zeros(maxK + 3)
        for i, k in enumerate(range(-2, maxK + 1)):
            out[i] = -0.5 * beta * sum(v for (m, j), v in ints.items() if m + j == k + 1)
        return out

    return f


def free_energy_coeffs(spec: PotentialSpec, edges: EdgeConfig, beta: float, maxK: int,
                       nodes: int = S_NODES, tol: float = S_TOL, M: int = M_DEFAULT) -> FreeEnergyExpansion:
    """F^{k}, k = -2..maxK, by Gauss-Legendre quadrature along the Gaussian path.

    The node count doubles until successive estimates agree to ``tol``.
    """
    if edges.hard:
        raise ValueError("absolute free energies need two soft edges")
    if maxK < -2:
        raise ValueError("maxK must be >= -2")
    eq = equilibrium(spec, edges)
    am, ap = eq.support.alpha_minus, eq.support.alpha_plus
    ref = gaussian_reference(am, ap, interval=spec.interval)
    reference = {"kind": "gaussian", "alpha_minus": am, "alpha_plus": ap, "beta": float(beta)}
    diff = [P.polysub(spec.coeffs(m), ref.coeffs(m) if m == 0 else [0.0]) for m in range(spec.max_order + 1)]
    if np.all(np.abs(diff[0][1:]) <= GAUSS_TOL) and all(np.all(np.abs(d) <= GAUSS_TOL) for d in diff[1:]):
        # a Gaussian up to an additive constant, which only enters F^{-2}
        coeffs = {k: 0.0 for k in range(-2, maxK + 1)}
        coeffs[-2] = -0.5 * beta * float(diff[0][0])
        return FreeEnergyExpansion(coeffs, reference, {"rule": "none", "nodes": 0, "delta": 0.0})
    f = _integrand(spec, ref, edges, beta, maxK, M)
    prev = None
    n = nodes
    while True:
        x, w = np.polynomial.legendre.leggauss(n)
        s = 0.5 * (x + 1.0)
        vals = np.array([f(si) for si in s])
        est = 0.5 * (w @ vals)
        if prev is not None and np.max(np.abs(est - prev)) < tol:
            break
        if n >= S_MAX_NODES:
            raise InterpolationError(f"s quadrature not converged with {n} nodes")
        prev = est
        n *= 2
    coeffs = {k: float(est[i]) for i, k in enumerate(range(-2, maxK + 1))}
    quad = {"rule": "gauss-legendre", "nodes": n, "delta": float(np.max(np.abs(est - prev)))}
    return FreeEnergyExpansion(coeffs, reference, quad)


def lnZ_prediction(fe: FreeEnergyExpansion, N: int, maxK: int | None = None) -> float:
    """gaussian_lnZ plus the truncated series sum_{k=-2}^{maxK} N^{-k} F^{k}."""
    maxK = fe.max_k if maxK is None else maxK
    if maxK > fe.max_k:
        raise ValueError(f"free energy known only up to k = {fe.max_k}")
    ref = fe.reference
    out = gaussian_lnZ(N, ref["beta"], ref["alpha_minus"], ref["alpha_plus"])
    for k in range(-2, maxK + 1):
        out += float(N) ** (-k) * fe.coeffs[k]
    return out


def clt_mean(eq: EquilibriumData, edge: EdgeData, beta: float, h) -> float:
    """m[h]: the order-one shift of E[sum_i h(lambda_i)] - N int h d mu_eq."""
    h = _poly(h)
    if beta == 2.0 and not edge.n_hard:
        return 0.0
    w10 = w1_subleading(eq, edge, beta)
    return _oint(eq.frame, w10.eval_z, h)


def clt_covariance(eq: EquilibriumData, edge: EdgeData, beta: float, h) -> float:
    """C[h] = -(2/beta) oint K^{-1}[N_{h'} W_1^{-1}] h."""
    h = _poly(h)
    dh = derivative(h)
    if not np.any(dh):
        return 0.0
    g = apply_N(edge, dh, eq.w1m1)
    f = apply_K_inverse(eq, edge, g)
    return -(2.0 / beta) * _oint(eq.frame, f.eval_z, h)


def clt(eq: EquilibriumData, edge: EdgeData, beta: float, h) -> CLTResult:
    h = _poly(h)
    return CLTResult(clt_mean(eq, edge, beta, h), clt_covariance(eq, edge, beta, h), tuple(float(c) for c in h))
