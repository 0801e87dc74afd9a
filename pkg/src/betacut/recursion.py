"""Order-by-order solution of the loop equations.

Every correlator W_n^{k} is stored as a coefficient tensor in the Joukowski
variables of all n arguments,

    W(z_1..z_n) = prod_i (1 - z_i^{-2})^{-P} sum c[j_1..j_n] prod_i z_i^{-j_i},

with one pole order P shared by all axes.  To produce W_{n0}^{k0+1} the first
argument x (the live variable) is sampled on the circle |z| = R_LIVE while the
other arguments stay in coefficient space.  The right-hand side E is assembled
there, K^{-1} is applied along the live axis, and the result is symmetrized.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .analytic_kernel import JoukowskiFrame, _mul_pole_factor, circle_nodes, inverse_map
from .equilibrium import EquilibriumData, equilibrium, s_zero_radii
from .operators import RHO_E, RHO_EVAL, EdgeData, KINV_TOL, OperatorError, hard_edge_data, kinv_samples
from .potential import PotentialSpec, derivative, polyval

__all__ = [
    "CorrelatorTerm",
    "Expansion",
    "BetaDecomposition",
    "RecursionError",
    "w1_subleading",
    "assemble_E",
    "next_order",
    "expand_all",
    "expand_w1",
    "loop_residual",
    "beta_decompose",
    "beta_unknowns",
]

R_LIVE = RHO_EVAL  # Gamma_2
R_SPEC = 1.25 * 1.15  # Gamma_1, sampling circle of the spectator bracket
M_DEFAULT = 64
M_CAP = {3: 40, 4: 28}
M_CAP_HIGH = 20
SYM_TOL = 1e-9
CANCEL_TOL = 1e-12
RESIDUAL_Z = 3.0  # soft edges of the residual kernel sit at x(+-3)


class RecursionError(RuntimeError):
    pass


def _basis(z, M: int, P: int):
    """Values of z^{-a} (1 - z^{-2})^{-P}, a = 1..M; shape (len(z), M)."""
    w = 1.0 / np.asarray(z, dtype=complex).ravel()
    B = w[:, None] ** np.arange(1, M + 1)
    if P:
        B = B / ((1.0 - w * w) ** P)[:, None]
    return B


def _dbasis(frame: JoukowskiFrame, z, M: int, P: int):
    """d/dx of the basis functions at z."""
    z = np.asarray(z, dtype=complex).ravel()
    w = 1.0 / z
    j = np.arange(1, M + 1)
    T = 1.0 - w * w
    wj = w[:, None] ** j
    d = -j * wj * w[:, None] / (T ** P)[:, None]
    if P:
        d = d - 2.0 * P * (w ** 3)[:, None] * wj / (T ** (P + 1))[:, None]
    return d * frame.dz_dx(z)[:, None]


def _fit(a: np.ndarray, axis: int, M: int) -> np.ndarray:
    n = a.shape[axis]
    if n == M:
        return a
    if n > M:
        return np.take(a, np.arange(M), axis=axis)
    pad = [(0, 0)] * a.ndim
    pad[axis] = (0, M - n)
    return np.pad(a, pad)


def _lift(a: np.ndarray, axis: int, dp: int, M: int) -> np.ndarray:
    """Raise the pole order along one axis by dp, keeping M coefficients."""
    a = _fit(a, axis, M)
    if dp < 0:
        raise ValueError("cannot lower a pole order")
    if dp:
        a = _fit(_mul_pole_factor(a, dp, axis=axis), axis, M)
    return a


def _symmetrize(a: np.ndarray, radius: float = R_LIVE) -> tuple[np.ndarray, float]:
    """Average over axis permutations; the defect is measured on coefficients
    scaled by radius^{-j} on every axis (their size on the circle)."""
    n = a.ndim
    if n < 2:
        return a, 0.0
    w = radius ** -np.arange(1, a.shape[0] + 1, dtype=float)
    scale = np.ones(a.shape)
    for ax in range(n):
        sh = [1] * n
        sh[ax] = a.shape[0]
        scale = scale * w.reshape(sh)
    top = float(np.max(np.abs(a) * scale)) or 1.0
    acc = np.zeros_like(a)
    defect = 0.0
    for p in itertools.permutations(range(n)):
        t = np.transpose(a, p)
        defect = max(defect, float(np.max(np.abs(t - a) * scale)) / top)
        acc += t
    return acc / math.factorial(n), defect


def _div_pole(a: np.ndarray, axis: int) -> np.ndarray:
    """Divide a z^{-j} series by (1 - z^{-2}) along one axis: d_j = c_j + d_{j-2}."""
    d = np.moveaxis(np.array(a, dtype=complex), axis, 0)
    for j in range(2, d.shape[0]):
        d[j] += d[j - 2]
    return np.moveaxis(d, 0, axis)


def _repole(a: np.ndarray, axis: int, p_from: int, p_to: int, M: int) -> np.ndarray:
    """Re-express one axis with another pole order (division is exact index by index)."""
    a = _fit(a, axis, M)
    for _ in range(p_from - p_to):
        a = _div_pole(a, axis)
    return _lift(a, axis, max(0, p_to - p_from), M)


def _contract_points(data: np.ndarray, bases: list) -> np.ndarray:
    """sum over all indices of data[a_1..a_n] prod_i bases[i][p, a_i], per point p."""
    p = bases[0].shape[0]
    t = bases[0] @ data.reshape(data.shape[0], -1)
    for B in bases[1:]:
        t = np.einsum("pa,pab->pb", B, t.reshape(p, B.shape[1], -1))
    return t.reshape(p)


@dataclass(frozen=True)
class CorrelatorTerm:
    """W_n^{k} as a coefficient tensor with a common pole order on every axis."""

    n: int
    k: int
    data: np.ndarray
    frame: JoukowskiFrame
    pole_order: int = 0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.ndim != self.n:
            raise ValueError(f"tensor has {d.ndim} axes for n = {self.n}")
        object.__setattr__(self, "data", d)

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.data)

    def eval_z(self, *zs, derivative_axis: int | None = None):
        """Pointwise values at broadcast Joukowski points (one array per argument)."""
        if len(zs) != self.n:
            raise ValueError(f"expected {self.n} arguments")
        arrs = np.broadcast_arrays(*[np.asarray(z, dtype=complex) for z in zs])
        shape = arrs[0].shape
        bases = []
        for i, z in enumerate(arrs):
            if derivative_axis == i:
                bases.append(_dbasis(self.frame, z, self.M, self.pole_order))
            else:
                bases.append(_basis(z, self.M, self.pole_order))
        return _contract_points(self.data, bases).reshape(shape)

    def __call__(self, *xs):
        return self.eval_z(*[inverse_map(self.frame, np.asarray(x, dtype=complex)) for x in xs])

    def symmetry_defect(self) -> float:
        return _symmetrize(self.data)[1]

    def tail_ratio(self, radius: float = 1.0) -> float:
        """Largest scaled coefficient in the last quarter of any axis over the overall largest."""
        if self.is_zero:
            return 0.0
        a = np.abs(self.data)
        scale = radius ** -np.arange(1, self.M + 1, dtype=float)
        for ax in range(self.n):
            sh = [1] * self.n
            sh[ax] = self.M
            a = a * scale.reshape(sh)
        top = float(a.max())
        q = (3 * self.M) // 4
        tail = max(float(np.take(a, np.arange(q, self.M), axis=ax).max()) for ax in range(self.n))
        return tail / top


def _zero_term(frame, n, k, M):
    return CorrelatorTerm(n, k, np.zeros((M,) * n, dtype=complex), frame, 0)


class _Work:
    """Discretization shared by every order: live nodes and cached matrices."""

    def __init__(self, eq: EquilibriumData, edge: EdgeData, M: int):
        self.eq = eq
        self.edge = edge
        self.fr = eq.frame
        self.M = M
        zr = s_zero_radii(eq)
        if zr.size and np.min(zr) <= R_LIVE:
            raise OperatorError(f"contour invalid: a zero of S lies at |z| = {np.min(zr):.4g} inside Gamma_2")
        m = 4 * M
        if zr.size:
            need = int(40.0 / math.log(np.min(zr) / R_LIVE)) + 16
            m = max(m, 2 * need)
        self.m = 1 << int(math.ceil(math.log2(m)))
        self.z = circle_nodes(R_LIVE, self.m)
        self.x = self.fr.x_of_z(self.z)
        self.Lx = edge.L_of(self.x)
        self.w1 = eq.W_z(self.z)
        self._cache = {}

    def M_of(self, n: int) -> int:
        if n <= 2:
            return self.M
        return min(self.M, M_CAP.get(n, M_CAP_HIGH))

    def B(self, M, P):
        key = ("B", M, P)
        if key not in self._cache:
            self._cache[key] = _basis(self.z, M, P)
        return self._cache[key]

    def dB(self, M, P):
        key = ("dB", M, P)
        if key not in self._cache:
            self._cache[key] = _dbasis(self.fr, self.z, M, P)
        return self._cache[key]

    def Nmat(self, g: np.ndarray, M: int, P: int):
        """N_g applied to each basis function, sampled at the live nodes."""
        key = ("N", tuple(np.asarray(g, float)), M, P)
        if key not in self._cache:
            mE = max(256, 2 * self.m)
            zE = circle_nodes(RHO_E, mE)
            xi = self.fr.x_of_z(zE)
            wts = self.edge.L_of(xi) * polyval(g, xi) * self.fr.gamma * (zE - 1.0 / zE)
            h = wts[:, None] * _basis(zE, M, P)
            ker = 1.0 / (self.x[:, None] - xi[None, :]) + self.edge.c
            q = (ker @ h) / mE
            self._cache[key] = polyval(g, self.x)[:, None] * self.B(M, P) + q / self.Lx[:, None]
        return self._cache[key]

    def Kmat(self, M, P):
        """K = 2 W_1^{-1} - N_{V'} on basis functions, at the live nodes."""
        key = ("K", M, P)
        if key not in self._cache:
            v1 = derivative(self.eq.potential0)
            self._cache[key] = 2.0 * self.w1[:, None] * self.B(M, P) - self.Nmat(v1, M, P)
        return self._cache[key]

    def bracket(self, M_in: int, P: int, M_out: int):
        """Tensor D[a, k, b] of the spectator term for input basis function a.

        d/dx_i { e_a(x)/(x - x_i) - L(x_i)/L(x) (1/(x - x_i) + c) e_a(x_i) }
        at live node k, expanded in x_i with pole order ``ps``.
        """
        key = ("D", M_in, P, M_out)
        if key in self._cache:
            return self._cache[key]
        ps = P + 2 if P else 1
        ms = 1 << int(math.ceil(math.log2(max(128, 4 * M_out))))
        zs = circle_nodes(R_SPEC, ms)
        xs = self.fr.x_of_z(zs)
        L = self.edge.L
        Ls = polyval(L, xs)
        dLs = polyval(np.polynomial.polynomial.polyder(L), xs) if L.size > 1 else np.zeros_like(xs)
        Bx = self.B(M_in, P)  # (m, a)
        Bs = _basis(zs, M_in, P)  # (s, a)
        dBs = _dbasis(self.fr, zs, M_in, P)
        inv = 1.0 / (self.x[:, None] - xs[None, :])  # (k, s)
        inv2 = inv * inv
        kern = inv + self.edge.c
        first = Bx.T[:, :, None] * inv2[None, :, :]
        second = (
            (dLs[None, :] * kern)[None] * Bs.T[:, None, :]
            + (Ls[None, :] * inv2)[None] * Bs.T[:, None, :]
            + (Ls[None, :] * kern)[None] * dBs.T[:, None, :]
        ) / self.Lx[None, :, None]
        vals = (first - second) * ((1.0 - zs ** -2) ** ps)[None, None, :]
        a = np.fft.ifft(vals, axis=-1)
        top = float(np.max(np.abs(a)))
        half = ms // 2
        bad = max(float(np.max(np.abs(a[..., 0]))), float(np.max(np.abs(a[..., half + 1:]))))
        if top > 0 and bad > 1e-8 * top:
            raise RecursionError(f"spectator bracket not in H^(1): {bad / top:.2e}")
        j = np.arange(1, M_out + 1)
        D = a[..., 1: M_out + 1] * R_SPEC ** j
        self._cache[key] = (D, ps)
        return D, ps


@dataclass
class Expansion:
    """Family of correlators W_n^{k} for one potential and one beta."""

    eq: EquilibriumData
    edge: EdgeData
    spec: PotentialSpec
    beta: float
    terms: dict = field(default_factory=dict)
    maxK: int = -1
    maxN: int = 1
    residuals: dict = field(default_factory=dict)
    kinv_residuals: dict = field(default_factory=dict)
    symmetry_defects: dict = field(default_factory=dict)
    M: int = M_DEFAULT
    _work: _Work | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self._work is None:
            self._work = _Work(self.eq, self.edge, self.M)
        if (1, -1) not in self.terms:
            f = self.eq.w1m1
            c = _fit(f.coeffs, 0, self.M)
            self.terms[(1, -1)] = CorrelatorTerm(1, -1, c, self.eq.frame, f.pole_order)

    @property
    def frame(self):
        return self.eq.frame

    def term(self, n: int, k: int) -> CorrelatorTerm | None:
        """Stored term, a structural zero when n > k + 2, or None when not yet computed."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if n > k + 2:
            return None
        return self.terms.get((n, k))

    def has(self, n, k) -> bool:
        return n > k + 2 or (n, k) in self.terms

    def __getitem__(self, nk):
        t = self.term(*nk)
        if t is None:
            if nk[0] > nk[1] + 2:
                return _zero_term(self.frame, nk[0], nk[1], self._work.M_of(nk[0]))
            raise KeyError(f"missing prerequisite (n,k) = {nk}")
        return t


def _v_orders(spec: PotentialSpec, lo: int, hi: int):
    """Nonzero (V^{k})' for lo <= k <= hi."""
    out = []
    for k in range(max(lo, 0), hi + 1):
        if spec.has_order(k):
            d = derivative(spec.coeffs(k))
            if np.any(d):
                out.append((k, d))
    return out


def _require(ex: Expansion, n: int, k: int):
    if n > k + 2 or n < 1:
        return None
    t = ex.terms.get((n, k))
    if t is None:
        raise RecursionError(f"missing prerequisite (n,k) = ({n},{k})")
    return None if t.is_zero else t


def _E_terms(ex: Expansion, n0: int, k0: int):
    """Descriptors of the nonzero contributions to E_{n0}^{k0}."""
    a = 1.0 - 2.0 / ex.beta
    d = {"diag": None, "N": [], "prod": [], "deriv": None, "spect": None}
    d["diag"] = _require(ex, n0 + 1, k0)
    kmax = k0 + 2 if n0 == 1 else k0 + 1
    for k, vp in _v_orders(ex.spec, 1, kmax):
        t = _require(ex, n0, k0 + 1 - k)
        if t is not None:
            d["N"].append((vp, t))
    ns = n0 - 1
    for r in range(ns + 1):
        for J in itertools.combinations(range(ns), r):
            for k in range(0, k0 + 1):
                A = _require(ex, r + 1, k)
                B = _require(ex, n0 - r, k0 - k)
                if A is not None and B is not None:
                    d["prod"].append((J, A, B))
    if a != 0.0:
        d["deriv"] = _require(ex, n0, k0)
    if n0 >= 2:
        d["spect"] = _require(ex, n0 - 1, k0)
    return d


def _hard_bump(ex: Expansion) -> int:
    """Pole order added by a factor 1/L(x): a double pole in z at each hard edge."""
    return 2 if ex.edge.n_hard else 0


def _kinv_pole(ex: Expansion, p: int) -> int:
    """Pole order of K^{-1} g for g of order p.

    1/sigma_tilde adds one order at every edge, but at a hard edge the factor
    L_alpha in phi = L_alpha / (2R) has a double zero, for a net loss of one.
    """
    return p - 1 if ex.edge.n_hard == 2 else p + 1


def _pole_orders(ex: Expansion, n0: int, d: dict):
    hb = _hard_bump(ex)
    live, spec = [], []
    if d["diag"] is not None:
        live.append(2 * d["diag"].pole_order)
        spec.append(d["diag"].pole_order)
    for _, t in d["N"]:
        live.append(t.pole_order + hb)
        spec.append(t.pole_order)
    for _, A, B in d["prod"]:
        live.append(A.pole_order + B.pole_order)
        spec += [A.pole_order, B.pole_order]
    if d["deriv"] is not None:
        t = d["deriv"]
        live.append(t.pole_order + 2 if t.pole_order else 1)
        spec.append(t.pole_order)
    if d["spect"] is not None:
        t = d["spect"]
        live.append(t.pole_order + hb)
        spec += [t.pole_order, t.pole_order + 2 if t.pole_order else 1]
    return (max(live) if live else 0), (max(spec) if (spec and n0 > 1) else 0)


def _live(ws: _Work, t: CorrelatorTerm):
    """Evaluate the first axis at the live nodes; other axes stay coefficients."""
    B = ws.B(t.M, t.pole_order)
    return (B @ t.data.reshape(t.M, -1)).reshape((ws.m,) + t.data.shape[1:])


def _spectators_to(arr: np.ndarray, poles, P: int, M: int) -> np.ndarray:
    for ax, p in enumerate(poles, start=1):
        arr = _lift(arr, ax, P - p, M)
    return arr


def _assemble(ex: Expansion, n0: int, k0: int):
    """E_{n0}^{k0} sampled at the live nodes with spectator axes in coefficient space.

    Returns (E, live pole order, spectator pole order, sum of |terms|).
    """
    ws = ex._work
    M = ws.M_of(n0)
    ns = n0 - 1
    a = 1.0 - 2.0 / ex.beta
    d = _E_terms(ex, n0, k0)
    Pl, Ps = _pole_orders(ex, n0, d)
    E = np.zeros((ws.m,) + (M,) * ns, dtype=complex)
    Eabs = np.zeros(E.shape)

    if d["diag"] is not None:
        t = d["diag"]
        B = ws.B(t.M, t.pole_order)
        half = _live(ws, t)  # (m, b, rest)
        rest = half.shape[2:]
        dg = np.einsum("kb,kbr->kr", B, half.reshape(ws.m, t.M, -1)).reshape((ws.m,) + rest)
        v = _spectators_to(dg, [t.pole_order] * ns, Ps, M)
        E += v
        Eabs += np.abs(v)

    for vp, t in d["N"]:
        Nm = ws.Nmat(vp, t.M, t.pole_order)
        v = (Nm @ t.data.reshape(t.M, -1)).reshape((ws.m,) + t.data.shape[1:])
        v = _spectators_to(v, [t.pole_order] * ns, Ps, M)
        E -= v
        Eabs += np.abs(v)

    for J, A, Bt in d["prod"]:
        la = _spectators_to(_live(ws, A), [A.pole_order] * len(J), Ps, M)
        lb = _spectators_to(_live(ws, Bt), [Bt.pole_order] * (ns - len(J)), Ps, M)
        rest = [i for i in range(ns) if i not in J]
        sa = [ws.m] + [M if i in J else 1 for i in range(ns)]
        sb = [ws.m] + [M if i in rest else 1 for i in range(ns)]
        v = la.reshape(sa) * lb.reshape(sb)
        E += v
        Eabs += np.abs(v)

    if d["deriv"] is not None:
        t = d["deriv"]
        dB = ws.dB(t.M, t.pole_order)
        v = (dB @ t.data.reshape(t.M, -1)).reshape((ws.m,) + t.data.shape[1:])
        v = a * _spectators_to(v, [t.pole_order] * ns, Ps, M)
        E += v
        Eabs += np.abs(v)

    if d["spect"] is not None:
        t = d["spect"]
        D, pb = ws.bracket(t.M, t.pole_order, M)
        # D[a, k, b] contracted with W[a, rest]: result (k, b, rest)
        br = np.tensordot(D, t.data, axes=([0], [0]))
        br = _spectators_to(br, [pb] + [t.pole_order] * (ns - 1), Ps, M)
        for i in range(ns):
            v = (2.0 / ex.beta) * np.moveaxis(br, 1, 1 + i)
            E += v
            Eabs += np.abs(v)

    if n0 == 1 and k0 == -1 and ex.edge.n_hard and a != 0.0:
        edges = ex.eq.edges
        hard = np.zeros(ws.m, dtype=complex)
        for tau in edges.hard:
            at, amt = edges.edge(tau), edges.edge(-tau)
            hard += 1.0 / (at - amt) / (ws.x - at)
        E += a * hard
        Eabs += np.abs(a * hard)
        Pl = max(Pl, 2)
    return E, Pl, Ps, Eabs


def assemble_E(ex: Expansion, n0: int, k0: int, spectators=None):
    """E_{n0}^{k0}(x, x_I) at the live nodes of Gamma_2.

    ``spectators`` is a sequence of spectator tuples (x_2..x_{n0}), given in x;
    the result has shape (len(spectators), m).  Without spectators (n0 = 1) the
    result has shape (m,).  Also returns the live nodes x.
    """
    if n0 > k0 + 3:
        m = ex._work.m
        shape = (m,) if n0 == 1 else (len(spectators), m)
        return np.zeros(shape, dtype=complex), ex._work.x
    E, _, Ps, _ = _assemble(ex, n0, k0)
    if n0 == 1:
        return E, ex._work.x
    if spectators is None:
        raise ValueError("spectator tuples are required for n0 >= 2")
    out = []
    for tup in spectators:
        zs = inverse_map(ex.frame, np.asarray(tup, dtype=complex))
        out.append(_eval_spectators(E, zs, Ps))
    return np.array(out), ex._work.x


def _eval_spectators(E: np.ndarray, zs, P: int) -> np.ndarray:
    """Contract spectator axes of a live-sampled tensor at one spectator tuple."""
    t = E
    for z in np.atleast_1d(zs)[::-1]:
        b = _basis(np.array([z]), t.shape[-1], P)[0]
        t = t @ b
    return t


def _abs_spectators(A: np.ndarray, zs, P: int) -> np.ndarray:
    """Upper bound for the terms at one spectator tuple: |coefficients| against |basis|."""
    t = A
    for z in np.atleast_1d(zs)[::-1]:
        t = t @ np.abs(_basis(np.array([z]), t.shape[-1], P)[0])
    return t


def _spectator_tuples(ns: int, count: int, seed: int):
    rng = np.random.default_rng(seed)
    r = rng.uniform(1.8, 2.6, size=(count, ns))
    th = rng.uniform(0, 2 * np.pi, size=(count, ns))
    return r * np.exp(1j * th)


def next_order(ex: Expansion, n0: int, k0: int, store: bool = True, kinv_tol: float = KINV_TOL) -> CorrelatorTerm:
    """W_{n0}^{k0+1} = -K^{-1}[E_{n0}^{k0}] along the live variable."""
    ws = ex._work
    M = ws.M_of(n0)
    if n0 > k0 + 3:
        return _zero_term(ex.frame, n0, k0 + 1, M)
    E, Pl, Ps, Eabs = _assemble(ex, n0, k0)
    ns = n0 - 1
    tuples = _spectator_tuples(ns, 4 if ns else 1, seed=97 * n0 + k0)
    sizes = [
        (float(np.max(np.abs(_eval_spectators(E, zt[:ns], Ps)))), float(np.max(_abs_spectators(Eabs, zt[:ns], Ps))))
        for zt in tuples
    ]
    cancelled = all(e <= CANCEL_TOL * sc for e, sc in sizes)
    if cancelled:
        t = _zero_term(ex.frame, n0, k0 + 1, M)
        res = 0.0
        defect = 0.0
    else:
        F = -kinv_samples(ex.eq, E, Pl, R_LIVE, axis=0)
        Pf = max(0, _kinv_pole(ex, Pl))
        F = _repole(F, 0, Pl + 1, Pf, M)
        # Im K check on random spectator tuples, relative to the size of E
        # (or of its largest term when the terms nearly cancel)
        Km = ws.Kmat(M, Pf)
        res = 0.0
        for zt, (esz, sc) in zip(tuples, sizes):
            e = _eval_spectators(E, zt[:ns], Ps)
            f = _eval_spectators(F, zt[:ns], Ps)
            r = Km @ f + e
            res = max(res, float(np.max(np.abs(r))) / max(esz, 1e-6 * sc, 1e-300))
        if res > kinv_tol:
            raise RecursionError(f"Im K violation at ({n0},{k0}): residual {res:.3e}")
        # the live axis fixes the pole order; spectator axes follow by symmetry
        for ax in range(1, n0):
            F = _repole(F, ax, Ps, Pf, M)
        F, defect = _symmetrize(F)
        P = Pf
        t = CorrelatorTerm(n0, k0 + 1, F, ex.frame, P)
    if store:
        ex.terms[(n0, k0 + 1)] = t
        ex.kinv_residuals[(n0, k0 + 1)] = res
        ex.symmetry_defects[(n0, k0 + 1)] = defect
        ex.maxK = max(ex.maxK, k0 + 1)
        ex.maxN = max(ex.maxN, n0)
    return t


def w1_subleading(eq: EquilibriumData, edge: EdgeData, beta: float, v1=None, M: int = M_DEFAULT) -> CorrelatorTerm:
    """W_1^{0} from W_1^{-1}, the hard-edge bracket and the order-1/N potential."""
    orders = [tuple(eq.potential0)]
    if v1 is not None:
        orders.append(tuple(np.atleast_1d(np.asarray(v1, dtype=float))))
    spec = PotentialSpec(orders=tuple(orders))
    ex = Expansion(eq, edge, spec, beta, M=M)
    return next_order(ex, 1, -1)


def expand_all(eq: EquilibriumData, edge: EdgeData, spec: PotentialSpec, beta: float, maxK: int, M: int = M_DEFAULT,
               residuals: bool = True, kinv_tol: float = KINV_TOL) -> Expansion:
    """All W_n^{k} with k <= maxK and n <= k + 2, ascending k and descending n."""
    if maxK < -1:
        raise ValueError("maxK must be >= -1")
    ex = Expansion(eq, edge, spec, beta, M=M)
    for k in range(0, maxK + 1):
        for n in range(k + 2, 0, -1):
            next_order(ex, n, k - 1, kinv_tol=kinv_tol)
    if residuals:
        for (n, k) in sorted(ex.terms):
            ex.residuals[(n, k)] = loop_residual(ex, n, k)
    return ex


def expand_w1(eq: EquilibriumData, edge: EdgeData, spec: PotentialSpec, beta: float, maxK: int, M: int = M_DEFAULT) -> Expansion:
    """Only the terms that W_1^{k}, k <= maxK, depend on: those with n + k <= maxK + 1."""
    if maxK < -1:
        raise ValueError("maxK must be >= -1")
    ex = Expansion(eq, edge, spec, beta, M=M)
    for k in range(0, maxK + 1):
        for n in range(k + 2, 0, -1):
            if n + k <= maxK + 1:
                next_order(ex, n, k - 1)
    return ex


def _residual_edges(ex: Expansion):
    """Edges entering the kernel h(xi)/h(x) of the loop equations.

    Hard edges are the support endpoints.  Soft edges may sit anywhere outside
    the support (the equations then differ only by exponentially small terms);
    they are placed at x(-+RESIDUAL_Z), well away from the residual contour.
    """
    fr = ex.frame
    out = []
    for tau in (-1, 1):
        if tau in ex.eq.support.hard:
            out.append(ex.eq.support.endpoint(tau))
        else:
            out.append(float(fr.x_of_z(tau * RESIDUAL_Z).real))
    return out


def loop_residual(ex: Expansion, n: int, k: int, nodes: int = 64, tuples: int = 4, seed: int = 0, radius: float = R_LIVE) -> float:
    """Sup over |z| = radius (Gamma_2 by default) of the order N^{1-k} coefficient of the rank-n loop equation.

    This is the equation whose leading unknown is W_n^{k}.  It is assembled
    pointwise from the stored terms (absent terms count as zero) with the
    kernel (xi - a-)(xi - a+) / ((x - a-)(x - a+)) and no constant c, which
    is independent of the operators used by the recursion.
    """
    fr = ex.frame
    a = 1.0 - 2.0 / ex.beta
    am, ap = _residual_edges(ex)

    def H(x):
        return (x - am) * (x - ap)

    def dH(x):
        return 2.0 * x - am - ap

    def get(nn, kk):
        if nn < 1 or nn > kk + 2:
            return None
        t = ex.terms.get((nn, kk))
        return None if (t is None or t.is_zero) else t

    if not 1.0 < radius < RHO_E:
        raise ValueError("residual radius must lie between the cut and Gamma_E")
    zx = circle_nodes(radius, nodes) * np.exp(1j * np.pi / nodes)
    x = fr.x_of_z(zx)
    Hx = H(x)
    mE = 512
    zE = circle_nodes(RHO_E, mE)
    xi = fr.x_of_z(zE)
    dxi = fr.gamma * (zE - 1.0 / zE)
    ns = n - 1
    tups = _spectator_tuples(ns, tuples if ns else 1, seed)
    worst = 0.0
    for zt in tups:
        zt = zt[:ns]
        xt = fr.x_of_z(zt)
        tot = np.zeros(nodes, dtype=complex)

        def ev(t, first, others, dax=None):
            zs = [first] + [np.full(first.shape, z) for z in others]
            return t.eval_z(*zs, derivative_axis=dax)

        t = get(n + 1, k - 1)
        if t is not None:
            tot += t.eval_z(*([zx, zx] + [np.full(nodes, z) for z in zt]))
        idx = list(range(ns))
        for r in range(ns + 1):
            for J in itertools.combinations(idx, r):
                rest = [i for i in idx if i not in J]
                for k1 in range(-1, k + 1):
                    A, B = get(r + 1, k1), get(n - r, k - 1 - k1)
                    if A is None or B is None:
                        continue
                    tot += ev(A, zx, [zt[i] for i in J]) * ev(B, zx, [zt[i] for i in rest])
        t = get(n, k - 1)
        if t is not None and a != 0.0:
            tot += a * ev(t, zx, list(zt), dax=0)
        for j, vp in _v_orders(ex.spec, 0, k + 1):
            t = get(n, k - j)
            if t is None:
                continue
            G = lambda xx, zz: H(xx) * polyval(vp, xx) * ev(t, zz, list(zt))
            GE = H(xi) * polyval(vp, xi) * ev(t, zE, list(zt))
            integral = ((1.0 / (x[:, None] - xi[None, :])) @ (GE * dxi)) / mE
            tot -= (G(x, zx) + integral) / Hx
        if n == 1:
            tot += (-(1.0 if k == -1 else 0.0) + (a if k == 0 else 0.0)) / Hx
        t = get(n - 1, k - 1)
        if t is not None:
            for i in range(ns):
                others = [zt[j] for j in idx if j != i]
                xi_, zi = xt[i], zt[i]
                u = ev(t, zx, others)  # W(x, x_{I minus i})
                w = t.eval_z(*([np.full(nodes, zi)] + [np.full(nodes, z) for z in others]))
                dw = t.eval_z(*([np.full(nodes, zi)] + [np.full(nodes, z) for z in others]), derivative_axis=0)
                inv = 1.0 / (x - xi_)
                br = u * inv * inv - (dH(xi_) * w * inv + H(xi_) * dw * inv + H(xi_) * w * inv * inv) / Hx
                tot += (2.0 / ex.beta) * br
        worst = max(worst, float(np.max(np.abs(tot))))
    return worst


def beta_unknowns(n: int, k: int) -> list:
    """(g, l) labels of the beta-free pieces of W_n^{k}."""
    return [(g, k + 2 - 2 * g - n) for g in range((k - n + 2) // 2 + 1)]


def _beta_weights(n: int, k: int, beta: float) -> np.ndarray:
    return np.array([(beta / 2.0) ** (1 - g - n) * (1.0 - 2.0 / beta) ** l for g, l in beta_unknowns(n, k)])


@dataclass
class BetaDecomposition:
    """Beta-free pieces of W_n^{k}: W_n^{k} = sum_g (b/2)^{1-g-n} (1-2/b)^{k+2-2g-n} W_n^{(g; .)}."""

    n: int
    k: int
    coefficients: dict
    condition: float = float("nan")

    def reassemble(self, beta: float) -> CorrelatorTerm:
        w = _beta_weights(self.n, self.k, beta)
        terms = [self.coefficients[(self.n, g, l)] for g, l in beta_unknowns(self.n, self.k)]
        data = sum(wi * t.data for wi, t in zip(w, terms))
        t0 = terms[0]
        return CorrelatorTerm(self.n, self.k, data, t0.frame, t0.pole_order)


def _align(terms: list) -> list:
    P = max(t.pole_order for t in terms)
    M = max(t.M for t in terms)
    out = []
    for t in terms:
        d = t.data
        for ax in range(t.n):
            d = _lift(d, ax, P - t.pole_order, M)
        out.append(CorrelatorTerm(t.n, t.k, d, t.frame, P))
    return out


def beta_decompose(spec: PotentialSpec, edges, n: int, k: int, betas, M: int = M_DEFAULT, expansions: dict | None = None) -> BetaDecomposition:
    """Solve for the beta-free pieces of W_n^{k} from samples at several beta.

    ``edges`` is the EdgeConfig of the working interval.  Needs at least
    floor((k - n + 2)/2) + 1 distinct beta values; ``expansions`` may supply
    precomputed Expansion objects keyed by beta.
    """
    if n > k + 2:
        raise ValueError("W_n^{k} vanishes identically for n > k + 2")
    unk = beta_unknowns(n, k)
    betas = [float(b) for b in betas]
    if len(set(betas)) < len(unk):
        raise RecursionError(f"singular system: need {len(unk)} distinct beta values")
    for sk in range(1, spec.max_order + 1):
        if np.any(spec.coeffs(sk)):
            raise ValueError("beta decomposition needs a potential independent of N")
    eq = equilibrium(spec, edges)
    edge = hard_edge_data(edges)
    samples = []
    for b in betas:
        ex = (expansions or {}).get(b)
        if ex is None:
            ex = expand_all(eq, edge, spec, b, k, M=M, residuals=False)
        samples.append(ex[(n, k)])
    samples = _align(samples)
    A = np.array([_beta_weights(n, k, b) for b in betas])
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > 1e12:
        raise RecursionError(f"singular system: condition number {cond:.3e}")
    Y = np.stack([t.data.ravel() for t in samples])
    X, *_ = np.linalg.lstsq(A, Y, rcond=None)
    t0 = samples[0]
    coeffs = {
        (n, g, l): CorrelatorTerm(n, k, X[i].reshape(t0.data.shape), t0.frame, t0.pole_order)
        for i, (g, l) in enumerate(unk)
    }
    return BetaDecomposition(n, k, coeffs, cond)
