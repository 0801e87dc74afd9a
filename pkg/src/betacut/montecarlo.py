"""Metropolis sampling of the eigenvalue measure and batch-means estimators.

The target density on [a-, a+]^N is

    prod_{i<j} |l_i - l_j|^beta  prod_i exp(-(N beta / 2) V_N(l_i)),

with V_N the finite-N resummed potential.  Moves are single-site uniform
proposals reflected at the interval ends, so the proposal stays symmetric and
the hard constraint is kept exactly.  Uniforms come from Philox streams keyed
by (seed, chain) with the block index in the counter, which makes every chain
reproducible and independent of how many chains run next to it.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numba
import numpy as np

# the bundled TBB is too old for numba; prefer OpenMP and skip the warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .equilibrium import EquilibriumData, equilibrium
from .potential import EdgeConfig, PotentialSpec, gaussian_reference, interpolate, polyval, resum, trim

__all__ = [
    "MCConfig",
    "MCEstimate",
    "Chain",
    "MCError",
    "sample_chain",
    "batch_means",
    "estimate_correlators",
    "estimate_linear_statistic",
    "thermodynamic_lnZ",
    "tail_probability",
]

N_BATCHES = 32
BLOCK = 512  # sweeps per block of pre-drawn uniforms
TUNE_EVERY = 50
ACC_LO, ACC_HI = 0.2, 0.6
ACC_TARGET = 0.4
RECORD_BYTES = 1 << 26  # memory budget for stored configurations
_MASK = (1 << 64) - 1


class MCError(RuntimeError):
    pass


@dataclass(frozen=True)
class MCConfig:
    N: int
    beta: float
    sweeps: int
    burn_in: int = 0
    step: float = 0.0  # 0 picks a spacing-sized start value
    chains: int = 1
    seed: int = 0
    thin: int = 0  # 0 picks the smallest thinning that fits RECORD_BYTES

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError("need sweeps > burn_in >= 0")
        if self.chains < 1:
            raise ValueError("chains must be positive")
        if self.step < 0 or self.thin < 0:
            raise ValueError("step and thin must be non-negative")


@dataclass(frozen=True)
class MCEstimate:
    value: object
    std_error: object
    n_eff: float


@dataclass
class Chain:
    spec: PotentialSpec
    edges: EdgeConfig
    cfg: MCConfig
    samples: np.ndarray  # (chains, records, N)
    thin: int
    step: np.ndarray
    acceptance: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def records(self) -> int:
        return self.samples.shape[1]


def _threads() -> int:
    v = os.environ.get("BETACUT_THREADS")
    if not v:
        return numba.config.NUMBA_NUM_THREADS
    return max(1, min(int(v), numba.config.NUMBA_NUM_THREADS))


@numba.njit(cache=True)
def _horner(c, x):
    s = 0.0
    for k in range(c.size - 1, -1, -1):
        s = s * x + c[k]
    return s


@numba.njit(cache=True)
def _reflect(x, lo, hi):
    w = hi - lo
    while x < lo or x > hi:
        if x < lo:
            x = 2.0 * lo - x
        else:
            x = 2.0 * hi - x
        if w <= 0.0:
            return lo
    return x


@numba.njit(cache=True)
def _sweeps(lam, vc, nb2, beta, lo, hi, step, u, out, thin, rec0):
    """Run u.shape[0] sweeps in place; return accepted moves.

    Configurations are written to ``out`` every ``thin`` sweeps, counted from
    a global sweep index starting at ``rec0`` (negative during burn-in).
    """
    N = lam.size
    acc = 0
    for t in range(u.shape[0]):
        for i in range(N):
            xo = lam[i]
            xn = _reflect(xo + step * (2.0 * u[t, 2 * i] - 1.0), lo, hi)
            d = -nb2 * (_horner(vc, xn) - _horner(vc, xo))
            # products of distance ratios in short runs, one log per run
            r = 1.0
            for j in range(N):
                if j != i:
                    r *= abs(xn - lam[j]) / abs(xo - lam[j])
                    if (j & 15) == 15:
                        d += beta * math.log(r) if r > 0.0 else -np.inf
                        r = 1.0
            d += beta * math.log(r) if r > 0.0 else -np.inf
            if d >= 0.0 or u[t, 2 * i + 1] < math.exp(d):
                lam[i] = xn
                acc += 1
        g = rec0 + t
        if g >= 0 and (g + 1) % thin == 0:
            r = (g + 1) // thin - 1
            if r < out.shape[0]:
                out[r, :] = lam
    return acc


@numba.njit(parallel=True, cache=True)
def _sweeps_all(lam, vc, nb2, beta, lo, hi, step, u, out, thin, rec0):
    nc = lam.shape[0]
    acc = np.zeros(nc, dtype=np.int64)
    for c in numba.prange(nc):
        acc[c] = _sweeps(lam[c], vc, nb2, beta, lo, hi, step[c], u[c], out[c], thin, rec0)
    return acc


def _uniforms(seed: int, chain: int, block: int, sweeps: int, N: int) -> np.ndarray:
    bg = np.random.Philox(key=[seed & _MASK, chain & _MASK], counter=[0, 0, block & _MASK, 0])
    return np.random.Generator(bg).random((sweeps, 2 * N))


def _initial(N: int, lo: float, hi: float, center: float, width: float) -> np.ndarray:
    a = max(lo, center - 0.5 * width)
    b = min(hi, center + 0.5 * width)
    return a + (b - a) * (np.arange(N) + 0.5) / N


def sample_chain(spec: PotentialSpec, edges: EdgeConfig, cfg: MCConfig) -> Chain:
    """Run cfg.chains independent chains; tune the step during burn-in only."""
    lo, hi = float(edges.a_minus), float(edges.a_plus)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("sampling needs a finite working interval")
    N, nc = cfg.N, cfg.chains
    vc = np.ascontiguousarray(resum(spec, N), dtype=float)
    nb2 = 0.5 * N * cfg.beta
    width = hi - lo
    step = np.full(nc, cfg.step if cfg.step > 0 else min(width, 4.0 / N + 0.05))
    post = cfg.sweeps - cfg.burn_in
    thin = cfg.thin or max(1, math.ceil(post * N * nc * 8 / RECORD_BYTES))
    out = np.zeros((nc, post // thin, N))
    # start on an even grid over the middle of the interval
    lam = np.stack([_initial(N, lo, hi, 0.5 * (lo + hi), 0.6 * width) for _ in range(nc)])
    acc_burn = np.zeros(nc)
    nthreads = numba.get_num_threads()
    numba.set_num_threads(_threads())
    try:
        t = 0
        block = 0
        tuned = np.zeros(nc, dtype=np.int64)
        acc_post = np.zeros(nc, dtype=np.int64)
        while t < cfg.sweeps:
            if t < cfg.burn_in:
                n = min(TUNE_EVERY, cfg.burn_in - t)
            else:
                n = min(BLOCK, cfg.sweeps - t)
            u = np.stack([_uniforms(cfg.seed, c, block, n, N) for c in range(nc)])
            acc = _sweeps_all(lam, vc, nb2, cfg.beta, lo, hi, step, u, out, thin, t - cfg.burn_in)
            if t < cfg.burn_in:
                rate = acc / (n * N)
                acc_burn = rate
                # multiplicative Robbins-Monro style update toward the target rate
                step = np.clip(step * np.exp(rate - ACC_TARGET), 1e-12, width)
                tuned += 1
            else:
                acc_post += acc
            t += n
            block += 1
    finally:
        numba.set_num_threads(nthreads)
    acceptance = acc_post / (post * N)
    if np.any(acceptance == 0.0):
        raise MCError("step tuning failed: zero acceptance")
    return Chain(spec, edges, cfg, out, thin, step, acceptance, {"burn_acceptance": acc_burn})


def batch_means(series: np.ndarray, nb: int = N_BATCHES) -> MCEstimate:
    """Mean with a batch-means standard error; ``series`` is (chains, T) or (T,)."""
    s = np.atleast_2d(np.asarray(series))
    nc, T = s.shape
    per = max(1, nb // nc)
    if T < per:
        raise MCError("insufficient effective samples for batch means")
    L = T // per
    bm = s[:, : per * L].reshape(nc, per, L).mean(axis=2).ravel()
    value = s.mean()
    se = bm.std(ddof=1) / math.sqrt(bm.size) if bm.size > 1 else 0.0
    var = s.var()
    n_eff = float(var / se**2) if se > 0 else float(s.size)
    return MCEstimate(value, float(se) if np.isrealobj(se) else se, n_eff)


def _batched(f, data: np.ndarray, nb: int = N_BATCHES):
    """Apply the statistic f to all data and to each batch; (value, std_error)."""
    nc, T = data.shape[:2]
    per = max(1, nb // nc)
    L = T // per
    if L < 2:
        raise MCError("insufficient effective samples")
    full = f(data.reshape(nc * T, *data.shape[2:]))
    parts = [f(data[c, b * L : (b + 1) * L]) for c in range(nc) for b in range(per)]
    parts = np.array(parts)
    se = np.sqrt(np.var(parts.real, axis=0, ddof=1) + 1j * np.var(parts.imag, axis=0, ddof=1)) if np.iscomplexobj(parts) \
        else np.std(parts, axis=0, ddof=1)
    se = se / math.sqrt(len(parts))
    return full, se, len(parts)


def _cumulant(Y: np.ndarray, n: int) -> np.ndarray:
    """Joint cumulant tensor of order n of the columns of Y (samples, p)."""
    D = Y - Y.mean(axis=0)
    T = Y.shape[0]
    if n == 1:
        return Y.mean(axis=0)
    if n == 2:
        return np.einsum("ta,tb->ab", D, D) / T
    if n == 3:
        return np.einsum("ta,tb,tc->abc", D, D, D) / T
    raise ValueError("nmax <= 3")


def estimate_correlators(chain: Chain, points, nmax: int = 2) -> dict:
    """Cumulant tensors of Y_a = sum_i 1/(x_a - lambda_i) for n = 1..nmax."""
    if not 1 <= nmax <= 3:
        raise ValueError("nmax must be 1, 2 or 3")
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    lo, hi = float(chain.samples.min()), float(chain.samples.max())
    d = np.hypot(np.maximum(0.0, np.maximum(lo - pts.real, pts.real - hi)), pts.imag)
    if np.any(d < 0.5):
        raise ValueError("correlator points must stay at distance >= 0.5 from the sampled eigenvalues")
    Y = np.sum(1.0 / (pts[None, None, :, None] - chain.samples[:, :, None, :]), axis=-1)
    if not np.any(np.iscomplex(pts)):
        Y = Y.real
    out = {}
    for n in range(1, nmax + 1):
        v, se, nb = _batched(lambda y, n=n: _cumulant(y, n), Y)
        out[n] = MCEstimate(v, se, float(nb))
    return out


def _integral(eq: EquilibriumData, h, n: int = 256) -> float:
    x, w = eq.theta_quadrature(n)
    return float(np.sum(w * polyval(h, x)))


def linear_statistic(chain: Chain, h, eq: EquilibriumData) -> np.ndarray:
    """Per-record sum_i h(lambda_i) - N int h d mu_eq, shape (chains, records)."""
    h = trim(h)
    hv = h.copy()
    hv[0] = 0.0  # constants cancel exactly
    N = chain.cfg.N
    return np.sum(polyval(hv, chain.samples), axis=-1) - N * (_integral(eq, hv) if np.any(hv) else 0.0)


def estimate_linear_statistic(chain: Chain, h, eq: EquilibriumData):
    """(mean, variance) estimates of the centered linear statistic."""
    S = linear_statistic(chain, h, eq)
    mean = batch_means(S)
    v, se, nb = _batched(lambda s: np.var(s), S[..., None])
    return mean, MCEstimate(float(v), float(se), float(nb))


def thermodynamic_lnZ(spec: PotentialSpec, edges: EdgeConfig, cfg: MCConfig, s_nodes: int = 8) -> MCEstimate:
    """ln Z by integrating d/ds ln Z_s from the same-support Gaussian to V.

    The Gaussian end is the closed form over the real line, so the working
    interval must hold all but a negligible part of the Gaussian mass.
    """
    from .asymptotics import gaussian_lnZ

    eq = equilibrium(spec, edges)
    am, ap = eq.support.alpha_minus, eq.support.alpha_plus
    ref = gaussian_reference(am, ap, interval=spec.interval)
    x, w = np.polynomial.legendre.leggauss(s_nodes)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    N, beta = cfg.N, cfg.beta
    dV = trim(np.polynomial.polynomial.polysub(resum(spec, N), resum(ref, N)))
    total, var, neff = 0.0, 0.0, []
    for i, si in enumerate(s):
        vs = interpolate(ref, spec, float(si))
        ch = sample_chain(vs, edges, replace(cfg, seed=(cfg.seed * 1000003 + i) & _MASK))
        est = batch_means(np.sum(polyval(dV, ch.samples), axis=-1))
        g = -0.5 * N * beta
        total += w[i] * g * est.value
        var += (w[i] * g * est.std_error) ** 2
        neff.append(est.n_eff)
    return MCEstimate(float(gaussian_lnZ(N, beta, am, ap) + total), float(math.sqrt(var)), float(min(neff)))


def tail_probability(chain: Chain, eq: EquilibriumData, epsilon: float) -> MCEstimate:
    """P(lambda_max >= alpha+ + epsilon) with a binomial error on the effective count."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    ind = (chain.samples.max(axis=-1) >= eq.support.alpha_plus + epsilon).astype(float)
    p = float(ind.mean())
    if p == 0.0:
        return MCEstimate(0.0, 0.0, float(ind.size))
    bm = batch_means(ind)
    n_eff = min(float(ind.size), bm.n_eff)
    return MCEstimate(p, math.sqrt(p * (1.0 - p) / n_eff), n_eff)
