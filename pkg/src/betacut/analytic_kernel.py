"""Functions holomorphic off a cut [alpha-, alpha+], encoded in the Joukowski variable.

The map ``x(z) = c + gamma (z + 1/z)`` sends ``|z| > 1`` onto the complement of
the cut.  A function decaying at infinity is stored as

    f(x(z)) = (1 - z^{-2})^{-P} * sum_{j=1}^{M} c_j z^{-j}

The prefactor with integer ``P`` (the *pole order*) absorbs the poles that
correlators develop at the preimages ``z = +-1`` of the edges, so that the
stored coefficients decay geometrically.  ``P = 0`` gives a plain Laurent tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import comb

__all__ = [
    "JoukowskiFrame",
    "SeriesFn",
    "ContourFamily",
    "NotInH1Error",
    "frame_from_support",
    "inverse_map",
    "series_from_samples",
    "series_from_function",
    "eval_series",
    "contour_integral",
    "sup_norm",
    "derivative_series",
    "circle_nodes",
    "pole_factor_coeffs",
]

TAIL_TOL = 1e-12
NOISE_TOL = 1e-15


class NotInH1Error(ValueError):
    """Sampled data carries z^0 or positive powers of z."""


@dataclass(frozen=True)
class JoukowskiFrame:
    center: float
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("degenerate interval: quarter width must be positive")

    @property
    def alpha_minus(self) -> float:
        return self.center - 2.0 * self.gamma

    @property
    def alpha_plus(self) -> float:
        return self.center + 2.0 * self.gamma

    def x_of_z(self, z):
        z = np.asarray(z, dtype=complex)
        return self.center + self.gamma * (z + 1.0 / z)

    def z_of_x(self, x, cut_tol: float = 1e-13):
        return inverse_map(self, x, cut_tol=cut_tol)

    def sigma_tilde(self, z):
        """sqrt((x - alpha-)(x - alpha+)) with the branch ~ x at infinity."""
        z = np.asarray(z, dtype=complex)
        return self.gamma * (z - 1.0 / z)

    def dz_dx(self, z):
        z = np.asarray(z, dtype=complex)
        return 1.0 / (self.gamma * (1.0 - z ** -2))

    def dx_dz(self, z):
        z = np.asarray(z, dtype=complex)
        return self.gamma * (1.0 - z ** -2)


def frame_from_support(alpha_minus: float, alpha_plus: float) -> JoukowskiFrame:
    if not alpha_minus < alpha_plus:
        raise ValueError("degenerate interval: need alpha- < alpha+")
    return JoukowskiFrame(0.5 * (alpha_minus + alpha_plus), 0.25 * (alpha_plus - alpha_minus))


def inverse_map(frame: JoukowskiFrame, x, cut_tol: float = 1e-13):
    """Preimage z with |z| > 1; raises on points of the cut."""
    x = np.asarray(x, dtype=complex)
    u = (x - frame.center) / frame.gamma
    r = np.sqrt(u * u - 4.0)
    z1 = 0.5 * (u + r)
    z2 = 0.5 * (u - r)
    z = np.where(np.abs(z1) >= np.abs(z2), z1, z2)
    if np.any(np.abs(z) <= 1.0 + cut_tol):
        raise ValueError("point lies on the cut")
    return z


def circle_nodes(radius: float, m: int) -> np.ndarray:
    return radius * np.exp(2j * np.pi * np.arange(m) / m)


def pole_factor_coeffs(p: int) -> np.ndarray:
    """Coefficients of (1 - w)^p in w = z^{-2}, i.e. of (1 - z^{-2})^p in z^{-2}."""
    k = np.arange(p + 1)
    return comb(p, k) * (-1.0) ** k


def _mul_pole_factor(c: np.ndarray, p: int, axis: int = -1) -> np.ndarray:
    """Multiply a z^{-j} series (index j, first entry j=1) by (1 - z^{-2})^p.

    Output length grows by 2p along ``axis``.
    """
    if p == 0:
        return c
    c = np.moveaxis(np.asarray(c), axis, -1)
    out = np.zeros(c.shape[:-1] + (c.shape[-1] + 2 * p,), dtype=complex)
    for k, b in enumerate(pole_factor_coeffs(p)):
        out[..., 2 * k: 2 * k + c.shape[-1]] += b * c
    return np.moveaxis(out, -1, axis)


@dataclass(frozen=True)
class SeriesFn:
    """Element of H^(1): ``(1 - z^{-2})^{-P} sum_j coeffs[j-1] z^{-j}``."""

    frame: JoukowskiFrame
    coeffs: np.ndarray
    pole_order: int = 0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if c.ndim != 1:
            raise ValueError("SeriesFn coefficients must be one dimensional")
        if c.size == 0:
            c = np.zeros(1, dtype=complex)
        object.__setattr__(self, "coeffs", c)
        if self.pole_order < 0:
            raise ValueError("pole order must be nonnegative")

    @property
    def size(self) -> int:
        return self.coeffs.size

    def eval_z(self, z):
        z = np.asarray(z, dtype=complex)
        w = 1.0 / z
        acc = np.zeros_like(w)
        for a in self.coeffs[::-1]:
            acc = (acc + a) * w
        if self.pole_order:
            acc = acc / (1.0 - w * w) ** self.pole_order
        return acc

    def __call__(self, x):
        return self.eval_z(inverse_map(self.frame, x))

    def with_pole_order(self, p: int) -> "SeriesFn":
        """Same function re-expressed with a larger pole order."""
        if p < self.pole_order:
            raise ValueError("cannot lower the pole order exactly")
        c = _mul_pole_factor(self.coeffs, p - self.pole_order)
        return SeriesFn(self.frame, c, p)

    def _aligned(self, other: "SeriesFn"):
        if other.frame != self.frame:
            raise ValueError("series live on different frames")
        p = max(self.pole_order, other.pole_order)
        a = self.with_pole_order(p).coeffs
        b = other.with_pole_order(p).coeffs
        n = max(a.size, b.size)
        return np.pad(a, (0, n - a.size)), np.pad(b, (0, n - b.size)), p

    def __add__(self, other: "SeriesFn") -> "SeriesFn":
        a, b, p = self._aligned(other)
        return SeriesFn(self.frame, a + b, p)

    def __sub__(self, other: "SeriesFn") -> "SeriesFn":
        a, b, p = self._aligned(other)
        return SeriesFn(self.frame, a - b, p)

    def __mul__(self, s) -> "SeriesFn":
        if isinstance(s, SeriesFn):
            return product(self, s)
        return SeriesFn(self.frame, self.coeffs * s, self.pole_order)

    __rmul__ = __mul__

    def __neg__(self) -> "SeriesFn":
        return SeriesFn(self.frame, -self.coeffs, self.pole_order)

    def laurent_coeffs(self, n: int) -> np.ndarray:
        """Plain coefficients of z^{-1..-n} (pole factor expanded; may grow with j)."""
        c = np.zeros(n + 1, dtype=complex)
        m = min(n, self.coeffs.size)
        c[1: m + 1] = self.coeffs[:m]
        for _ in range(self.pole_order):
            for j in range(2, n + 1):
                c[j] += c[j - 2]
        return c[1:]

    def inverse_x_moments(self, n: int) -> np.ndarray:
        """Coefficients m_k of the expansion f(x) = sum_{k>=1} m_k x^{-k}, k = 1..n."""
        # sample far away and fit via contour integral in x: m_k = (1/2 pi i) oint f x^{k-1} dx
        R = 2.0
        mnodes = max(256, 4 * n + 2 * self.size)
        z = circle_nodes(R, mnodes)
        x = self.frame.x_of_z(z)
        fx = self.eval_z(z) * self.frame.dx_dz(z) * z
        return np.array([np.mean(fx * x ** (k - 1)) for k in range(1, n + 1)])

    def trimmed(self, tail_tol: float = TAIL_TOL, radius: float = 1.0) -> "SeriesFn":
        """Drop trailing coefficients negligible at the given radius."""
        c = self.coeffs
        scaled = np.abs(c) * radius ** -np.arange(1, c.size + 1, dtype=float)
        top = scaled.max(initial=0.0)
        if top == 0.0:
            return SeriesFn(self.frame, np.zeros(1), self.pole_order)
        keep = np.flatnonzero(scaled > tail_tol * top)
        return SeriesFn(self.frame, c[: keep[-1] + 1], self.pole_order)


def product(f: SeriesFn, g: SeriesFn) -> SeriesFn:
    if f.frame != g.frame:
        raise ValueError("series live on different frames")
    c = np.convolve(f.coeffs, g.coeffs)
    # (sum a_i z^-i)(sum b_j z^-j) starts at z^-2
    return SeriesFn(f.frame, np.concatenate([[0.0], c]), f.pole_order + g.pole_order)


def series_from_samples(
    samples,
    frame: JoukowskiFrame,
    radius: float,
    pole_order: int = 0,
    h1_tol: float = 1e-9,
    keep: int | None = None,
    check: bool = True,
) -> SeriesFn:
    """Coefficients from values on the equispaced circle |z| = radius.

    ``samples[k]`` is the value at ``z_k = radius * exp(2 pi i k / m)``.  The
    data are first multiplied by ``(1 - z^{-2})^{pole_order}``.  Raises
    :class:`NotInH1Error` when the z^0 or positive-power content exceeds
    ``h1_tol`` relative to the largest coefficient.
    """
    v = np.asarray(samples, dtype=complex)
    m = v.shape[-1]
    if radius <= 1.0:
        raise ValueError("sampling circle must lie outside the unit circle")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite samples")
    z = circle_nodes(radius, m)
    if pole_order:
        v = v * (1.0 - z ** -2) ** pole_order
    a = np.fft.ifft(v, axis=-1)
    half = m // 2
    top = np.max(np.abs(a)) if a.size else 0.0
    if check and top > 0:
        bad = max(abs(a[0]), np.max(np.abs(a[half + 1:]), initial=0.0))
        if bad > h1_tol * top:
            raise NotInH1Error(f"not in H^(1): z^0/positive-power content {bad / top:.2e}")
    n = half if keep is None else min(keep, half)
    # coefficients at the round-off floor carry no information and would be
    # amplified by radius^j; cut the series after the last one above it
    if top > 0:
        mag = np.abs(a[..., 1: n + 1]).reshape(-1, n).max(axis=0) if n else np.zeros(0)
        above = np.flatnonzero(mag > NOISE_TOL * top)
        n = int(above[-1]) + 1 if above.size else 1
    j = np.arange(1, n + 1)
    c = a[1: n + 1] * radius ** j
    return SeriesFn(frame, c, pole_order)


def series_from_function(
    func: Callable,
    frame: JoukowskiFrame,
    radius: float = 1.25,
    pole_order: int = 0,
    m0: int = 64,
    tail_tol: float = TAIL_TOL,
    max_nodes: int = 1 << 15,
    h1_tol: float = 1e-9,
    in_z: bool = False,
) -> SeriesFn:
    """Adaptive sampling: double the node count until the last quartile is negligible."""
    m = m0
    while True:
        z = circle_nodes(radius, m)
        vals = func(z) if in_z else func(frame.x_of_z(z))
        f = series_from_samples(vals, frame, radius, pole_order, h1_tol=h1_tol)
        scaled = np.abs(f.coeffs) * radius ** -np.arange(1, f.size + 1, dtype=float)
        top = scaled.max(initial=0.0)
        q = max(1, (3 * scaled.size) // 4)
        if top == 0.0 or scaled[q:].max(initial=0.0) <= tail_tol * top or m >= max_nodes:
            return f.trimmed(tail_tol, radius)
        m *= 2


def eval_series(f: SeriesFn, x):
    return f(x)


def contour_integral(
    integrand: Callable,
    frame: JoukowskiFrame,
    radius: float,
    m: int = 256,
    in_z: bool = False,
):
    """(1/2 pi i) times the integral over the image of |z| = radius, positively oriented.

    ``integrand`` receives x (or z when ``in_z``) as a complex array.
    Trapezoidal rule in the angle; spectrally accurate for analytic integrands.
    """
    z = circle_nodes(radius, m)
    vals = integrand(z) if in_z else integrand(frame.x_of_z(z))
    vals = np.asarray(vals)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite integrand on contour")
    # dx = gamma (1 - z^-2) dz and dz = i z dtheta
    w = frame.gamma * (z - 1.0 / z)
    return np.mean(vals * w, axis=-1)


def sup_norm(f, frame: JoukowskiFrame | None = None, radius: float = 1.25, m: int = 256) -> float:
    """Max modulus over the nodes of the image of |z| = radius."""
    z = circle_nodes(radius, m)
    if isinstance(f, SeriesFn):
        vals = f.eval_z(z)
    elif callable(f):
        vals = f(frame.x_of_z(z))
    else:
        vals = np.asarray(f)
    return float(np.max(np.abs(vals))) if np.size(vals) else 0.0


def derivative_series(f: SeriesFn) -> SeriesFn:
    """df/dx using d/dz term by term and dz/dx = 1 / (gamma (1 - z^{-2}))."""
    c = f.coeffs
    p = f.pole_order
    j = np.arange(1, c.size + 1)
    # F' = sum -j c_j z^{-j-1}: index shift by one
    dF = np.concatenate([[0.0], -j * c])
    if p == 0:
        return SeriesFn(f.frame, dF / f.frame.gamma, 1)
    # (1 - z^-2) F' - 2 p z^-3 F, over gamma (1 - z^-2)^{p+2}
    term1 = _mul_pole_factor(dF, 1)
    term2 = np.concatenate([[0.0, 0.0, 0.0], -2.0 * p * c])
    n = max(term1.size, term2.size)
    out = np.pad(term1, (0, n - term1.size)) + np.pad(term2, (0, n - term2.size))
    return SeriesFn(f.frame, out / f.frame.gamma, p + 2)


@dataclass(frozen=True)
class ContourFamily:
    """Nested contours: images of |z| = radii[l], plus an outer contour |z| = rho_E."""

    radii: tuple
    nodes: int = 256
    rho_E: float = 4.0

    def __post_init__(self):
        r = tuple(float(v) for v in self.radii)
        if any(v <= 1.0 for v in r):
            raise ValueError("contour radii must exceed 1")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("contour radii must increase")
        if r and not r[-1] < self.rho_E:
            raise ValueError("outer contour must enclose all nested contours")
        object.__setattr__(self, "radii", r)

    @classmethod
    def geometric(cls, rho0: float = 1.25, ratio: float = 1.15, count: int = 4, nodes: int = 256, rho_E: float = 4.0):
        return cls(tuple(rho0 * ratio ** l for l in range(count)), nodes, rho_E)

    def radius(self, l: int) -> float:
        return self.radii[l]

    def points(self, frame: JoukowskiFrame, l: int) -> np.ndarray:
        return frame.x_of_z(circle_nodes(self.radii[l], self.nodes))

    def zeta(self, frame: JoukowskiFrame, l: int, m: int = 2048) -> float:
        """l(Gamma_l) / (2 pi d(Gamma_l, Gamma_{l+1})^2), from dense polygonal images."""
        a = frame.x_of_z(circle_nodes(self.radii[l], m))
        b = frame.x_of_z(circle_nodes(self.radii[l + 1], m))
        length = float(np.sum(np.abs(np.diff(np.concatenate([a, a[:1]])))))
        d = float(np.min(np.abs(a[:, None] - b[None, ::4])))
        d = min(d, float(np.min(np.abs(a[::4, None] - b[None, :]))))
        return length / (2.0 * math.pi * d * d)
