"""N-dependent polynomial potentials V = sum_k N^{-k} V^{k} and edge configurations.

Polynomials are stored as ascending coefficient arrays ``c`` with
``p(x) = c[0] + c[1] x + ... + c[d] x^d``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

__all__ = [
    "Nature",
    "EdgeConfig",
    "PotentialSpec",
    "evaluate",
    "derivative",
    "antiderivative",
    "resum",
    "gaussian_reference",
    "interpolate",
    "is_confining",
    "polyval",
    "trim",
]


class Nature(str, enum.Enum):
    SOFT = "soft"
    HARD = "hard"


def trim(coeffs) -> np.ndarray:
    """Drop trailing zero coefficients (keeps at least one entry)."""
    c = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
    nz = np.flatnonzero(c != 0.0)
    if nz.size == 0:
        return np.zeros(1)
    return c[: nz[-1] + 1]


def polyval(coeffs, x):
    """Horner evaluation; works for real or complex arrays."""
    c = np.asarray(coeffs)
    x = np.asarray(x)
    out = np.zeros(np.broadcast(x, x).shape, dtype=np.result_type(c.dtype, x.dtype, float))
    for a in c[::-1]:
        out = out * x + a
    return out


@dataclass(frozen=True)
class EdgeConfig:
    """Working interval [a-, a+] together with the nature of each edge."""

    a_minus: float
    a_plus: float
    nature_minus: Nature = Nature.SOFT
    nature_plus: Nature = Nature.SOFT

    def __post_init__(self):
        object.__setattr__(self, "nature_minus", Nature(self.nature_minus))
        object.__setattr__(self, "nature_plus", Nature(self.nature_plus))
        if not (math.isfinite(self.a_minus) and math.isfinite(self.a_plus)):
            raise ValueError("working interval must be finite")
        if not self.a_minus < self.a_plus:
            raise ValueError("need a- < a+")

    @property
    def hard(self) -> tuple[int, ...]:
        """Signs tau in {-1, +1} of the hard edges."""
        out = []
        if self.nature_minus is Nature.HARD:
            out.append(-1)
        if self.nature_plus is Nature.HARD:
            out.append(+1)
        return tuple(out)

    @property
    def soft(self) -> tuple[int, ...]:
        return tuple(t for t in (-1, +1) if t not in self.hard)

    def edge(self, tau: int) -> float:
        return self.a_minus if tau < 0 else self.a_plus


@dataclass(frozen=True)
class PotentialSpec:
    """Potential V = sum_k N^{-k} V^{k}; ``orders[k]`` are the coefficients of V^{k}."""

    orders: tuple
    interval: tuple = (-math.inf, math.inf)
    label: str = ""

    def __post_init__(self):
        if len(self.orders) == 0:
            raise ValueError("order 0 must be present")
        orders = tuple(tuple(float(c) for c in np.atleast_1d(o)) for o in self.orders)
        for o in orders:
            if len(o) == 0 or not all(math.isfinite(c) for c in o):
                raise ValueError("polynomial coefficients must be finite reals")
        lo, hi = (float(self.interval[0]), float(self.interval[1]))
        if not lo < hi:
            raise ValueError("interval must satisfy b- < b+")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "interval", (lo, hi))

    @property
    def max_order(self) -> int:
        return len(self.orders) - 1

    def coeffs(self, k: int) -> np.ndarray:
        if k < 0 or k >= len(self.orders):
            raise KeyError(f"order absent: {k}")
        return trim(self.orders[k])

    def has_order(self, k: int) -> bool:
        return 0 <= k < len(self.orders)

    @classmethod
    def from_config(cls, cfg: dict, label: str = "") -> "PotentialSpec":
        """Build from ``{"orders": [[c0, c1, ...], ...], "interval": [a, b]}``."""
        unknown = set(cfg) - {"orders", "interval", "label"}
        if unknown:
            raise ValueError(f"unknown potential keys: {sorted(unknown)}")
        if "orders" not in cfg:
            raise ValueError("potential.orders is required")
        interval = cfg.get("interval", ["-inf", "inf"])
        if len(interval) != 2:
            raise ValueError("potential.interval must have two entries")
        return cls(
            orders=tuple(tuple(float(c) for c in o) for o in cfg["orders"]),
            interval=tuple(_parse_ext_real(v) for v in interval),
            label=str(cfg.get("label", label)),
        )


def _parse_ext_real(v) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        if s in ("-inf", "-infinity"):
            return -math.inf
        return float(s)
    return float(v)


def evaluate(spec: PotentialSpec, k: int, x):
    """Value of V^{k}(x); raises KeyError when the order is absent."""
    return polyval(spec.coeffs(k), x)


def derivative(spec_or_coeffs, k: int | None = None) -> np.ndarray:
    """Coefficients of (V^{k})'; also accepts a bare coefficient array."""
    c = spec_or_coeffs.coeffs(k or 0) if isinstance(spec_or_coeffs, PotentialSpec) else trim(spec_or_coeffs)
    if c.size == 1:
        return np.zeros(1)
    return trim(P.polyder(c))


def antiderivative(coeffs, constant: float = 0.0) -> np.ndarray:
    return trim(P.polyint(trim(coeffs), k=constant))


def resum(spec: PotentialSpec, N: int) -> np.ndarray:
    """Finite-N potential sum_k N^{-k} V^{k} as a single coefficient array."""
    if N < 1:
        raise ValueError("N must be a positive integer")
    out = np.zeros(1)
    for k, o in enumerate(spec.orders):
        out = P.polyadd(out, np.asarray(o, dtype=float) * float(N) ** (-k))
    return trim(out)


def gaussian_reference(alpha_minus: float, alpha_plus: float, interval=None, label: str = "") -> PotentialSpec:
    """Quadratic potential whose equilibrium measure is the semicircle on [alpha-, alpha+]."""
    if not alpha_minus < alpha_plus:
        raise ValueError("gaussian_reference needs alpha- < alpha+")
    a = 8.0 / (alpha_plus - alpha_minus) ** 2
    m = 0.5 * (alpha_minus + alpha_plus)
    coeffs = (a * m * m, -2.0 * a * m, a)
    return PotentialSpec(
        orders=(coeffs,),
        interval=interval if interval is not None else (-math.inf, math.inf),
        label=label or f"gaussian[{alpha_minus:g},{alpha_plus:g}]",
    )


def interpolate(v0: PotentialSpec, v1: PotentialSpec, s: float) -> PotentialSpec:
    """Orderwise (1 - s) v0 + s v1; both potentials must share the interval."""
    if tuple(v0.interval) != tuple(v1.interval):
        raise ValueError("interpolate: mismatched intervals")
    n = max(len(v0.orders), len(v1.orders))
    orders = []
    for k in range(n):
        a = np.asarray(v0.orders[k]) if k < len(v0.orders) else np.zeros(1)
        b = np.asarray(v1.orders[k]) if k < len(v1.orders) else np.zeros(1)
        orders.append(tuple(P.polyadd((1.0 - s) * a, s * b)))
    return PotentialSpec(orders=tuple(orders), interval=v0.interval, label=f"interp({s:g})")


def is_confining(spec: PotentialSpec) -> bool:
    """Polynomial proxy for confinement on unbounded intervals.

    On a finite interval every potential confines.  Otherwise require V^{0} of
    even degree >= 2 with positive leading coefficient.
    """
    lo, hi = spec.interval
    if math.isfinite(lo) and math.isfinite(hi):
        return True
    c = spec.coeffs(0)
    deg = c.size - 1
    if deg < 2:
        # a linear potential still confines on a half line when it grows towards the open end
        if deg == 1 and (math.isfinite(lo) != math.isfinite(hi)):
            return (c[1] > 0) if math.isfinite(lo) else (c[1] < 0)
        return False
    if deg % 2 == 1:
        # odd degree: only a half line can be confining
        if math.isfinite(lo):
            return c[-1] > 0
        if math.isfinite(hi):
            return c[-1] < 0
        return False
    return c[-1] > 0
