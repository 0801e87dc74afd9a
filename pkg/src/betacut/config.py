"""Run configuration: strict JSON schema, parsed before any computation.

A config file is a JSON object with the sections below; only ``potential``,
``edges`` and ``beta`` are required and unknown keys are rejected everywhere.

    {
      "potential": {"orders": [[0, 0, 0.5]], "interval": ["-inf", "inf"]},
      "edges": {"margin": 1.0, "nature_minus": "soft", "nature_plus": "soft"},
      "beta": 2.0,
      "contour": {"rho0": 1.25, "ratio": 1.15, "count": 4, "nodes": 256},
      "operators": {"kinv_tol": 1e-7, "nodes": 256},
      "recursion": {"max_k": 2, "M": 64, "probes": [[3.0], [3.0, -3.0]]},
      "mc": {"N": 100, "sweeps": 20000, "burn_in": 2000, "chains": 1, "seed": 0},
      "output": {"dir": "betacut-out", "format": "json"}
    }

``output.format`` "csv" (the default) writes plot data as CSV next to the
JSON results; "json" writes JSON only.  With ``margin`` the soft edges are
placed at alpha_tau -+ margin after a provisional solve; otherwise
``a_minus`` and ``a_plus`` are used as given.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .analytic_kernel import ContourFamily
from .montecarlo import MCConfig
from .operators import KINV_TOL
from .potential import EdgeConfig, Nature, PotentialSpec, _parse_ext_real
from .recursion import M_DEFAULT

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

_TOP = {"potential", "edges", "beta", "contour", "operators", "recursion", "mc", "output"}
_EDGES = {"a_minus", "a_plus", "nature_minus", "nature_plus", "margin"}
_CONTOUR = {"rho0", "ratio", "count", "nodes", "rho_E"}
_OPERATORS = {"kinv_tol", "nodes"}
_RECURSION = {"max_k", "M", "probes"}
_MC = {"N", "beta", "sweeps", "burn_in", "step", "chains", "seed", "thin"}
_OUTPUT = {"dir", "format"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSpec
    edges: dict
    beta: float
    contour: ContourFamily
    kinv_tol: float = KINV_TOL
    operator_nodes: int | None = None
    max_k: int = 1
    M: int = M_DEFAULT
    probes: tuple = ()
    mc: dict = field(default_factory=dict)
    output_dir: str = "betacut-out"
    output_format: str = "csv"

    def mc_config(self, **override) -> MCConfig:
        kw = {"beta": self.beta, "burn_in": 2000, "sweeps": 22000, "N": 100}
        kw.update(self.mc)
        kw.update({k: v for k, v in override.items() if v is not None})
        try:
            return MCConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"mc: {exc}") from exc


def _section(cfg: dict, name: str, allowed: set) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{name} must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    return sec


def _num(sec: dict, key: str, default, kind=float, where: str = ""):
    v = sec.get(key, default)
    if isinstance(v, bool):
        raise ConfigError(f"{where}{key} must be a number")
    try:
        out = kind(_parse_ext_real(v)) if kind is float else kind(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}{key} must be a number") from exc
    if kind is int and out != v:
        raise ConfigError(f"{where}{key} must be an integer")
    return out


def parse_config(cfg: dict) -> RunConfig:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - _TOP
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for req in ("potential", "edges", "beta"):
        if req not in cfg:
            raise ConfigError(f"missing required key: {req}")
    try:
        pot = PotentialSpec.from_config(cfg["potential"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"potential: {exc}") from exc
    beta = _num(cfg, "beta", None)
    if not (math.isfinite(beta) and beta > 0):
        raise ConfigError("beta must be a positive real")

    e = _section(cfg, "edges", _EDGES)
    edges = {}
    for side in ("nature_minus", "nature_plus"):
        try:
            edges[side] = Nature(e.get(side, "soft"))
        except ValueError as exc:
            raise ConfigError(f"edges.{side} must be 'soft' or 'hard'") from exc
    for k in ("a_minus", "a_plus", "margin"):
        if k in e:
            edges[k] = _num(e, k, None, where="edges.")
    if "margin" in edges:
        if not edges["margin"] > 0:
            raise ConfigError("edges.margin must be positive")
        for side, a in (("nature_minus", "a_minus"), ("nature_plus", "a_plus")):
            if edges[side] is Nature.HARD and a not in edges:
                raise ConfigError(f"edges.{a} is required for a hard edge")
    else:
        if "a_minus" not in edges or "a_plus" not in edges:
            raise ConfigError("edges needs a_minus and a_plus unless margin is given")
        try:
            EdgeConfig(edges["a_minus"], edges["a_plus"], edges["nature_minus"], edges["nature_plus"])
        except ValueError as exc:
            raise ConfigError(f"edges: {exc}") from exc

    c = _section(cfg, "contour", _CONTOUR)
    try:
        contour = ContourFamily.geometric(
            rho0=_num(c, "rho0", 1.25, where="contour."),
            ratio=_num(c, "ratio", 1.15, where="contour."),
            count=_num(c, "count", 4, int, "contour."),
            nodes=_num(c, "nodes", 256, int, "contour."),
            rho_E=_num(c, "rho_E", 4.0, where="contour."),
        )
    except ValueError as exc:
        raise ConfigError(f"contour: {exc}") from exc

    o = _section(cfg, "operators", _OPERATORS)
    kinv_tol = _num(o, "kinv_tol", KINV_TOL, where="operators.")
    if not kinv_tol > 0:
        raise ConfigError("operators.kinv_tol must be positive")
    onodes = _num(o, "nodes", 0, int, "operators.") or None
    if onodes is not None and onodes < 64:
        raise ConfigError("operators.nodes must be at least 64")

    r = _section(cfg, "recursion", _RECURSION)
    max_k = _num(r, "max_k", 1, int, "recursion.")
    M = _num(r, "M", M_DEFAULT, int, "recursion.")
    if max_k < -1 or M < 8:
        raise ConfigError("recursion.max_k must be >= -1 and recursion.M >= 8")
    probes = r.get("probes", [])
    if not isinstance(probes, list) or not all(isinstance(p, list) and p for p in probes):
        raise ConfigError("recursion.probes must be a list of non-empty point lists")
    try:
        probes = tuple(tuple(float(x) for x in p) for p in probes)
    except (TypeError, ValueError) as exc:
        raise ConfigError("recursion.probes must hold real numbers") from exc

    m = dict(_section(cfg, "mc", _MC))
    for k in m:
        m[k] = _num(m, k, None, float if k in ("beta", "step") else int, "mc.")
    try:
        MCConfig(**{"N": 100, "beta": beta, "sweeps": 22000, "burn_in": 2000, **m})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"mc: {exc}") from exc

    out = _section(cfg, "output", _OUTPUT)
    fmt = out.get("format", "csv")
    if fmt not in ("json", "csv"):
        raise ConfigError("output.format must be 'json' or 'csv'")
    odir = out.get("dir", "betacut-out")
    if not isinstance(odir, str) or not odir:
        raise ConfigError("output.dir must be a non-empty string")

    return RunConfig(pot, edges, beta, contour, kinv_tol, onodes, max_k, M, probes, m, odir, fmt)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return parse_config(cfg)
