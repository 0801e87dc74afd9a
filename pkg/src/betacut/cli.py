"""Command line entry point: betacut <command> <config> [options].

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  Errors are
reported as a JSON object on stdout and no artifact is written.  Artifacts are
assembled in memory and written only once the whole command has succeeded.
"""
from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from .analytic_kernel import SeriesFn
from .asymptotics import InterpolationError, clt_covariance, clt_mean, free_energy_coeffs, lnZ_prediction
from .config import ConfigError, RunConfig, load_config
from .equilibrium import (
    EquilibriumError,
    check_offcritical,
    density,
    equilibrium,
    equilibrium_energy,
    select_working_interval,
    validate_hypotheses,
)
from .montecarlo import MCError, estimate_correlators, estimate_linear_statistic, sample_chain, thermodynamic_lnZ
from .operators import OperatorError, apply_K_inverse, hard_edge_data
from .potential import EdgeConfig, trim
from .recursion import RecursionError, expand_all, loop_residual

__all__ = ["main", "run_command", "parse_poly", "dumps"]

COMMANDS = ("equilibrium", "expand", "free-energy", "clt", "sample", "verify")
NUMERICAL = (EquilibriumError, RecursionError, OperatorError, MCError, InterpolationError,
             FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError)


# ---------------------------------------------------------------- output

def _fmt(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return json.dumps(str(x))
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.complexfloating, complex)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()] if obj.dtype != object else [_plain(v) for v in obj]
    return obj


def dumps(obj, indent: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    obj = _plain(obj)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        vals = [_plain(v) for v in obj]
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            return "[" + ", ".join(dumps(v) for v in vals) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in vals) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv(header: str, columns: list, rows) -> str:
    lines = [f"# {header}", ",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v)) for v in r))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- helpers

_TERM = re.compile(r"([+-]?)(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)?\*?(x(?:\^(\d+))?)?")


def parse_poly(text: str) -> np.ndarray:
    """Ascending coefficients from "c0,c1,..." or a polynomial in x such as "x^2 - 3*x + 1"."""
    s = text.replace(" ", "").replace("**", "^")
    if not s:
        raise ConfigError("empty polynomial")
    if "x" not in s:
        try:
            return trim([float(v) for v in s.split(",")])
        except ValueError as exc:
            raise ConfigError(f"cannot parse polynomial: {text!r}") from exc
    coeffs: dict[int, float] = {}
    pos = 0
    while pos < len(s):
        m = _TERM.match(s, pos)
        if m is None or m.end() == pos or not (m.group(2) or m.group(3)):
            raise ConfigError(f"cannot parse polynomial: {text!r}")
        if pos > 0 and not m.group(1):
            raise ConfigError(f"cannot parse polynomial: {text!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        c = float(m.group(2)) if m.group(2) else 1.0
        p = 0 if not m.group(3) else (int(m.group(4)) if m.group(4) else 1)
        coeffs[p] = coeffs.get(p, 0.0) + sign * c
        pos = m.end()
    out = np.zeros(max(coeffs) + 1)
    for p, c in coeffs.items():
        out[p] = c
    return trim(out)


def resolve_edges(rc: RunConfig) -> EdgeConfig:
    e = rc.edges
    if "margin" not in e:
        return EdgeConfig(e["a_minus"], e["a_plus"], e["nature_minus"], e["nature_plus"])
    lo, hi = rc.potential.interval
    am = e.get("a_minus", lo if math.isfinite(lo) else -1e4)
    ap = e.get("a_plus", hi if math.isfinite(hi) else 1e4)
    prov = EdgeConfig(am, ap, e["nature_minus"], e["nature_plus"])
    return select_working_interval(rc.potential, prov, e["margin"])


def _edges_json(ed: EdgeConfig) -> dict:
    return {"a_minus": ed.a_minus, "a_plus": ed.a_plus, "nature_minus": ed.nature_minus.value, "nature_plus": ed.nature_plus.value}


def _n_independent(rc: RunConfig) -> bool:
    return all(not np.any(rc.potential.coeffs(k)) for k in range(1, rc.potential.max_order + 1))


# ---------------------------------------------------------------- commands

def cmd_equilibrium(rc: RunConfig, args) -> dict:
    ed = resolve_edges(rc)
    eq = equilibrium(rc.potential, ed)
    oc = check_offcritical(eq, rc.contour)
    out = {
        "alpha_minus": eq.support.alpha_minus,
        "alpha_plus": eq.support.alpha_plus,
        "constant_C": eq.constant_C,
        "energy": equilibrium_energy(eq),
        "minS": oc["minS"],
        "edges": _edges_json(ed),
    }
    x = np.linspace(eq.support.alpha_minus, eq.support.alpha_plus, 401)[1:-1]
    rho = density(eq, x)
    csv = _csv("x: position on the real line; rho: equilibrium density", ["x", "rho"], zip(x, rho))
    return {"equilibrium.json": out, "equilibrium_density.csv": csv}


def _term_json(t) -> dict:
    d = np.asarray(t.data)
    out = {"n": t.n, "k": t.k, "M": t.M, "pole_order": t.pole_order, "shape": list(d.shape),
           "coeffs": np.real(d).ravel()}
    if np.iscomplexobj(d) and np.max(np.abs(d.imag), initial=0.0) > 0:
        out["coeffs_imag"] = np.imag(d).ravel()
    return out


def cmd_expand(rc: RunConfig, args) -> dict:
    ed = resolve_edges(rc)
    eq = equilibrium(rc.potential, ed)
    max_k = args.max_k if args.max_k is not None else rc.max_k
    ex = expand_all(eq, hard_edge_data(ed), rc.potential, rc.beta, max_k, M=rc.M, kinv_tol=rc.kinv_tol)
    terms = {f"{n},{k}": _term_json(t) for (n, k), t in sorted(ex.terms.items())}
    probes = []
    for p in rc.probes:
        vals = {}
        for (n, k), t in sorted(ex.terms.items()):
            if n == len(p):
                vals[f"{n},{k}"] = complex(np.asarray(t(*p)).item())
        probes.append({"point": list(p), "values": vals})
    out = {
        "basis": "W(z_1..z_n) = prod_i (1 - z_i^-2)^-P sum c[j_1..j_n] prod_i z_i^-j_i, x = center + gamma (z + 1/z)",
        "frame": {"center": eq.frame.center, "gamma": eq.frame.gamma},
        "beta": rc.beta,
        "max_k": max_k,
        "terms": terms,
        "residuals": {f"{n},{k}": v for (n, k), v in sorted(ex.residuals.items())},
        "probes": probes,
    }
    return {"expand.json": out}


def cmd_free_energy(rc: RunConfig, args) -> dict:
    ed = resolve_edges(rc)
    max_k = args.max_k if args.max_k is not None else rc.max_k
    fe = free_energy_coeffs(rc.potential, ed, rc.beta, max_k)
    out = {"F": {str(k): v for k, v in fe.coeffs.items()}, "reference": fe.reference, "s_quadrature": fe.s_quadrature}
    return {"free_energy.json": out}


def cmd_clt(rc: RunConfig, args) -> dict:
    h = parse_poly(args.h)
    ed = resolve_edges(rc)
    eq = equilibrium(rc.potential, ed)
    edge = hard_edge_data(ed)
    out = {"h": h, "mean": clt_mean(eq, edge, rc.beta, h), "covariance": clt_covariance(eq, edge, rc.beta, h)}
    return {"clt.json": out}


def cmd_sample(rc: RunConfig, args) -> dict:
    ed = resolve_edges(rc)
    cfg = rc.mc_config(N=args.N, sweeps=args.sweeps, seed=args.seed)
    ch = sample_chain(rc.potential, ed, cfg)
    rows = []
    for c in range(ch.samples.shape[0]):
        for r in range(ch.records):
            rows.append([c, cfg.burn_in + (r + 1) * ch.thin] + list(ch.samples[c, r]))
    cols = ["chain", "sweep"] + [f"lambda_{i}" for i in range(cfg.N)]
    csv = _csv("chain: chain index; sweep: sweep index after which the configuration was recorded; lambda_i: eigenvalues",
               cols, rows)
    name = args.out or "chain.csv"
    return {name: csv, "sample.json": {"N": cfg.N, "beta": cfg.beta, "sweeps": cfg.sweeps, "burn_in": cfg.burn_in,
                                       "thin": ch.thin, "step": ch.step, "acceptance": ch.acceptance,
                                       "edges": _edges_json(ed), "csv": name}}


def _check(name, value, threshold, passed, **extra) -> dict:
    return {"name": name, "pass": bool(passed), "value": value, "threshold": threshold, **extra}


def cmd_verify(rc: RunConfig, args) -> dict:
    ed = resolve_edges(rc)
    checks = []
    rep = validate_hypotheses(rc.potential, ed, rc.contour)
    checks.append(_check("hypotheses", rep.get("minS", 0.0), "one-cut, offcritical, confining", rep["ok"]))
    eq = equilibrium(rc.potential, ed)
    edge = hard_edge_data(ed)
    # operator round trip K K^-1 g on random admissible g
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        g = SeriesFn(eq.frame, rng.standard_normal(10) * 0.5 ** np.arange(10), 0)
        g = SeriesFn(eq.frame, np.concatenate([[0.0, 0.0], g.coeffs]), 0)
        f, res = apply_K_inverse(eq, edge, g, kinv_tol=rc.kinv_tol, m=rc.operator_nodes, return_residual=True)
        worst = max(worst, res)
    checks.append(_check("operator_roundtrip", worst, 1e-8, worst <= 1e-8))
    max_k = min(rc.max_k, 2)
    ex = expand_all(eq, edge, rc.potential, rc.beta, max_k, M=rc.M, kinv_tol=rc.kinv_tol)
    lead = loop_residual(ex, 1, -1, radius=rc.contour.radius(0))
    checks.append(_check("leading_loop_equation", lead, 1e-8, lead <= 1e-8))
    r = max(ex.residuals.values())
    checks.append(_check("loop_residuals", r, 1e-6, r <= 1e-6))
    sym = max((t.symmetry_defect() for t in ex.terms.values()), default=0.0)
    checks.append(_check("symmetry", sym, 1e-9, sym <= 1e-9))
    sparse = all(ex[(k + 3, k)].is_zero for k in range(-1, max_k + 1))
    checks.append(_check("sparsity", 0.0 if sparse else 1.0, 0.0, sparse))
    if rc.beta == 2.0 and _n_independent(rc) and not ed.hard and max_k >= 0:
        z = ex[(1, 0)]
        v = float(np.max(np.abs(z.data))) if not z.is_zero else 0.0
        checks.append(_check("beta2_zero_W10", v, 1e-10, v <= 1e-10))

    cfg = rc.mc_config()
    ch = sample_chain(rc.potential, ed, cfg)
    N = cfg.N
    xp = eq.support.alpha_plus + 1.5
    est = estimate_correlators(ch, [xp], 1)[1]
    pred = sum(float(N) ** (-k) * complex(np.asarray(ex[(1, k)](xp)).item()).real for k in range(-1, max_k + 1))
    dev = abs(float(est.value[0]) - pred)
    se = float(est.std_error[0])
    checks.append(_check("mc_W1", dev, f"3 std errors ({3 * se:.3g})", dev <= 3 * se, point=xp))
    h = np.array([0.0, 1.0])
    m_est, v_est = estimate_linear_statistic(ch, h, eq)
    m = clt_mean(eq, edge, rc.beta, h)
    C = clt_covariance(eq, edge, rc.beta, h)
    dm, dv = abs(float(m_est.value) - m), abs(v_est.value - C)
    checks.append(_check("clt_mean_x", dm, f"3 std errors ({3 * m_est.std_error:.3g})", dm <= 3 * m_est.std_error))
    checks.append(_check("clt_variance_x", dv, f"3 std errors ({3 * v_est.std_error:.3g})", dv <= 3 * v_est.std_error))
    if not ed.hard:
        fe = free_energy_coeffs(rc.potential, ed, rc.beta, min(max_k, 1))
        ti = thermodynamic_lnZ(rc.potential, ed, cfg)
        pz = lnZ_prediction(fe, N)
        d = abs(ti.value - pz)
        checks.append(_check("free_energy_lnZ", d, f"3 std errors ({3 * ti.std_error:.3g})", d <= 3 * ti.std_error))
    out = {"checks": checks, "passed": sum(c["pass"] for c in checks), "total": len(checks),
           "edges": _edges_json(ed), "mc": {"N": N, "sweeps": cfg.sweeps, "seed": cfg.seed}}
    return {"verify.json": out}


HANDLERS = {
    "equilibrium": cmd_equilibrium,
    "expand": cmd_expand,
    "free-energy": cmd_free_energy,
    "clt": cmd_clt,
    "sample": cmd_sample,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------- entry

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="betacut", description="Large-N expansions of one-cut beta ensembles")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config")
        s.add_argument("--out-dir", default=None, help="overrides output.dir")
        if name in ("expand", "free-energy"):
            s.add_argument("--max-k", type=int, default=None)
        if name == "clt":
            s.add_argument("--h", required=True, help='test polynomial, "c0,c1,..." or e.g. "x^2 - x"')
        if name == "sample":
            s.add_argument("--N", type=int, default=None)
            s.add_argument("--sweeps", type=int, default=None)
            s.add_argument("--seed", type=int, default=None)
            s.add_argument("--out", default=None)
    return p


def _error(kind: str, exc: BaseException, code: int) -> int:
    print(dumps({"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}))
    return code


def run_command(argv) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        rc = load_config(args.config)
        if args.command == "sample":
            rc.mc_config(N=args.N, sweeps=args.sweeps, seed=args.seed)
    except ConfigError as exc:
        return _error("config", exc, 2)
    try:
        artifacts = HANDLERS[args.command](rc, args)
    except ConfigError as exc:
        return _error("config", exc, 2)
    except NUMERICAL as exc:
        return _error("numerical", exc, 3)
    outdir = Path(args.out_dir or rc.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, content in artifacts.items():
        if name.endswith(".csv") and rc.output_format == "json" and args.command != "sample":
            continue
        text = content if isinstance(content, str) else dumps(content) + "\n"
        (outdir / name).write_text(text)
    main_json = next((c for n, c in artifacts.items() if n.endswith(".json")), None)
    if main_json is not None:
        print(dumps(main_json))
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
