import numpy as np
import pytest
from hypothesis import settings

from betacut.equilibrium import equilibrium
from betacut.operators import hard_edge_data
from betacut.potential import EdgeConfig, Nature, PotentialSpec
from betacut.recursion import expand_all

settings.register_profile("betacut", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("betacut")

S, H = Nature.SOFT, Nature.HARD

GAUSS = PotentialSpec(orders=((0.0, 0.0, 0.5),))
QUARTIC = PotentialSpec(orders=((0.0, 0.0, 0.5, 0.0, 0.1),))
SOFT3 = EdgeConfig(-3.0, 3.0, S, S)
SOFT4 = EdgeConfig(-4.0, 4.0, S, S)
ARCSINE = (PotentialSpec(orders=((0.0,),)), EdgeConfig(-1.0, 1.0, H, H))
MP = (PotentialSpec(orders=((0.0, 1.0),)), EdgeConfig(0.0, 6.0, H, S))


@pytest.fixture(scope="session")
def gauss_eq():
    return equilibrium(GAUSS, SOFT3)


@pytest.fixture(scope="session")
def quartic_eq():
    return equilibrium(QUARTIC, SOFT4)


_EXP = {}


def cached_expansion(spec, edges, beta, max_k):
    key = (spec, edges, float(beta), max_k)
    if key not in _EXP:
        eq = equilibrium(spec, edges)
        _EXP[key] = expand_all(eq, hard_edge_data(edges), spec, beta, max_k)
    return _EXP[key]


@pytest.fixture(scope="session")
def expansion():
    return cached_expansion


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        print(line, flush=True)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
