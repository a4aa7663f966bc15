import numpy as np
import pytest

from fdshape.lti import RationalTF, StateSpace
from fdshape.plant import GeneralizedPlant, build_fdi_plant
from fdshape.synthesis import SynthesisConfig, synthesize


def loop_data():
    G = RationalTF(np.poly([-25, -15, -5]), np.poly([-40, -10, -3]))
    C = RationalTF([15.0, 25.0])
    Gd = RationalTF([1, 62.8, 1392, 1.43e4, 4.87e4], [1, 332, 2724, 8.10e4, 1.22e5])
    Gf = RationalTF([0.92, 43.25, 1911, 5976, 1.75e4], [1, 13.19, 3966, 2605, 3.90e4])
    return G, C, Gd, Gf


def random_stable(rng, n, m, p, margin=0.3):
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + margin) * np.eye(n)
    return StateSpace(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)),
                      rng.standard_normal((p, m)))


def random_plant(rng, n, mw=2, mu=1, pz=2, py=2, d22=False):
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.3) * np.eye(n)
    r = rng.standard_normal
    return GeneralizedPlant(A, r((n, mw)), r((n, mu)), r((pz, n)), r((py, n)), r((pz, mw)),
                            r((pz, mu)), r((py, mw)), 0.3 * r((py, mu)) if d22 else np.zeros((py, mu)),
                            {"d": (0, 1), "f": (1, 2)} if mw == 2 else {})


def random_fdi_plant(rng, n):
    """Residual wired straight to the filter output, as in the feedback-loop layout."""
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(n)
    return GeneralizedPlant(A, rng.standard_normal((n, 2)), np.zeros((n, 1)), np.zeros((1, n)),
                            rng.standard_normal((2, n)), np.zeros((1, 2)), np.ones((1, 1)),
                            rng.standard_normal((2, 2)), np.zeros((2, 1)),
                            {"d": (0, 1), "f": (1, 2)}, {"residual": (0, 1)})


@pytest.fixture(scope="session")
def loop():
    return loop_data()


@pytest.fixture(scope="session")
def loop_plant(loop):
    return build_fdi_plant(*loop)


@pytest.fixture(scope="session")
def loop_synthesis(loop, loop_plant):
    """One full synthesis run on the feedback-loop example, shared across tests."""
    return synthesize(loop_plant, SynthesisConfig(gamma0=1.0), weights=(loop[2], loop[3]))


# --- acceptance summary ----------------------------------------------------

ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
