import numpy as np
import pytest

import privopt as po

# Local objective family used throughout: x^2, x^4, x^2+x^4, x^2+0.5x^4, 0.5x^2+x^4
QUARTIC_COEFFS = [
    [0, 0, 1],
    [0, 0, 0, 0, 1],
    [0, 0, 1, 0, 1],
    [0, 0, 1, 0, 0.5],
    [0, 0, 0.5, 0, 1],
]

# With the inverse-sqrt schedule, early steps on the full [-30, 30] box throw
# states against the walls (quartic gradients reach 1e5), so test runs start
# from an interior band; any feasible initialization is admissible.
INTERIOR_INIT = np.linspace(-1.0, 1.0, 5)[:, None]


def quartic_objectives():
    return [po.PolynomialObjective(c) for c in QUARTIC_COEFFS]


@pytest.fixture(scope="session")
def wide_box():
    return po.Box([-30.0], [30.0])


@pytest.fixture(scope="session")
def quartic_problem(wide_box):
    return po.GlobalProblem(objectives=quartic_objectives(), feasible=wide_box)


@pytest.fixture(scope="session")
def cycle5():
    return po.Topology.family("cycle", 5)


@pytest.fixture(scope="session")
def complete5():
    return po.Topology.family("complete", 5)


@pytest.fixture(scope="session")
def inv_sqrt():
    return po.StepSchedule(kind="inv_sqrt")


@pytest.fixture(scope="session")
def quartic_optimum(quartic_problem):
    return po.solve_centralized(quartic_problem)


def quartic_config(**overrides):
    doc = {
        "algorithm": "dgd",
        "topology": {"family": "cycle", "n": 5},
        "objectives": [{"kind": "polynomial", "coeffs": c} for c in QUARTIC_COEFFS],
        "feasible": {"lower": [-30], "upper": [30]},
        "schedule": {"kind": "inv_sqrt"},
        "max_iter": 400,
        "init": INTERIOR_INIT.tolist(),
    }
    doc.update(overrides)
    return doc
