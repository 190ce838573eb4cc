import numpy as np
import pytest

from rlsa.core import ProblemInstance, zero_noise
from rlsa.problems import affine_instance, make_affine_vi, scalar_kkt_instance
from rlsa.sets import Box, QuadraticConstraint


def line_instance(constraints, lower=-2.0, upper=2.0, mapping=None, noise=None):
    """1-D instance with ``F(x, xi) = x + xi`` unless ``mapping`` is given."""
    mapping = mapping or (lambda x, xi: x + xi)
    return ProblemInstance(Box([lower], [upper]), constraints, mapping, noise or zero_noise(1),
                           mean_mapping=lambda x: np.asarray(x, dtype=float))


@pytest.fixture
def scalar():
    return scalar_kkt_instance()


@pytest.fixture
def affine2():
    return make_affine_vi(1, 2, 4, 0.1)


@pytest.fixture
def affine5():
    return make_affine_vi(0, 5, 10, 0.1)


@pytest.fixture
def one_ball_instance():
    """``F(x) = x - (2, 0)`` on ``[-2, 2]^2`` with ``||x||^2 <= 1``; solution ``(1, 0)``, multiplier 1/2."""
    return affine_instance(np.eye(2), [-2.0, 0.0], [QuadraticConstraint.ball([0.0, 0.0], 1.0)],
                           Box([-2.0, -2.0], [2.0, 2.0]), reference=([1.0, 0.0], [0.5]))
