import numpy as np
import pytest

from drlp import ReluNetwork


@pytest.fixture
def net_fold_sum():
    """(2,2,1,1): first layer folds the plane, output sums and shifts.

    f(x) = relu(relu(x1 - x2) + relu(x1 + x2) - 1), 7 affine regions.
    """
    return ReluNetwork(
        [np.array([[1.0, -1.0], [1.0, 1.0]]), np.array([[1.0, 1.0]]), np.array([[1.0]])],
        [np.zeros(2), np.array([-1.0]), np.zeros(1)],
    )


@pytest.fixture
def net_split_line():
    """(1,2,1,1): both first-layer units share the hyperplane x = 0.

    f(x) = relu(relu(x) - relu(x)) = 0 everywhere.
    """
    return ReluNetwork(
        [np.array([[1.0], [1.0]]), np.array([[1.0, -1.0]]), np.array([[1.0]])],
        [np.zeros(2), np.zeros(1), np.zeros(1)],
    )


@pytest.fixture
def net_split_line_mirrored():
    """Same as net_split_line but the second unit reads -x."""
    return ReluNetwork(
        [np.array([[1.0], [-1.0]]), np.array([[1.0, -1.0]]), np.array([[1.0]])],
        [np.zeros(2), np.zeros(1), np.zeros(1)],
    )


@pytest.fixture
def net_hinge_gap():
    """(2,2,1,1): f(x) = relu(relu(x1) - relu(x2) - 1), vertex at (1, 0)."""
    return ReluNetwork(
        [np.eye(2), np.array([[1.0, -1.0]]), np.array([[1.0]])],
        [np.zeros(2), np.array([-1.0]), np.zeros(1)],
    )


@pytest.fixture
def net_hinge_gap_negated(net_hinge_gap):
    """net_hinge_gap with the output sign flipped: (1, 0) is no longer a min."""
    w = [a.copy() for a in net_hinge_gap.weights]
    b = [a.copy() for a in net_hinge_gap.biases]
    w[-1] = -w[-1]
    return ReluNetwork(w, b)
