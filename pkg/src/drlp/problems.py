"""Compile regression and LP problems into ReLU networks.

Each builder returns a network whose value at an input point equals the
loss of the corresponding estimation problem at that parameter vector,
so minimizing the network minimizes the loss.  Builders that create
mirrored unit pairs (two units sharing one hyperplane with opposite
orientation) return the pair metadata the solver needs to keep them in
lock step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .network import PairGroups, ReluNetwork
from .solver import QuadraticObjective


@dataclass
class RegressionData:
    """Design matrix (one row per observation) and response vector."""

    x: np.ndarray
    y: np.ndarray
    columns: list | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f"design {self.x.shape} and response {self.y.shape} do not align")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass
class LpInstance:
    """min <c, x>  subject to  A x <= b  and  x >= 0."""

    c: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.a.ndim != 2 or self.a.shape != (len(self.b), len(self.c)):
            raise ValueError("constraint matrix does not match c and b")


def build_random(topology, seed: int = 0, low: float = -1.0, high: float = 1.0) -> ReluNetwork:
    """Network with iid uniform(low, high) weights and biases.

    topology lists every width including input and the final output 1.
    Same seed, same network, bit for bit.
    """
    topology = [int(w) for w in topology]
    if len(topology) < 3 or topology[-1] != 1:
        raise ValueError("topology must be (input, hidden..., 1)")
    rng = np.random.Generator(np.random.Philox(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(topology[:-1], topology[1:]):
        weights.append(rng.uniform(low, high, size=(fan_out, fan_in)))
        biases.append(rng.uniform(low, high, size=fan_out))
    return ReluNetwork(weights, biases)


def build_quantile_lasso(data: RegressionData, alpha: float = 0.5, lam: float = 0.0):
    """Quantile regression loss with optional L1 penalty, as a network.

    The input point is (intercept, coefficients).  Per observation the
    residual r = y - <theta, (1, x)> contributes
    alpha * max(r, 0) + (1 - alpha) * max(-r, 0); the penalty adds
    lam * |theta_j| per coefficient (never the intercept).  Mirrored rows
    hold the residual in exact (row, -row) form with the alpha weights
    moved to the output layer; returns (net, pairs).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    n, p = data.n, data.p
    design = np.hstack([np.ones((n, 1)), data.x])      # (n, p+1), intercept first
    blocks_w = [-design, design]
    blocks_b = [data.y, -data.y]
    out_w = [np.full(n, alpha), np.full(n, 1.0 - alpha)]
    pairs = [((1, i + 1), (1, n + i + 1)) for i in range(n)]
    if lam > 0.0:
        pen = np.hstack([np.zeros((p, 1)), np.eye(p)])  # no intercept penalty
        blocks_w += [pen, -pen]
        blocks_b += [np.zeros(p), np.zeros(p)]
        out_w += [np.full(p, lam), np.full(p, lam)]
        pairs += [((1, 2 * n + j + 1), (1, 2 * n + p + j + 1)) for j in range(p)]
    w1 = np.vstack(blocks_w)
    b1 = np.concatenate(blocks_b)
    w2 = np.concatenate(out_w)[None, :]
    net = ReluNetwork([w1, w2], [b1, np.zeros(1)])
    return net, PairGroups(pairs)


def quantile_loss(data: RegressionData, theta, alpha: float = 0.5, lam: float = 0.0) -> float:
    """Direct evaluation of the quantile + L1 objective (intercept first)."""
    theta = np.asarray(theta, dtype=np.float64)
    r = data.y - (theta[0] + data.x @ theta[1:])
    rho = alpha * np.maximum(r, 0.0) + (1.0 - alpha) * np.maximum(-r, 0.0)
    return float(np.sum(rho) + lam * np.sum(np.abs(theta[1:])))


def build_clad(data: RegressionData):
    """Least absolute deviations for a censored (ReLU) linear model.

    The network value at theta is sum_i |y_i - max(<theta, x_i>, 0)|.
    No intercept column is added; include one in the design if wanted.
    Second-layer rows come in mirrored pairs; returns (net, pairs).
    """
    n = data.n
    w1 = data.x.copy()
    b1 = np.zeros(n)
    w2 = np.vstack([np.eye(n), -np.eye(n)])
    b2 = np.concatenate([-data.y, data.y])
    w3 = np.ones((1, 2 * n))
    net = ReluNetwork([w1, w2, w3], [b1, b2, np.zeros(1)])
    pairs = PairGroups([((2, i + 1), (2, n + i + 1)) for i in range(n)])
    return net, pairs


def clad_loss(data: RegressionData, theta) -> float:
    """Direct evaluation of the censored LAD objective."""
    fit = np.maximum(data.x @ np.asarray(theta, dtype=np.float64), 0.0)
    return float(np.sum(np.abs(data.y - fit)))


def _block_diag_repeat(w: np.ndarray, n: int) -> np.ndarray:
    """Block diagonal with n copies of w (data-independent layers act per sample)."""
    return np.kron(np.eye(n), w)


def build_l1_first_layer(base: ReluNetwork, data: RegressionData):
    """L1 training loss of a network's first layer, as a network.

    The returned network's input is the flattened first-layer parameters
    (weight rows in order, then biases) of `base`; its value is
    sum_i |y_i - base(x_i)| with all deeper layers of `base` frozen.
    Dimensions: base first layer has n1 * (n0 + 1) parameters; the loss
    network stacks every observation's copy of the deeper layers as block
    diagonals and ends in 2N mirrored residual units.  Returns (net, pairs).
    """
    n0, n1 = base.input_dim, base.relu_widths[0]
    if data.p != n0:
        raise ValueError(f"data has {data.p} features but base expects {n0}")
    n = data.n
    # layer 1: stacked per-sample maps from flattened parameters to arguments
    m_rows = []
    for i in range(n):
        m_rows.append(np.hstack([np.kron(np.eye(n1), data.x[i][None, :]), np.eye(n1)]))
    layers_w = [np.vstack(m_rows)]
    layers_b = [np.zeros(n * n1)]
    # middle layers: one frozen copy of each deeper hidden layer per sample
    for l in range(1, base.depth):
        layers_w.append(_block_diag_repeat(base.weights[l], n))
        layers_b.append(np.tile(base.biases[l], n))
    # residual layer: +/- copies of the frozen output map against y
    d_out = _block_diag_repeat(base.weights[-1], n)        # (n, n * n_last)
    t_out = np.tile(base.biases[-1], n)
    layers_w.append(np.vstack([d_out, -d_out]))
    layers_b.append(np.concatenate([-data.y + t_out, data.y - t_out]))
    layers_w.append(np.ones((1, 2 * n)))
    layers_b.append(np.zeros(1))
    net = ReluNetwork(layers_w, layers_b)
    pairs = PairGroups([((base.depth + 1, i + 1), (base.depth + 1, n + i + 1)) for i in range(n)])
    return net, pairs


def flatten_first_layer(base: ReluNetwork) -> np.ndarray:
    """First-layer parameters of base in the loss network's input order."""
    return np.concatenate([base.weights[0].ravel(), base.biases[0]])


def set_first_layer(base: ReluNetwork, theta) -> ReluNetwork:
    """Copy of base with its first layer replaced by the flattened theta."""
    n1, n0 = base.weights[0].shape
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (n1 * (n0 + 1),):
        raise ValueError(f"theta has shape {theta.shape}, expected ({n1 * (n0 + 1)},)")
    weights = [w.copy() for w in base.weights]
    biases = [b.copy() for b in base.biases]
    weights[0] = theta[: n1 * n0].reshape(n1, n0)
    biases[0] = theta[n1 * n0:]
    return ReluNetwork(weights, biases)


def l1_first_layer_loss(base: ReluNetwork, data: RegressionData, theta) -> float:
    """Direct evaluation: sum_i |y_i - base(x_i)| with the first layer set to theta."""
    from .network import evaluate

    net = set_first_layer(base, theta)
    return float(sum(abs(data.y[i] - evaluate(net, data.x[i])) for i in range(data.n)))


def build_lasso(data: RegressionData, lam: float = 0.0):
    """Least squares with L1 penalty: quadratic part plus a penalty network.

    Returns (net, q, pairs): q(theta) = |y - X theta|^2 expanded, and the
    network contributes lam * sum_j |theta_j| through p mirrored pairs.
    No intercept; center or augment the design beforehand.
    """
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    p = data.p
    q = QuadraticObjective(
        quad=data.x.T @ data.x,
        lin=-2.0 * data.x.T @ data.y,
        const=float(data.y @ data.y),
    )
    w1 = np.vstack([lam * np.eye(p), -lam * np.eye(p)])
    b1 = np.zeros(2 * p)
    w2 = np.ones((1, 2 * p))
    net = ReluNetwork([w1, w2], [b1, np.zeros(1)])
    pairs = PairGroups([((1, j + 1), (1, p + j + 1)) for j in range(p)]) if lam > 0.0 else None
    return net, q, pairs


def lasso_loss(data: RegressionData, theta, lam: float = 0.0) -> float:
    """Direct evaluation of |y - X theta|^2 + lam * |theta|_1."""
    theta = np.asarray(theta, dtype=np.float64)
    r = data.y - data.x @ theta
    return float(r @ r + lam * np.sum(np.abs(theta)))


def build_from_lp(lp: LpInstance, penalty: float = 1.0):
    """Exact penalty network for an LP: objective plus weighted violations.

    Value is <c, x> + penalty * (sum of constraint violations + sum of
    negative parts of x).  The two objective units mirror each other;
    returns (net, pairs).  With a large enough penalty, minima coincide
    with LP optima; an unbounded LP keeps the network unbounded.
    """
    if penalty <= 0.0:
        raise ValueError("penalty must be positive")
    n_var = len(lp.c)
    n_con = len(lp.b)
    w1 = np.vstack([lp.c[None, :], -lp.c[None, :], lp.a, -np.eye(n_var)])
    b1 = np.concatenate([np.zeros(2), -lp.b, np.zeros(n_var)])
    w2 = np.concatenate([[1.0, -1.0], np.full(n_con + n_var, penalty)])[None, :]
    net = ReluNetwork([w1, w2], [b1, np.zeros(1)])
    return net, PairGroups([((1, 1), (1, 2))])


def load_csv(path, response=None) -> RegressionData:
    """Numeric CSV -> RegressionData.

    Comma separated, '.' decimal, UTF-8, no quoting.  A first row that
    fails to parse as numbers is taken as a header.  The response is the
    named column (header required) or the last column when response is
    None.  Malformed cells are reported with 1-based row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and not all(cell.strip() == "" for cell in r)]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    header = None
    try:
        [float(cell) for cell in rows[0]]
    except ValueError:
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
        if not rows:
            raise ValueError(f"{path}: header but no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {i + 1 + (header is not None)} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: row {i + 1 + (header is not None)}, column {j + 1}: not a number: {cell!r}"
                ) from None
    if response is None:
        y_col = width - 1
    else:
        if header is None:
            raise ValueError(f"{path}: response column {response!r} needs a header row")
        if response not in header:
            raise ValueError(f"{path}: no column named {response!r}")
        y_col = header.index(response)
    x_cols = [j for j in range(width) if j != y_col]
    columns = [header[j] for j in x_cols] if header else None
    return RegressionData(x=data[:, x_cols], y=data[:, y_col], columns=columns)
