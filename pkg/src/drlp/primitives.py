"""Incremental pseudoinverse maintenance and the region line search.

The pivoting solver tracks a set of constraint hyperplanes (one per
"owner" unit) through the rows of a left pseudoinverse of the matrix
whose columns are the owners' oriented normals.  Row k is biorthogonal
to the columns: <row_k, normal_of_owner_m> = delta_km.  Rows double as
the feasible edge directions leaving the current point inside its
region, which is what makes the pivot step cheap.

All update operations are O(m * input_dim) given the inner products of
one vector with every unit normal, which a single bias-free forward
sweep provides (inner_products_all).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    ZERO_TOL,
    ActivationPattern,
    PairGroups,
    ReluNetwork,
    inner_products_all,
    oriented_normal,
    subjective_arguments,
)

DEP_TOL = 1e-8     # relative dependence threshold for new columns
TIE_TOL = 1e-12    # relative window for line-search ties


class DependentColumn(Exception):
    """A normal to be added lies (numerically) in the span of the tracked ones."""


class Degenerate(Exception):
    """An axis update hit a vanishing denominator; the vertex is not regular."""


@dataclass
class PseudoInverse:
    """Rows biorthogonal to the oriented normals of the owner units.

    matrix has one row per owner; matrix @ A = identity, where A stacks
    the owners' oriented normals as columns.  The columns themselves are
    never stored; they are recomputed from (net, s, owner) on demand.
    """

    matrix: np.ndarray            # (m, input_dim)
    owners: list                  # m unit indices (layer, unit)

    @classmethod
    def empty(cls, input_dim: int) -> "PseudoInverse":
        return cls(np.zeros((0, input_dim)), [])

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def copy(self) -> "PseudoInverse":
        return PseudoInverse(self.matrix.copy(), list(self.owners))


@dataclass
class AdvanceResult:
    """Outcome of the line search: first unit crossing, or unbounded.

    t is the step length to the crossing (may be slightly negative when
    the start point sits marginally past a wall); neuron is None and t
    is +inf when no unit ahead constrains the ray.
    """

    t: float
    neuron: tuple | None

    @property
    def bounded(self) -> bool:
        return self.neuron is not None


def _gather(per_layer, owners) -> np.ndarray:
    """Pick the entries of a per-layer vector list at the owner indices."""
    return np.array([per_layer[l - 1][j - 1] for (l, j) in owners])


def project(pinv: PseudoInverse, net: ReluNetwork, s: ActivationPattern, v) -> np.ndarray:
    """Component of v inside the span of the tracked oriented normals."""
    v = np.asarray(v, dtype=np.float64)
    if pinv.m == 0:
        return np.zeros_like(v)
    w = _gather(inner_products_all(net, s, v), pinv.owners)
    return pinv.matrix.T @ w


def add_pseudorow(
    pinv: PseudoInverse,
    net: ReluNetwork,
    s: ActivationPattern,
    u,
    owner,
    dep_tol: float = DEP_TOL,
) -> PseudoInverse:
    """Extend the pseudoinverse by one column u (the owner's oriented normal).

    Raises DependentColumn when u lies within dep_tol (relative) of the
    span of the current columns.
    """
    u = np.asarray(u, dtype=np.float64)
    w_perp = u - project(pinv, net, s, u)
    nu = np.linalg.norm(u)
    if nu == 0.0 or np.linalg.norm(w_perp) <= dep_tol * nu:
        raise DependentColumn(f"normal of {owner} is dependent on the tracked set")
    denom = float(w_perp @ u)
    new_row = w_perp / denom
    if pinv.m == 0:
        return PseudoInverse(new_row[None, :], [owner])
    # existing rows must become orthogonal to the new column
    shifted = pinv.matrix - np.outer(pinv.matrix @ u, new_row)
    return PseudoInverse(np.vstack([shifted, new_row]), list(pinv.owners) + [owner])


def remove_pseudorow(pinv: PseudoInverse, i: int) -> PseudoInverse:
    """Drop row i and its owner, restoring the pseudoinverse of the rest."""
    ai = pinv.matrix[i]
    nrm2 = float(ai @ ai)
    if nrm2 == 0.0:
        raise Degenerate("cannot remove a zero row")
    others = np.delete(pinv.matrix, i, axis=0)
    coef = (others @ ai) / nrm2
    owners = list(pinv.owners)
    del owners[i]
    return PseudoInverse(others - np.outer(coef, ai), owners)


def add_axis(
    pinv: PseudoInverse,
    net: ReluNetwork,
    s: ActivationPattern,
    c,
    dep_tol: float = DEP_TOL,
) -> PseudoInverse:
    """Track unit c's hyperplane: add its oriented normal as a new column."""
    return add_pseudorow(pinv, net, s, oriented_normal(net, s, c), c, dep_tol)


def update_axis_new_region(
    pinv: PseudoInverse,
    i: int,
    net: ReluNetwork,
    s: ActivationPattern,
    c,
    dep_tol: float = DEP_TOL,
) -> PseudoInverse:
    """Recompute row i after the activation bit of its owner c changed.

    Flipping one unit leaves every other tracked axis unchanged, so only
    row i needs work.  All inner products are taken under the new pattern
    s.  Raises Degenerate on a vanishing denominator.
    """
    if pinv.owners[i] != tuple(c):
        raise ValueError(f"row {i} belongs to {pinv.owners[i]}, not {c}")
    u = oriented_normal(net, s, c)
    g = _gather(inner_products_all(net, s, u), pinv.owners)
    w = u - (pinv.matrix.T @ g - g[i] * pinv.matrix[i])
    denom = float(w @ u)
    uu = float(u @ u)
    if uu == 0.0 or abs(denom) <= dep_tol * uu:
        raise Degenerate(f"axis update for {c} is degenerate")
    matrix = pinv.matrix.copy()
    matrix[i] = w / denom
    return PseudoInverse(matrix, list(pinv.owners))


def advance_max(
    net: ReluNetwork,
    x,
    v,
    s: ActivationPattern,
    ignore=(),
    pairs: PairGroups | None = None,
    zero_tol: float = ZERO_TOL,
) -> AdvanceResult:
    """Largest step along v from x before some unit's activation flips.

    Walks the arguments and their directional rates in one sweep under
    pattern s.  A unit is a candidate when moving along v drives its
    argument against its current bit (active and falling, or inactive and
    rising); rates within zero_tol of 0 are not candidates, nor are
    ignored units or second pair members.  Returns the smallest crossing
    step; ties within TIE_TOL * (1 + |t|) resolve to the lexicographically
    smallest unit.  A marginally negative t signals the start point sits
    just past that wall; the caller decides what to accept.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    ignore_mask = np.zeros(net.num_neurons, dtype=bool)
    for c in ignore:
        ignore_mask[net.flat_index(c)] = True
    if pairs is not None:
        ignore_mask |= pairs.secondary_flat_mask(net)

    alpha = x
    beta = v
    cand_flat: list[np.ndarray] = []
    cand_t: list[np.ndarray] = []
    for l in range(1, net.depth + 1):
        w, b = net.weights[l - 1], net.biases[l - 1]
        alpha = w @ alpha + b
        beta = w @ beta
        sl = s.layer(l)
        off = int(net.offsets[l - 1])
        sel = ~ignore_mask[off:off + len(alpha)]
        sel &= np.abs(beta) > zero_tol
        sel &= np.where(sl == 1, beta < 0.0, beta > 0.0)
        idx = np.nonzero(sel)[0]
        if idx.size:
            cand_flat.append(off + idx)
            cand_t.append(-alpha[idx] / beta[idx])
        if l < net.depth:
            alpha = sl * alpha
            beta = sl * beta
    if not cand_flat:
        return AdvanceResult(float("inf"), None)
    flat = np.concatenate(cand_flat)
    ts = np.concatenate(cand_t)
    t_min = float(np.min(ts))
    window = TIE_TOL * (1.0 + abs(t_min))
    tied = flat[ts <= t_min + window]
    winner = int(np.min(tied))
    t_win = float(ts[np.nonzero(flat == winner)[0][0]])
    return AdvanceResult(t_win, net.neuron_at(winner))


def argument_residuals(pinv: PseudoInverse, net: ReluNetwork, s: ActivationPattern, x) -> np.ndarray:
    """Arguments of the owner units at x (zero when x sits on every tracked wall)."""
    return _gather(subjective_arguments(net, s, x), pinv.owners)
